use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use flatten_cli::{run, ExperimentKind, RunOptions};

const CONFIG_KEYS: &str = "\
CONFIG FILE KEYS (one `key = value` per line, `#` comments):
  schema = 1                     required; config format version
  seed = 0                       RNG seed for randomized sampling
  out = runs/<kind>              output directory (overridden by --out)

  ifs.lambdas = 0.5, 0.5         contraction ratios, each with 0 < |λ| < 1
  ifs.translations = 0, 0.5      translations, one per map
  ifs.weights = 0.5, 0.5         strictly positive, summing to 1

  curve.kind = none|moment|graph pushforward curve (default none = stay 1-D)
  curve.dim = 2                  ambient dimension (moment curves)
  curve.poly.0 = 0, 0, 1         graph component i, coefficients by ascending
                                 degree; add curve.poly.1, ... for higher d
  curve.domain = auto            `auto` (attractor inflated 5%) or `lo, hi`

  budget.atoms = 10000000        convolution atom cap
  budget.pairs = 2000000000      convolution pair cap
  budget.grid = 1000000000       quadrature cell cap

  scan.tau, scan.regions (ball|c|e), scan.r_list, scan.epsilon,
  scan.p_list, scan.h            fourier-scan parameters
  tsujii.r_list, tsujii.delta, tsujii.tol
  flatten.p_max, flatten.m_min, flatten.m_max, flatten.epsilon
  frostman.tau, frostman.radii   (radii strictly decreasing)
  nonconcentration.tau, nonconcentration.eps_list, nonconcentration.trials
  lift.ell, lift.depth, lift.samples
  consistency.levels, consistency.tau, consistency.h

OUTPUTS: <kind>.csv (bit-identical across reruns with the same seed),
<series>.dat two-column plot data, manifest.txt (resolved config echo,
fitted exponents, budget consumption, wall time).

EXIT CODES: 0 success, 2 config error, 3 budget exceeded, 4 numeric failure.";

/// Experiment runner for self-similar measures, their curve pushforwards,
/// and Fourier-side flattening diagnostics.
#[derive(Parser)]
#[command(name = "flatten", version, after_long_help = CONFIG_KEYS)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// Path to the experiment config file.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (defaults to the config `out` key).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (defaults to all cores).
    #[arg(long)]
    threads: Option<usize>,
    /// RNG seed override.
    #[arg(long)]
    seed: Option<u64>,
    /// Write measured per-row wall times into scan CSVs (makes reruns
    /// differ; times are always recorded in the manifest).
    #[arg(long)]
    timings: bool,
}

#[derive(Subcommand)]
enum Command {
    /// L^p integrals of |ν̂| over balls and the C/E frequency regions.
    FourierScan(CommonArgs),
    /// Superlevel-set covering counts of |μ̂| across a sweep of R.
    TsujiiScan(CommonArgs),
    /// dim₂ of convolution powers and normalized moment-sum tables.
    FlatteningReport(CommonArgs),
    /// Worst ball-mass scaling (Frostman exponent fit).
    FrostmanScan(CommonArgs),
    /// Worst slab-mass scaling over hyperplane candidates.
    NonconcentrationSweep(CommonArgs),
    /// Moment-curve lift identities, contraction power, orbit cross-check.
    LiftVerify(CommonArgs),
    /// Moment sums against L² ball integrals across dyadic levels.
    ConsistencyCheck(CommonArgs),
}

impl Command {
    fn split(self) -> (ExperimentKind, CommonArgs) {
        match self {
            Command::FourierScan(a) => (ExperimentKind::FourierScan, a),
            Command::TsujiiScan(a) => (ExperimentKind::TsujiiScan, a),
            Command::FlatteningReport(a) => (ExperimentKind::FlatteningReport, a),
            Command::FrostmanScan(a) => (ExperimentKind::FrostmanScan, a),
            Command::NonconcentrationSweep(a) => (ExperimentKind::NonconcentrationSweep, a),
            Command::LiftVerify(a) => (ExperimentKind::LiftVerify, a),
            Command::ConsistencyCheck(a) => (ExperimentKind::ConsistencyCheck, a),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (kind, args) = cli.command.split();
    if let Some(n) = args.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("flatten: cannot configure {n} threads: {e}");
            return ExitCode::from(1);
        }
    }
    let opts = RunOptions { out_dir: args.out, seed: args.seed, timings: args.timings };
    match run(kind, &args.config, &opts) {
        Ok(summary) => {
            println!("{}: wrote {} files to {}", kind.name(), summary.files.len(), summary.out_dir.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("flatten {}: {e}", kind.name());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
