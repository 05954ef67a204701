//! Experiment runner: binds the library modules into reproducible,
//! config-driven runs emitting CSV reports, plot-data series, and a manifest.
//!
//! Everything written to CSV bodies is a pure function of (config, seed);
//! measured wall times go to the manifest only, unless `--timings`
//! deliberately trades reproducibility for per-row timings.

use std::collections::BTreeMap;
use std::fmt;
use std::io;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use flatten_core::curve::CurveSpec;
use flatten_core::ifs::WeightedIfs;
use flatten_core::lift;
use flatten_core::measure::{
    self, atom_set_distance, discretize, fmt_f64, frostman_fit, nonconcentration_sweep,
    pushforward, ConvolveOptions, DiscreteMeasure,
};
use flatten_core::moments;
use flatten_core::numeric::fit_slope;
use flatten_core::spectral::{
    lp_region_integral_with_budget, superlevel_cover_count, FrequencyRegion,
};

use crate::config::{Config, ConfigError};

/// The experiment kinds, named exactly like the CLI subcommands.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentKind {
    FourierScan,
    TsujiiScan,
    FlatteningReport,
    FrostmanScan,
    NonconcentrationSweep,
    LiftVerify,
    ConsistencyCheck,
}

impl ExperimentKind {
    pub fn name(&self) -> &'static str {
        match self {
            ExperimentKind::FourierScan => "fourier-scan",
            ExperimentKind::TsujiiScan => "tsujii-scan",
            ExperimentKind::FlatteningReport => "flattening-report",
            ExperimentKind::FrostmanScan => "frostman-scan",
            ExperimentKind::NonconcentrationSweep => "nonconcentration-sweep",
            ExperimentKind::LiftVerify => "lift-verify",
            ExperimentKind::ConsistencyCheck => "consistency-check",
        }
    }
}

#[derive(Debug)]
pub enum CliError {
    Config(ConfigError),
    Core(flatten_core::Error),
    Io(io::Error),
}

impl CliError {
    /// Exit codes: 2 config, 3 budget, 4 numeric/domain, 1 io.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Core(e) if e.is_budget() => 3,
            CliError::Core(_) => 4,
            CliError::Io(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(e) => write!(f, "{e}"),
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Io(e) => write!(f, "io error: {e}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e)
    }
}

impl From<flatten_core::Error> for CliError {
    fn from(e: flatten_core::Error) -> Self {
        CliError::Core(e)
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::Io(e)
    }
}

/// One two-column plot-data series; written as `<name>.dat`.
#[derive(Debug, Clone)]
pub struct PlotSeries {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

/// In-memory result of an experiment before anything is written.
#[derive(Debug, Default)]
pub struct ExperimentOutput {
    pub csv: String,
    pub manifest: Vec<(String, String)>,
    pub plots: Vec<PlotSeries>,
    /// Additional text artifacts `(file name, contents)`.
    pub extra_files: Vec<(String, String)>,
}

/// Summary of a completed run.
#[derive(Debug)]
pub struct RunSummary {
    pub out_dir: PathBuf,
    pub files: Vec<PathBuf>,
    pub manifest: BTreeMap<String, String>,
}

/// Invocation options layered over the config file.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub out_dir: Option<PathBuf>,
    pub seed: Option<u64>,
    /// Put measured per-row wall times into scan CSVs (breaks bit-identical
    /// reruns; times are always in the manifest).
    pub timings: bool,
}

/// Loads the config, runs the experiment, writes CSV + plot data + manifest
/// under the output directory.
pub fn run(kind: ExperimentKind, config_path: &Path, opts: &RunOptions) -> Result<RunSummary, CliError> {
    let cfg = Config::load(config_path)?;
    run_with_config(kind, &cfg, opts)
}

/// [`run`] on an already-parsed config (used by tests).
pub fn run_with_config(
    kind: ExperimentKind,
    cfg: &Config,
    opts: &RunOptions,
) -> Result<RunSummary, CliError> {
    let started = Instant::now();
    let seed = opts.seed.unwrap_or(cfg.u64("seed", Some(0))?);
    let out_dir = match &opts.out_dir {
        Some(d) => d.clone(),
        None => PathBuf::from(cfg.str("out", Some(&format!("runs/{}", kind.name())))?),
    };
    let prepared = prepare(kind, cfg, seed, opts.timings)?;
    let unknown = cfg.unknown_keys();
    if let Some(key) = unknown.first() {
        return Err(ConfigError { path: key.clone(), message: "unknown key".into() }.into());
    }
    let output = prepared()?;

    std::fs::create_dir_all(&out_dir)?;
    let mut files = Vec::new();
    let csv_path = out_dir.join(format!("{}.csv", kind.name()));
    std::fs::write(&csv_path, &output.csv)?;
    files.push(csv_path);
    files.extend(emit_plotdata(&output.plots, &out_dir)?);
    for (name, contents) in &output.extra_files {
        let p = out_dir.join(name);
        std::fs::write(&p, contents)?;
        files.push(p);
    }

    let mut manifest: BTreeMap<String, String> = BTreeMap::new();
    manifest.insert("kind".into(), kind.name().into());
    manifest.insert("seed".into(), seed.to_string());
    manifest.insert("version".into(), env!("CARGO_PKG_VERSION").into());
    for (k, v) in cfg.resolved() {
        manifest.insert(format!("config.{k}"), v);
    }
    for (k, v) in output.manifest {
        manifest.insert(k, v);
    }
    manifest.insert("wall_seconds".into(), format!("{:.3}", started.elapsed().as_secs_f64()));
    let manifest_text: String =
        manifest.iter().map(|(k, v)| format!("{k} = {v}\n")).collect();
    let manifest_path = out_dir.join("manifest.txt");
    std::fs::write(&manifest_path, manifest_text)?;
    files.push(manifest_path);
    Ok(RunSummary { out_dir, files, manifest })
}

/// Writes one `<name>.dat` two-column file per series; empty input writes
/// nothing and succeeds.
pub fn emit_plotdata(series: &[PlotSeries], dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let mut files = Vec::new();
    for s in series {
        let mut body = String::new();
        for (x, y) in &s.points {
            body.push_str(&format!("{x} {y}\n"));
        }
        let path = dir.join(format!("{}.dat", s.name));
        std::fs::write(&path, body)?;
        files.push(path);
    }
    Ok(files)
}

type Prepared = Box<dyn FnOnce() -> Result<ExperimentOutput, CliError>>;

/// Reads every parameter the experiment needs (so unknown keys can be
/// rejected before compute starts) and returns the execution closure.
fn prepare(kind: ExperimentKind, cfg: &Config, seed: u64, timings: bool) -> Result<Prepared, CliError> {
    match kind {
        ExperimentKind::FourierScan => prepare_fourier(cfg, timings),
        ExperimentKind::TsujiiScan => prepare_tsujii(cfg),
        ExperimentKind::FlatteningReport => prepare_flattening(cfg),
        ExperimentKind::FrostmanScan => prepare_frostman(cfg),
        ExperimentKind::NonconcentrationSweep => prepare_nonconcentration(cfg, seed),
        ExperimentKind::LiftVerify => prepare_lift_verify(cfg),
        ExperimentKind::ConsistencyCheck => prepare_consistency(cfg),
    }
}

fn budgets(cfg: &Config) -> Result<(usize, u128, u64), ConfigError> {
    let atoms = cfg.u64("budget.atoms", Some(measure::DEFAULT_ATOM_BUDGET as u64))? as usize;
    let pairs = cfg.u64("budget.pairs", Some(2_000_000_000))? as u128;
    let grid = cfg.u64("budget.grid", Some(flatten_core::spectral::DEFAULT_GRID_BUDGET))?;
    Ok((atoms, pairs, grid))
}

fn base_measure(
    ifs: &WeightedIfs,
    curve: Option<&CurveSpec>,
    tau: f64,
) -> Result<DiscreteMeasure, CliError> {
    let mu = discretize(ifs, tau)?;
    Ok(match curve {
        Some(c) => pushforward(&mu, c)?,
        None => mu,
    })
}

fn log2_fit(points: impl Iterator<Item = (f64, f64)>) -> Option<f64> {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (x, y) in points {
        if x > 0.0 && y > 0.0 {
            xs.push(x.log2());
            ys.push(y.log2());
        }
    }
    if xs.len() < 2 {
        None
    } else {
        Some(fit_slope(&xs, &ys))
    }
}

fn prepare_fourier(cfg: &Config, timings: bool) -> Result<Prepared, CliError> {
    let ifs = cfg.ifs()?;
    let curve = cfg.curve(&ifs)?;
    let tau = cfg.tau("scan.tau", 2f64.powi(-10))?;
    let regions: Vec<String> = cfg
        .str("scan.regions", Some("ball"))?
        .split(',')
        .map(|s| s.trim().to_string())
        .collect();
    let r_list = cfg.f64_list("scan.r_list", Some("16, 64, 256"))?;
    let eps = cfg.f64("scan.epsilon", Some(0.5))?;
    let p_list = cfg.f64_list("scan.p_list", Some("2, 4"))?;
    let h = cfg.grid_step("scan.h")?;
    let (_, _, grid) = budgets(cfg)?;
    let dim = curve.as_ref().map_or(1, |c| c.ambient_dim());
    for r in &regions {
        match r.as_str() {
            "ball" => {}
            "c" | "e" if dim >= 2 => {}
            "c" | "e" => {
                return Err(ConfigError {
                    path: "scan.regions".into(),
                    message: format!("region `{r}` needs a curve with ambient dimension >= 2"),
                }
                .into())
            }
            other => {
                return Err(ConfigError {
                    path: "scan.regions".into(),
                    message: format!("`{other}` is not ball|c|e"),
                }
                .into())
            }
        }
    }
    for &r in &r_list {
        if r < 1.0 {
            return Err(ConfigError {
                path: "scan.r_list".into(),
                message: format!("R = {r} must be >= 1"),
            }
            .into());
        }
    }
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(ConfigError {
            path: "scan.epsilon".into(),
            message: format!("epsilon {eps} must be in (0,1]"),
        }
        .into());
    }
    for &p in &p_list {
        if p < 1.0 {
            return Err(ConfigError {
                path: "scan.p_list".into(),
                message: format!("p = {p} must be >= 1"),
            }
            .into());
        }
    }
    Ok(Box::new(move || {
        let nu = base_measure(&ifs, curve.as_ref(), tau)?;
        let mut csv = String::from("region,R,epsilon,p,h,integral_estimate,cell_count,wall_seconds\n");
        let mut manifest = vec![("scan.atoms".into(), nu.len().to_string())];
        let mut plots: Vec<PlotSeries> = Vec::new();
        let mut cells_used: u64 = 0;
        for region_name in &regions {
            for &p in &p_list {
                let mut series = Vec::new();
                for &r in &r_list {
                    let region = match region_name.as_str() {
                        "ball" => FrequencyRegion::Ball { r },
                        "c" => FrequencyRegion::CRegion { r, eps },
                        _ => FrequencyRegion::ERegion { r, eps },
                    };
                    let t0 = Instant::now();
                    let est = lp_region_integral_with_budget(&nu, &region, p, h, grid)?;
                    let wall = if timings { t0.elapsed().as_secs_f64() } else { 0.0 };
                    cells_used += est.cells;
                    csv.push_str(&format!(
                        "{},{},{},{},{},{},{},{}\n",
                        region_name,
                        fmt_f64(r),
                        fmt_f64(eps),
                        fmt_f64(p),
                        fmt_f64(h),
                        fmt_f64(est.value),
                        est.cells,
                        fmt_f64(wall),
                    ));
                    series.push((r, est.value));
                }
                if let Some(slope) = log2_fit(series.iter().copied()) {
                    manifest.push((format!("fit.{region_name}.p{p}"), format!("{slope:.6}")));
                }
                plots.push(PlotSeries {
                    name: format!("fourier_{region_name}_p{p}"),
                    points: series.iter().map(|&(r, v)| (r.log2(), v.max(1e-300).log2())).collect(),
                });
            }
        }
        manifest.push(("budget.grid_cells_used".into(), cells_used.to_string()));
        Ok(ExperimentOutput { csv, manifest, plots, extra_files: Vec::new() })
    }))
}

fn prepare_tsujii(cfg: &Config) -> Result<Prepared, CliError> {
    let ifs = cfg.ifs()?;
    let r_list = cfg.f64_list("tsujii.r_list", Some("256, 1024, 4096, 16384"))?;
    let delta = cfg.f64("tsujii.delta", Some(0.02))?;
    let tol = cfg.f64("tsujii.tol", Some(0.01))?;
    if !(delta > 0.0) {
        return Err(ConfigError {
            path: "tsujii.delta".into(),
            message: "delta must be positive".into(),
        }
        .into());
    }
    if !(tol > 0.0 && tol <= 0.1) {
        return Err(ConfigError {
            path: "tsujii.tol".into(),
            message: "tolerance must be in (0, 0.1]".into(),
        }
        .into());
    }
    for &r in &r_list {
        if r < 2.0 {
            return Err(ConfigError {
                path: "tsujii.r_list".into(),
                message: format!("R = {r} must be >= 2"),
            }
            .into());
        }
    }
    Ok(Box::new(move || {
        let mut csv = String::from("R,delta,cover_count\n");
        let mut series = Vec::new();
        for &r in &r_list {
            let count = superlevel_cover_count(&ifs, r, delta, tol)?;
            csv.push_str(&format!("{},{},{}\n", fmt_f64(r), fmt_f64(delta), count));
            series.push((r, count as f64));
        }
        let mut manifest = Vec::new();
        if let Some(slope) = log2_fit(series.iter().copied()) {
            manifest.push(("fit.cover_exponent".into(), format!("{slope:.6}")));
        }
        let plots = vec![PlotSeries {
            name: "tsujii_cover".into(),
            points: series.iter().map(|&(r, c)| (r.log2(), c.max(1.0).log2())).collect(),
        }];
        Ok(ExperimentOutput { csv, manifest, plots, extra_files: Vec::new() })
    }))
}

fn prepare_flattening(cfg: &Config) -> Result<Prepared, CliError> {
    let ifs = cfg.ifs()?;
    let curve = cfg.curve(&ifs)?;
    let p_max = cfg.u32("flatten.p_max", Some(4))?;
    let m_min = cfg.u32("flatten.m_min", Some(4))?;
    let m_max = cfg.u32("flatten.m_max", Some(8))?;
    let eps = cfg.f64("flatten.epsilon", Some(0.1))?;
    let (atoms, pairs, _) = budgets(cfg)?;
    if !(1..=6).contains(&p_max) {
        return Err(ConfigError {
            path: "flatten.p_max".into(),
            message: "p_max must be in 1..=6".into(),
        }
        .into());
    }
    if m_max < m_min + 3 || m_max > moments::MAX_LEVEL {
        return Err(ConfigError {
            path: "flatten.m_max".into(),
            message: "need at least 4 levels and m_max within range".into(),
        }
        .into());
    }
    if !(eps > 0.0 && eps < 1.0) {
        return Err(ConfigError {
            path: "flatten.epsilon".into(),
            message: "epsilon must be in (0,1)".into(),
        }
        .into());
    }
    Ok(Box::new(move || {
        let opts = ConvolveOptions { coalesce_width: 0.0, atom_budget: atoms, pair_budget: pairs };
        let report =
            moments::flattening_report(&ifs, curve.as_ref(), p_max, m_min..=m_max, eps, opts)?;
        let mut csv = String::from("p,m,s_m,normalized,dim2_fit\n");
        let mut manifest = Vec::new();
        let mut plots = Vec::new();
        for entry in &report.entries {
            for row in &entry.rows {
                csv.push_str(&format!(
                    "{},{},{},{},{}\n",
                    entry.power,
                    row.m,
                    fmt_f64(row.moment_sum),
                    fmt_f64(row.normalized),
                    fmt_f64(entry.dim2),
                ));
            }
            manifest.push((format!("dim2.p{}", entry.power), format!("{:.6}", entry.dim2)));
            if let Some(w) = entry.coalesce_width {
                manifest.push((format!("coalesce_width.p{}", entry.power), fmt_f64(w)));
            }
            plots.push(PlotSeries {
                name: format!("flattening_p{}", entry.power),
                points: entry
                    .rows
                    .iter()
                    .map(|r| (r.m as f64, r.moment_sum.max(1e-300).log2()))
                    .collect(),
            });
        }
        Ok(ExperimentOutput { csv, manifest, plots, extra_files: Vec::new() })
    }))
}

fn prepare_frostman(cfg: &Config) -> Result<Prepared, CliError> {
    let ifs = cfg.ifs()?;
    let curve = cfg.curve(&ifs)?;
    let tau = cfg.tau("frostman.tau", 2f64.powi(-14))?;
    let radii = cfg.f64_list(
        "frostman.radii",
        Some("0.25, 0.125, 0.0625, 0.03125, 0.015625, 0.0078125"),
    )?;
    Ok(Box::new(move || {
        let nu = base_measure(&ifs, curve.as_ref(), tau)?;
        let fit = frostman_fit(&nu, &radii)?;
        let mut csv = String::from("radius,max_ball_mass\n");
        for &(r, mass) in &fit.table {
            csv.push_str(&format!("{},{}\n", fmt_f64(r), fmt_f64(mass)));
        }
        let manifest = vec![
            ("fit.frostman_exponent".into(), format!("{:.6}", fit.exponent)),
            ("scan.atoms".into(), nu.len().to_string()),
        ];
        let plots = vec![PlotSeries {
            name: "frostman_mass".into(),
            points: fit.table.iter().map(|&(r, m)| (r.log2(), m.max(1e-300).log2())).collect(),
        }];
        Ok(ExperimentOutput { csv, manifest, plots, extra_files: Vec::new() })
    }))
}

fn prepare_nonconcentration(cfg: &Config, seed: u64) -> Result<Prepared, CliError> {
    let ifs = cfg.ifs()?;
    let curve = cfg.curve(&ifs)?.ok_or_else(|| ConfigError {
        path: "curve.kind".into(),
        message: "non-concentration sweeps need a curve (ambient dimension >= 2)".into(),
    })?;
    let tau = cfg.tau("nonconcentration.tau", 2f64.powi(-10))?;
    let eps_list = cfg.f64_list(
        "nonconcentration.eps_list",
        Some("0.5, 0.25, 0.125, 0.0625, 0.03125, 0.015625"),
    )?;
    let trials = cfg.u64("nonconcentration.trials", Some(200))? as usize;
    Ok(Box::new(move || {
        let nu = base_measure(&ifs, Some(&curve), tau)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let report = nonconcentration_sweep(&nu, &eps_list, trials, &mut rng)?;
        let mut csv = String::from("eps,worst_slab_mass\n");
        for &(eps, worst) in &report.table {
            csv.push_str(&format!("{},{}\n", fmt_f64(eps), fmt_f64(worst)));
        }
        let manifest = vec![
            ("fit.beta".into(), format!("{:.6}", report.beta)),
            ("scan.atoms".into(), nu.len().to_string()),
            ("scan.trials".into(), trials.to_string()),
        ];
        let plots = vec![PlotSeries {
            name: "nonconcentration_mass".into(),
            points: report
                .table
                .iter()
                .map(|&(e, w)| (e.log2(), w.max(1e-300).log2()))
                .collect(),
        }];
        Ok(ExperimentOutput { csv, manifest, plots, extra_files: Vec::new() })
    }))
}

fn prepare_lift_verify(cfg: &Config) -> Result<Prepared, CliError> {
    let ifs = cfg.ifs()?;
    let ell = cfg.u32("lift.ell", Some(2))? as usize;
    let depth = cfg.u32("lift.depth", Some(6))?;
    let samples = cfg.f64_list("lift.samples", Some("0, 1, -1, 0.5"))?;
    if ell < 1 || ell > 8 {
        return Err(ConfigError { path: "lift.ell".into(), message: "ell must be in 1..=8".into() }.into());
    }
    if depth < 1 || depth > 20 {
        return Err(ConfigError {
            path: "lift.depth".into(),
            message: "depth must be in 1..=20".into(),
        }
        .into());
    }
    Ok(Box::new(move || {
        let lifted = lift::lift(&ifs, ell);
        let float_defect = lift::verify_conjugacy(&ifs, &lifted, &samples)?;
        let exact_zero = lift::conjugacy_defect_is_zero(&ifs, ell, &samples);
        let (m, contracted) = lift::ensure_contracting(&ifs, ell)?;
        // finite-depth orbit against the direct pushforward (base point 0)
        let orbit = lift::discretize_affine(&lifted, depth, &vec![0.0; ell])?;
        let cut = measure::discretize_depth(&ifs, depth)?;
        let (lo, hi) = flatten_core::ifs::attractor_interval(&ifs);
        let pad = 0.05 * (hi - lo).max(1.0) + 1.0;
        let vcurve = CurveSpec::moment(ell, (lo.min(0.0) - pad, hi.max(0.0) + pad));
        let direct = pushforward(&cut, &vcurve)?;
        let orbit_distance = atom_set_distance(&orbit, &direct)
            .expect("orbit and pushforward have identical shape");
        let mut csv = String::from("map_index,operator_norm\n");
        for (i, map) in lifted.maps().iter().enumerate() {
            csv.push_str(&format!("{},{}\n", i, fmt_f64(map.operator_norm())));
        }
        let manifest = vec![
            ("lift.float_defect".into(), fmt_f64(float_defect)),
            ("lift.exact_defect_zero".into(), exact_zero.to_string()),
            ("lift.contraction_power".into(), m.to_string()),
            ("lift.contracted_max_norm".into(), fmt_f64(contracted.max_operator_norm())),
            ("lift.orbit_distance".into(), fmt_f64(orbit_distance)),
            ("lift.orbit_atoms".into(), orbit.len().to_string()),
        ];
        let extra = vec![("lifted_system.txt".to_string(), lift::to_text(&lifted))];
        Ok(ExperimentOutput { csv, manifest, plots: Vec::new(), extra_files: extra })
    }))
}

fn prepare_consistency(cfg: &Config) -> Result<Prepared, CliError> {
    let ifs = cfg.ifs()?;
    let curve = cfg.curve(&ifs)?;
    let levels = cfg.u32_list("consistency.levels", Some("4, 5, 6, 7, 8"))?;
    let max_level = levels.iter().copied().max().unwrap_or(0);
    if levels.is_empty() || max_level > 12 {
        return Err(ConfigError {
            path: "consistency.levels".into(),
            message: "levels must be nonempty and <= 12".into(),
        }
        .into());
    }
    let tau = cfg.tau("consistency.tau", 2f64.powi(-(max_level as i32 + 4)))?;
    let h = cfg.grid_step("consistency.h")?;
    let (_, _, grid) = budgets(cfg)?;
    Ok(Box::new(move || {
        let nu = base_measure(&ifs, curve.as_ref(), tau)?;
        let mut csv = String::from("level,s_m,integral,ratio\n");
        let mut plots = vec![PlotSeries { name: "consistency_ratio".into(), points: Vec::new() }];
        let mut ratios = Vec::new();
        let mut cells_used = 0u64;
        for &level in &levels {
            let rep = moments::fourier_moment_consistency(&nu, level, h, grid)?;
            cells_used += rep.integral.cells;
            csv.push_str(&format!(
                "{},{},{},{}\n",
                level,
                fmt_f64(rep.moment_sum),
                fmt_f64(rep.integral.value),
                fmt_f64(rep.ratio),
            ));
            plots[0].points.push((level as f64, rep.ratio));
            ratios.push(rep.ratio);
        }
        let min = ratios.iter().copied().fold(f64::INFINITY, f64::min);
        let max = ratios.iter().copied().fold(0.0f64, f64::max);
        let manifest = vec![
            ("consistency.ratio_min".into(), format!("{min:.6}")),
            ("consistency.ratio_max".into(), format!("{max:.6}")),
            ("scan.atoms".into(), nu.len().to_string()),
            ("budget.grid_cells_used".into(), cells_used.to_string()),
        ];
        Ok(ExperimentOutput { csv, manifest, plots, extra_files: Vec::new() })
    }))
}
