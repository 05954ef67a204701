//! Independent oracles for the hardest numeric claims: exact dyadic cell
//! masses of the middle-thirds measure (recursive self-similar refinement)
//! and an exhaustive hyperplane scan validating the non-concentration
//! candidate heuristic.

use flatten_core::curve::CurveSpec;
use flatten_core::ifs::WeightedIfs;
use flatten_core::measure::{
    discretize, nonconcentration_sweep, pushforward, slab_mass, Hyperplane,
};
use flatten_core::moments::{bin, lq_dimension_of, moment_sum, MomentExponent};
use flatten_core::numeric::fit_slope;

fn cantor() -> WeightedIfs {
    WeightedIfs::uniform(&[(1.0 / 3.0, 0.0), (1.0 / 3.0, 2.0 / 3.0)]).unwrap()
}

/// Mass the middle-thirds measure gives `[a, b)`, by unfolding the
/// stationarity relation until the pulled-back interval swallows `[0,1]` or
/// misses it. Dyadic endpoints never resolve exactly under base-3 pullbacks
/// (they cycle), but every level multiplies the contribution by 1/2, so
/// truncating at depth 64 costs at most ~2^-60 in total.
fn cantor_mass(a: f64, b: f64, depth: u32) -> f64 {
    if b <= 0.0 || a >= 1.0 {
        return 0.0;
    }
    if a <= 0.0 && b >= 1.0 {
        return 1.0;
    }
    if depth >= 64 {
        return 0.5;
    }
    0.5 * cantor_mass(3.0 * a, 3.0 * b, depth + 1)
        + 0.5 * cantor_mass(3.0 * a - 2.0, 3.0 * b - 2.0, depth + 1)
}

/// Exact `s_m(mu, 2)` for the true middle-thirds measure.
fn cantor_moment_sum_exact(m: u32) -> f64 {
    let cells = 1i64 << m;
    let width = 2f64.powi(-(m as i32));
    let mut total = 0.0;
    for k in 0..cells {
        let mass = cantor_mass(k as f64 * width, (k + 1) as f64 * width, 0);
        total += mass * mass;
    }
    total
}

#[test]
fn discretized_moment_sums_match_exact_cantor_masses() {
    let mu = discretize(&cantor(), 2f64.powi(-15)).unwrap();
    let mut xs = Vec::new();
    let mut ys_exact = Vec::new();
    for m in 4..=11u32 {
        let exact = cantor_moment_sum_exact(m);
        let approx = moment_sum(&bin(&mu, m).unwrap(), MomentExponent::Finite(2.0));
        let log_err = (approx.log2() - exact.log2()).abs();
        assert!(log_err < 0.15, "level {m}: discrete {approx} vs exact {exact}");
        xs.push(m as f64);
        ys_exact.push(-exact.log2());
    }
    // the exact masses themselves carry the correlation dimension
    let exact_slope = fit_slope(&xs, &ys_exact);
    let expect = 2f64.ln() / 3f64.ln();
    assert!(
        (exact_slope - expect).abs() < 0.05,
        "exact-oracle slope {exact_slope} vs {expect}"
    );
    // and the estimator built on the discretization agrees with the oracle
    let fit = lq_dimension_of(&mu, MomentExponent::Finite(2.0), 4..=11).unwrap();
    assert!((fit.dim - exact_slope).abs() < 0.05, "fit {} vs oracle {exact_slope}", fit.dim);
}

#[test]
fn sweep_candidates_track_exhaustive_pair_scan() {
    // 32 atoms: every pair-hyperplane is affordable, giving the true worst
    // case over the candidate class the sweep approximates
    let v2 = CurveSpec::moment(2, (-0.1, 1.1));
    let dyadic = WeightedIfs::uniform(&[(0.5, 0.0), (0.5, 0.5)]).unwrap();
    let nu = pushforward(&discretize(&dyadic, 2f64.powi(-5)).unwrap(), &v2).unwrap();
    let eps_list: Vec<f64> = (1..=6).map(|k| 2f64.powi(-k)).collect();
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
    let report = nonconcentration_sweep(&nu, &eps_list, 64, &mut rng).unwrap();
    let mut exhaustive_table = Vec::new();
    for &eps in &eps_list {
        let mut exhaustive = 0.0f64;
        for i in 0..nu.len() {
            for j in (i + 1)..nu.len() {
                if let Some(h) = Hyperplane::through_points(&[nu.atom(i), nu.atom(j)]) {
                    exhaustive = exhaustive.max(slab_mass(&nu, &h, eps).unwrap());
                }
            }
        }
        exhaustive_table.push((eps, exhaustive));
    }
    for (&(eps, sweep_worst), &(_, exhaustive)) in report.table.iter().zip(&exhaustive_table) {
        assert!(
            sweep_worst >= 0.7 * exhaustive,
            "eps {eps}: sweep {sweep_worst} far below exhaustive {exhaustive}"
        );
    }
    let beta_exhaustive = fit_slope(
        &exhaustive_table.iter().map(|(e, _)| e.ln()).collect::<Vec<_>>(),
        &exhaustive_table.iter().map(|(_, w)| w.ln()).collect::<Vec<_>>(),
    );
    assert!(
        (report.beta - beta_exhaustive).abs() < 0.15,
        "sweep beta {} vs exhaustive beta {beta_exhaustive}",
        report.beta
    );
}
