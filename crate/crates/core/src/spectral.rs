//! Fourier transforms of discrete and self-similar measures, L^p integrals
//! over the frequency regions, and superlevel-set covering scans.
//!
//! Phase convention `e(x) = exp(2πi·x)` throughout; all norms on frequency
//! vectors are max-norms. Grid scans march a per-atom phasor along the θ
//! axis (one complex multiply per cell per atom instead of a sin/cos), with
//! fixed block boundaries so both rounding and reduction order are
//! reproducible run to run.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::ifs::{attractor_interval, WeightedIfs};
use crate::measure::{DiscreteMeasure, DEFAULT_ATOM_BUDGET};
use crate::numeric::{fit_slope, pairwise_sum};

/// Default cap on grid cells evaluated by one region integral.
pub const DEFAULT_GRID_BUDGET: u64 = 1_000_000_000;

const THETA_BLOCK: usize = 8192;

/// A frequency `ξ = (θ, ζ) ∈ R × R^{d-1}`; `zeta` is empty when d = 1.
#[derive(Debug, Clone, PartialEq)]
pub struct Frequency {
    pub theta: f64,
    pub zeta: Vec<f64>,
}

impl Frequency {
    pub fn new(theta: f64, zeta: Vec<f64>) -> Self {
        Frequency { theta, zeta }
    }

    pub fn scalar(theta: f64) -> Self {
        Frequency { theta, zeta: Vec::new() }
    }

    pub fn dim(&self) -> usize {
        1 + self.zeta.len()
    }
}

/// Frequency regions scanned by the L^p integrals.
///
/// `CRegion`/`ERegion` partition the max-norm ball `B(R)` for d ≥ 2: ties
/// `‖ζ‖ = |θ|^ε` belong to `ERegion`, and `CRegion` is clamped to `|θ| ≤ R`
/// so that Ball = CRegion ⊔ ERegion exactly.
#[derive(Debug, Clone, PartialEq)]
pub enum FrequencyRegion {
    Ball { r: f64 },
    CRegion { r: f64, eps: f64 },
    ERegion { r: f64, eps: f64 },
    Box { bounds: Vec<(f64, f64)> },
}

impl FrequencyRegion {
    fn validate(&self) {
        match self {
            FrequencyRegion::Ball { r } => assert!(*r >= 1.0, "R must be >= 1"),
            FrequencyRegion::CRegion { r, eps } | FrequencyRegion::ERegion { r, eps } => {
                assert!(*r >= 1.0, "R must be >= 1");
                assert!(*eps > 0.0 && *eps <= 1.0, "eps must be in (0,1]");
            }
            FrequencyRegion::Box { bounds } => {
                assert!(!bounds.is_empty());
                assert!(bounds.iter().all(|(a, b)| a <= b), "empty box side");
            }
        }
    }

    /// Needs d ≥ 2 to even be evaluated?
    fn needs_zeta(&self) -> bool {
        matches!(self, FrequencyRegion::CRegion { .. } | FrequencyRegion::ERegion { .. })
    }

    /// Membership for raw coordinates (no allocation); `zeta` may be empty
    /// only for Ball/Box.
    fn contains_raw(&self, theta: f64, zeta: &[f64]) -> bool {
        match self {
            FrequencyRegion::Ball { r } => {
                theta.abs() <= *r && zeta.iter().all(|z| z.abs() <= *r)
            }
            FrequencyRegion::CRegion { r, eps } => {
                let zmax = zeta.iter().fold(0.0f64, |m, z| m.max(z.abs()));
                theta.abs() <= *r && zmax <= *r && theta.abs().powf(*eps) < zmax
            }
            FrequencyRegion::ERegion { r, eps } => {
                let zmax = zeta.iter().fold(0.0f64, |m, z| m.max(z.abs()));
                theta.abs() <= *r && zmax <= theta.abs().powf(*eps)
            }
            FrequencyRegion::Box { bounds } => {
                if zeta.len() + 1 != bounds.len() {
                    return false;
                }
                theta >= bounds[0].0
                    && theta <= bounds[0].1
                    && zeta
                        .iter()
                        .zip(&bounds[1..])
                        .all(|(z, (a, b))| *z >= *a && *z <= *b)
            }
        }
    }

    /// Per-axis bounding box (θ first).
    fn bounding_box(&self, dim: usize) -> Vec<(f64, f64)> {
        match self {
            FrequencyRegion::Ball { r } => vec![(-r, *r); dim],
            FrequencyRegion::CRegion { r, .. } => vec![(-r, *r); dim],
            FrequencyRegion::ERegion { r, eps } => {
                let mut bb = vec![(-r, *r)];
                let zr = r.powf(*eps);
                bb.extend(std::iter::repeat((-zr, zr)).take(dim - 1));
                bb
            }
            FrequencyRegion::Box { bounds } => bounds.clone(),
        }
    }
}

/// Evaluates the defining inequalities of a region at a frequency.
pub fn region_contains(region: &FrequencyRegion, xi: &Frequency) -> Result<bool> {
    region.validate();
    if region.needs_zeta() && xi.dim() < 2 {
        return Err(Error::DimMismatch {
            context: "C/E regions are defined only for d >= 2",
            got: xi.dim(),
            expected: 2,
        });
    }
    Ok(region.contains_raw(xi.theta, &xi.zeta))
}

/// `ν̂(ξ) = Σ_j w_j e(⟨ξ, x_j⟩)` with `e(x) = exp(2πi·x)`.
pub fn ft_discrete(m: &DiscreteMeasure, xi: &Frequency) -> Result<Complex64> {
    if xi.dim() != m.dim() {
        return Err(Error::DimMismatch {
            context: "frequency vs measure",
            got: xi.dim(),
            expected: m.dim(),
        });
    }
    let mut re = 0.0;
    let mut im = 0.0;
    for i in 0..m.len() {
        let atom = m.atom(i);
        let mut phase = xi.theta * atom[0];
        for (z, x) in xi.zeta.iter().zip(&atom[1..]) {
            phase += z * x;
        }
        let (s, c) = (std::f64::consts::TAU * phase).sin_cos();
        re += m.weight(i) * c;
        im += m.weight(i) * s;
    }
    Ok(Complex64::new(re, im))
}

/// A reusable evaluator for `μ̂(θ)` of a self-similar measure, accurate to
/// `tol` for all `|θ| ≤ max_theta`. Discretizes once at the cut scale the
/// Lipschitz bound demands at `max_theta`.
#[derive(Debug, Clone)]
pub struct SelfSimilarScanner {
    atoms: DiscreteMeasure,
    pub tau: f64,
    pub tol: f64,
}

impl SelfSimilarScanner {
    pub fn new(ifs: &WeightedIfs, max_theta: f64, tol: f64, atom_budget: usize) -> Result<Self> {
        assert!(tol > 0.0 && tol <= 0.1, "tolerance must be in (0, 0.1]");
        assert!(max_theta > 0.0);
        let (a, b) = attractor_interval(ifs);
        // atoms sit at f_w(0); |f_w(x) - f_w(0)| <= tau·sup_J |x|
        let sup = a.abs().max(b.abs()).max(b - a).max(f64::MIN_POSITIVE);
        let tau = (tol / (std::f64::consts::TAU * max_theta * sup)).min(0.5);
        let atoms = match crate::ifs::cut_set_with_cap(ifs, tau, atom_budget) {
            Ok(words) => {
                let coords: Vec<f64> = words.iter().map(|w| w.translation).collect();
                let weights: Vec<f64> = words.iter().map(|w| w.weight).collect();
                DiscreteMeasure::from_parts(1, coords, weights)?
            }
            Err(Error::SizeOverflow { .. }) => {
                return Err(Error::TauUnderflow { tol, theta: max_theta, budget: atom_budget })
            }
            Err(e) => return Err(e),
        };
        Ok(SelfSimilarScanner { atoms, tau, tol })
    }

    pub fn atom_count(&self) -> usize {
        self.atoms.len()
    }

    pub fn eval(&self, theta: f64) -> Complex64 {
        ft_discrete(&self.atoms, &Frequency::scalar(theta)).expect("dim 1")
    }
}

/// `μ̂(θ)` for the self-similar measure of `ifs`, within `tol` of the true
/// value (Lipschitz-controlled discretization).
pub fn ft_selfsimilar(ifs: &WeightedIfs, theta: f64, tol: f64) -> Result<Complex64> {
    ft_selfsimilar_with_budget(ifs, theta, tol, DEFAULT_ATOM_BUDGET)
}

/// [`ft_selfsimilar`] with an explicit atom budget.
pub fn ft_selfsimilar_with_budget(
    ifs: &WeightedIfs,
    theta: f64,
    tol: f64,
    atom_budget: usize,
) -> Result<Complex64> {
    assert!(tol > 0.0 && tol <= 0.1, "tolerance must be in (0, 0.1]");
    if theta == 0.0 {
        return Ok(Complex64::new(1.0, 0.0));
    }
    let scanner = SelfSimilarScanner::new(ifs, theta.abs(), tol, atom_budget)?;
    Ok(scanner.eval(theta))
}

/// Result of [`lp_region_integral`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LpEstimate {
    /// Midpoint-rule value of `∫_region |ν̂|^p`.
    pub value: f64,
    /// Number of grid cells whose centers lie in the region.
    pub cells: u64,
}

/// Midpoint-rule estimate of `∫_region |ν̂(ξ)|^p dξ` on the axis-aligned
/// grid of step `h` anchored at the origin (centers `(k+1/2)h`), counting
/// only cells whose centers satisfy the region predicate. Sharing the grid
/// anchor across regions makes Ball = CRegion + ERegion exact cell-by-cell.
pub fn lp_region_integral(
    m: &DiscreteMeasure,
    region: &FrequencyRegion,
    p: f64,
    h: f64,
) -> Result<LpEstimate> {
    lp_region_integral_with_budget(m, region, p, h, DEFAULT_GRID_BUDGET)
}

/// [`lp_region_integral`] with an explicit cell budget.
pub fn lp_region_integral_with_budget(
    m: &DiscreteMeasure,
    region: &FrequencyRegion,
    p: f64,
    h: f64,
    grid_budget: u64,
) -> Result<LpEstimate> {
    region.validate();
    assert!(p >= 1.0, "p must be >= 1");
    assert!(h > 0.0 && h <= 0.25, "grid step must be in (0, 1/4]");
    let d = m.dim();
    if region.needs_zeta() && d < 2 {
        return Err(Error::DimMismatch {
            context: "C/E regions are defined only for d >= 2",
            got: d,
            expected: 2,
        });
    }
    let bb = region.bounding_box(d);
    if bb.len() != d {
        return Err(Error::DimMismatch { context: "region bounds", got: bb.len(), expected: d });
    }
    // center (k + 1/2)h in [lo, hi]
    let axis_range = |lo: f64, hi: f64| -> (i64, i64) {
        let k0 = (lo / h - 0.5).ceil() as i64;
        let k1 = (hi / h - 0.5).floor() as i64;
        (k0, k1)
    };
    let (t0, t1) = axis_range(bb[0].0, bb[0].1);
    if t1 < t0 {
        return Ok(LpEstimate { value: 0.0, cells: 0 });
    }
    let theta_count = (t1 - t0 + 1) as u128;
    let zeta_ranges: Vec<(i64, i64)> = bb[1..].iter().map(|&(lo, hi)| axis_range(lo, hi)).collect();
    let mut row_count: u128 = 1;
    for &(k0, k1) in &zeta_ranges {
        if k1 < k0 {
            return Ok(LpEstimate { value: 0.0, cells: 0 });
        }
        row_count *= (k1 - k0 + 1) as u128;
    }
    let total = theta_count * row_count;
    if total > grid_budget as u128 {
        return Err(Error::GridBudgetExceeded { needed: total, budget: grid_budget });
    }

    // SoA atom data; θ-step phasor is row independent
    let n = m.len();
    let xs: Vec<f64> = (0..n).map(|i| m.atom(i)[0]).collect();
    let ws: Vec<f64> = (0..n).map(|i| m.weight(i)).collect();
    let rest: Vec<f64> = (0..n).flat_map(|i| m.atom(i)[1..].to_vec()).collect();
    let (step_s, step_c): (Vec<f64>, Vec<f64>) =
        xs.iter().map(|&x| (std::f64::consts::TAU * h * x).sin_cos()).unzip();

    let blocks_per_row = (theta_count as usize).div_ceil(THETA_BLOCK);
    let tasks: Vec<(u64, usize)> = (0..row_count as u64)
        .flat_map(|row| (0..blocks_per_row).map(move |b| (row, b)))
        .collect();

    let partials: Vec<(f64, u64)> = tasks
        .par_iter()
        .map(|&(row, block)| {
            // decode the ζ multi-index for this row
            let mut zeta = Vec::with_capacity(d - 1);
            let mut rem = row as i64;
            for &(k0, k1) in zeta_ranges.iter().rev() {
                let span = k1 - k0 + 1;
                zeta.push((k0 + rem.rem_euclid(span)) as f64 * h + 0.5 * h);
                rem = rem.div_euclid(span);
            }
            zeta.reverse();
            // row-constant atom factors c_j = w_j·e(⟨ζ, y_j⟩)
            let mut cr = Vec::with_capacity(n);
            let mut ci = Vec::with_capacity(n);
            for j in 0..n {
                let mut phase = 0.0;
                for (k, z) in zeta.iter().enumerate() {
                    phase += z * rest[j * (d - 1) + k];
                }
                let (s, c) = (std::f64::consts::TAU * phase).sin_cos();
                cr.push(ws[j] * c);
                ci.push(ws[j] * s);
            }
            let kb0 = t0 + (block * THETA_BLOCK) as i64;
            let kb1 = (kb0 + THETA_BLOCK as i64 - 1).min(t1);
            let theta0 = kb0 as f64 * h + 0.5 * h;
            let mut pr = Vec::with_capacity(n);
            let mut pi = Vec::with_capacity(n);
            for &x in &xs {
                let (s, c) = (std::f64::consts::TAU * theta0 * x).sin_cos();
                pr.push(c);
                pi.push(s);
            }
            let mut sum = 0.0f64;
            let mut cells = 0u64;
            for k in kb0..=kb1 {
                let theta = k as f64 * h + 0.5 * h;
                if region.contains_raw(theta, &zeta) {
                    let mut re = 0.0;
                    let mut im = 0.0;
                    for j in 0..n {
                        re += cr[j] * pr[j] - ci[j] * pi[j];
                        im += cr[j] * pi[j] + ci[j] * pr[j];
                    }
                    let sq = re * re + im * im;
                    sum += if p == 2.0 { sq } else { sq.powf(p / 2.0) };
                    cells += 1;
                }
                for j in 0..n {
                    let nr = pr[j] * step_c[j] - pi[j] * step_s[j];
                    pi[j] = pr[j] * step_s[j] + pi[j] * step_c[j];
                    pr[j] = nr;
                }
            }
            (sum, cells)
        })
        .collect();
    let sums: Vec<f64> = partials.iter().map(|(s, _)| *s).collect();
    let cells = partials.iter().map(|(_, c)| c).sum();
    let volume = h.powi(d as i32);
    Ok(LpEstimate { value: volume * pairwise_sum(&sums), cells })
}

/// Counts unit intervals `[k, k+1)` over `[-R, R)` that contain a step-1/4
/// sample with `|μ̂(θ)| ≥ R^{-delta}`, with `μ̂` evaluated to tolerance
/// `min(tol, R^{-delta}/10)`.
pub fn superlevel_cover_count(
    ifs: &WeightedIfs,
    r: f64,
    delta: f64,
    tol: f64,
) -> Result<usize> {
    assert!(r >= 2.0, "R must be >= 2");
    assert!(delta > 0.0);
    let threshold = r.powf(-delta);
    let eval_tol = tol.min(threshold / 10.0).min(0.1);
    let scanner = SelfSimilarScanner::new(ifs, r, eval_tol, DEFAULT_ATOM_BUDGET)?;
    Ok(superlevel_count_impl(&scanner.atoms, r, threshold))
}

/// The same superlevel count for an explicit dim-1 measure (exact transform,
/// no discretization tolerance). Useful as a degenerate-contrast control.
pub fn superlevel_cover_count_measure(m: &DiscreteMeasure, r: f64, delta: f64) -> Result<usize> {
    assert!(r >= 2.0, "R must be >= 2");
    assert!(delta > 0.0);
    if m.dim() != 1 {
        return Err(Error::DimMismatch { context: "superlevel scan", got: m.dim(), expected: 1 });
    }
    Ok(superlevel_count_impl(m, r, r.powf(-delta)))
}

fn superlevel_count_impl(m: &DiscreteMeasure, r: f64, threshold: f64) -> usize {
    let n = m.len();
    let xs: Vec<f64> = (0..n).map(|i| m.atom(i)[0]).collect();
    let ws: Vec<f64> = (0..n).map(|i| m.weight(i)).collect();
    let h = 0.25;
    let (step_s, step_c): (Vec<f64>, Vec<f64>) =
        xs.iter().map(|&x| (std::f64::consts::TAU * h * x).sin_cos()).unzip();
    let s0 = (-4.0 * r) as i64;
    let s1 = (4.0 * r) as i64 - 1; // θ ∈ [-R, R)
    let total = (s1 - s0 + 1) as usize;
    let blocks = total.div_ceil(THETA_BLOCK);
    let thr_sq = threshold * threshold;
    let marked: std::collections::BTreeSet<i64> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let sb0 = s0 + (b * THETA_BLOCK) as i64;
            let sb1 = (sb0 + THETA_BLOCK as i64 - 1).min(s1);
            let theta0 = sb0 as f64 * h;
            let mut pr = Vec::with_capacity(n);
            let mut pi = Vec::with_capacity(n);
            for &x in &xs {
                let (s, c) = (std::f64::consts::TAU * theta0 * x).sin_cos();
                pr.push(c);
                pi.push(s);
            }
            let mut local = Vec::new();
            for s in sb0..=sb1 {
                let mut re = 0.0;
                let mut im = 0.0;
                for j in 0..n {
                    re += ws[j] * pr[j];
                    im += ws[j] * pi[j];
                }
                if re * re + im * im >= thr_sq {
                    let theta = s as f64 * h;
                    local.push(theta.floor() as i64);
                }
                for j in 0..n {
                    let nr = pr[j] * step_c[j] - pi[j] * step_s[j];
                    pi[j] = pr[j] * step_s[j] + pi[j] * step_c[j];
                    pr[j] = nr;
                }
            }
            local
        })
        .reduce(Vec::new, |mut a, b| {
            a.extend(b);
            a
        })
        .into_iter()
        .collect();
    marked.len()
}

/// Result of [`pointwise_decay_fit`].
#[derive(Debug, Clone)]
pub struct DecayFit {
    /// Minimum fitted decay exponent over the rays.
    pub gamma: f64,
    /// Fitted exponent per ray.
    pub per_ray: Vec<f64>,
}

/// Fits the decay exponent of `|ν̂(θ, s·u)|` along each ζ-direction `u`:
/// samples geometric `s` up to `r_max` at θ = 0 and θ = 1, takes the upper
/// envelope over windows of four consecutive scales (the transform
/// oscillates through near-zeros), and fits `env(s) ~ s^{-γ}`.
pub fn pointwise_decay_fit(
    m: &DiscreteMeasure,
    rays: &[Vec<f64>],
    r_max: f64,
) -> Result<DecayFit> {
    if m.dim() < 2 {
        return Err(Error::DimMismatch { context: "decay fit", got: m.dim(), expected: 2 });
    }
    assert!(r_max >= 4.0);
    let mut per_ray = Vec::with_capacity(rays.len());
    for ray in rays {
        if ray.len() != m.dim() - 1 {
            return Err(Error::DimMismatch {
                context: "ray direction",
                got: ray.len(),
                expected: m.dim() - 1,
            });
        }
        let steps = (2.0 * r_max.log2()).floor() as i32;
        let samples: Vec<(f64, f64)> = (0..=steps)
            .map(|j| {
                let s = 2f64.powf(j as f64 / 2.0);
                let zeta: Vec<f64> = ray.iter().map(|u| u * s).collect();
                let v0 = ft_discrete(m, &Frequency::new(0.0, zeta.clone())).unwrap().norm();
                let v1 = ft_discrete(m, &Frequency::new(1.0, zeta)).unwrap().norm();
                (s, v0.max(v1))
            })
            .collect();
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for window in samples.chunks(4) {
            let s_mid = window[window.len() / 2].0;
            let env = window.iter().fold(0.0f64, |m, &(_, v)| m.max(v));
            xs.push(s_mid.ln());
            ys.push(env.max(1e-300).ln());
        }
        per_ray.push(-fit_slope(&xs, &ys));
    }
    let gamma = per_ray.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(DecayFit { gamma, per_ray })
}
