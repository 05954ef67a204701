//! Dyadic histograms, moment sums `s_m(ν,q)`, L^q-dimension estimation, and
//! the flattening / L²-improving diagnostics for convolution powers.
//!
//! All exponents are base-2, matching the `2^{-m}` cell convention.

use std::ops::RangeInclusive;

use crate::curve::CurveSpec;
use crate::error::{Error, Result};
use crate::ifs::WeightedIfs;
use crate::measure::{
    convolution_power_coalesced, convolve, discretize, pushforward, ConvolveOptions,
    DiscreteMeasure,
};
use crate::numeric::{fit_slope, kahan_sum};
use crate::spectral::{lp_region_integral_with_budget, FrequencyRegion, LpEstimate};

/// Largest supported dyadic level (cell indices stay well inside i64 for
/// desk-scale supports).
pub const MAX_LEVEL: u32 = 40;

/// Masses of a measure on the level-m dyadic partition: cell `k` covers
/// `2^{-m}(k + [0,1)^d)`. Cells are stored sorted lexicographically by
/// index.
#[derive(Debug, Clone, PartialEq)]
pub struct DyadicHistogram {
    level: u32,
    dim: usize,
    indices: Vec<i64>,
    masses: Vec<f64>,
}

impl DyadicHistogram {
    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.masses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masses.is_empty()
    }

    pub fn cell(&self, i: usize) -> (&[i64], f64) {
        (&self.indices[i * self.dim..(i + 1) * self.dim], self.masses[i])
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn total_mass(&self) -> f64 {
        kahan_sum(self.masses.iter().copied())
    }
}

/// Bins a measure on the level-m dyadic partition; each atom lands in the
/// unique half-open cell containing it (`floor(2^m·x)` per coordinate, so a
/// coordinate exactly on a cell boundary belongs to the upper cell).
pub fn bin(m: &DiscreteMeasure, level: u32) -> Result<DyadicHistogram> {
    if level > MAX_LEVEL {
        return Err(Error::LevelOutOfRange(level));
    }
    let scale = 2f64.powi(level as i32);
    let d = m.dim();
    let mut keyed: Vec<(Vec<i64>, usize)> = (0..m.len())
        .map(|i| {
            let idx: Vec<i64> = m.atom(i).iter().map(|&x| (x * scale).floor() as i64).collect();
            (idx, i)
        })
        .collect();
    keyed.sort();
    let mut indices = Vec::new();
    let mut masses: Vec<f64> = Vec::new();
    let mut last: Option<&[i64]> = None;
    for (idx, i) in &keyed {
        if last == Some(idx.as_slice()) {
            *masses.last_mut().unwrap() += m.weight(*i);
        } else {
            indices.extend_from_slice(idx);
            masses.push(m.weight(*i));
            last = Some(idx.as_slice());
        }
    }
    // `last` borrows from `keyed` only within the loop
    Ok(DyadicHistogram { level, dim: d, indices, masses })
}

/// Moment exponent: a finite `q > 1` or the sup (max-cell-mass) case.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MomentExponent {
    Finite(f64),
    Infinity,
}

impl MomentExponent {
    fn q_minus_one(&self) -> f64 {
        match self {
            MomentExponent::Finite(q) => q - 1.0,
            MomentExponent::Infinity => 1.0,
        }
    }
}

/// `s_m(ν,q) = Σ_cells mass^q`, or the max cell mass for `q = ∞`.
pub fn moment_sum(h: &DyadicHistogram, q: MomentExponent) -> f64 {
    match q {
        MomentExponent::Infinity => h.masses.iter().copied().fold(0.0, f64::max),
        MomentExponent::Finite(q) => {
            assert!(q > 1.0, "finite moment exponent must exceed 1");
            if q == 2.0 {
                kahan_sum(h.masses.iter().map(|&m| m * m))
            } else {
                kahan_sum(h.masses.iter().map(|&m| m.powf(q)))
            }
        }
    }
}

/// One row of an L^q-dimension table.
#[derive(Debug, Clone, Copy)]
pub struct LqRow {
    pub m: u32,
    pub moment_sum: f64,
    pub neg_log2: f64,
    /// Per-step finite difference of `-log2 s_m`; oscillation here means a
    /// liminf below the fitted slope.
    pub finite_diff: Option<f64>,
}

/// L^q-dimension estimate over a window of dyadic levels.
#[derive(Debug, Clone)]
pub struct LqDimension {
    /// Least-squares slope of `-log2 s_m` against m.
    pub tau_slope: f64,
    /// `tau_slope / (q-1)` (slope itself for `q = ∞`).
    pub dim: f64,
    pub table: Vec<LqRow>,
}

/// Fits the L^q dimension of an explicit measure across `m_range` (at least
/// 4 levels). The caller is responsible for the measure being discretized
/// finely enough for the largest level (16x finer is the working rule).
pub fn lq_dimension_of(
    measure: &DiscreteMeasure,
    q: MomentExponent,
    m_range: RangeInclusive<u32>,
) -> Result<LqDimension> {
    let levels: Vec<u32> = m_range.collect();
    if levels.len() < 4 {
        return Err(Error::InsufficientScales { got: levels.len(), min: 4 });
    }
    let mut table: Vec<LqRow> = Vec::with_capacity(levels.len());
    for &m in &levels {
        let h = bin(measure, m)?;
        let s = moment_sum(&h, q);
        let y = -s.max(f64::MIN_POSITIVE).log2();
        let finite_diff = table.last().map(|prev: &LqRow| (y - prev.neg_log2) / (m - prev.m) as f64);
        table.push(LqRow { m, moment_sum: s, neg_log2: y, finite_diff });
    }
    let xs: Vec<f64> = table.iter().map(|r| r.m as f64).collect();
    let ys: Vec<f64> = table.iter().map(|r| r.neg_log2).collect();
    let tau_slope = fit_slope(&xs, &ys);
    Ok(LqDimension { tau_slope, dim: tau_slope / q.q_minus_one(), table })
}

/// How a measure under study is produced: an IFS discretization, optionally
/// pushed to a curve, optionally self-convolved.
#[derive(Debug, Clone)]
pub struct MeasureRecipe<'a> {
    pub ifs: &'a WeightedIfs,
    pub curve: Option<&'a CurveSpec>,
    pub power: u32,
}

/// A realized recipe: the measure plus the lattice width used during
/// convolution coalescing (None when no coalescing happened).
#[derive(Debug, Clone)]
pub struct BuiltMeasure {
    pub measure: DiscreteMeasure,
    pub coalesce_width: Option<f64>,
    pub tau: f64,
}

/// Builds the measure for a recipe with the default scale rules: cut scale
/// `tau = 2^{-(m_max+4)}`, convolution coalescing starting at
/// `2^{-(m_max+6)}` and doubling whenever a budget trips (the width actually
/// used is reported).
pub fn build_measure(
    recipe: &MeasureRecipe,
    m_max: u32,
    opts: ConvolveOptions,
) -> Result<BuiltMeasure> {
    let tau = 2f64.powi(-(m_max as i32 + 4));
    let base = discretize(recipe.ifs, tau)?;
    let base = match recipe.curve {
        Some(c) => pushforward(&base, c)?,
        None => base,
    };
    if recipe.power <= 1 {
        return Ok(BuiltMeasure { measure: base, coalesce_width: None, tau });
    }
    let mut width = if opts.coalesce_width > 0.0 {
        opts.coalesce_width
    } else {
        2f64.powi(-(m_max as i32 + 6))
    };
    loop {
        let attempt = convolution_power_coalesced(
            &base,
            recipe.power,
            ConvolveOptions { coalesce_width: width, ..opts },
        );
        match attempt {
            Ok(measure) => {
                return Ok(BuiltMeasure { measure, coalesce_width: Some(width), tau })
            }
            Err(e) if e.is_budget() && width < 1.0 => width *= 2.0,
            Err(e) => return Err(e),
        }
    }
}

/// L^q dimension of a recipe across `m_range`, with default scale rules.
pub fn lq_dimension(
    recipe: &MeasureRecipe,
    q: MomentExponent,
    m_range: RangeInclusive<u32>,
) -> Result<LqDimension> {
    let built = build_measure(recipe, *m_range.end(), ConvolveOptions::default())?;
    lq_dimension_of(&built.measure, q, m_range)
}

/// One `(m, s_m)` row of a flattening table with the normalization
/// `s_m · 2^{m(d-ε)}` attached.
#[derive(Debug, Clone, Copy)]
pub struct FlatteningRow {
    pub m: u32,
    pub moment_sum: f64,
    pub normalized: f64,
}

/// Flattening diagnostics for one convolution power.
#[derive(Debug, Clone)]
pub struct FlatteningEntry {
    pub power: u32,
    pub dim2: f64,
    pub coalesce_width: Option<f64>,
    pub rows: Vec<FlatteningRow>,
}

#[derive(Debug, Clone)]
pub struct FlatteningReport {
    pub ambient_dim: usize,
    pub epsilon: f64,
    pub entries: Vec<FlatteningEntry>,
}

/// For `p = 1..=p_max`, estimates `dim₂(ν^{*p})` and tabulates the
/// normalized moment sums `s_m(ν^{*p},2)·2^{m(d-ε)}`.
pub fn flattening_report(
    ifs: &WeightedIfs,
    curve: Option<&CurveSpec>,
    p_max: u32,
    m_range: RangeInclusive<u32>,
    epsilon: f64,
    opts: ConvolveOptions,
) -> Result<FlatteningReport> {
    assert!(p_max >= 1 && p_max <= 6, "desk scale covers p <= 6");
    assert!(epsilon > 0.0 && epsilon < 1.0);
    let m_max = *m_range.end();
    let ambient_dim = curve.map_or(1, CurveSpec::ambient_dim);
    let mut entries = Vec::with_capacity(p_max as usize);
    for p in 1..=p_max {
        let recipe = MeasureRecipe { ifs, curve, power: p };
        let built = build_measure(&recipe, m_max, opts)?;
        let fit = lq_dimension_of(&built.measure, MomentExponent::Finite(2.0), m_range.clone())?;
        let rows = fit
            .table
            .iter()
            .map(|r| FlatteningRow {
                m: r.m,
                moment_sum: r.moment_sum,
                normalized: r.moment_sum
                    * 2f64.powf(r.m as f64 * (ambient_dim as f64 - epsilon)),
            })
            .collect();
        entries.push(FlatteningEntry {
            power: p,
            dim2: fit.dim,
            coalesce_width: built.coalesce_width,
            rows,
        });
    }
    Ok(FlatteningReport { ambient_dim, epsilon, entries })
}

/// Output of [`l2_improving_check`].
#[derive(Debug, Clone, Copy)]
pub struct L2Improving {
    /// `s_m(θ∗ν,2) / s_m(θ,2)`.
    pub ratio: f64,
    /// `s_m(θ,2)·2^{m(d-γ)}`: above ~1 the non-saturation gate holds.
    pub gate: f64,
}

/// Measures how much convolving with `nu` contracts the level-m L² moment
/// sum of `theta`, along with the saturation gate for a supplied `gamma`.
pub fn l2_improving_check(
    theta: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    m: u32,
    gamma: f64,
) -> Result<L2Improving> {
    if theta.dim() != nu.dim() {
        return Err(Error::DimMismatch {
            context: "improving-check operands",
            got: nu.dim(),
            expected: theta.dim(),
        });
    }
    let s_theta = moment_sum(&bin(theta, m)?, MomentExponent::Finite(2.0));
    let conv = convolve(theta, nu)?;
    let s_conv = moment_sum(&bin(&conv, m)?, MomentExponent::Finite(2.0));
    let d = theta.dim() as f64;
    Ok(L2Improving {
        ratio: s_conv / s_theta,
        gate: s_theta * 2f64.powf(m as f64 * (d - gamma)),
    })
}

/// Output of [`fourier_moment_consistency`].
#[derive(Debug, Clone, Copy)]
pub struct ConsistencyReport {
    pub moment_sum: f64,
    pub integral: LpEstimate,
    /// `s_m(ν,2) / (2^{-dm}·‖ν̂‖²_{L²(B(2^m))})`; bounded above and below
    /// by constants depending only on the dimension.
    pub ratio: f64,
}

/// Compares the level-m L² moment sum against the ball integral of `|ν̂|²`
/// at `R = 2^level`.
pub fn fourier_moment_consistency(
    m: &DiscreteMeasure,
    level: u32,
    h: f64,
    grid_budget: u64,
) -> Result<ConsistencyReport> {
    assert!(level <= 12, "quadrature budget confines levels to <= 12");
    let r = 2f64.powi(level as i32);
    let s = moment_sum(&bin(m, level)?, MomentExponent::Finite(2.0));
    let integral =
        lp_region_integral_with_budget(m, &FrequencyRegion::Ball { r }, 2.0, h, grid_budget)?;
    let d = m.dim() as i32;
    let ratio = s / (2f64.powi(-d * level as i32) * integral.value);
    Ok(ConsistencyReport { moment_sum: s, integral, ratio })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dyadic() -> WeightedIfs {
        WeightedIfs::uniform(&[(0.5, 0.0), (0.5, 0.5)]).unwrap()
    }

    fn cantor() -> WeightedIfs {
        WeightedIfs::uniform(&[(1.0 / 3.0, 0.0), (1.0 / 3.0, 2.0 / 3.0)]).unwrap()
    }

    fn quarter_uniform() -> DiscreteMeasure {
        DiscreteMeasure::new(1, vec![0.0, 0.25, 0.5, 0.75], vec![0.25; 4]).unwrap()
    }

    #[test]
    fn bin_basic_cells() {
        let h = bin(&DiscreteMeasure::dirac(&[0.3]), 1).unwrap();
        assert_eq!(h.len(), 1);
        assert_eq!(h.cell(0), (&[0i64][..], 1.0));

        let h = bin(&quarter_uniform(), 1).unwrap();
        assert_eq!(h.len(), 2);
        assert_eq!(h.cell(0), (&[0i64][..], 0.5));
        assert_eq!(h.cell(1), (&[1i64][..], 0.5));
    }

    #[test]
    fn bin_boundary_goes_up() {
        let h = bin(&DiscreteMeasure::dirac(&[0.5]), 1).unwrap();
        assert_eq!(h.cell(0).0, &[1i64]);
    }

    #[test]
    fn bin_level_out_of_range() {
        assert!(matches!(
            bin(&DiscreteMeasure::dirac(&[0.0]), 41),
            Err(Error::LevelOutOfRange(41))
        ));
    }

    #[test]
    fn bin_conserves_mass() {
        let m = discretize(&cantor(), 1e-4).unwrap();
        for level in [0, 3, 7, 11] {
            let h = bin(&m, level).unwrap();
            assert!((h.total_mass() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn moment_sum_examples() {
        let single = bin(&DiscreteMeasure::dirac(&[0.3]), 5).unwrap();
        assert_eq!(moment_sum(&single, MomentExponent::Finite(2.0)), 1.0);
        assert_eq!(moment_sum(&single, MomentExponent::Infinity), 1.0);

        let h = bin(&quarter_uniform(), 1).unwrap();
        assert_eq!(moment_sum(&h, MomentExponent::Finite(2.0)), 0.5);
        assert_eq!(moment_sum(&h, MomentExponent::Infinity), 0.5);
    }

    #[test]
    fn moment_sum_lebesgue_scaling() {
        // uniform over 2^m cells: s_m(·,2) = 2^-m exactly
        let m = discretize(&dyadic(), 2f64.powi(-12)).unwrap();
        for level in [2u32, 5, 8] {
            let h = bin(&m, level).unwrap();
            let s = moment_sum(&h, MomentExponent::Finite(2.0));
            assert!((s - 2f64.powi(-(level as i32))).abs() < 1e-12, "level {level}: {s}");
        }
    }

    #[test]
    fn max_cell_mass_nonincreasing_in_level() {
        let m = discretize(&cantor(), 1e-4).unwrap();
        let mut last = f64::INFINITY;
        for level in 0..=10 {
            let s = moment_sum(&bin(&m, level).unwrap(), MomentExponent::Infinity);
            assert!(s <= last + 1e-15);
            last = s;
        }
    }

    #[test]
    fn cell_splitting_bound() {
        // s_m <= s_m' · 2^{d(m-m')} for m >= m'
        let m = discretize(&cantor(), 1e-4).unwrap();
        let mut sums = Vec::new();
        for level in 2..=9u32 {
            sums.push(moment_sum(&bin(&m, level).unwrap(), MomentExponent::Finite(2.0)));
        }
        for i in 0..sums.len() {
            for j in 0..i {
                let gap = (i - j) as i32;
                assert!(sums[i] <= sums[j] * 2f64.powi(gap) * (1.0 + 1e-12));
            }
        }
    }

    #[test]
    fn lq_dimension_lebesgue() {
        let recipe = MeasureRecipe { ifs: &dyadic(), curve: None, power: 1 };
        let fit = lq_dimension(&recipe, MomentExponent::Finite(2.0), 4..=10).unwrap();
        assert!((fit.dim - 1.0).abs() < 0.05, "dim {}", fit.dim);
    }

    #[test]
    fn lq_dimension_dirac() {
        let fit =
            lq_dimension_of(&DiscreteMeasure::dirac(&[0.3]), MomentExponent::Finite(2.0), 2..=8)
                .unwrap();
        assert!(fit.dim.abs() < 0.02, "dim {}", fit.dim);
    }

    #[test]
    fn lq_dimension_cantor_correlation() {
        let recipe = MeasureRecipe { ifs: &cantor(), curve: None, power: 1 };
        let fit = lq_dimension(&recipe, MomentExponent::Finite(2.0), 4..=11).unwrap();
        let expect = 2f64.ln() / 3f64.ln();
        assert!((fit.dim - expect).abs() < 0.05, "dim {} vs {}", fit.dim, expect);
    }

    #[test]
    fn lq_dimension_needs_four_levels() {
        assert!(matches!(
            lq_dimension_of(&DiscreteMeasure::dirac(&[0.0]), MomentExponent::Finite(2.0), 4..=6),
            Err(Error::InsufficientScales { .. })
        ));
    }

    #[test]
    fn improving_check_dirac_ratio_one() {
        let d = DiscreteMeasure::dirac(&[0.0]);
        let out = l2_improving_check(&d, &d, 6, 0.1).unwrap();
        assert_eq!(out.ratio, 1.0);
    }

    #[test]
    fn improving_check_uniform_bounded_spill() {
        // convolution cannot grow the L² moment sum beyond the 2^d spill
        let theta = discretize(&dyadic(), 2f64.powi(-8)).unwrap();
        for nu in [quarter_uniform(), DiscreteMeasure::dirac(&[0.37])] {
            let out = l2_improving_check(&theta, &nu, 4, 0.5).unwrap();
            assert!(out.ratio <= 2.0 + 1e-12, "ratio {}", out.ratio);
        }
    }

    #[test]
    fn consistency_dirac_exact_half() {
        let d = DiscreteMeasure::dirac(&[0.25]);
        for level in [4u32, 6, 8] {
            let rep = fourier_moment_consistency(&d, level, 0.25, 1 << 30).unwrap();
            assert!((rep.ratio - 0.5).abs() < 0.01, "level {level}: {}", rep.ratio);
        }
    }

    #[test]
    fn consistency_two_atom_hand_value() {
        let m = DiscreteMeasure::new(1, vec![0.0, 0.5], vec![0.5, 0.5]).unwrap();
        let rep = fourier_moment_consistency(&m, 1, 0.25, 1 << 30).unwrap();
        assert!((rep.moment_sum - 0.5).abs() < 1e-12);
        assert!((rep.integral.value - 2.0).abs() < 0.02, "integral {}", rep.integral.value);
        assert!((rep.ratio - 0.5).abs() < 0.01, "ratio {}", rep.ratio);
    }

    #[test]
    fn flattening_monotone_on_small_case() {
        let v2 = CurveSpec::moment(2, (-0.1, 1.1));
        let report = flattening_report(
            &cantor(),
            Some(&v2),
            2,
            3..=6,
            0.1,
            ConvolveOptions::default(),
        )
        .unwrap();
        assert_eq!(report.entries.len(), 2);
        let d1 = report.entries[0].dim2;
        let d2 = report.entries[1].dim2;
        assert!(d2 > d1 - 0.05, "dim2 fell: p1 {d1} p2 {d2}");
    }
}
