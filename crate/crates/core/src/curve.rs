//! Polynomial curve specifications: the moment curve `V_d` and graph curves
//! `x ↦ (x, g(x))`, with exact derivative matrices, the non-degeneracy
//! determinant, and the excluded-neighborhood ("good set") machinery around
//! its zeros.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::ifs::{attractor_interval, WeightedIfs};
use crate::numeric::fit_slope;
use crate::poly::{real_roots_in_rat, Poly, RatPoly};

/// How a curve is generated.
#[derive(Debug, Clone, PartialEq)]
pub enum CurveKind {
    /// `V_d(x) = (x, x², …, x^d)`.
    Moment,
    /// `x ↦ (x, g_1(x), …, g_{d-1}(x))` with polynomial components.
    Graph(Vec<Poly>),
}

/// A polynomial curve into `R^d` over a closed domain interval.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveSpec {
    kind: CurveKind,
    ambient_dim: usize,
    domain: (f64, f64),
}

impl CurveSpec {
    /// Moment curve `V_d` on the given domain.
    pub fn moment(d: usize, domain: (f64, f64)) -> Self {
        assert!(d >= 1, "ambient dimension must be >= 1");
        assert!(domain.0 <= domain.1, "empty domain");
        CurveSpec { kind: CurveKind::Moment, ambient_dim: d, domain }
    }

    /// Graph curve with the given components `g_1, …, g_{d-1}`.
    pub fn graph(components: Vec<Poly>, domain: (f64, f64)) -> Self {
        assert!(!components.is_empty(), "graph curve needs at least one component");
        assert!(domain.0 <= domain.1, "empty domain");
        let ambient_dim = components.len() + 1;
        CurveSpec { kind: CurveKind::Graph(components), ambient_dim, domain }
    }

    pub fn kind(&self) -> &CurveKind {
        &self.kind
    }

    pub fn ambient_dim(&self) -> usize {
        self.ambient_dim
    }

    pub fn domain(&self) -> (f64, f64) {
        self.domain
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.domain.0 && x <= self.domain.1
    }

    fn check_domain(&self, x: f64) -> Result<()> {
        if self.contains(x) {
            Ok(())
        } else {
            Err(Error::DomainViolation {
                index: 0,
                value: x,
                lo: self.domain.0,
                hi: self.domain.1,
            })
        }
    }

    /// All `d` coordinate polynomials, first one being `x` itself.
    pub fn components(&self) -> Vec<Poly> {
        match &self.kind {
            CurveKind::Moment => (1..=self.ambient_dim).map(Poly::monomial).collect(),
            CurveKind::Graph(g) => {
                let mut out = vec![Poly::monomial(1)];
                out.extend(g.iter().cloned());
                out
            }
        }
    }

    /// The graph components `g_i` as exact rational polynomials.
    fn graph_components_rat(&self) -> Option<Vec<RatPoly>> {
        match &self.kind {
            CurveKind::Graph(g) => {
                Some(g.iter().map(|p| RatPoly::from_f64_coeffs(p.coeffs())).collect())
            }
            CurveKind::Moment => None,
        }
    }
}

/// Default curve domain derived from the driving IFS: its invariant interval
/// inflated by 5% on each side, so pushforwards never touch the boundary.
pub fn default_domain(ifs: &WeightedIfs) -> (f64, f64) {
    let (a, b) = attractor_interval(ifs);
    let pad = 0.05 * (b - a).max(f64::MIN_POSITIVE);
    (a - pad, b + pad)
}

/// Evaluates `Q(x)`; the first coordinate is exactly `x` for both kinds.
pub fn evaluate(curve: &CurveSpec, x: f64) -> Result<Vec<f64>> {
    curve.check_domain(x)?;
    let mut point = Vec::with_capacity(curve.ambient_dim);
    point.push(x);
    match &curve.kind {
        CurveKind::Moment => {
            let mut pw = x;
            for _ in 2..=curve.ambient_dim {
                pw *= x;
                point.push(pw);
            }
        }
        CurveKind::Graph(g) => {
            for p in g {
                point.push(p.eval(x));
            }
        }
    }
    Ok(point)
}

/// The `d×d` matrix whose k-th column is `Q^{(k)}(x)`, by exact polynomial
/// differentiation.
pub fn derivative_matrix(curve: &CurveSpec, x: f64) -> Result<DMatrix<f64>> {
    curve.check_domain(x)?;
    let d = curve.ambient_dim;
    let comps = curve.components();
    let mut m = DMatrix::zeros(d, d);
    for (row, comp) in comps.iter().enumerate() {
        let mut p = comp.clone();
        for col in 0..d {
            p = p.derivative();
            m[(row, col)] = p.eval(x);
        }
    }
    Ok(m)
}

/// `det [Q^{(1)}(x) ⋯ Q^{(d)}(x)]`. For graph curves this equals
/// `det [g^{(2)}(x) ⋯ g^{(d)}(x)]`: the first column is `(1, g'(x))` and the
/// first row has no other nonzero entry, so expansion along the first row
/// reduces to the minor exactly.
pub fn nondegeneracy_det(curve: &CurveSpec, x: f64) -> Result<f64> {
    Ok(derivative_matrix(curve, x)?.determinant())
}

/// Symbolic `D(x) = det [g^{(2)}(x) ⋯ g^{(d)}(x)]` over exact rationals.
/// `None` for moment curves (constant nonzero determinant).
fn graph_det_poly(curve: &CurveSpec) -> Option<RatPoly> {
    let g = curve.graph_components_rat()?;
    let k = g.len(); // matrix is k×k with derivative orders 2..=k+1
    let mut matrix: Vec<Vec<RatPoly>> = Vec::with_capacity(k);
    for gi in &g {
        let mut row = Vec::with_capacity(k);
        let mut p = gi.derivative();
        for _ in 0..k {
            p = p.derivative();
            row.push(p.clone());
        }
        matrix.push(row);
    }
    Some(rat_poly_det(&matrix))
}

/// Cofactor-expansion determinant over the polynomial ring; the matrices here
/// are at most (d-1)×(d-1) for desk-scale d.
fn rat_poly_det(m: &[Vec<RatPoly>]) -> RatPoly {
    let n = m.len();
    if n == 0 {
        return RatPoly::one();
    }
    if n == 1 {
        return m[0][0].clone();
    }
    let mut det = RatPoly::zero();
    for (j, pivot) in m[0].iter().enumerate() {
        if pivot.is_zero() {
            continue;
        }
        let minor: Vec<Vec<RatPoly>> = m[1..]
            .iter()
            .map(|row| {
                row.iter()
                    .enumerate()
                    .filter(|(c, _)| *c != j)
                    .map(|(_, p)| p.clone())
                    .collect()
            })
            .collect();
        let term = pivot.mul(&rat_poly_det(&minor));
        det = if j % 2 == 0 { det.add(&term) } else { det.sub(&term) };
    }
    det
}

/// Sorted union of pairwise disjoint closed intervals.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct IntervalUnion {
    intervals: Vec<(f64, f64)>,
}

impl IntervalUnion {
    pub fn empty() -> Self {
        Self::default()
    }

    /// Merges overlapping or touching intervals and sorts them.
    pub fn from_intervals(mut raw: Vec<(f64, f64)>) -> Self {
        raw.retain(|(a, b)| a <= b);
        raw.sort_by(|x, y| x.0.partial_cmp(&y.0).unwrap());
        let mut merged: Vec<(f64, f64)> = Vec::new();
        for (a, b) in raw {
            match merged.last_mut() {
                Some(last) if a <= last.1 => last.1 = last.1.max(b),
                _ => merged.push((a, b)),
            }
        }
        IntervalUnion { intervals: merged }
    }

    pub fn intervals(&self) -> &[(f64, f64)] {
        &self.intervals
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    pub fn contains(&self, x: f64) -> bool {
        self.intervals.iter().any(|&(a, b)| x >= a && x <= b)
    }

    pub fn total_length(&self) -> f64 {
        self.intervals.iter().map(|(a, b)| b - a).sum()
    }

    /// The closed intervals of `[lo, hi]` not covered by `self`.
    pub fn complement_within(&self, lo: f64, hi: f64) -> Vec<(f64, f64)> {
        let mut out = Vec::new();
        let mut cursor = lo;
        for &(a, b) in &self.intervals {
            if b < lo || a > hi {
                continue;
            }
            if a > cursor {
                out.push((cursor, a));
            }
            cursor = cursor.max(b);
        }
        if cursor < hi {
            out.push((cursor, hi));
        }
        out
    }
}

/// Result of [`good_set_complement`]: the excluded neighborhoods of the
/// determinant zeros, the minimum |D| away from them, and the empirical
/// vanishing-order exponent fitted across a geometric sweep of delta.
#[derive(Debug, Clone)]
pub struct GoodSetReport {
    pub excluded: IntervalUnion,
    pub min_abs_det: f64,
    pub c1_fit: f64,
}

/// Finds every zero of `D(x) = det G(x)` in the curve domain (exact Sturm
/// isolation), excludes their closed `delta`-neighborhoods, and reports the
/// minimum of |D| on the rest of the domain plus the log-log slope of that
/// minimum across `delta ∈ {2^{-k}}`.
///
/// Moment curves have a constant nonzero determinant: nothing to exclude.
pub fn good_set_complement(curve: &CurveSpec, delta: f64) -> Result<GoodSetReport> {
    assert!(delta > 0.0, "delta must be positive");
    let (lo, hi) = curve.domain();
    let det_poly = match graph_det_poly(curve) {
        None => {
            let v = nondegeneracy_det(curve, (lo + hi) / 2.0)?;
            return Ok(GoodSetReport {
                excluded: IntervalUnion::empty(),
                min_abs_det: v.abs(),
                c1_fit: 0.0,
            });
        }
        Some(p) => p,
    };
    if det_poly.is_zero() {
        return Err(Error::IdenticallyZero);
    }
    let roots = real_roots_in_rat(&det_poly, lo, hi).expect("nonzero polynomial");
    let d_f64 = det_poly.to_poly();
    let crit = critical_points(&det_poly, lo, hi);
    let min_at = |excluded: &IntervalUnion| -> f64 {
        let mut min = f64::INFINITY;
        for (a, b) in excluded.complement_within(lo, hi) {
            for x in [a, b].into_iter().chain(
                crit.iter().copied().filter(|&x| x > a && x < b),
            ) {
                min = min.min(d_f64.eval(x).abs());
            }
        }
        min
    };
    let exclude = |d: f64| -> IntervalUnion {
        IntervalUnion::from_intervals(
            roots
                .iter()
                .map(|&r| ((r - d).max(lo), (r + d).min(hi)))
                .collect(),
        )
    };
    let excluded = exclude(delta);
    let min_abs_det = min_at(&excluded);
    // empirical vanishing order: slope of log min|D| against log delta
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    if !roots.is_empty() {
        for k in 2..=10 {
            let d = 2f64.powi(-k);
            let m = min_at(&exclude(d));
            if m.is_finite() && m > 0.0 {
                xs.push((d as f64).ln());
                ys.push(m.ln());
            }
        }
    }
    let c1_fit = fit_slope(&xs, &ys);
    Ok(GoodSetReport { excluded, min_abs_det, c1_fit })
}

/// Roots of D' inside (lo, hi): candidate interior extrema of |D|.
fn critical_points(det_poly: &RatPoly, lo: f64, hi: f64) -> Vec<f64> {
    let d = det_poly.derivative();
    if d.is_zero() {
        return Vec::new();
    }
    real_roots_in_rat(&d, lo, hi).unwrap_or_default()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn evaluate_moment_and_graph() {
        let v3 = CurveSpec::moment(3, (-4.0, 4.0));
        assert_eq!(evaluate(&v3, 2.0).unwrap(), vec![2.0, 4.0, 8.0]);
        let g = CurveSpec::graph(vec![Poly::new(vec![0.0, 0.0, 0.0, 1.0])], (0.0, 1.0));
        assert_eq!(evaluate(&g, 0.5).unwrap(), vec![0.5, 0.125]);
        let v2 = CurveSpec::moment(2, (-1.0, 1.0));
        assert_eq!(evaluate(&v2, 0.0).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn evaluate_rejects_out_of_domain() {
        let v2 = CurveSpec::moment(2, (0.0, 1.0));
        assert!(matches!(evaluate(&v2, 1.5), Err(Error::DomainViolation { .. })));
    }

    #[test]
    fn derivative_matrix_v2() {
        let v2 = CurveSpec::moment(2, (-4.0, 4.0));
        for x in [-1.0, 0.0, 0.37, 2.5] {
            let m = derivative_matrix(&v2, x).unwrap();
            assert_eq!(m[(0, 0)], 1.0);
            assert_eq!(m[(0, 1)], 0.0);
            assert_eq!(m[(1, 0)], 2.0 * x);
            assert_eq!(m[(1, 1)], 2.0);
        }
    }

    #[test]
    fn derivative_matrix_v3_at_zero() {
        let v3 = CurveSpec::moment(3, (-1.0, 1.0));
        let m = derivative_matrix(&v3, 0.0).unwrap();
        let expect = [[1.0, 0.0, 0.0], [0.0, 2.0, 0.0], [0.0, 0.0, 6.0]];
        for r in 0..3 {
            for c in 0..3 {
                assert_eq!(m[(r, c)], expect[r][c], "entry ({r},{c})");
            }
        }
    }

    #[test]
    fn derivative_matrix_flat_graph() {
        let line = CurveSpec::graph(vec![Poly::zero()], (0.0, 1.0));
        let m = derivative_matrix(&line, 0.3).unwrap();
        assert_eq!(m[(0, 0)], 1.0);
        assert_eq!(m[(1, 0)], 0.0);
        assert_eq!(m[(1, 1)], 0.0);
    }

    #[test]
    fn det_constants_for_moment_curves() {
        // det of V_d is the constant 2!·3!·…·d!
        let mut expect = 1.0;
        for d in 2..=5usize {
            expect *= (1..=d).map(|k| k as f64).product::<f64>();
            let v = CurveSpec::moment(d, (-2.0, 2.0));
            for x in [0.0, 1.0, -0.5] {
                let det = nondegeneracy_det(&v, x).unwrap();
                assert!(
                    (det - expect).abs() <= 1e-9 * expect,
                    "V_{d} at {x}: {det} vs {expect}"
                );
            }
        }
    }

    #[test]
    fn det_cubic_graph_is_6x() {
        let g = CurveSpec::graph(vec![Poly::new(vec![0.0, 0.0, 0.0, 1.0])], (-1.0, 1.0));
        for x in [-0.5, 0.0, 0.25, 1.0] {
            let det = nondegeneracy_det(&g, x).unwrap();
            assert!((det - 6.0 * x).abs() < 1e-12, "at {x}: {det}");
        }
    }

    #[test]
    fn good_set_cubic_graph() {
        let g = CurveSpec::graph(vec![Poly::new(vec![0.0, 0.0, 0.0, 1.0])], (0.0, 1.0));
        let report = good_set_complement(&g, 0.1).unwrap();
        let ivals = report.excluded.intervals();
        assert_eq!(ivals.len(), 1);
        assert!((ivals[0].0 - 0.0).abs() < 1e-12);
        assert!((ivals[0].1 - 0.1).abs() < 1e-12);
        assert!((report.min_abs_det - 0.6).abs() < 1e-9, "min {}", report.min_abs_det);
        assert!((report.c1_fit - 1.0).abs() < 0.05, "c1 {}", report.c1_fit);
    }

    #[test]
    fn good_set_moment_curve_empty() {
        let v4 = CurveSpec::moment(4, (0.0, 1.0));
        let report = good_set_complement(&v4, 0.25).unwrap();
        assert!(report.excluded.is_empty());
        assert!(report.min_abs_det > 0.0);
    }

    #[test]
    fn good_set_line_identically_zero() {
        let line = CurveSpec::graph(vec![Poly::zero()], (0.0, 1.0));
        assert!(matches!(good_set_complement(&line, 0.1), Err(Error::IdenticallyZero)));
    }

    #[test]
    fn good_set_min_holds_on_samples() {
        // quadratic-vanishing determinant: g = (x^4, x^2) in R^3 gives
        // D(x) = det [[12x^2, 24x], [2, 0]] = -48x
        let g = CurveSpec::graph(
            vec![Poly::new(vec![0.0, 0.0, 0.0, 0.0, 1.0]), Poly::new(vec![0.0, 0.0, 1.0])],
            (0.0, 1.0),
        );
        let report = good_set_complement(&g, 0.05).unwrap();
        for k in 0..10_000 {
            let x = k as f64 / 9_999.0;
            if !report.excluded.contains(x) {
                let d = nondegeneracy_det(&g, x).unwrap();
                assert!(d.abs() >= report.min_abs_det - 1e-12, "at {x}: {d}");
            }
        }
    }

    #[test]
    fn interval_union_merging_and_complement() {
        let u = IntervalUnion::from_intervals(vec![(0.4, 0.6), (0.1, 0.2), (0.55, 0.7)]);
        assert_eq!(u.intervals(), &[(0.1, 0.2), (0.4, 0.7)]);
        assert!(u.contains(0.15) && !u.contains(0.3));
        let comp = u.complement_within(0.0, 1.0);
        assert_eq!(comp, vec![(0.0, 0.1), (0.2, 0.4), (0.7, 1.0)]);
    }
}
