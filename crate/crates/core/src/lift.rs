//! The exact self-affine representation of 1-D self-similar measures pushed
//! to the moment curve: lifted lower-triangular systems, conjugacy
//! verification (exact rational and float), contraction enforcement, and
//! finite-depth orbits for cross-checks against direct pushforward.

use nalgebra::{DMatrix, DVector};
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Signed, Zero};

use crate::error::{Error, Result};
use crate::ifs::{iterate_with_cap, WeightedIfs};
use crate::measure::{fmt_f64, DiscreteMeasure, DEFAULT_ATOM_BUDGET};

/// An invertible affine map of `R^ℓ`, `x ↦ A·x + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineMapNd {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
}

impl AffineMapNd {
    pub fn apply(&self, v: &DVector<f64>) -> DVector<f64> {
        &self.a * v + &self.b
    }

    /// Operator 2-norm (largest singular value).
    pub fn operator_norm(&self) -> f64 {
        self.a
            .clone()
            .svd(false, false)
            .singular_values
            .iter()
            .fold(0.0f64, |m, &s| m.max(s))
    }
}

/// A weighted affine IFS in `R^ℓ`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineIfs {
    maps: Vec<AffineMapNd>,
    weights: Vec<f64>,
    dim: usize,
}

impl AffineIfs {
    pub fn maps(&self) -> &[AffineMapNd] {
        &self.maps
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.maps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.maps.is_empty()
    }

    pub fn max_operator_norm(&self) -> f64 {
        self.maps.iter().map(AffineMapNd::operator_norm).fold(0.0, f64::max)
    }
}

/// Exact integer binomial rows `C(k, j)` for `k ≤ ell` (Pascal recurrence).
fn binomial_rows(ell: usize) -> Vec<Vec<u128>> {
    let mut rows: Vec<Vec<u128>> = Vec::with_capacity(ell + 1);
    rows.push(vec![1]);
    for k in 1..=ell {
        let prev = &rows[k - 1];
        let mut row = vec![1u128; k + 1];
        for j in 1..k {
            row[j] = prev[j - 1] + prev[j];
        }
        rows.push(row);
    }
    rows
}

/// Lifts a 1-D system to `R^ℓ` along the moment curve: the lifted map for
/// `f(x) = λx + t` is `F(v) = A·v + b` with
/// `A[k,j] = λ^k · C(k,j) · (t/λ)^{k-j}` (1-indexed, lower triangular) and
/// `b = −A·(−t/λ, (−t/λ)², …, (−t/λ)^ℓ)`. Weights are copied unchanged.
pub fn lift(ifs: &WeightedIfs, ell: usize) -> AffineIfs {
    assert!(ell >= 1, "lift needs ell >= 1");
    let binom = binomial_rows(ell);
    let maps = ifs
        .maps()
        .iter()
        .map(|m| {
            let ratio = m.t / m.lambda;
            let mut a = DMatrix::zeros(ell, ell);
            for k in 1..=ell {
                let lk = m.lambda.powi(k as i32);
                for j in 1..=k {
                    a[(k - 1, j - 1)] = lk * binom[k][j] as f64 * ratio.powi((k - j) as i32);
                }
            }
            let u = DVector::from_iterator(ell, (1..=ell).map(|k| (-ratio).powi(k as i32)));
            let b = -(&a * u);
            AffineMapNd { a, b }
        })
        .collect();
    AffineIfs { maps, weights: ifs.weights().to_vec(), dim: ell }
}

/// `V_ℓ(x) = (x, x², …, x^ℓ)`.
pub fn moment_point(x: f64, ell: usize) -> DVector<f64> {
    DVector::from_iterator(ell, (1..=ell).map(|k| x.powi(k as i32)))
}

/// Float-path conjugacy check: max over maps and samples of
/// `‖F_i(V_ℓ(x)) − V_ℓ(f_i(x))‖_∞`.
pub fn verify_conjugacy(ifs: &WeightedIfs, lifted: &AffineIfs, xs: &[f64]) -> Result<f64> {
    if lifted.len() != ifs.len() {
        return Err(Error::DimMismatch {
            context: "lifted map count",
            got: lifted.len(),
            expected: ifs.len(),
        });
    }
    let ell = lifted.dim();
    let mut worst = 0.0f64;
    for (m1, mn) in ifs.maps().iter().zip(lifted.maps()) {
        for &x in xs {
            let lhs = mn.apply(&moment_point(x, ell));
            let rhs = moment_point(m1.apply(x), ell);
            for k in 0..ell {
                worst = worst.max((lhs[k] - rhs[k]).abs());
            }
        }
    }
    Ok(worst)
}

fn rat_pow(base: &BigRational, k: usize) -> BigRational {
    let mut acc = BigRational::from(BigInt::from(1));
    for _ in 0..k {
        acc *= base;
    }
    acc
}

/// Exact conversion of the IFS parameters (every `f64` is a dyadic
/// rational).
pub fn rational_params(ifs: &WeightedIfs) -> Vec<(BigRational, BigRational)> {
    ifs.maps()
        .iter()
        .map(|m| {
            (
                BigRational::from_float(m.lambda).expect("finite lambda"),
                BigRational::from_float(m.t).expect("finite t"),
            )
        })
        .collect()
}

/// Exact-arithmetic conjugacy check: rebuilds the lift over rationals from
/// `(λ_i, t_i)` pairs and returns the max absolute defect of
/// `F_i(V_ℓ(x)) − V_ℓ(f_i(x))` over all maps and samples. The identity is
/// algebraic, so the result must be exactly zero.
pub fn verify_conjugacy_exact(
    params: &[(BigRational, BigRational)],
    ell: usize,
    xs: &[BigRational],
) -> BigRational {
    assert!(ell >= 1);
    let binom = binomial_rows(ell);
    let mut worst = BigRational::zero();
    for (lambda, t) in params {
        assert!(!lambda.is_zero(), "contraction ratio cannot be zero");
        let ratio = t / lambda;
        // A[k][j], 1-indexed, stored dense
        let mut a = vec![vec![BigRational::zero(); ell]; ell];
        for k in 1..=ell {
            let lk = rat_pow(lambda, k);
            for j in 1..=k {
                a[k - 1][j - 1] =
                    &lk * BigRational::from(BigInt::from(binom[k][j])) * rat_pow(&ratio, k - j);
            }
        }
        let u: Vec<BigRational> = (1..=ell).map(|k| rat_pow(&(-ratio.clone()), k)).collect();
        let b: Vec<BigRational> = (0..ell)
            .map(|r| -a[r].iter().zip(&u).map(|(c, v)| c * v).sum::<BigRational>())
            .collect();
        for x in xs {
            let v: Vec<BigRational> = (1..=ell).map(|k| rat_pow(x, k)).collect();
            let fx = lambda * x + t;
            for r in 0..ell {
                let lhs =
                    a[r].iter().zip(&v).map(|(c, w)| c * w).sum::<BigRational>() + &b[r];
                let rhs = rat_pow(&fx, r + 1);
                let defect = (lhs - rhs).abs();
                if defect > worst {
                    worst = defect;
                }
            }
        }
    }
    worst
}

/// Convenience wrapper: exact conjugacy defect for float parameters and
/// samples, converted to rationals without rounding.
pub fn conjugacy_defect_is_zero(ifs: &WeightedIfs, ell: usize, xs: &[f64]) -> bool {
    let samples: Vec<BigRational> = xs
        .iter()
        .map(|&x| BigRational::from_float(x).expect("finite sample"))
        .collect();
    verify_conjugacy_exact(&rational_params(ifs), ell, &samples).is_zero()
}

/// Finds the least `m ≥ 1` with `(max|λ_i|)^m < 1/(2^{2ℓ}·√ℓ)`, lifts the
/// m-th iterate, and verifies every operator norm is below 1 (escalating m
/// if the margin is not met numerically). Returns `(m, lifted system)`.
pub fn ensure_contracting(ifs: &WeightedIfs, ell: usize) -> Result<(u32, AffineIfs)> {
    ensure_contracting_with_cap(ifs, ell, crate::ifs::DEFAULT_ITERATE_CAP)
}

/// [`ensure_contracting`] with an explicit iterate size cap.
pub fn ensure_contracting_with_cap(
    ifs: &WeightedIfs,
    ell: usize,
    cap: usize,
) -> Result<(u32, AffineIfs)> {
    assert!(ell >= 1);
    let threshold = 1.0 / (2f64.powi(2 * ell as i32) * (ell as f64).sqrt());
    let lam = ifs.max_ratio();
    let mut m = 1u32;
    let mut r = lam;
    while r >= threshold {
        r *= lam;
        m += 1;
    }
    loop {
        let iterated = if m == 1 { ifs.clone() } else { iterate_with_cap(ifs, m, cap)? };
        let lifted = lift(&iterated, ell);
        if lifted.max_operator_norm() < 1.0 - 1e-12 {
            return Ok((m, lifted));
        }
        m += 1;
    }
}

/// Finite-depth orbit of the affine system: atoms `F_w(v0)` over all words
/// of length `depth` (lexicographic order) with weights `p_w`.
pub fn discretize_affine(
    aifs: &AffineIfs,
    depth: u32,
    v0: &[f64],
) -> Result<DiscreteMeasure> {
    assert!(depth >= 1);
    if v0.len() != aifs.dim() {
        return Err(Error::DimMismatch {
            context: "affine orbit base point",
            got: v0.len(),
            expected: aifs.dim(),
        });
    }
    let size = (aifs.len() as u128)
        .checked_pow(depth)
        .unwrap_or(u128::MAX);
    if size > DEFAULT_ATOM_BUDGET as u128 {
        return Err(Error::SizeOverflow {
            what: "affine orbit",
            needed: size,
            cap: DEFAULT_ATOM_BUDGET,
        });
    }
    let base = DVector::from_column_slice(v0);
    let mut coords = Vec::with_capacity(size as usize * aifs.dim());
    let mut weights = Vec::with_capacity(size as usize);
    // DFS carrying the composed prefix map F_{w_1} ∘ … ∘ F_{w_j}
    fn expand(
        aifs: &AffineIfs,
        depth: u32,
        prefix: &AffineMapNd,
        weight: f64,
        base: &DVector<f64>,
        coords: &mut Vec<f64>,
        weights: &mut Vec<f64>,
    ) {
        if depth == 0 {
            let atom = prefix.apply(base);
            coords.extend(atom.iter());
            weights.push(weight);
            return;
        }
        for (m, &w) in aifs.maps().iter().zip(aifs.weights()) {
            let composed = AffineMapNd {
                a: &prefix.a * &m.a,
                b: &prefix.a * &m.b + &prefix.b,
            };
            expand(aifs, depth - 1, &composed, weight * w, base, coords, weights);
        }
    }
    let identity = AffineMapNd {
        a: DMatrix::identity(aifs.dim(), aifs.dim()),
        b: DVector::zeros(aifs.dim()),
    };
    expand(aifs, depth, &identity, 1.0, &base, &mut coords, &mut weights);
    DiscreteMeasure::from_parts(aifs.dim(), coords, weights)
}

/// Default orbit base point: `V_ℓ` of the first map's fixed point.
pub fn default_base_point(ifs: &WeightedIfs, ell: usize) -> Vec<f64> {
    let fp = ifs.maps()[0].fixed_point();
    (1..=ell).map(|k| fp.powi(k as i32)).collect()
}

/// Text serialization: one line per map (row-major A entries then b, 17
/// significant digits), then the weight vector.
pub fn to_text(aifs: &AffineIfs) -> String {
    let mut out = String::new();
    for m in aifs.maps() {
        let mut fields: Vec<String> = Vec::new();
        for r in 0..m.a.nrows() {
            for c in 0..m.a.ncols() {
                fields.push(fmt_f64(m.a[(r, c)]));
            }
        }
        fields.extend(m.b.iter().map(|&x| fmt_f64(x)));
        out.push_str(&fields.join(" "));
        out.push('\n');
    }
    out.push_str(
        &aifs
            .weights()
            .iter()
            .map(|&w| fmt_f64(w))
            .collect::<Vec<_>>()
            .join(" "),
    );
    out.push('\n');
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ifs::AffineMap1D;
    use crate::measure::{discretize_depth, pushforward};

    fn dyadic() -> WeightedIfs {
        WeightedIfs::uniform(&[(0.5, 0.0), (0.5, 0.5)]).unwrap()
    }

    #[test]
    fn lift_zero_translation_is_diagonal() {
        let ifs = WeightedIfs::uniform(&[(0.5, 0.0), (-0.5, 0.5)]).unwrap();
        let lifted = lift(&ifs, 2);
        let a = &lifted.maps()[0].a;
        assert_eq!(a[(0, 0)], 0.5);
        assert_eq!(a[(0, 1)], 0.0);
        assert_eq!(a[(1, 0)], 0.0);
        assert_eq!(a[(1, 1)], 0.25);
        assert_eq!(lifted.maps()[0].b, DVector::from_column_slice(&[0.0, 0.0]));
    }

    #[test]
    fn lift_half_shift_hand_values() {
        // f(x) = (x+1)/2: A = [[1/2, 0], [1/2, 1/4]], b = (1/2, 1/4)
        let ifs = dyadic();
        let lifted = lift(&ifs, 2);
        let m = &lifted.maps()[1];
        assert_eq!(m.a[(0, 0)], 0.5);
        assert_eq!(m.a[(0, 1)], 0.0);
        assert_eq!(m.a[(1, 0)], 0.5);
        assert_eq!(m.a[(1, 1)], 0.25);
        assert_eq!(m.b, DVector::from_column_slice(&[0.5, 0.25]));
    }

    #[test]
    fn lift_ell_one_is_the_map_itself() {
        let ifs = WeightedIfs::new(
            vec![AffineMap1D::new(1.0 / 3.0, 2.0 / 3.0), AffineMap1D::new(0.5, 0.0)],
            vec![0.5, 0.5],
        )
        .unwrap();
        let lifted = lift(&ifs, 1);
        assert_eq!(lifted.maps()[0].a[(0, 0)], 1.0 / 3.0);
        assert_eq!(lifted.maps()[0].b[0], 2.0 / 3.0);
    }

    #[test]
    fn lift_preserves_weights_bit_exactly() {
        let ifs = WeightedIfs::new(
            vec![AffineMap1D::new(0.4, 0.1), AffineMap1D::new(-0.3, 0.9)],
            vec![0.125, 0.875],
        )
        .unwrap();
        let lifted = lift(&ifs, 3);
        assert_eq!(lifted.weights(), ifs.weights());
    }

    #[test]
    fn conjugacy_exact_dyadic() {
        let xs: Vec<BigRational> = [(0i64, 1i64), (1, 1), (-1, 1), (7, 3)]
            .iter()
            .map(|&(n, d)| BigRational::new(BigInt::from(n), BigInt::from(d)))
            .collect();
        let defect = verify_conjugacy_exact(&rational_params(&dyadic()), 3, &xs);
        assert!(defect.is_zero(), "defect {defect}");
    }

    #[test]
    fn conjugacy_float_small_defect() {
        let ifs = WeightedIfs::uniform(&[(0.37, 0.21), (0.25, 0.7)]).unwrap();
        let lifted = lift(&ifs, 4);
        let xs: Vec<f64> = (0..50).map(|k| k as f64 / 49.0).collect();
        let defect = verify_conjugacy(&ifs, &lifted, &xs).unwrap();
        assert!(defect < 1e-12, "defect {defect}");
    }

    #[test]
    fn ensure_contracting_dyadic_ell2() {
        let (m, lifted) = ensure_contracting(&dyadic(), 2).unwrap();
        assert_eq!(m, 5); // first m with 2^-m < 1/(16·sqrt(2)) ≈ 0.0442
        assert!(lifted.max_operator_norm() < 1.0);
        assert_eq!(lifted.len(), 32);
    }

    #[test]
    fn ensure_contracting_small_ratio_ell1() {
        let ifs = WeightedIfs::uniform(&[(0.1, 0.0), (0.1, 0.9)]).unwrap();
        let (m, _) = ensure_contracting(&ifs, 1).unwrap();
        assert_eq!(m, 1); // 0.1 < 1/4
    }

    #[test]
    fn orbit_matches_pushforward_at_depth_two() {
        let lifted = lift(&dyadic(), 2);
        let orbit = discretize_affine(&lifted, 2, &[0.0, 0.0]).unwrap().sorted_by_coords();
        let cut = discretize_depth(&dyadic(), 2).unwrap();
        let curve = crate::curve::CurveSpec::moment(2, (-0.1, 1.1));
        let direct = pushforward(&cut, &curve).unwrap().sorted_by_coords();
        assert_eq!(orbit.len(), direct.len());
        for i in 0..orbit.len() {
            for k in 0..2 {
                assert!((orbit.atom(i)[k] - direct.atom(i)[k]).abs() < 1e-14);
            }
            assert_eq!(orbit.weight(i), direct.weight(i));
        }
    }

    #[test]
    fn orbit_depth_one_is_map_images() {
        let lifted = lift(&dyadic(), 2);
        let orbit = discretize_affine(&lifted, 1, &[0.0, 0.0]).unwrap();
        assert_eq!(orbit.len(), 2);
        assert_eq!(orbit.atom(0), &[0.0, 0.0]);
        assert_eq!(orbit.atom(1), &[0.5, 0.25]);
    }

    #[test]
    fn serialization_shape() {
        let lifted = lift(&dyadic(), 2);
        let text = to_text(&lifted);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 3); // two maps + weight vector
        assert_eq!(lines[0].split_whitespace().count(), 6); // 4 matrix + 2 offset
    }
}
