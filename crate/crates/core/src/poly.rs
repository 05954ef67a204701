//! Polynomials with exact derivative access and exact real-root isolation.
//!
//! Coefficients are stored ascending by degree. Root isolation runs over
//! arbitrary-precision rationals (every `f64` converts exactly), using a
//! Sturm chain on the square-free part, so no real root inside the query
//! interval can be missed; intervals are squeezed to width 1e-13 by rational
//! bisection before being reported as `f64` midpoints.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Signed, ToPrimitive, Zero};

/// Interval width at which isolated roots are reported.
pub const ROOT_WIDTH: f64 = 1e-13;

/// Dense univariate polynomial over `f64`, coefficients ascending.
#[derive(Debug, Clone, PartialEq)]
pub struct Poly {
    coeffs: Vec<f64>,
}

impl Poly {
    pub fn new(mut coeffs: Vec<f64>) -> Self {
        while coeffs.len() > 1 && coeffs.last() == Some(&0.0) {
            coeffs.pop();
        }
        if coeffs.is_empty() {
            coeffs.push(0.0);
        }
        Poly { coeffs }
    }

    pub fn zero() -> Self {
        Poly { coeffs: vec![0.0] }
    }

    /// x^k with unit coefficient.
    pub fn monomial(k: usize) -> Self {
        let mut c = vec![0.0; k + 1];
        c[k] = 1.0;
        Poly { coeffs: c }
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|&c| c == 0.0)
    }

    pub fn eval(&self, x: f64) -> f64 {
        let mut acc = 0.0;
        for &c in self.coeffs.iter().rev() {
            acc = acc * x + c;
        }
        acc
    }

    pub fn derivative(&self) -> Poly {
        if self.coeffs.len() == 1 {
            return Poly::zero();
        }
        Poly::new(
            self.coeffs[1..]
                .iter()
                .enumerate()
                .map(|(i, &c)| c * (i + 1) as f64)
                .collect(),
        )
    }

    /// k-th derivative by repeated exact differentiation of coefficients.
    pub fn derivative_n(&self, k: u32) -> Poly {
        let mut p = self.clone();
        for _ in 0..k {
            p = p.derivative();
        }
        p
    }
}

// ---------------------------------------------------------------------------
// exact rational polynomials (root isolation, symbolic determinants)
// ---------------------------------------------------------------------------

/// Dense univariate polynomial over `BigRational`, coefficients ascending.
#[derive(Debug, Clone, PartialEq)]
pub struct RatPoly {
    coeffs: Vec<BigRational>,
}

impl RatPoly {
    pub fn new(mut coeffs: Vec<BigRational>) -> Self {
        while coeffs.len() > 1 && coeffs.last().map_or(false, Zero::is_zero) {
            coeffs.pop();
        }
        if coeffs.is_empty() {
            coeffs.push(BigRational::zero());
        }
        RatPoly { coeffs }
    }

    pub fn zero() -> Self {
        RatPoly { coeffs: vec![BigRational::zero()] }
    }

    pub fn one() -> Self {
        RatPoly { coeffs: vec![BigRational::from(BigInt::from(1))] }
    }

    /// Exact conversion: every finite `f64` is a dyadic rational.
    pub fn from_f64_coeffs(coeffs: &[f64]) -> Self {
        RatPoly::new(
            coeffs
                .iter()
                .map(|&c| BigRational::from_float(c).expect("finite coefficient"))
                .collect(),
        )
    }

    pub fn from_poly(p: &Poly) -> Self {
        Self::from_f64_coeffs(p.coeffs())
    }

    pub fn to_poly(&self) -> Poly {
        Poly::new(self.coeffs.iter().map(|c| c.to_f64().unwrap()).collect())
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(Zero::is_zero)
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn eval(&self, x: &BigRational) -> BigRational {
        let mut acc = BigRational::zero();
        for c in self.coeffs.iter().rev() {
            acc = acc * x + c;
        }
        acc
    }

    pub fn derivative(&self) -> RatPoly {
        if self.coeffs.len() == 1 {
            return RatPoly::zero();
        }
        RatPoly::new(
            self.coeffs[1..]
                .iter()
                .enumerate()
                .map(|(i, c)| c * BigRational::from(BigInt::from(i + 1)))
                .collect(),
        )
    }

    pub fn add(&self, other: &RatPoly) -> RatPoly {
        let n = self.coeffs.len().max(other.coeffs.len());
        let mut out = vec![BigRational::zero(); n];
        for (i, c) in self.coeffs.iter().enumerate() {
            out[i] += c;
        }
        for (i, c) in other.coeffs.iter().enumerate() {
            out[i] += c;
        }
        RatPoly::new(out)
    }

    pub fn sub(&self, other: &RatPoly) -> RatPoly {
        let n = self.coeffs.len().max(other.coeffs.len());
        let mut out = vec![BigRational::zero(); n];
        for (i, c) in self.coeffs.iter().enumerate() {
            out[i] += c;
        }
        for (i, c) in other.coeffs.iter().enumerate() {
            out[i] -= c;
        }
        RatPoly::new(out)
    }

    pub fn mul(&self, other: &RatPoly) -> RatPoly {
        if self.is_zero() || other.is_zero() {
            return RatPoly::zero();
        }
        let mut out = vec![BigRational::zero(); self.coeffs.len() + other.coeffs.len() - 1];
        for (i, a) in self.coeffs.iter().enumerate() {
            if a.is_zero() {
                continue;
            }
            for (j, b) in other.coeffs.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        RatPoly::new(out)
    }

    /// Euclidean remainder of `self` by `rhs` (rhs nonzero).
    fn rem(&self, rhs: &RatPoly) -> RatPoly {
        assert!(!rhs.is_zero());
        let mut r = self.coeffs.clone();
        let dr = rhs.degree();
        let lead = rhs.coeffs[dr].clone();
        while r.len() > 1 && r.last().map_or(false, Zero::is_zero) {
            r.pop();
        }
        while r.len() - 1 >= dr && !(r.len() == 1 && r[0].is_zero()) {
            let dl = r.len() - 1;
            let q = &r[dl] / &lead;
            for k in 0..=dr {
                let v = &q * &rhs.coeffs[k];
                r[dl - dr + k] -= v;
            }
            r.pop(); // leading term cancelled exactly
            while r.len() > 1 && r.last().map_or(false, Zero::is_zero) {
                r.pop();
            }
            if r.is_empty() {
                r.push(BigRational::zero());
            }
        }
        RatPoly::new(r)
    }

    /// Scales so the leading coefficient has absolute value 1; positive
    /// scaling keeps all sign data intact and tames coefficient growth.
    fn normalized(&self) -> RatPoly {
        if self.is_zero() {
            return self.clone();
        }
        let lead = self.coeffs.last().unwrap().abs();
        RatPoly::new(self.coeffs.iter().map(|c| c / &lead).collect())
    }

    /// Monic gcd via the Euclidean algorithm.
    fn gcd(&self, other: &RatPoly) -> RatPoly {
        let mut a = self.normalized();
        let mut b = other.normalized();
        while !b.is_zero() {
            let r = a.rem(&b).normalized();
            a = b;
            b = r;
        }
        a
    }

    /// Square-free part `self / gcd(self, self')`.
    fn square_free(&self) -> RatPoly {
        let d = self.derivative();
        if d.is_zero() {
            return self.normalized();
        }
        let g = self.gcd(&d);
        if g.degree() == 0 {
            return self.normalized();
        }
        self.div_exact(&g).normalized()
    }

    /// Exact quotient (remainder known to vanish).
    fn div_exact(&self, rhs: &RatPoly) -> RatPoly {
        let mut r = self.coeffs.clone();
        let dr = rhs.degree();
        let lead = rhs.coeffs[dr].clone();
        let mut q = vec![BigRational::zero(); self.coeffs.len().saturating_sub(dr)];
        while r.len() > 1 && r.last().map_or(false, Zero::is_zero) {
            r.pop();
        }
        while r.len() - 1 >= dr && !(r.len() == 1 && r[0].is_zero()) {
            let dl = r.len() - 1;
            let c = &r[dl] / &lead;
            q[dl - dr] = c.clone();
            for k in 0..=dr {
                let v = &c * &rhs.coeffs[k];
                r[dl - dr + k] -= v;
            }
            r.pop();
            while r.len() > 1 && r.last().map_or(false, Zero::is_zero) {
                r.pop();
            }
            if r.is_empty() {
                break;
            }
        }
        RatPoly::new(q)
    }
}

/// Sturm chain of a square-free polynomial.
struct SturmChain {
    chain: Vec<RatPoly>,
}

impl SturmChain {
    fn new(square_free: &RatPoly) -> Self {
        let mut chain = vec![square_free.clone(), square_free.derivative().normalized()];
        loop {
            let k = chain.len();
            if chain[k - 1].is_zero() {
                chain.pop();
                break;
            }
            if chain[k - 1].degree() == 0 {
                break;
            }
            let r = chain[k - 2].rem(&chain[k - 1]);
            if r.is_zero() {
                break;
            }
            // negate, then scale positive
            let neg = RatPoly::zero().sub(&r).normalized();
            chain.push(neg);
        }
        SturmChain { chain }
    }

    /// Number of sign variations of the chain at `x`.
    fn variations(&self, x: &BigRational) -> u32 {
        let mut count = 0;
        let mut last = 0i8;
        for p in &self.chain {
            let v = p.eval(x);
            let s = if v.is_zero() {
                0
            } else if v.is_positive() {
                1
            } else {
                -1
            };
            if s != 0 {
                if last != 0 && s != last {
                    count += 1;
                }
                last = s;
            }
        }
        count
    }

    /// Number of distinct roots in the half-open interval `(a, b]`.
    fn count_roots(&self, a: &BigRational, b: &BigRational) -> u32 {
        self.variations(a).saturating_sub(self.variations(b))
    }
}

/// All distinct real roots of the polynomial with the given `f64`
/// coefficients inside the closed interval `[lo, hi]`, isolated exactly and
/// squeezed to width [`ROOT_WIDTH`]. Returns `None` when the polynomial is
/// identically zero.
pub fn real_roots_in(coeffs: &[f64], lo: f64, hi: f64) -> Option<Vec<f64>> {
    let p = RatPoly::from_f64_coeffs(coeffs);
    real_roots_in_rat(&p, lo, hi)
}

/// [`real_roots_in`] for an already-exact polynomial.
pub fn real_roots_in_rat(p: &RatPoly, lo: f64, hi: f64) -> Option<Vec<f64>> {
    if p.is_zero() {
        return None;
    }
    if p.degree() == 0 {
        return Some(Vec::new());
    }
    let sf = p.square_free();
    let chain = SturmChain::new(&sf);
    let ra = BigRational::from_float(lo).expect("finite lo");
    let rb = BigRational::from_float(hi).expect("finite hi");
    let mut roots = Vec::new();
    if sf.eval(&ra).is_zero() {
        roots.push(lo); // (a, b] misses an exact root at the left endpoint
    }
    let total = chain.count_roots(&ra, &rb);
    let mut stack = vec![(ra, rb, total)];
    let two = BigRational::from(BigInt::from(2));
    while let Some((a, b, count)) = stack.pop() {
        if count == 0 {
            continue;
        }
        let width = (&b - &a).to_f64().unwrap_or(f64::INFINITY);
        if width <= ROOT_WIDTH {
            let mid = (&a + &b) / &two;
            roots.push(mid.to_f64().unwrap());
            continue;
        }
        let mid = (&a + &b) / &two;
        if sf.eval(&mid).is_zero() {
            roots.push(mid.to_f64().unwrap());
        }
        let left = chain.count_roots(&a, &mid);
        let right = count - left;
        if right > 0 {
            stack.push((mid.clone(), b, right));
        }
        if left > 0 {
            // an exact root at mid was already emitted; shrink to keep it out
            if sf.eval(&mid).is_zero() {
                if left > 1 {
                    let eps = BigRational::from_float(ROOT_WIDTH / 4.0).unwrap();
                    stack.push((a, &mid - eps, left - 1));
                }
            } else {
                stack.push((a, mid, left));
            }
        }
    }
    roots.sort_by(|x, y| x.partial_cmp(y).unwrap());
    roots.dedup_by(|x, y| (*x - *y).abs() <= ROOT_WIDTH);
    Some(roots)
}
