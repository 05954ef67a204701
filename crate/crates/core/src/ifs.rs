//! Weighted self-similar iterated function systems on the line: word
//! compositions, cut-sets, contraction-ratio sets, iterated systems, and
//! invariant intervals.

use crate::error::{Error, Result};
use crate::numeric::kahan_sum;

/// Default cap on the number of maps produced by [`iterate`].
pub const DEFAULT_ITERATE_CAP: usize = 1_000_000;

/// Default cap on the number of words materialized by a cut-set expansion.
pub const DEFAULT_CUT_SET_CAP: usize = 10_000_000;

/// An affine contraction of the line, `x ↦ lambda·x + t`.
///
/// A map stored inside a validated [`WeightedIfs`] has `0 < |lambda| < 1`
/// (the sign may be negative). Free-standing values produced by composition
/// may have `lambda = 1` (empty word).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineMap1D {
    pub lambda: f64,
    pub t: f64,
}

impl AffineMap1D {
    pub fn new(lambda: f64, t: f64) -> Self {
        Self { lambda, t }
    }

    pub fn identity() -> Self {
        Self { lambda: 1.0, t: 0.0 }
    }

    #[inline]
    pub fn apply(&self, x: f64) -> f64 {
        self.lambda * x + self.t
    }

    /// `self ∘ other`, i.e. `x ↦ self(other(x))`.
    pub fn compose(&self, other: &AffineMap1D) -> AffineMap1D {
        AffineMap1D {
            lambda: self.lambda * other.lambda,
            t: self.lambda * other.t + self.t,
        }
    }

    /// Fixed point `t / (1 − lambda)`; requires `lambda != 1`.
    pub fn fixed_point(&self) -> f64 {
        self.t / (1.0 - self.lambda)
    }
}

/// A finite word over the map alphabet; indexes into the IFS map list.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Word(pub Vec<usize>);

impl Word {
    pub fn empty() -> Self {
        Word(Vec::new())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Letter counts (multiset signature); the contraction ratio of a word
    /// depends only on this vector.
    pub fn letter_counts(&self, alphabet: usize) -> Vec<u32> {
        let mut counts = vec![0u32; alphabet];
        for &l in &self.0 {
            counts[l] += 1;
        }
        counts
    }
}

/// A cut-set word together with its cached composition data: contraction
/// ratio `lambda_w`, translation `t_w = f_w(0)`, and weight `p_w`.
#[derive(Debug, Clone, PartialEq)]
pub struct CutWord {
    pub word: Word,
    pub ratio: f64,
    pub translation: f64,
    pub weight: f64,
}

impl CutWord {
    pub fn map(&self) -> AffineMap1D {
        AffineMap1D::new(self.ratio, self.translation)
    }
}

/// A self-similar IFS on the line paired with a strictly positive
/// probability vector.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedIfs {
    maps: Vec<AffineMap1D>,
    weights: Vec<f64>,
}

impl WeightedIfs {
    /// Builds and validates. See [`validate`] for the invariants.
    pub fn new(maps: Vec<AffineMap1D>, weights: Vec<f64>) -> Result<Self> {
        let ifs = WeightedIfs { maps, weights };
        validate(&ifs)?;
        Ok(ifs)
    }

    /// Convenience constructor from `(lambda, t)` pairs with uniform weights.
    pub fn uniform(pairs: &[(f64, f64)]) -> Result<Self> {
        let n = pairs.len();
        let maps = pairs.iter().map(|&(l, t)| AffineMap1D::new(l, t)).collect();
        Self::new(maps, vec![1.0 / n as f64; n])
    }

    pub fn maps(&self) -> &[AffineMap1D] {
        &self.maps
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.maps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.maps.is_empty()
    }

    pub fn max_ratio(&self) -> f64 {
        self.maps.iter().map(|m| m.lambda.abs()).fold(0.0, f64::max)
    }

    pub fn min_ratio(&self) -> f64 {
        self.maps.iter().map(|m| m.lambda.abs()).fold(1.0, f64::min)
    }
}

/// Checks the standing assumptions: at least two maps, every ratio strictly
/// inside (0,1) in absolute value, strictly positive weights summing to 1
/// within 1e-12, and at least two distinct fixed points (an IFS whose maps
/// all share one fixed point has a single-point attractor).
pub fn validate(ifs: &WeightedIfs) -> Result<()> {
    if ifs.maps.len() < 2 {
        return Err(Error::DegenerateIfs(format!(
            "need at least 2 maps, got {}",
            ifs.maps.len()
        )));
    }
    for (i, m) in ifs.maps.iter().enumerate() {
        if !m.lambda.is_finite() || !m.t.is_finite() {
            return Err(Error::DegenerateIfs(format!("map {i} has non-finite parameters")));
        }
        let a = m.lambda.abs();
        if !(a > 0.0 && a < 1.0) {
            return Err(Error::NonContraction { index: i, lambda: m.lambda });
        }
    }
    if ifs.weights.len() != ifs.maps.len() {
        return Err(Error::BadWeights(format!(
            "{} weights for {} maps",
            ifs.weights.len(),
            ifs.maps.len()
        )));
    }
    for (i, &w) in ifs.weights.iter().enumerate() {
        if !(w > 0.0) || !w.is_finite() {
            return Err(Error::BadWeights(format!("weight {i} = {w} is not strictly positive")));
        }
    }
    let total = kahan_sum(ifs.weights.iter().copied());
    if (total - 1.0).abs() > 1e-12 {
        return Err(Error::BadWeights(format!("weights sum to {total}, not 1")));
    }
    let first_fp = ifs.maps[0].fixed_point();
    if !ifs.maps[1..].iter().any(|m| m.fixed_point() != first_fp) {
        return Err(Error::DegenerateIfs("all maps share one fixed point".into()));
    }
    Ok(())
}

/// Composes `f_w = f_{w_1} ∘ … ∘ f_{w_k}` and the product weight `p_w`.
/// The empty word gives the identity with weight 1.
pub fn compose(ifs: &WeightedIfs, word: &Word) -> (AffineMap1D, f64) {
    let mut map = AffineMap1D::identity();
    let mut weight = 1.0;
    for &l in &word.0 {
        debug_assert!(l < ifs.len(), "letter out of range");
        map = map.compose(&ifs.maps[l]);
        weight *= ifs.weights[l];
    }
    (map, weight)
}

/// Depth-first cut-set expansion: returns exactly the words whose ratio
/// product first drops below `tau`, in lexicographic word order, with
/// cached (ratio, translation, weight) triples.
pub fn cut_set(ifs: &WeightedIfs, tau: f64) -> Result<Vec<CutWord>> {
    cut_set_with_cap(ifs, tau, DEFAULT_CUT_SET_CAP)
}

/// [`cut_set`] with an explicit cap on the number of emitted words.
pub fn cut_set_with_cap(ifs: &WeightedIfs, tau: f64, cap: usize) -> Result<Vec<CutWord>> {
    if !(tau > 0.0 && tau < 1.0) {
        return Err(Error::TauOutOfRange(tau));
    }
    let mut out = Vec::new();
    let mut stack: Vec<usize> = Vec::new();
    // Frames carry the composed map/weight so leaves need no recomposition.
    fn expand(
        ifs: &WeightedIfs,
        tau: f64,
        cap: usize,
        prefix: AffineMap1D,
        weight: f64,
        stack: &mut Vec<usize>,
        out: &mut Vec<CutWord>,
    ) -> Result<()> {
        for (l, (m, &w)) in ifs.maps.iter().zip(ifs.weights.iter()).enumerate() {
            let next = prefix.compose(m);
            let next_w = weight * w;
            stack.push(l);
            if next.lambda.abs() < tau {
                if out.len() >= cap {
                    return Err(Error::SizeOverflow {
                        what: "cut-set",
                        needed: out.len() as u128 + 1,
                        cap,
                    });
                }
                out.push(CutWord {
                    word: Word(stack.clone()),
                    ratio: next.lambda,
                    translation: next.t,
                    weight: next_w,
                });
            } else {
                expand(ifs, tau, cap, next, next_w, stack, out)?;
            }
            stack.pop();
        }
        Ok(())
    }
    expand(ifs, tau, cap, AffineMap1D::identity(), 1.0, &mut stack, &mut out)?;
    Ok(out)
}

/// The set of distinct contraction ratios `Λ_τ = {lambda_w : w ∈ P_τ}`,
/// deduplicated on the letter-multiset signature (the ratio depends only on
/// how many times each letter occurs, so this is exact even when distinct
/// float products agree to the last bit or differ in rounding).
pub fn contraction_ratio_set(ifs: &WeightedIfs, words: &[CutWord]) -> Vec<f64> {
    let n = ifs.len();
    let mut seen = std::collections::HashSet::new();
    let mut out = Vec::new();
    for cw in words {
        if seen.insert(cw.word.letter_counts(n)) {
            out.push(cw.ratio);
        }
    }
    out.sort_by(|a, b| a.partial_cmp(b).unwrap());
    out.dedup();
    out
}

/// The iterated system `Φ^m`: all `n^m` length-m compositions with product
/// weights, in lexicographic word order.
pub fn iterate(ifs: &WeightedIfs, m: u32) -> Result<WeightedIfs> {
    iterate_with_cap(ifs, m, DEFAULT_ITERATE_CAP)
}

/// [`iterate`] with an explicit size cap.
pub fn iterate_with_cap(ifs: &WeightedIfs, m: u32, cap: usize) -> Result<WeightedIfs> {
    assert!(m >= 1, "iterate requires m >= 1");
    let n = ifs.len() as u128;
    let size = n.checked_pow(m).unwrap_or(u128::MAX);
    if size > cap as u128 {
        return Err(Error::SizeOverflow { what: "iterated IFS", needed: size, cap });
    }
    if m == 1 {
        return Ok(ifs.clone());
    }
    let mut maps = Vec::with_capacity(size as usize);
    let mut weights = Vec::with_capacity(size as usize);
    let mut word = vec![0usize; m as usize];
    loop {
        let (map, w) = compose(ifs, &Word(word.clone()));
        maps.push(map);
        weights.push(w);
        // odometer increment in lexicographic order
        let mut pos = m as usize;
        loop {
            if pos == 0 {
                return WeightedIfs::new(maps, weights);
            }
            pos -= 1;
            word[pos] += 1;
            if word[pos] < ifs.len() {
                break;
            }
            word[pos] = 0;
        }
    }
}

/// Smallest interval `[a,b]` containing all fixed points with
/// `f_i([a,b]) ⊆ [a,b]` for every map, found by iterating the image-hull
/// operator to its fixed point and verifying.
pub fn attractor_interval(ifs: &WeightedIfs) -> (f64, f64) {
    let mut a = f64::INFINITY;
    let mut b = f64::NEG_INFINITY;
    for m in &ifs.maps {
        let fp = m.fixed_point();
        a = a.min(fp);
        b = b.max(fp);
    }
    // hull iteration: growth contracts by max|lambda| per round
    for _ in 0..4096 {
        let mut na = a;
        let mut nb = b;
        for m in &ifs.maps {
            let (u, v) = (m.apply(a), m.apply(b));
            na = na.min(u.min(v));
            nb = nb.max(u.max(v));
        }
        if na >= a && nb <= b {
            break;
        }
        a = na;
        b = nb;
    }
    // nudge outward until the containment check passes bit-for-bit
    let mut pad = (b - a).max(1.0) * 1e-15;
    while !is_invariant(ifs, a, b) {
        a -= pad;
        b += pad;
        pad *= 2.0;
    }
    (a, b)
}

fn is_invariant(ifs: &WeightedIfs, a: f64, b: f64) -> bool {
    ifs.maps.iter().all(|m| {
        let (u, v) = (m.apply(a), m.apply(b));
        u.min(v) >= a && u.max(v) <= b
    })
}
