//! Finite atomic measures in `R^d`: cut-set discretizations, pushforwards to
//! curves, convolutions (exact or grid-coalesced), and the mass functionals
//! (balls, hyperplane slabs) behind Frostman and non-concentration scans.
//!
//! Convolution is the one genuinely heavy kernel here. It accumulates pair
//! sums into sharded hash maps with a fixed chunk layout, so results are
//! bit-identical across runs regardless of thread count or scheduling.

use std::collections::HashMap;
use std::hash::{BuildHasherDefault, Hash, Hasher};

use rand::Rng;
use rayon::prelude::*;

use crate::curve::{evaluate, CurveSpec};
use crate::error::{Error, Result};
use crate::ifs::{cut_set, WeightedIfs, Word};
use crate::numeric::{fit_slope, kahan_sum};

/// Default cap on atoms produced by a convolution.
pub const DEFAULT_ATOM_BUDGET: usize = 10_000_000;

/// Default cap on pair products evaluated by a convolution; guards wall time
/// the way the atom budget guards memory.
pub const DEFAULT_PAIR_BUDGET: u128 = 2_000_000_000;

/// A finite list of weighted atoms in `R^d`. Coordinates are stored
/// flattened with stride `dim`; weights strictly positive.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteMeasure {
    dim: usize,
    coords: Vec<f64>,
    weights: Vec<f64>,
}

impl DiscreteMeasure {
    /// Validating constructor: finite coordinates, strictly positive
    /// weights, total mass 1 within 1e-9.
    pub fn new(dim: usize, coords: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        let m = Self::from_parts(dim, coords, weights)?;
        let total = m.total_mass();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::BadWeights(format!("atom weights sum to {total}, not 1")));
        }
        Ok(m)
    }

    /// Sub-probability tolerant constructor (internal pipelines).
    pub(crate) fn from_parts(dim: usize, coords: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        assert!(dim >= 1);
        if coords.len() != dim * weights.len() {
            return Err(Error::DimMismatch {
                context: "coordinate buffer length",
                got: coords.len(),
                expected: dim * weights.len(),
            });
        }
        if weights.is_empty() {
            return Err(Error::BadWeights("measure needs at least one atom".into()));
        }
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::BadWeights("non-finite atom coordinate".into()));
        }
        if weights.iter().any(|&w| !(w > 0.0) || !w.is_finite()) {
            return Err(Error::BadWeights("atom weights must be strictly positive".into()));
        }
        Ok(DiscreteMeasure { dim, coords, weights })
    }

    /// Point mass at the given location.
    pub fn dirac(point: &[f64]) -> Self {
        DiscreteMeasure { dim: point.len(), coords: point.to_vec(), weights: vec![1.0] }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    #[inline]
    pub fn atom(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    #[inline]
    pub fn weight(&self, i: usize) -> f64 {
        self.weights[i]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[f64], f64)> + '_ {
        (0..self.len()).map(move |i| (self.atom(i), self.weights[i]))
    }

    pub fn total_mass(&self) -> f64 {
        kahan_sum(self.weights.iter().copied())
    }

    /// Per-axis bounding box.
    pub fn bounding_box(&self) -> Vec<(f64, f64)> {
        let mut bb = vec![(f64::INFINITY, f64::NEG_INFINITY); self.dim];
        for i in 0..self.len() {
            for (k, &c) in self.atom(i).iter().enumerate() {
                bb[k].0 = bb[k].0.min(c);
                bb[k].1 = bb[k].1.max(c);
            }
        }
        bb
    }

    /// Copy with atoms sorted lexicographically by coordinates, ties broken
    /// by weight. Useful for canonical comparisons.
    pub fn sorted_by_coords(&self) -> DiscreteMeasure {
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.sort_by(|&a, &b| {
            self.atom(a)
                .iter()
                .zip(self.atom(b))
                .find_map(|(x, y)| match x.partial_cmp(y).unwrap() {
                    std::cmp::Ordering::Equal => None,
                    ord => Some(ord),
                })
                .unwrap_or_else(|| self.weights[a].partial_cmp(&self.weights[b]).unwrap())
        });
        let mut coords = Vec::with_capacity(self.coords.len());
        let mut weights = Vec::with_capacity(self.len());
        for &i in &idx {
            coords.extend_from_slice(self.atom(i));
            weights.push(self.weights[i]);
        }
        DiscreteMeasure { dim: self.dim, coords, weights }
    }

    /// Projection to the first coordinate (atom multiset preserved).
    pub fn first_coordinate(&self) -> DiscreteMeasure {
        DiscreteMeasure {
            dim: 1,
            coords: (0..self.len()).map(|i| self.atom(i)[0]).collect(),
            weights: self.weights.clone(),
        }
    }
}

// ---------------------------------------------------------------------------
// discretization and pushforward
// ---------------------------------------------------------------------------

/// The cut-set discretization: one atom per cut-set word at
/// `t_w = f_w(0)` with weight `p_w`. Atoms at identical coordinates are not
/// merged, so weight totals match the cut-set stationarity exactly.
pub fn discretize(ifs: &WeightedIfs, tau: f64) -> Result<DiscreteMeasure> {
    let words = cut_set(ifs, tau)?;
    let coords: Vec<f64> = words.iter().map(|w| w.translation).collect();
    let weights: Vec<f64> = words.iter().map(|w| w.weight).collect();
    DiscreteMeasure::from_parts(1, coords, weights)
}

/// Uniform-depth discretization: one atom per length-`depth` word.
pub fn discretize_depth(ifs: &WeightedIfs, depth: u32) -> Result<DiscreteMeasure> {
    let n = ifs.len() as u128;
    let size = n.checked_pow(depth).unwrap_or(u128::MAX);
    if size > DEFAULT_ATOM_BUDGET as u128 {
        return Err(Error::SizeOverflow {
            what: "uniform-depth discretization",
            needed: size,
            cap: DEFAULT_ATOM_BUDGET,
        });
    }
    let mut coords = Vec::with_capacity(size as usize);
    let mut weights = Vec::with_capacity(size as usize);
    let mut word = vec![0usize; depth as usize];
    loop {
        let (map, w) = crate::ifs::compose(ifs, &Word(word.clone()));
        coords.push(map.t);
        weights.push(w);
        let mut pos = depth as usize;
        loop {
            if pos == 0 {
                return DiscreteMeasure::from_parts(1, coords, weights);
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

/// Pushes a dim-1 measure through a curve: atom `x` goes to `Q(x)`.
pub fn pushforward(mu: &DiscreteMeasure, curve: &CurveSpec) -> Result<DiscreteMeasure> {
    if mu.dim() != 1 {
        return Err(Error::DimMismatch { context: "pushforward source", got: mu.dim(), expected: 1 });
    }
    let d = curve.ambient_dim();
    let (lo, hi) = curve.domain();
    let mut coords = Vec::with_capacity(mu.len() * d);
    for i in 0..mu.len() {
        let x = mu.atom(i)[0];
        if !curve.contains(x) {
            return Err(Error::DomainViolation { index: i, value: x, lo, hi });
        }
        coords.extend(evaluate(curve, x)?);
    }
    DiscreteMeasure::from_parts(d, coords, mu.weights.clone())
}

// ---------------------------------------------------------------------------
// convolution
// ---------------------------------------------------------------------------

/// Knobs for [`convolve_with`]. `coalesce_width = 0` merges only
/// bit-identical coordinates; a positive width snaps sums to the lattice
/// `width·Z^d` (nearest point, so each atom moves at most `width/2` per
/// coordinate).
#[derive(Debug, Clone, Copy)]
pub struct ConvolveOptions {
    pub coalesce_width: f64,
    pub atom_budget: usize,
    pub pair_budget: u128,
}

impl Default for ConvolveOptions {
    fn default() -> Self {
        ConvolveOptions {
            coalesce_width: 0.0,
            atom_budget: DEFAULT_ATOM_BUDGET,
            pair_budget: DEFAULT_PAIR_BUDGET,
        }
    }
}

/// Deterministic FxHash-style hasher (no per-map random state, so map
/// iteration order is reproducible run to run).
#[derive(Default)]
pub(crate) struct FxHasher {
    hash: u64,
}

impl Hasher for FxHasher {
    #[inline]
    fn write(&mut self, bytes: &[u8]) {
        for chunk in bytes.chunks(8) {
            let mut buf = [0u8; 8];
            buf[..chunk.len()].copy_from_slice(chunk);
            self.hash = (self.hash.rotate_left(5) ^ u64::from_le_bytes(buf))
                .wrapping_mul(0x517c_c1b7_2722_0a95);
        }
    }

    #[inline]
    fn finish(&self) -> u64 {
        self.hash
    }
}

pub(crate) type FxBuild = BuildHasherDefault<FxHasher>;
pub(crate) type FxMap<K, V> = HashMap<K, V, FxBuild>;

trait AtomKey: Hash + Eq + Clone + Send + Sync {
    /// Deterministic shard assignment for parallel merges.
    fn shard(&self, shards: usize) -> usize;
}

impl AtomKey for u64 {
    fn shard(&self, shards: usize) -> usize {
        (*self as usize) & (shards - 1)
    }
}

impl AtomKey for u128 {
    fn shard(&self, shards: usize) -> usize {
        (*self as u64 as usize) & (shards - 1)
    }
}

impl AtomKey for Vec<u64> {
    fn shard(&self, shards: usize) -> usize {
        (self[0] as usize) & (shards - 1)
    }
}

#[derive(Clone, Copy)]
enum Snap {
    Exact,
    Lattice(f64),
}

impl Snap {
    #[inline]
    fn code(&self, x: f64) -> u64 {
        match self {
            Snap::Exact => {
                // normalize -0.0 so it merges with +0.0
                let x = if x == 0.0 { 0.0 } else { x };
                x.to_bits()
            }
            Snap::Lattice(w) => ((x / w).round() as i64) as u64,
        }
    }

    #[inline]
    fn decode(&self, code: u64) -> f64 {
        match self {
            Snap::Exact => f64::from_bits(code),
            Snap::Lattice(w) => (code as i64) as f64 * w,
        }
    }
}

const SHARDS: usize = 32;
const CHUNK_PAIRS: usize = 1 << 16;
const BATCH_CHUNKS: usize = 64;

/// Euclidean convolution of two equal-dimension measures with default
/// options (exact-coordinate merging, default budgets).
pub fn convolve(a: &DiscreteMeasure, b: &DiscreteMeasure) -> Result<DiscreteMeasure> {
    convolve_with(a, b, ConvolveOptions::default())
}

/// Euclidean convolution: atoms `x_i + y_j` with weights `w_i·v_j`, merged
/// per [`ConvolveOptions`]. Output atoms are sorted lexicographically by
/// coordinates; weight accumulation order is fixed, so the result is
/// bit-identical across runs.
pub fn convolve_with(
    a: &DiscreteMeasure,
    b: &DiscreteMeasure,
    opts: ConvolveOptions,
) -> Result<DiscreteMeasure> {
    if a.dim() != b.dim() {
        return Err(Error::DimMismatch { context: "convolution operands", got: b.dim(), expected: a.dim() });
    }
    let pairs = a.len() as u128 * b.len() as u128;
    if pairs > opts.pair_budget {
        return Err(Error::AtomBudgetExceeded { budget: opts.atom_budget });
    }
    let snap = if opts.coalesce_width > 0.0 {
        Snap::Lattice(opts.coalesce_width)
    } else {
        Snap::Exact
    };
    match a.dim() {
        1 => convolve_kernel::<u64>(a, b, snap, opts.atom_budget, |sum, s| s.code(sum[0]), |k, s, out| {
            out.push(s.decode(*k));
        }),
        2 => convolve_kernel::<u128>(
            a,
            b,
            snap,
            opts.atom_budget,
            |sum, s| ((s.code(sum[0]) as u128) << 64) | s.code(sum[1]) as u128,
            |k, s, out| {
                out.push(s.decode((*k >> 64) as u64));
                out.push(s.decode(*k as u64));
            },
        ),
        _ => convolve_kernel::<Vec<u64>>(
            a,
            b,
            snap,
            opts.atom_budget,
            |sum, s| sum.iter().map(|&x| s.code(x)).collect(),
            |k, s, out| out.extend(k.iter().map(|&c| s.decode(c))),
        ),
    }
}

fn convolve_kernel<K: AtomKey>(
    a: &DiscreteMeasure,
    b: &DiscreteMeasure,
    snap: Snap,
    atom_budget: usize,
    encode: impl Fn(&[f64], &Snap) -> K + Send + Sync,
    decode: impl Fn(&K, &Snap, &mut Vec<f64>),
) -> Result<DiscreteMeasure> {
    let d = a.dim();
    let chunk_len = (CHUNK_PAIRS / b.len().max(1)).max(1);
    let ranges: Vec<(usize, usize)> = (0..a.len())
        .step_by(chunk_len)
        .map(|s| (s, (s + chunk_len).min(a.len())))
        .collect();
    let mut globals: Vec<FxMap<K, f64>> = (0..SHARDS).map(|_| FxMap::default()).collect();
    for batch in ranges.chunks(BATCH_CHUNKS) {
        let locals: Vec<Vec<FxMap<K, f64>>> = batch
            .par_iter()
            .map(|&(start, end)| {
                let mut sharded: Vec<FxMap<K, f64>> =
                    (0..SHARDS).map(|_| FxMap::default()).collect();
                let mut sum = vec![0.0f64; d];
                for i in start..end {
                    let ai = a.atom(i);
                    let wi = a.weight(i);
                    for j in 0..b.len() {
                        let bj = b.atom(j);
                        for k in 0..d {
                            sum[k] = ai[k] + bj[k];
                        }
                        let key = encode(&sum, &snap);
                        let s = key.shard(SHARDS);
                        *sharded[s].entry(key).or_insert(0.0) += wi * b.weight(j);
                    }
                }
                sharded
            })
            .collect();
        // transpose chunk→shard so each shard merges its chunks in order
        let mut by_shard: Vec<Vec<FxMap<K, f64>>> = (0..SHARDS).map(|_| Vec::new()).collect();
        for mut chunk_maps in locals {
            for s in (0..SHARDS).rev() {
                by_shard[s].push(chunk_maps.pop().expect("shard count"));
            }
        }
        globals
            .par_iter_mut()
            .zip(by_shard.into_par_iter())
            .for_each(|(global, chunk_maps)| {
                for m in chunk_maps {
                    for (k, w) in m {
                        *global.entry(k).or_insert(0.0) += w;
                    }
                }
            });
        let total: usize = globals.iter().map(HashMap::len).sum();
        if total > atom_budget {
            return Err(Error::AtomBudgetExceeded { budget: atom_budget });
        }
    }
    // canonical output order: sort by decoded coordinates
    let mut entries: Vec<(Vec<f64>, f64)> = Vec::new();
    let mut buf = Vec::with_capacity(d);
    for global in globals {
        let mut shard_entries: Vec<(K, f64)> = global.into_iter().collect();
        // iteration order inside one shard is deterministic but not sorted
        shard_entries.sort_by(|(x, _), (y, _)| {
            let mut bx = Vec::with_capacity(d);
            let mut by = Vec::with_capacity(d);
            decode(x, &snap, &mut bx);
            decode(y, &snap, &mut by);
            bx.partial_cmp(&by).unwrap()
        });
        for (k, w) in shard_entries {
            buf.clear();
            decode(&k, &snap, &mut buf);
            entries.push((buf.clone(), w));
        }
    }
    entries.sort_by(|(x, _), (y, _)| x.partial_cmp(y).unwrap());
    let mut coords = Vec::with_capacity(entries.len() * d);
    let mut weights = Vec::with_capacity(entries.len());
    for (c, w) in entries {
        coords.extend_from_slice(&c);
        weights.push(w);
    }
    DiscreteMeasure::from_parts(d, coords, weights)
}

/// Snaps every atom of a measure to the lattice `width·Z^d`, merging
/// collisions.
pub fn coalesce(m: &DiscreteMeasure, width: f64, atom_budget: usize) -> Result<DiscreteMeasure> {
    assert!(width > 0.0);
    let origin = DiscreteMeasure::dirac(&vec![0.0; m.dim()]);
    convolve_with(
        m,
        &origin,
        ConvolveOptions { coalesce_width: width, atom_budget, pair_budget: u128::MAX },
    )
}

/// The p-fold self-convolution by iterated [`convolve_with`]; `p = 1`
/// returns a copy.
pub fn convolution_power(
    a: &DiscreteMeasure,
    p: u32,
    opts: ConvolveOptions,
) -> Result<DiscreteMeasure> {
    assert!(p >= 1, "convolution power requires p >= 1");
    let mut acc = a.clone();
    for _ in 1..p {
        acc = convolve_with(&acc, a, opts)?;
    }
    Ok(acc)
}

/// The p-fold self-convolution by exponentiation-by-squaring with every
/// intermediate snapped to the coalescing lattice; equivalent to
/// [`convolution_power`] up to lattice displacement (at most
/// `ceil(log2 p)+1` half-widths per coordinate), but with far smaller pair
/// counts for p ≥ 3.
pub fn convolution_power_coalesced(
    a: &DiscreteMeasure,
    p: u32,
    opts: ConvolveOptions,
) -> Result<DiscreteMeasure> {
    assert!(p >= 1, "convolution power requires p >= 1");
    assert!(opts.coalesce_width > 0.0, "needs a positive coalescing width");
    if p == 1 {
        return Ok(a.clone());
    }
    let mut acc: Option<DiscreteMeasure> = None;
    let mut sq = coalesce(a, opts.coalesce_width, opts.atom_budget)?;
    let mut rest = p;
    loop {
        if rest & 1 == 1 {
            acc = Some(match acc {
                None => sq.clone(),
                Some(m) => convolve_with(&m, &sq, opts)?,
            });
        }
        rest >>= 1;
        if rest == 0 {
            break;
        }
        sq = convolve_with(&sq, &sq, opts)?;
    }
    Ok(acc.expect("p >= 1"))
}

// ---------------------------------------------------------------------------
// mass functionals
// ---------------------------------------------------------------------------

/// Mass of the closed max-norm ball `‖x − center‖_∞ ≤ r`.
pub fn ball_mass(m: &DiscreteMeasure, center: &[f64], r: f64) -> f64 {
    assert_eq!(center.len(), m.dim(), "center dimension");
    assert!(r > 0.0);
    let mut total = 0.0;
    for i in 0..m.len() {
        let inside = m
            .atom(i)
            .iter()
            .zip(center)
            .all(|(x, c)| (x - c).abs() <= r);
        if inside {
            total += m.weight(i);
        }
    }
    total
}

/// Per-radius table and fitted exponent from [`frostman_fit`].
#[derive(Debug, Clone)]
pub struct FrostmanFit {
    /// Least-squares slope of `log max-ball-mass` against `log r`.
    pub exponent: f64,
    /// `(r, max over atom-centered balls of ball_mass)` per radius.
    pub table: Vec<(f64, f64)>,
}

/// Estimates the Frostman exponent: for each radius the worst (largest)
/// closed-ball mass over atom-centered balls, then the log-log slope.
/// Radii must be strictly decreasing and stay above the discretization
/// floor (callers' responsibility; `tau^0.5` is the documented default).
pub fn frostman_fit(m: &DiscreteMeasure, radii: &[f64]) -> Result<FrostmanFit> {
    if radii.len() < 3 {
        return Err(Error::InsufficientScales { got: radii.len(), min: 3 });
    }
    if !radii.windows(2).all(|w| w[0] > w[1]) {
        return Err(Error::InsufficientScales { got: radii.len(), min: 3 });
    }
    let table: Vec<(f64, f64)> = if m.dim() == 1 {
        // sort once, then each ball is a contiguous window
        let mut order: Vec<usize> = (0..m.len()).collect();
        order.sort_by(|&i, &j| m.atom(i)[0].partial_cmp(&m.atom(j)[0]).unwrap());
        let xs: Vec<f64> = order.iter().map(|&i| m.atom(i)[0]).collect();
        let mut prefix = Vec::with_capacity(m.len() + 1);
        prefix.push(0.0);
        let mut run = 0.0;
        for &i in &order {
            run += m.weight(i);
            prefix.push(run);
        }
        radii
            .iter()
            .map(|&r| {
                let mut best = 0.0f64;
                for (k, &x) in xs.iter().enumerate() {
                    let lo = xs.partition_point(|&y| y < x - r);
                    let hi = xs.partition_point(|&y| y <= x + r);
                    let mass = prefix[hi] - prefix[lo];
                    if mass > best {
                        best = mass;
                    }
                    let _ = k;
                }
                (r, best)
            })
            .collect()
    } else {
        radii
            .iter()
            .map(|&r| {
                let best = (0..m.len())
                    .into_par_iter()
                    .map(|i| ball_mass(m, m.atom(i), r))
                    .reduce(|| 0.0, f64::max);
                (r, best)
            })
            .collect()
    };
    let xs: Vec<f64> = table.iter().map(|(r, _)| r.ln()).collect();
    let ys: Vec<f64> = table.iter().map(|(_, v)| v.max(f64::MIN_POSITIVE).ln()).collect();
    Ok(FrostmanFit { exponent: fit_slope(&xs, &ys), table })
}

/// An affine hyperplane `{x : ⟨normal, x⟩ = offset}` with Euclidean-unit
/// normal.
#[derive(Debug, Clone, PartialEq)]
pub struct Hyperplane {
    normal: Vec<f64>,
    offset: f64,
}

impl Hyperplane {
    pub fn new(normal: Vec<f64>, offset: f64) -> Result<Self> {
        let norm = normal.iter().map(|x| x * x).sum::<f64>().sqrt();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::BadWeights("hyperplane normal must be nonzero".into()));
        }
        Ok(Hyperplane { normal: normal.into_iter().map(|x| x / norm).collect(), offset: offset / norm })
    }

    pub fn normal(&self) -> &[f64] {
        &self.normal
    }

    pub fn offset(&self) -> f64 {
        self.offset
    }

    /// Hyperplane through `d` points in `R^d` (normal from the nullspace of
    /// the difference matrix). `None` when the points are affinely
    /// degenerate enough that no stable normal exists.
    pub fn through_points(points: &[&[f64]]) -> Option<Hyperplane> {
        let d = points.first()?.len();
        if points.len() != d {
            return None;
        }
        if d == 2 {
            let (p, q) = (points[0], points[1]);
            let dir = [q[0] - p[0], q[1] - p[1]];
            let normal = vec![-dir[1], dir[0]];
            let h = Hyperplane::new(normal, 0.0).ok()?;
            let offset = h.normal[0] * p[0] + h.normal[1] * p[1];
            return Some(Hyperplane { normal: h.normal, offset });
        }
        let mut diff = nalgebra::DMatrix::zeros(d - 1, d);
        for r in 1..d {
            for c in 0..d {
                diff[(r - 1, c)] = points[r][c] - points[0][c];
            }
        }
        let svd = diff.svd(false, true);
        let v_t = svd.v_t?;
        let normal: Vec<f64> = (0..d).map(|c| v_t[(d - 1, c)]).collect();
        let h = Hyperplane::new(normal, 0.0).ok()?;
        let offset = h.normal.iter().zip(points[0]).map(|(n, x)| n * x).sum();
        Some(Hyperplane { normal: h.normal, offset })
    }
}

/// Mass of the open slab `|⟨normal, x⟩ − offset| < eps`.
pub fn slab_mass(m: &DiscreteMeasure, w: &Hyperplane, eps: f64) -> Result<f64> {
    if m.dim() < 2 {
        return Err(Error::DimMismatch { context: "slab mass measure", got: m.dim(), expected: 2 });
    }
    if w.normal.len() != m.dim() {
        return Err(Error::DimMismatch {
            context: "slab normal",
            got: w.normal.len(),
            expected: m.dim(),
        });
    }
    assert!(eps > 0.0);
    let mut total = 0.0;
    for i in 0..m.len() {
        let proj: f64 = m.atom(i).iter().zip(&w.normal).map(|(x, n)| x * n).sum();
        if (proj - w.offset).abs() < eps {
            total += m.weight(i);
        }
    }
    Ok(total)
}

/// Output of [`nonconcentration_sweep`].
#[derive(Debug, Clone)]
pub struct NonconcentrationReport {
    /// Log-log slope of worst slab mass against eps (a heuristic lower
    /// bound for the sup over all hyperplanes, labeled as such).
    pub beta: f64,
    /// `(eps, worst slab mass over candidates)` per eps.
    pub table: Vec<(f64, f64)>,
}

/// Worst slab mass per eps over a candidate family: hyperplanes through
/// consecutive atom d-tuples in first-coordinate order (near-tangent
/// candidates), `trials` random atom d-tuples, and `trials` random
/// hyperplanes anchored at random atoms. The sup over all hyperplanes is
/// only bounded below by this heuristic.
pub fn nonconcentration_sweep<R: Rng>(
    m: &DiscreteMeasure,
    eps_list: &[f64],
    trials: usize,
    rng: &mut R,
) -> Result<NonconcentrationReport> {
    let d = m.dim();
    if d < 2 {
        return Err(Error::DimMismatch { context: "non-concentration measure", got: d, expected: 2 });
    }
    let mut candidates: Vec<Hyperplane> = Vec::new();
    let mut order: Vec<usize> = (0..m.len()).collect();
    order.sort_by(|&i, &j| m.atom(i)[0].partial_cmp(&m.atom(j)[0]).unwrap());
    for win in order.windows(d) {
        let pts: Vec<&[f64]> = win.iter().map(|&i| m.atom(i)).collect();
        if let Some(h) = Hyperplane::through_points(&pts) {
            candidates.push(h);
        }
    }
    for _ in 0..trials {
        let pts: Vec<&[f64]> = (0..d).map(|_| m.atom(rng.random_range(0..m.len()))).collect();
        if let Some(h) = Hyperplane::through_points(&pts) {
            candidates.push(h);
        }
    }
    for _ in 0..trials {
        let normal = random_unit_vector(d, rng);
        let anchor = m.atom(rng.random_range(0..m.len()));
        let offset = normal.iter().zip(anchor).map(|(n, x)| n * x).sum();
        candidates.push(Hyperplane { normal, offset });
    }
    let mut table = Vec::with_capacity(eps_list.len());
    for &eps in eps_list {
        let worst = candidates
            .par_iter()
            .map(|h| slab_mass(m, h, eps).expect("dims checked"))
            .reduce(|| 0.0, f64::max);
        table.push((eps, worst));
    }
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for &(eps, worst) in &table {
        if worst > 0.0 {
            xs.push(eps.ln());
            ys.push(worst.ln());
        }
    }
    Ok(NonconcentrationReport { beta: fit_slope(&xs, &ys), table })
}

/// Max deviation between two measures viewed as weighted atom sets: both
/// are sorted by coordinates, then coordinates and weights are compared
/// entrywise. `None` when the shapes differ.
pub fn atom_set_distance(a: &DiscreteMeasure, b: &DiscreteMeasure) -> Option<f64> {
    if a.dim() != b.dim() || a.len() != b.len() {
        return None;
    }
    let (sa, sb) = (a.sorted_by_coords(), b.sorted_by_coords());
    let mut worst = 0.0f64;
    for i in 0..sa.len() {
        for (x, y) in sa.atom(i).iter().zip(sb.atom(i)) {
            worst = worst.max((x - y).abs());
        }
        worst = worst.max((sa.weight(i) - sb.weight(i)).abs());
    }
    Some(worst)
}

fn random_unit_vector<R: Rng>(d: usize, rng: &mut R) -> Vec<f64> {
    loop {
        let mut v: Vec<f64> = Vec::with_capacity(d);
        while v.len() < d {
            // Box-Muller from two uniforms
            let u1: f64 = rng.random::<f64>().max(1e-300);
            let u2: f64 = rng.random();
            let r = (-2.0 * u1.ln()).sqrt();
            let (s, c) = (std::f64::consts::TAU * u2).sin_cos();
            v.push(r * c);
            if v.len() < d {
                v.push(r * s);
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-9 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

// ---------------------------------------------------------------------------
// serialization
// ---------------------------------------------------------------------------

/// 17-significant-digit decimal rendering (exact f64 round trip).
pub fn fmt_f64(x: f64) -> String {
    format!("{:.16e}", x)
}

/// CSV serialization: a `dim,n_atoms` header line, the two counts, then one
/// `x_1,…,x_d,weight` row per atom.
pub fn to_csv(m: &DiscreteMeasure) -> String {
    let mut out = String::new();
    out.push_str("dim,n_atoms\n");
    out.push_str(&format!("{},{}\n", m.dim(), m.len()));
    for i in 0..m.len() {
        for c in m.atom(i) {
            out.push_str(&fmt_f64(*c));
            out.push(',');
        }
        out.push_str(&fmt_f64(m.weight(i)));
        out.push('\n');
    }
    out
}

/// Parses [`to_csv`] output, re-validating all measure invariants.
pub fn from_csv(text: &str) -> Result<DiscreteMeasure> {
    let bad = |msg: &str| Error::BadWeights(format!("measure csv: {msg}"));
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim() == "dim,n_atoms" => {}
        _ => return Err(bad("missing dim,n_atoms header")),
    }
    let counts = lines.next().ok_or_else(|| bad("missing counts line"))?;
    let mut it = counts.split(',');
    let dim: usize = it
        .next()
        .and_then(|s| s.trim().parse().ok())
        .ok_or_else(|| bad("bad dim"))?;
    let n: usize = it
        .next()
        .and_then(|s| s.trim().parse().ok())
        .ok_or_else(|| bad("bad atom count"))?;
    let mut coords = Vec::with_capacity(dim * n);
    let mut weights = Vec::with_capacity(n);
    for line in lines {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != dim + 1 {
            return Err(bad(&format!("row has {} fields, expected {}", fields.len(), dim + 1)));
        }
        for f in &fields[..dim] {
            coords.push(f.trim().parse::<f64>().map_err(|_| bad("bad coordinate"))?);
        }
        weights.push(fields[dim].trim().parse::<f64>().map_err(|_| bad("bad weight"))?);
    }
    if weights.len() != n {
        return Err(bad(&format!("expected {n} rows, got {}", weights.len())));
    }
    DiscreteMeasure::new(dim, coords, weights)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::poly::Poly;

    fn dyadic() -> WeightedIfs {
        WeightedIfs::uniform(&[(0.5, 0.0), (0.5, 0.5)]).unwrap()
    }

    fn quarter_uniform() -> DiscreteMeasure {
        DiscreteMeasure::new(1, vec![0.0, 0.25, 0.5, 0.75], vec![0.25; 4]).unwrap()
    }

    #[test]
    fn discretize_dyadic() {
        let m = discretize(&dyadic(), 0.3).unwrap();
        assert_eq!(m.sorted_by_coords(), quarter_uniform());
    }

    #[test]
    fn discretize_large_tau_single_letters() {
        let ifs = WeightedIfs::new(
            vec![
                crate::ifs::AffineMap1D::new(0.5, 0.0),
                crate::ifs::AffineMap1D::new(1.0 / 3.0, 2.0 / 3.0),
            ],
            vec![0.3, 0.7],
        )
        .unwrap();
        let m = discretize(&ifs, 0.9).unwrap();
        assert_eq!(m.len(), 2);
        assert_eq!(m.atom(0), &[0.0]);
        assert_eq!(m.atom(1), &[2.0 / 3.0]);
        assert_eq!(m.weights(), &[0.3, 0.7]);
    }

    #[test]
    fn discretize_middle_thirds() {
        let ifs = WeightedIfs::uniform(&[(1.0 / 3.0, 0.0), (1.0 / 3.0, 2.0 / 3.0)]).unwrap();
        let m = discretize(&ifs, 0.2).unwrap().sorted_by_coords();
        let expect = [0.0, 2.0 / 9.0, 2.0 / 3.0, 8.0 / 9.0];
        assert_eq!(m.len(), 4);
        for (i, e) in expect.iter().enumerate() {
            assert!((m.atom(i)[0] - e).abs() < 1e-15);
            assert_eq!(m.weight(i), 0.25);
        }
    }

    #[test]
    fn pushforward_parabola() {
        let v2 = CurveSpec::moment(2, (-0.05, 1.05));
        let nu = pushforward(&quarter_uniform(), &v2).unwrap();
        let expect = [(0.0, 0.0), (0.25, 0.0625), (0.5, 0.25), (0.75, 0.5625)];
        for (i, (x, y)) in expect.iter().enumerate() {
            assert_eq!(nu.atom(i), &[*x, *y]);
        }
    }

    #[test]
    fn pushforward_domain_violation_names_atom() {
        let v2 = CurveSpec::moment(2, (0.0, 0.6));
        match pushforward(&quarter_uniform(), &v2) {
            Err(Error::DomainViolation { index, value, .. }) => {
                assert_eq!(index, 3);
                assert_eq!(value, 0.75);
            }
            other => panic!("expected DomainViolation, got {other:?}"),
        }
    }

    #[test]
    fn pushforward_then_projection_recovers_source() {
        let g = CurveSpec::graph(vec![Poly::new(vec![1.0, -2.0, 0.5])], (-0.1, 1.1));
        let mu = discretize(&dyadic(), 0.1).unwrap();
        let nu = pushforward(&mu, &g).unwrap();
        assert_eq!(nu.first_coordinate(), mu);
    }

    #[test]
    fn convolve_diracs() {
        let a = DiscreteMeasure::dirac(&[1.5]);
        let b = DiscreteMeasure::dirac(&[-0.25]);
        let c = convolve(&a, &b).unwrap();
        assert_eq!(c.len(), 1);
        assert_eq!(c.atom(0), &[1.25]);
        assert_eq!(c.weight(0), 1.0);
    }

    #[test]
    fn convolve_binomial() {
        let a = DiscreteMeasure::new(1, vec![0.0, 0.5], vec![0.5, 0.5]).unwrap();
        let c = convolve(&a, &a).unwrap();
        assert_eq!(c.coords(), &[0.0, 0.5, 1.0]);
        assert_eq!(c.weights(), &[0.25, 0.5, 0.25]);
    }

    #[test]
    fn convolve_seven_sums() {
        let a = quarter_uniform();
        let c = convolve(&a, &a).unwrap();
        assert_eq!(c.len(), 7);
        let expect_w: Vec<f64> = [1.0, 2.0, 3.0, 4.0, 3.0, 2.0, 1.0]
            .iter()
            .map(|w| w / 16.0)
            .collect();
        let expect_x: Vec<f64> = (0..7).map(|k| k as f64 * 0.25).collect();
        assert_eq!(c.coords(), expect_x.as_slice());
        assert_eq!(c.weights(), expect_w.as_slice());
    }

    #[test]
    fn convolve_dim_mismatch() {
        let a = DiscreteMeasure::dirac(&[0.0]);
        let b = DiscreteMeasure::dirac(&[0.0, 0.0]);
        assert!(matches!(convolve(&a, &b), Err(Error::DimMismatch { .. })));
    }

    #[test]
    fn convolve_budget_exceeded() {
        let a = quarter_uniform();
        let opts = ConvolveOptions { atom_budget: 3, ..Default::default() };
        assert!(matches!(
            convolve_with(&a, &a, opts),
            Err(Error::AtomBudgetExceeded { budget: 3 })
        ));
    }

    #[test]
    fn convolution_power_matches_direct() {
        let a = DiscreteMeasure::new(1, vec![0.0, 0.5], vec![0.5, 0.5]).unwrap();
        let direct = convolve(&a, &a).unwrap();
        let power = convolution_power(&a, 2, ConvolveOptions::default()).unwrap();
        assert_eq!(direct, power);
        let one = convolution_power(&a, 1, ConvolveOptions::default()).unwrap();
        assert_eq!(one, a);
    }

    #[test]
    fn convolution_power_dirac_translates() {
        let d = DiscreteMeasure::dirac(&[0.5, -1.0]);
        let p3 = convolution_power(&d, 3, ConvolveOptions::default()).unwrap();
        assert_eq!(p3.len(), 1);
        assert_eq!(p3.atom(0), &[1.5, -3.0]);
    }

    #[test]
    fn coalesced_power_matches_plain_on_lattice_data() {
        // atoms already on the 2^-4 lattice: snapping is a no-op
        let a = quarter_uniform();
        let opts = ConvolveOptions { coalesce_width: 0.0625, ..Default::default() };
        let plain = convolution_power(&a, 4, ConvolveOptions::default()).unwrap();
        let fast = convolution_power_coalesced(&a, 4, opts).unwrap();
        assert_eq!(plain.len(), fast.len());
        for i in 0..plain.len() {
            assert!((plain.atom(i)[0] - fast.atom(i)[0]).abs() < 1e-12);
            assert!((plain.weight(i) - fast.weight(i)).abs() < 1e-12);
        }
    }

    #[test]
    fn ball_mass_examples() {
        let m = quarter_uniform();
        assert_eq!(ball_mass(&DiscreteMeasure::dirac(&[0.0]), &[0.0], 0.5), 1.0);
        assert_eq!(ball_mass(&m, &[0.0], 0.3), 0.5);
        assert_eq!(ball_mass(&m, &[0.5], 0.05), 0.25);
    }

    #[test]
    fn ball_mass_monotone_in_radius() {
        let m = quarter_uniform();
        let mut last = 0.0;
        for k in 1..=20 {
            let mass = ball_mass(&m, &[0.3], k as f64 * 0.05);
            assert!(mass >= last);
            last = mass;
        }
    }

    #[test]
    fn slab_mass_examples() {
        let v2 = CurveSpec::moment(2, (-0.05, 1.05));
        let nu = pushforward(&quarter_uniform(), &v2).unwrap();
        let w = Hyperplane::new(vec![0.0, 1.0], 0.0).unwrap();
        assert_eq!(slab_mass(&nu, &w, 0.01).unwrap(), 0.25);
        let w2 = Hyperplane::new(vec![1.0, 0.0], 0.37).unwrap();
        assert_eq!(slab_mass(&nu, &w2, 0.01).unwrap(), 0.0);
        let origin = DiscreteMeasure::dirac(&[0.0, 0.0]);
        let w3 = Hyperplane::new(vec![1.0, 0.0], 0.0).unwrap();
        assert_eq!(slab_mass(&origin, &w3, 1e-9).unwrap(), 1.0);
    }

    #[test]
    fn slab_mass_rejects_dim1() {
        let m = quarter_uniform();
        let w = Hyperplane::new(vec![1.0, 0.0], 0.0).unwrap();
        assert!(matches!(slab_mass(&m, &w, 0.1), Err(Error::DimMismatch { .. })));
    }

    #[test]
    fn frostman_dirac_is_flat() {
        let m = DiscreteMeasure::dirac(&[0.3]);
        let radii: Vec<f64> = (2..=8).map(|k| 2f64.powi(-k)).collect();
        let fit = frostman_fit(&m, &radii).unwrap();
        assert!(fit.exponent.abs() < 0.05, "exponent {}", fit.exponent);
    }

    #[test]
    fn frostman_lebesgue_like() {
        let m = discretize(&dyadic(), 2f64.powi(-12)).unwrap();
        let radii: Vec<f64> = (2..=8).map(|k| 2f64.powi(-k)).collect();
        let fit = frostman_fit(&m, &radii).unwrap();
        assert!((fit.exponent - 1.0).abs() < 0.1, "exponent {}", fit.exponent);
    }

    #[test]
    fn frostman_triadic_cantor() {
        let ifs = WeightedIfs::uniform(&[(1.0 / 3.0, 0.0), (1.0 / 3.0, 2.0 / 3.0)]).unwrap();
        let m = discretize(&ifs, 3f64.powi(-8)).unwrap();
        let radii: Vec<f64> = (2..=6).map(|k| 3f64.powi(-k)).collect();
        let fit = frostman_fit(&m, &radii).unwrap();
        let expect = 2f64.ln() / 3f64.ln();
        assert!((fit.exponent - expect).abs() < 0.05, "exponent {}", fit.exponent);
        // masses are exactly 2^-k at radius 3^-k
        for (i, &(_, mass)) in fit.table.iter().enumerate() {
            assert_eq!(mass, 2f64.powi(-(i as i32 + 2)));
        }
    }

    #[test]
    fn frostman_requires_three_scales() {
        let m = DiscreteMeasure::dirac(&[0.0]);
        assert!(matches!(
            frostman_fit(&m, &[0.5, 0.25]),
            Err(Error::InsufficientScales { .. })
        ));
    }

    #[test]
    fn nonconcentration_line_is_flat() {
        let line = CurveSpec::graph(vec![Poly::zero()], (-0.05, 1.05));
        let nu = pushforward(&discretize(&dyadic(), 2f64.powi(-6)).unwrap(), &line).unwrap();
        let eps: Vec<f64> = (1..=6).map(|k| 2f64.powi(-k)).collect();
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let rep = nonconcentration_sweep(&nu, &eps, 16, &mut rng).unwrap();
        for &(_, worst) in &rep.table {
            assert_eq!(worst, 1.0);
        }
        assert!(rep.beta.abs() < 1e-12);
    }

    #[test]
    fn csv_round_trip() {
        let v2 = CurveSpec::moment(2, (-0.05, 1.05));
        let nu = pushforward(&quarter_uniform(), &v2).unwrap();
        let text = to_csv(&nu);
        let back = from_csv(&text).unwrap();
        assert_eq!(nu, back);
    }

    #[test]
    fn csv_rejects_garbage() {
        assert!(from_csv("nope").is_err());
        assert!(from_csv("dim,n_atoms\n1,2\n0.5,1.0\n").is_err()); // row count off
    }
}
