//! Small numeric helpers shared across modules: compensated summation,
//! pairwise reduction, and least-squares line fits for log-log diagnostics.

/// Kahan–Neumaier compensated sum. Used wherever a tolerance like 1e-10
/// on a sum of up to ~1e7 terms is asserted.
pub fn kahan_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut sum = 0.0;
    let mut c = 0.0;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            c += (sum - t) + v;
        } else {
            c += (v - t) + sum;
        }
        sum = t;
    }
    sum + c
}

/// Pairwise (tree) summation; associative reduction order independent of
/// chunking used by callers, low drift on long slices.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    match values.len() {
        0 => 0.0,
        1 => values[0],
        2 => values[0] + values[1],
        n => {
            let mid = n / 2;
            pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
        }
    }
}

/// Least-squares line fit `y ≈ slope·x + intercept`.
///
/// Returns (slope, intercept). With fewer than two distinct x the slope is 0
/// (callers treat that as "flat", which is the right reading for the
/// constant-envelope controls).
pub fn fit_line(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    assert_eq!(xs.len(), ys.len(), "fit_line: length mismatch");
    let n = xs.len() as f64;
    if xs.len() < 2 {
        return (0.0, ys.first().copied().unwrap_or(0.0));
    }
    let mx = kahan_sum(xs.iter().copied()) / n;
    let my = kahan_sum(ys.iter().copied()) / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (&x, &y) in xs.iter().zip(ys) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
    }
    if sxx == 0.0 {
        return (0.0, my);
    }
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

/// Slope component of [`fit_line`].
pub fn fit_slope(xs: &[f64], ys: &[f64]) -> f64 {
    fit_line(xs, ys).0
}
