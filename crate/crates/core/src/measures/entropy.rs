/// Normalized Shannon entropy of the occupancy of `n_bins` equal-width bins over the
/// series' own range, divided by log N so the result lies in [0, 1].
pub fn shannon_entropy(series: &[f64], n_bins: usize) -> f64 {
    let n = series.len();
    if n <= 1 || n_bins < 2 {
        return 0.0;
    }
    let (lo, hi) = series
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)));
    let width = hi - lo;
    if !(width > 0.0) {
        return 0.0;
    }
    let mut counts = vec![0usize; n_bins];
    for &x in series {
        let idx = ((x - lo) / width * n_bins as f64) as usize;
        counts[idx.min(n_bins - 1)] += 1;
    }
    let inv_n = 1.0 / n as f64;
    let h: f64 = counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 * inv_n;
            -p * p.ln()
        })
        .sum();
    (h / (n as f64).ln()).clamp(0.0, 1.0)
}
