//! Small order-statistic helpers shared by the models and diagnostics.

/// Quantile of an ascending-sorted sample by linear interpolation between
/// order statistics: with `h = (n - 1) * p`, returns
/// `x[floor(h)] + (h - floor(h)) * (x[floor(h) + 1] - x[floor(h)])`.
///
/// `p` is clamped to `[0, 1]`; `p = 0` gives the minimum, `p = 1` the maximum.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of an empty sample");
    let p = p.clamp(0.0, 1.0);
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    if lo + 1 >= sorted.len() {
        return sorted[sorted.len() - 1];
    }
    let frac = h - lo as f64;
    sorted[lo] + frac * (sorted[lo + 1] - sorted[lo])
}

pub fn sorted_copy(values: &[f64]) -> Vec<f64> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

/// Several quantiles of an unsorted sample.
pub fn quantiles(values: &[f64], levels: &[f64]) -> Vec<f64> {
    let sorted = sorted_copy(values);
    levels
        .iter()
        .map(|&p| quantile_sorted(&sorted, p))
        .collect()
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Population standard deviation.
pub fn std_dev(values: &[f64]) -> f64 {
    let m = mean(values);
    (values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / values.len() as f64).sqrt()
}
