//! Shared numeric helpers.

/// Population mean and variance in one pass over a non-empty slice.
///
/// When every value is bit-identical the answer is returned without any
/// summation, so degenerate collections report their common value and a
/// variance of exactly zero instead of accumulated rounding dust.
pub(crate) fn population_mean_var(values: &[f64]) -> (f64, f64) {
    assert!(!values.is_empty(), "statistics of an empty slice");
    let first = values[0];
    if values.iter().all(|v| v.to_bits() == first.to_bits()) {
        return (first, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var)
}
