//! Small numeric helpers shared across modules: stable log-sum-exp,
//! Gaussian pdf/cdf, and a stable 64-bit content hash for provenance.

/// Densities are floored at this value before entering a denominator, so
/// that BP correction terms and importance ratios stay finite.
pub const DENSITY_FLOOR: f64 = 1e-300;

/// Natural log of [`DENSITY_FLOOR`].
pub const LOG_DENSITY_FLOOR: f64 = -690.77552789821368;

pub const LN_SQRT_2PI: f64 = 0.91893853320467274178;

/// log(sum(exp(values))) without overflow/underflow.
///
/// Returns `-inf` for an empty slice or when every entry is `-inf`.
pub fn logsumexp(values: &[f64]) -> f64 {
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max; // empty, all -inf, or a +inf/NaN poisoning the sum
    }
    let sum: f64 = values.iter().map(|v| (v - max).exp()).sum();
    max + sum.ln()
}

/// Exponentiates log-weights into a normalized weight vector (sum 1).
///
/// Returns `None` when the weights carry no mass (all `-inf`), which callers
/// treat as a degenerate-weight condition.
pub fn normalize_log_weights(log_weights: &[f64]) -> Option<Vec<f64>> {
    let lse = logsumexp(log_weights);
    if !lse.is_finite() {
        return None;
    }
    let mut weights: Vec<f64> = log_weights.iter().map(|lw| (lw - lse).exp()).collect();
    let total: f64 = weights.iter().sum();
    for w in &mut weights {
        *w /= total;
    }
    Some(weights)
}

/// Log-density of N(0, sigma^2) evaluated at `x`.
#[inline]
pub fn log_gaussian(x: f64, sigma: f64) -> f64 {
    let z = x / sigma;
    -0.5 * z * z - sigma.ln() - LN_SQRT_2PI
}

/// Standard normal cumulative distribution function.
///
/// Abramowitz & Stegun 26.2.17 rational approximation; absolute error
/// below 7.5e-8, which is far inside every tolerance that consumes it
/// (Kolmogorov-Smirnov thresholds at 1e5 samples are ~5e-3).
pub fn standard_normal_cdf(x: f64) -> f64 {
    if x < 0.0 {
        return 1.0 - standard_normal_cdf(-x);
    }
    let t = 1.0 / (1.0 + 0.2316419 * x);
    let poly = t
        * (0.319381530
            + t * (-0.356563782 + t * (1.781477937 + t * (-1.821255978 + t * 1.330274429))));
    let pdf = (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
    1.0 - pdf * poly
}

/// FNV-1a 64-bit hash. Stable across runs and platforms; used for the
/// `config_hash` provenance field in output headers.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x100000001b3);
    }
    hash
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn logsumexp_matches_direct_sum_in_safe_range() {
        let vals = [0.5, -1.25, 2.0, 0.0];
        let direct: f64 = vals.iter().map(|&v: &f64| v.exp()).sum::<f64>().ln();
        assert!((logsumexp(&vals) - direct).abs() < 1e-14);
    }

    #[test]
    fn logsumexp_survives_large_magnitudes() {
        let vals = [-1200.0, -1201.0];
        let expected = -1200.0 + (1.0 + (-1.0f64).exp()).ln();
        assert!((logsumexp(&vals) - expected).abs() < 1e-12);
        assert_eq!(logsumexp(&[]), f64::NEG_INFINITY);
    }

    #[test]
    fn normalized_weights_sum_to_one() {
        let lw = [-700.0, -701.5, -699.2];
        let w = normalize_log_weights(&lw).unwrap();
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-14);
        assert!(normalize_log_weights(&[f64::NEG_INFINITY; 3]).is_none());
    }

    #[test]
    fn normal_cdf_reference_points() {
        // Reference values from standard tables.
        assert!((standard_normal_cdf(0.0) - 0.5).abs() < 1e-9);
        assert!((standard_normal_cdf(1.0) - 0.8413447460685429).abs() < 2e-7);
        assert!((standard_normal_cdf(-1.96) - 0.024997895148220435).abs() < 2e-7);
    }

    #[test]
    fn fnv_is_stable() {
        assert_eq!(fnv1a64(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a64(b"a"), 0xaf63dc4c8601ec8c);
    }
}
