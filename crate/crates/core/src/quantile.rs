//! Normal and chi-square(1) quantiles.

use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

fn check_probability(p: f64) -> Result<()> {
    if p > 0.0 && p < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "probability must lie in (0, 1), got {p}"
        )))
    }
}

/// Standard normal quantile.
pub fn normal_quantile(p: f64) -> Result<f64> {
    check_probability(p)?;
    let std = Normal::standard();
    Ok(std.inverse_cdf(p))
}

/// Quantile of the chi-square distribution with one degree of freedom,
/// computed as the square of the normal quantile at `(1 + p) / 2`.
pub fn chi2_quantile(p: f64) -> Result<f64> {
    check_probability(p)?;
    let z = normal_quantile(0.5 * (1.0 + p))?;
    Ok(z * z)
}

/// Two-sided normal critical value `z_{1 - alpha/2}`.
pub fn normal_critical(alpha: f64) -> Result<f64> {
    check_probability(alpha)?;
    normal_quantile(1.0 - 0.5 * alpha)
}
