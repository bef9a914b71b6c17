//! Normal-approximation intervals: `center ± z_{1-α/2} · se` with
//! `se² = σ̂² · Σ K_i² / (Σ K_i)²` and `σ̂²` the mean squared training
//! residual.

use serde::Serialize;

use crate::curves::{Curve, FunctionalDataset};
use crate::empirical_likelihood::IntervalResult;
use crate::error::Result;
use crate::inference::PointwiseInference;
use crate::kernel_smoothing::{Smoother, SmootherConfig, WeightProfile};

/// Global residual variance `Σ (Y_i - r̂(X_i))² / n` over the samples whose
/// fit exists.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ResidualVariance {
    pub sigma2: f64,
    pub used: usize,
    /// Samples left out because their neighborhood was empty.
    pub skipped: usize,
}

impl ResidualVariance {
    pub(crate) fn from_fits(responses: &[f64], fitted: &[Option<f64>]) -> Option<Self> {
        let (mut sum, mut used) = (0.0, 0);
        for (y, f) in responses.iter().zip(fitted) {
            if let Some(f) = f {
                sum += (y - f) * (y - f);
                used += 1;
            }
        }
        (used > 0).then(|| Self {
            sigma2: sum / used as f64,
            used,
            skipped: responses.len() - used,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VarianceEstimate {
    pub sigma2_hat: f64,
    /// `Σ K_i² / (Σ K_i)²`, between `1 / effective_count` and 1.
    pub kernel_factor: f64,
    pub se: f64,
}

impl VarianceEstimate {
    pub fn new(sigma2_hat: f64, profile: &WeightProfile) -> Self {
        let kernel_factor = profile.kernel_factor();
        Self {
            sigma2_hat,
            kernel_factor,
            se: (sigma2_hat * kernel_factor).sqrt(),
        }
    }
}

pub fn residual_variance(ds: &FunctionalDataset, cfg: &SmootherConfig) -> Result<ResidualVariance> {
    let smoother = Smoother::fit(ds, cfg)?;
    PointwiseInference::new(smoother, ds.responses().to_vec())?.residual_variance()
}

/// Normal interval at `x0`, centred at `r̂(x0)` or, when `corrected`, at the
/// root of the bias-corrected estimating equation.
pub fn normal_interval(
    ds: &FunctionalDataset,
    x0: &Curve,
    cfg: &SmootherConfig,
    alpha: f64,
    corrected: bool,
) -> Result<IntervalResult> {
    use crate::empirical_likelihood::IntervalMethod;
    let method = if corrected {
        IntervalMethod::NormalCorrected
    } else {
        IntervalMethod::Normal
    };
    let smoother = Smoother::fit(ds, cfg)?;
    PointwiseInference::new(smoother, ds.responses().to_vec())?.interval(x0, method, alpha)
}
