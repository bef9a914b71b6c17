//! Pointwise interval construction at many query curves against one
//! fitted smoother.
//!
//! The training fits `r̂(X_i)` and the residual variance depend only on the
//! training set, so they are computed once here and shared by every query
//! and method.

use std::sync::OnceLock;

use crate::curves::Curve;
use crate::empirical_likelihood::{likelihood_interval, IntervalDiagnostics, IntervalMethod, IntervalResult, Ratio};
use crate::error::{Error, Result};
use crate::kernel_smoothing::{Smoother, WeightProfile};
use crate::normal_intervals::{ResidualVariance, VarianceEstimate};
use crate::quantile::normal_critical;

/// Local quantities at one query curve.
#[derive(Debug, Clone)]
pub struct QueryPoint {
    pub profile: WeightProfile,
    /// `r̂(x0)`.
    pub estimate: f64,
    corrected: Result<Vec<f64>>,
}

impl QueryPoint {
    /// Pseudo-responses `Y_i - r̂(X_i) + r̂(x0)` (entries with `K_i = 0` are
    /// unused and set to `r̂(x0)`).
    pub fn corrected_responses(&self) -> Result<&[f64]> {
        self.corrected.as_deref().map_err(Clone::clone)
    }

    /// Root of the bias-corrected estimating equation,
    /// `r̂(x0) + Σ K_i (Y_i - r̂(X_i)) / Σ K_i`.
    pub fn corrected_center(&self) -> Result<f64> {
        self.profile.estimate(self.corrected_responses()?)
    }
}

#[derive(Debug, Clone)]
pub struct PointwiseInference<'a> {
    smoother: Smoother<'a>,
    responses: Vec<f64>,
    fitted: Vec<Option<f64>>,
    variance: OnceLock<Result<ResidualVariance>>,
}

impl<'a> PointwiseInference<'a> {
    /// `responses` replace the dataset's own (the partially linear model
    /// passes `Y_i - Z_iᵀβ̂`).
    pub fn new(smoother: Smoother<'a>, responses: Vec<f64>) -> Result<Self> {
        if responses.len() != smoother.len() {
            return Err(Error::InvalidArgument(format!(
                "{} responses for {} training curves",
                responses.len(),
                smoother.len()
            )));
        }
        let fitted = smoother.fitted_values(&responses);
        Ok(Self {
            smoother,
            responses,
            fitted,
            variance: OnceLock::new(),
        })
    }

    pub fn smoother(&self) -> &Smoother<'a> {
        &self.smoother
    }

    pub fn responses(&self) -> &[f64] {
        &self.responses
    }

    /// Training fits `r̂(X_i)`; `None` where the neighborhood is empty.
    pub fn fitted(&self) -> &[Option<f64>] {
        &self.fitted
    }

    pub fn residual_variance(&self) -> Result<ResidualVariance> {
        self.variance
            .get_or_init(|| {
                ResidualVariance::from_fits(&self.responses, &self.fitted).ok_or_else(|| Error::EmptyNeighborhood {
                    index: None,
                    min_distance: self.nearest_neighbor_distance(0),
                })
            })
            .clone()
    }

    fn nearest_neighbor_distance(&self, i: usize) -> f64 {
        let n = self.smoother.len();
        self.smoother.pairwise()[i * n..(i + 1) * n]
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != i)
            .map(|(_, d)| *d)
            .fold(f64::INFINITY, f64::min)
    }

    pub fn query(&self, x0: &Curve) -> Result<QueryPoint> {
        let profile = self.smoother.weight_profile(x0)?;
        let estimate = profile.estimate(&self.responses)?;
        let corrected = profile
            .weights
            .iter()
            .enumerate()
            .map(|(i, &k)| {
                if k == 0.0 {
                    return Ok(estimate);
                }
                match self.fitted[i] {
                    Some(f) => Ok(self.responses[i] - f + estimate),
                    None => Err(Error::EmptyNeighborhood {
                        index: Some(i),
                        min_distance: self.nearest_neighbor_distance(i),
                    }),
                }
            })
            .collect();
        Ok(QueryPoint {
            profile,
            estimate,
            corrected,
        })
    }

    pub fn interval(&self, x0: &Curve, method: IntervalMethod, alpha: f64) -> Result<IntervalResult> {
        self.interval_at(&self.query(x0)?, method, alpha)
    }

    /// All `methods` at one query. The outer error reports an empty
    /// neighborhood at `x0`.
    pub fn intervals(&self, x0: &Curve, methods: &[IntervalMethod], alpha: f64) -> Result<Vec<Result<IntervalResult>>> {
        let q = self.query(x0)?;
        Ok(methods.iter().map(|&m| self.interval_at(&q, m, alpha)).collect())
    }

    pub fn interval_at(&self, q: &QueryPoint, method: IntervalMethod, alpha: f64) -> Result<IntervalResult> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::InvalidArgument(format!("alpha must lie in (0, 1), got {alpha}")));
        }
        let effective_count = q.profile.effective_count;
        let weights = &q.profile.weights;
        let diagnostics = IntervalDiagnostics {
            effective_count,
            lambda_lo: None,
            lambda_hi: None,
        };

        let likelihood = |responses: &[f64], ratio: Ratio| -> Result<IntervalResult> {
            if effective_count < 2 {
                return Err(Error::InsufficientSupport {
                    effective_count,
                    needed: 2,
                });
            }
            let iv = likelihood_interval(weights, responses, alpha, ratio)?;
            Ok(IntervalResult {
                method,
                estimate: iv.center,
                lo: iv.lo.min(iv.center),
                hi: iv.hi.max(iv.center),
                level: 1.0 - alpha,
                diagnostics: IntervalDiagnostics {
                    lambda_lo: iv.lambda_lo,
                    lambda_hi: iv.lambda_hi,
                    ..diagnostics
                },
            })
        };

        let normal = |center: f64| -> Result<IntervalResult> {
            let sigma2 = self.residual_variance()?.sigma2;
            let half = normal_critical(alpha)? * VarianceEstimate::new(sigma2, &q.profile).se;
            Ok(IntervalResult {
                method,
                estimate: center,
                lo: center - half,
                hi: center + half,
                level: 1.0 - alpha,
                diagnostics,
            })
        };

        match method {
            IntervalMethod::El => likelihood(&self.responses, Ratio::Empirical),
            IntervalMethod::ElCorrected => likelihood(q.corrected_responses()?, Ratio::Empirical),
            IntervalMethod::Euclidean => likelihood(&self.responses, Ratio::Euclidean),
            IntervalMethod::Normal => normal(q.estimate),
            IntervalMethod::NormalCorrected => normal(q.corrected_center()?),
        }
    }
}
