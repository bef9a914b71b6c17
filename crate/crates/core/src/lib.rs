//! Nonparametric regression on functional covariates with pointwise
//! confidence intervals.
//!
//! The crate fits the functional Nadaraya–Watson estimator
//! `r̂(x0) = Σ K(d(X_i, x0)/h) Y_i / Σ K(d(X_i, x0)/h)` and builds intervals
//! for `r(x0)` by empirical likelihood (plain and bias-corrected), by
//! Euclidean likelihood, and by normal approximation. A partially linear
//! extension and a Monte Carlo coverage harness are included.

pub mod curves;
pub mod empirical_likelihood;
pub mod error;
pub mod inference;
pub mod io;
pub mod kernel_smoothing;
pub mod normal_intervals;
pub mod plm;
pub mod quantile;
pub mod report;
pub mod roots;
pub mod semimetric;
pub mod simulation;

pub use curves::{estimate_derivative, Curve, FunctionalDataset, Grid};
pub use empirical_likelihood::{
    el_confidence_interval, el_log_ratio, euclidean_log_ratio, solve_lambda, ElEvaluation, ElProblem, ElVariant,
    IntervalMethod, IntervalResult,
};
pub use error::{Error, Result};
pub use inference::PointwiseInference;
pub use kernel_smoothing::{Bandwidth, FittedValues, Kernel, Smoother, SmootherConfig, WeightProfile};
pub use plm::{plm_el_interval, profile_beta, PlmConfig, PlmFit, PlmInference};
pub use quantile::chi2_quantile;
pub use semimetric::{fit_pca_semimetric, SemiMetric, SemiMetricKind};
pub use simulation::{run_coverage_study, CoverageReport, SimConfig};
