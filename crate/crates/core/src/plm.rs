//! Semi-functional partially linear model `Y = Zᵀβ + r(X) + ε`.
//!
//! For fixed `β` the nonparametric part is the smoother applied to
//! `Y - Zβ`, so the profile least-squares objective is
//! `‖(I - S)(Y - Zβ)‖²` with `S` the self-inclusive smoother matrix, and
//! `β̂ = argmin ‖Ỹ - Z̃β‖²` with `Z̃ = (I - S)Z`, `Ỹ = (I - S)Y`. Intervals
//! for `r(x0)` reuse the pointwise machinery on the partial responses
//! `Y_i - Z_iᵀβ̂`.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::curves::{Curve, FunctionalDataset};
use crate::empirical_likelihood::{IntervalMethod, IntervalResult};
use crate::error::{Error, Result};
use crate::inference::PointwiseInference;
use crate::kernel_smoothing::{
    sample_variance, select_window, Bandwidth, Candidates, Smoother, SmootherConfig, Window,
};

#[derive(Debug, Clone)]
pub struct PlmConfig {
    pub smoother: SmootherConfig,
    /// Window for the profiling stage; defaults to the final-stage one.
    pub profile_window: Option<Window>,
}

impl PlmConfig {
    pub fn new(smoother: SmootherConfig) -> Self {
        Self {
            smoother,
            profile_window: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlmFit {
    pub beta_hat: Vec<f64>,
    /// Window of the final nonparametric stage.
    pub window: Window,
    pub profile_window: Window,
    /// `Y_i - Z_iᵀβ̂`.
    pub partial_responses: Vec<f64>,
}

fn design(ds: &FunctionalDataset) -> DMatrix<f64> {
    ds.linear_covariates()
        .cloned()
        .unwrap_or_else(|| DMatrix::zeros(ds.len(), 0))
}

fn partial_responses(ds: &FunctionalDataset, z: &DMatrix<f64>, beta: &[f64]) -> Vec<f64> {
    let b = DVector::from_column_slice(beta);
    let fit = z * b;
    ds.responses().iter().zip(fit.iter()).map(|(y, f)| y - f).collect()
}

fn solve_profile(smoother: &Smoother<'_>, z: &DMatrix<f64>, y: &[f64]) -> Result<Vec<f64>> {
    if z.ncols() == 0 {
        return Ok(Vec::new());
    }
    profile_least_squares(&smoother.smoother_matrix(), z, y)
}

/// Minimises `‖(I - S)(Y - Zβ)‖²` for a given smoother matrix `S` through
/// an SVD of `(I - S)Z`.
pub fn profile_least_squares(s: &DMatrix<f64>, z: &DMatrix<f64>, y: &[f64]) -> Result<Vec<f64>> {
    let (n, p) = z.shape();
    if p == 0 {
        return Ok(Vec::new());
    }
    if s.shape() != (n, n) || y.len() != n {
        return Err(Error::InvalidArgument(
            "profile least squares: dimension mismatch".into(),
        ));
    }
    let z_t = z - s * z;
    let y = DVector::from_column_slice(y);
    let y_t = &y - s * &y;

    let svd = z_t.svd(true, true);
    let top = svd.singular_values.max();
    // rank cutoff relative to the scale of Z
    let cutoff = top.max(z.norm()) * f64::EPSILON * n.max(p) as f64;
    if top == 0.0 || svd.singular_values.iter().any(|&sv| sv <= cutoff) {
        return Err(Error::SingularDesign);
    }
    let beta = svd.solve(&y_t, cutoff).map_err(|_| Error::SingularDesign)?;
    Ok(beta.iter().copied().collect())
}

/// The profile least-squares objective at `beta` for a fitted smoother.
pub fn profile_objective(smoother: &Smoother<'_>, beta: &[f64]) -> f64 {
    let ds = smoother.data();
    let z = design(ds);
    let partial = DVector::from_vec(partial_responses(ds, &z, beta));
    let resid = &partial - smoother.smoother_matrix() * &partial;
    resid.norm_squared()
}

/// Profile least-squares fit.
///
/// With a cross-validation rule every candidate window `w` is scored by the
/// leave-one-out error of the smoother on `Y - Zβ̂(w)`, where `β̂(w)` is the
/// profile estimate at that window.
pub fn profile_beta(ds: &FunctionalDataset, cfg: &PlmConfig) -> Result<PlmFit> {
    let z = design(ds);
    let base_cfg = SmootherConfig {
        bandwidth: Bandwidth::Fixed(1.0),
        ..cfg.smoother.clone()
    };
    cfg.smoother.validate()?;
    let base = Smoother::fit(ds, &base_cfg)?;

    let window = match base.candidates(&cfg.smoother.bandwidth)? {
        Candidates::Fixed(w) => w,
        Candidates::Search(grid) => cross_validate(&base, &z, &grid, cfg.profile_window)?,
    };
    let profile_window = cfg.profile_window.unwrap_or(window);
    let beta_hat = solve_profile(&base.with_window(profile_window)?, &z, ds.responses())?;
    let partial = partial_responses(ds, &z, &beta_hat);
    Ok(PlmFit {
        beta_hat,
        window,
        profile_window,
        partial_responses: partial,
    })
}

fn cross_validate(
    base: &Smoother<'_>,
    z: &DMatrix<f64>,
    grid: &[Window],
    profile_window: Option<Window>,
) -> Result<Window> {
    if grid.is_empty() {
        return Err(Error::InvalidArgument("empty bandwidth candidate grid".into()));
    }
    let ds = base.data();
    let scores: Vec<f64> = grid
        .iter()
        .map(|&w| {
            let Ok(smoother) = base.with_window(profile_window.unwrap_or(w)) else {
                return f64::INFINITY;
            };
            match solve_profile(&smoother, z, ds.responses()) {
                Ok(beta) => {
                    let partial = partial_responses(ds, z, &beta);
                    base.cv_criterion(w, &partial, sample_variance(&partial))
                }
                Err(_) => f64::INFINITY,
            }
        })
        .collect();
    select_window(grid, &scores).ok_or(Error::SingularDesign)
}

fn fixed_window<'a>(ds: &'a FunctionalDataset, cfg: &SmootherConfig, window: Window) -> Result<Smoother<'a>> {
    let base = SmootherConfig {
        bandwidth: Bandwidth::Fixed(1.0),
        ..cfg.clone()
    };
    Smoother::fit(ds, &base)?.with_window(window)
}

/// A fitted partially linear model ready for interval queries.
#[derive(Debug, Clone)]
pub struct PlmInference<'a> {
    fit: PlmFit,
    engine: PointwiseInference<'a>,
}

impl<'a> PlmInference<'a> {
    pub fn new(ds: &'a FunctionalDataset, cfg: &PlmConfig) -> Result<Self> {
        let fit = profile_beta(ds, cfg)?;
        let smoother = fixed_window(ds, &cfg.smoother, fit.window)?;
        let engine = PointwiseInference::new(smoother, fit.partial_responses.clone())?;
        Ok(Self { fit, engine })
    }

    /// Uses a given coefficient vector instead of the profile estimate; a
    /// CV rule in `cfg` runs on the partial responses.
    pub fn with_beta(ds: &'a FunctionalDataset, cfg: &SmootherConfig, beta: &[f64]) -> Result<Self> {
        let z = design(ds);
        if beta.len() != z.ncols() {
            return Err(Error::InvalidArgument(format!(
                "beta has {} entries, design has {} columns",
                beta.len(),
                z.ncols()
            )));
        }
        let partial = partial_responses(ds, &z, beta);
        let partial_ds = ds.with_responses(partial.clone())?;
        let window = Smoother::fit(&partial_ds, cfg)?.window();
        let smoother = fixed_window(ds, cfg, window)?;
        let fit = PlmFit {
            beta_hat: beta.to_vec(),
            window,
            profile_window: window,
            partial_responses: partial.clone(),
        };
        Ok(Self {
            fit,
            engine: PointwiseInference::new(smoother, partial)?,
        })
    }

    pub fn fit(&self) -> &PlmFit {
        &self.fit
    }

    pub fn engine(&self) -> &PointwiseInference<'a> {
        &self.engine
    }

    /// Interval for `r(x0)`.
    pub fn interval(&self, x0: &Curve, method: IntervalMethod, alpha: f64) -> Result<IntervalResult> {
        self.engine.interval(x0, method, alpha)
    }

    /// `zᵀβ̂`, the amount an interval for `r(x)` is shifted to cover the
    /// full regression function at covariates `z`.
    pub fn linear_part(&self, z: &[f64]) -> Result<f64> {
        if z.len() != self.fit.beta_hat.len() {
            return Err(Error::InvalidArgument(format!(
                "query covariates have {} entries, expected {}",
                z.len(),
                self.fit.beta_hat.len()
            )));
        }
        Ok(z.iter().zip(&self.fit.beta_hat).map(|(a, b)| a * b).sum())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlmInterval {
    /// Interval for `r(x0)`.
    pub interval: IntervalResult,
    /// Interval for `zᵀβ + r(x0)` when query covariates were given.
    pub shifted: Option<IntervalResult>,
}

/// Plug-in empirical likelihood interval for `r(x0)` in the partially
/// linear model; `corrected` selects the bias-corrected equation.
pub fn plm_el_interval(
    ds: &FunctionalDataset,
    x0: &Curve,
    cfg: &PlmConfig,
    alpha: f64,
    corrected: bool,
    query_z: Option<&[f64]>,
) -> Result<PlmInterval> {
    let model = PlmInference::new(ds, cfg)?;
    let method = if corrected {
        IntervalMethod::ElCorrected
    } else {
        IntervalMethod::El
    };
    let interval = model.interval(x0, method, alpha)?;
    let shifted = query_z
        .map(|z| model.linear_part(z).map(|s| interval.shifted(s)))
        .transpose()?;
    Ok(PlmInterval { interval, shifted })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curves::Grid;
    use crate::kernel_smoothing::Kernel;
    use crate::semimetric::SemiMetric;
    use approx::assert_abs_diff_eq;
    use std::sync::Arc;

    fn dataset(z: DMatrix<f64>, y: Vec<f64>) -> FunctionalDataset {
        let n = y.len();
        let grid = Arc::new(Grid::uniform(0.0, 1.0, 6).unwrap());
        let curves = (0..n)
            .map(|i| Curve::from_fn(Arc::clone(&grid), move |t| (i as f64 * 0.37).sin() * t).unwrap())
            .collect();
        FunctionalDataset::new(curves, y)
            .unwrap()
            .with_linear_covariates(z)
            .unwrap()
    }

    fn cfg(kernel: Kernel, h: f64) -> PlmConfig {
        PlmConfig::new(SmootherConfig::new(
            kernel,
            SemiMetric::deriv_l2(0),
            Bandwidth::Fixed(h),
        ))
    }

    #[test]
    fn constant_column_is_singular() {
        let z = DMatrix::from_element(8, 1, 2.0);
        let ds = dataset(z, (0..8).map(|i| i as f64).collect());
        assert_eq!(
            profile_beta(&ds, &cfg(Kernel::Quadratic, 0.3)).unwrap_err(),
            Error::SingularDesign
        );

        let zero = DMatrix::zeros(8, 1);
        let ds = dataset(zero, (0..8).map(|i| i as f64).collect());
        assert_eq!(
            profile_beta(&ds, &cfg(Kernel::Quadratic, 0.3)).unwrap_err(),
            Error::SingularDesign
        );
    }

    #[test]
    fn no_linear_part_gives_empty_beta() {
        let ds = dataset(DMatrix::zeros(8, 0), (0..8).map(|i| (i * i) as f64).collect());
        let fit = profile_beta(&ds, &cfg(Kernel::Quadratic, 0.3)).unwrap();
        assert!(fit.beta_hat.is_empty());
        assert_eq!(fit.partial_responses, ds.responses());
    }

    #[test]
    fn wide_uniform_window_reduces_to_centered_ols() {
        let n = 12;
        let z = DMatrix::from_fn(n, 1, |i, _| ((i * 7) % 5) as f64 + 0.1 * i as f64);
        let y: Vec<f64> = (0..n).map(|i| 1.5 * z[(i, 0)] + ((i * 3) % 4) as f64).collect();
        let ds = dataset(z.clone(), y.clone());
        let fit = profile_beta(&ds, &cfg(Kernel::Uniform, 1e6)).unwrap();

        let zm = z.column(0).mean();
        let ym = y.iter().sum::<f64>() / n as f64;
        let sxy: f64 = (0..n).map(|i| (z[(i, 0)] - zm) * (y[i] - ym)).sum();
        let sxx: f64 = (0..n).map(|i| (z[(i, 0)] - zm).powi(2)).sum();
        assert_abs_diff_eq!(fit.beta_hat[0], sxy / sxx, epsilon = 1e-10);
    }

    #[test]
    fn zero_smoother_gives_ols() {
        let n = 9;
        let z = DMatrix::from_fn(n, 2, |i, j| ((i * (j + 3)) % 5) as f64 + 0.5 * j as f64);
        let y: Vec<f64> = (0..n).map(|i| (i as f64).sqrt()).collect();
        let beta = profile_least_squares(&DMatrix::zeros(n, n), &z, &y).unwrap();
        let normal = (z.transpose() * &z)
            .lu()
            .solve(&(z.transpose() * DVector::from_column_slice(&y)))
            .unwrap();
        for k in 0..2 {
            assert_abs_diff_eq!(beta[k], normal[k], epsilon = 1e-12);
        }
    }

    #[test]
    fn tiny_bandwidth_reduces_to_ols_on_distinct_curves() {
        // with h below every pairwise distance S is the identity on the
        // diagonal only, so (I - S) annihilates everything: singular.
        let n = 10;
        let z = DMatrix::from_fn(n, 2, |i, j| ((i + 3 * j) % 7) as f64);
        let y: Vec<f64> = (0..n).map(|i| i as f64).collect();
        let ds = dataset(z, y);
        assert_eq!(
            profile_beta(&ds, &cfg(Kernel::Quadratic, 1e-9)).unwrap_err(),
            Error::SingularDesign
        );
    }

    #[test]
    fn coefficient_shift_equivariance() {
        let n = 20;
        let z = DMatrix::from_fn(n, 2, |i, j| ((i * (j + 2)) % 7) as f64 * 0.3 + (i as f64 * 0.1).cos());
        let y: Vec<f64> = (0..n).map(|i| (i as f64 * 0.9).sin() * 2.0).collect();
        let ds = dataset(z.clone(), y.clone());
        let c = [0.7, -1.3];
        let y2: Vec<f64> = (0..n).map(|i| y[i] + z[(i, 0)] * c[0] + z[(i, 1)] * c[1]).collect();
        let ds2 = dataset(z, y2);
        let a = profile_beta(&ds, &cfg(Kernel::Quadratic, 0.5)).unwrap();
        let b = profile_beta(&ds2, &cfg(Kernel::Quadratic, 0.5)).unwrap();
        for ((bk, ak), ck) in b.beta_hat.iter().zip(&a.beta_hat).zip(c) {
            assert_abs_diff_eq!(*bk, ak + ck, epsilon = 1e-8);
        }
    }

    #[test]
    fn shifted_interval_adds_linear_part() {
        let n = 30;
        let z = DMatrix::from_fn(n, 1, |i, _| ((i * 5) % 11) as f64 * 0.2);
        let y: Vec<f64> = (0..n)
            .map(|i| 2.0 * z[(i, 0)] + (i as f64 * 0.37).sin() + 0.1 * ((i * 13) % 7) as f64)
            .collect();
        let ds = dataset(z, y);
        let x0 = ds.curves()[4].clone();
        let out = plm_el_interval(&ds, &x0, &cfg(Kernel::Quadratic, 0.5), 0.05, true, Some(&[1.5])).unwrap();
        let fit = profile_beta(&ds, &cfg(Kernel::Quadratic, 0.5)).unwrap();
        let s = out.shifted.unwrap();
        assert_abs_diff_eq!(s.lo - out.interval.lo, 1.5 * fit.beta_hat[0], epsilon = 1e-12);
        assert_abs_diff_eq!(s.hi - out.interval.hi, 1.5 * fit.beta_hat[0], epsilon = 1e-12);
    }
}
