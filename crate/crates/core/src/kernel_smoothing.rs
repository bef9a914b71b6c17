//! Functional Nadaraya–Watson smoothing.
//!
//! [`Smoother`] is the fitted form of a [`SmootherConfig`] on a training
//! set: it owns the fitted semi-metric, the curve embeddings and the
//! resolved [`Window`], and lazily caches the training pairwise distances
//! that cross-validation, fitted values and the smoother matrix share.
//!
//! A window is either one global bandwidth `h` or a neighbor count `k`,
//! in which case the bandwidth at each point sits midway between the
//! distances to its `k`-th and `(k+1)`-th nearest training curves.

use std::sync::{Arc, OnceLock};

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use crate::curves::{same_grid, Curve, FunctionalDataset};
use crate::error::{Error, Result};
use crate::semimetric::{euclidean, SemiMetric};

/// Kernels supported on `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kernel {
    /// `K(s) = 1 - s^2`.
    Quadratic,
    /// `K(s) = 1`.
    Uniform,
}

impl Kernel {
    pub fn eval(self, s: f64) -> Result<f64> {
        if s.is_nan() || s < 0.0 {
            return Err(Error::InvalidArgument(format!("kernel argument must be >= 0, got {s}")));
        }
        Ok(self.weight(s))
    }

    /// Unchecked evaluation for nonnegative `s`.
    #[inline]
    pub(crate) fn weight(self, s: f64) -> f64 {
        if s > 1.0 {
            return 0.0;
        }
        match self {
            Kernel::Quadratic => 1.0 - s * s,
            Kernel::Uniform => 1.0,
        }
    }
}

pub fn kernel_eval(k: Kernel, s: f64) -> Result<f64> {
    k.eval(s)
}

/// How the smoothing window is chosen.
#[derive(Debug, Clone, PartialEq)]
pub enum Bandwidth {
    Fixed(f64),
    /// Leave-one-out cross-validation over explicit candidates.
    CrossValidated(Vec<f64>),
    /// Leave-one-out cross-validation over `count` pairwise-distance
    /// quantiles (see [`default_h_grid`]).
    CrossValidatedQuantiles(usize),
    /// Local bandwidths from a fixed neighbor count.
    Neighbors(usize),
    /// Leave-one-out cross-validation over explicit neighbor counts.
    CrossValidatedNeighbors(Vec<usize>),
    /// Leave-one-out cross-validation over [`default_k_grid`].
    CrossValidatedNeighborsAuto,
}

/// A resolved smoothing window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Window {
    Global(f64),
    Neighbors(usize),
}

impl Window {
    /// Bandwidth at a point whose distances to the training curves are
    /// `distances`, ignoring entry `exclude`. With fewer than `k + 1`
    /// usable curves every curve gets full weight.
    pub fn local_bandwidth(self, distances: &[f64], exclude: Option<usize>) -> f64 {
        match self {
            Window::Global(h) => h,
            Window::Neighbors(k) => {
                let mut d: Vec<f64> = distances
                    .iter()
                    .enumerate()
                    .filter(|(j, _)| Some(*j) != exclude)
                    .map(|(_, &x)| x)
                    .collect();
                if k == 0 || d.len() <= k {
                    return f64::INFINITY;
                }
                let (nearer, next, _) = d.select_nth_unstable_by(k, f64::total_cmp);
                let kth = nearer.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                0.5 * (kth + *next)
            }
        }
    }

    fn size(self) -> f64 {
        match self {
            Window::Global(h) => h,
            Window::Neighbors(k) => k as f64,
        }
    }

    fn validate(self) -> Result<()> {
        match self {
            Window::Global(h) if !(h.is_finite() && h > 0.0) => {
                Err(Error::InvalidArgument(format!("bandwidth must be positive, got {h}")))
            }
            Window::Neighbors(0) => Err(Error::InvalidArgument("neighbor count must be >= 1".into())),
            _ => Ok(()),
        }
    }
}

impl std::fmt::Display for Window {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Window::Global(h) => write!(f, "h={h}"),
            Window::Neighbors(k) => write!(f, "knn={k}"),
        }
    }
}

/// Which training fits `r̂(X_i)` enter bias corrections and residuals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FittedValues {
    /// Full-sample smoother, sample `i` included in its own fit.
    #[default]
    SelfInclusive,
    LeaveOneOut,
}

#[derive(Debug, Clone)]
pub struct SmootherConfig {
    pub kernel: Kernel,
    pub semimetric: SemiMetric,
    pub bandwidth: Bandwidth,
    pub fitted_values: FittedValues,
}

impl SmootherConfig {
    pub fn new(kernel: Kernel, semimetric: SemiMetric, bandwidth: Bandwidth) -> Self {
        Self {
            kernel,
            semimetric,
            bandwidth,
            fitted_values: FittedValues::default(),
        }
    }

    pub fn with_fitted_values(mut self, fitted_values: FittedValues) -> Self {
        self.fitted_values = fitted_values;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |h: &f64| h.is_finite() && *h > 0.0;
        match &self.bandwidth {
            Bandwidth::Fixed(h) if !positive(h) => {
                Err(Error::InvalidConfig(format!("bandwidth must be positive, got {h}")))
            }
            Bandwidth::CrossValidated(grid) if grid.is_empty() => {
                Err(Error::InvalidArgument("empty bandwidth candidate grid".into()))
            }
            Bandwidth::CrossValidated(grid) if !grid.iter().all(positive) => {
                Err(Error::InvalidArgument("bandwidth candidates must be positive".into()))
            }
            Bandwidth::CrossValidatedQuantiles(0) => {
                Err(Error::InvalidArgument("bandwidth candidate count must be >= 1".into()))
            }
            Bandwidth::Neighbors(0) => Err(Error::InvalidConfig("neighbor count must be >= 1".into())),
            Bandwidth::CrossValidatedNeighbors(ks) if ks.is_empty() || ks.contains(&0) => Err(Error::InvalidArgument(
                "neighbor candidates must be a nonempty list of counts >= 1".into(),
            )),
            _ => Ok(()),
        }
    }
}

/// Kernel weights `K_i = K(d(X_i, x0) / h)` at one query curve.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightProfile {
    pub weights: Vec<f64>,
    pub effective_count: usize,
    /// Smallest distance from the query to any curve; reported on empty
    /// neighborhoods.
    pub min_distance: f64,
    /// The `h` used at this query.
    pub bandwidth: f64,
}

impl WeightProfile {
    /// Zero distances get `K(0)` whatever the bandwidth.
    pub fn from_distances(kernel: Kernel, bandwidth: f64, distances: &[f64]) -> Self {
        let weights: Vec<f64> = distances
            .iter()
            .map(|&d| kernel.weight(if d == 0.0 { 0.0 } else { d / bandwidth }))
            .collect();
        let effective_count = weights.iter().filter(|&&k| k > 0.0).count();
        let min_distance = distances.iter().copied().fold(f64::INFINITY, f64::min);
        Self {
            weights,
            effective_count,
            min_distance,
            bandwidth,
        }
    }

    pub fn total(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// `Σ K_i^2 / (Σ K_i)^2`.
    pub fn kernel_factor(&self) -> f64 {
        let s: f64 = self.total();
        self.weights.iter().map(|k| k * k).sum::<f64>() / (s * s)
    }

    /// Weighted mean `Σ K_i Y_i / Σ K_i`.
    pub fn estimate(&self, responses: &[f64]) -> Result<f64> {
        self.estimate_at(responses, None)
    }

    fn estimate_at(&self, responses: &[f64], index: Option<usize>) -> Result<f64> {
        if self.effective_count == 0 {
            return Err(Error::EmptyNeighborhood {
                index,
                min_distance: self.min_distance,
            });
        }
        let num: f64 = self.weights.iter().zip(responses).map(|(k, y)| k * y).sum();
        Ok(num / self.total())
    }
}

#[derive(Debug)]
struct Cache {
    embeddings: Vec<Vec<f64>>,
    pairwise: OnceLock<Vec<f64>>,
}

/// A smoother fitted to a training dataset.
#[derive(Debug, Clone)]
pub struct Smoother<'a> {
    data: &'a FunctionalDataset,
    kernel: Kernel,
    metric: SemiMetric,
    window: Window,
    fitted_values: FittedValues,
    cache: Arc<Cache>,
}

impl<'a> Smoother<'a> {
    /// Fits the semi-metric if needed and resolves the window (running
    /// cross-validation on the dataset's responses when requested).
    pub fn fit(data: &'a FunctionalDataset, cfg: &SmootherConfig) -> Result<Self> {
        cfg.validate()?;
        let metric = cfg.semimetric.ensure_fitted(data)?;
        let embeddings = data
            .curves()
            .iter()
            .map(|c| metric.embed(c))
            .collect::<Result<Vec<_>>>()?;
        let mut smoother = Self {
            data,
            kernel: cfg.kernel,
            metric,
            window: Window::Global(1.0),
            fitted_values: cfg.fitted_values,
            cache: Arc::new(Cache {
                embeddings,
                pairwise: OnceLock::new(),
            }),
        };
        smoother.window = match smoother.candidates(&cfg.bandwidth)? {
            Candidates::Fixed(w) => w,
            Candidates::Search(grid) => smoother.cross_validate(&grid, data.responses())?,
        };
        Ok(smoother)
    }

    /// The fixed window of `rule`, or the candidates it cross-validates over.
    pub fn candidates(&self, rule: &Bandwidth) -> Result<Candidates> {
        Ok(match rule {
            Bandwidth::Fixed(h) => Candidates::Fixed(Window::Global(*h)),
            Bandwidth::Neighbors(k) => Candidates::Fixed(Window::Neighbors(*k)),
            Bandwidth::CrossValidated(grid) => Candidates::Search(grid.iter().map(|&h| Window::Global(h)).collect()),
            Bandwidth::CrossValidatedQuantiles(count) => {
                Candidates::Search(self.quantile_grid(*count)?.into_iter().map(Window::Global).collect())
            }
            Bandwidth::CrossValidatedNeighbors(ks) => {
                Candidates::Search(ks.iter().map(|&k| Window::Neighbors(k)).collect())
            }
            Bandwidth::CrossValidatedNeighborsAuto => {
                Candidates::Search(default_k_grid(self.len())?.into_iter().map(Window::Neighbors).collect())
            }
        })
    }

    /// Same fitted state with a different window.
    pub fn with_window(&self, window: Window) -> Result<Self> {
        window.validate()?;
        Ok(Self { window, ..self.clone() })
    }

    /// Same fitted state with a global bandwidth.
    pub fn with_bandwidth(&self, bandwidth: f64) -> Result<Self> {
        self.with_window(Window::Global(bandwidth))
    }

    pub fn data(&self) -> &'a FunctionalDataset {
        self.data
    }

    pub fn kernel(&self) -> Kernel {
        self.kernel
    }

    pub fn metric(&self) -> &SemiMetric {
        &self.metric
    }

    pub fn window(&self) -> Window {
        self.window
    }

    /// The global bandwidth, if the window has one.
    pub fn bandwidth(&self) -> Option<f64> {
        match self.window {
            Window::Global(h) => Some(h),
            Window::Neighbors(_) => None,
        }
    }

    pub fn fitted_values_mode(&self) -> FittedValues {
        self.fitted_values
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Distances from `x0` to every training curve.
    pub fn distances(&self, x0: &Curve) -> Result<Vec<f64>> {
        if !same_grid(x0.grid(), self.data.grid()) {
            return Err(Error::GridMismatch);
        }
        let e = self.metric.embed(x0)?;
        Ok(self.cache.embeddings.iter().map(|x| euclidean(x, &e)).collect())
    }

    pub fn weight_profile(&self, x0: &Curve) -> Result<WeightProfile> {
        let d = self.distances(x0)?;
        let h = self.window.local_bandwidth(&d, None);
        Ok(WeightProfile::from_distances(self.kernel, h, &d))
    }

    /// `r̂(x0)` using the dataset's own responses.
    pub fn estimate(&self, x0: &Curve) -> Result<f64> {
        self.weight_profile(x0)?.estimate(self.data.responses())
    }

    /// Row-major `n x n` matrix of training distances.
    pub fn pairwise(&self) -> &[f64] {
        self.cache.pairwise.get_or_init(|| {
            let emb = &self.cache.embeddings;
            let n = emb.len();
            let rows: Vec<Vec<f64>> = (0..n)
                .into_par_iter()
                .map(|i| emb.iter().map(|x| euclidean(&emb[i], x)).collect())
                .collect();
            rows.concat()
        })
    }

    /// Weights of the training curves around training curve `i`.
    pub fn training_profile(&self, i: usize, leave_one_out: bool) -> WeightProfile {
        let n = self.len();
        let row = &self.pairwise()[i * n..(i + 1) * n];
        self.row_profile(self.window, i, row, leave_one_out)
    }

    fn row_profile(&self, window: Window, i: usize, row: &[f64], leave_one_out: bool) -> WeightProfile {
        if leave_one_out {
            let h = window.local_bandwidth(row, Some(i));
            let mut d = row.to_vec();
            d[i] = f64::INFINITY;
            WeightProfile::from_distances(self.kernel, h, &d)
        } else {
            WeightProfile::from_distances(self.kernel, window.local_bandwidth(row, None), row)
        }
    }

    /// `r̂(X_i)` for sample `i` with the given responses, under the
    /// configured [`FittedValues`] mode.
    pub fn fitted_value(&self, i: usize, responses: &[f64]) -> Result<f64> {
        let loo = self.fitted_values == FittedValues::LeaveOneOut;
        self.training_profile(i, loo).estimate_at(responses, Some(i))
    }

    /// All training fits; entries with empty neighborhoods are `None`.
    pub fn fitted_values(&self, responses: &[f64]) -> Vec<Option<f64>> {
        (0..self.len()).map(|i| self.fitted_value(i, responses).ok()).collect()
    }

    /// Row-stochastic smoother matrix with self-inclusive rows:
    /// `S_ij = K(d(X_j, X_i)/h_i) / Σ_k K(d(X_k, X_i)/h_i)`.
    pub fn smoother_matrix(&self) -> DMatrix<f64> {
        let n = self.len();
        let mut s = DMatrix::zeros(n, n);
        for i in 0..n {
            let p = self.training_profile(i, false);
            let total = p.total();
            for (j, k) in p.weights.iter().enumerate() {
                s[(i, j)] = k / total;
            }
        }
        s
    }

    /// Leave-one-out squared prediction error with `window`. Samples
    /// whose leave-one-out neighborhood is empty add `penalty`.
    pub fn cv_criterion(&self, window: Window, responses: &[f64], penalty: f64) -> f64 {
        let n = self.len();
        let pairwise = self.pairwise();
        let mut total = 0.0;
        for i in 0..n {
            let row = &pairwise[i * n..(i + 1) * n];
            let h = window.local_bandwidth(row, Some(i));
            let (mut num, mut den) = (0.0, 0.0);
            for (j, &d) in row.iter().enumerate() {
                if j == i {
                    continue;
                }
                let k = self.kernel.weight(if d == 0.0 { 0.0 } else { d / h });
                num += k * responses[j];
                den += k;
            }
            total += if den > 0.0 {
                let r = responses[i] - num / den;
                r * r
            } else {
                penalty
            };
        }
        total
    }

    /// Leave-one-out cross-validation over `grid`; ties go to the larger
    /// window.
    pub fn cross_validate(&self, grid: &[Window], responses: &[f64]) -> Result<Window> {
        if grid.is_empty() {
            return Err(Error::InvalidArgument("empty bandwidth candidate grid".into()));
        }
        if self.len() < 3 {
            return Err(Error::InsufficientData(format!(
                "cross-validation needs at least 3 samples, got {}",
                self.len()
            )));
        }
        for w in grid {
            w.validate()?;
        }
        let penalty = sample_variance(responses);
        self.pairwise();
        let scores: Vec<f64> = grid
            .par_iter()
            .map(|&w| self.cv_criterion(w, responses, penalty))
            .collect();
        select_window(grid, &scores).ok_or_else(|| Error::InvalidArgument("no finite CV score".into()))
    }

    /// Quantiles of the positive training distances at `count`
    /// probabilities equally spaced on `[0.05, 0.5]` (just `0.275` when
    /// `count == 1`), by linear interpolation between order statistics.
    pub fn quantile_grid(&self, count: usize) -> Result<Vec<f64>> {
        if count == 0 {
            return Err(Error::InvalidArgument("candidate count must be >= 1".into()));
        }
        let n = self.len();
        if n < 2 {
            return Err(Error::InsufficientData("need at least 2 curves".into()));
        }
        let pairwise = self.pairwise();
        let mut d: Vec<f64> = (0..n)
            .flat_map(|i| (i + 1..n).map(move |j| pairwise[i * n + j]))
            .filter(|&x| x > 0.0)
            .collect();
        if d.is_empty() {
            return Err(Error::DegenerateDistances);
        }
        d.sort_by(f64::total_cmp);
        Ok(quantile_probabilities(count)
            .into_iter()
            .map(|p| sorted_quantile(&d, p))
            .collect())
    }
}

/// Probabilities used by [`default_h_grid`].
pub fn quantile_probabilities(count: usize) -> Vec<f64> {
    const LO: f64 = 0.05;
    const HI: f64 = 0.5;
    if count == 1 {
        return vec![0.5 * (LO + HI)];
    }
    (0..count)
        .map(|k| LO + (HI - LO) * k as f64 / (count - 1) as f64)
        .collect()
}

fn sorted_quantile(sorted: &[f64], p: f64) -> f64 {
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    let frac = pos - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

/// The window with the smallest finite score, preferring the larger window
/// on ties.
pub(crate) fn select_window(grid: &[Window], scores: &[f64]) -> Option<Window> {
    let mut best: Option<usize> = None;
    for (k, s) in scores.iter().enumerate() {
        if !s.is_finite() {
            continue;
        }
        best = match best {
            Some(b) if *s > scores[b] || (*s == scores[b] && grid[k].size() <= grid[b].size()) => Some(b),
            _ => Some(k),
        };
    }
    best.map(|b| grid[b])
}

/// Resolution of a [`Bandwidth`] rule before any cross-validation.
#[derive(Debug, Clone, PartialEq)]
pub enum Candidates {
    Fixed(Window),
    Search(Vec<Window>),
}

/// Neighbor counts from `min(10, n/2)` to `n/2` in steps of `ceil(n/100)`,
/// capped at `n - 2` so every leave-one-out fit has a `(k+1)`-th neighbor.
pub fn default_k_grid(n: usize) -> Result<Vec<usize>> {
    if n < 3 {
        return Err(Error::InsufficientData(format!(
            "neighbor cross-validation needs at least 3 samples, got {n}"
        )));
    }
    let hi = (n / 2).clamp(1, n - 2);
    let lo = hi.min(10);
    let step = n.div_ceil(100);
    Ok((lo..=hi).step_by(step).collect())
}

pub fn sample_variance(y: &[f64]) -> f64 {
    let n = y.len();
    if n < 2 {
        return 0.0;
    }
    let mean = y.iter().sum::<f64>() / n as f64;
    y.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64
}

/// Kernel weights of the training curves at `x0`.
pub fn weight_profile(ds: &FunctionalDataset, x0: &Curve, cfg: &SmootherConfig) -> Result<WeightProfile> {
    Smoother::fit(ds, cfg)?.weight_profile(x0)
}

/// Functional Nadaraya–Watson estimate `Σ K_i Y_i / Σ K_i` at `x0`.
pub fn nw_estimate(ds: &FunctionalDataset, x0: &Curve, cfg: &SmootherConfig) -> Result<f64> {
    Smoother::fit(ds, cfg)?.estimate(x0)
}

/// Cross-validated global bandwidth for a config whose rule searches over
/// global bandwidths.
pub fn cv_bandwidth(ds: &FunctionalDataset, cfg: &SmootherConfig) -> Result<f64> {
    match cfg.bandwidth {
        Bandwidth::CrossValidated(_) | Bandwidth::CrossValidatedQuantiles(_) => Smoother::fit(ds, cfg)?
            .bandwidth()
            .ok_or_else(|| Error::InvalidArgument("no global bandwidth".into())),
        _ => Err(Error::InvalidArgument(
            "cv_bandwidth needs a global cross-validation bandwidth rule".into(),
        )),
    }
}

/// Cross-validated window for any searching rule.
pub fn cv_window(ds: &FunctionalDataset, cfg: &SmootherConfig) -> Result<Window> {
    match cfg.bandwidth {
        Bandwidth::Fixed(_) | Bandwidth::Neighbors(_) => {
            Err(Error::InvalidArgument("cv_window needs a cross-validation rule".into()))
        }
        _ => Ok(Smoother::fit(ds, cfg)?.window()),
    }
}

/// Candidate bandwidths from the pooled pairwise-distance distribution.
pub fn default_h_grid(ds: &FunctionalDataset, spec: &SemiMetric, count: usize) -> Result<Vec<f64>> {
    let cfg = SmootherConfig::new(Kernel::Quadratic, spec.clone(), Bandwidth::Fixed(1.0));
    Smoother::fit(ds, &cfg)?.quantile_grid(count)
}
