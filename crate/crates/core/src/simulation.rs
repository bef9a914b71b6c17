//! Simulated functional regression and the Monte Carlo coverage study.
//!
//! Covariates are `X(t) = sin(ωt) + (a + 2π)t + b` on `[-1, 1]` with
//! `ω ~ U(0, 2π)` and `a, b ~ U(0, 1)`; responses are
//! `Y = r(X) + ε`, `ε ~ N(0, σ²)`, where
//! `r(x) = ∫_{-1}^{1} |x'(t)| (1 - cos πt) dt`.
//!
//! Each replication draws from its own ChaCha stream selected by the
//! replication index, so reports do not depend on scheduling.

use std::collections::BTreeMap;
use std::f64::consts::{PI, TAU};
use std::sync::Arc;

use rand::distr::Open01;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::Serialize;

use crate::curves::{Curve, FunctionalDataset, Grid};
use crate::empirical_likelihood::IntervalMethod;
use crate::error::{Error, Result};
use crate::inference::PointwiseInference;
use crate::kernel_smoothing::{Bandwidth, FittedValues, Kernel, Smoother, SmootherConfig, Window};
use crate::semimetric::SemiMetric;

/// Latent parameters of one simulated curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CurveParams {
    pub omega: f64,
    pub a: f64,
    pub b: f64,
}

impl CurveParams {
    pub fn value(&self, t: f64) -> f64 {
        (self.omega * t).sin() + (self.a + TAU) * t + self.b
    }

    pub fn derivative(&self, t: f64) -> f64 {
        self.omega * (self.omega * t).cos() + self.a + TAU
    }
}

/// `points` equispaced abscissae on `[-1, 1]`.
pub fn simulation_grid(points: usize) -> Result<Arc<Grid>> {
    Ok(Arc::new(Grid::uniform(-1.0, 1.0, points)?))
}

pub fn curve_from_params(grid: &Arc<Grid>, params: CurveParams) -> Curve {
    Curve::from_fn(Arc::clone(grid), |t| params.value(t)).expect("simulated curves are finite")
}

pub fn sample_params<R: Rng + ?Sized>(rng: &mut R) -> CurveParams {
    let u = |rng: &mut R| -> f64 { rng.sample(Open01) };
    let omega = TAU * u(rng);
    let a = u(rng);
    let b = u(rng);
    CurveParams { omega, a, b }
}

/// Draws one covariate curve and returns it with its parameters.
pub fn generate_curve<R: Rng + ?Sized>(grid: &Arc<Grid>, rng: &mut R) -> (Curve, CurveParams) {
    let params = sample_params(rng);
    (curve_from_params(grid, params), params)
}

/// Below this distance from `π` the closed form is replaced by quadrature.
pub const SINGULAR_WINDOW: f64 = 1e-6;

/// `r(x)` for the curve with parameters `p`.
///
/// `x'(t) = ω cos(ωt) + a + 2π > 0` whenever `ω < 2π`, so the absolute value
/// drops and `r = 2(a + 2π) + 2 sin ω + 2ω² sin ω / (ω² - π²)`. The last term
/// has a removable singularity at `ω = π`, where quadrature is used.
pub fn true_regression(p: CurveParams) -> f64 {
    let w = p.omega;
    if (w - PI).abs() < SINGULAR_WINDOW || !(0.0..TAU).contains(&w) {
        return true_regression_quadrature(p);
    }
    let s = w.sin();
    2.0 * (p.a + TAU) + 2.0 * s + 2.0 * w * w * s / ((w - PI) * (w + PI))
}

/// `r(x)` by adaptive Simpson quadrature of `|x'(t)| (1 - cos πt)`.
pub fn true_regression_quadrature(p: CurveParams) -> f64 {
    let f = |t: f64| p.derivative(t).abs() * (1.0 - (PI * t).cos());
    adaptive_simpson(&f, -1.0, 0.0, 1e-14) + adaptive_simpson(&f, 0.0, 1.0, 1e-14)
}

fn adaptive_simpson(f: &impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn simpson(fa: f64, fm: f64, fb: f64, a: f64, b: f64) -> f64 {
        (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    }
    #[allow(clippy::too_many_arguments)]
    fn recurse(
        f: &impl Fn(f64) -> f64,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = simpson(fa, flm, fm, a, m);
        let right = simpson(fm, frm, fb, m, b);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        recurse(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
            + recurse(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
    }
    let (fa, fm, fb) = (f(a), f(0.5 * (a + b)), f(b));
    let whole = simpson(fa, fm, fb, a, b);
    recurse(f, a, b, fa, fm, fb, whole, tol, 48)
}

/// A simulated training or test set with the latent truth.
#[derive(Debug, Clone)]
pub struct SimulatedData {
    pub dataset: FunctionalDataset,
    pub params: Vec<CurveParams>,
    /// `r(X_i)`.
    pub truth: Vec<f64>,
}

/// Draws `n` curves and responses with noise variance `sigma2`.
pub fn simulate_dataset<R: Rng + ?Sized>(
    grid: &Arc<Grid>,
    n: usize,
    sigma2: f64,
    rng: &mut R,
) -> Result<SimulatedData> {
    let noise =
        Normal::new(0.0, sigma2.sqrt()).map_err(|e| Error::InvalidConfig(format!("noise variance {sigma2}: {e}")))?;
    let mut curves = Vec::with_capacity(n);
    let mut params = Vec::with_capacity(n);
    let mut truth = Vec::with_capacity(n);
    let mut responses = Vec::with_capacity(n);
    for _ in 0..n {
        let (c, p) = generate_curve(grid, rng);
        let r = true_regression(p);
        curves.push(c);
        params.push(p);
        truth.push(r);
        responses.push(r + noise.sample(rng));
    }
    Ok(SimulatedData {
        dataset: FunctionalDataset::new(curves, responses)?,
        params,
        truth,
    })
}

/// Partially linear data `Y = Zᵀβ + r(X) + ε` with standard normal
/// covariates `Z`, drawn after each curve.
pub fn simulate_partially_linear<R: Rng + ?Sized>(
    grid: &Arc<Grid>,
    n: usize,
    sigma2: f64,
    beta: &[f64],
    rng: &mut R,
) -> Result<SimulatedData> {
    let noise =
        Normal::new(0.0, sigma2.sqrt()).map_err(|e| Error::InvalidConfig(format!("noise variance {sigma2}: {e}")))?;
    let p = beta.len();
    let mut curves = Vec::with_capacity(n);
    let mut params = Vec::with_capacity(n);
    let mut truth = Vec::with_capacity(n);
    let mut responses = Vec::with_capacity(n);
    let mut z = nalgebra::DMatrix::zeros(n, p);
    for i in 0..n {
        let (c, prm) = generate_curve(grid, rng);
        let r = true_regression(prm);
        let mut linear = 0.0;
        for (j, b) in beta.iter().enumerate() {
            let v: f64 = rng.sample(rand_distr::StandardNormal);
            z[(i, j)] = v;
            linear += b * v;
        }
        curves.push(c);
        params.push(prm);
        truth.push(r);
        responses.push(linear + r + noise.sample(rng));
    }
    let dataset = FunctionalDataset::new(curves, responses)?;
    let dataset = if p > 0 {
        dataset.with_linear_covariates(z)?
    } else {
        dataset
    };
    Ok(SimulatedData { dataset, params, truth })
}

/// RNG for replication `index` of a study seeded with `seed`.
pub fn replication_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Cross-validated window family used in each replication.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BandwidthSearch {
    /// Neighbor counts from [`crate::kernel_smoothing::default_k_grid`],
    /// with a local bandwidth at every point.
    Neighbors,
    /// `count` global bandwidths from
    /// [`crate::kernel_smoothing::default_h_grid`].
    Quantiles(usize),
}

impl BandwidthSearch {
    pub fn rule(self) -> Bandwidth {
        match self {
            BandwidthSearch::Neighbors => Bandwidth::CrossValidatedNeighborsAuto,
            BandwidthSearch::Quantiles(count) => Bandwidth::CrossValidatedQuantiles(count),
        }
    }

    pub fn name(self) -> String {
        match self {
            BandwidthSearch::Neighbors => "cv:knn".into(),
            BandwidthSearch::Quantiles(count) => format!("cv:quantiles:{count}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub n: usize,
    pub sigma2: f64,
    pub n_test: usize,
    pub n_reps: usize,
    pub grid_points: usize,
    pub seed: u64,
    pub methods: Vec<IntervalMethod>,
    pub alpha: f64,
    pub bandwidth_search: BandwidthSearch,
    pub kernel: Kernel,
    pub derivative_order: usize,
    pub fitted_values: FittedValues,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            n: 200,
            sigma2: 0.5,
            n_test: 100,
            n_reps: 50,
            grid_points: 101,
            seed: 20100,
            methods: vec![
                IntervalMethod::El,
                IntervalMethod::Normal,
                IntervalMethod::ElCorrected,
                IntervalMethod::NormalCorrected,
            ],
            alpha: 0.05,
            bandwidth_search: BandwidthSearch::Neighbors,
            kernel: Kernel::Quadratic,
            derivative_order: 1,
            fitted_values: FittedValues::SelfInclusive,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.n < 10 {
            return bad(format!("n must be at least 10, got {}", self.n));
        }
        if self.n_reps == 0 || self.n_test == 0 {
            return bad("n_reps and n_test must be positive".into());
        }
        if !(self.sigma2 > 0.0 && self.sigma2.is_finite()) {
            return bad(format!("sigma2 must be positive, got {}", self.sigma2));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad(format!("alpha must lie in (0, 1), got {}", self.alpha));
        }
        if self.methods.is_empty() {
            return bad("no interval methods requested".into());
        }
        if self.bandwidth_search == BandwidthSearch::Quantiles(0) {
            return bad("the quantile search needs at least one candidate".into());
        }
        if self.grid_points < self.derivative_order + 2 {
            return bad(format!(
                "{} grid points cannot support derivative order {}",
                self.grid_points, self.derivative_order
            ));
        }
        Ok(())
    }

    pub fn smoother_config(&self) -> SmootherConfig {
        SmootherConfig::new(
            self.kernel,
            SemiMetric::deriv_l2(self.derivative_order),
            self.bandwidth_search.rule(),
        )
        .with_fitted_values(self.fitted_values)
    }
}

/// What happened to one method at one test curve.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Outcome {
    Interval {
        lo: f64,
        hi: f64,
        covered: bool,
    },
    /// Neighborhood empty or too small for the method.
    Skipped {
        reason: String,
    },
    Failed {
        reason: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QueryRecord {
    pub replication: usize,
    pub query: usize,
    pub truth: f64,
    pub estimate: Option<f64>,
    pub outcomes: BTreeMap<IntervalMethod, Outcome>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct MethodTally {
    pub intervals: usize,
    pub covered: usize,
    pub total_length: f64,
    pub skipped: usize,
    pub failed: usize,
}

impl MethodTally {
    fn add(&mut self, o: &Outcome) {
        match o {
            Outcome::Interval { lo, hi, covered } => {
                self.intervals += 1;
                self.covered += usize::from(*covered);
                self.total_length += hi - lo;
            }
            Outcome::Skipped { .. } => self.skipped += 1,
            Outcome::Failed { .. } => self.failed += 1,
        }
    }

    fn merge(&mut self, o: &MethodTally) {
        self.intervals += o.intervals;
        self.covered += o.covered;
        self.total_length += o.total_length;
        self.skipped += o.skipped;
        self.failed += o.failed;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplicationRecord {
    pub index: usize,
    pub window: Window,
    pub sigma2_hat: f64,
    pub tallies: BTreeMap<IntervalMethod, MethodTally>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MethodSummary {
    pub method: IntervalMethod,
    pub coverage: f64,
    pub avg_length: f64,
    pub n_intervals: usize,
    pub n_skipped: usize,
    pub n_failed: usize,
}

/// The resolved scenario, enough to rerun the study exactly.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Scenario {
    pub n: usize,
    pub sigma2: f64,
    pub n_test: usize,
    pub n_reps: usize,
    pub grid_points: usize,
    pub grid_start: f64,
    pub grid_end: f64,
    pub seed: u64,
    pub alpha: f64,
    pub methods: Vec<IntervalMethod>,
    pub kernel: String,
    pub semimetric: String,
    pub bandwidth_rule: String,
    pub fitted_values: String,
}

impl Scenario {
    fn from_config(cfg: &SimConfig) -> Self {
        Self {
            n: cfg.n,
            sigma2: cfg.sigma2,
            n_test: cfg.n_test,
            n_reps: cfg.n_reps,
            grid_points: cfg.grid_points,
            grid_start: -1.0,
            grid_end: 1.0,
            seed: cfg.seed,
            alpha: cfg.alpha,
            methods: cfg.methods.clone(),
            kernel: format!("{:?}", cfg.kernel).to_lowercase(),
            semimetric: format!("deriv:{}", cfg.derivative_order),
            bandwidth_rule: cfg.bandwidth_search.name(),
            fitted_values: match cfg.fitted_values {
                FittedValues::SelfInclusive => "self_inclusive".into(),
                FittedValues::LeaveOneOut => "leave_one_out".into(),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoverageReport {
    pub scenario: Scenario,
    pub methods: Vec<MethodSummary>,
    pub replications: Vec<ReplicationRecord>,
    pub queries: Vec<QueryRecord>,
}

impl CoverageReport {
    pub fn summary(&self, method: IntervalMethod) -> Option<&MethodSummary> {
        self.methods.iter().find(|m| m.method == method)
    }

    /// Skipped test points over all methods.
    pub fn total_skipped(&self) -> usize {
        self.methods.iter().map(|m| m.n_skipped).sum()
    }
}

fn classify(err: &Error) -> Outcome {
    match err {
        Error::EmptyNeighborhood { .. } | Error::InsufficientSupport { .. } => Outcome::Skipped {
            reason: err.to_string(),
        },
        _ => Outcome::Failed {
            reason: err.to_string(),
        },
    }
}

struct Replication {
    record: ReplicationRecord,
    queries: Vec<QueryRecord>,
}

fn run_replication(cfg: &SimConfig, grid: &Arc<Grid>, index: usize) -> Result<Replication> {
    let mut rng = replication_rng(cfg.seed, index as u64);
    let train = simulate_dataset(grid, cfg.n, cfg.sigma2, &mut rng)?;
    let smoother = Smoother::fit(&train.dataset, &cfg.smoother_config())?;
    let window = smoother.window();
    let engine = PointwiseInference::new(smoother, train.dataset.responses().to_vec())?;
    let sigma2_hat = engine.residual_variance().map(|v| v.sigma2).unwrap_or(f64::NAN);

    let mut tallies: BTreeMap<IntervalMethod, MethodTally> =
        cfg.methods.iter().map(|&m| (m, MethodTally::default())).collect();
    let mut queries = Vec::with_capacity(cfg.n_test);
    for q in 0..cfg.n_test {
        let (x0, params) = generate_curve(grid, &mut rng);
        let truth = true_regression(params);
        let (estimate, outcomes): (Option<f64>, BTreeMap<_, _>) = match engine.intervals(&x0, &cfg.methods, cfg.alpha) {
            Ok(results) => {
                let est = engine.query(&x0).ok().map(|p| p.estimate);
                let outcomes = cfg
                    .methods
                    .iter()
                    .zip(results)
                    .map(|(&m, r)| {
                        let o = match r {
                            Ok(iv) => Outcome::Interval {
                                lo: iv.lo,
                                hi: iv.hi,
                                covered: iv.contains(truth),
                            },
                            Err(e) => classify(&e),
                        };
                        (m, o)
                    })
                    .collect();
                (est, outcomes)
            }
            Err(e) => (None, cfg.methods.iter().map(|&m| (m, classify(&e))).collect()),
        };
        for (m, o) in &outcomes {
            tallies.get_mut(m).expect("tally per method").add(o);
        }
        queries.push(QueryRecord {
            replication: index,
            query: q,
            truth,
            estimate,
            outcomes,
        });
    }
    Ok(Replication {
        record: ReplicationRecord {
            index,
            window,
            sigma2_hat,
            tallies,
        },
        queries,
    })
}

/// Runs the study on the current rayon pool.
pub fn run_coverage_study(cfg: &SimConfig) -> Result<CoverageReport> {
    cfg.validate()?;
    let grid = simulation_grid(cfg.grid_points)?;
    let reps = (0..cfg.n_reps)
        .into_par_iter()
        .map(|i| run_replication(cfg, &grid, i))
        .collect::<Result<Vec<_>>>()?;

    let mut totals: BTreeMap<IntervalMethod, MethodTally> =
        cfg.methods.iter().map(|&m| (m, MethodTally::default())).collect();
    let mut replications = Vec::with_capacity(reps.len());
    let mut queries = Vec::with_capacity(cfg.n_reps * cfg.n_test);
    for rep in reps {
        for (m, t) in &rep.record.tallies {
            totals.get_mut(m).expect("tally per method").merge(t);
        }
        replications.push(rep.record);
        queries.extend(rep.queries);
    }

    let methods = cfg
        .methods
        .iter()
        .map(|m| {
            let t = totals[m];
            let denom = t.intervals.max(1) as f64;
            MethodSummary {
                method: *m,
                coverage: t.covered as f64 / denom,
                avg_length: t.total_length / denom,
                n_intervals: t.intervals,
                n_skipped: t.skipped,
                n_failed: t.failed,
            }
        })
        .collect();

    Ok(CoverageReport {
        scenario: Scenario::from_config(cfg),
        methods,
        replications,
        queries,
    })
}

/// Runs the study on a dedicated pool of `threads` workers.
pub fn run_coverage_study_with_threads(cfg: &SimConfig, threads: usize) -> Result<CoverageReport> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
    pool.install(|| run_coverage_study(cfg))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn degenerate_parameters_give_a_line() {
        let grid = simulation_grid(11).unwrap();
        let c = curve_from_params(
            &grid,
            CurveParams {
                omega: 0.0,
                a: 0.0,
                b: 0.0,
            },
        );
        for (t, v) in grid.points().iter().zip(c.values()) {
            assert_abs_diff_eq!(*v, TAU * t, epsilon = 1e-14);
        }
    }

    #[test]
    fn parameters_stay_in_support() {
        let mut rng = replication_rng(3, 0);
        for _ in 0..10_000 {
            let p = sample_params(&mut rng);
            assert!(p.omega > 0.0 && p.omega < TAU);
            assert!(p.a > 0.0 && p.a < 1.0);
            assert!(p.b > 0.0 && p.b < 1.0);
        }
    }

    #[test]
    fn small_frequency_limit() {
        // x' = 2π constant and ∫(1 - cos πt) = 2
        let r = true_regression(CurveParams {
            omega: 1e-9,
            a: 0.0,
            b: 0.3,
        });
        assert_abs_diff_eq!(r, 4.0 * PI, epsilon = 1e-8);
        assert_abs_diff_eq!(
            true_regression_quadrature(CurveParams {
                omega: 0.0,
                a: 0.0,
                b: 0.0
            }),
            4.0 * PI,
            epsilon = 1e-10
        );
    }

    #[test]
    fn intercept_does_not_matter() {
        let p = CurveParams {
            omega: 2.1,
            a: 0.4,
            b: 0.1,
        };
        let q = CurveParams { b: 0.9, ..p };
        assert_eq!(true_regression(p), true_regression(q));
    }

    #[test]
    fn closed_form_near_pi_uses_quadrature() {
        let p = CurveParams {
            omega: PI + 1e-8,
            a: 0.2,
            b: 0.0,
        };
        let near = CurveParams { omega: PI + 2e-6, ..p };
        assert_abs_diff_eq!(true_regression(p), true_regression(near), epsilon = 1e-4);
        assert_abs_diff_eq!(true_regression(p), true_regression_quadrature(p), epsilon = 1e-12);
    }

    #[test]
    fn replication_streams_are_reproducible() {
        let grid = simulation_grid(21).unwrap();
        let a = simulate_dataset(&grid, 5, 0.5, &mut replication_rng(7, 2)).unwrap();
        let b = simulate_dataset(&grid, 5, 0.5, &mut replication_rng(7, 2)).unwrap();
        let c = simulate_dataset(&grid, 5, 0.5, &mut replication_rng(7, 3)).unwrap();
        assert_eq!(a.dataset.responses(), b.dataset.responses());
        assert_ne!(a.dataset.responses(), c.dataset.responses());
        for (x, y) in a.dataset.curves().iter().zip(b.dataset.curves()) {
            assert_eq!(x.values(), y.values());
        }
    }

    #[test]
    fn config_validation() {
        let ok = SimConfig::default();
        assert!(ok.validate().is_ok());
        for bad in [
            SimConfig { n: 5, ..ok.clone() },
            SimConfig {
                sigma2: 0.0,
                ..ok.clone()
            },
            SimConfig {
                n_reps: 0,
                ..ok.clone()
            },
            SimConfig {
                n_test: 0,
                ..ok.clone()
            },
            SimConfig {
                alpha: 1.0,
                ..ok.clone()
            },
            SimConfig {
                methods: vec![],
                ..ok.clone()
            },
        ] {
            assert!(matches!(run_coverage_study(&bad), Err(Error::InvalidConfig(_))));
        }
    }
}
