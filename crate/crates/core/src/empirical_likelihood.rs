//! Empirical likelihood for the kernel-weighted mean.
//!
//! For scores `w_i = K_i (Y_i - mu)` the log ratio is
//! `lr(mu) = 2 Σ log(1 + λ w_i)` where `λ` solves
//! `g(λ) = Σ w_i / (1 + λ w_i) = 0`. Samples with `K_i = 0` have zero
//! scores and are inert in both sums. When zero is not inside the convex
//! hull of the scores no feasible weights exist and `lr = +∞`.
//!
//! Intervals are `{mu : lr(mu) <= q}` with `q` the chi-square(1) quantile,
//! found by geometric bracketing outward from the estimating-equation root
//! and Brent's method on each side.

use serde::Serialize;

use crate::curves::{Curve, FunctionalDataset};
use crate::error::{Error, Result};
use crate::inference::PointwiseInference;
use crate::kernel_smoothing::{Smoother, SmootherConfig};
use crate::quantile::chi2_quantile;
use crate::roots::brent;

/// Tolerance on `|g(λ)|` (for scores normalised to unit max magnitude).
pub const LAMBDA_TOL: f64 = 1e-12;
/// Offset keeping `1 + λ w_i` away from zero at the edges of the search
/// interval.
const EDGE_OFFSET: f64 = 1e-10;
const MAX_EXPANSIONS: usize = 60;
/// Absolute tolerance on interval endpoints.
pub const ENDPOINT_TOL: f64 = 1e-12;

/// Estimating-function values for one candidate `mu`.
#[derive(Debug, Clone, PartialEq)]
pub struct ElProblem {
    scores: Vec<f64>,
    n: usize,
}

impl ElProblem {
    pub fn new(scores: Vec<f64>, n: usize) -> Result<Self> {
        if scores.len() > n {
            return Err(Error::InvalidArgument(format!(
                "{} scores exceed the sample count {n}",
                scores.len()
            )));
        }
        if scores.iter().any(|w| !w.is_finite()) {
            return Err(Error::InvalidArgument("non-finite score".into()));
        }
        Ok(Self { scores, n })
    }

    /// Scores `K_i (Y_i - mu)`.
    pub fn from_weights(weights: &[f64], responses: &[f64], mu: f64) -> Result<Self> {
        if weights.len() != responses.len() {
            return Err(Error::InvalidArgument("weights and responses differ in length".into()));
        }
        let scores = weights.iter().zip(responses).map(|(k, y)| k * (y - mu)).collect();
        Self::new(scores, weights.len())
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn n(&self) -> usize {
        self.n
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElEvaluation {
    /// `-2 log` likelihood ratio; `+∞` on the boundary.
    pub lr: f64,
    pub lambda: f64,
    pub converged: bool,
    /// Zero lies outside the open convex hull of the scores.
    pub boundary: bool,
}

impl ElEvaluation {
    fn boundary() -> Self {
        Self {
            lr: f64::INFINITY,
            lambda: f64::NAN,
            converged: false,
            boundary: true,
        }
    }
}

/// Solves for the Lagrange multiplier and evaluates the log ratio.
///
/// The scores are rescaled to unit maximum magnitude before solving, so
/// `tol` bounds `|g|` on that scale; the returned `lambda` is on the
/// original scale. `converged` also holds when the bracket has shrunk to
/// adjacent floating-point numbers.
pub fn solve_lambda(p: &ElProblem, tol: f64) -> ElEvaluation {
    solve_scores(p.scores(), tol)
}

fn solve_scores(scores: &[f64], tol: f64) -> ElEvaluation {
    let (mut lo_w, mut hi_w) = (0.0_f64, 0.0_f64);
    for &w in scores {
        lo_w = lo_w.min(w);
        hi_w = hi_w.max(w);
    }
    if lo_w == 0.0 && hi_w == 0.0 {
        return ElEvaluation {
            lr: 0.0,
            lambda: 0.0,
            converged: true,
            boundary: false,
        };
    }
    if lo_w >= 0.0 || hi_w <= 0.0 {
        return ElEvaluation::boundary();
    }

    let scale = hi_w.max(-lo_w);
    let w: Vec<f64> = scores.iter().filter(|&&x| x != 0.0).map(|x| x / scale).collect();
    let (max, min) = (hi_w / scale, lo_w / scale);
    let lo = (-1.0 + EDGE_OFFSET) / max;
    let hi = (-1.0 + EDGE_OFFSET) / min;
    let g = |l: f64| w.iter().map(|x| x / (1.0 + l * x)).sum::<f64>();

    let Some(root) = brent(g, lo, hi, 0.0, tol, 500) else {
        return ElEvaluation::boundary();
    };
    let lambda = root.x;
    let lr = 2.0 * w.iter().map(|x| (lambda * x).ln_1p()).sum::<f64>();
    ElEvaluation {
        lr: lr.max(0.0),
        lambda: lambda / scale,
        converged: root.converged,
        boundary: false,
    }
}

/// Empirical log ratio at `mu` for kernel weights and responses.
pub fn el_log_ratio(weights: &[f64], responses: &[f64], mu: f64) -> Result<ElEvaluation> {
    let p = ElProblem::from_weights(weights, responses, mu)?;
    Ok(solve_lambda(&p, LAMBDA_TOL))
}

/// Euclidean log ratio `Σ(n p_i - 1)^2` in closed form,
/// `(Σ w_i)^2 / Σ (w_i - w̄)^2` with `w̄ = Σ w_i / n`.
///
/// Unlike the empirical log ratio, `n` counts zero-weight samples too.
pub fn euclidean_log_ratio(weights: &[f64], responses: &[f64], mu: f64) -> Result<f64> {
    let p = ElProblem::from_weights(weights, responses, mu)?;
    euclidean_from_scores(p.scores())
}

fn euclidean_from_scores(w: &[f64]) -> Result<f64> {
    let n = w.len() as f64;
    let sum: f64 = w.iter().sum();
    let mean = sum / n;
    let denom: f64 = w.iter().map(|x| (x - mean) * (x - mean)).sum();
    let scale: f64 = w.iter().map(|x| x * x).sum();
    if denom.is_nan() || denom <= f64::EPSILON * scale {
        return Err(Error::DegenerateScores);
    }
    Ok(sum * sum / denom)
}

/// Interval constructions reported by the toolkit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum IntervalMethod {
    El,
    ElCorrected,
    Euclidean,
    Normal,
    NormalCorrected,
}

impl IntervalMethod {
    pub const ALL: [IntervalMethod; 5] = [
        IntervalMethod::El,
        IntervalMethod::ElCorrected,
        IntervalMethod::Euclidean,
        IntervalMethod::Normal,
        IntervalMethod::NormalCorrected,
    ];

    pub fn name(self) -> &'static str {
        match self {
            IntervalMethod::El => "el",
            IntervalMethod::ElCorrected => "el_corrected",
            IntervalMethod::Euclidean => "euclidean",
            IntervalMethod::Normal => "normal",
            IntervalMethod::NormalCorrected => "normal_corrected",
        }
    }

    pub fn is_corrected(self) -> bool {
        matches!(self, IntervalMethod::ElCorrected | IntervalMethod::NormalCorrected)
    }
}

impl std::fmt::Display for IntervalMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for IntervalMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        IntervalMethod::ALL
            .into_iter()
            .find(|m| m.name() == s.trim())
            .ok_or_else(|| Error::InvalidArgument(format!("unknown interval method `{s}`")))
    }
}

/// Likelihood variants accepted by [`el_confidence_interval`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ElVariant {
    Plain,
    Corrected,
    Euclidean,
}

impl ElVariant {
    pub fn method(self) -> IntervalMethod {
        match self {
            ElVariant::Plain => IntervalMethod::El,
            ElVariant::Corrected => IntervalMethod::ElCorrected,
            ElVariant::Euclidean => IntervalMethod::Euclidean,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IntervalDiagnostics {
    pub effective_count: usize,
    pub lambda_lo: Option<f64>,
    pub lambda_hi: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IntervalResult {
    pub method: IntervalMethod,
    pub estimate: f64,
    pub lo: f64,
    pub hi: f64,
    /// Confidence level `1 - alpha`.
    pub level: f64,
    pub diagnostics: IntervalDiagnostics,
}

impl IntervalResult {
    pub fn length(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn contains(&self, value: f64) -> bool {
        self.lo <= value && value <= self.hi
    }

    /// The interval moved by `offset`.
    pub fn shifted(&self, offset: f64) -> Self {
        Self {
            estimate: self.estimate + offset,
            lo: self.lo + offset,
            hi: self.hi + offset,
            ..*self
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Ratio {
    Empirical,
    Euclidean,
}

/// Endpoints of `{mu : lr(mu) <= chi2_1(1 - alpha)}` for the scores
/// `K_i (Y_i - mu)`; the centre is the root `Σ K_i Y_i / Σ K_i`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct LikelihoodInterval {
    pub center: f64,
    pub lo: f64,
    pub hi: f64,
    pub lambda_lo: Option<f64>,
    pub lambda_hi: Option<f64>,
}

pub(crate) fn likelihood_interval(
    weights: &[f64],
    responses: &[f64],
    alpha: f64,
    ratio: Ratio,
) -> Result<LikelihoodInterval> {
    let threshold = chi2_quantile(1.0 - alpha)?;

    // zero-weight samples only matter for the Euclidean denominator
    let (k, y): (Vec<f64>, Vec<f64>) = match ratio {
        Ratio::Empirical => weights
            .iter()
            .zip(responses)
            .filter(|(k, _)| **k > 0.0)
            .map(|(k, y)| (*k, *y))
            .unzip(),
        Ratio::Euclidean => (weights.to_vec(), responses.to_vec()),
    };
    let total: f64 = k.iter().sum();
    let center = k.iter().zip(&y).map(|(k, y)| k * y).sum::<f64>() / total;
    let se = k
        .iter()
        .zip(&y)
        .map(|(k, y)| (k * (y - center)).powi(2))
        .sum::<f64>()
        .sqrt()
        / total;
    if se == 0.0 {
        return Ok(LikelihoodInterval {
            center,
            lo: center,
            hi: center,
            lambda_lo: None,
            lambda_hi: None,
        });
    }

    let mut scores = vec![0.0; k.len()];
    let mut eval = |mu: f64| -> (f64, Option<f64>) {
        for ((s, k), y) in scores.iter_mut().zip(&k).zip(&y) {
            *s = k * (y - mu);
        }
        match ratio {
            Ratio::Empirical => {
                let e = solve_scores(&scores, LAMBDA_TOL);
                (e.lr, Some(e.lambda))
            }
            Ratio::Euclidean => (euclidean_from_scores(&scores).unwrap_or(f64::INFINITY), None),
        }
    };

    let mut endpoint = |dir: f64, side: &'static str| -> Result<(f64, Option<f64>)> {
        let mut inner = center;
        let mut step = se;
        let mut outer = None;
        for _ in 0..MAX_EXPANSIONS {
            let trial = center + dir * step;
            let (v, _) = eval(trial);
            if v.is_nan() {
                return Err(Error::BracketingFailed { side });
            }
            if v >= threshold {
                outer = Some((trial, v));
                break;
            }
            inner = trial;
            step *= 2.0;
        }
        let Some((mut outer, mut v_outer)) = outer else {
            return Err(Error::BracketingFailed { side });
        };

        // past the convex hull lr is infinite; move the outer end inward
        // until it is finite
        while v_outer.is_infinite() {
            let mid = 0.5 * (inner + outer);
            if mid == inner || mid == outer {
                return Ok((mid, None));
            }
            let (v, _) = eval(mid);
            if v >= threshold {
                outer = mid;
                v_outer = v;
            } else {
                inner = mid;
            }
        }

        let root = brent(|mu| eval(mu).0 - threshold, inner, outer, ENDPOINT_TOL, 0.0, 200)
            .ok_or(Error::BracketingFailed { side })?;
        Ok((root.x, eval(root.x).1))
    };

    let (lo, lambda_lo) = endpoint(-1.0, "lower")?;
    let (hi, lambda_hi) = endpoint(1.0, "upper")?;
    Ok(LikelihoodInterval {
        center,
        lo,
        hi,
        lambda_lo,
        lambda_hi,
    })
}

/// Scores of the bias-corrected estimating equation
/// `K_i (Y_i - r̂(X_i) + r̂(x0) - mu)`.
pub fn bias_corrected_scores(ds: &FunctionalDataset, x0: &Curve, cfg: &SmootherConfig, mu: f64) -> Result<ElProblem> {
    let smoother = Smoother::fit(ds, cfg)?;
    let engine = PointwiseInference::new(smoother, ds.responses().to_vec())?;
    let q = engine.query(x0)?;
    let corrected = q.corrected_responses()?;
    ElProblem::from_weights(&q.profile.weights, corrected, mu)
}

/// Pointwise `1 - alpha` interval for `r(x0)` from the empirical (or
/// Euclidean) likelihood ratio.
pub fn el_confidence_interval(
    ds: &FunctionalDataset,
    x0: &Curve,
    cfg: &SmootherConfig,
    alpha: f64,
    variant: ElVariant,
) -> Result<IntervalResult> {
    let smoother = Smoother::fit(ds, cfg)?;
    PointwiseInference::new(smoother, ds.responses().to_vec())?.interval(x0, variant.method(), alpha)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn g(scores: &[f64], l: f64) -> f64 {
        scores.iter().map(|w| w / (1.0 + l * w)).sum()
    }

    /// Plain bisection on g over the admissible interval.
    fn bisect_lambda(scores: &[f64]) -> f64 {
        let max = scores.iter().copied().fold(f64::MIN, f64::max);
        let min = scores.iter().copied().fold(f64::MAX, f64::min);
        let (mut a, mut b) = ((-1.0 + 1e-12) / max, (-1.0 + 1e-12) / min);
        for _ in 0..200 {
            let m = 0.5 * (a + b);
            if g(scores, m) > 0.0 {
                a = m;
            } else {
                b = m;
            }
        }
        0.5 * (a + b)
    }

    #[test]
    fn symmetric_scores_need_no_tilt() {
        let e = solve_lambda(&ElProblem::new(vec![-1.0, 1.0], 2).unwrap(), LAMBDA_TOL);
        assert!(e.converged && !e.boundary);
        assert_abs_diff_eq!(e.lambda, 0.0, epsilon = 1e-14);
        assert_abs_diff_eq!(e.lr, 0.0, epsilon = 1e-14);
    }

    #[test]
    fn asymmetric_two_point_lambda() {
        let scores = [-1.0, 2.0];
        let oracle = bisect_lambda(&scores);
        assert_abs_diff_eq!(oracle, 0.25, epsilon = 1e-12);
        let e = solve_lambda(&ElProblem::new(scores.to_vec(), 2).unwrap(), LAMBDA_TOL);
        assert_abs_diff_eq!(e.lambda, 0.25, epsilon = 1e-12);
        assert!(g(&scores, e.lambda).abs() <= 1e-11);
    }

    #[test]
    fn one_sided_scores_hit_the_boundary() {
        let e = solve_lambda(&ElProblem::new(vec![1.0, 2.0], 2).unwrap(), LAMBDA_TOL);
        assert!(e.boundary);
        assert_eq!(e.lr, f64::INFINITY);
        let e = solve_lambda(&ElProblem::new(vec![0.0, -3.0, 0.0], 3).unwrap(), LAMBDA_TOL);
        assert!(e.boundary);
    }

    #[test]
    fn all_zero_scores_are_degenerate_success() {
        let e = solve_lambda(&ElProblem::new(vec![0.0; 4], 4).unwrap(), LAMBDA_TOL);
        assert_eq!((e.lr, e.lambda, e.converged, e.boundary), (0.0, 0.0, true, false));
    }

    #[test]
    fn problem_validation() {
        assert!(ElProblem::new(vec![1.0, 2.0, 3.0], 2).is_err());
        assert!(ElProblem::new(vec![f64::NAN], 2).is_err());
    }

    #[test]
    fn two_point_log_ratio() {
        // scores (-0.5, 1.5): lambda = 2/3, lr = 2 (log(2/3) + log 2)
        let e = el_log_ratio(&[1.0, 1.0], &[0.0, 2.0], 0.5).unwrap();
        assert_abs_diff_eq!(e.lambda, 2.0 / 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(e.lr, 2.0 * ((2.0f64 / 3.0).ln() + 2f64.ln()), epsilon = 1e-12);
        assert_abs_diff_eq!(e.lr, 0.575364, epsilon = 1e-6);

        // simplex-grid oracle: p = (p1, 1 - p1) with p1 * 0.5 = (1 - p1) * 1.5
        // forces p1 = 3/4, so the ratio is (2 * 3/4)(2 * 1/4)
        let oracle = -2.0 * (1.5f64.ln() + 0.5f64.ln());
        assert_abs_diff_eq!(e.lr, oracle, epsilon = 1e-12);
    }

    #[test]
    fn lr_vanishes_at_weighted_mean() {
        let k = [0.9, 0.2, 0.5, 0.0, 1.0];
        let y = [1.0, -2.0, 0.3, 50.0, 4.0];
        let mu = k.iter().zip(&y).map(|(k, y)| k * y).sum::<f64>() / k.iter().sum::<f64>();
        assert!(el_log_ratio(&k, &y, mu).unwrap().lr < 1e-20);
        assert!(euclidean_log_ratio(&k, &y, mu).unwrap() < 1e-20);
    }

    #[test]
    fn zero_weight_samples_are_inert() {
        let k = [0.9, 0.2, 0.5, 1.0];
        let y = [1.0, -2.0, 0.3, 4.0];
        let a = el_log_ratio(&k, &y, 0.7).unwrap();
        let b = el_log_ratio(&[0.9, 0.2, 0.0, 0.5, 1.0, 0.0], &[1.0, -2.0, 9.0, 0.3, 4.0, -7.0], 0.7).unwrap();
        assert_eq!(a.lr, b.lr);
        assert_eq!(a.lambda, b.lambda);
    }

    #[test]
    fn euclidean_two_point_value() {
        // scores (-0.5, 1.5): numerator 1, centred scores (-1, 1), value 1/2
        assert_abs_diff_eq!(
            euclidean_log_ratio(&[1.0, 1.0], &[0.0, 2.0], 0.5).unwrap(),
            0.5,
            epsilon = 1e-15
        );
    }

    #[test]
    fn euclidean_is_invariant_to_weight_scale() {
        let k = [0.9, 0.2, 0.5, 0.0, 1.0];
        let y = [1.0, -2.0, 0.3, 50.0, 4.0];
        let k3: Vec<f64> = k.iter().map(|x| 3.0 * x).collect();
        for mu in [-1.0, 0.0, 0.4, 2.0] {
            let a = euclidean_log_ratio(&k, &y, mu).unwrap();
            let b = euclidean_log_ratio(&k3, &y, mu).unwrap();
            assert_abs_diff_eq!(a, b, epsilon = 1e-12 * a.max(1.0));
        }
    }

    #[test]
    fn euclidean_degenerate_scores() {
        assert_eq!(
            euclidean_log_ratio(&[1.0, 1.0], &[2.0, 2.0], 2.0).unwrap_err(),
            Error::DegenerateScores
        );
    }

    #[test]
    fn interval_endpoints_hit_threshold() {
        let k = [0.9, 0.2, 0.5, 0.7, 1.0, 0.3, 0.0];
        let y = [1.0, -2.0, 0.3, 2.2, 4.0, 1.1, 8.0];
        let q = chi2_quantile(0.95).unwrap();
        for ratio in [Ratio::Empirical, Ratio::Euclidean] {
            let iv = likelihood_interval(&k, &y, 0.05, ratio).unwrap();
            assert!(iv.lo < iv.center && iv.center < iv.hi);
            for end in [iv.lo, iv.hi] {
                let v = match ratio {
                    Ratio::Empirical => el_log_ratio(&k, &y, end).unwrap().lr,
                    Ratio::Euclidean => euclidean_log_ratio(&k, &y, end).unwrap(),
                };
                assert_abs_diff_eq!(v, q, epsilon = 1e-6);
            }
        }
    }

    #[test]
    fn empirical_interval_stays_inside_hull() {
        // two support points: lr blows up towards the extreme responses
        let iv = likelihood_interval(&[1.0, 1.0], &[0.0, 1.0], 0.05, Ratio::Empirical).unwrap();
        assert!(iv.lo > 0.0 && iv.hi < 1.0);
    }

    #[test]
    fn lr_is_monotone_away_from_root() {
        let k = [0.9, 0.2, 0.5, 0.7, 1.0, 0.3];
        let y = [1.0, -2.0, 0.3, 2.2, 4.0, 1.1];
        let c = k.iter().zip(&y).map(|(k, y)| k * y).sum::<f64>() / k.iter().sum::<f64>();
        let mut prev = 0.0;
        for i in 1..400 {
            let mu = c + (4.0 - c) * i as f64 / 400.0;
            let v = el_log_ratio(&k, &y, mu).unwrap().lr;
            assert!(v >= prev - 1e-12, "non-monotone at {mu}");
            prev = v;
        }
        let mut prev = 0.0;
        for i in 1..400 {
            let mu = c - (c + 2.0) * i as f64 / 400.0;
            let v = el_log_ratio(&k, &y, mu).unwrap().lr;
            assert!(v >= prev - 1e-12, "non-monotone at {mu}");
            prev = v;
        }
    }

    #[test]
    fn method_names_round_trip() {
        for m in IntervalMethod::ALL {
            assert_eq!(m.name().parse::<IntervalMethod>().unwrap(), m);
        }
        assert!("bootstrap".parse::<IntervalMethod>().is_err());
    }
}
