//! Independent oracles shared by the integration tests.

#![allow(dead_code)]

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use fel_core::simulation::{simulate_dataset, simulation_grid, CurveParams, SimulatedData};
use fel_core::Grid;

const KRONROD_NODES: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const KRONROD_WEIGHTS: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
/// Gauss weights for the odd-indexed Kronrod nodes and the centre.
const GAUSS_WEIGHTS: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gauss_kronrod_15(f: &impl Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kronrod = KRONROD_WEIGHTS[7] * fc;
    let mut gauss = GAUSS_WEIGHTS[3] * fc;
    for j in 0..7 {
        let dx = h * KRONROD_NODES[j];
        let s = f(c - dx) + f(c + dx);
        kronrod += KRONROD_WEIGHTS[j] * s;
        if j % 2 == 1 {
            gauss += GAUSS_WEIGHTS[j / 2] * s;
        }
    }
    (kronrod * h, ((kronrod - gauss) * h).abs())
}

/// Adaptive 7/15-point Gauss–Kronrod quadrature with bisection of the
/// worst subinterval.
pub fn gauss_kronrod(f: impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    let (v, e) = gauss_kronrod_15(&f, a, b);
    let mut parts = vec![(a, b, v, e)];
    for _ in 0..2000 {
        let err: f64 = parts.iter().map(|p| p.3).sum();
        if err <= tol {
            break;
        }
        let (worst, _) = parts
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .3.total_cmp(&y.1 .3))
            .expect("nonempty");
        let (lo, hi, _, _) = parts.swap_remove(worst);
        let mid = 0.5 * (lo + hi);
        for (l, h) in [(lo, mid), (mid, hi)] {
            let (v, e) = gauss_kronrod_15(&f, l, h);
            parts.push((l, h, v, e));
        }
    }
    parts.iter().map(|p| p.2).sum()
}

/// `∫_{-1}^{1} |x'(t)| (1 - cos πt) dt` by Gauss–Kronrod.
pub fn regression_integral(p: CurveParams) -> f64 {
    gauss_kronrod(|t| p.derivative(t).abs() * (1.0 - (PI * t).cos()), -1.0, 1.0, 1e-14)
}

/// Random kernel weights, responses and a mean strictly inside the
/// response range.
pub fn random_instance<R: Rng>(rng: &mut R, max_points: usize) -> (Vec<f64>, Vec<f64>, f64) {
    loop {
        let n = rng.random_range(2..=max_points);
        let k: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..1.0)).collect();
        let y: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(StandardNormal) * 2.0).collect();
        let lo = y.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if hi - lo < 1e-3 {
            continue;
        }
        let mu = lo + (hi - lo) * rng.random_range(0.1..0.9);
        return (k, y, mu);
    }
}

/// `-2 Σ log(n p_i)` at the maximiser of `Σ log p_i` subject to `Σ p_i = 1`
/// and `Σ p_i w_i = 0`, by feasible-start Newton on the primal.
pub fn el_primal(scores: &[f64]) -> f64 {
    let n = scores.len();
    let pos = scores.iter().filter(|&&w| w > 0.0).count() as f64;
    let neg = scores.iter().filter(|&&w| w < 0.0).count() as f64;
    assert!(pos > 0.0 && neg > 0.0, "zero must be inside the hull");
    let mut p: Vec<f64> = scores
        .iter()
        .map(|&w| {
            if w > 0.0 {
                1.0 / (w * pos)
            } else if w < 0.0 {
                1.0 / (-w * neg)
            } else {
                1.0
            }
        })
        .collect();
    let total: f64 = p.iter().sum();
    p.iter_mut().for_each(|x| *x /= total);

    let objective = |p: &[f64]| -> f64 { p.iter().map(|x| x.ln()).sum() };
    for _ in 0..200 {
        // KKT system for the Newton step of -Σ log p under A p = b
        let mut kkt = DMatrix::zeros(n + 2, n + 2);
        let mut rhs = DVector::zeros(n + 2);
        for i in 0..n {
            kkt[(i, i)] = 1.0 / (p[i] * p[i]);
            kkt[(i, n)] = 1.0;
            kkt[(n, i)] = 1.0;
            kkt[(i, n + 1)] = scores[i];
            kkt[(n + 1, i)] = scores[i];
            rhs[i] = 1.0 / p[i];
        }
        let step = kkt.lu().solve(&rhs).expect("nonsingular KKT system");
        let dx: Vec<f64> = step.iter().take(n).copied().collect();
        let decrement: f64 = dx.iter().zip(&p).map(|(d, x)| (d / x).powi(2)).sum();
        if decrement < 1e-28 {
            break;
        }
        let mut t = 1.0;
        while dx.iter().zip(&p).any(|(d, x)| x + t * d <= 0.0) {
            t *= 0.5;
        }
        let f0 = objective(&p);
        loop {
            let trial: Vec<f64> = p.iter().zip(&dx).map(|(x, d)| x + t * d).collect();
            if objective(&trial) >= f0 + 0.25 * t * decrement || t < 1e-12 {
                p = trial;
                break;
            }
            t *= 0.5;
        }
    }
    -2.0 * p.iter().map(|x| (n as f64 * x).ln()).sum::<f64>()
}

/// `Σ (n p_i - 1)²` at its minimiser subject to `Σ p_i = 1` and
/// `Σ p_i w_i = 0`, from the KKT linear system.
pub fn euclidean_primal(scores: &[f64]) -> f64 {
    let n = scores.len();
    let nf = n as f64;
    let mut kkt = DMatrix::zeros(n + 2, n + 2);
    let mut rhs = DVector::zeros(n + 2);
    for i in 0..n {
        kkt[(i, i)] = 2.0 * nf * nf;
        kkt[(i, n)] = 1.0;
        kkt[(n, i)] = 1.0;
        kkt[(i, n + 1)] = scores[i];
        kkt[(n + 1, i)] = scores[i];
        rhs[i] = 2.0 * nf;
    }
    rhs[n] = 1.0;
    let sol = kkt.lu().solve(&rhs).expect("nonsingular KKT system");
    (0..n).map(|i| (nf * sol[i] - 1.0).powi(2)).sum()
}

/// Minimises a smooth function by Newton steps with central-difference
/// gradients and Hessians.
pub fn fd_minimize(f: impl Fn(&[f64]) -> f64, start: &[f64]) -> Vec<f64> {
    let p = start.len();
    let mut x = start.to_vec();
    let at = |x: &[f64], moves: &[(usize, f64)]| {
        let mut y = x.to_vec();
        for &(i, d) in moves {
            y[i] += d;
        }
        f(&y)
    };
    for _ in 0..20 {
        let h = 1e-3;
        let mut grad = DVector::zeros(p);
        let mut hess = DMatrix::zeros(p, p);
        for i in 0..p {
            grad[i] = (at(&x, &[(i, h)]) - at(&x, &[(i, -h)])) / (2.0 * h);
            for j in 0..p {
                hess[(i, j)] = (at(&x, &[(i, h), (j, h)]) - at(&x, &[(i, h), (j, -h)]) - at(&x, &[(i, -h), (j, h)])
                    + at(&x, &[(i, -h), (j, -h)]))
                    / (4.0 * h * h);
            }
        }
        let Some(step) = hess.lu().solve(&grad) else {
            break;
        };
        x.iter_mut().zip(step.iter()).for_each(|(xi, s)| *xi -= s);
        if step.norm() < 1e-13 * (1.0 + DVector::from_column_slice(&x).norm()) {
            break;
        }
    }
    x
}

/// Kolmogorov–Smirnov distance between a sample and a continuous CDF.
pub fn ks_distance(sample: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut s = sample.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    s.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

pub fn grid() -> Arc<Grid> {
    simulation_grid(101).expect("valid grid")
}

pub fn simulated<R: Rng>(n: usize, sigma2: f64, rng: &mut R) -> SimulatedData {
    simulate_dataset(&grid(), n, sigma2, rng).expect("simulated data")
}
