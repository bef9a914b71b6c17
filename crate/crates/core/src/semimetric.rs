//! Semi-metrics between curves.
//!
//! Every semi-metric here is the Euclidean distance between finite
//! feature vectors ("embeddings") of the two curves:
//!
//! * `deriv_l2(k)`: the order-`k` derivative scaled by the square roots of
//!   the trapezoid weights, so the Euclidean norm is the discretised L²
//!   norm of the derivative.
//! * `pca(q)`: the first `q` functional principal component scores.
//!
//! Distances computed this way are exactly symmetric and vanish exactly on
//! identical inputs.

use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};

use crate::curves::{derivative_values, same_grid, Curve, FunctionalDataset, Grid};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SemiMetricKind {
    /// L² distance between order-`order` derivatives; order 0 compares the
    /// curves themselves.
    DerivL2 { order: usize },
    /// Euclidean distance between the first `components` PCA scores.
    Pca { components: usize },
}

/// Fitted functional principal components.
#[derive(Debug, Clone)]
pub struct PcaBasis {
    grid: Arc<Grid>,
    mean: Vec<f64>,
    weights: Vec<f64>,
    eigenvalues: Vec<f64>,
    /// Eigenfunctions, orthonormal under the trapezoid inner product.
    components: Vec<Vec<f64>>,
}

impl PcaBasis {
    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    /// Covariance eigenvalues of the retained components, nonincreasing.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn components(&self) -> &[Vec<f64>] {
        &self.components
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    /// Projection scores of `c` on the retained components.
    pub fn scores(&self, c: &Curve) -> Result<Vec<f64>> {
        if !same_grid(c.grid(), &self.grid) {
            return Err(Error::GridMismatch);
        }
        Ok(self
            .components
            .iter()
            .map(|v| {
                c.values()
                    .iter()
                    .zip(&self.mean)
                    .zip(&self.weights)
                    .zip(v)
                    .map(|(((x, mu), w), vj)| w * (x - mu) * vj)
                    .sum()
            })
            .collect())
    }
}

/// A semi-metric specification together with any fitted state.
#[derive(Debug, Clone)]
pub struct SemiMetric {
    kind: SemiMetricKind,
    pca: Option<Arc<PcaBasis>>,
}

impl SemiMetric {
    pub fn deriv_l2(order: usize) -> Self {
        Self {
            kind: SemiMetricKind::DerivL2 { order },
            pca: None,
        }
    }

    /// An unfitted PCA semi-metric; call [`SemiMetric::fit`] before use.
    pub fn pca(components: usize) -> Self {
        Self {
            kind: SemiMetricKind::Pca { components },
            pca: None,
        }
    }

    pub fn kind(&self) -> SemiMetricKind {
        self.kind
    }

    pub fn is_fitted(&self) -> bool {
        match self.kind {
            SemiMetricKind::DerivL2 { .. } => true,
            SemiMetricKind::Pca { .. } => self.pca.is_some(),
        }
    }

    pub fn pca_basis(&self) -> Option<&PcaBasis> {
        self.pca.as_deref()
    }

    /// Fits data-dependent state (PCA only). Derivative semi-metrics are
    /// returned unchanged.
    pub fn fit(&self, ds: &FunctionalDataset) -> Result<Self> {
        match self.kind {
            SemiMetricKind::DerivL2 { .. } => Ok(self.clone()),
            SemiMetricKind::Pca { components } => fit_pca_semimetric(ds, components),
        }
    }

    /// Fits only when not fitted yet.
    pub fn ensure_fitted(&self, ds: &FunctionalDataset) -> Result<Self> {
        if self.is_fitted() {
            Ok(self.clone())
        } else {
            self.fit(ds)
        }
    }

    /// Feature vector whose Euclidean distances realise the semi-metric.
    pub fn embed(&self, c: &Curve) -> Result<Vec<f64>> {
        match self.kind {
            SemiMetricKind::DerivL2 { order } => {
                let grid = c.grid();
                if order > 0 && grid.len() < order + 2 {
                    return Err(Error::GridTooShort {
                        needed: order + 2,
                        got: grid.len(),
                    });
                }
                let d = if order == 0 {
                    c.values().to_vec()
                } else {
                    derivative_values(grid.points(), c.values(), order)
                };
                Ok(d.iter()
                    .zip(grid.quadrature_weights())
                    .map(|(v, w)| v * w.sqrt())
                    .collect())
            }
            SemiMetricKind::Pca { .. } => self.pca.as_ref().ok_or(Error::SpecNotFitted)?.scores(c),
        }
    }

    pub fn distance(&self, a: &Curve, b: &Curve) -> Result<f64> {
        if !a.shares_grid(b) {
            return Err(Error::GridMismatch);
        }
        Ok(euclidean(&self.embed(a)?, &self.embed(b)?))
    }
}

/// Free-function form of [`SemiMetric::distance`].
pub fn semimetric_distance(spec: &SemiMetric, a: &Curve, b: &Curve) -> Result<f64> {
    spec.distance(a, b)
}

pub(crate) fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Fits the PCA semi-metric with `q` components.
///
/// Curves are centred and scaled by the square roots of the trapezoid
/// weights; the top `q` eigenvectors of the resulting `m x m` covariance
/// are mapped back to eigenfunctions orthonormal under the trapezoid inner
/// product. Each eigenfunction's first clearly nonzero coordinate is made
/// positive.
pub fn fit_pca_semimetric(ds: &FunctionalDataset, q: usize) -> Result<SemiMetric> {
    let n = ds.len();
    let grid = Arc::clone(ds.grid());
    let m = grid.len();
    let max = n.min(m);
    if q == 0 || q > max {
        return Err(Error::InvalidComponents { requested: q, max });
    }

    let weights = grid.quadrature_weights();
    let sqrt_w: Vec<f64> = weights.iter().map(|w| w.sqrt()).collect();

    let mut mean = vec![0.0; m];
    for c in ds.curves() {
        for (acc, v) in mean.iter_mut().zip(c.values()) {
            *acc += v;
        }
    }
    mean.iter_mut().for_each(|v| *v /= n as f64);

    let scaled = DMatrix::from_fn(n, m, |i, j| (ds.curves()[i].values()[j] - mean[j]) * sqrt_w[j]);
    let cov = scaled.transpose() * &scaled / n as f64;
    let eig = SymmetricEigen::new(cov);

    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));

    let mut eigenvalues = Vec::with_capacity(q);
    let mut components = Vec::with_capacity(q);
    for &k in order.iter().take(q) {
        let mut v: Vec<f64> = (0..m).map(|j| eig.eigenvectors[(j, k)] / sqrt_w[j]).collect();
        let scale = v.iter().fold(0.0_f64, |acc, x| acc.max(x.abs()));
        if let Some(first) = v.iter().find(|x| x.abs() > 1e-8 * scale) {
            if *first < 0.0 {
                v.iter_mut().for_each(|x| *x = -*x);
            }
        }
        eigenvalues.push(eig.eigenvalues[k].max(0.0));
        components.push(v);
    }

    Ok(SemiMetric {
        kind: SemiMetricKind::Pca { components: q },
        pca: Some(Arc::new(PcaBasis {
            grid,
            mean,
            weights,
            eigenvalues,
            components,
        })),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn curve(grid: &Arc<Grid>, f: impl Fn(f64) -> f64) -> Curve {
        Curve::from_fn(Arc::clone(grid), f).unwrap()
    }

    fn weighted_l2(grid: &Grid, a: &[f64], b: &[f64]) -> f64 {
        grid.quadrature_weights()
            .iter()
            .zip(a.iter().zip(b))
            .map(|(w, (x, y))| w * (x - y) * (x - y))
            .sum::<f64>()
            .sqrt()
    }

    fn toy_dataset(n: usize, m: usize) -> FunctionalDataset {
        let grid = Arc::new(Grid::uniform(0.0, 1.0, m).unwrap());
        let curves: Vec<Curve> = (0..n)
            .map(|i| {
                let s = i as f64;
                curve(&grid, move |t| {
                    (s * 0.7 + t * 3.0).sin() + 0.1 * s * t * t - (s * 1.3).cos()
                })
            })
            .collect();
        FunctionalDataset::new(curves, vec![0.0; n]).unwrap()
    }

    #[test]
    fn self_distance_is_zero() {
        let ds = toy_dataset(6, 9);
        let pca = fit_pca_semimetric(&ds, 3).unwrap();
        for spec in [
            SemiMetric::deriv_l2(0),
            SemiMetric::deriv_l2(1),
            SemiMetric::deriv_l2(2),
            pca,
        ] {
            for c in ds.curves() {
                assert_eq!(spec.distance(c, c).unwrap(), 0.0);
            }
        }
    }

    #[test]
    fn first_derivative_ignores_vertical_shift() {
        let grid = Arc::new(Grid::uniform(0.0, 1.0, 51).unwrap());
        let a = curve(&grid, |t| (4.0 * t).sin() + t * t);
        let b = curve(&grid, |t| (4.0 * t).sin() + t * t + 3.7);
        let d = SemiMetric::deriv_l2(1).distance(&a, &b).unwrap();
        assert!(d < 1e-12, "{d}");
    }

    #[test]
    fn order_zero_distance_matches_integral() {
        // sqrt(int_0^1 t^2 dt) = sqrt(1/3)
        let grid = Arc::new(Grid::uniform(0.0, 1.0, 1001).unwrap());
        let a = curve(&grid, |t| t);
        let b = curve(&grid, |_| 0.0);
        let d = SemiMetric::deriv_l2(0).distance(&a, &b).unwrap();
        assert_abs_diff_eq!(d, (1.0f64 / 3.0).sqrt(), epsilon = 1e-3);
    }

    #[test]
    fn second_derivative_ignores_added_lines() {
        let grid = Arc::new(Grid::uniform(-1.0, 1.0, 401).unwrap());
        let a = curve(&grid, |t| (2.0 * t).cos());
        let b = curve(&grid, |t| t.exp());
        let a2 = curve(&grid, |t| (2.0 * t).cos() + 2.0 * t - 1.0);
        let b2 = curve(&grid, |t| t.exp() + 2.0 * t - 1.0);
        let spec = SemiMetric::deriv_l2(2);
        let d1 = spec.distance(&a, &b).unwrap();
        let d2 = spec.distance(&a2, &b2).unwrap();
        assert!((d1 - d2).abs() < 1e-6);
    }

    #[test]
    fn unfitted_pca_and_grid_mismatch() {
        let ds = toy_dataset(4, 5);
        let c = &ds.curves()[0];
        assert_eq!(SemiMetric::pca(2).distance(c, c).unwrap_err(), Error::SpecNotFitted);

        let other = Arc::new(Grid::uniform(0.0, 2.0, 5).unwrap());
        let d = curve(&other, |t| t);
        assert_eq!(
            SemiMetric::deriv_l2(1).distance(c, &d).unwrap_err(),
            Error::GridMismatch
        );
    }

    #[test]
    fn pca_component_count_checked() {
        let ds = toy_dataset(4, 7);
        assert_eq!(
            fit_pca_semimetric(&ds, 5).unwrap_err(),
            Error::InvalidComponents { requested: 5, max: 4 }
        );
        assert!(fit_pca_semimetric(&ds, 0).is_err());
    }

    #[test]
    fn pca_of_identical_curves_is_degenerate() {
        let grid = Arc::new(Grid::uniform(0.0, 1.0, 8).unwrap());
        let c = curve(&grid, |t| t.sin());
        let ds = FunctionalDataset::new(vec![c.clone(), c.clone(), c.clone()], vec![0.0; 3]).unwrap();
        let spec = fit_pca_semimetric(&ds, 2).unwrap();
        for a in ds.curves() {
            for b in ds.curves() {
                assert_eq!(spec.distance(a, b).unwrap(), 0.0);
            }
        }
    }

    #[test]
    fn full_pca_preserves_weighted_l2() {
        let ds = toy_dataset(10, 6);
        let spec = fit_pca_semimetric(&ds, 6).unwrap();
        let grid = ds.grid();
        for a in ds.curves() {
            for b in ds.curves() {
                let d = spec.distance(a, b).unwrap();
                let oracle = weighted_l2(grid, a.values(), b.values());
                assert_abs_diff_eq!(d, oracle, epsilon = 1e-8);
            }
        }
    }

    #[test]
    fn pca_components_orthonormal_and_sorted() {
        let ds = toy_dataset(12, 9);
        let spec = fit_pca_semimetric(&ds, 4).unwrap();
        let basis = spec.pca_basis().unwrap();
        let w = ds.grid().quadrature_weights();
        for (i, u) in basis.components().iter().enumerate() {
            for (j, v) in basis.components().iter().enumerate() {
                let ip: f64 = u.iter().zip(v).zip(&w).map(|((a, b), w)| a * b * w).sum();
                assert_abs_diff_eq!(ip, if i == j { 1.0 } else { 0.0 }, epsilon = 1e-10);
            }
        }
        assert!(basis.eigenvalues().windows(2).all(|e| e[0] >= e[1]));
    }

    #[test]
    fn one_dimensional_family_is_reconstructed() {
        let grid = Arc::new(Grid::uniform(0.0, 1.0, 11).unwrap());
        let base = |t: f64| t * t + 0.5;
        let dir = |t: f64| (3.0 * t).sin();
        let coefs = [-1.2, 0.3, 2.0];
        let curves: Vec<Curve> = coefs
            .iter()
            .map(|&c| curve(&grid, move |t| base(t) + c * dir(t)))
            .collect();
        let ds = FunctionalDataset::new(curves, vec![0.0; 3]).unwrap();
        let spec = fit_pca_semimetric(&ds, 1).unwrap();
        let basis = spec.pca_basis().unwrap();

        // Gram-matrix oracle: the single nonzero eigenvalue of the 3x3 matrix
        // of trapezoid inner products (over n) equals the leading covariance
        // eigenvalue.
        let w = grid.quadrature_weights();
        let centered: Vec<Vec<f64>> = ds
            .curves()
            .iter()
            .map(|c| c.values().iter().zip(basis.mean()).map(|(x, m)| x - m).collect())
            .collect();
        let gram = DMatrix::from_fn(3, 3, |i, j| {
            centered[i]
                .iter()
                .zip(&centered[j])
                .zip(&w)
                .map(|((a, b), w)| a * b * w)
                .sum::<f64>()
                / 3.0
        });
        let top = SymmetricEigen::new(gram).eigenvalues.max();
        assert_abs_diff_eq!(top, basis.eigenvalues()[0], epsilon = 1e-10);

        for (c, x) in ds.curves().iter().zip(&centered) {
            let s = basis.scores(c).unwrap()[0];
            let err = x
                .iter()
                .zip(&basis.components()[0])
                .map(|(xj, vj)| (xj - s * vj).abs())
                .fold(0.0, f64::max);
            assert!(err < 1e-8, "reconstruction error {err}");
        }
    }

    #[test]
    fn pca_distances_ignore_sample_order() {
        let ds = toy_dataset(9, 7);
        let rev: Vec<usize> = (0..9).rev().collect();
        let ds_rev = ds.subset(&rev).unwrap();
        let a = fit_pca_semimetric(&ds, 3).unwrap();
        let b = fit_pca_semimetric(&ds_rev, 3).unwrap();
        for x in ds.curves() {
            for y in ds.curves() {
                assert_abs_diff_eq!(a.distance(x, y).unwrap(), b.distance(x, y).unwrap(), epsilon = 1e-9);
            }
        }
    }
}
