//! Curves observed on a common grid, numerical derivatives and the
//! functional dataset container.

use std::sync::Arc;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Strictly increasing abscissae shared by all curves of a dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    points: Vec<f64>,
}

impl Grid {
    pub const MIN_POINTS: usize = 3;

    pub fn new(points: Vec<f64>) -> Result<Self> {
        if points.len() < Self::MIN_POINTS {
            return Err(Error::InvalidGrid(format!(
                "need at least {} points, got {}",
                Self::MIN_POINTS,
                points.len()
            )));
        }
        if let Some(i) = points.iter().position(|t| !t.is_finite()) {
            return Err(Error::InvalidGrid(format!("non-finite abscissa at position {i}")));
        }
        if let Some(i) = points.windows(2).position(|w| w[1] <= w[0]) {
            return Err(Error::InvalidGrid(format!(
                "abscissae not strictly increasing at position {}",
                i + 1
            )));
        }
        Ok(Self { points })
    }

    /// `m` equispaced points from `start` to `end` inclusive.
    pub fn uniform(start: f64, end: f64, m: usize) -> Result<Self> {
        if m < 2 {
            return Err(Error::InvalidGrid(format!("need at least 2 points, got {m}")));
        }
        let step = (end - start) / (m - 1) as f64;
        let points = (0..m)
            .map(|j| if j == m - 1 { end } else { start + step * j as f64 })
            .collect();
        Self::new(points)
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Trapezoid-rule weights; they sum to `t_m - t_1`.
    pub fn quadrature_weights(&self) -> Vec<f64> {
        trapezoid_weights(&self.points)
    }
}

/// Composite trapezoid weights for arbitrary (sorted) abscissae.
///
/// Works for any number of points; one point yields a zero weight.
pub fn trapezoid_weights(points: &[f64]) -> Vec<f64> {
    let m = points.len();
    let mut w = vec![0.0; m];
    for j in 1..m {
        let half = 0.5 * (points[j] - points[j - 1]);
        w[j - 1] += half;
        w[j] += half;
    }
    w
}

/// A real-valued function sampled on a [`Grid`].
#[derive(Debug, Clone)]
pub struct Curve {
    grid: Arc<Grid>,
    values: Vec<f64>,
}

impl Curve {
    pub fn new(grid: Arc<Grid>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidArgument(format!(
                "curve has {} values but the grid has {} points",
                values.len(),
                grid.len()
            )));
        }
        if let Some(j) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "non-finite curve value at position {j}"
            )));
        }
        Ok(Self { grid, values })
    }

    /// Samples `f` at every grid point.
    pub fn from_fn(grid: Arc<Grid>, f: impl Fn(f64) -> f64) -> Result<Self> {
        let values = grid.points().iter().map(|&t| f(t)).collect();
        Self::new(grid, values)
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn shares_grid(&self, other: &Curve) -> bool {
        same_grid(&self.grid, &other.grid)
    }
}

pub(crate) fn same_grid(a: &Arc<Grid>, b: &Arc<Grid>) -> bool {
    Arc::ptr_eq(a, b) || a.points() == b.points()
}

/// The `order`-th numerical derivative of `c` on its own grid.
///
/// Each pass applies the three-point second-order formula: centred at
/// interior points and one-sided at both ends. The formulas are exact for
/// quadratics on any spacing, so order one is exact for affine and
/// quadratic curves.
pub fn estimate_derivative(c: &Curve, order: usize) -> Result<Curve> {
    if order == 0 {
        return Err(Error::InvalidArgument("derivative order must be at least 1".into()));
    }
    let needed = order + 2;
    if c.grid.len() < needed {
        return Err(Error::GridTooShort {
            needed,
            got: c.grid.len(),
        });
    }
    let values = derivative_values(c.grid.points(), &c.values, order);
    Ok(Curve {
        grid: Arc::clone(&c.grid),
        values,
    })
}

pub(crate) fn derivative_values(t: &[f64], v: &[f64], order: usize) -> Vec<f64> {
    let mut out = v.to_vec();
    for _ in 0..order {
        out = first_derivative(t, &out);
    }
    out
}

fn first_derivative(t: &[f64], v: &[f64]) -> Vec<f64> {
    let m = t.len();
    debug_assert!(m >= 3);
    let mut d = vec![0.0; m];

    // left end: x0, x1, x2
    let (h1, h2) = (t[1] - t[0], t[2] - t[1]);
    d[0] = -(2.0 * h1 + h2) / (h1 * (h1 + h2)) * v[0] + (h1 + h2) / (h1 * h2) * v[1] - h1 / (h2 * (h1 + h2)) * v[2];

    for j in 1..m - 1 {
        let (h1, h2) = (t[j] - t[j - 1], t[j + 1] - t[j]);
        d[j] = -h2 / (h1 * (h1 + h2)) * v[j - 1] + (h2 - h1) / (h1 * h2) * v[j] + h1 / (h2 * (h1 + h2)) * v[j + 1];
    }

    let (h1, h2) = (t[m - 2] - t[m - 3], t[m - 1] - t[m - 2]);
    d[m - 1] = h2 / (h1 * (h1 + h2)) * v[m - 3] - (h1 + h2) / (h1 * h2) * v[m - 2]
        + (h1 + 2.0 * h2) / (h2 * (h1 + h2)) * v[m - 1];
    d
}

/// Paired curves and responses, with optional scalar covariates for the
/// partially linear model.
#[derive(Debug, Clone)]
pub struct FunctionalDataset {
    grid: Arc<Grid>,
    curves: Vec<Curve>,
    responses: Vec<f64>,
    linear: Option<DMatrix<f64>>,
}

impl FunctionalDataset {
    pub fn new(curves: Vec<Curve>, responses: Vec<f64>) -> Result<Self> {
        let Some(first) = curves.first() else {
            return Err(Error::InsufficientData("dataset has no curves".into()));
        };
        if curves.len() != responses.len() {
            return Err(Error::InvalidArgument(format!(
                "{} curves but {} responses",
                curves.len(),
                responses.len()
            )));
        }
        let grid = Arc::clone(first.grid());
        if curves.iter().any(|c| !same_grid(c.grid(), &grid)) {
            return Err(Error::GridMismatch);
        }
        if let Some(i) = responses.iter().position(|y| !y.is_finite()) {
            return Err(Error::InvalidArgument(format!("non-finite response at sample {i}")));
        }
        Ok(Self {
            grid,
            curves,
            responses,
            linear: None,
        })
    }

    /// Attaches an `n x p` matrix of linear covariates.
    pub fn with_linear_covariates(mut self, z: DMatrix<f64>) -> Result<Self> {
        if z.nrows() != self.len() {
            return Err(Error::InvalidArgument(format!(
                "covariate matrix has {} rows, dataset has {} samples",
                z.nrows(),
                self.len()
            )));
        }
        if z.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite linear covariate".into()));
        }
        self.linear = Some(z);
        Ok(self)
    }

    /// Same curves and covariates, new responses.
    pub fn with_responses(&self, responses: Vec<f64>) -> Result<Self> {
        let mut out = Self::new(self.curves.clone(), responses)?;
        out.linear = self.linear.clone();
        Ok(out)
    }

    /// Keeps the samples at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let curves = indices.iter().map(|&i| self.curves[i].clone()).collect();
        let responses = indices.iter().map(|&i| self.responses[i]).collect();
        let mut out = Self::new(curves, responses)?;
        out.linear = self.linear.as_ref().map(|z| z.select_rows(indices));
        Ok(out)
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn curves(&self) -> &[Curve] {
        &self.curves
    }

    pub fn responses(&self) -> &[f64] {
        &self.responses
    }

    pub fn linear_covariates(&self) -> Option<&DMatrix<f64>> {
        self.linear.as_ref()
    }

    pub fn len(&self) -> usize {
        self.curves.len()
    }

    pub fn is_empty(&self) -> bool {
        self.curves.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn grid(points: &[f64]) -> Arc<Grid> {
        Arc::new(Grid::new(points.to_vec()).unwrap())
    }

    #[test]
    fn grid_rejects_bad_input() {
        assert!(Grid::new(vec![0.0, 1.0]).is_err());
        assert!(Grid::new(vec![0.0, 1.0, 1.0]).is_err());
        assert!(Grid::new(vec![0.0, f64::NAN, 1.0]).is_err());
        assert!(Grid::new(vec![0.0, 0.5, 1.0]).is_ok());
    }

    #[test]
    fn trapezoid_weights_small_grids() {
        assert_eq!(trapezoid_weights(&[0.0, 1.0]), vec![0.5, 0.5]);
        assert_eq!(grid(&[0.0, 0.5, 1.0]).quadrature_weights(), vec![0.25, 0.5, 0.25]);
    }

    #[test]
    fn trapezoid_weights_sum_to_span() {
        let g = Grid::uniform(0.0, 1.0, 101).unwrap();
        let s: f64 = g.quadrature_weights().iter().sum();
        assert_abs_diff_eq!(s, 1.0, epsilon = 1e-12);

        let g = Grid::new(vec![-1.0, -0.3, 0.1, 0.15, 2.0]).unwrap();
        let s: f64 = g.quadrature_weights().iter().sum();
        assert_abs_diff_eq!(s, 3.0, epsilon = 1e-12);
    }

    #[test]
    fn derivative_of_affine_is_constant() {
        let g = grid(&[0.0, 0.5, 1.0]);
        let c = Curve::from_fn(g, |t| 2.0 * t).unwrap();
        let d = estimate_derivative(&c, 1).unwrap();
        for v in d.values() {
            assert_abs_diff_eq!(*v, 2.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn derivative_of_quadratic() {
        let g = Arc::new(Grid::uniform(0.0, 1.0, 5).unwrap());
        let c = Curve::from_fn(Arc::clone(&g), |t| t * t).unwrap();
        let d = estimate_derivative(&c, 1).unwrap();
        for (t, v) in g.points().iter().zip(d.values()) {
            assert_abs_diff_eq!(*v, 2.0 * t, epsilon = 1e-13);
        }
    }

    #[test]
    fn derivative_of_quadratic_on_uneven_grid() {
        let g = grid(&[0.0, 0.1, 0.35, 0.4, 0.8, 1.0]);
        let c = Curve::from_fn(Arc::clone(&g), |t| 3.0 * t * t - t + 2.0).unwrap();
        let d = estimate_derivative(&c, 1).unwrap();
        for (t, v) in g.points().iter().zip(d.values()) {
            assert_abs_diff_eq!(*v, 6.0 * t - 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn derivative_of_sine_matches_cosine() {
        let g = Arc::new(Grid::uniform(0.0, 1.0, 101).unwrap());
        let c = Curve::from_fn(Arc::clone(&g), f64::sin).unwrap();
        let d = estimate_derivative(&c, 1).unwrap();
        let err = g
            .points()
            .iter()
            .zip(d.values())
            .map(|(t, v)| (v - t.cos()).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-3, "max error {err}");
    }

    #[test]
    fn second_derivative_needs_four_points() {
        let g = grid(&[0.0, 0.5, 1.0]);
        let c = Curve::from_fn(g, |t| t).unwrap();
        assert_eq!(
            estimate_derivative(&c, 2).unwrap_err(),
            Error::GridTooShort { needed: 4, got: 3 }
        );
        assert!(estimate_derivative(&c, 0).is_err());
    }

    #[test]
    fn dataset_checks_lengths_and_grids() {
        let g = grid(&[0.0, 0.5, 1.0]);
        let c = Curve::new(Arc::clone(&g), vec![1.0, 2.0, 3.0]).unwrap();
        assert!(FunctionalDataset::new(vec![c.clone()], vec![1.0, 2.0]).is_err());

        let other = grid(&[0.0, 0.6, 1.0]);
        let c2 = Curve::new(other, vec![1.0, 2.0, 3.0]).unwrap();
        assert_eq!(
            FunctionalDataset::new(vec![c.clone(), c2], vec![1.0, 2.0]).unwrap_err(),
            Error::GridMismatch
        );

        // equal points on a distinct allocation still count as one grid
        let same = grid(&[0.0, 0.5, 1.0]);
        let c3 = Curve::new(same, vec![0.0, 0.0, 0.0]).unwrap();
        let ds = FunctionalDataset::new(vec![c, c3], vec![1.0, 2.0]).unwrap();
        assert_eq!(ds.len(), 2);
        assert!(ds.with_linear_covariates(DMatrix::zeros(3, 1)).is_err());
    }
}
