//! Smooth parts of the regression objectives and the temporal difference
//! operators that encode adjacency between time-point tasks.

use ndarray::{Array2, ArrayView2};

/// Forward-difference operators over the `k` task columns of `W`.
///
/// `h` is `k×(k−1)` with `h[i][i] = 1`, `h[i+1][i] = −1`, so column `j` of
/// `W·H` is `W[:, j] − W[:, j+1]`. `r` is `(k−1)×k` with `r[i][i] = 1`,
/// `r[i][i+1] = −1`, so the rows of `R·Wᵀ` are adjacent-task differences.
#[derive(Debug, Clone, PartialEq)]
pub struct TemporalDifferenceOps {
    pub h: Array2<f64>,
    pub r: Array2<f64>,
}

impl TemporalDifferenceOps {
    pub fn new(k: usize) -> Self {
        let m = k.saturating_sub(1);
        let mut h = Array2::zeros((k, m));
        let mut r = Array2::zeros((m, k));
        for i in 0..m {
            h[[i, i]] = 1.0;
            h[[i + 1, i]] = -1.0;
            r[[i, i]] = 1.0;
            r[[i, i + 1]] = -1.0;
        }
        Self { h, r }
    }

    pub fn tasks(&self) -> usize {
        self.h.nrows()
    }

    /// `H·Hᵀ`, the path-graph Laplacian over tasks.
    pub fn laplacian(&self) -> Array2<f64> {
        self.h.dot(&self.h.t())
    }
}

/// `‖X·W − Y‖²_F + θ1‖W‖²_F + θ2‖W·H‖²_F` and its gradient.
pub fn smooth_objective_and_grad(
    w: ArrayView2<f64>,
    x: ArrayView2<f64>,
    y: ArrayView2<f64>,
    theta1: f64,
    theta2: f64,
    h: ArrayView2<f64>,
) -> (f64, Array2<f64>) {
    let resid = x.dot(&w) - &y;
    let mut value = resid.iter().map(|v| v * v).sum::<f64>();
    let mut grad = x.t().dot(&resid) * 2.0;
    if theta1 != 0.0 {
        value += theta1 * w.iter().map(|v| v * v).sum::<f64>();
        grad.scaled_add(2.0 * theta1, &w);
    }
    if theta2 != 0.0 && h.ncols() > 0 {
        let wh = w.dot(&h);
        value += theta2 * wh.iter().map(|v| v * v).sum::<f64>();
        grad.scaled_add(2.0 * theta2, &wh.dot(&h.t()));
    }
    (value, grad)
}

/// Differentiable part of an objective, as seen by FISTA.
pub trait SmoothTerm {
    fn value(&self, w: &Array2<f64>) -> f64;
    fn value_and_grad(&self, w: &Array2<f64>) -> (f64, Array2<f64>);
}

/// Squared loss with optional ridge and temporal-smoothness terms.
#[derive(Debug, Clone)]
pub struct QuadraticLoss<'a> {
    x: ArrayView2<'a, f64>,
    y: ArrayView2<'a, f64>,
    theta1: f64,
    theta2: f64,
    h: Array2<f64>,
}

impl<'a> QuadraticLoss<'a> {
    pub fn new(x: ArrayView2<'a, f64>, y: ArrayView2<'a, f64>, theta1: f64, theta2: f64) -> Self {
        let h = TemporalDifferenceOps::new(y.ncols()).h;
        Self {
            x,
            y,
            theta1,
            theta2,
            h,
        }
    }

    /// Plain `‖X·W − Y‖²_F`.
    pub fn least_squares(x: ArrayView2<'a, f64>, y: ArrayView2<'a, f64>) -> Self {
        Self::new(x, y, 0.0, 0.0)
    }
}

impl SmoothTerm for QuadraticLoss<'_> {
    fn value(&self, w: &Array2<f64>) -> f64 {
        let resid = self.x.dot(w) - &self.y;
        let mut value = resid.iter().map(|v| v * v).sum::<f64>();
        if self.theta1 != 0.0 {
            value += self.theta1 * w.iter().map(|v| v * v).sum::<f64>();
        }
        if self.theta2 != 0.0 && self.h.ncols() > 0 {
            value += self.theta2 * w.dot(&self.h).iter().map(|v| v * v).sum::<f64>();
        }
        value
    }

    fn value_and_grad(&self, w: &Array2<f64>) -> (f64, Array2<f64>) {
        smooth_objective_and_grad(
            w.view(),
            self.x,
            self.y,
            self.theta1,
            self.theta2,
            self.h.view(),
        )
    }
}
