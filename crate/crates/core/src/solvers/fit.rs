use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use super::fista::{fista, FitResult, ProxTerm, SolverConfig};
use super::objective::{QuadraticLoss, SmoothTerm, TemporalDifferenceOps};
use super::prox::{fsgl_penalty, fsgl_prox_into, group_row_prox_in_place, soft_threshold_in_place};
use crate::error::{Error, Result};
use crate::linalg::{spd_solve, symmetric_eigen};

/// The four regression formulations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolverKind {
    Lasso,
    Ridge,
    Tgl,
    Cfsgl,
}

impl fmt::Display for SolverKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(match self {
            SolverKind::Lasso => "lasso",
            SolverKind::Ridge => "ridge",
            SolverKind::Tgl => "tgl",
            SolverKind::Cfsgl => "cfsgl",
        })
    }
}

impl FromStr for SolverKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "lasso" => Ok(SolverKind::Lasso),
            "ridge" => Ok(SolverKind::Ridge),
            "tgl" => Ok(SolverKind::Tgl),
            "cfsgl" => Ok(SolverKind::Cfsgl),
            other => Err(Error::Config(format!("unknown solver `{other}`"))),
        }
    }
}

/// Penalty weights. `lambda` drives lasso and ridge; `theta1`, `theta2` and
/// `delta` drive TGL and cFSGL.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct Penalties {
    pub lambda: f64,
    pub theta1: f64,
    pub theta2: f64,
    pub delta: f64,
}

impl Penalties {
    pub fn lambda(lambda: f64) -> Self {
        Self {
            lambda,
            ..Self::default()
        }
    }

    pub fn structured(theta1: f64, theta2: f64, delta: f64) -> Self {
        Self {
            lambda: 0.0,
            theta1,
            theta2,
            delta,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.lambda, self.theta1, self.theta2, self.delta];
        if all.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::Config(format!(
                "penalties must be finite and non-negative: {self:?}"
            )));
        }
        Ok(())
    }
}

fn check_dims(x: ArrayView2<f64>, y: ArrayView2<f64>) -> Result<()> {
    if x.nrows() != y.nrows() {
        return Err(Error::Dimension(format!(
            "X has {} rows but Y has {}",
            x.nrows(),
            y.nrows()
        )));
    }
    if y.ncols() == 0 || x.ncols() == 0 {
        return Err(Error::Dimension("need at least one feature and one task".into()));
    }
    Ok(())
}

fn sum_sq(a: &Array2<f64>) -> f64 {
    a.iter().map(|v| v * v).sum()
}

fn l21(w: &Array2<f64>) -> f64 {
    w.axis_iter(Axis(0))
        .map(|r| r.iter().map(|v| v * v).sum::<f64>().sqrt())
        .sum()
}

/// Objective value of a formulation at `w`.
pub fn objective(
    kind: SolverKind,
    w: &Array2<f64>,
    x: ArrayView2<f64>,
    y: ArrayView2<f64>,
    p: &Penalties,
) -> f64 {
    let loss = sum_sq(&(x.dot(w) - &y));
    match kind {
        SolverKind::Lasso => loss + p.lambda * w.iter().map(|v| v.abs()).sum::<f64>(),
        SolverKind::Ridge => loss + p.lambda * sum_sq(w),
        SolverKind::Tgl => {
            let h = TemporalDifferenceOps::new(w.ncols()).h;
            loss + p.theta1 * sum_sq(w) + p.theta2 * sum_sq(&w.dot(&h)) + p.delta * l21(w)
        }
        SolverKind::Cfsgl => {
            loss + w
                .axis_iter(Axis(0))
                .map(|r| fsgl_penalty(&r.to_vec(), p.theta1, p.theta2, p.delta))
                .sum::<f64>()
        }
    }
}

struct L1Penalty(f64);

impl ProxTerm for L1Penalty {
    fn penalty(&self, w: &Array2<f64>) -> f64 {
        self.0 * w.iter().map(|v| v.abs()).sum::<f64>()
    }
    fn prox(&self, w: &mut Array2<f64>, step: f64) {
        let lam = self.0 * step;
        match w.as_slice_mut() {
            Some(s) => soft_threshold_in_place(s, lam),
            None => w.mapv_inplace(|v| v.signum() * (v.abs() - lam).max(0.0)),
        }
    }
}

struct GroupPenalty(f64);

impl ProxTerm for GroupPenalty {
    fn penalty(&self, w: &Array2<f64>) -> f64 {
        self.0 * l21(w)
    }
    fn prox(&self, w: &mut Array2<f64>, step: f64) {
        for mut row in w.axis_iter_mut(Axis(0)) {
            let mut buf = row.to_vec();
            group_row_prox_in_place(&mut buf, self.0 * step);
            row.iter_mut().zip(buf).for_each(|(dst, v)| *dst = v);
        }
    }
}

struct FsglPenalty {
    l1: f64,
    fused: f64,
    group: f64,
}

impl ProxTerm for FsglPenalty {
    fn penalty(&self, w: &Array2<f64>) -> f64 {
        w.axis_iter(Axis(0))
            .map(|r| fsgl_penalty(&r.to_vec(), self.l1, self.fused, self.group))
            .sum()
    }
    fn prox(&self, w: &mut Array2<f64>, step: f64) {
        let mut out = vec![0.0; w.ncols()];
        for mut row in w.axis_iter_mut(Axis(0)) {
            let input = row.to_vec();
            fsgl_prox_into(
                &input,
                &mut out,
                self.l1 * step,
                self.fused * step,
                self.group * step,
            );
            row.iter_mut().zip(&out).for_each(|(dst, v)| *dst = *v);
        }
    }
}

fn closed_form(w: Array2<f64>, value: f64) -> FitResult {
    FitResult {
        w,
        objective_trace: vec![value],
        iterations: 0,
        converged: true,
    }
}

/// `‖XW − Y‖²_F + lam·‖W‖²_F`, solved per task in closed form.
pub fn fit_ridge(x: ArrayView2<f64>, y: ArrayView2<f64>, lam: f64) -> Result<FitResult> {
    check_dims(x, y)?;
    Penalties::lambda(lam).validate()?;
    let mut gram = x.t().dot(&x);
    gram.diag_mut().mapv_inplace(|v| v + lam);
    let w = spd_solve(&gram, &x.t().dot(&y))?;
    let value = objective(SolverKind::Ridge, &w, x, y, &Penalties::lambda(lam));
    Ok(closed_form(w, value))
}

/// `‖XW − Y‖²_F + lam·‖W‖₁` by FISTA with soft-thresholding.
pub fn fit_lasso(
    x: ArrayView2<f64>,
    y: ArrayView2<f64>,
    lam: f64,
    config: &SolverConfig,
) -> Result<FitResult> {
    check_dims(x, y)?;
    Penalties::lambda(lam).validate()?;
    let loss = QuadraticLoss::least_squares(x, y);
    fista(&loss, &L1Penalty(lam), Array2::zeros((x.ncols(), y.ncols())), config)
}

/// Temporal group lasso:
/// `‖XW − Y‖²_F + θ1‖W‖²_F + θ2‖WH‖²_F + δ‖W‖₂,₁`.
///
/// With `δ = 0` the objective is quadratic and is solved directly.
pub fn fit_tgl(
    x: ArrayView2<f64>,
    y: ArrayView2<f64>,
    theta1: f64,
    theta2: f64,
    delta: f64,
    config: &SolverConfig,
) -> Result<FitResult> {
    fit_tgl_from(x, y, theta1, theta2, delta, config, None)
}

pub(crate) fn fit_tgl_from(
    x: ArrayView2<f64>,
    y: ArrayView2<f64>,
    theta1: f64,
    theta2: f64,
    delta: f64,
    config: &SolverConfig,
    w0: Option<Array2<f64>>,
) -> Result<FitResult> {
    check_dims(x, y)?;
    let p = Penalties::structured(theta1, theta2, delta);
    p.validate()?;
    if delta == 0.0 {
        let w = tgl_direct(x, y, theta1, theta2)?;
        let value = objective(SolverKind::Tgl, &w, x, y, &p);
        return Ok(closed_form(w, value));
    }
    let loss = QuadraticLoss::new(x, y, theta1, theta2);
    let w0 = w0.unwrap_or_else(|| Array2::zeros((x.ncols(), y.ncols())));
    fista(&loss, &GroupPenalty(delta), w0, config)
}

/// Solves `XᵀX·W + θ1·W + θ2·W·HHᵀ = XᵀY` by diagonalising `HHᵀ`.
fn tgl_direct(x: ArrayView2<f64>, y: ArrayView2<f64>, theta1: f64, theta2: f64) -> Result<Array2<f64>> {
    let k = y.ncols();
    let lap = TemporalDifferenceOps::new(k).laplacian();
    let (eigvals, q) = symmetric_eigen(&lap);
    let gram = x.t().dot(&x);
    let rhs = x.t().dot(&y).dot(&q);
    let mut v = Array2::zeros((x.ncols(), k));
    for j in 0..k {
        let mut a = gram.clone();
        let shift = theta1 + theta2 * eigvals[j].max(0.0);
        a.diag_mut().mapv_inplace(|d| d + shift);
        let col = rhs.column(j).to_owned().insert_axis(Axis(1));
        let sol = spd_solve(&a, &col)?;
        v.column_mut(j).assign(&sol.column(0));
    }
    Ok(v.dot(&q.t()))
}

/// Convex fused sparse group lasso:
/// `‖XW − Y‖²_F + θ1‖W‖₁ + θ2‖RWᵀ‖₁ + δ‖W‖₂,₁`.
pub fn fit_cfsgl(
    x: ArrayView2<f64>,
    y: ArrayView2<f64>,
    theta1: f64,
    theta2: f64,
    delta: f64,
    config: &SolverConfig,
) -> Result<FitResult> {
    fit_cfsgl_from(x, y, theta1, theta2, delta, config, None)
}

pub(crate) fn fit_cfsgl_from(
    x: ArrayView2<f64>,
    y: ArrayView2<f64>,
    theta1: f64,
    theta2: f64,
    delta: f64,
    config: &SolverConfig,
    w0: Option<Array2<f64>>,
) -> Result<FitResult> {
    check_dims(x, y)?;
    Penalties::structured(theta1, theta2, delta).validate()?;
    let loss = QuadraticLoss::least_squares(x, y);
    let penalty = FsglPenalty {
        l1: theta1,
        fused: theta2,
        group: delta,
    };
    let w0 = w0.unwrap_or_else(|| Array2::zeros((x.ncols(), y.ncols())));
    fista(&loss, &penalty, w0, config)
}

/// Fit any formulation from a penalty record.
pub fn fit_model(
    kind: SolverKind,
    x: ArrayView2<f64>,
    y: ArrayView2<f64>,
    penalties: &Penalties,
    config: &SolverConfig,
) -> Result<FitResult> {
    match kind {
        SolverKind::Lasso => fit_lasso(x, y, penalties.lambda, config),
        SolverKind::Ridge => fit_ridge(x, y, penalties.lambda),
        SolverKind::Tgl => fit_tgl(x, y, penalties.theta1, penalties.theta2, penalties.delta, config),
        SolverKind::Cfsgl => fit_cfsgl(x, y, penalties.theta1, penalties.theta2, penalties.delta, config),
    }
}

/// Value of the smooth part used by FISTA for a formulation; exposed for
/// diagnostics.
pub fn smooth_value(kind: SolverKind, w: &Array2<f64>, x: ArrayView2<f64>, y: ArrayView2<f64>, p: &Penalties) -> f64 {
    match kind {
        SolverKind::Tgl => QuadraticLoss::new(x, y, p.theta1, p.theta2).value(w),
        SolverKind::Ridge => QuadraticLoss::new(x, y, p.lambda, 0.0).value(w),
        _ => QuadraticLoss::least_squares(x, y).value(w),
    }
}
