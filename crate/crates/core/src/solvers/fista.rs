//! Accelerated proximal gradient (FISTA) with backtracking line search and
//! function-value restart.

use ndarray::{Array2, Zip};
use serde::{Deserialize, Serialize};

use super::objective::SmoothTerm;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineSearch {
    pub initial_step: f64,
    pub shrink: f64,
}

impl Default for LineSearch {
    fn default() -> Self {
        Self {
            initial_step: 1.0,
            shrink: 0.5,
        }
    }
}

/// Iteration controls shared by every iterative fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub max_iter: usize,
    /// Relative objective change that counts as converged.
    pub tol: f64,
    pub line_search: LineSearch,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            max_iter: 10_000,
            tol: 1e-6,
            line_search: LineSearch::default(),
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iter == 0 {
            return Err(Error::Config("max_iter must be positive".into()));
        }
        if !(self.tol >= 0.0) {
            return Err(Error::Config("tol must be non-negative".into()));
        }
        let ls = self.line_search;
        if !(ls.initial_step > 0.0) || !(ls.shrink > 0.0 && ls.shrink < 1.0) {
            return Err(Error::Config(
                "line search needs initial_step > 0 and shrink in (0, 1)".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub w: Array2<f64>,
    pub objective_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

impl FitResult {
    pub fn objective(&self) -> f64 {
        *self.objective_trace.last().expect("trace is never empty")
    }
}

/// Non-smooth part of an objective with an exact prox.
pub trait ProxTerm {
    fn penalty(&self, w: &Array2<f64>) -> f64;
    /// Replace `w` by `prox_{step·g}(w)`.
    fn prox(&self, w: &mut Array2<f64>, step: f64);
}

/// Zero penalty; FISTA then reduces to accelerated gradient descent.
pub struct NoPenalty;

impl ProxTerm for NoPenalty {
    fn penalty(&self, _: &Array2<f64>) -> f64 {
        0.0
    }
    fn prox(&self, _: &mut Array2<f64>, _: f64) {}
}

fn dot(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    Zip::from(a).and(b).fold(0.0, |acc, x, y| acc + x * y)
}

/// Minimise `smooth(W) + prox_term(W)` starting at `w0`.
///
/// The first entry of the trace is the objective at `w0`; each accepted step
/// appends one entry, so the last entry is the objective at the returned `W`.
/// A step that would raise the objective resets the momentum instead of being
/// accepted.
pub fn fista<S, P>(smooth: &S, penalty: &P, w0: Array2<f64>, config: &SolverConfig) -> Result<FitResult>
where
    S: SmoothTerm + ?Sized,
    P: ProxTerm + ?Sized,
{
    config.validate()?;
    let mut x = w0;
    let mut f_x = smooth.value(&x) + penalty.penalty(&x);
    if !f_x.is_finite() {
        return Err(Error::Divergence { iteration: 0 });
    }
    let mut trace = vec![f_x];
    let mut y = x.clone();
    let mut momentum = false;
    let mut t_k = 1.0_f64;
    let mut step = config.line_search.initial_step;
    let mut converged = false;
    let mut iterations = 0;

    for it in 1..=config.max_iter {
        iterations = it;
        let (f_y, g_y) = smooth.value_and_grad(&y);
        if !f_y.is_finite() {
            return Err(Error::Divergence { iteration: it });
        }

        let (z, f_z) = loop {
            let mut z = &y - &(&g_y * step);
            penalty.prox(&mut z, step);
            let f_z = smooth.value(&z);
            let diff = &z - &y;
            let bound = f_y + dot(&g_y, &diff) + dot(&diff, &diff) / (2.0 * step);
            if f_z.is_finite() && f_z <= bound + 1e-14 * f_y.abs().max(1.0) {
                break (z, f_z);
            }
            step *= config.line_search.shrink;
            if step < 1e-300 {
                return Err(Error::Divergence { iteration: it });
            }
        };

        let f_new = f_z + penalty.penalty(&z);
        if !f_new.is_finite() {
            return Err(Error::Divergence { iteration: it });
        }
        if momentum && f_new > f_x {
            // restart from the last accepted point
            y.assign(&x);
            t_k = 1.0;
            momentum = false;
            continue;
        }

        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t_k * t_k).sqrt());
        let beta = (t_k - 1.0) / t_next;
        y = &z + &((&z - &x) * beta);
        momentum = beta != 0.0;
        t_k = t_next;

        let rel = (f_x - f_new).abs() / f_x.abs().max(f64::MIN_POSITIVE);
        x = z;
        f_x = f_new;
        trace.push(f_x);
        if rel < config.tol {
            converged = true;
            break;
        }
    }

    Ok(FitResult {
        w: x,
        objective_trace: trace,
        iterations,
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solvers::objective::QuadraticLoss;
    use crate::linalg::spd_solve;
    use ndarray::array;

    fn quadratic_instance() -> (Array2<f64>, Array2<f64>) {
        let x = array![
            [1.0, 0.2, -0.3],
            [0.4, 1.5, 0.1],
            [-0.7, 0.3, 2.0],
            [0.9, -1.1, 0.5],
            [0.2, 0.8, -1.4]
        ];
        let y = array![[1.0, 0.5], [-2.0, 0.1], [0.3, 1.7], [0.8, -0.9], [1.1, 0.0]];
        (x, y)
    }

    #[test]
    fn converges_to_closed_form_quadratic_minimiser() {
        let (x, y) = quadratic_instance();
        let exact = spd_solve(&x.t().dot(&x), &x.t().dot(&y)).unwrap();
        let loss = QuadraticLoss::least_squares(x.view(), y.view());
        // objective-change stopping only pins W to about sqrt(tol), so run a
        // fixed budget instead
        let cfg = SolverConfig {
            tol: 0.0,
            max_iter: 500,
            ..Default::default()
        };
        let fit = fista(&loss, &NoPenalty, Array2::zeros((3, 2)), &cfg).unwrap();
        let err = (&fit.w - &exact).iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        assert!(err < 1e-8, "max error {err}");
    }

    #[test]
    fn zero_tolerance_runs_to_max_iter() {
        let (x, y) = quadratic_instance();
        let loss = QuadraticLoss::least_squares(x.view(), y.view());
        let cfg = SolverConfig {
            tol: 0.0,
            max_iter: 37,
            ..Default::default()
        };
        let fit = fista(&loss, &NoPenalty, Array2::zeros((3, 2)), &cfg).unwrap();
        assert_eq!(fit.iterations, 37);
        assert!(!fit.converged);
    }

    #[test]
    fn optimal_start_converges_immediately() {
        let (x, y) = quadratic_instance();
        let exact = spd_solve(&x.t().dot(&x), &x.t().dot(&y)).unwrap();
        let loss = QuadraticLoss::least_squares(x.view(), y.view());
        let fit = fista(&loss, &NoPenalty, exact, &SolverConfig::default()).unwrap();
        assert!(fit.converged);
        assert!(fit.iterations <= 2);
    }

    #[test]
    fn best_so_far_trace_is_monotone() {
        let (x, y) = quadratic_instance();
        let loss = QuadraticLoss::least_squares(x.view(), y.view());
        let cfg = SolverConfig {
            tol: 1e-14,
            ..Default::default()
        };
        let fit = fista(&loss, &NoPenalty, Array2::zeros((3, 2)), &cfg).unwrap();
        let mut best = f64::INFINITY;
        for v in &fit.objective_trace {
            let next = best.min(*v);
            assert!(next <= best);
            best = next;
        }
        let direct = loss.value(&fit.w);
        assert!((fit.objective() - direct).abs() <= 1e-12 * direct.max(1.0));
    }

    #[test]
    fn non_finite_data_is_a_divergence() {
        let (x, mut y) = quadratic_instance();
        y[[0, 0]] = f64::NAN;
        let loss = QuadraticLoss::least_squares(x.view(), y.view());
        let err = fista(&loss, &NoPenalty, Array2::zeros((3, 2)), &SolverConfig::default());
        assert!(matches!(err, Err(Error::Divergence { .. })));
    }

    #[test]
    fn rejects_bad_config() {
        let cfg = SolverConfig {
            line_search: LineSearch {
                initial_step: 1.0,
                shrink: 1.5,
            },
            ..Default::default()
        };
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    }
}
