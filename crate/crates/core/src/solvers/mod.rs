//! Regression formulations and the machinery to fit them: exact proximal
//! operators, an accelerated proximal gradient engine and closed forms.

pub mod fista;
pub mod fit;
pub mod objective;
pub mod prox;

pub use fista::{fista, FitResult, LineSearch, NoPenalty, ProxTerm, SolverConfig};
pub use fit::{fit_cfsgl, fit_lasso, fit_model, fit_ridge, fit_tgl, objective, Penalties, SolverKind};
pub use objective::{smooth_objective_and_grad, QuadraticLoss, SmoothTerm, TemporalDifferenceOps};
pub use prox::{fsgl_prox, fused_prox_1d, group_row_prox, soft_threshold};
