//! Longitudinal disease-progression modelling as structured multi-task
//! regression.
//!
//! The crate turns paired MRI scans into spatio-temporal similarity
//! features (one column per ROI pair), fits temporal group lasso and convex
//! fused sparse group lasso models with accelerated proximal gradient, and
//! finds stable feature pairs by stability selection.
//!
//! Pipeline, module by module:
//!
//! - [`dataio`]: cohort CSV ingestion, cleaning, paired-scan assembly.
//! - [`features`]: trend vectors, pairwise similarity design matrices,
//!   standardization.
//! - [`solvers`]: proximal operators, FISTA, lasso/ridge/TGL/cFSGL fits.
//! - [`stability`]: subsampled stability selection and feature screening.
//! - [`eval`]: nMSE / rMSE / wR metrics and repeated cross-validation.
//! - [`synth`]: synthetic cohorts and regression instances with planted
//!   ground truth.
//! - [`cli`]: the `progmtl` command-line front end.

pub mod cli;
pub mod dataio;
pub mod error;
pub mod eval;
pub mod features;
pub mod linalg;
mod matrix_serde;
pub mod rng;
pub mod solvers;
pub mod stability;
pub mod synth;
pub mod tables;

pub use error::{Error, Result};
