//! Robust reduced-rank regression (R4).
//!
//! Fits the mean-shift model `Y = XB + C + E` where `B` has low rank and `C`
//! is row-sparse. Nonzero rows of the estimated `C` flag outlying
//! observations. The estimator alternates a thresholding step on the
//! residuals with a closed-form reduced-rank regression on the adjusted
//! response, and is tuned jointly over rank and sparsity with a predictive
//! information criterion.
//!
//! Modules:
//! - [`thresholding`]: scalar, row-wise, singular-value and quantile thresholding rules
//!   together with the penalties and robust losses they induce.
//! - [`rrr`]: closed-form reduced-rank regression and its ridge and singular-value-shrinkage variants.
//! - [`solver`]: the block coordinate descent solver with multi-start initialization.
//! - [`tuning`]: solution paths, the information criterion, and outlier detection paths.
//! - [`sim`]: synthetic benchmark models, comparators, metrics and breakdown sweeps.
//! - [`io`]: CSV/JSON ingestion and serialization, autoregressive design builder.

pub mod error;
pub mod io;
pub mod linalg;
pub mod rrr;
pub mod sim;
pub mod solver;
pub mod thresholding;
pub mod tuning;

pub use error::{R4Error, Result};
pub use linalg::DenseMatrix;
pub use rrr::{matrix_sqrt_pd, rrr_fit, rrr_ridge_fit, singular_value_shrink_fit, RegressionData, RrrFit};
pub use solver::{
    c_step, multistart_fit, profiled_objective, r4_fit, FitResult, OutlierSpec, R4Problem, SolverOptions,
};
pub use thresholding::{PenaltyEval, RuleKind, ThresholdRule};
pub use tuning::{fit_path, pic, GridKind, GridSpec, PathResult};
