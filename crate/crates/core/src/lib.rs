//! Pairwise likelihood inference for the multivariate ordered probit model.
//!
//! The crate evaluates the pairwise log-likelihood of ordinal data generated by
//! thresholding a latent Gaussian vector, computes its score vector in closed
//! form, maximizes it with a bounded quasi-Newton method, and derives
//! sandwich (Godambe) standard errors and Wald intervals.

pub mod counts;
pub mod error;
pub mod fit;
pub mod gauss;
pub mod godambe;
pub mod model;
pub mod numdiff;
mod optim;
pub mod pairwise;
pub mod simulate;

pub use counts::{compute_counts, OrdinalDataset, PairCounts};
pub use error::{Error, Result};
pub use gauss::{Limit, Rho};
pub use godambe::{GodambeMatrices, WaldInterval};
pub use model::{CorrelationParams, ModelDims, Psi, Theta, ThresholdSet};
pub use fit::{FitConfig, FitResult, GradientSource};
pub use simulate::{StudyConfig, StudyResult};
