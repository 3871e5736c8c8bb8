//! Group-level probabilistic sparse factor analysis (psFA).
//!
//! The model decomposes a stack of subject data matrices `X^(b)` (voxels by
//! timepoints) into shared spatial maps `A` and subject-specific time courses
//! `S^(b)`:
//!
//! ```text
//! x_t^(b) ~ N(A s_t^(b) + mu^(b), diag(tau^(b))^-1)
//! a_v     ~ N(0, diag(alpha_v)^-1)      per-voxel ARD sparsity
//! s_t^(b) ~ N(0, diag(gamma)^-1)        per-component ARD pruning
//! ```
//!
//! with Gamma priors on every precision. Inference is mean-field variational
//! Bayes with closed-form coordinate-ascent updates; the evidence lower bound
//! is tracked in full so that every fit can be checked for monotone ascent.
//!
//! Module map:
//!
//! - [`numerics`]: column-major matrices, Cholesky factorization, special
//!   functions and the seeded random number generator.
//! - [`model`]: datasets, hyperparameters, the variational state and the
//!   synthetic benchmark generator.
//! - [`engine`]: update blocks, the ELBO, and the restart-aware fit driver.
//! - [`baselines`]: group PCA on temporally concatenated data.
//! - [`metrics`]: component matching, Amari index, kurtosis and map
//!   summaries.
//! - [`io`]: binary dataset/matrix formats, run configuration, reports and
//!   checkpoints. [`cli`] wires these into the `psfa` binary.

pub mod baselines;
pub mod cli;
pub mod engine;
mod error;
pub mod io;
pub mod metrics;
pub mod model;
pub mod numerics;

pub use error::{Error, Result};

pub use baselines::{group_pca, PcaResult};
pub use engine::{
    fit, initialize, AlphaRate, ElboTerms, FitOptions, FitReport, MeanCovariance, ModelKind,
};
pub use metrics::{amari_index, match_components, ComponentMatch};
pub use model::{Dataset, Hyperparameters, SyntheticConfig, SyntheticTruth, VariationalState};
pub use numerics::{Cholesky, Matrix, SeededRng};
