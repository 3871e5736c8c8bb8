//! Coordinate-ascent variational inference.
//!
//! One iteration updates the factors in the fixed order
//! `A, S, μ (if modeled), α (psFA only), γ, τ`; each update is the exact
//! maximizer of the ELBO in its block given the others, so the bound never
//! decreases. [`fit`] runs independent restarts and keeps the one with the
//! highest final bound.

mod elbo;
mod fit;
mod init;
mod updates;

pub use elbo::{elbo, ElboTerms};
pub use fit::{
    effective_components, fit, fit_resumable, reconstruct, Checkpoint, FitControl, FitOutcome,
    FitReport, RestartSummary, EFFECTIVE_COMPONENT_THRESHOLD,
};
pub use init::{initialize, MAX_INIT_ATTEMPTS};
pub use updates::{
    expected_at_tau_a, expected_sst, update_alpha, update_gamma, update_noise,
    update_spatial_maps, update_subject_means, update_time_courses,
};

use serde::{Deserialize, Serialize};

use crate::model::Hyperparameters;
use crate::{Error, Result};

/// Relative tolerance for an ELBO decrease to count as a violation.
pub const MONOTONE_TOL: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    /// Sparse model: per-entry ARD on the spatial maps.
    Psfa,
    /// Non-sparse ablation: `Q(α)` stays at its prior.
    Pfa,
}

/// Rate of the `Q(α_vd)` update.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AlphaRate {
    /// `b_α + ½⟨a_vd²⟩`, the conjugate update.
    #[default]
    Corrected,
    /// `b_α + ⟨a_vd²⟩`, kept for comparison; not an ELBO maximizer.
    Verbatim,
}

/// Variance of the `Q(μ_v^(b))` update.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MeanCovariance {
    /// `(β + T^(b)⟨τ_v^(b)⟩)⁻¹`, the conjugate update.
    #[default]
    Corrected,
    /// `(β + ⟨τ_v^(b)⟩)⁻¹`, kept for comparison; not an ELBO maximizer.
    Verbatim,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    /// Latent dimension `D`.
    pub latent_dim: usize,
    pub model: ModelKind,
    pub max_iters: usize,
    /// Stop once `|ΔELBO| ≤ rel_tol·|ELBO|`.
    pub rel_tol: f64,
    pub restarts: usize,
    /// Restart `i` is seeded with `seed + i`.
    pub seed: u64,
    pub model_mean: bool,
    pub hyper: Hyperparameters,
    /// Iterations between ELBO evaluations; the last iteration is always
    /// evaluated.
    pub elbo_every: usize,
    /// Fail a restart whose ELBO decreases by more than [`MONOTONE_TOL`].
    pub check_monotone: bool,
    pub alpha_rate: AlphaRate,
    pub mean_covariance: MeanCovariance,
    /// Worker threads for the per-voxel updates; 0 uses the machine default.
    /// Results do not depend on this value.
    pub threads: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            latent_dim: 6,
            model: ModelKind::Psfa,
            max_iters: 500,
            rel_tol: 1e-9,
            restarts: 1,
            seed: 0,
            model_mean: false,
            hyper: Hyperparameters::default(),
            elbo_every: 1,
            check_monotone: false,
            alpha_rate: AlphaRate::Corrected,
            mean_covariance: MeanCovariance::Corrected,
            threads: 0,
        }
    }
}

impl FitOptions {
    pub fn validate(&self) -> Result<()> {
        let invalid = |msg: &str| Err(Error::InvalidParameter(msg.to_string()));
        if self.latent_dim == 0 {
            return invalid("latent dimension must be at least 1");
        }
        if self.max_iters == 0 {
            return invalid("max_iters must be at least 1");
        }
        if !(self.rel_tol > 0.0) {
            return invalid("rel_tol must be positive");
        }
        if self.restarts == 0 {
            return invalid("restarts must be at least 1");
        }
        if self.elbo_every == 0 {
            return invalid("elbo_every must be at least 1");
        }
        self.hyper.validate()
    }
}
