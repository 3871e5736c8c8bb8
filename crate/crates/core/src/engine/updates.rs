//! Closed-form coordinate updates.
//!
//! Per-voxel work runs as a parallel map; every cross-voxel or cross-subject
//! sum is accumulated serially in index order, so results are bit-identical
//! for any worker count.

use rayon::prelude::*;

use super::{AlphaRate, MeanCovariance};
use crate::model::{Dataset, Hyperparameters, VariationalState};
use crate::numerics::{dot, pd_factorize, Matrix};
use crate::{Error, Result};

/// `⟨S^(b) S^(b)ᵀ⟩ = Σ_t μ_t μ_tᵀ + T^(b) Σ_S^(b)`.
pub fn expected_sst(state: &VariationalState, b: usize) -> Matrix {
    let mu = &state.mu_s[b];
    let mut out = mu.matmul_transpose(mu);
    out.add_scaled(mu.cols() as f64, &state.sigma_s[b]);
    out.symmetrize();
    out
}

/// `⟨Aᵀ diag(τ^(b)) A⟩ = Σ_v ⟨τ_v^(b)⟩ Σ_A^v + ⟨A⟩ᵀ diag⟨τ^(b)⟩ ⟨A⟩`.
pub fn expected_at_tau_a(state: &VariationalState, b: usize) -> Matrix {
    let d = state.latent_dim();
    let mut out = Matrix::zeros(d, d);
    let mut row = vec![0.0; d];
    for v in 0..state.voxels() {
        let tau = state.expected_tau(v, b);
        out.add_scaled(tau, &state.sigma_a[v]);
        for (k, r) in row.iter_mut().enumerate() {
            *r = state.mu_a[(v, k)];
        }
        out.add_outer(tau, &row, &row);
    }
    out.symmetrize();
    out
}

/// Per-subject sufficient statistics shared by the map, noise and ELBO
/// computations.
pub(crate) struct SubjectMoments {
    /// `⟨S Sᵀ⟩`, `D × D`.
    pub sst: Matrix,
    /// `X ⟨S⟩ᵀ`, `V × D`.
    pub xs: Matrix,
    /// `Σ_t ⟨s_t⟩`.
    pub s_sum: Vec<f64>,
    /// `‖x_v‖²` per voxel.
    pub x_sq: Vec<f64>,
    /// `Σ_t x_tv` per voxel.
    pub x_sum: Vec<f64>,
}

pub(crate) fn subject_moments(state: &VariationalState, ds: &Dataset) -> Vec<SubjectMoments> {
    (0..ds.n_subjects())
        .map(|b| {
            let x = ds.subject(b);
            let mu = &state.mu_s[b];
            let s_sum = (0..mu.rows())
                .map(|k| (0..mu.cols()).map(|t| mu[(k, t)]).sum())
                .collect();
            let mut x_sq = vec![0.0; x.rows()];
            let mut x_sum = vec![0.0; x.rows()];
            for t in 0..x.cols() {
                for (v, &val) in x.col(t).iter().enumerate() {
                    x_sq[v] += val * val;
                    x_sum[v] += val;
                }
            }
            SubjectMoments {
                sst: expected_sst(state, b),
                xs: x.matmul_transpose(mu),
                s_sum,
                x_sq,
                x_sum,
            }
        })
        .collect()
}

/// `Σ_t ⟨(x_tv - a_v s_t - μ_v)²⟩` for every voxel and subject, `V × B`.
///
/// Uses `⟨a_vᵀ S Sᵀ a_v⟩ = tr(⟨S Sᵀ⟩ Σ_A^v) + ⟨a_v⟩ᵀ ⟨S Sᵀ⟩ ⟨a_v⟩`.
pub(crate) fn expected_sq_residuals(
    state: &VariationalState,
    moments: &[SubjectMoments],
) -> Matrix {
    let (nv, nb, d) = (state.voxels(), moments.len(), state.latent_dim());
    let cols: Vec<Vec<f64>> = (0..nv)
        .into_par_iter()
        .map(|v| {
            let a: Vec<f64> = (0..d).map(|k| state.mu_a[(v, k)]).collect();
            let sigma = &state.sigma_a[v];
            moments
                .iter()
                .enumerate()
                .map(|(b, m)| {
                    let t = state.mu_s[b].cols() as f64;
                    let mu = state.mean_of_mu(v, b);
                    let mu2 = state.second_moment_mu(v, b);
                    let a_xs: f64 = (0..d).map(|k| a[k] * m.xs[(v, k)]).sum();
                    let a_ssum = dot(&a, &m.s_sum);
                    let mut trace = 0.0;
                    let mut quad = 0.0;
                    for j in 0..d {
                        for i in 0..d {
                            trace += m.sst[(i, j)] * sigma[(j, i)];
                            quad += a[i] * m.sst[(i, j)] * a[j];
                        }
                    }
                    m.x_sq[v] + t * mu2 - 2.0 * (a_xs + mu * m.x_sum[v])
                        + 2.0 * a_ssum * mu
                        + trace
                        + quad
                })
                .collect()
        })
        .collect();
    Matrix::from_fn(nv, nb, |v, b| cols[v][b])
}

/// `Q(A)`: for every voxel
/// `Σ_A^v = (diag⟨α_v⟩ + Σ_b ⟨τ_v^(b)⟩⟨S^(b)S^(b)ᵀ⟩)⁻¹` and
/// `μ_A^v = Σ_A^v Σ_b ⟨τ_v^(b)⟩ Σ_t ⟨s_t^(b)⟩(x_tv^(b) - ⟨μ_v^(b)⟩)`.
pub fn update_spatial_maps(state: &mut VariationalState, ds: &Dataset) -> Result<()> {
    let d = state.latent_dim();
    let moments = subject_moments(state, ds);
    let st = &*state;
    let rows = (0..st.voxels())
        .into_par_iter()
        .map(|v| {
            let mut precision = Matrix::zeros(d, d);
            for k in 0..d {
                precision[(k, k)] = st.expected_alpha(v, k);
            }
            let mut rhs = vec![0.0; d];
            for (b, m) in moments.iter().enumerate() {
                let tau = st.expected_tau(v, b);
                precision.add_scaled(tau, &m.sst);
                let mu = st.mean_of_mu(v, b);
                for (k, r) in rhs.iter_mut().enumerate() {
                    *r += tau * (m.xs[(v, k)] - mu * m.s_sum[k]);
                }
            }
            let f = pd_factorize(&precision)?;
            f.solve_in_place(&mut rhs);
            Ok((rhs, f.inverse()))
        })
        .collect::<Result<Vec<_>>>()?;
    for (v, (mean, cov)) in rows.into_iter().enumerate() {
        for (k, m) in mean.into_iter().enumerate() {
            state.mu_a[(v, k)] = m;
        }
        state.sigma_a[v] = cov;
    }
    Ok(())
}

/// `Q(S)`: per subject
/// `Σ_S^(b) = (diag⟨γ⟩ + ⟨Aᵀ diag(τ^(b)) A⟩)⁻¹` and
/// `μ_S,t^(b) = Σ_S^(b) ⟨A⟩ᵀ diag⟨τ^(b)⟩ (x_t^(b) - ⟨μ^(b)⟩)`.
pub fn update_time_courses(state: &mut VariationalState, ds: &Dataset) -> Result<()> {
    let (nv, d) = (state.voxels(), state.latent_dim());
    for b in 0..ds.n_subjects() {
        let mut precision = expected_at_tau_a(state, b);
        for k in 0..d {
            precision[(k, k)] += state.expected_gamma(k);
        }
        let f = pd_factorize(&precision)?;
        let weighted = Matrix::from_fn(nv, d, |v, k| state.expected_tau(v, b) * state.mu_a[(v, k)]);
        let mut rhs = weighted.transpose_matmul(ds.subject(b));
        if state.means.is_some() {
            let mu: Vec<f64> = (0..nv).map(|v| state.mean_of_mu(v, b)).collect();
            let offset: Vec<f64> = (0..d).map(|k| dot(weighted.col(k), &mu)).collect();
            for t in 0..rhs.cols() {
                for (r, o) in rhs.col_mut(t).iter_mut().zip(&offset) {
                    *r -= o;
                }
            }
        }
        state.mu_s[b] = f.solve(&rhs)?;
        state.sigma_s[b] = f.inverse();
    }
    Ok(())
}

/// `Q(μ)`: `μ_μ,v^(b) = σ² ⟨τ_v^(b)⟩ Σ_t (x_tv^(b) - ⟨a_v⟩⟨s_t^(b)⟩)` with
/// variance `σ²` chosen by `variant`. No-op when means are not modeled.
pub fn update_subject_means(
    state: &mut VariationalState,
    ds: &Dataset,
    hyper: &Hyperparameters,
    variant: MeanCovariance,
) -> Result<()> {
    if state.means.is_none() {
        return Ok(());
    }
    let moments = subject_moments(state, ds);
    let d = state.latent_dim();
    let (nv, nb) = (state.voxels(), ds.n_subjects());
    let mut mean = Matrix::zeros(nv, nb);
    let mut variance = Matrix::zeros(nv, nb);
    for (b, m) in moments.iter().enumerate() {
        let t = ds.timepoints(b) as f64;
        for v in 0..nv {
            let tau = state.expected_tau(v, b);
            let var = match variant {
                MeanCovariance::Corrected => 1.0 / (hyper.beta + t * tau),
                MeanCovariance::Verbatim => 1.0 / (hyper.beta + tau),
            };
            let fitted: f64 = (0..d).map(|k| state.mu_a[(v, k)] * m.s_sum[k]).sum();
            mean[(v, b)] = var * tau * (m.x_sum[v] - fitted);
            variance[(v, b)] = var;
        }
    }
    state.means = Some(crate::model::SubjectMeans { mean, variance });
    Ok(())
}

/// `Q(α)`: shape `a_α + ½`, rate `b_α + ½⟨a_vd²⟩` (or the verbatim variant).
pub fn update_alpha(state: &mut VariationalState, hyper: &Hyperparameters, variant: AlphaRate) {
    let factor = match variant {
        AlphaRate::Corrected => 0.5,
        AlphaRate::Verbatim => 1.0,
    };
    state.alpha_shape = hyper.a_alpha + 0.5;
    for d in 0..state.latent_dim() {
        for v in 0..state.voxels() {
            state.alpha_rate[(v, d)] = hyper.b_alpha + factor * state.second_moment_a(v, d);
        }
    }
}

/// `Q(γ)`: shape `a_γ + ½Σ_b T^(b)`, rate
/// `b_γ + ½Σ_b (Σ_t μ_S,td² + T^(b) Σ_S^(b)[d,d])`.
pub fn update_gamma(state: &mut VariationalState, hyper: &Hyperparameters) {
    let total_t: usize = state.mu_s.iter().map(Matrix::cols).sum();
    state.gamma_shape = hyper.a_gamma + 0.5 * total_t as f64;
    for d in 0..state.latent_dim() {
        let mut energy = 0.0;
        for (mu, sigma) in state.mu_s.iter().zip(&state.sigma_s) {
            let sq: f64 = (0..mu.cols()).map(|t| mu[(d, t)] * mu[(d, t)]).sum();
            energy += sq + mu.cols() as f64 * sigma[(d, d)];
        }
        state.gamma_rate[d] = hyper.b_gamma + 0.5 * energy;
    }
}

/// `Q(τ)`: shape `a_τ + T^(b)/2`, rate `b_τ + ½ Σ_t ⟨(x_tv - a_v s_t - μ_v)²⟩`.
pub fn update_noise(
    state: &mut VariationalState,
    ds: &Dataset,
    hyper: &Hyperparameters,
) -> Result<()> {
    let moments = subject_moments(state, ds);
    let residuals = expected_sq_residuals(state, &moments);
    for b in 0..ds.n_subjects() {
        state.tau_shape[b] = hyper.a_tau + 0.5 * ds.timepoints(b) as f64;
        for v in 0..ds.voxels() {
            let rate = hyper.b_tau + 0.5 * residuals[(v, b)];
            if !(rate > 0.0) || !rate.is_finite() {
                return Err(Error::NonPositiveRate(format!(
                    "noise rate for voxel {v}, subject {b}: {rate}"
                )));
            }
            state.tau_rate[(v, b)] = rate;
        }
    }
    Ok(())
}
