use serde::{Deserialize, Serialize};

use super::updates::{expected_sq_residuals, subject_moments};
use crate::model::{Dataset, Hyperparameters, VariationalState};
use crate::numerics::{digamma, lgamma, pd_factorize, LN_2PI};
use crate::{Error, Result};

/// The evidence lower bound split into expected log densities and entropies.
///
/// Terms for the subject means are zero when means are not modeled.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ElboTerms {
    pub log_likelihood: f64,
    pub log_p_a: f64,
    pub log_p_s: f64,
    pub log_p_mu: f64,
    pub log_p_alpha: f64,
    pub log_p_gamma: f64,
    pub log_p_tau: f64,
    pub entropy_a: f64,
    pub entropy_s: f64,
    pub entropy_mu: f64,
    pub entropy_alpha: f64,
    pub entropy_gamma: f64,
    pub entropy_tau: f64,
}

impl ElboTerms {
    pub fn named(&self) -> [(&'static str, f64); 13] {
        [
            ("log_likelihood", self.log_likelihood),
            ("log_p_a", self.log_p_a),
            ("log_p_s", self.log_p_s),
            ("log_p_mu", self.log_p_mu),
            ("log_p_alpha", self.log_p_alpha),
            ("log_p_gamma", self.log_p_gamma),
            ("log_p_tau", self.log_p_tau),
            ("entropy_a", self.entropy_a),
            ("entropy_s", self.entropy_s),
            ("entropy_mu", self.entropy_mu),
            ("entropy_alpha", self.entropy_alpha),
            ("entropy_gamma", self.entropy_gamma),
            ("entropy_tau", self.entropy_tau),
        ]
    }

    pub fn total(&self) -> f64 {
        self.named().iter().map(|(_, x)| x).sum()
    }
}

/// `⟨log G(x | a, b)⟩` under `Q` with `⟨x⟩` and `⟨log x⟩` given.
#[inline]
fn gamma_log_density(lgamma_a: f64, a: f64, b: f64, mean: f64, mean_log: f64) -> f64 {
    -lgamma_a + a * b.ln() + (a - 1.0) * mean_log - b * mean
}

/// `⟨log N(a | 0, 1/α)⟩` for one map entry.
#[inline]
fn ard_log_density(mean_prec: f64, mean_log_prec: f64, second_moment: f64) -> f64 {
    -0.5 * LN_2PI + 0.5 * mean_log_prec - 0.5 * mean_prec * second_moment
}

/// Entropy of `G(shape, rate)`.
#[inline]
fn gamma_entropy(lgamma_shape: f64, psi_shape: f64, shape: f64, rate: f64) -> f64 {
    lgamma_shape - (shape - 1.0) * psi_shape - rate.ln() + shape
}

/// Evaluates the bound for `state` on `ds`.
///
/// The likelihood term expands `Σ_t ⟨(x_tv - a_v s_t - μ_v)²⟩` with the same
/// trace identity used by the noise update.
pub fn elbo(state: &VariationalState, ds: &Dataset, hyper: &Hyperparameters) -> Result<ElboTerms> {
    let (nv, d, nb) = (state.voxels(), state.latent_dim(), ds.n_subjects());
    let df = d as f64;
    let gauss_entropy_unit = 0.5 * (1.0 + LN_2PI);
    let mut terms = ElboTerms::default();

    let moments = subject_moments(state, ds);
    let residuals = expected_sq_residuals(state, &moments);
    let log_tau = state.expected_log_tau();

    // likelihood, P(τ), H(τ)
    let lg_a_tau = lgamma(hyper.a_tau)?;
    for b in 0..nb {
        let t = ds.timepoints(b) as f64;
        let shape = state.tau_shape[b];
        let lg_shape = lgamma(shape)?;
        let psi_shape = digamma(shape)?;
        for v in 0..nv {
            let tau = state.expected_tau(v, b);
            let lt = log_tau[(v, b)];
            terms.log_likelihood += 0.5 * t * (lt - LN_2PI) - 0.5 * tau * residuals[(v, b)];
            terms.log_p_tau += gamma_log_density(lg_a_tau, hyper.a_tau, hyper.b_tau, tau, lt);
            terms.entropy_tau += gamma_entropy(lg_shape, psi_shape, shape, state.tau_rate[(v, b)]);
        }
    }

    // P(A|α), P(α), H(α)
    let lg_a_alpha = lgamma(hyper.a_alpha)?;
    let lg_alpha_shape = lgamma(state.alpha_shape)?;
    let psi_alpha_shape = digamma(state.alpha_shape)?;
    for k in 0..d {
        for v in 0..nv {
            let rate = state.alpha_rate[(v, k)];
            let mean = state.alpha_shape / rate;
            let mean_log = psi_alpha_shape - rate.ln();
            terms.log_p_a += ard_log_density(mean, mean_log, state.second_moment_a(v, k));
            terms.log_p_alpha +=
                gamma_log_density(lg_a_alpha, hyper.a_alpha, hyper.b_alpha, mean, mean_log);
            terms.entropy_alpha +=
                gamma_entropy(lg_alpha_shape, psi_alpha_shape, state.alpha_shape, rate);
        }
    }

    // P(S|γ), P(γ), H(γ)
    let lg_a_gamma = lgamma(hyper.a_gamma)?;
    let lg_gamma_shape = lgamma(state.gamma_shape)?;
    let psi_gamma_shape = digamma(state.gamma_shape)?;
    let gamma_mean: Vec<f64> = (0..d).map(|k| state.expected_gamma(k)).collect();
    let gamma_log: Vec<f64> = state
        .gamma_rate
        .iter()
        .map(|r| psi_gamma_shape - r.ln())
        .collect();
    let sum_log_gamma: f64 = gamma_log.iter().sum();
    for (b, m) in moments.iter().enumerate() {
        let t = ds.timepoints(b) as f64;
        let weighted: f64 = (0..d).map(|k| gamma_mean[k] * m.sst[(k, k)]).sum();
        terms.log_p_s += t * (-0.5 * df * LN_2PI + 0.5 * sum_log_gamma) - 0.5 * weighted;
    }
    for k in 0..d {
        terms.log_p_gamma += gamma_log_density(
            lg_a_gamma,
            hyper.a_gamma,
            hyper.b_gamma,
            gamma_mean[k],
            gamma_log[k],
        );
        terms.entropy_gamma += gamma_entropy(
            lg_gamma_shape,
            psi_gamma_shape,
            state.gamma_shape,
            state.gamma_rate[k],
        );
    }

    // H(A), H(S)
    for sigma in &state.sigma_a {
        terms.entropy_a += 0.5 * pd_factorize(sigma)?.log_det() + df * gauss_entropy_unit;
    }
    for (b, sigma) in state.sigma_s.iter().enumerate() {
        let t = ds.timepoints(b) as f64;
        terms.entropy_s += t * (0.5 * pd_factorize(sigma)?.log_det() + df * gauss_entropy_unit);
    }

    // P(μ), H(μ)
    if let Some(means) = &state.means {
        let vf = nv as f64;
        for b in 0..nb {
            let energy: f64 = (0..nv).map(|v| state.second_moment_mu(v, b)).sum();
            terms.log_p_mu +=
                -0.5 * vf * LN_2PI + 0.5 * vf * hyper.beta.ln() - 0.5 * hyper.beta * energy;
            for v in 0..nv {
                let var = means.variance[(v, b)];
                if !(var > 0.0) {
                    return Err(Error::NonFinite(format!(
                        "subject mean variance {var} at voxel {v}, subject {b}"
                    )));
                }
                terms.entropy_mu += 0.5 * var.ln() + gauss_entropy_unit;
            }
        }
    }

    if let Some((name, _)) = terms.named().iter().find(|(_, x)| !x.is_finite()) {
        return Err(Error::NonFinite(format!("ELBO term {name}")));
    }
    Ok(terms)
}
