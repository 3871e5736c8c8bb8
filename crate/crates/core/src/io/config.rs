//! Flat key-value run configurations (TOML), one per command.
//!
//! Every command's flags map one-to-one onto a config; the same document is
//! echoed next to the outputs and can be replayed with `psfa rerun`.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::engine::{AlphaRate, FitOptions, MeanCovariance, ModelKind};
use crate::model::{Hyperparameters, SyntheticConfig};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "lowercase")]
pub enum RunConfig {
    Generate(GenerateConfig),
    Fit(FitConfig),
    Eval(EvalConfig),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GenerateConfig {
    pub voxels: usize,
    pub timepoints: usize,
    pub subjects: usize,
    pub components: usize,
    pub sparsity: f64,
    pub noise_mean: f64,
    pub noise_sd: f64,
    pub seed: u64,
    /// Output directory.
    pub out: PathBuf,
}

impl Default for GenerateConfig {
    fn default() -> Self {
        let s = SyntheticConfig::default();
        GenerateConfig {
            voxels: s.voxels,
            timepoints: s.timepoints,
            subjects: s.subjects,
            components: s.components,
            sparsity: s.sparsity,
            noise_mean: s.noise_mean,
            noise_sd: s.noise_sd,
            seed: 0,
            out: PathBuf::new(),
        }
    }
}

impl GenerateConfig {
    pub fn synthetic(&self) -> SyntheticConfig {
        SyntheticConfig {
            voxels: self.voxels,
            timepoints: self.timepoints,
            subjects: self.subjects,
            components: self.components,
            sparsity: self.sparsity,
            noise_mean: self.noise_mean,
            noise_sd: self.noise_sd,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.synthetic().validate()?;
        require_set("out", &self.out)?;
        prepare_dir(&self.out)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum FitModel {
    Psfa,
    Pfa,
    Pca,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitConfig {
    pub model: FitModel,
    pub components: usize,
    pub max_iters: usize,
    pub tol: f64,
    pub restarts: usize,
    pub seed: u64,
    pub mean: bool,
    #[serde(rename = "in")]
    pub input: PathBuf,
    /// Output directory.
    pub out: PathBuf,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub checkpoint_every: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub resume: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub halt_after: Option<usize>,
    /// 0 means machine parallelism.
    pub threads: usize,
    pub elbo_every: usize,
    pub check_monotone: bool,
    pub alpha_rate: AlphaRate,
    pub mean_covariance: MeanCovariance,
    pub a_alpha: f64,
    pub b_alpha: f64,
    pub a_gamma: f64,
    pub b_gamma: f64,
    pub a_tau: f64,
    pub b_tau: f64,
    pub beta: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        let o = FitOptions::default();
        let h = o.hyper;
        FitConfig {
            model: FitModel::Psfa,
            components: o.latent_dim,
            max_iters: o.max_iters,
            tol: o.rel_tol,
            restarts: o.restarts,
            seed: o.seed,
            mean: o.model_mean,
            input: PathBuf::new(),
            out: PathBuf::new(),
            checkpoint_every: None,
            resume: None,
            halt_after: None,
            threads: o.threads,
            elbo_every: o.elbo_every,
            check_monotone: o.check_monotone,
            alpha_rate: o.alpha_rate,
            mean_covariance: o.mean_covariance,
            a_alpha: h.a_alpha,
            b_alpha: h.b_alpha,
            a_gamma: h.a_gamma,
            b_gamma: h.b_gamma,
            a_tau: h.a_tau,
            b_tau: h.b_tau,
            beta: h.beta,
        }
    }
}

impl FitConfig {
    pub fn hyper(&self) -> Hyperparameters {
        Hyperparameters {
            a_alpha: self.a_alpha,
            b_alpha: self.b_alpha,
            a_gamma: self.a_gamma,
            b_gamma: self.b_gamma,
            a_tau: self.a_tau,
            b_tau: self.b_tau,
            beta: self.beta,
        }
    }

    /// Engine options; `None` for the PCA baseline.
    pub fn options(&self) -> Option<FitOptions> {
        let model = match self.model {
            FitModel::Psfa => ModelKind::Psfa,
            FitModel::Pfa => ModelKind::Pfa,
            FitModel::Pca => return None,
        };
        Some(FitOptions {
            latent_dim: self.components,
            model,
            max_iters: self.max_iters,
            rel_tol: self.tol,
            restarts: self.restarts,
            seed: self.seed,
            model_mean: self.mean,
            hyper: self.hyper(),
            elbo_every: self.elbo_every,
            check_monotone: self.check_monotone,
            alpha_rate: self.alpha_rate,
            mean_covariance: self.mean_covariance,
            threads: self.threads,
        })
    }

    /// The config to echo: the whole fit, without resume or halt controls.
    pub fn echo(&self) -> FitConfig {
        FitConfig {
            resume: None,
            halt_after: None,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.options() {
            Some(o) => o.validate()?,
            None if self.components == 0 => {
                return Err(Error::InvalidParameter("components must be at least 1".into()))
            }
            None => {}
        }
        if self.checkpoint_every == Some(0) {
            return Err(Error::InvalidParameter("checkpoint_every must be at least 1".into()));
        }
        require_file("in", &self.input)?;
        if let Some(p) = &self.resume {
            require_file("resume", p)?;
        }
        require_set("out", &self.out)?;
        prepare_dir(&self.out)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalConfig {
    pub est: PathBuf,
    #[serde(rename = "ref")]
    pub reference: PathBuf,
    /// True `V × B` noise variances.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truth_noise: Option<PathBuf>,
    /// Estimated `V × B` noise variances.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub est_noise: Option<PathBuf>,
    /// Report file.
    pub out: PathBuf,
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        require_file("est", &self.est)?;
        require_file("ref", &self.reference)?;
        match (&self.truth_noise, &self.est_noise) {
            (Some(t), Some(e)) => {
                require_file("truth_noise", t)?;
                require_file("est_noise", e)?;
            }
            (None, None) => {}
            _ => {
                return Err(Error::Config(
                    "truth_noise and est_noise must be given together".into(),
                ))
            }
        }
        require_set("out", &self.out)?;
        match self.out.parent() {
            Some(p) if !p.as_os_str().is_empty() && !p.is_dir() => Err(Error::Config(format!(
                "output directory {} does not exist",
                p.display()
            ))),
            _ => Ok(()),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        match self {
            RunConfig::Generate(c) => c.validate(),
            RunConfig::Fit(c) => c.validate(),
            RunConfig::Eval(c) => c.validate(),
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run configs serialize to TOML")
    }

    pub fn from_toml(text: &str) -> Result<RunConfig> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn read(path: &Path) -> Result<RunConfig> {
        let text = fs::read_to_string(path)?;
        Self::from_toml(&text)
    }
}

fn require_set(key: &str, p: &Path) -> Result<()> {
    if p.as_os_str().is_empty() {
        return Err(Error::Config(format!("`{key}` is required")));
    }
    Ok(())
}

fn require_file(key: &str, p: &Path) -> Result<()> {
    require_set(key, p)?;
    if !p.is_file() {
        return Err(Error::Config(format!("`{key}`: {} is not a file", p.display())));
    }
    Ok(())
}

fn prepare_dir(p: &Path) -> Result<()> {
    if p.exists() && !p.is_dir() {
        return Err(Error::Config(format!("{} exists and is not a directory", p.display())));
    }
    fs::create_dir_all(p)?;
    Ok(())
}
