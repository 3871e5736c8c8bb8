//! Data containers, hyperparameters, the variational posterior, and the
//! synthetic benchmark generator.

use serde::{Deserialize, Serialize};

use crate::numerics::{digamma_unchecked, Matrix, SeededRng};
use crate::{Error, Result};

/// Observed data: one `V × T^(b)` matrix per subject, sharing the voxel axis.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    voxels: usize,
    subjects: Vec<Matrix>,
}

impl Dataset {
    pub fn new(subjects: Vec<Matrix>) -> Result<Self> {
        let first = subjects
            .first()
            .ok_or_else(|| Error::InvalidParameter("dataset needs at least one subject".into()))?;
        let voxels = first.rows();
        if voxels == 0 {
            return Err(Error::InvalidParameter("dataset needs at least one voxel".into()));
        }
        for (b, x) in subjects.iter().enumerate() {
            if x.rows() != voxels {
                return Err(Error::DimensionMismatch(format!(
                    "subject {b} has {} voxels, subject 0 has {voxels}",
                    x.rows()
                )));
            }
            if x.cols() == 0 {
                return Err(Error::InvalidParameter(format!("subject {b} has no timepoints")));
            }
            if !x.is_finite() {
                return Err(Error::NonFinite(format!("subject {b} data")));
            }
        }
        Ok(Dataset { voxels, subjects })
    }

    pub fn voxels(&self) -> usize {
        self.voxels
    }

    pub fn n_subjects(&self) -> usize {
        self.subjects.len()
    }

    pub fn timepoints(&self, b: usize) -> usize {
        self.subjects[b].cols()
    }

    pub fn total_timepoints(&self) -> usize {
        self.subjects.iter().map(Matrix::cols).sum()
    }

    pub fn subject(&self, b: usize) -> &Matrix {
        &self.subjects[b]
    }

    pub fn subjects(&self) -> &[Matrix] {
        &self.subjects
    }

    pub fn into_subjects(self) -> Vec<Matrix> {
        self.subjects
    }

    /// Multiplies every observation by `c`.
    pub fn scaled(&self, c: f64) -> Dataset {
        Dataset {
            voxels: self.voxels,
            subjects: self.subjects.iter().map(|x| x.scaled(c)).collect(),
        }
    }
}

/// Fixed Gamma prior parameters (shape `a_*`, rate `b_*`) and the
/// subject-mean prior precision `beta`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Hyperparameters {
    pub a_alpha: f64,
    pub b_alpha: f64,
    pub a_gamma: f64,
    pub b_gamma: f64,
    pub a_tau: f64,
    pub b_tau: f64,
    pub beta: f64,
}

impl Default for Hyperparameters {
    /// Every parameter at `1e-6`; `beta` has no published value and follows
    /// the others.
    fn default() -> Self {
        Hyperparameters::uniform(1e-6)
    }
}

impl Hyperparameters {
    pub fn uniform(value: f64) -> Self {
        Hyperparameters {
            a_alpha: value,
            b_alpha: value,
            a_gamma: value,
            b_gamma: value,
            a_tau: value,
            b_tau: value,
            beta: value,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("a_alpha", self.a_alpha),
            ("b_alpha", self.b_alpha),
            ("a_gamma", self.a_gamma),
            ("b_gamma", self.b_gamma),
            ("a_tau", self.a_tau),
            ("b_tau", self.b_tau),
            ("beta", self.beta),
        ];
        for (name, v) in fields {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "hyperparameter {name} must be positive and finite, got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// Gaussian posterior over the subject means `mu^(b)`, diagonal covariance.
#[derive(Clone, Debug, PartialEq)]
pub struct SubjectMeans {
    /// `V × B` posterior means.
    pub mean: Matrix,
    /// `V × B` posterior variances.
    pub variance: Matrix,
}

/// Moments of the factorized posterior `Q`.
///
/// Gaussian factors carry means and covariances; Gamma factors carry shape
/// and rate. Fields are public so that callers can inspect and construct
/// states directly; [`VariationalState::validate`] checks the invariants.
#[derive(Clone, Debug, PartialEq)]
pub struct VariationalState {
    /// `V × D` posterior means of the spatial maps.
    pub mu_a: Matrix,
    /// Per-voxel `D × D` covariances.
    pub sigma_a: Vec<Matrix>,
    /// Per-subject `D × T^(b)` posterior means of the time courses.
    pub mu_s: Vec<Matrix>,
    /// Per-subject `D × D` covariance, shared across timepoints.
    pub sigma_s: Vec<Matrix>,
    pub means: Option<SubjectMeans>,
    pub alpha_shape: f64,
    /// `V × D`.
    pub alpha_rate: Matrix,
    pub gamma_shape: f64,
    /// Length `D`.
    pub gamma_rate: Vec<f64>,
    /// Length `B`.
    pub tau_shape: Vec<f64>,
    /// `V × B`.
    pub tau_rate: Matrix,
}

impl VariationalState {
    /// State with all Gaussian moments zero and every Gamma factor at the
    /// prior.
    pub fn zeros(ds: &Dataset, latent: usize, model_mean: bool, hyper: &Hyperparameters) -> Self {
        let v = ds.voxels();
        let b = ds.n_subjects();
        VariationalState {
            mu_a: Matrix::zeros(v, latent),
            sigma_a: vec![Matrix::zeros(latent, latent); v],
            mu_s: (0..b).map(|i| Matrix::zeros(latent, ds.timepoints(i))).collect(),
            sigma_s: vec![Matrix::zeros(latent, latent); b],
            means: model_mean.then(|| SubjectMeans {
                mean: Matrix::zeros(v, b),
                variance: Matrix::zeros(v, b),
            }),
            alpha_shape: hyper.a_alpha,
            alpha_rate: Matrix::from_fn(v, latent, |_, _| hyper.b_alpha),
            gamma_shape: hyper.a_gamma,
            gamma_rate: vec![hyper.b_gamma; latent],
            tau_shape: vec![hyper.a_tau; b],
            tau_rate: Matrix::from_fn(v, b, |_, _| hyper.b_tau),
        }
    }

    pub fn voxels(&self) -> usize {
        self.mu_a.rows()
    }

    pub fn latent_dim(&self) -> usize {
        self.mu_a.cols()
    }

    pub fn n_subjects(&self) -> usize {
        self.mu_s.len()
    }

    #[inline]
    pub fn expected_alpha(&self, v: usize, d: usize) -> f64 {
        self.alpha_shape / self.alpha_rate[(v, d)]
    }

    #[inline]
    pub fn expected_gamma(&self, d: usize) -> f64 {
        self.gamma_shape / self.gamma_rate[d]
    }

    #[inline]
    pub fn expected_tau(&self, v: usize, b: usize) -> f64 {
        self.tau_shape[b] / self.tau_rate[(v, b)]
    }

    /// `⟨log τ_v^(b)⟩ = ψ(ã) - log b̃` as a `V × B` matrix.
    pub fn expected_log_tau(&self) -> Matrix {
        let psi: Vec<f64> = self.tau_shape.iter().map(|&a| digamma_unchecked(a)).collect();
        Matrix::from_fn(self.voxels(), self.n_subjects(), |v, b| {
            psi[b] - self.tau_rate[(v, b)].ln()
        })
    }

    /// `⟨a_vd²⟩ = μ² + Σ[d,d]`.
    #[inline]
    pub fn second_moment_a(&self, v: usize, d: usize) -> f64 {
        let m = self.mu_a[(v, d)];
        m * m + self.sigma_a[v][(d, d)]
    }

    /// Posterior mean of the subject mean, zero when means are not modeled.
    #[inline]
    pub fn mean_of_mu(&self, v: usize, b: usize) -> f64 {
        self.means.as_ref().map_or(0.0, |m| m.mean[(v, b)])
    }

    /// `⟨μ_v^(b)²⟩`, zero when means are not modeled.
    #[inline]
    pub fn second_moment_mu(&self, v: usize, b: usize) -> f64 {
        self.means.as_ref().map_or(0.0, |m| {
            let x = m.mean[(v, b)];
            x * x + m.variance[(v, b)]
        })
    }

    /// Posterior mean noise variance `⟨τ_v^(b)⟩⁻¹`, `V × B`.
    pub fn noise_variance(&self) -> Matrix {
        Matrix::from_fn(self.voxels(), self.n_subjects(), |v, b| {
            1.0 / self.expected_tau(v, b)
        })
    }

    /// Checks dimensions against `ds`, positivity of every Gamma parameter and
    /// finiteness of every moment.
    pub fn validate(&self, ds: &Dataset) -> Result<()> {
        let (v, d, b) = (ds.voxels(), self.latent_dim(), ds.n_subjects());
        let bad = |what: &str| Err(Error::DimensionMismatch(what.to_string()));
        if self.mu_a.rows() != v || self.sigma_a.len() != v {
            return bad("spatial map rows differ from voxel count");
        }
        if self.sigma_a.iter().any(|s| s.shape() != (d, d)) {
            return bad("spatial map covariance is not D×D");
        }
        if self.mu_s.len() != b || self.sigma_s.len() != b {
            return bad("time course blocks differ from subject count");
        }
        for i in 0..b {
            if self.mu_s[i].shape() != (d, ds.timepoints(i)) || self.sigma_s[i].shape() != (d, d) {
                return bad("time course block has the wrong shape");
            }
        }
        if self.alpha_rate.shape() != (v, d)
            || self.gamma_rate.len() != d
            || self.tau_shape.len() != b
            || self.tau_rate.shape() != (v, b)
        {
            return bad("precision parameters have the wrong shape");
        }
        if let Some(m) = &self.means {
            if m.mean.shape() != (v, b) || m.variance.shape() != (v, b) {
                return bad("subject means have the wrong shape");
            }
        }
        let positive = std::iter::once(self.alpha_shape)
            .chain(std::iter::once(self.gamma_shape))
            .chain(self.alpha_rate.as_slice().iter().copied())
            .chain(self.gamma_rate.iter().copied())
            .chain(self.tau_shape.iter().copied())
            .chain(self.tau_rate.as_slice().iter().copied());
        for x in positive {
            if !(x > 0.0) || !x.is_finite() {
                return Err(Error::NonPositiveRate(format!("Gamma parameter {x}")));
            }
        }
        let finite = self.mu_a.is_finite()
            && self.sigma_a.iter().all(Matrix::is_finite)
            && self.mu_s.iter().all(Matrix::is_finite)
            && self.sigma_s.iter().all(Matrix::is_finite);
        if !finite {
            return Err(Error::NonFinite("variational moments".into()));
        }
        Ok(())
    }
}

/// Settings of the synthetic benchmark. [`Default`] is the published
/// configuration: 1000 voxels, 25 timepoints, 3 subjects, 3 sources, half the
/// map entries zero, noise variances from `N(0.009, 0.002²)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticConfig {
    pub voxels: usize,
    pub timepoints: usize,
    pub subjects: usize,
    pub components: usize,
    /// Probability that a map entry is zeroed.
    pub sparsity: f64,
    pub noise_mean: f64,
    /// Standard deviation of the noise-variance distribution.
    pub noise_sd: f64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            voxels: 1000,
            timepoints: 25,
            subjects: 3,
            components: 3,
            sparsity: 0.5,
            noise_mean: 0.009,
            noise_sd: 0.002,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, n) in [
            ("voxels", self.voxels),
            ("timepoints", self.timepoints),
            ("subjects", self.subjects),
            ("components", self.components),
        ] {
            if n == 0 {
                return Err(Error::InvalidParameter(format!("{name} must be at least 1")));
            }
        }
        if !(0.0..=1.0).contains(&self.sparsity) {
            return Err(Error::InvalidParameter(format!(
                "sparsity must lie in [0, 1], got {}",
                self.sparsity
            )));
        }
        if !(self.noise_mean > 0.0) || !self.noise_mean.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "noise mean must be positive, got {}",
                self.noise_mean
            )));
        }
        if !(self.noise_sd >= 0.0) || !self.noise_sd.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "noise sd must be non-negative, got {}",
                self.noise_sd
            )));
        }
        if self.noise_sd == 0.0 && self.noise_mean <= NOISE_VARIANCE_FLOOR {
            return Err(Error::InvalidParameter(format!(
                "noise mean {} is at or below the variance floor {NOISE_VARIANCE_FLOOR:e}",
                self.noise_mean
            )));
        }
        Ok(())
    }
}

/// Ground truth behind a synthetic dataset.
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticTruth {
    /// `V × D_true` spatial maps (already masked).
    pub a_true: Matrix,
    /// Per-subject `D_true × T` sources.
    pub s_true: Vec<Matrix>,
    /// `V × B` noise variances `τ_v^(b)⁻¹`.
    pub noise_variance: Matrix,
    /// `V × D_true` binary mask.
    pub mask: Matrix,
}

/// Variance draws at or below this are redrawn.
pub const NOISE_VARIANCE_FLOOR: f64 = 1e-8;

/// Draws a synthetic dataset.
///
/// Draw order (fixed, for reproducibility): map entries column by column, then
/// the mask uniforms, then per subject the sources, the `V` noise variances and
/// the noise itself.
pub fn generate_synthetic(
    rng: &mut SeededRng,
    cfg: &SyntheticConfig,
) -> Result<(Dataset, SyntheticTruth)> {
    cfg.validate()?;
    let (v, t, n_sub, d) = (cfg.voxels, cfg.timepoints, cfg.subjects, cfg.components);

    let raw = Matrix::from_col_major(v, d, rng.draw_normal(0.0, 1.0, v * d))?;
    let mask = Matrix::from_fn(v, d, |_, _| {
        if rng.uniform() > cfg.sparsity {
            1.0
        } else {
            0.0
        }
    });
    let mut a_true = raw;
    for (a, m) in a_true.as_mut_slice().iter_mut().zip(mask.as_slice()) {
        *a *= m;
    }

    let mut s_true = Vec::with_capacity(n_sub);
    let mut subjects = Vec::with_capacity(n_sub);
    let mut noise_variance = Matrix::zeros(v, n_sub);
    for b in 0..n_sub {
        let s = Matrix::from_col_major(d, t, rng.draw_normal(0.0, 1.0, d * t))?;
        for vi in 0..v {
            let mut var = rng.normal(cfg.noise_mean, cfg.noise_sd);
            while var <= NOISE_VARIANCE_FLOOR {
                var = rng.normal(cfg.noise_mean, cfg.noise_sd);
            }
            noise_variance[(vi, b)] = var;
        }
        let mut x = a_true.matmul(&s);
        for ti in 0..t {
            for vi in 0..v {
                x[(vi, ti)] += noise_variance[(vi, b)].sqrt() * rng.standard_normal();
            }
        }
        s_true.push(s);
        subjects.push(x);
    }

    Ok((
        Dataset::new(subjects)?,
        SyntheticTruth {
            a_true,
            s_true,
            noise_variance,
            mask,
        },
    ))
}

/// Removes each voxel's temporal mean, separately per subject.
pub fn demean_voxels(ds: &Dataset) -> Dataset {
    let subjects = ds
        .subjects()
        .iter()
        .map(|x| {
            let mut x = x.clone();
            let t = x.cols() as f64;
            for v in 0..x.rows() {
                let mean = (0..x.cols()).map(|j| x[(v, j)]).sum::<f64>() / t;
                for j in 0..x.cols() {
                    x[(v, j)] -= mean;
                }
            }
            x
        })
        .collect();
    Dataset {
        voxels: ds.voxels,
        subjects,
    }
}

/// Standardizes each subject's whole `V × T^(b)` block to mean 0 and
/// (population) variance 1.
///
/// One mean and one variance per subject, so relative noise levels across
/// voxels survive.
pub fn zscore_subjects(ds: &Dataset) -> Result<Dataset> {
    let subjects = ds
        .subjects()
        .iter()
        .enumerate()
        .map(|(b, x)| {
            let n = x.as_slice().len() as f64;
            let mean = x.as_slice().iter().sum::<f64>() / n;
            let var = x.as_slice().iter().map(|y| (y - mean).powi(2)).sum::<f64>() / n;
            if !(var > 0.0) {
                return Err(Error::ZeroVariance(format!("subject {b}")));
            }
            let sd = var.sqrt();
            let mut out = x.clone();
            out.as_mut_slice()
                .iter_mut()
                .for_each(|y| *y = (*y - mean) / sd);
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset {
        voxels: ds.voxels,
        subjects,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_cfg() -> SyntheticConfig {
        SyntheticConfig {
            voxels: 200,
            timepoints: 10,
            subjects: 2,
            ..SyntheticConfig::default()
        }
    }

    #[test]
    fn default_matches_benchmark() {
        let (ds, truth) = generate_synthetic(&mut SeededRng::new(1), &SyntheticConfig::default())
            .unwrap();
        assert_eq!(ds.voxels(), 1000);
        assert_eq!(ds.n_subjects(), 3);
        assert!((0..3).all(|b| ds.timepoints(b) == 25));
        assert_eq!(truth.a_true.shape(), (1000, 3));
        assert_eq!(truth.s_true[0].shape(), (3, 25));
        assert!(truth.noise_variance.as_slice().iter().all(|&x| x > 0.0));
    }

    #[test]
    fn degenerate_noise_is_exact() {
        let cfg = SyntheticConfig {
            noise_sd: 0.0,
            noise_mean: 0.04,
            ..small_cfg()
        };
        let (_, truth) = generate_synthetic(&mut SeededRng::new(2), &cfg).unwrap();
        assert!(truth.noise_variance.as_slice().iter().all(|&x| x == 0.04));
    }

    #[test]
    fn mask_density_within_binomial_bound() {
        let cfg = SyntheticConfig::default();
        let (_, truth) = generate_synthetic(&mut SeededRng::new(3), &cfg).unwrap();
        let n = (cfg.voxels * cfg.components) as f64;
        let density = truth.mask.as_slice().iter().sum::<f64>() / n;
        assert!((density - 0.5).abs() <= 3.0 * (0.25 / n).sqrt(), "density {density}");
        for (a, m) in truth.a_true.as_slice().iter().zip(truth.mask.as_slice()) {
            assert!(*m == 0.0 || *m == 1.0);
            if *m == 0.0 {
                assert_eq!(*a, 0.0);
            }
        }
    }

    #[test]
    fn generation_is_reproducible() {
        let a = generate_synthetic(&mut SeededRng::new(9), &small_cfg()).unwrap();
        let b = generate_synthetic(&mut SeededRng::new(9), &small_cfg()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn near_noiseless_data_is_the_product() {
        let cfg = SyntheticConfig {
            noise_mean: 2.0 * NOISE_VARIANCE_FLOOR,
            noise_sd: 0.0,
            ..small_cfg()
        };
        let (ds, truth) = generate_synthetic(&mut SeededRng::new(4), &cfg).unwrap();
        for b in 0..cfg.subjects {
            let clean = truth.a_true.matmul(&truth.s_true[b]);
            let mut diff = ds.subject(b).clone();
            diff.add_scaled(-1.0, &clean);
            assert!(diff.max_abs() < 1e-3);
        }
    }

    #[test]
    fn rejects_invalid_settings() {
        let mut rng = SeededRng::new(0);
        for cfg in [
            SyntheticConfig { voxels: 0, ..small_cfg() },
            SyntheticConfig { sparsity: 1.5, ..small_cfg() },
            SyntheticConfig { noise_mean: 0.0, ..small_cfg() },
            SyntheticConfig { noise_sd: -1.0, ..small_cfg() },
        ] {
            assert!(matches!(
                generate_synthetic(&mut rng, &cfg),
                Err(Error::InvalidParameter(_))
            ));
        }
    }

    #[test]
    fn demeaning() {
        let (ds, _) = generate_synthetic(&mut SeededRng::new(5), &small_cfg()).unwrap();
        let out = demean_voxels(&ds);
        for x in out.subjects() {
            for v in 0..x.rows() {
                let m = x.row(v).iter().sum::<f64>() / x.cols() as f64;
                assert!(m.abs() < 1e-12);
            }
        }
        let again = demean_voxels(&out);
        for (a, b) in again.subjects().iter().zip(out.subjects()) {
            let mut d = a.clone();
            d.add_scaled(-1.0, b);
            assert!(d.max_abs() < 1e-12);
        }

        let constant = Dataset::new(vec![Matrix::from_fn(3, 4, |_, _| 7.5)]).unwrap();
        assert!(demean_voxels(&constant).subject(0).as_slice().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn zscoring() {
        let (ds, _) = generate_synthetic(&mut SeededRng::new(6), &small_cfg()).unwrap();
        let out = zscore_subjects(&ds).unwrap();
        for x in out.subjects() {
            let n = x.as_slice().len() as f64;
            let m = x.as_slice().iter().sum::<f64>() / n;
            let var = x.as_slice().iter().map(|y| (y - m).powi(2)).sum::<f64>() / n;
            assert!(m.abs() < 1e-12);
            assert!((var - 1.0).abs() < 1e-12);
        }

        let pm = Matrix::from_rows(&[[-2.0, 2.0], [2.0, -2.0]]).unwrap();
        let out = zscore_subjects(&Dataset::new(vec![pm]).unwrap()).unwrap();
        assert_eq!(out.subject(0).as_slice(), &[-1.0, 1.0, 1.0, -1.0]);

        let constant = Dataset::new(vec![Matrix::from_fn(2, 2, |_, _| 1.0)]).unwrap();
        assert!(matches!(zscore_subjects(&constant), Err(Error::ZeroVariance(_))));
    }

    #[test]
    fn dataset_validation() {
        assert!(Dataset::new(vec![]).is_err());
        assert!(Dataset::new(vec![Matrix::zeros(3, 2), Matrix::zeros(4, 2)]).is_err());
        assert!(Dataset::new(vec![Matrix::zeros(3, 0)]).is_err());
        let ds = Dataset::new(vec![Matrix::zeros(3, 2), Matrix::zeros(3, 5)]).unwrap();
        assert_eq!(ds.total_timepoints(), 7);
    }

    #[test]
    fn hyperparameter_validation() {
        assert!(Hyperparameters::default().validate().is_ok());
        let h = Hyperparameters {
            beta: 0.0,
            ..Hyperparameters::default()
        };
        assert!(h.validate().is_err());
    }
}
