//! Group PCA on temporally concatenated data.

use crate::model::Dataset;
use crate::numerics::Matrix;
use crate::{Error, Result};

#[derive(Clone, Debug)]
pub struct PcaResult {
    /// `V × D`, orthonormal columns.
    pub spatial_maps: Matrix,
    /// Per-subject `D × T^(b)` projections.
    pub timecourses: Vec<Matrix>,
    /// All singular values of the concatenated data, non-increasing.
    pub singular_values: Vec<f64>,
    /// Variance share of each of the `D` retained components.
    pub explained_variance_ratio: Vec<f64>,
}

/// Top-`D` left singular vectors of `[X^(1) … X^(B)]`.
///
/// The SVD is taken of the `V × ΣT` concatenation itself. Each component's
/// sign is chosen so that its largest-magnitude map entry is positive.
pub fn group_pca(ds: &Dataset, components: usize) -> Result<PcaResult> {
    let total_t = ds.total_timepoints();
    let max_rank = ds.voxels().min(total_t);
    if components == 0 || components > max_rank {
        return Err(Error::DimensionMismatch(format!(
            "{components} components requested from {}x{total_t} data (rank at most {max_rank})",
            ds.voxels()
        )));
    }
    let blocks: Vec<&Matrix> = ds.subjects().iter().collect();
    let concat = Matrix::hcat(&blocks)?;
    let svd = nalgebra::linalg::SVD::new(concat.to_nalgebra(), true, false);
    let u = svd.u.as_ref().expect("left singular vectors requested");

    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let singular_values: Vec<f64> = order.iter().map(|&i| svd.singular_values[i]).collect();

    let mut maps = Matrix::zeros(ds.voxels(), components);
    for (k, &src) in order.iter().take(components).enumerate() {
        let col = u.column(src);
        let pivot = col.iter().fold(0.0f64, |m, &x| if x.abs() > m.abs() { x } else { m });
        let sign = if pivot < 0.0 { -1.0 } else { 1.0 };
        for (dst, &x) in maps.col_mut(k).iter_mut().zip(col.iter()) {
            *dst = sign * x;
        }
    }

    let timecourses = ds
        .subjects()
        .iter()
        .map(|x| maps.transpose_matmul(x))
        .collect();
    let total_power: f64 = singular_values.iter().map(|s| s * s).sum();
    let explained_variance_ratio = singular_values
        .iter()
        .take(components)
        .map(|s| if total_power > 0.0 { s * s / total_power } else { 0.0 })
        .collect();

    Ok(PcaResult {
        spatial_maps: maps,
        timecourses,
        singular_values,
        explained_variance_ratio,
    })
}

impl PcaResult {
    /// Rank-`D` reconstruction of subject `b`.
    pub fn reconstruct(&self, b: usize) -> Matrix {
        self.spatial_maps.matmul(&self.timecourses[b])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{generate_synthetic, SyntheticConfig};
    use crate::numerics::SeededRng;

    fn noiseless(seed: u64) -> Dataset {
        let cfg = SyntheticConfig {
            voxels: 80,
            timepoints: 12,
            subjects: 3,
            components: 3,
            noise_mean: 2e-8,
            noise_sd: 0.0,
            ..SyntheticConfig::default()
        };
        let (ds, truth) = generate_synthetic(&mut SeededRng::new(seed), &cfg).unwrap();
        let exact = (0..3).map(|b| truth.a_true.matmul(&truth.s_true[b])).collect();
        let _ = ds;
        Dataset::new(exact).unwrap()
    }

    #[test]
    fn exact_low_rank_is_fully_explained() {
        let pca = group_pca(&noiseless(1), 3).unwrap();
        let total: f64 = pca.explained_variance_ratio.iter().sum();
        assert!((total - 1.0).abs() < 1e-10);
    }

    #[test]
    fn full_rank_reconstructs() {
        let ds = noiseless(2);
        let data = Matrix::hcat(&ds.subjects().iter().collect::<Vec<_>>()).unwrap();
        let full = group_pca(&ds, 36).unwrap();
        let recon: Vec<Matrix> = (0..3).map(|b| full.reconstruct(b)).collect();
        let recon = Matrix::hcat(&recon.iter().collect::<Vec<_>>()).unwrap();
        let mut diff = recon;
        diff.add_scaled(-1.0, &data);
        assert!(diff.frobenius_norm() < 1e-10 * data.frobenius_norm());
    }

    #[test]
    fn orthonormal_sorted_and_signed() {
        let cfg = SyntheticConfig {
            voxels: 50,
            timepoints: 8,
            subjects: 2,
            ..SyntheticConfig::default()
        };
        let (ds, _) = generate_synthetic(&mut SeededRng::new(3), &cfg).unwrap();
        let pca = group_pca(&ds, 5).unwrap();
        let gram = pca.spatial_maps.transpose_matmul(&pca.spatial_maps);
        let mut diff = gram;
        diff.add_scaled(-1.0, &Matrix::identity(5));
        assert!(diff.max_abs() < 1e-10);
        assert!(pca.singular_values.windows(2).all(|w| w[0] >= w[1]));
        assert!(pca.singular_values.iter().all(|&s| s >= 0.0));
        for k in 0..5 {
            let col = pca.spatial_maps.col(k);
            let pivot = col.iter().fold(0.0f64, |m, &x| if x.abs() > m.abs() { x } else { m });
            assert!(pivot > 0.0);
        }
    }

    #[test]
    fn truncation_error_is_discarded_energy() {
        let cfg = SyntheticConfig {
            voxels: 40,
            timepoints: 6,
            subjects: 2,
            ..SyntheticConfig::default()
        };
        let (ds, _) = generate_synthetic(&mut SeededRng::new(4), &cfg).unwrap();
        let pca = group_pca(&ds, 2).unwrap();
        let mut err = 0.0;
        for b in 0..2 {
            let mut d = pca.reconstruct(b);
            d.add_scaled(-1.0, ds.subject(b));
            err += d.frobenius_norm().powi(2);
        }
        let discarded: f64 = pca.singular_values[2..].iter().map(|s| s * s).sum();
        assert!((err - discarded).abs() <= 1e-8 * discarded);
    }

    #[test]
    fn rejects_too_many_components() {
        let ds = noiseless(5);
        assert!(matches!(group_pca(&ds, 37), Err(Error::DimensionMismatch(_))));
        assert!(group_pca(&ds, 0).is_err());
    }
}
