//! Heteroscedastic noise: the posterior noise variance per voxel and subject
//! against the variances the data was drawn with.

use psfa::metrics::{mean_log_precision_map, pearson, spearman};
use psfa::model::generate_synthetic;
use psfa::{fit, FitOptions, SeededRng, SyntheticConfig};

fn main() -> psfa::Result<()> {
    let (ds, truth) = generate_synthetic(&mut SeededRng::new(3), &SyntheticConfig::default())?;
    let opts = FitOptions {
        latent_dim: 6,
        restarts: 3,
        ..FitOptions::default()
    };
    let (state, _) = fit(&ds, &opts)?;

    let est = state.noise_variance();
    let r = pearson(truth.noise_variance.as_slice(), est.as_slice());
    println!("pearson(true variance, 1/<tau>) = {r:.3}");

    // voxels with less noise should carry more precision
    let mean_true: Vec<f64> = (0..ds.voxels())
        .map(|v| truth.noise_variance.row(v).iter().sum::<f64>() / ds.n_subjects() as f64)
        .collect();
    let log_prec = mean_log_precision_map(&state);
    println!(
        "spearman(mean true variance, mean <log tau>) = {:.3}",
        spearman(&mean_true, &log_prec)
    );
    Ok(())
}
