//! Sparse maps are heavy-tailed: kurtosis and thresholded z-maps of psFA
//! and pFA components.

use psfa::metrics::{compare_maps, empirical_kurtosis, zscore_threshold_map};
use psfa::model::generate_synthetic;
use psfa::{fit, FitOptions, ModelKind, SeededRng, SyntheticConfig};

fn main() -> psfa::Result<()> {
    let (ds, truth) = generate_synthetic(&mut SeededRng::new(6), &SyntheticConfig::default())?;
    for model in [ModelKind::Psfa, ModelKind::Pfa] {
        let opts = FitOptions {
            latent_dim: 6,
            model,
            restarts: 3,
            ..FitOptions::default()
        };
        let (state, _) = fit(&ds, &opts)?;
        let c = compare_maps(&state.mu_a, &truth.a_true)?;
        let maps = c.matching.aligned(&state.mu_a);
        println!("{model:?}");
        for k in 0..maps.cols() {
            let z = zscore_threshold_map(maps.col(k), 1.0)?;
            let pos = z.iter().filter(|&&s| s > 0).count();
            let neg = z.iter().filter(|&&s| s < 0).count();
            println!(
                "  map {k}: kurtosis {:6.2}, |z| > 1 in {pos} positive / {neg} negative voxels",
                empirical_kurtosis(maps.col(k))?
            );
        }
    }
    Ok(())
}
