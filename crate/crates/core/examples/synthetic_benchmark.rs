//! psFA, pFA and group PCA on the synthetic benchmark, scored against the
//! true maps.
//!
//! ```text
//! cargo run --release --example synthetic_benchmark -- [seed] [restarts]
//! ```

use psfa::metrics::compare_maps;
use psfa::model::generate_synthetic;
use psfa::{fit, group_pca, FitOptions, ModelKind, SeededRng, SyntheticConfig};

fn main() -> psfa::Result<()> {
    let mut args = std::env::args().skip(1);
    let seed: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(0);
    let restarts: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(10);

    let (ds, truth) = generate_synthetic(&mut SeededRng::new(seed), &SyntheticConfig::default())?;
    println!(
        "{} voxels, {} subjects x {} timepoints, {} true components",
        ds.voxels(),
        ds.n_subjects(),
        ds.timepoints(0),
        truth.a_true.cols()
    );
    println!("{:<6} {:>10} {:>8} {:>14}", "model", "avg |corr|", "Amari", "final ELBO");

    for model in [ModelKind::Psfa, ModelKind::Pfa] {
        let opts = FitOptions {
            latent_dim: 6,
            model,
            max_iters: 500,
            restarts,
            seed: 1000 * seed,
            ..FitOptions::default()
        };
        let (state, report) = fit(&ds, &opts)?;
        let c = compare_maps(&state.mu_a, &truth.a_true)?;
        println!(
            "{:<6} {:>10.3} {:>8.3} {:>14.2}",
            format!("{model:?}"),
            c.avg_abs_correlation,
            c.amari_index,
            report.final_elbo()
        );
    }

    let pca = group_pca(&ds, 3)?;
    let c = compare_maps(&pca.spatial_maps, &truth.a_true)?;
    println!("{:<6} {:>10.3} {:>8.3} {:>14}", "PCA", c.avg_abs_correlation, c.amari_index, "-");
    Ok(())
}
