//! Automatic relevance determination: fit twice as many components as the
//! data contains and watch the surplus ones switch off.

use psfa::engine::{expected_sst, EFFECTIVE_COMPONENT_THRESHOLD};
use psfa::model::generate_synthetic;
use psfa::{fit, FitOptions, SeededRng, SyntheticConfig, VariationalState};

/// Share of the total signal power carried by each component.
fn power_shares(state: &VariationalState) -> Vec<f64> {
    let power: Vec<f64> = (0..state.latent_dim())
        .map(|d| {
            let maps: f64 = (0..state.voxels()).map(|v| state.second_moment_a(v, d)).sum();
            let courses: f64 = (0..state.n_subjects()).map(|b| expected_sst(state, b)[(d, d)]).sum();
            maps * courses
        })
        .collect();
    let total: f64 = power.iter().sum();
    power.iter().map(|p| p / total).collect()
}

fn main() -> psfa::Result<()> {
    let seed: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(0);
    let (ds, _) = generate_synthetic(&mut SeededRng::new(seed), &SyntheticConfig::default())?;
    let opts = FitOptions {
        latent_dim: 6,
        restarts: 10,
        seed,
        ..FitOptions::default()
    };
    let (state, report) = fit(&ds, &opts)?;

    println!("component  <gamma>      power share");
    for (d, share) in power_shares(&state).iter().enumerate() {
        println!("{d:>9}  {:>10.3e}  {share:>11.4}", state.expected_gamma(d));
    }
    println!(
        "{} of {} components above the {}% threshold (3 in the data)",
        report.effective_components,
        opts.latent_dim,
        EFFECTIVE_COMPONENT_THRESHOLD * 100.0
    );
    Ok(())
}
