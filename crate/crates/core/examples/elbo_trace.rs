//! The bound during a fit, term by term, and the effect of the verbatim
//! alpha-rate formula on monotonicity.

use psfa::model::generate_synthetic;
use psfa::{fit, AlphaRate, FitOptions, SeededRng, SyntheticConfig};

fn main() -> psfa::Result<()> {
    let cfg = SyntheticConfig {
        voxels: 300,
        ..SyntheticConfig::default()
    };
    let (ds, _) = generate_synthetic(&mut SeededRng::new(1), &cfg)?;
    let opts = FitOptions {
        latent_dim: 6,
        max_iters: 200,
        rel_tol: 1e-12,
        elbo_every: 20,
        ..FitOptions::default()
    };
    let (_, report) = fit(&ds, &opts)?;

    println!("initial {:>14.4}", report.initial_elbo);
    for (it, e) in report.elbo_iterations.iter().zip(&report.elbo_trace) {
        println!("iter {it:>3} {e:>14.4}");
    }
    println!("\nfinal breakdown:");
    for (name, value) in report.elbo_terms.named() {
        println!("  {name:<15} {value:>16.4}");
    }

    let verbatim = FitOptions {
        alpha_rate: AlphaRate::Verbatim,
        elbo_every: 1,
        ..opts
    };
    let (_, v) = fit(&ds, &verbatim)?;
    println!(
        "\ncorrected alpha rate: {} decreases; verbatim: {} decreases",
        report.monotone_violations, v.monotone_violations
    );
    Ok(())
}
