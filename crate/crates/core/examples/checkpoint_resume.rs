//! Halting a fit part way, saving the checkpoint to disk, and resuming it.
//! The resumed run ends in exactly the same state as an uninterrupted one.

use psfa::engine::{fit_resumable, FitControl, FitOutcome};
use psfa::io::{read_checkpoint, write_checkpoint};
use psfa::model::generate_synthetic;
use psfa::{fit, FitOptions, SeededRng, SyntheticConfig};

fn main() -> psfa::Result<()> {
    let cfg = SyntheticConfig {
        voxels: 200,
        ..SyntheticConfig::default()
    };
    let (ds, _) = generate_synthetic(&mut SeededRng::new(2), &cfg)?;
    let opts = FitOptions {
        latent_dim: 5,
        max_iters: 80,
        restarts: 3,
        rel_tol: 1e-12,
        ..FitOptions::default()
    };
    let (full_state, full) = fit(&ds, &opts)?;

    let path = std::env::temp_dir().join("psfa_example.psfc");
    let halt = FitControl {
        halt_after: Some(130),
        ..FitControl::default()
    };
    let FitOutcome::Halted(cp) = fit_resumable(&ds, &opts, halt)? else {
        unreachable!("the fit runs 240 iterations in total");
    };
    println!("halted in restart {} at iteration {}", cp.restart, cp.iteration);
    write_checkpoint(&cp, &path)?;

    let resume = FitControl {
        resume: Some(read_checkpoint(&path)?),
        ..FitControl::default()
    };
    let FitOutcome::Completed { state, report } = fit_resumable(&ds, &opts, resume)? else {
        unreachable!("no halt requested");
    };
    println!(
        "uninterrupted ELBO {}, resumed ELBO {}, identical state: {}",
        full.final_elbo(),
        report.final_elbo(),
        *state == full_state
    );
    Ok(())
}
