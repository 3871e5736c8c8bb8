//! Scoring maps produced by another tool. The "external" maps here are a
//! noisy copy of the truth written as CSV, the way an ICA package would
//! export them.

use psfa::io::{read_matrix, write_matrix_csv};
use psfa::metrics::compare_maps;
use psfa::model::generate_synthetic;
use psfa::{Matrix, SeededRng, SyntheticConfig};

fn main() -> psfa::Result<()> {
    let mut rng = SeededRng::new(11);
    let (_, truth) = generate_synthetic(&mut rng, &SyntheticConfig::default())?;

    // three maps in shuffled order, one sign-flipped, plus two junk maps
    let a = &truth.a_true;
    let external = Matrix::from_fn(a.rows(), 5, |v, k| match k {
        0 => a[(v, 2)] + 0.3 * rng.standard_normal(),
        1 => rng.standard_normal(),
        2 => -a[(v, 0)] + 0.3 * rng.standard_normal(),
        3 => a[(v, 1)] + 0.3 * rng.standard_normal(),
        _ => rng.standard_normal(),
    });

    let dir = std::env::temp_dir().join("psfa_external_maps");
    std::fs::create_dir_all(&dir)?;
    let path = dir.join("melodic_like.csv");
    write_matrix_csv(&external, &path)?;
    let loaded = read_matrix(&path)?;

    let c = compare_maps(&loaded, a)?;
    for i in 0..c.matching.len() {
        println!(
            "reference {} <- external {} (sign {:+}, |corr| {:.3})",
            c.matching.ref_index[i], c.matching.est_index[i], c.matching.signs[i], c.matching.correlations[i]
        );
    }
    println!("avg |corr| {:.3}, Amari {:.3}", c.avg_abs_correlation, c.amari_index);
    Ok(())
}
