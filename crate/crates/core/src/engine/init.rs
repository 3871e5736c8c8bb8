use super::FitOptions;
use crate::model::{Dataset, SubjectMeans, VariationalState};
use crate::numerics::{pd_factorize, Matrix, SeededRng};
use crate::{Error, Result};

/// Redraws allowed when the back-reconstruction Gram matrix is singular.
pub const MAX_INIT_ATTEMPTS: usize = 5;

/// Reciprocal condition (squared pivot ratio) below which a Gram matrix is
/// treated as singular.
const MIN_RCOND: f64 = 1e-14;

/// Random start: `⟨A⟩` from `N(0, 1)`, time courses back-reconstructed by
/// least squares, covariances at identity and every Gamma factor at its prior.
///
/// With `D ≤ V` the time courses are `(AᵀA)⁻¹AᵀX^(b)`. With more components
/// than voxels that Gram matrix is always singular, and the minimum-norm
/// solution `Aᵀ(AAᵀ)⁻¹X^(b)` is used instead.
pub fn initialize(
    ds: &Dataset,
    opts: &FitOptions,
    rng: &mut SeededRng,
) -> Result<VariationalState> {
    let (v, d) = (ds.voxels(), opts.latent_dim);
    let mut state = VariationalState::zeros(ds, d, opts.model_mean, &opts.hyper);

    for _ in 0..MAX_INIT_ATTEMPTS {
        let a = Matrix::from_col_major(v, d, rng.draw_normal(0.0, 1.0, v * d))?;
        let Some(sources) = back_reconstruct(&a, ds)? else {
            continue;
        };
        state.mu_a = a;
        state.mu_s = sources;
        state.sigma_a = vec![Matrix::identity(d); v];
        state.sigma_s = vec![Matrix::identity(d); ds.n_subjects()];
        if let Some(means) = state.means.as_mut() {
            *means = SubjectMeans {
                mean: Matrix::zeros(v, ds.n_subjects()),
                variance: Matrix::from_fn(v, ds.n_subjects(), |_, _| 1.0),
            };
        }
        return Ok(state);
    }
    Err(Error::SingularInitialization(MAX_INIT_ATTEMPTS))
}

/// Least-squares time courses for fixed maps, or `None` if the Gram matrix is
/// numerically singular.
fn back_reconstruct(a: &Matrix, ds: &Dataset) -> Result<Option<Vec<Matrix>>> {
    let tall = a.rows() >= a.cols();
    let gram = if tall {
        a.transpose_matmul(a)
    } else {
        a.matmul_transpose(a)
    };
    let Some(factor) = well_conditioned(&gram) else {
        return Ok(None);
    };
    ds.subjects()
        .iter()
        .map(|x| {
            if tall {
                factor.solve(&a.transpose_matmul(x))
            } else {
                Ok(a.transpose_matmul(&factor.solve(x)?))
            }
        })
        .collect::<Result<Vec<_>>>()
        .map(Some)
}

fn well_conditioned(gram: &Matrix) -> Option<crate::numerics::Cholesky> {
    let f = pd_factorize(gram).ok()?;
    let diag = f.factor().diagonal();
    let max = diag.iter().cloned().fold(0.0, f64::max);
    let min = diag.iter().cloned().fold(f64::INFINITY, f64::min);
    ((min / max).powi(2) > MIN_RCOND).then_some(f)
}
