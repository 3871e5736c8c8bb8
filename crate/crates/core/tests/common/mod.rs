//! Helpers shared by the integration tests: random variational states and a
//! direct-summation ELBO used as an oracle for the library's implementation.

#![allow(dead_code)]

use psfa::model::SubjectMeans;
use psfa::numerics::{digamma, lgamma};
use psfa::{Dataset, Hyperparameters, Matrix, SeededRng, VariationalState};

const LN_2PI: f64 = 1.8378770664093453;

pub fn random_matrix(rng: &mut SeededRng, rows: usize, cols: usize) -> Matrix {
    Matrix::from_col_major(rows, cols, rng.draw_normal(0.0, 1.0, rows * cols)).unwrap()
}

/// `L Lᵀ + 0.1 I` with a random `L`.
pub fn random_spd(rng: &mut SeededRng, n: usize) -> Matrix {
    let l = random_matrix(rng, n, n);
    let mut m = l.matmul_transpose(&l);
    for i in 0..n {
        m[(i, i)] += 0.1;
    }
    m.symmetrize();
    m
}

fn positive(rng: &mut SeededRng) -> f64 {
    0.2 + 2.0 * rng.uniform()
}

pub fn random_dataset(rng: &mut SeededRng, v: usize, t: &[usize]) -> Dataset {
    Dataset::new(t.iter().map(|&ti| random_matrix(rng, v, ti)).collect()).unwrap()
}

/// A valid but otherwise arbitrary state: every moment drawn at random.
pub fn random_state(rng: &mut SeededRng, ds: &Dataset, d: usize, means: bool) -> VariationalState {
    let (v, b) = (ds.voxels(), ds.n_subjects());
    VariationalState {
        mu_a: random_matrix(rng, v, d),
        sigma_a: (0..v).map(|_| random_spd(rng, d)).collect(),
        mu_s: (0..b).map(|i| random_matrix(rng, d, ds.timepoints(i))).collect(),
        sigma_s: (0..b).map(|_| random_spd(rng, d)).collect(),
        means: means.then(|| SubjectMeans {
            mean: random_matrix(rng, v, b),
            variance: Matrix::from_fn(v, b, |_, _| positive(rng)),
        }),
        alpha_shape: positive(rng),
        alpha_rate: Matrix::from_fn(v, d, |_, _| positive(rng)),
        gamma_shape: positive(rng),
        gamma_rate: (0..d).map(|_| positive(rng)).collect(),
        tau_shape: (0..b).map(|_| positive(rng)).collect(),
        tau_rate: Matrix::from_fn(v, b, |_, _| positive(rng)),
    }
}

pub fn random_hyper(rng: &mut SeededRng) -> Hyperparameters {
    Hyperparameters {
        a_alpha: positive(rng),
        b_alpha: positive(rng),
        a_gamma: positive(rng),
        b_gamma: positive(rng),
        a_tau: positive(rng),
        b_tau: positive(rng),
        beta: positive(rng),
    }
}

/// Determinant by Gaussian elimination with partial pivoting.
pub fn det(m: &Matrix) -> f64 {
    let n = m.rows();
    let mut a: Vec<Vec<f64>> = (0..n).map(|i| m.row(i)).collect();
    let mut det = 1.0;
    for k in 0..n {
        let p = (k..n).max_by(|&i, &j| a[i][k].abs().total_cmp(&a[j][k].abs())).unwrap();
        if p != k {
            a.swap(p, k);
            det = -det;
        }
        det *= a[k][k];
        for i in k + 1..n {
            let f = a[i][k] / a[k][k];
            for j in k..n {
                a[i][j] -= f * a[k][j];
            }
        }
    }
    det
}

fn gauss_entropy(cov: &Matrix) -> f64 {
    let n = cov.rows() as f64;
    0.5 * n * (1.0 + LN_2PI) + 0.5 * det(cov).ln()
}

fn gamma_entropy(a: f64, b: f64) -> f64 {
    a - b.ln() + lgamma(a).unwrap() + (1.0 - a) * digamma(a).unwrap()
}

/// `E[log Gamma(x | a0, b0)]` for `x ~ Gamma(a, b)`.
fn gamma_prior(a0: f64, b0: f64, a: f64, b: f64) -> f64 {
    let mean = a / b;
    let mean_log = digamma(a).unwrap() - b.ln();
    a0 * b0.ln() - lgamma(a0).unwrap() + (a0 - 1.0) * mean_log - b0 * mean
}

/// `E[log N(x | 0, 1/λ)]` with `λ ~ Gamma(a, b)` and `E[x²] = m2`.
fn normal_prior(a: f64, b: f64, m2: f64) -> f64 {
    -0.5 * LN_2PI + 0.5 * (digamma(a).unwrap() - b.ln()) - 0.5 * (a / b) * m2
}

/// The bound by direct summation over voxels, timepoints and subjects.
///
/// `E[(a·s)²]` is expanded entry by entry as
/// `Σ_ij (ā_i ā_j + Σ^A_ij)(s̄_i s̄_j + Σ^S_ij)`, never through traces.
pub fn naive_elbo(state: &VariationalState, ds: &Dataset, h: &Hyperparameters) -> f64 {
    let (nv, d, nb) = (state.voxels(), state.latent_dim(), ds.n_subjects());
    let mut total = 0.0;

    for b in 0..nb {
        let x = ds.subject(b);
        let (sa, sb) = (&state.sigma_s[b], &state.mu_s[b]);
        for v in 0..nv {
            let a_tau = state.tau_shape[b];
            let b_tau = state.tau_rate[(v, b)];
            let tau = a_tau / b_tau;
            let log_tau = digamma(a_tau).unwrap() - b_tau.ln();
            let (mu, mu2) = match &state.means {
                Some(m) => {
                    let mean = m.mean[(v, b)];
                    (mean, mean * mean + m.variance[(v, b)])
                }
                None => (0.0, 0.0),
            };
            for t in 0..ds.timepoints(b) {
                let mut as_mean = 0.0;
                let mut as_sq = 0.0;
                for i in 0..d {
                    as_mean += state.mu_a[(v, i)] * sb[(i, t)];
                    for j in 0..d {
                        let aa = state.mu_a[(v, i)] * state.mu_a[(v, j)] + state.sigma_a[v][(i, j)];
                        let ss = sb[(i, t)] * sb[(j, t)] + sa[(i, j)];
                        as_sq += aa * ss;
                    }
                }
                let xv = x[(v, t)];
                let resid =
                    xv * xv + as_sq + mu2 - 2.0 * xv * as_mean - 2.0 * xv * mu + 2.0 * as_mean * mu;
                total += 0.5 * log_tau - 0.5 * LN_2PI - 0.5 * tau * resid;
            }
            total += gamma_prior(h.a_tau, h.b_tau, a_tau, b_tau);
            total += gamma_entropy(a_tau, b_tau);
        }
    }

    for v in 0..nv {
        for k in 0..d {
            let m2 = state.mu_a[(v, k)].powi(2) + state.sigma_a[v][(k, k)];
            let (a, b) = (state.alpha_shape, state.alpha_rate[(v, k)]);
            total += normal_prior(a, b, m2);
            total += gamma_prior(h.a_alpha, h.b_alpha, a, b);
            total += gamma_entropy(a, b);
        }
        total += gauss_entropy(&state.sigma_a[v]);
    }

    for b in 0..nb {
        for t in 0..ds.timepoints(b) {
            for k in 0..d {
                let m2 = state.mu_s[b][(k, t)].powi(2) + state.sigma_s[b][(k, k)];
                total += normal_prior(state.gamma_shape, state.gamma_rate[k], m2);
            }
            total += gauss_entropy(&state.sigma_s[b]);
        }
    }
    for k in 0..d {
        total += gamma_prior(h.a_gamma, h.b_gamma, state.gamma_shape, state.gamma_rate[k]);
        total += gamma_entropy(state.gamma_shape, state.gamma_rate[k]);
    }

    if let Some(m) = &state.means {
        for b in 0..nb {
            for v in 0..nv {
                let var = m.variance[(v, b)];
                let m2 = m.mean[(v, b)].powi(2) + var;
                total += -0.5 * LN_2PI + 0.5 * h.beta.ln() - 0.5 * h.beta * m2;
                total += 0.5 * (1.0 + LN_2PI) + 0.5 * var.ln();
            }
        }
    }
    total
}

/// `Σ_t ⟨s_t s_tᵀ⟩` summed one timepoint at a time.
pub fn naive_sst(state: &VariationalState, b: usize) -> Matrix {
    let d = state.latent_dim();
    let mut out = Matrix::zeros(d, d);
    for t in 0..state.mu_s[b].cols() {
        for i in 0..d {
            for j in 0..d {
                out[(i, j)] += state.mu_s[b][(i, t)] * state.mu_s[b][(j, t)] + state.sigma_s[b][(i, j)];
            }
        }
    }
    out
}

/// `Σ_v ⟨τ_v⟩ ⟨a_v a_vᵀ⟩` summed one voxel at a time.
pub fn naive_at_tau_a(state: &VariationalState, b: usize) -> Matrix {
    let d = state.latent_dim();
    let mut out = Matrix::zeros(d, d);
    for v in 0..state.voxels() {
        let tau = state.tau_shape[b] / state.tau_rate[(v, b)];
        for i in 0..d {
            for j in 0..d {
                out[(i, j)] +=
                    tau * (state.mu_a[(v, i)] * state.mu_a[(v, j)] + state.sigma_a[v][(i, j)]);
            }
        }
    }
    out
}

pub fn max_rel_diff(a: &Matrix, b: &Matrix) -> f64 {
    let scale = a.max_abs().max(b.max_abs()).max(1e-300);
    let mut diff = a.clone();
    diff.add_scaled(-1.0, b);
    diff.max_abs() / scale
}

/// Update blocks in iteration order.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Block {
    Maps,
    TimeCourses,
    Means,
    Alpha,
    Gamma,
    Noise,
}

pub const BLOCKS: [Block; 6] = [
    Block::Maps,
    Block::TimeCourses,
    Block::Means,
    Block::Alpha,
    Block::Gamma,
    Block::Noise,
];

pub fn apply_block(
    block: Block,
    state: &mut VariationalState,
    ds: &Dataset,
    h: &Hyperparameters,
    alpha: psfa::AlphaRate,
    mean_cov: psfa::MeanCovariance,
) {
    use psfa::engine::*;
    match block {
        Block::Maps => update_spatial_maps(state, ds).unwrap(),
        Block::TimeCourses => update_time_courses(state, ds).unwrap(),
        Block::Means => update_subject_means(state, ds, h, mean_cov).unwrap(),
        Block::Alpha => update_alpha(state, h, alpha),
        Block::Gamma => update_gamma(state, h),
        Block::Noise => update_noise(state, ds, h).unwrap(),
    }
}
