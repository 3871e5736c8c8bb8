use super::Matrix;
use crate::{Error, Result};

/// Relative asymmetry accepted by [`pd_factorize`].
const SYMMETRY_TOL: f64 = 1e-12;
/// Diagonal jitter, as a multiple of the mean diagonal, tried once on failure.
const JITTER: f64 = 1e-10;

/// Lower-triangular Cholesky factor `L` with `M = L Lᵀ`.
#[derive(Clone, Debug)]
pub struct Cholesky {
    dim: usize,
    // column-major n×n, upper triangle zero
    lower: Vec<f64>,
    log_det: f64,
}

/// Factorizes a symmetric positive definite matrix.
///
/// On a non-positive pivot the factorization is retried once with
/// `1e-10 * mean(diag)` added to the diagonal; a second failure is an error.
pub fn pd_factorize(m: &Matrix) -> Result<Cholesky> {
    if !m.is_square() {
        return Err(Error::DimensionMismatch(format!(
            "cannot factorize a {}x{} matrix",
            m.rows(),
            m.cols()
        )));
    }
    let asym = m.asymmetry();
    if asym > SYMMETRY_TOL * m.max_abs().max(f64::MIN_POSITIVE) {
        return Err(Error::NotSymmetric(asym));
    }
    match factor(m, 0.0) {
        Ok(c) => Ok(c),
        Err(_) => {
            let n = m.rows().max(1) as f64;
            let jitter = JITTER * m.trace() / n;
            factor(m, jitter.max(0.0))
        }
    }
}

/// Solves `M X = rhs` given the factor of `M`.
pub fn pd_solve(f: &Cholesky, rhs: &Matrix) -> Result<Matrix> {
    f.solve(rhs)
}

fn factor(m: &Matrix, jitter: f64) -> Result<Cholesky> {
    let n = m.rows();
    let mut l = vec![0.0; n * n];
    let mut log_det = 0.0;
    for j in 0..n {
        let mut d = m[(j, j)] + jitter;
        for k in 0..j {
            let ljk = l[k * n + j];
            d -= ljk * ljk;
        }
        if !(d > 0.0) || !d.is_finite() {
            return Err(Error::NotPositiveDefinite { index: j, pivot: d });
        }
        let djj = d.sqrt();
        l[j * n + j] = djj;
        log_det += 2.0 * djj.ln();
        for i in (j + 1)..n {
            let mut s = m[(i, j)];
            for k in 0..j {
                s -= l[k * n + i] * l[k * n + j];
            }
            l[j * n + i] = s / djj;
        }
    }
    Ok(Cholesky {
        dim: n,
        lower: l,
        log_det,
    })
}

impl Cholesky {
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `log |M|`.
    pub fn log_det(&self) -> f64 {
        self.log_det
    }

    /// The factor `L` as a matrix.
    pub fn factor(&self) -> Matrix {
        Matrix::from_col_major(self.dim, self.dim, self.lower.clone())
            .expect("factor entries are finite")
    }

    /// `L Lᵀ`.
    pub fn reconstruct(&self) -> Matrix {
        let l = self.factor();
        l.matmul_transpose(&l)
    }

    /// Solves `M x = b` in place.
    pub fn solve_in_place(&self, b: &mut [f64]) {
        let n = self.dim;
        assert_eq!(b.len(), n, "solve_in_place dimension");
        let l = &self.lower;
        // L y = b
        for j in 0..n {
            let yj = b[j] / l[j * n + j];
            b[j] = yj;
            for i in (j + 1)..n {
                b[i] -= l[j * n + i] * yj;
            }
        }
        // Lᵀ x = y
        for j in (0..n).rev() {
            let mut s = b[j];
            for i in (j + 1)..n {
                s -= l[j * n + i] * b[i];
            }
            b[j] = s / l[j * n + j];
        }
    }

    pub fn solve(&self, rhs: &Matrix) -> Result<Matrix> {
        if rhs.rows() != self.dim {
            return Err(Error::DimensionMismatch(format!(
                "factor of dimension {} cannot solve a system with {} rows",
                self.dim,
                rhs.rows()
            )));
        }
        let mut out = rhs.clone();
        for j in 0..out.cols() {
            self.solve_in_place(out.col_mut(j));
        }
        Ok(out)
    }

    /// `M⁻¹`, symmetrized.
    pub fn inverse(&self) -> Matrix {
        let mut inv = Matrix::identity(self.dim);
        for j in 0..self.dim {
            self.solve_in_place(inv.col_mut(j));
        }
        inv.symmetrize();
        inv
    }
}
