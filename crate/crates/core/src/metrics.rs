//! Evaluation of estimated decompositions against reference maps.
//!
//! All functions are pure. Correlations use population (`1/V`) moments.

use serde::{Deserialize, Serialize};

use crate::model::VariationalState;
use crate::numerics::{digamma, Matrix};
use crate::{Error, Result};

/// Condition number of the reference maps above which the Amari index is
/// refused.
pub const MAX_REFERENCE_CONDITION: f64 = 1e10;

/// Optimal one-to-one pairing of estimated and reference components.
///
/// Entry `i` pairs estimated column `est_index[i]` with reference column
/// `ref_index[i]`. Pairs are ordered by reference column.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComponentMatch {
    pub est_index: Vec<usize>,
    pub ref_index: Vec<usize>,
    /// Sign that makes each matched correlation non-negative.
    pub signs: Vec<f64>,
    /// `|corr|` of each pair.
    pub correlations: Vec<f64>,
}

impl ComponentMatch {
    pub fn len(&self) -> usize {
        self.est_index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.est_index.is_empty()
    }

    /// Estimated columns reordered to follow the reference and sign-corrected.
    pub fn aligned(&self, est: &Matrix) -> Matrix {
        let mut out = est.select_columns(&self.est_index);
        for (k, &s) in self.signs.iter().enumerate() {
            for x in out.col_mut(k) {
                *x *= s;
            }
        }
        out
    }
}

pub fn pearson(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len(), "pearson: length mismatch");
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (da, db) = (a - mx, b - my);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    if sxx == 0.0 || syy == 0.0 {
        return 0.0;
    }
    sxy / (sxx * syy).sqrt()
}

/// Average ranks, ties sharing the mean rank.
fn ranks(x: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut out = vec![0.0; x.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && x[idx[j + 1]] == x[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            out[k] = r;
        }
        i = j + 1;
    }
    out
}

pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    pearson(&ranks(x), &ranks(y))
}

/// `D_e × D_r` Pearson correlations between columns.
pub fn correlation_matrix(est: &Matrix, reference: &Matrix) -> Result<Matrix> {
    if est.rows() != reference.rows() {
        return Err(Error::DimensionMismatch(format!(
            "estimated maps are {}x{}, reference maps are {}x{}",
            est.rows(),
            est.cols(),
            reference.rows(),
            reference.cols()
        )));
    }
    Ok(Matrix::from_fn(est.cols(), reference.cols(), |i, j| {
        pearson(est.col(i), reference.col(j))
    }))
}

/// Pairs components to maximize the summed absolute correlation over
/// `min(D_e, D_r)` pairs, using an exact assignment solver.
pub fn match_components(est: &Matrix, reference: &Matrix) -> Result<ComponentMatch> {
    if est.cols() == 0 || reference.cols() == 0 {
        return Err(Error::DimensionMismatch(format!(
            "need at least one component on each side, got {} and {}",
            est.cols(),
            reference.cols()
        )));
    }
    let corr = correlation_matrix(est, reference)?;
    let (ne, nr) = corr.shape();
    // solve with rows = the smaller side
    let transpose = ne > nr;
    let (rows, cols) = if transpose { (nr, ne) } else { (ne, nr) };
    let cost = Matrix::from_fn(rows, cols, |i, j| {
        let c = if transpose { corr[(j, i)] } else { corr[(i, j)] };
        -c.abs()
    });
    let assign = hungarian(&cost);

    let mut pairs: Vec<(usize, usize)> = assign
        .iter()
        .enumerate()
        .map(|(i, &j)| if transpose { (j, i) } else { (i, j) })
        .collect();
    pairs.sort_by_key(|&(_, r)| r);
    let mut m = ComponentMatch {
        est_index: Vec::with_capacity(pairs.len()),
        ref_index: Vec::with_capacity(pairs.len()),
        signs: Vec::with_capacity(pairs.len()),
        correlations: Vec::with_capacity(pairs.len()),
    };
    for (e, r) in pairs {
        let c = corr[(e, r)];
        m.est_index.push(e);
        m.ref_index.push(r);
        m.signs.push(if c < 0.0 { -1.0 } else { 1.0 });
        m.correlations.push(c.abs().min(1.0));
    }
    Ok(m)
}

/// Minimum-cost assignment of every row of an `n × m` (`n ≤ m`) cost matrix
/// to a distinct column (shortest augmenting paths with potentials).
fn hungarian(cost: &Matrix) -> Vec<usize> {
    let (n, m) = cost.shape();
    debug_assert!(n <= m);
    let inf = f64::INFINITY;
    // 1-based with a virtual column 0
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; m + 1];
    let mut owner = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        owner[0] = i;
        let mut j0 = 0;
        let mut minv = vec![inf; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = inf;
            let mut j1 = 0;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
                let cur = cost[(i0 - 1, j - 1)] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut out = vec![0; n];
    for j in 1..=m {
        if owner[j] != 0 {
            out[owner[j] - 1] = j - 1;
        }
    }
    out
}

/// Mean `|corr|` over matched pairs.
pub fn avg_abs_correlation(m: &ComponentMatch) -> f64 {
    assert!(!m.is_empty(), "empty component match");
    m.correlations.iter().map(|c| c.abs()).sum::<f64>() / m.len() as f64
}

/// Amari index of `P = pinv(ref)·est`:
///
/// ```text
/// d(P) = 1/(2D) [ Σ_i (Σ_j |p_ij| / max_j |p_ij| − 1) + Σ_j (Σ_i |p_ij| / max_i |p_ij| − 1) ]
/// ```
///
/// Zero iff `P` is a scaled permutation, at most `D − 1`.
pub fn amari_index(est: &Matrix, reference: &Matrix) -> Result<f64> {
    if est.shape() != reference.shape() {
        return Err(Error::DimensionMismatch(format!(
            "estimated maps are {}x{}, reference maps are {}x{}",
            est.rows(),
            est.cols(),
            reference.rows(),
            reference.cols()
        )));
    }
    let svd = nalgebra::linalg::SVD::new(reference.to_nalgebra(), true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    let cond = smax / smin;
    if !(cond <= MAX_REFERENCE_CONDITION) {
        return Err(Error::SingularReference(cond));
    }
    let pinv = svd
        .pseudo_inverse(0.0)
        .map_err(|e| Error::NonFinite(format!("pseudo-inverse: {e}")))?;
    let p = Matrix::from_nalgebra(&pinv).matmul(est);
    Ok(amari_of(&p))
}

/// The index of a square mixing matrix.
pub fn amari_of(p: &Matrix) -> f64 {
    let d = p.rows();
    assert_eq!(d, p.cols(), "Amari index needs a square matrix");
    let mut total = 0.0;
    for i in 0..d {
        let row: Vec<f64> = (0..d).map(|j| p[(i, j)].abs()).collect();
        total += row_term(&row);
    }
    for j in 0..d {
        total += row_term(&p.col(j).iter().map(|x| x.abs()).collect::<Vec<_>>());
    }
    total / (2.0 * d as f64)
}

fn row_term(x: &[f64]) -> f64 {
    let max = x.iter().cloned().fold(0.0, f64::max);
    if max == 0.0 {
        return x.len() as f64 - 1.0;
    }
    x.iter().sum::<f64>() / max - 1.0
}

/// Matching, average correlation and Amari index in one go.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MapComparison {
    pub matching: ComponentMatch,
    pub avg_abs_correlation: f64,
    /// Computed on the estimated maps truncated to the matched columns.
    pub amari_index: f64,
}

/// Matches `est` to `reference`, then scores the matched, sign-corrected
/// estimated columns. Needs at least as many estimated as reference maps.
pub fn compare_maps(est: &Matrix, reference: &Matrix) -> Result<MapComparison> {
    if est.rows() != reference.rows() || est.cols() < reference.cols() {
        return Err(Error::DimensionMismatch(format!(
            "estimated maps are {}x{}, reference maps are {}x{}",
            est.rows(),
            est.cols(),
            reference.rows(),
            reference.cols()
        )));
    }
    let matching = match_components(est, reference)?;
    let amari = amari_index(&matching.aligned(est), reference)?;
    Ok(MapComparison {
        avg_abs_correlation: avg_abs_correlation(&matching),
        amari_index: amari,
        matching,
    })
}

/// `m₄ / m₂²` with central moments; 3 for a Gaussian.
pub fn empirical_kurtosis(values: &[f64]) -> Result<f64> {
    if values.len() < 4 {
        return Err(Error::InvalidParameter(format!(
            "kurtosis needs at least 4 values, got {}",
            values.len()
        )));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let (mut m2, mut m4) = (0.0, 0.0);
    for x in values {
        let d2 = (x - mean) * (x - mean);
        m2 += d2;
        m4 += d2 * d2;
    }
    m2 /= n;
    m4 /= n;
    if m2 == 0.0 {
        return Err(Error::ZeroVariance("kurtosis of a constant sequence".into()));
    }
    Ok(m4 / (m2 * m2))
}

/// Z-scores a map and keeps its sign where `|z| > threshold`.
pub fn zscore_threshold_map(map: &[f64], threshold: f64) -> Result<Vec<i8>> {
    let n = map.len() as f64;
    let mean = map.iter().sum::<f64>() / n;
    let var = map.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    if !(var > 0.0) {
        return Err(Error::ZeroVariance("map to be z-scored".into()));
    }
    let sd = var.sqrt();
    Ok(map
        .iter()
        .map(|x| {
            let z = (x - mean) / sd;
            if z > threshold {
                1
            } else if z < -threshold {
                -1
            } else {
                0
            }
        })
        .collect())
}

/// `⟨log τ_v⟩` averaged over subjects.
pub fn mean_log_precision_map(state: &VariationalState) -> Vec<f64> {
    let (nv, nb) = (state.voxels(), state.n_subjects());
    let psi: Vec<f64> = state
        .tau_shape
        .iter()
        .map(|&a| digamma(a).expect("Gamma shape is positive"))
        .collect();
    (0..nv)
        .map(|v| {
            (0..nb)
                .map(|b| psi[b] - state.tau_rate[(v, b)].ln())
                .sum::<f64>()
                / nb as f64
        })
        .collect()
}
