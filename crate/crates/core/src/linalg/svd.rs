//! Thin SVD by one-sided (Hestenes) Jacobi rotations.
//!
//! Wide inputs are decomposed through their transpose so the rotated
//! working set always has at most `min(rows, cols)` columns. Output is
//! deterministic: sweeps visit pairs in a fixed order, singular values are
//! sorted with a stable sort, and each left singular vector is flipped so
//! that its largest-magnitude entry is positive.

use serde::{Deserialize, Serialize};

use super::matrix::{dot, Matrix};
use crate::error::{Error, Result};

const MAX_SWEEPS: usize = 120;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvdResult {
    /// `rows × k` left singular vectors, orthonormal columns.
    pub u: Matrix,
    /// `k` singular values, non-increasing.
    pub s: Vec<f64>,
    /// `k × cols` right singular vectors, orthonormal rows.
    pub vt: Matrix,
}

impl SvdResult {
    /// `u · diag(s) · vt`.
    pub fn reconstruct(&self) -> Matrix {
        self.u
            .scale_columns(&self.s)
            .and_then(|us| us.matmul(&self.vt))
            .expect("svd factors have consistent shapes")
    }

    /// Number of strictly positive singular values.
    pub fn rank(&self) -> usize {
        self.s.iter().filter(|&&v| v > 0.0).count()
    }
}

pub fn svd(m: &Matrix) -> Result<SvdResult> {
    if m.is_empty() {
        return Err(Error::Empty("svd input".into()));
    }
    m.check_finite()?;
    if m.rows() >= m.cols() {
        let (u, s, v) = tall_svd(m);
        finish(u, s, v.transpose())
    } else {
        // m = (mᵀ)ᵀ = (U' Σ V'ᵀ)ᵀ = V' Σ U'ᵀ
        let (u_t, s, v_t) = tall_svd(&m.transpose());
        finish(v_t, s, u_t.transpose())
    }
}

/// Hestenes iteration on a matrix with `rows >= cols`.
///
/// Returns `(U, s, V)` with `U` rows×n, `V` n×n, sorted non-increasing,
/// numerically-zero singular values set to exactly 0 and their left vectors
/// completed to an orthonormal set.
fn tall_svd(m: &Matrix) -> (Matrix, Vec<f64>, Matrix) {
    let (rows, n) = m.shape();
    let mut cols: Vec<Vec<f64>> = (0..n).map(|j| m.column(j)).collect();
    let mut v: Vec<Vec<f64>> = (0..n)
        .map(|j| {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            e
        })
        .collect();

    let tol = f64::EPSILON * rows as f64;
    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in (p + 1)..n {
                let alpha = dot(&cols[p], &cols[p]);
                let beta = dot(&cols[q], &cols[q]);
                let gamma = dot(&cols[p], &cols[q]);
                if alpha == 0.0 || beta == 0.0 || gamma.abs() <= tol * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate(&mut cols, p, q, c, s);
                rotate(&mut v, p, q, c, s);
            }
        }
        if !rotated {
            break;
        }
    }

    let mut sigma: Vec<f64> = cols.iter().map(|c| dot(c, c).sqrt()).collect();
    let mut order: Vec<usize> = (0..n).collect();
    // stable: equal singular values keep column order
    order.sort_by(|&a, &b| sigma[b].total_cmp(&sigma[a]));

    let smax = order.first().map_or(0.0, |&i| sigma[i]);
    let zero_below = smax * f64::EPSILON * rows.max(n) as f64;
    let mut u_cols: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut v_cols: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut s_sorted = Vec::with_capacity(n);
    let mut pending = Vec::new();
    for &j in &order {
        if sigma[j] <= zero_below {
            sigma[j] = 0.0;
            pending.push(u_cols.len());
            u_cols.push(vec![0.0; rows]);
        } else {
            u_cols.push(cols[j].iter().map(|x| x / sigma[j]).collect());
        }
        s_sorted.push(sigma[j]);
        v_cols.push(v[j].clone());
    }
    complete_orthonormal(&mut u_cols, &pending);

    let u = Matrix::from_columns(&u_cols).expect("finite by construction");
    let v = Matrix::from_columns(&v_cols).expect("finite by construction");
    (u, s_sorted, v)
}

fn rotate(cols: &mut [Vec<f64>], p: usize, q: usize, c: f64, s: f64) {
    let (lo, hi) = cols.split_at_mut(q);
    let (cp, cq) = (&mut lo[p], &mut hi[0]);
    for (x, y) in cp.iter_mut().zip(cq.iter_mut()) {
        let (a, b) = (*x, *y);
        *x = c * a - s * b;
        *y = s * a + c * b;
    }
}

/// Fills the columns listed in `pending` with unit vectors orthogonal to
/// every other column, drawing candidates from the standard basis.
fn complete_orthonormal(cols: &mut [Vec<f64>], pending: &[usize]) {
    if pending.is_empty() {
        return;
    }
    let dim = cols[0].len();
    let mut filled: Vec<usize> = (0..cols.len()).filter(|i| !pending.contains(i)).collect();
    let mut candidate = 0;
    for &slot in pending {
        while candidate < dim {
            let mut e = vec![0.0; dim];
            e[candidate] = 1.0;
            candidate += 1;
            // two Gram-Schmidt passes
            for _ in 0..2 {
                for &f in &filled {
                    let proj = dot(&e, &cols[f]);
                    for (x, y) in e.iter_mut().zip(&cols[f]) {
                        *x -= proj * y;
                    }
                }
            }
            let n = dot(&e, &e).sqrt();
            if n > 1e-6 {
                cols[slot] = e.iter().map(|x| x / n).collect();
                filled.push(slot);
                break;
            }
        }
    }
}

fn finish(mut u: Matrix, s: Vec<f64>, mut vt: Matrix) -> Result<SvdResult> {
    for j in 0..u.cols() {
        let mut best = 0.0_f64;
        let mut best_val = 0.0;
        for i in 0..u.rows() {
            let x = u[(i, j)];
            if x.abs() > best {
                best = x.abs();
                best_val = x;
            }
        }
        if best_val < 0.0 {
            for i in 0..u.rows() {
                u[(i, j)] = -u[(i, j)];
            }
            for v in vt.row_mut(j) {
                *v = -*v;
            }
        }
    }
    Ok(SvdResult { u, s, vt })
}
