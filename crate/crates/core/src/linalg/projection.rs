use super::matrix::Matrix;
use crate::error::{Error, Result};

/// Tolerance on `basisᵀ·basis − I` accepted by [`null_projector`].
pub const ORTHONORMAL_TOL: f64 = 1e-8;

/// Smallest `k` whose leading singular values carry at least `epsilon` of
/// the squared Frobenius energy.
///
/// Implemented through suffix sums (`tail_k <= (1 - epsilon) · total`), which
/// is the same criterion but keeps tiny trailing values from being absorbed
/// by rounding: with `epsilon = 1` the result is exactly the number of
/// nonzero values.
pub fn rank_cutoff(s: &[f64], epsilon: f64) -> Result<usize> {
    if !(epsilon > 0.0 && epsilon <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "energy threshold {epsilon} outside (0, 1]"
        )));
    }
    if s.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::InvalidArgument(
            "singular values must be finite and non-negative".into(),
        ));
    }
    if s.windows(2).any(|w| w[1] > w[0]) {
        return Err(Error::InvalidArgument(
            "singular values must be non-increasing".into(),
        ));
    }
    if s.iter().all(|&v| v == 0.0) {
        return Err(Error::Empty("all singular values are zero; no subspace".into()));
    }

    let mut tail = vec![0.0; s.len() + 1];
    for i in (0..s.len()).rev() {
        tail[i] = tail[i + 1] + s[i] * s[i];
    }
    let allowed = (1.0 - epsilon) * tail[0];
    // tail[len] == 0 always satisfies, so this terminates
    let k = (1..=s.len()).find(|&k| tail[k] <= allowed).unwrap_or(s.len());
    Ok(k)
}

/// `max |basisᵀ·basis − I|`.
pub fn orthonormality_error(basis: &Matrix) -> f64 {
    let gram = basis.t_matmul(basis).expect("square gram");
    let n = gram.rows();
    let mut worst = 0.0_f64;
    for i in 0..n {
        for j in 0..n {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((gram[(i, j)] - target).abs());
        }
    }
    worst
}

/// `P = I − B·Bᵀ` for a basis `B` (n×k) with orthonormal columns.
pub fn null_projector(basis: &Matrix) -> Result<Matrix> {
    let dev = orthonormality_error(basis);
    if dev > ORTHONORMAL_TOL {
        return Err(Error::NotOrthonormal { deviation: dev });
    }
    let n = basis.rows();
    let bbt = basis.matmul_t(basis)?;
    Matrix::identity(n).sub(&bbt)
}

/// `grad · p`: projects every row of a (fan-out × fan-in) gradient onto the
/// input-side subspace kept by `p`.
pub fn apply_projection(grad: &Matrix, p: &Matrix) -> Result<Matrix> {
    if grad.cols() != p.rows() || p.rows() != p.cols() {
        return Err(Error::Shape(format!(
            "gradient {}x{} cannot be projected by {}x{}",
            grad.rows(),
            grad.cols(),
            p.rows(),
            p.cols()
        )));
    }
    grad.matmul(p)
}
