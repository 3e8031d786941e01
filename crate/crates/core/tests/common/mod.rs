//! Independent oracles shared by the integration suites. Nothing here calls
//! into the library's SVD, projector or backprop code.
#![allow(dead_code)]

use unsc::data::{Dataset, Provenance};
use unsc::linalg::Matrix;
use unsc::nn::{Activation, LayerSpec, Network};
use unsc::rng::SeededRng;

pub fn gaussian_matrix(rows: usize, cols: usize, rng: &mut SeededRng) -> Matrix {
    let data = (0..rows * cols).map(|_| rng.normal()).collect();
    Matrix::from_vec(rows, cols, data).unwrap()
}

/// Classical cyclic Jacobi eigenvalues of a symmetric matrix, ascending.
pub fn symmetric_eigenvalues(a: &Matrix) -> Vec<f64> {
    let n = a.rows();
    let mut m: Vec<Vec<f64>> = a.to_rows();
    for _ in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[i][j] * m[i][j])
            .sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if m[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (m[q][q] - m[p][p]) / (2.0 * m[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (mkp, mkq) = (m[k][p], m[k][q]);
                    m[k][p] = c * mkp - s * mkq;
                    m[k][q] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let (mpk, mqk) = (m[p][k], m[q][k]);
                    m[p][k] = c * mpk - s * mqk;
                    m[q][k] = s * mpk + c * mqk;
                }
            }
        }
    }
    let mut ev: Vec<f64> = (0..n).map(|i| m[i][i]).collect();
    ev.sort_by(f64::total_cmp);
    ev
}

/// Singular values from the eigenvalues of `M·Mᵀ` (or `Mᵀ·M`, whichever is
/// smaller), descending.
pub fn singular_values_oracle(m: &Matrix) -> Vec<f64> {
    let gram = if m.rows() <= m.cols() { m.matmul_t(m).unwrap() } else { m.t_matmul(m).unwrap() };
    let mut s: Vec<f64> = symmetric_eigenvalues(&gram).into_iter().map(|e| e.max(0.0).sqrt()).collect();
    s.reverse();
    s
}

/// Modified Gram–Schmidt orthonormal basis of the columns of `a`, dropping
/// columns whose remaining norm falls below `tol` times their original norm.
pub fn gram_schmidt(a: &Matrix, tol: f64) -> Vec<Vec<f64>> {
    let mut basis: Vec<Vec<f64>> = Vec::new();
    for j in 0..a.cols() {
        let mut v = a.column(j);
        let n0 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n0 == 0.0 {
            continue;
        }
        for _ in 0..2 {
            for q in &basis {
                let d: f64 = q.iter().zip(&v).map(|(a, b)| a * b).sum();
                v.iter_mut().zip(q).for_each(|(x, qi)| *x -= d * qi);
            }
        }
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > tol * n0 {
            basis.push(v.into_iter().map(|x| x / n).collect());
        }
    }
    basis
}

/// Relative least-squares residual of `g` against the column span of `a`.
pub fn span_residual(a: &Matrix, g: &[f64]) -> f64 {
    let q = gram_schmidt(a, 1e-10);
    let mut r = g.to_vec();
    for _ in 0..2 {
        for qi in &q {
            let d: f64 = qi.iter().zip(&r).map(|(a, b)| a * b).sum();
            r.iter_mut().zip(qi).for_each(|(x, q)| *x -= d * q);
        }
    }
    let gn = g.iter().map(|x| x * x).sum::<f64>().sqrt();
    let rn = r.iter().map(|x| x * x).sum::<f64>().sqrt();
    if gn == 0.0 {
        0.0
    } else {
        rn / gn
    }
}

/// Smallest `k` whose leading squared values reach `epsilon` of the total,
/// by a running prefix sum.
pub fn rank_by_prefix_sum(s: &[f64], epsilon: f64) -> usize {
    let total: f64 = s.iter().map(|v| v * v).sum();
    let mut acc = 0.0;
    for (i, v) in s.iter().enumerate() {
        acc += v * v;
        if acc >= epsilon * total {
            return i + 1;
        }
    }
    s.len()
}

/// Direct convolution of one sample (channel-major maps) with a weight
/// matrix laid out as `out × (C·k·k + 1)`, bias last.
pub fn naive_conv(
    x: &[f64],
    w: &Matrix,
    channels: usize,
    height: usize,
    width: usize,
    kernel: usize,
    stride: usize,
    activation: Activation,
) -> Vec<f64> {
    let oh = (height - kernel) / stride + 1;
    let ow = (width - kernel) / stride + 1;
    let bias_col = channels * kernel * kernel;
    let mut out = Vec::with_capacity(w.rows() * oh * ow);
    for o in 0..w.rows() {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut z = w[(o, bias_col)];
                for c in 0..channels {
                    for ky in 0..kernel {
                        for kx in 0..kernel {
                            let xi = c * height * width + (oy * stride + ky) * width + ox * stride + kx;
                            z += w[(o, c * kernel * kernel + ky * kernel + kx)] * x[xi];
                        }
                    }
                }
                out.push(match activation {
                    Activation::Relu => z.max(0.0),
                    Activation::Identity => z,
                });
            }
        }
    }
    out
}

/// Central-difference gradient of the mean loss with respect to every weight.
pub fn finite_difference_grads(net: &Network, batch: &Matrix, labels: &[usize], h: f64) -> Vec<Matrix> {
    let loss = |n: &Network| n.loss_and_grads(batch, labels).unwrap().loss;
    let base: Vec<Matrix> = net.weights().into_iter().cloned().collect();
    let mut out = Vec::new();
    for l in 0..base.len() {
        let mut g = Matrix::zeros(base[l].rows(), base[l].cols());
        for i in 0..base[l].rows() {
            for j in 0..base[l].cols() {
                let mut probe = net.clone();
                let mut w = base.clone();
                w[l][(i, j)] += h;
                probe.set_weights(w.clone()).unwrap();
                let up = loss(&probe);
                w[l][(i, j)] -= 2.0 * h;
                probe.set_weights(w).unwrap();
                let down = loss(&probe);
                g[(i, j)] = (up - down) / (2.0 * h);
            }
        }
        out.push(g);
    }
    out
}

/// Seeded random network with weights drawn from N(0, scale²).
pub fn random_network(specs: Vec<LayerSpec>, num_classes: usize, scale: f64, rng: &mut SeededRng) -> Network {
    let shell = Network::new(specs.clone(), num_classes).unwrap();
    let weights = shell
        .weights()
        .iter()
        .map(|w| gaussian_matrix(w.rows(), w.cols(), rng).scale(scale))
        .collect();
    Network::from_parts(specs, weights, num_classes).unwrap()
}

pub fn dataset(features: Matrix, labels: Vec<usize>, num_classes: usize) -> Dataset {
    Dataset::new(features, labels, num_classes, Provenance::new("test fixture")).unwrap()
}

/// `n` points per class from unit Gaussians centred on the corners of a
/// square of side `spread`.
pub fn square_blobs(n: usize, spread: f64, seed: u64) -> Dataset {
    let mut rng = SeededRng::new(seed);
    let centres = [(0.0, 0.0), (spread, 0.0), (0.0, spread), (spread, spread)];
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for (k, &(cx, cy)) in centres.iter().enumerate() {
        for _ in 0..n {
            rows.push(vec![cx + rng.normal(), cy + rng.normal()]);
            labels.push(k);
        }
    }
    dataset(Matrix::from_rows(&rows).unwrap(), labels, 4)
}

pub fn frob_diff(a: &Matrix, b: &Matrix) -> f64 {
    a.sub(b).unwrap().frobenius_norm()
}

/// Case count without on-disk failure persistence (integration tests have
/// no source root for proptest to anchor regression files to).
pub fn config(cases: u32) -> proptest::test_runner::Config {
    proptest::test_runner::Config { cases, failure_persistence: None, ..Default::default() }
}
