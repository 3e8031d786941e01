mod common;

use common::{gaussian_matrix, singular_values_oracle};
use proptest::prelude::*;
use unsc::linalg::{orthonormality_error, svd, Matrix};
use unsc::rng::SeededRng;

fn shapes() -> impl Strategy<Value = (usize, usize, u64)> {
    (1usize..9, 1usize..9, any::<u64>())
}

/// Low-rank matrix `A·B` with inner dimension `r`.
fn low_rank(rows: usize, cols: usize, r: usize, seed: u64) -> Matrix {
    let mut rng = SeededRng::new(seed);
    let a = gaussian_matrix(rows, r, &mut rng);
    let b = gaussian_matrix(r, cols, &mut rng);
    a.matmul(&b).unwrap()
}

#[test]
fn seeded_five_by_eight_matches_eigenvalues_of_gram() {
    let m = gaussian_matrix(5, 8, &mut SeededRng::new(58));
    let r = svd(&m).unwrap();
    let oracle = singular_values_oracle(&m);
    assert_eq!(r.s.len(), 5);
    for (a, b) in r.s.iter().zip(&oracle) {
        assert!((a - b).abs() <= 1e-8, "{a} vs {b}");
    }
}

proptest! {
    #![proptest_config(common::config(96))]

    #[test]
    fn reconstruction_and_orthonormality((rows, cols, seed) in shapes()) {
        let m = gaussian_matrix(rows, cols, &mut SeededRng::new(seed));
        let r = svd(&m).unwrap();
        let rel = r.reconstruct().sub(&m).unwrap().frobenius_norm() / m.frobenius_norm();
        prop_assert!(rel <= 1e-8, "reconstruction error {rel}");
        prop_assert!(orthonormality_error(&r.u) <= 1e-8);
        prop_assert!(orthonormality_error(&r.vt.transpose()) <= 1e-8);
        prop_assert!(r.s.windows(2).all(|w| w[0] >= w[1]));
        prop_assert!(r.s.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn singular_values_match_eigen_oracle((rows, cols, seed) in shapes()) {
        let m = gaussian_matrix(rows, cols, &mut SeededRng::new(seed));
        let r = svd(&m).unwrap();
        let oracle = singular_values_oracle(&m);
        let scale = oracle[0].max(1.0);
        for (a, b) in r.s.iter().zip(&oracle) {
            prop_assert!((a - b).abs() <= 1e-8 * scale, "{} vs {}", a, b);
        }
    }

    #[test]
    fn rank_deficient_inputs((rows, cols, seed) in (2usize..9, 2usize..9, any::<u64>()), r in 1usize..3) {
        let m = low_rank(rows, cols, r, seed);
        let res = svd(&m).unwrap();
        let rel = res.reconstruct().sub(&m).unwrap().frobenius_norm() / m.frobenius_norm();
        prop_assert!(rel <= 1e-8);
        prop_assert!(orthonormality_error(&res.u) <= 1e-8);
        let tiny = res.s.iter().skip(r).all(|&v| v <= 1e-10 * res.s[0]);
        prop_assert!(tiny, "{:?}", res.s);
    }

    #[test]
    fn deterministic_and_sign_fixed((rows, cols, seed) in shapes()) {
        let m = gaussian_matrix(rows, cols, &mut SeededRng::new(seed));
        let a = svd(&m).unwrap();
        let b = svd(&m).unwrap();
        prop_assert_eq!(&a, &b);
        for j in 0..a.u.cols() {
            let col = a.u.column(j);
            let big = col.iter().cloned().fold(0.0_f64, |acc, v| if v.abs() > acc.abs() { v } else { acc });
            prop_assert!(big >= 0.0);
        }
    }
}
