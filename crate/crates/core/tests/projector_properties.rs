mod common;

use common::{frob_diff, gaussian_matrix, gram_schmidt, rank_by_prefix_sum, square_blobs, symmetric_eigenvalues};
use proptest::prelude::*;
use unsc::linalg::{apply_projection, null_projector, rank_cutoff, svd, Matrix};
use unsc::nn::{Activation, LayerSpec, Network};
use unsc::rng::SeededRng;
use unsc::subspace::{class_subspace, merge_null_projector, retained_energy, ClassSubspace};

fn orthonormal_basis(n: usize, k: usize, seed: u64) -> Matrix {
    let g = gaussian_matrix(n, k, &mut SeededRng::new(seed));
    let q = gram_schmidt(&g, 1e-12);
    if q.is_empty() {
        return Matrix::zeros(n, 0);
    }
    Matrix::from_columns(&q).unwrap()
}

fn toy_subspaces(seed: u64) -> (Network, Vec<ClassSubspace>, Vec<unsc::data::Dataset>) {
    let specs = vec![
        LayerSpec::dense(2, 6, Activation::Relu),
        LayerSpec::dense(6, 6, Activation::Relu),
        LayerSpec::dense(6, 4, Activation::Identity),
    ];
    let net = Network::init(specs, 4, seed).unwrap();
    let ds = square_blobs(3, 3.0, seed);
    let batches: Vec<_> = (0..4).map(|k| ds.of_class(k)).collect();
    let subs = batches.iter().map(|b| class_subspace(&net, b).unwrap()).collect();
    (net, subs, batches)
}

#[test]
fn seeded_six_by_two_basis_gives_four_ones_and_two_zeros() {
    let b = orthonormal_basis(6, 2, 62);
    let ev = symmetric_eigenvalues(&null_projector(&b).unwrap());
    let expected = [0.0, 0.0, 1.0, 1.0, 1.0, 1.0];
    for (e, x) in ev.iter().zip(expected) {
        assert!((e - x).abs() <= 1e-8, "{ev:?}");
    }
}

#[test]
fn rank_cutoff_worked_examples() {
    // 9 / 10.01 = 0.8991, 10 / 10.01 = 0.999
    assert_eq!(rank_cutoff(&[3.0, 1.0, 0.1], 0.89).unwrap(), 1);
    assert_eq!(rank_cutoff(&[3.0, 1.0, 0.1], 0.9).unwrap(), 2);
    assert_eq!(rank_by_prefix_sum(&[3.0, 1.0, 0.1], 0.89), 1);
    assert_eq!(rank_by_prefix_sum(&[3.0, 1.0, 0.1], 0.9), 2);
}

#[test]
fn identity_layer_subspace_is_the_input_svd() {
    // first-layer inputs do not depend on the weights, so the class basis
    // must span the top directions of the augmented raw inputs
    let ds = square_blobs(20, 2.0, 5).of_class(1);
    let specs = vec![LayerSpec::dense(2, 2, Activation::Identity), LayerSpec::dense(2, 4, Activation::Identity)];
    let mut w0 = Matrix::zeros(2, 3);
    w0[(0, 0)] = 1.0;
    w0[(1, 1)] = 1.0;
    let net = Network::from_parts(specs, vec![w0, Matrix::zeros(4, 3)], 4).unwrap();
    let sub = class_subspace(&net, &ds).unwrap();
    let r = ds.all_columns().append_ones_row();
    let ev = symmetric_eigenvalues(&r.matmul_t(&r).unwrap());
    let s: Vec<f64> = ev.iter().rev().map(|e| e.max(0.0).sqrt()).collect();
    for (a, b) in sub.layers[0].singular_values.iter().zip(&s) {
        assert!((a - b).abs() <= 1e-8 * s[0]);
    }
    // the projector onto the basis is determined by the column span alone
    let q = Matrix::from_columns(&gram_schmidt(&r, 1e-12)).unwrap();
    let lhs = sub.layers[0].basis.matmul_t(&sub.layers[0].basis).unwrap();
    let rhs = q.matmul_t(&q).unwrap();
    assert!(frob_diff(&lhs, &rhs) <= 1e-8);
}

#[test]
fn three_class_merge_rank_is_bounded_by_gram_schmidt() {
    let (_, subs, _) = toy_subspaces(3);
    let refs: Vec<&ClassSubspace> = subs[1..].iter().collect();
    let p = merge_null_projector(0, &refs, &[0.97; 3]).unwrap();
    for l in 0..3 {
        let parts: Vec<&Matrix> = refs.iter().map(|s| &s.layers[l].basis).collect();
        let cat = Matrix::hcat(&parts).unwrap();
        let gs_rank = gram_schmidt(&cat, 1e-8).len();
        let single = refs
            .iter()
            .map(|s| merge_null_projector(0, &[*s], &[0.97; 3]).unwrap().layers[l].rank)
            .max()
            .unwrap();
        let rank = p.layers[l].rank;
        assert!(rank <= cat.cols() && rank <= gs_rank, "layer {l}: {rank} > {gs_rank}");
        assert!(rank >= single, "layer {l}: {rank} < {single}");
    }
}

#[test]
fn retained_energy_examples() {
    let (net, subs, batches) = toy_subspaces(9);
    let trace = net.forward(&batches[2].all_columns(), true).unwrap().trace.unwrap();
    let exact = merge_null_projector(0, &[&subs[2]], &[1.0; 3]).unwrap();
    assert!(retained_energy(&exact, &trace).unwrap().iter().all(|&f| f >= 1.0 - 1e-10));
    let approx = merge_null_projector(0, &[&subs[2]], &[0.97; 3]).unwrap();
    for (l, f) in retained_energy(&approx, &trace).unwrap().into_iter().enumerate() {
        // a single class keeps its own leading directions, so the kept share
        // of the batch energy is the prefix sum used to pick the rank
        let s = &subs[2].layers[l].singular_values;
        let total: f64 = s.iter().map(|v| v * v).sum();
        let kept: f64 = s[..approx.layers[l].rank].iter().map(|v| v * v).sum();
        assert!((f - kept / total).abs() <= 1e-10);
        assert!(f >= 0.97);
    }
    // activations orthogonal to every retained direction keep nothing
    let pl = &exact.layers[0];
    let orth = pl.projector.matmul(&gaussian_matrix(3, 4, &mut SeededRng::new(1))).unwrap();
    let t = unsc::nn::ActivationTrace { layers: vec![orth.clone(), trace.layers[1].clone(), trace.layers[2].clone()] };
    assert!(retained_energy(&exact, &t).unwrap()[0] <= 1e-10);
}

proptest! {
    #![proptest_config(common::config(96))]

    #[test]
    fn projector_is_symmetric_idempotent_and_kills_basis(n in 1usize..10, k in 0usize..10, seed in any::<u64>()) {
        let k = k.min(n);
        let b = orthonormal_basis(n, k, seed);
        let p = null_projector(&b).unwrap();
        prop_assert!(frob_diff(&p.matmul(&p).unwrap(), &p) <= 1e-10);
        prop_assert!(frob_diff(&p, &p.transpose()) <= 1e-12);
        if k > 0 {
            prop_assert!(p.matmul(&b).unwrap().max_abs() <= 1e-10);
        }
        let ev = symmetric_eigenvalues(&p);
        let zeros = ev.iter().filter(|e| e.abs() <= 1e-8).count();
        let ones = ev.iter().filter(|e| (*e - 1.0).abs() <= 1e-8).count();
        prop_assert_eq!((zeros, ones), (k, n - k));
    }

    #[test]
    fn projection_splits_gradients_pythagorean(n in 2usize..9, k in 1usize..9, rows in 1usize..6, seed in any::<u64>()) {
        let k = k.min(n - 1);
        let b = orthonormal_basis(n, k, seed);
        let p = null_projector(&b).unwrap();
        let g = gaussian_matrix(rows, n, &mut SeededRng::new(seed ^ 1));
        let kept = apply_projection(&g, &p).unwrap();
        let rest = g.sub(&kept).unwrap();
        let lhs = g.frobenius_norm_sq();
        let rhs = kept.frobenius_norm_sq() + rest.frobenius_norm_sq();
        prop_assert!((lhs - rhs).abs() <= 1e-8 * lhs.max(1.0));
        // every projected row is orthogonal to the annihilated subspace
        let leak = kept.matmul(&b).unwrap().frobenius_norm() / g.frobenius_norm();
        prop_assert!(leak <= 1e-10);
    }

    #[test]
    fn rank_cutoff_matches_prefix_sum_exactly(
        mut ints in prop::collection::vec(0u32..64, 1..12),
        e in 1u32..=64,
    ) {
        // small integers and dyadic thresholds keep every sum exact
        ints.sort_unstable_by(|a, b| b.cmp(a));
        prop_assume!(ints[0] > 0);
        let s: Vec<f64> = ints.iter().map(|&v| v as f64).collect();
        let eps = e as f64 / 64.0;
        prop_assert_eq!(rank_cutoff(&s, eps).unwrap(), rank_by_prefix_sum(&s, eps));
    }

    #[test]
    fn full_energy_rank_counts_nonzeros(mut v in prop::collection::vec(0.0f64..10.0, 1..12), zeros in 0usize..4) {
        v.sort_by(|a, b| b.total_cmp(a));
        prop_assume!(v[0] > 0.0);
        v.extend(std::iter::repeat(0.0).take(zeros));
        let nonzero = v.iter().filter(|&&x| x > 0.0).count();
        prop_assert_eq!(rank_cutoff(&v, 1.0).unwrap(), nonzero);
    }

    #[test]
    fn rank_cutoff_is_monotone_in_epsilon(mut v in prop::collection::vec(0.0f64..10.0, 1..12), a in 0.01f64..1.0, b in 0.01f64..1.0) {
        v.sort_by(|x, y| y.total_cmp(x));
        prop_assume!(v[0] > 0.0);
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let k_lo = rank_cutoff(&v, lo).unwrap();
        let k_hi = rank_cutoff(&v, hi).unwrap();
        prop_assert!(k_lo <= k_hi);
        prop_assert!(k_lo >= 1 && k_hi <= v.len());
    }

    #[test]
    fn merge_is_order_invariant(seed in 0u64..1000, eps in prop::sample::select(vec![0.9, 0.97, 0.99, 1.0])) {
        let (_, subs, _) = toy_subspaces(seed);
        let fwd: Vec<&ClassSubspace> = subs[1..].iter().collect();
        let rev: Vec<&ClassSubspace> = subs[1..].iter().rev().collect();
        let a = merge_null_projector(0, &fwd, &[eps; 3]).unwrap();
        let b = merge_null_projector(0, &rev, &[eps; 3]).unwrap();
        for (x, y) in a.layers.iter().zip(&b.layers) {
            prop_assert_eq!(x.rank, y.rank);
            prop_assert!(frob_diff(&x.projector, &y.projector) <= 1e-8);
        }
    }

    #[test]
    fn retained_rank_is_monotone_in_epsilon(seed in 0u64..1000, a in 0.5f64..1.0, b in 0.5f64..1.0) {
        let (_, subs, _) = toy_subspaces(seed);
        let refs: Vec<&ClassSubspace> = subs[1..].iter().collect();
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let p_lo = merge_null_projector(0, &refs, &[lo; 3]).unwrap();
        let p_hi = merge_null_projector(0, &refs, &[hi; 3]).unwrap();
        for (x, y) in p_lo.ranks().iter().zip(p_hi.ranks()) {
            prop_assert!(*x <= y);
        }
    }

    #[test]
    fn exact_projector_annihilates_build_activations(seed in 0u64..1000) {
        let (net, subs, batches) = toy_subspaces(seed);
        let refs: Vec<&ClassSubspace> = subs[1..].iter().collect();
        let p = merge_null_projector(0, &refs, &[1.0; 3]).unwrap();
        for b in &batches[1..] {
            let trace = net.forward(&b.all_columns(), true).unwrap().trace.unwrap();
            for (pl, r) in p.layers.iter().zip(&trace.layers) {
                let res = pl.projector.matmul(r).unwrap().frobenius_norm() / r.frobenius_norm();
                prop_assert!(res <= 1e-8, "residual {}", res);
            }
        }
    }

    #[test]
    fn svd_of_projected_matrix_loses_the_annihilated_rank(n in 3usize..8, k in 1usize..3, seed in any::<u64>()) {
        let b = orthonormal_basis(n, k, seed);
        let p = null_projector(&b).unwrap();
        let m = gaussian_matrix(n, n + 2, &mut SeededRng::new(seed ^ 7));
        let s = svd(&p.matmul(&m).unwrap()).unwrap().s;
        prop_assert!(s[n - k..].iter().all(|&v| v <= 1e-10 * s[0]));
        prop_assert!(s[n - k - 1] > 1e-6);
    }
}
