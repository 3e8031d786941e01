mod common;

use common::{dataset, gaussian_matrix, random_network};
use proptest::prelude::*;
use unsc::data::{gaussian_mixture, load_csv, load_idx, save_csv, save_idx, split, Dataset, SplitSpec};
use unsc::experiment::ExperimentConfig;
use unsc::linalg::Matrix;
use unsc::nn::{Activation, Checkpoint, LayerSpec};
use unsc::rng::SeededRng;

fn random_dataset(n: usize, d: usize, k: usize, seed: u64) -> Dataset {
    let mut rng = SeededRng::new(seed);
    let x = gaussian_matrix(n, d, &mut rng).scale(1e3);
    let y = (0..n).map(|i| if i < k { i } else { rng.below(k) }).collect();
    dataset(x, y, k)
}

fn bits(ds: &Dataset) -> Vec<u64> {
    ds.features().as_slice().iter().map(|v| v.to_bits()).collect()
}

fn fractions() -> impl Strategy<Value = (f64, f64, f64)> {
    (1u32..18, 1u32..18).prop_filter_map("leave room for test", |(a, b)| {
        (a + b < 20).then(|| (a as f64 / 20.0, b as f64 / 20.0, (20 - a - b) as f64 / 20.0))
    })
}

proptest! {
    #![proptest_config(common::config(48))]

    #[test]
    fn split_is_a_stratified_partition(
        (train, val, test) in fractions(), per_class in 20usize..60, k in 2usize..5, seed in any::<u64>()
    ) {
        let means: Vec<Vec<f64>> = (0..k).map(|c| vec![c as f64, 0.0]).collect();
        let ds = gaussian_mixture(&means, &vec![Matrix::identity(2); k], per_class, seed).unwrap();
        let spec = SplitSpec { train, val, test, unlearn_classes: vec![0], seed };
        let s = split(&ds, &spec).unwrap();
        let mut all: Vec<usize> = s.indices.iter().flatten().copied().collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..ds.len()).collect::<Vec<_>>());
        for (part, frac) in [(&s.train, train), (&s.val, val), (&s.test, test)] {
            for (c, &count) in part.class_counts().iter().enumerate() {
                let want = frac * per_class as f64;
                prop_assert!((count as f64 - want).abs() <= 1.0, "class {} has {} for {}", c, count, want);
            }
        }
        prop_assert!(s.d_u.labels().iter().all(|&y| y == 0));
        prop_assert!(s.d_r.labels().iter().all(|&y| y != 0));
        prop_assert_eq!(s.d_u.len() + s.d_r.len(), s.train.len());
        prop_assert_eq!(s.test_unlearn.len() + s.test_remaining.len(), s.test.len());
        prop_assert_eq!(split(&ds, &spec).unwrap(), s);
    }

    #[test]
    fn csv_round_trip_is_bit_exact(n in 1usize..40, d in 1usize..6, k in 1usize..5, seed in any::<u64>()) {
        prop_assume!(n >= k);
        let ds = random_dataset(n, d, k, seed);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        save_csv(&ds, &path).unwrap();
        let back = load_csv(&path, Some(k)).unwrap();
        prop_assert_eq!(bits(&back), bits(&ds));
        prop_assert_eq!(back.labels(), ds.labels());
        prop_assert_eq!(back.content_hash(), ds.content_hash());
    }

    #[test]
    fn idx_round_trip_is_bit_exact(n in 1usize..40, d in 1usize..6, k in 1usize..5, seed in any::<u64>()) {
        prop_assume!(n >= k);
        let ds = random_dataset(n, d, k, seed);
        let dir = tempfile::tempdir().unwrap();
        let (img, lab) = (dir.path().join("x.idx"), dir.path().join("y.idx"));
        save_idx(&ds, &img, &lab).unwrap();
        let back = load_idx(&img, &lab, k).unwrap();
        prop_assert_eq!(bits(&back), bits(&ds));
        prop_assert_eq!(back.labels(), ds.labels());
    }

    #[test]
    fn generator_is_deterministic_per_seed(seed in any::<u64>(), n in 1usize..30) {
        let means = vec![vec![0.0, 1.0, 2.0], vec![3.0, -1.0, 0.5]];
        let cov = Matrix::from_rows(&[vec![2.0, 0.3, 0.0], vec![0.3, 1.0, 0.2], vec![0.0, 0.2, 0.5]]).unwrap();
        let a = gaussian_mixture(&means, &[cov.clone(), cov.clone()], n, seed).unwrap();
        let b = gaussian_mixture(&means, &[cov.clone(), cov.clone()], n, seed).unwrap();
        prop_assert_eq!(bits(&a), bits(&b));
        prop_assert_eq!(a.content_hash(), b.content_hash());
        let c = gaussian_mixture(&means, &[cov.clone(), cov], n, seed.wrapping_add(1)).unwrap();
        prop_assert_ne!(a.content_hash(), c.content_hash());
    }

    #[test]
    fn checkpoint_round_trip_is_bit_exact(h in 1usize..6, seed in any::<u64>()) {
        let specs = vec![LayerSpec::dense(3, h, Activation::Relu), LayerSpec::dense(h, 2, Activation::Identity)];
        let net = random_network(specs, 2, 1.0, &mut SeededRng::new(seed));
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("net.json");
        Checkpoint::new(&net, seed, serde_json::json!({"k": 1})).save(&path).unwrap();
        let back = Checkpoint::load(&path).unwrap().network().unwrap();
        for (a, b) in back.weights().iter().zip(net.weights()) {
            let same = a.as_slice().iter().zip(b.as_slice()).all(|(x, y)| x.to_bits() == y.to_bits());
            prop_assert!(same);
        }
    }

    #[test]
    fn config_json_round_trip(seed in any::<u64>()) {
        let c = ExperimentConfig::toy().with_seed(seed);
        let text = serde_json::to_string(&c).unwrap();
        let back: ExperimentConfig = serde_json::from_str(&text).unwrap();
        prop_assert_eq!(back.hash(), c.hash());
        prop_assert_eq!(back, c);
    }
}

#[test]
fn mixture_moments_converge_at_the_standard_error_rate() {
    let means = vec![vec![1.0, -2.0]];
    let cov = Matrix::from_rows(&[vec![2.0, 0.6], vec![0.6, 1.0]]).unwrap();
    let n = 20_000;
    let ds = gaussian_mixture(&means, &[cov.clone()], n, 11).unwrap();
    let x = ds.features();
    for j in 0..2 {
        let mean = (0..n).map(|i| x[(i, j)]).sum::<f64>() / n as f64;
        let se = (cov[(j, j)] / n as f64).sqrt();
        assert!((mean - means[0][j]).abs() <= 4.0 * se, "mean {mean}");
    }
    let m: Vec<f64> = (0..2).map(|j| (0..n).map(|i| x[(i, j)]).sum::<f64>() / n as f64).collect();
    let c01 = (0..n).map(|i| (x[(i, 0)] - m[0]) * (x[(i, 1)] - m[1])).sum::<f64>() / (n - 1) as f64;
    // var of a sample covariance is (s00·s11 + s01²) / n
    let se = ((cov[(0, 0)] * cov[(1, 1)] + 0.36) / n as f64).sqrt();
    assert!((c01 - 0.6).abs() <= 4.0 * se, "cov {c01}");
}
