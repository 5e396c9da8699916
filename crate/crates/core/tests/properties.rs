mod common;

use abcboost::boost::loss::softmax;
use abcboost::dataset::{FeatureRanks, SortedFeatureIndex};
use abcboost::tree::{fit_tree, split_gain, SplitCriterion, TreeParams};
use abcboost::{load_libsvm, write_libsvm, Dataset, LoadOptions};
use proptest::prelude::*;

fn dataset_strategy() -> impl Strategy<Value = (Vec<f64>, usize, Vec<usize>)> {
    (1usize..4, 3usize..40).prop_flat_map(|(d, n)| {
        (
            proptest::collection::vec(prop_oneof![(-50i32..50).prop_map(|v| v as f64 / 4.0), -10.0f64..10.0], n * d),
            Just(d),
            proptest::collection::vec(0usize..3, n),
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn sorted_index_orders_every_feature((x, d, y) in dataset_strategy()) {
        let ds = Dataset::new(x, d, y, 3).unwrap();
        let idx = SortedFeatureIndex::build(&ds);
        for f in 0..d {
            let perm = idx.permutation(f);
            let mut seen = perm.to_vec();
            seen.sort_unstable();
            prop_assert_eq!(seen, (0..ds.n_samples() as u32).collect::<Vec<_>>());
            for w in perm.windows(2) {
                prop_assert!(ds.value(w[0] as usize, f) <= ds.value(w[1] as usize, f));
            }
        }
    }

    #[test]
    fn thresholds_separate_adjacent_values((x, d, y) in dataset_strategy()) {
        let ds = Dataset::new(x, d, y, 3).unwrap();
        let ranks = FeatureRanks::from_dataset(&ds);
        for f in 0..d {
            for r in 1..ranks.n_distinct(f) as u32 {
                let lo = ranks.distinct_value(f, r - 1);
                let hi = ranks.distinct_value(f, r);
                let t = ranks.threshold_between(f, r - 1, r);
                prop_assert!(lo <= t && t < hi);
            }
        }
    }

    #[test]
    fn second_order_gain_is_non_negative(
        rows in proptest::collection::vec((-5.0f64..5.0, 1e-6f64..2.0), 2..50),
        cut_seed in 0usize..1000,
    ) {
        let cut = 1 + cut_seed % (rows.len() - 1);
        let (tz, tw) = rows.iter().fold((0.0, 0.0), |(a, b), (z, w)| (a + z * w, b + w));
        let (pz, pw) = rows[..cut].iter().fold((0.0, 0.0), |(a, b), (z, w)| (a + z * w, b + w));
        let g = split_gain(pz, pw, tz, tw, SplitCriterion::SecondOrder).unwrap();
        prop_assert!(g >= 0.0);
    }

    #[test]
    fn second_order_gain_is_the_weighted_mse_reduction(
        rows in proptest::collection::vec((-5.0f64..5.0, 0.01f64..2.0), 2..50),
        cut_seed in 0usize..1000,
    ) {
        let cut = 1 + cut_seed % (rows.len() - 1);
        let sse = |r: &[(f64, f64)]| {
            let w: f64 = r.iter().map(|p| p.1).sum();
            let m = r.iter().map(|p| p.0 * p.1).sum::<f64>() / w;
            r.iter().map(|(z, w)| w * (z - m) * (z - m)).sum::<f64>()
        };
        let (tz, tw) = rows.iter().fold((0.0, 0.0), |(a, b), (z, w)| (a + z * w, b + w));
        let (pz, pw) = rows[..cut].iter().fold((0.0, 0.0), |(a, b), (z, w)| (a + z * w, b + w));
        let g = split_gain(pz, pw, tz, tw, SplitCriterion::SecondOrder).unwrap();
        let oracle = sse(&rows) - sse(&rows[..cut]) - sse(&rows[cut..]);
        prop_assert!((g - oracle).abs() <= 1e-9 * sse(&rows).max(1e-300), "{} vs {}", g, oracle);
    }

    #[test]
    fn probabilities_lie_on_the_simplex(f in proptest::collection::vec(-700.0f64..700.0, 3..12)) {
        let p = softmax(&f);
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        prop_assert!(p.iter().all(|&v| (0.0..=1.0).contains(&v)));
    }

    /// Dyadic responses keep every sum exact, so sample order cannot matter.
    #[test]
    fn fitted_tree_ignores_sample_order(
        (x, d, y) in dataset_strategy(),
        zs in proptest::collection::vec(-16i32..16, 40),
        ws in proptest::collection::vec(1i32..16, 40),
        shift in 1usize..40,
        leaves in 2usize..8,
    ) {
        let n = y.len();
        let ds = Dataset::new(x.clone(), d, y.clone(), 3).unwrap();
        let res: Vec<f64> = (0..n).map(|i| zs[i] as f64 / 8.0).collect();
        let w: Vec<f64> = (0..n).map(|i| ws[i] as f64 / 16.0).collect();
        let perm: Vec<usize> = (0..n).map(|i| (i + shift) % n).collect();
        let px: Vec<f64> = perm.iter().flat_map(|&i| x[i * d..(i + 1) * d].to_vec()).collect();
        let py: Vec<usize> = perm.iter().map(|&i| y[i]).collect();
        let pds = Dataset::new(px, d, py, 3).unwrap();
        let pres: Vec<f64> = perm.iter().map(|&i| res[i]).collect();
        let pw: Vec<f64> = perm.iter().map(|&i| w[i]).collect();

        let params = TreeParams::new(leaves, SplitCriterion::SecondOrder);
        let all: Vec<u32> = (0..n as u32).collect();
        let a = fit_tree(&res, &w, &FeatureRanks::from_dataset(&ds), &all, &params);
        let b = fit_tree(&pres, &pw, &FeatureRanks::from_dataset(&pds), &all, &params);
        prop_assert_eq!(a.tree, b.tree);
    }

    #[test]
    fn libsvm_round_trip((x, d, y) in dataset_strategy()) {
        let mut y = y;
        // training files must contain every class
        y[0] = 0;
        y[1] = 1;
        y[2] = 2;
        let ds = Dataset::new(x, d, y, 3).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.svm");
        write_libsvm(&ds, &path).unwrap();
        let opts = LoadOptions { expected_features: Some(d), ..LoadOptions::train() };
        let back = load_libsvm(&path, &opts).unwrap();
        prop_assert_eq!(back.features(), ds.features());
        prop_assert_eq!(back.labels(), ds.labels());
    }
}
