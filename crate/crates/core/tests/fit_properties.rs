mod oracles;

use figs::{fit_cart, fit_figs, fit_figs_traced, Dataset, FigsModel, FitConfig};
use proptest::prelude::*;

/// Small datasets with plenty of duplicate feature values.
fn dataset(max_n: usize, max_d: usize) -> impl Strategy<Value = Dataset> {
    (2..=max_n, 1..=max_d).prop_flat_map(|(n, d)| {
        (
            prop::collection::vec(prop::collection::vec(0u8..6, d), n),
            prop::collection::vec(-3.0f64..3.0, n),
        )
            .prop_map(|(x, y)| {
                let rows: Vec<Vec<f64>> = x.into_iter().map(|r| r.into_iter().map(f64::from).collect()).collect();
                Dataset::from_rows(&rows, y).unwrap()
            })
    })
}

fn rows(ds: &Dataset) -> Vec<Vec<f64>> {
    ds.rows().map(<[f64]>::to_vec).collect()
}

fn key(steps: &[oracles::Step]) -> Vec<(usize, usize, usize, u64)> {
    steps.iter().map(|s| (s.tree, s.leaf, s.feature, s.threshold.to_bits())).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn matches_exhaustive_greedy(ds in dataset(12, 3), budget in 0usize..12) {
        let (_, events) = fit_figs_traced(&ds, &FitConfig::regression(budget)).unwrap();
        let got: Vec<_> = events.iter().map(|e| (e.tree_index, e.leaf_id, e.feature, e.threshold.to_bits())).collect();
        prop_assert_eq!(got, key(&oracles::greedy_trace(&rows(&ds), ds.targets(), budget, true)));
    }

    #[test]
    fn single_tree_matches_exhaustive_cart(ds in dataset(12, 3), budget in 0usize..12) {
        let cfg = FitConfig { allow_new_trees: false, ..FitConfig::regression(budget) };
        let (model, events) = fit_figs_traced(&ds, &cfg).unwrap();
        prop_assert!(model.n_trees() <= 1);
        let got: Vec<_> = events.iter().map(|e| (e.tree_index, e.leaf_id, e.feature, e.threshold.to_bits())).collect();
        prop_assert_eq!(got, key(&oracles::greedy_trace(&rows(&ds), ds.targets(), budget, false)));
        prop_assert!(model.same_structure(&fit_cart(&ds, &FitConfig::regression(budget)).unwrap()));
    }

    #[test]
    fn sse_drops_by_reported_decrease(ds in dataset(60, 4), budget in 1usize..10) {
        let (_, events) = fit_figs_traced(&ds, &FitConfig::regression(budget)).unwrap();
        let n = ds.n_samples();
        for (j, ev) in events.iter().enumerate() {
            // Residuals and leaf membership under the j-split prefix (no trees at all for j = 0).
            let prev = fit_figs(&ds, &FitConfig::regression(j)).unwrap();
            let mut before = 0.0;
            let (mut sum, mut count) = (0.0, 0.0);
            for i in 0..n {
                let x = ds.row(i);
                let r = if j == 0 { ds.targets()[i] } else { ds.targets()[i] - prev.predict_raw(x).unwrap() };
                before += r * r;
                let inside = ev.new_tree || prev.trees()[ev.tree_index].leaf_index(x) == ev.leaf_id;
                if inside {
                    sum += r;
                    count += 1.0;
                }
            }
            // Re-centring the parent leaf contributes W * rbar^2 on top of the split's own decrease.
            let recentre = sum * sum / count;
            let after = fit_figs(&ds, &FitConfig::regression(j + 1)).unwrap().sse(&ds).unwrap();
            let drop = before - after;
            let expected = ev.impurity_decrease + recentre;
            prop_assert!((drop - expected).abs() <= 1e-9 * expected.max(1.0),
                "split {}: drop {} vs {} + {}", j, drop, ev.impurity_decrease, recentre);
        }
    }

    #[test]
    fn cart_sse_drops_by_exactly_the_decrease(ds in dataset(60, 4), budget in 1usize..10) {
        let mut config = FitConfig::regression(budget);
        config.allow_new_trees = false;
        let (_, events) = fit_figs_traced(&ds, &config).unwrap();
        let mut before = fit_figs(&ds, &FitConfig::regression(0)).unwrap().sse(&ds).unwrap();
        for (j, ev) in events.iter().enumerate() {
            let mut c = config.clone();
            c.max_splits = j + 1;
            let after = fit_figs(&ds, &c).unwrap().sse(&ds).unwrap();
            prop_assert!((before - after - ev.impurity_decrease).abs() <= 1e-9 * ev.impurity_decrease.max(1.0));
            before = after;
        }
    }

    #[test]
    fn one_split_per_iteration(ds in dataset(40, 4), budget in 0usize..15) {
        let (model, events) = fit_figs_traced(&ds, &FitConfig::regression(budget)).unwrap();
        prop_assert!(events.len() <= budget);
        prop_assert_eq!(model.total_splits(), events.len());
        for tree in model.trees() {
            // Only the degenerate constant model carries a split-free tree.
            prop_assert!(tree.n_splits() >= 1 || events.is_empty());
            prop_assert_eq!(tree.n_leaves(), tree.n_splits() + 1);
        }
        for j in 0..events.len() {
            prop_assert_eq!(fit_figs(&ds, &FitConfig::regression(j)).unwrap().total_splits(), j);
        }
    }

    #[test]
    fn unit_weights_are_neutral(ds in dataset(40, 3), budget in 0usize..10) {
        let n = ds.n_samples();
        let weighted = ds.clone().with_weights(vec![1.0; n]).unwrap();
        let a = fit_figs(&ds, &FitConfig::regression(budget)).unwrap();
        let b = fit_figs(&weighted, &FitConfig::regression(budget)).unwrap();
        prop_assert!(a.same_structure(&b));
    }

    #[test]
    fn json_round_trip_is_bit_exact(ds in dataset(40, 3), budget in 0usize..10, probe in prop::collection::vec(-1.0f64..7.0, 3)) {
        let model = fit_figs(&ds, &FitConfig::regression(budget)).unwrap();
        let back = FigsModel::from_json(&model.to_json().unwrap()).unwrap();
        prop_assert!(model.same_structure(&back));
        let x = &probe[..ds.n_features()];
        prop_assert_eq!(model.predict(x).unwrap().to_bits(), back.predict(x).unwrap().to_bits());
        for row in ds.rows() {
            prop_assert_eq!(model.predict(row).unwrap().to_bits(), back.predict(row).unwrap().to_bits());
        }
    }
}

#[test]
fn toy_function_needs_two_trees() {
    use figs::synthetic::{generate, GenKind, GenSpec};
    let ds = generate(&GenSpec::new(GenKind::Toy, 800, 3, 0.0, 1)).unwrap().dataset;
    let model = fit_figs(&ds, &FitConfig::regression(3)).unwrap();
    assert_eq!(model.splits_per_tree(), vec![1, 2]);
    assert_eq!(model.trees()[0].split_features().into_iter().collect::<Vec<_>>(), vec![0]);
    assert_eq!(model.trees()[1].split_features().into_iter().collect::<Vec<_>>(), vec![1, 2]);
    assert_eq!(model.sse(&ds).unwrap(), 0.0);
}

#[test]
fn twenty_splits_on_ten_thousand_rows_is_interactive() {
    use figs::synthetic::{generate, GenKind, GenSpec};
    let ds = generate(&GenSpec::new(GenKind::Lss, 10_000, 50, 0.1, 3)).unwrap().dataset;
    let start = std::time::Instant::now();
    let model = fit_figs(&ds, &FitConfig::regression(20)).unwrap();
    assert_eq!(model.total_splits(), 20);
    assert!(start.elapsed() < std::time::Duration::from_secs(30), "took {:?}", start.elapsed());
}
