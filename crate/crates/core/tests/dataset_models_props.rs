use std::collections::BTreeSet;

use latentid::dataset::{split, stratified_balance, Dataset, FeatureRow, N_FEATURES};
use latentid::models::{evaluate, predict, train, ForestParams, Metrics, ModelKind, ModelParams};
use proptest::prelude::*;

fn rows() -> impl Strategy<Value = Vec<FeatureRow>> {
    prop::collection::vec(
        (0usize..3, prop::array::uniform8(0.01f64..10.0)).prop_map(|(c, f)| FeatureRow {
            label: ["A", "B", "C"][c].into(),
            features: f,
        }),
        6..120,
    )
}

/// Rows as comparable keys (feature bits plus label), counted with multiplicity.
fn keys(ds: &Dataset) -> Vec<(String, [u64; N_FEATURES])> {
    let mut k: Vec<_> = ds.rows.iter().map(|r| (r.label.clone(), r.features.map(f64::to_bits))).collect();
    k.sort();
    k
}

proptest! {
    #[test]
    fn split_partitions_the_dataset(rows in rows(), frac in 0.05f64..0.5, seed in any::<u64>()) {
        let ds = Dataset::new(rows);
        prop_assume!(ds.indices_by_class().values().all(|v| v.len() >= 2));
        let (tr, te) = split(&ds, frac, seed).unwrap();
        let mut union = tr.clone();
        union.extend(te.clone());
        prop_assert_eq!(keys(&union), keys(&ds));
        for (label, idx) in ds.indices_by_class() {
            let n_test = te.rows.iter().filter(|r| r.label == label).count() as f64;
            prop_assert!((n_test - idx.len() as f64 * frac).abs() <= 1.0);
        }
        let (tr2, te2) = split(&ds, frac, seed).unwrap();
        prop_assert_eq!(tr, tr2);
        prop_assert_eq!(te, te2);
    }

    #[test]
    fn balance_equalizes_cells(rows in rows(), seed in any::<u64>()) {
        let ds = Dataset::new(rows);
        let edges = [3.0, 6.0];
        if let Ok(b) = stratified_balance(&ds, &edges, seed) {
            let counts: BTreeSet<usize> = b.cell_counts(&edges).into_values().collect();
            prop_assert_eq!(counts.len(), 1);
            let orig = keys(&ds);
            for k in keys(&b) {
                prop_assert!(orig.binary_search(&k).is_ok());
            }
        }
    }

    #[test]
    fn pure_leaf_rows_predict_their_class(rows in rows()) {
        let ds = Dataset::new(rows);
        prop_assume!(ds.classes().len() >= 2);
        let p = ModelParams {
            tree: latentid::models::TreeParams { max_depth: 64, min_samples_leaf: 1 },
            ..Default::default()
        };
        let m = train(ModelKind::Dt, &ds, &p).unwrap();
        // with unlimited depth only exact duplicates with different labels can be misfit
        let dupes = |r: &FeatureRow| ds.rows.iter().filter(|o| o.features == r.features && o.label != r.label).count();
        for r in &ds.rows {
            if dupes(r) == 0 {
                prop_assert_eq!(predict(&m, &r.features).unwrap(), r.label.clone());
            }
        }
    }
}

#[test]
fn forest_and_boosting_learn_a_noisy_threshold() {
    let mut rows = Vec::new();
    for i in 0..300 {
        let x = i as f64 / 300.0;
        let mut f = [0.5; N_FEATURES];
        f[2] = x;
        f[5] = ((i * 7919) % 300) as f64 / 300.0;
        rows.push(FeatureRow {
            label: if x < 0.5 { "lo" } else { "hi" }.into(),
            features: f,
        });
    }
    let ds = Dataset::new(rows);
    let (tr, te) = split(&ds, 0.2, 1).unwrap();
    let p = ModelParams {
        forest: ForestParams { n_trees: 30, ..Default::default() },
        ..Default::default()
    };
    for kind in ModelKind::ALL {
        let m = train(kind, &tr, &p).unwrap();
        let metrics: Metrics = evaluate(&m, &te).unwrap();
        assert!(metrics.macro_f1 > 0.95, "{kind}: {}", metrics.macro_f1);
        let again = evaluate(&m, &te).unwrap();
        assert_eq!(again.confusion, metrics.confusion);
        assert_eq!(again.macro_f1, metrics.macro_f1);
        for (c, row) in metrics.confusion.iter().enumerate() {
            let n = te.rows.iter().filter(|r| r.label == metrics.classes[c]).count();
            assert_eq!(row.iter().sum::<usize>(), n);
        }
    }
}

#[test]
fn evaluate_rejects_empty_and_unknown() {
    let ds = Dataset::new(
        (0..20)
            .map(|i| FeatureRow {
                label: if i % 2 == 0 { "a" } else { "b" }.into(),
                features: [i as f64 + 1.0; N_FEATURES],
            })
            .collect(),
    );
    let m = train(ModelKind::Dt, &ds, &ModelParams::default()).unwrap();
    assert!(evaluate(&m, &Dataset::default()).is_err());
    let alien = Dataset::new(vec![FeatureRow {
        label: "zzz".into(),
        features: [1.0; N_FEATURES],
    }]);
    assert!(evaluate(&m, &alien).is_err());
}
