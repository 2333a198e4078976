mod common;

use pdakit_core::features::FeatureMatrix;
use pdakit_core::select::{build_hi_set, fisher_scores, pearson, select_features, LabeledFaultSet, SelectOptions};
use proptest::prelude::*;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

fn matrix(rows: &[Vec<f64>], labels: &[String]) -> FeatureMatrix {
    let d = rows[0].len();
    let mut m = FeatureMatrix::empty((0..d).map(|k| format!("f{k}")).collect());
    for (i, r) in rows.iter().enumerate() {
        m.push(format!("r{i}"), labels.get(i).cloned(), r.clone(), vec![]).unwrap();
    }
    m
}

/// Fault rows with per-class offsets and a normal set around the origin.
fn random_sets(rng: &mut ChaCha8Rng, classes: usize, d: usize) -> (Vec<Vec<f64>>, Vec<String>, Vec<Vec<f64>>) {
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for c in 0..classes {
        let shift: Vec<f64> = (0..d).map(|_| rng.random_range(-2.0..2.0)).collect();
        for _ in 0..rng.random_range(4..12) {
            rows.push(shift.iter().map(|s| s + rng.random_range(-1.0..1.0)).collect());
            labels.push(format!("F{c}"));
        }
    }
    let normal = (0..15).map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    (rows, labels, normal)
}

/// Between-class over pooled within-class scatter of one column.
fn oracle_fisher(a: &[f64], b: &[f64]) -> f64 {
    let ma = a.iter().sum::<f64>() / a.len() as f64;
    let mb = b.iter().sum::<f64>() / b.len() as f64;
    let sa = a.iter().map(|x| (x - ma) * (x - ma)).sum::<f64>() / a.len() as f64;
    let sb = b.iter().map(|x| (x - mb) * (x - mb)).sum::<f64>() / b.len() as f64;
    (ma - mb) * (ma - mb) / (sa + sb)
}

#[test]
fn scores_match_direct_evaluation() {
    let mut rng = common::rng(5);
    for _ in 0..30 {
        let (rows, labels, normal) = random_sets(&mut rng, 3, 6);
        let faults = LabeledFaultSet::from_labels(matrix(&rows, &labels)).unwrap();
        let table = fisher_scores(&faults, &matrix(&normal, &[])).unwrap();
        for (c, name) in table.class_names.iter().enumerate() {
            for d in 0..6 {
                let a: Vec<f64> = rows.iter().zip(&labels).filter(|(_, l)| *l == name).map(|(r, _)| r[d]).collect();
                let b: Vec<f64> = normal.iter().map(|r| r[d]).collect();
                let want = oracle_fisher(&a, &b);
                assert!((table.scores[c][d] - want).abs() <= 1e-12 * want.max(1.0));
            }
        }
    }
}

#[test]
fn separated_constant_columns_score_infinity() {
    let rows = vec![vec![1.0, 0.0], vec![1.0, 1.0]];
    let faults = LabeledFaultSet::from_labels(matrix(&rows, &["A".into(), "A".into()])).unwrap();
    let normal = matrix(&[vec![0.0, 0.5], vec![0.0, 0.7]], &[]);
    let t = fisher_scores(&faults, &normal).unwrap();
    assert_eq!(t.scores[0][0], f64::INFINITY);
    let json = serde_json::to_string(&t).unwrap();
    let back: pdakit_core::select::FisherTable = serde_json::from_str(&json).unwrap();
    assert_eq!(back, t);
    // the selection built on it carries an infinite threshold
    let sel = select_features(&faults, &normal, &SelectOptions::default()).unwrap();
    assert_eq!(sel.per_class[0].threshold, f64::INFINITY);
    let json = serde_json::to_string(&sel).unwrap();
    let back: pdakit_core::select::Selection = serde_json::from_str(&json).unwrap();
    assert_eq!(back, sel);
}

#[test]
fn every_retained_dimension_clears_half_the_maximum() {
    let mut rng = common::rng(6);
    for _ in 0..30 {
        let (rows, labels, normal) = random_sets(&mut rng, 2, 8);
        let faults = LabeledFaultSet::from_labels(matrix(&rows, &labels)).unwrap();
        let sel = select_features(&faults, &matrix(&normal, &[]), &SelectOptions::default()).unwrap();
        for (c, cs) in sel.per_class.iter().enumerate() {
            let scores = &sel.table.scores[c];
            let max = scores.iter().cloned().fold(0.0, f64::max);
            for &d in &cs.retained {
                assert!(scores[d] >= 0.5 * max);
            }
            // no two retained dimensions stay highly correlated within the class
            let class = faults.class_matrix(c);
            for (i, &p) in cs.retained.iter().enumerate() {
                for &q in &cs.retained[i + 1..] {
                    if let Some(r) = pearson(&class.column(p), &class.column(q)) {
                        assert!(r.abs() <= 0.95);
                    }
                }
            }
        }
        let mut dims = sel.dims.clone();
        dims.sort_unstable();
        dims.dedup();
        assert_eq!(dims, sel.dims);
    }
}

#[test]
fn duplicated_column_is_dropped() {
    let mut rng = common::rng(8);
    let (mut rows, labels, mut normal) = random_sets(&mut rng, 1, 3);
    for r in rows.iter_mut().chain(normal.iter_mut()) {
        let dup = 2.0 * r[0] + 1.0;
        r.push(dup);
    }
    let faults = LabeledFaultSet::from_labels(matrix(&rows, &labels)).unwrap();
    let sel = select_features(&faults, &matrix(&normal, &[]), &SelectOptions::default()).unwrap();
    assert!(!(sel.dims.contains(&0) && sel.dims.contains(&3)));
}

#[test]
fn hi_set_covers_every_pair() {
    let mut rng = common::rng(9);
    let (rows, labels, normal) = random_sets(&mut rng, 4, 10);
    let faults = LabeledFaultSet::from_labels(matrix(&rows, &labels)).unwrap();
    let hi = build_hi_set(&faults, &matrix(&normal, &[]), "NS").unwrap();
    let pairs: usize = hi.provenance.iter().map(Vec::len).sum();
    // 6 fault pairs plus 4 fault-normal pairs
    assert_eq!(pairs, 10);
    assert!(hi.idx.windows(2).all(|w| w[0] < w[1]));
}

proptest! {
    #[test]
    fn correlation_is_bounded_and_symmetric(
        a in prop::collection::vec(-1e3f64..1e3, 2..40),
        seed in 0u64..1000,
    ) {
        let mut rng = common::rng(seed);
        let b: Vec<f64> = a.iter().map(|x| x * rng.random_range(-2.0..2.0) + rng.random_range(-1.0..1.0)).collect();
        if let Some(r) = pearson(&a, &b) {
            prop_assert!(r.abs() <= 1.0 + 1e-12);
            prop_assert_eq!(Some(r), pearson(&b, &a));
        }
    }

    #[test]
    fn fisher_ignores_translation(seed in 0u64..500, shift in -100.0f64..100.0) {
        let mut rng = common::rng(seed);
        let (rows, labels, normal) = random_sets(&mut rng, 2, 4);
        let moved = |m: &[Vec<f64>]| -> Vec<Vec<f64>> { m.iter().map(|r| r.iter().map(|x| x + shift).collect()).collect() };
        let f0 = LabeledFaultSet::from_labels(matrix(&rows, &labels)).unwrap();
        let f1 = LabeledFaultSet::from_labels(matrix(&moved(&rows), &labels)).unwrap();
        let t0 = fisher_scores(&f0, &matrix(&normal, &[])).unwrap();
        let t1 = fisher_scores(&f1, &matrix(&moved(&normal), &[])).unwrap();
        for (r0, r1) in t0.scores.iter().zip(&t1.scores) {
            for (a, b) in r0.iter().zip(r1) {
                prop_assert!((a - b).abs() <= 1e-6 * a.max(1.0));
            }
        }
    }
}
