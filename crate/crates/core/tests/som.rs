mod common;

use std::collections::BTreeSet;

use pdakit_core::som::{adjacent_pairs, cluster_sequences, hex_distance, mine_latent_states, MiningConfig, SomConfig, SomModel};
use proptest::prelude::*;
use rand::Rng;

fn blobs(seed: u64, per: usize) -> (Vec<Vec<f64>>, Vec<usize>) {
    let mut rng = common::rng(seed);
    let centres = [[0.0, 0.0], [4.0, 0.0], [0.0, 4.0]];
    let mut x = Vec::new();
    let mut y = Vec::new();
    for (c, centre) in centres.iter().enumerate() {
        for _ in 0..per {
            x.push(centre.iter().map(|v| v + rng.random_range(-0.3..0.3)).collect());
            y.push(c);
        }
    }
    (x, y)
}

fn quick() -> SomConfig {
    SomConfig {
        iterations: 400,
        epochs: 5,
        ..SomConfig::default()
    }
}

#[test]
fn hex_grid_has_six_interior_neighbours() {
    for sn in 3..8 {
        let pairs = adjacent_pairs(sn);
        let mut degree = vec![0; sn * sn];
        for (i, j) in &pairs {
            degree[*i] += 1;
            degree[*j] += 1;
        }
        for r in 1..sn - 1 {
            for c in 1..sn - 1 {
                assert_eq!(degree[r * sn + c], 6, "sn {sn} ({r},{c})");
            }
        }
        assert!(degree.iter().all(|&d| (2..=6).contains(&d)));
    }
}

#[test]
fn training_reduces_quantization_error_and_separates_blobs() {
    let (x, y) = blobs(1, 60);
    for seed in 0..5 {
        let som = SomModel::train(&x, 4, quick(), seed).unwrap();
        assert!(som.final_qe <= som.initial_qe);
        assert_eq!(som.hits.iter().sum::<usize>(), x.len());
        let labels = som.map(&x).unwrap();
        // no neuron wins samples from two blobs
        for j in 0..som.n_neurons() {
            let owners: BTreeSet<usize> = (0..x.len()).filter(|&i| labels[i] == j).map(|i| y[i]).collect();
            assert!(owners.len() <= 1, "seed {seed} neuron {j} holds {owners:?}");
        }
    }
}

#[test]
fn mined_states_are_disjoint_and_pass_every_filter() {
    let (x, _) = blobs(2, 80);
    let (seqs, models) = cluster_sequences(&x, 3, &quick(), 5).unwrap();
    let mut never = |_: &[usize]| Ok(false);
    let mined = mine_latent_states(&seqs, &models, &MiningConfig::default(), &mut never).unwrap();
    let mut seen = BTreeSet::new();
    for s in mined.states.iter().chain(&mined.discarded_small) {
        for &i in &s.members {
            assert!(seen.insert(i), "sample {i} in two states");
            for g in 0..3 {
                let lab = seqs.labels[i][g];
                let hits = seqs.labels.iter().filter(|l| l[g] == lab).count() as f64;
                assert!(hits >= mined.thresholds[g]);
            }
        }
    }
    assert_eq!(mined.survivors[0], x.len());
    assert!(mined.survivors.windows(2).all(|w| w[0] >= w[1]));
    assert_eq!(*mined.survivors.last().unwrap(), mined.total());
    // three separated blobs are found as three states
    assert_eq!(mined.states.len(), 3);
}

#[test]
fn normal_closure_removes_states() {
    let (x, y) = blobs(3, 80);
    let (seqs, models) = cluster_sequences(&x, 3, &quick(), 6).unwrap();
    let mut first_blob = |rows: &[usize]| Ok(rows.iter().all(|&i| y[i] == 0));
    let mined = mine_latent_states(&seqs, &models, &MiningConfig::default(), &mut first_blob).unwrap();
    assert_eq!(mined.removed_normal.len(), 1);
    assert!(mined.states.iter().all(|s| s.members.iter().all(|&i| y[i] != 0)));
    assert_eq!(mined.removed_normal[0].id, "N1");
}

proptest! {
    #[test]
    fn hex_distance_is_a_metric(sn in 2usize..9, a in 0usize..64, b in 0usize..64, c in 0usize..64) {
        let n = sn * sn;
        let (a, b, c) = (a % n, b % n, c % n);
        prop_assert_eq!(hex_distance(sn, a, b), hex_distance(sn, b, a));
        prop_assert_eq!(hex_distance(sn, a, a), 0);
        prop_assert!(hex_distance(sn, a, c) <= hex_distance(sn, a, b) + hex_distance(sn, b, c));
        if a != b {
            prop_assert!(hex_distance(sn, a, b) >= 1);
        }
    }

    #[test]
    fn winner_is_the_nearest_neuron(seed in 0u64..2000, q in prop::collection::vec(-2.0f64..2.0, 3)) {
        let mut rng = common::rng(seed);
        let data: Vec<Vec<f64>> = (0..20).map(|_| (0..3).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let som = SomModel::init(&data, 3, SomConfig::default(), seed).unwrap();
        let d = |w: &Vec<f64>| w.iter().zip(&q).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
        let best = som.weights.iter().map(d).fold(f64::INFINITY, f64::min);
        prop_assert_eq!(d(&som.weights[som.winner(&q)]), best);
    }
}
