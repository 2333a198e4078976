mod common;

use pdakit_core::kpca::{median_heuristic_gamma, Components, KernelKind, KpcaConfig, KpcaModel};
use pdakit_core::Error;
use proptest::prelude::*;
use rand::Rng;

fn random_rows(seed: u64, n: usize, m: usize) -> Vec<Vec<f64>> {
    let mut rng = common::rng(seed);
    (0..n).map(|_| (0..m).map(|k| (k + 1) as f64 * rng.random_range(-1.0..1.0)).collect()).collect()
}

fn linear(d: usize) -> KpcaConfig {
    KpcaConfig {
        kernel: KernelKind::Linear,
        gamma: None,
        components: Components::Fixed(d),
    }
}

#[test]
fn new_points_project_like_covariance_pca() {
    // fit on the first rows, project held-out rows, and compare with the
    // oracle's loadings applied to the same centred points
    let x = random_rows(3, 40, 4);
    let model = KpcaModel::fit(&x[..30], &linear(2)).unwrap();
    let all = common::covariance_pca(&x[..30], 2);
    assert!(common::max_dev_up_to_sign(&all, &model.transform(&x[..30]).unwrap()) < 1e-8);
    let fitted = model.fitted_projections();
    assert!(common::max_dev_up_to_sign(&all, &fitted) < 1e-8);
    // the projection is linear in the input for the linear kernel
    let a = model.project(&x[31]).unwrap();
    let b = model.project(&x[32]).unwrap();
    let mid: Vec<f64> = x[31].iter().zip(&x[32]).map(|(p, q)| 0.5 * (p + q)).collect();
    let c = model.project(&mid).unwrap();
    for k in 0..2 {
        assert!((c[k] - 0.5 * (a[k] + b[k])).abs() < 1e-10);
    }
}

#[test]
fn gaussian_spectrum_is_ordered_and_energy_consistent() {
    let x = random_rows(4, 30, 3);
    let cfg = KpcaConfig::default();
    let model = KpcaModel::fit(&x, &cfg).unwrap();
    assert!(model.eigenvalues.windows(2).all(|w| w[0] >= w[1]));
    let positive: f64 = model.eigenvalues.iter().filter(|&&l| l > 0.0).sum();
    let top: f64 = model.eigenvalues[..6].iter().sum();
    assert!((model.retained_energy - top / positive).abs() < 1e-12);
    match model.kernel {
        pdakit_core::kpca::Kernel::Gaussian { gamma } => assert_eq!(gamma, median_heuristic_gamma(&x).unwrap()),
        _ => panic!("expected gaussian kernel"),
    }
    // centred projections of the training set have zero mean
    let proj = model.transform(&x).unwrap();
    for k in 0..6 {
        let mean = proj.iter().map(|p| p[k]).sum::<f64>() / proj.len() as f64;
        assert!(mean.abs() < 1e-9);
    }
}

#[test]
fn retain_picks_the_smallest_sufficient_count() {
    let x = random_rows(5, 25, 4);
    let full = KpcaModel::fit(&x, &linear(4)).unwrap();
    let cfg = KpcaConfig {
        components: Components::Retain(0.9),
        ..linear(1)
    };
    let m = KpcaModel::fit(&x, &cfg).unwrap();
    let total: f64 = full.eigenvalues.iter().filter(|&&l| l > 0.0).sum();
    let share = |d: usize| full.eigenvalues[..d].iter().sum::<f64>() / total;
    assert!(share(m.d) >= 0.9 - 1e-12);
    assert!(m.d == 1 || share(m.d - 1) < 0.9);
}

#[test]
fn rank_limits_components() {
    // rank-2 data cannot give three linear components
    let x: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64, (i * i) as f64, 2.0 * i as f64]).collect();
    let err = KpcaModel::fit(&x, &linear(3)).unwrap_err();
    assert!(matches!(err, Error::TooManyComponents { requested: 3, available: 2 }));
}

proptest! {
    #[test]
    fn linear_kernel_equals_covariance_pca(seed in 0u64..10_000, n in 8usize..30, m in 2usize..6) {
        let x = random_rows(seed, n, m);
        let d = m.min(2);
        let model = KpcaModel::fit(&x, &linear(d)).unwrap();
        let dev = common::max_dev_up_to_sign(&common::covariance_pca(&x, d), &model.transform(&x).unwrap());
        prop_assert!(dev <= 1e-8, "deviation {}", dev);
    }
}
