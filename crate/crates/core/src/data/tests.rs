use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::*;
use crate::matrix::Matrix;
use crate::model::DataKind;

fn gaussian_matrix(n: usize, d: usize, seed: u64) -> Matrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..n * d).map(|i| 5.0 + (i % d) as f64 + 2.0 * rng.sample::<f64, _>(StandardNormal)).collect();
    Matrix::new(n, d, data).unwrap()
}

fn dataset(n: usize, d: usize) -> Dataset {
    Dataset::with_random_splits("g", gaussian_matrix(n, d, 1), DataKind::Continuous, 0.8, 0.1, 2).unwrap()
}

#[test]
fn splits_are_disjoint_and_cover() {
    let ds = dataset(101, 2);
    let mut all: Vec<usize> = ds.train.iter().chain(&ds.valid).chain(&ds.test).copied().collect();
    all.sort();
    assert_eq!(all, (0..101).collect::<Vec<_>>());
    assert!(Dataset::new("bad", Matrix::zeros(3, 1), DataKind::Continuous, vec![0, 1], vec![1], vec![2]).is_err());
    assert!(Dataset::new("bad", Matrix::zeros(3, 1), DataKind::Continuous, vec![0], vec![1], vec![]).is_err());
}

#[test]
fn standardized_training_split_has_unit_moments() {
    let ds = dataset(2000, 3).standardize().unwrap();
    let tr = ds.split(Split::Train);
    for (m, s) in tr.column_means().iter().zip(tr.column_stds()) {
        assert!(m.abs() < 1e-9);
        assert!((s - 1.0).abs() < 1e-9);
    }
}

#[test]
fn destandardize_round_trip() {
    let raw = dataset(500, 4);
    let ds = raw.standardize().unwrap();
    let back = ds.standardizer.as_ref().unwrap().invert(&ds.x).unwrap();
    for (a, b) in back.as_slice().iter().zip(raw.x.as_slice()) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn zero_variance_column_is_named() {
    let x = Matrix::new(4, 2, vec![1.0, 3.0, 2.0, 3.0, 3.0, 3.0, 4.0, 3.0]).unwrap();
    let ds = Dataset::new("c", x, DataKind::Continuous, vec![0, 1, 2], vec![3], vec![]).unwrap();
    let e = ds.standardize().unwrap_err().to_string();
    assert!(e.contains("column 1"), "{e}");
}

#[test]
fn noise_fraction_zero_is_identity() {
    let ds = dataset(1250, 10);
    let out = inject_noise(&ds, 0.0, NoiseSpec::default(), 3).unwrap();
    assert_eq!(out.dataset.x, ds.x);
    assert_eq!(out.modified(), 0);
}

#[test]
fn noise_with_zero_scale_is_identity() {
    let ds = dataset(1250, 10);
    let out = inject_noise(&ds, 1.0, NoiseSpec { scale: 0.0 }, 3).unwrap();
    assert_eq!(out.dataset.x, ds.x);
}

#[test]
fn noise_count_contract() {
    // 1250 rows with an 80% training split: a 1000 x 10 training matrix.
    let ds = dataset(1250, 10);
    assert_eq!(ds.train.len(), 1000);
    let out = inject_noise(&ds, 0.1, NoiseSpec::default(), 3).unwrap();
    assert_eq!(out.modified(), 1000);
    let changed = out.dataset.x.as_slice().iter().zip(ds.x.as_slice()).filter(|(a, b)| a != b).count();
    assert_eq!(changed, 1000);
    let held_out: Vec<usize> = ds.valid.iter().chain(&ds.test).copied().collect();
    assert_eq!(out.dataset.x.select_rows(&held_out), ds.x.select_rows(&held_out));
    assert!(inject_noise(&ds, 1.5, NoiseSpec::default(), 3).is_err());
    assert!(inject_noise(&ds, -0.1, NoiseSpec::default(), 3).is_err());
}

#[test]
fn generators_are_seed_deterministic() {
    assert_eq!(toy2d("two-rings", 300, 5).unwrap().0, toy2d("two-rings", 300, 5).unwrap().0);
    assert_eq!(regression_dataset(100, 2).unwrap(), regression_dataset(100, 2).unwrap());
    let a = make_ood_corpus(SYNTH_OOD, 1).unwrap();
    let b = make_ood_corpus(SYNTH_OOD, 1).unwrap();
    assert_eq!((a.dataset, a.labels), (b.dataset, b.labels));
}
