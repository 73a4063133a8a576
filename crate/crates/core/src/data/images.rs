use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::dataset::Dataset;
use crate::error::{data_err, Result};
use crate::matrix::Matrix;
use crate::model::DataKind;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Binarize {
    /// `pixel >= t` maps to 1, so a pixel exactly at the threshold rounds up.
    Threshold(f64),
    /// Bernoulli(pixel) draws.
    Stochastic { seed: u64 },
}

impl Default for Binarize {
    fn default() -> Self {
        Binarize::Threshold(0.5)
    }
}

pub fn binarize_images(x: &Matrix, mode: Binarize) -> Result<Matrix> {
    if let Some(i) = x.as_slice().iter().position(|v| !(0.0..=1.0).contains(v)) {
        return Err(data_err(format!(
            "pixel at row {}, column {} is {}, outside [0, 1]",
            i / x.cols().max(1),
            i % x.cols().max(1),
            x.as_slice()[i]
        )));
    }
    let data = match mode {
        Binarize::Threshold(t) => x.as_slice().iter().map(|&v| f64::from(v >= t)).collect(),
        Binarize::Stochastic { seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            x.as_slice().iter().map(|&v| f64::from(rng.random::<f64>() < v)).collect()
        }
    };
    Matrix::new(x.rows(), x.cols(), data)
}

/// Binarizes each split and builds a two-category discrete dataset.
pub fn binarize_dataset(name: &str, train: &Matrix, valid: &Matrix, test: &Matrix, mode: Binarize) -> Result<Dataset> {
    let salt = |k: u64| match mode {
        Binarize::Stochastic { seed } => Binarize::Stochastic { seed: seed.wrapping_add(k) },
        m => m,
    };
    let parts = [
        binarize_images(train, salt(0))?,
        binarize_images(valid, salt(1))?,
        binarize_images(test, salt(2))?,
    ];
    let kind = DataKind::Discrete {
        categories: vec![2; train.cols()],
    };
    let mut ds = Dataset::from_splits(name, kind, &parts[0], &parts[1], &parts[2])?;
    ds.note = format!("{name} binarized ({mode:?})");
    Ok(ds)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn threshold_rules() {
        let x = Matrix::new(1, 4, vec![0.0, 0.49, 0.5, 1.0]).unwrap();
        assert_eq!(binarize_images(&x, Binarize::default()).unwrap().as_slice(), &[0.0, 0.0, 1.0, 1.0]);
        let z = Matrix::zeros(2, 3);
        assert!(binarize_images(&z, Binarize::default()).unwrap().as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn stochastic_is_seeded() {
        let x = Matrix::new(2, 50, (0..100).map(|i| i as f64 / 99.0).collect()).unwrap();
        let a = binarize_images(&x, Binarize::Stochastic { seed: 7 }).unwrap();
        let b = binarize_images(&x, Binarize::Stochastic { seed: 7 }).unwrap();
        assert_eq!(a, b);
        assert!(a.as_slice().iter().all(|&v| v == 0.0 || v == 1.0));
    }

    #[test]
    fn out_of_range_pixels_error() {
        let x = Matrix::new(1, 2, vec![0.2, 1.5]).unwrap();
        assert!(binarize_images(&x, Binarize::default()).is_err());
        let x = Matrix::new(1, 1, vec![f64::NAN]).unwrap();
        assert!(binarize_images(&x, Binarize::default()).is_err());
    }
}
