use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{data_err, Result};
use crate::matrix::Matrix;
use crate::model::DataKind;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Valid,
    Test,
}

/// Per-feature affine normalization fitted on a training split.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    /// Population mean and standard deviation of each column; a column
    /// without spread is an error naming that column.
    pub fn fit(train: &Matrix) -> Result<Self> {
        if train.is_empty() {
            return Err(data_err("cannot fit normalization on an empty training split"));
        }
        let mean = train.column_means();
        let std = train.column_stds();
        for (c, (&s, &m)) in std.iter().zip(&mean).enumerate() {
            if !(s > 1e-12 * m.abs().max(1.0)) {
                return Err(data_err(format!("column {c} has zero variance in the training split")));
            }
        }
        Ok(Standardizer { mean, std })
    }

    pub fn apply(&self, x: &Matrix) -> Result<Matrix> {
        self.check(x)?;
        let mut out = x.clone();
        for r in 0..out.rows() {
            for ((v, m), s) in out.row_mut(r).iter_mut().zip(&self.mean).zip(&self.std) {
                *v = (*v - m) / s;
            }
        }
        Ok(out)
    }

    pub fn invert(&self, z: &Matrix) -> Result<Matrix> {
        self.check(z)?;
        let mut out = z.clone();
        for r in 0..out.rows() {
            for ((v, m), s) in out.row_mut(r).iter_mut().zip(&self.mean).zip(&self.std) {
                *v = *v * s + m;
            }
        }
        Ok(out)
    }

    /// `Σ ln σ_j`: subtract from a standardized-space log-density to obtain
    /// the data-space log-density.
    pub fn log_jacobian(&self) -> f64 {
        self.std.iter().map(|s| s.ln()).sum()
    }

    fn check(&self, x: &Matrix) -> Result<()> {
        if x.cols() != self.mean.len() {
            return Err(data_err(format!(
                "normalization fitted on {} columns, got {}",
                self.mean.len(),
                x.cols()
            )));
        }
        Ok(())
    }
}

/// Feature matrix with disjoint train/valid/test row sets.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub x: Matrix,
    pub kind: DataKind,
    pub train: Vec<usize>,
    pub valid: Vec<usize>,
    pub test: Vec<usize>,
    /// Set once the features have been standardized.
    pub standardizer: Option<Standardizer>,
    pub note: String,
}

impl Dataset {
    pub fn new(name: impl Into<String>, x: Matrix, kind: DataKind, train: Vec<usize>, valid: Vec<usize>, test: Vec<usize>) -> Result<Self> {
        let ds = Dataset {
            name: name.into(),
            x,
            kind,
            train,
            valid,
            test,
            standardizer: None,
            note: String::new(),
        };
        ds.check_splits()?;
        Ok(ds)
    }

    /// Shuffled split by fractions `(train, valid)`; the rest is test.
    pub fn with_random_splits(name: impl Into<String>, x: Matrix, kind: DataKind, train_frac: f64, valid_frac: f64, seed: u64) -> Result<Self> {
        if !(train_frac > 0.0 && valid_frac >= 0.0 && train_frac + valid_frac <= 1.0) {
            return Err(data_err(format!("invalid split fractions {train_frac}/{valid_frac}")));
        }
        let n = x.rows();
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let n_train = (train_frac * n as f64).round() as usize;
        let n_valid = ((valid_frac * n as f64).round() as usize).min(n - n_train);
        let test = idx.split_off(n_train + n_valid);
        let valid = idx.split_off(n_train);
        Dataset::new(name, x, kind, idx, valid, test)
    }

    /// Joins separately supplied split matrices.
    pub fn from_splits(name: impl Into<String>, kind: DataKind, train: &Matrix, valid: &Matrix, test: &Matrix) -> Result<Self> {
        let x = train.vstack(valid)?.vstack(test)?;
        let (a, b) = (train.rows(), train.rows() + valid.rows());
        Dataset::new(name, x, kind, (0..a).collect(), (a..b).collect(), (b..x_rows(a, valid, test)).collect())
    }

    pub fn d(&self) -> usize {
        self.x.cols()
    }

    pub fn indices(&self, split: Split) -> &[usize] {
        match split {
            Split::Train => &self.train,
            Split::Valid => &self.valid,
            Split::Test => &self.test,
        }
    }

    pub fn split(&self, split: Split) -> Matrix {
        self.x.select_rows(self.indices(split))
    }

    fn check_splits(&self) -> Result<()> {
        let n = self.x.rows();
        let mut seen = vec![false; n];
        for &i in self.train.iter().chain(&self.valid).chain(&self.test) {
            if i >= n {
                return Err(data_err(format!("split index {i} out of range for {n} rows")));
            }
            if std::mem::replace(&mut seen[i], true) {
                return Err(data_err(format!("row {i} appears in more than one split")));
            }
        }
        if let Some(i) = seen.iter().position(|s| !s) {
            return Err(data_err(format!("row {i} is in no split")));
        }
        Ok(())
    }

    /// Standardizes every split with training-split statistics.
    pub fn standardize(&self) -> Result<Dataset> {
        if self.kind.is_discrete() {
            return Err(data_err("standardization applies to continuous data only"));
        }
        if self.standardizer.is_some() {
            return Err(data_err(format!("dataset `{}` is already standardized", self.name)));
        }
        let s = Standardizer::fit(&self.split(Split::Train))?;
        let mut out = self.clone();
        out.x = s.apply(&self.x)?;
        out.standardizer = Some(s);
        Ok(out)
    }

    /// Keeps the first `n` training rows (valid/test untouched); rows
    /// dropped from training are removed from the matrix.
    pub fn subsample_train(&self, n: usize) -> Result<Dataset> {
        let keep: Vec<usize> = self.train.iter().copied().take(n).collect();
        let rows: Vec<usize> = keep.iter().chain(&self.valid).chain(&self.test).copied().collect();
        let x = self.x.select_rows(&rows);
        let (a, b) = (keep.len(), keep.len() + self.valid.len());
        let mut out = Dataset::new(self.name.clone(), x, self.kind.clone(), (0..a).collect(), (a..b).collect(), (b..rows.len()).collect())?;
        out.standardizer = self.standardizer.clone();
        out.note = format!("{} (training subsample of {n})", self.note);
        Ok(out)
    }
}

fn x_rows(a: usize, valid: &Matrix, test: &Matrix) -> usize {
    a + valid.rows() + test.rows()
}

pub fn standardize(dataset: &Dataset) -> Result<Dataset> {
    dataset.standardize()
}
