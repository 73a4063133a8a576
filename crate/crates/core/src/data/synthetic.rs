use std::f64::consts::TAU;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::dataset::Dataset;
use crate::error::{data_err, Result};
use crate::matrix::Matrix;
use crate::model::{DataKind, LogDensity};

/// Mixture of axis-aligned Gaussians.
#[derive(Clone, Debug, PartialEq)]
pub struct DiagGaussianMixture {
    pub weights: Vec<f64>,
    pub means: Vec<Vec<f64>>,
    pub stds: Vec<Vec<f64>>,
}

impl DiagGaussianMixture {
    pub fn new(weights: Vec<f64>, means: Vec<Vec<f64>>, stds: Vec<Vec<f64>>) -> Result<Self> {
        let k = weights.len();
        let d = means.first().map_or(0, Vec::len);
        let total: f64 = weights.iter().sum();
        if k == 0 || d == 0 || means.len() != k || stds.len() != k || (total - 1.0).abs() > 1e-12 {
            return Err(data_err("mixture needs normalized weights and matching means/stds"));
        }
        if means.iter().chain(&stds).any(|v| v.len() != d) || stds.iter().flatten().any(|&s| !(s > 0.0)) {
            return Err(data_err("mixture means/stds must share one dimension and stds must be positive"));
        }
        Ok(DiagGaussianMixture { weights, means, stds })
    }

    pub fn d(&self) -> usize {
        self.means[0].len()
    }

    pub fn log_density_row(&self, x: &[f64]) -> f64 {
        let terms: Vec<f64> = (0..self.weights.len())
            .map(|k| {
                let mut t = self.weights[k].ln();
                for ((&v, &m), &s) in x.iter().zip(&self.means[k]).zip(&self.stds[k]) {
                    t += -0.5 * ((v - m) / s).powi(2) - s.ln() - 0.5 * TAU.ln();
                }
                t
            })
            .collect();
        let mx = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        mx + terms.iter().map(|t| (t - mx).exp()).sum::<f64>().ln()
    }

    pub fn sample(&self, n: usize, rng: &mut dyn RngCore) -> Matrix {
        let d = self.d();
        let mut data = Vec::with_capacity(n * d);
        for _ in 0..n {
            let u: f64 = rng.random();
            let mut acc = 0.0;
            let mut k = self.weights.len() - 1;
            for (i, w) in self.weights.iter().enumerate() {
                acc += w;
                if u < acc {
                    k = i;
                    break;
                }
            }
            for j in 0..d {
                let z: f64 = rng.sample(StandardNormal);
                data.push(self.means[k][j] + self.stds[k][j] * z);
            }
        }
        Matrix::new(n, d, data).expect("mixture sample shape")
    }
}

impl LogDensity for DiagGaussianMixture {
    fn dim(&self) -> usize {
        self.d()
    }

    fn log_density(&self, x: &Matrix) -> Result<Vec<f64>> {
        if x.cols() != self.d() {
            return Err(data_err(format!("mixture has {} dimensions, got {}", self.d(), x.cols())));
        }
        Ok((0..x.rows()).map(|r| self.log_density_row(x.row(r))).collect())
    }
}

/// The 1-D two-component mixture used for likelihood-recovery checks.
pub fn bimodal_1d() -> DiagGaussianMixture {
    DiagGaussianMixture::new(vec![0.4, 0.6], vec![vec![-1.5], vec![1.0]], vec![vec![0.4], vec![0.6]]).expect("valid mixture")
}

/// Differential entropy (nats) of a 1-D density by fine quadrature.
pub fn entropy_1d(mix: &DiagGaussianMixture) -> f64 {
    let (lo, hi, n) = (-12.0, 12.0, 200_000);
    let h = (hi - lo) / n as f64;
    (0..n)
        .map(|i| {
            let lp = mix.log_density_row(&[lo + (i as f64 + 0.5) * h]);
            -lp.exp() * lp * h
        })
        .sum()
}

pub fn mixture_dataset(name: &str, mix: &DiagGaussianMixture, n: usize, seed: u64) -> Result<Dataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = mix.sample(n, &mut rng);
    let mut ds = Dataset::with_random_splits(name, x, DataKind::Continuous, 0.8, 0.1, seed ^ 0x5eed)?;
    ds.note = format!("{name} n={n} seed={seed}");
    Ok(ds)
}

/// Number of features of [`regression_dataset`].
pub const REGRESSION_D: usize = 8;

/// Seven correlated inputs driven by three latent factors, and a target that
/// depends on them linearly plus one smooth nonlinearity:
/// `x8 = 0.9 x1 − 0.7 x2 + 0.6 sin(1.5 x3) + 0.4 ε`.
pub fn regression_dataset(n: usize, seed: u64) -> Result<Dataset> {
    const LOADINGS: [[f64; 3]; 7] = [
        [1.0, 0.0, 0.0],
        [0.0, 1.0, 0.0],
        [0.0, 0.0, 1.0],
        [0.6, 0.6, 0.0],
        [0.0, 0.7, -0.5],
        [0.5, 0.0, 0.5],
        [-0.4, 0.3, 0.6],
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data = Vec::with_capacity(n * REGRESSION_D);
    for _ in 0..n {
        let z: [f64; 3] = std::array::from_fn(|_| rng.sample(StandardNormal));
        let mut row = [0.0; REGRESSION_D];
        for (j, l) in LOADINGS.iter().enumerate() {
            let e: f64 = rng.sample(StandardNormal);
            row[j] = l.iter().zip(&z).map(|(a, b)| a * b).sum::<f64>() + 0.5 * e;
        }
        let e: f64 = rng.sample(StandardNormal);
        row[7] = 0.9 * row[0] - 0.7 * row[1] + 0.6 * (1.5 * row[2]).sin() + 0.4 * e;
        data.extend_from_slice(&row);
    }
    let x = Matrix::new(n, REGRESSION_D, data)?;
    let mut ds = Dataset::with_random_splits("regression8", x, DataKind::Continuous, 0.8, 0.1, seed ^ 0x5eed)?;
    ds.note = format!("regression8 n={n} seed={seed}");
    Ok(ds)
}
