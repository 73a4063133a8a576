//! Squared maximum mean discrepancy with a mixture-of-Gaussians kernel.

use std::fmt;
use std::str::FromStr;

use rand::RngCore;
use serde::{Deserialize, Serialize};
use trade_autodiff::{Graph, Var};

use crate::error::{config_err, Result, TradeError};
use crate::matrix::Matrix;
use crate::model::{AutoregressiveModel, DiffSampleOptions};
use crate::nn::Ctx;

/// `k(x, y) = Σ_j exp(−‖x − y‖² / σ_j²)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub bandwidths: Vec<f64>,
}

impl Default for KernelSpec {
    fn default() -> Self {
        KernelSpec {
            bandwidths: vec![1.0, 2.0, 4.0, 8.0, 16.0],
        }
    }
}

impl KernelSpec {
    pub fn new(bandwidths: Vec<f64>) -> Result<Self> {
        let spec = KernelSpec { bandwidths };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.bandwidths.is_empty() || self.bandwidths.iter().any(|&b| !(b > 0.0 && b.is_finite())) {
            return Err(config_err(format!("kernel bandwidths must be positive, got {:?}", self.bandwidths)));
        }
        Ok(())
    }

    fn at_sq_dist(&self, d2: f64) -> f64 {
        self.bandwidths.iter().map(|b| (-d2 / (b * b)).exp()).sum()
    }
}

pub fn kernel_eval(x: &[f64], y: &[f64], spec: &KernelSpec) -> Result<f64> {
    if x.len() != y.len() {
        return Err(TradeError::Input(format!("kernel arguments have dimensions {} and {}", x.len(), y.len())));
    }
    Ok(spec.at_sq_dist(sq_dist(x, y)))
}

fn sq_dist(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum()
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    /// V-statistic, diagonal terms included; never negative.
    #[default]
    Biased,
    /// U-statistic, diagonal terms excluded within each sample.
    Unbiased,
}

impl FromStr for EstimatorKind {
    type Err = TradeError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "biased" => Ok(EstimatorKind::Biased),
            "unbiased" => Ok(EstimatorKind::Unbiased),
            _ => Err(config_err(format!("estimator must be biased or unbiased, got `{s}`"))),
        }
    }
}

impl fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EstimatorKind::Biased => "biased",
            EstimatorKind::Unbiased => "unbiased",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MmdEstimate {
    pub value: f64,
    pub kind: EstimatorKind,
    pub n: usize,
    pub m: usize,
}

/// Mean kernel value over row pairs; one squared distance per pair is shared
/// by every bandwidth.
fn mean_kernel(x: &Matrix, y: &Matrix, spec: &KernelSpec, exclude_diagonal: bool) -> f64 {
    let mut total = 0.0;
    for a in 0..x.rows() {
        let xa = x.row(a);
        let mut row = 0.0;
        for b in 0..y.rows() {
            if exclude_diagonal && a == b {
                continue;
            }
            row += spec.at_sq_dist(sq_dist(xa, y.row(b)));
        }
        total += row;
    }
    let pairs = if exclude_diagonal { x.rows() * (y.rows() - 1) } else { x.rows() * y.rows() };
    total / pairs as f64
}

fn check_sizes(n: usize, m: usize, dx: usize, dy: usize, kind: EstimatorKind) -> Result<()> {
    if dx != dy {
        return Err(TradeError::Input(format!("MMD samples have dimensions {dx} and {dy}")));
    }
    let min = match kind {
        EstimatorKind::Biased => 1,
        EstimatorKind::Unbiased => 2,
    };
    if n < min || m < min {
        return Err(TradeError::Input(format!("{kind} MMD needs at least {min} rows per sample, got {n} and {m}")));
    }
    Ok(())
}

/// `E k(x, x′) − 2 E k(x, y) + E k(y, y′)` from samples.
pub fn mmd2(x: &Matrix, y: &Matrix, spec: &KernelSpec, kind: EstimatorKind) -> Result<MmdEstimate> {
    spec.validate()?;
    check_sizes(x.rows(), y.rows(), x.cols(), y.cols(), kind)?;
    let within = kind == EstimatorKind::Unbiased;
    let kxx = mean_kernel(x, x, spec, within);
    let kyy = mean_kernel(y, y, spec, within);
    let kxy = mean_kernel(x, y, spec, false);
    Ok(MmdEstimate {
        value: kxx + kyy - 2.0 * kxy,
        kind,
        n: x.rows(),
        m: y.rows(),
    })
}

/// [`mmd2`] on the tape; gradients flow into `x` and `y` if they carry any.
pub fn mmd2_tape(g: &mut Graph<f64>, x: Var, y: Var, spec: &KernelSpec, kind: EstimatorKind) -> Result<Var> {
    spec.validate()?;
    let (sx, sy) = (g.shape(x).to_vec(), g.shape(y).to_vec());
    if sx.len() != 2 || sy.len() != 2 {
        return Err(TradeError::Input(format!("MMD samples must be matrices, got shapes {sx:?} and {sy:?}")));
    }
    check_sizes(sx[0], sy[0], sx[1], sy[1], kind)?;
    let within = kind == EstimatorKind::Unbiased;
    let kxx = g.kernel_mean(x, x, &spec.bandwidths, within)?;
    let kyy = g.kernel_mean(y, y, &spec.bandwidths, within)?;
    let kxy = g.kernel_mean(x, y, &spec.bandwidths, false)?;
    let same = g.add(kxx, kyy)?;
    let cross = g.scale(kxy, 2.0);
    Ok(g.sub(same, cross)?)
}

#[derive(Clone, Debug, PartialEq)]
pub struct MmdOptions {
    pub kernel: KernelSpec,
    pub estimator: EstimatorKind,
    pub sampling: DiffSampleOptions,
}

impl Default for MmdOptions {
    fn default() -> Self {
        MmdOptions {
            kernel: KernelSpec::default(),
            estimator: EstimatorKind::Biased,
            sampling: DiffSampleOptions::default(),
        }
    }
}

/// MMD² between a real batch and `n_model` differentiable model samples.
pub fn mmd_penalty<M: AutoregressiveModel + ?Sized>(
    g: &mut Graph<f64>,
    ctx: &mut Ctx<'_>,
    model: &M,
    real: &Matrix,
    n_model: usize,
    opts: &MmdOptions,
    rng: &mut dyn RngCore,
) -> Result<Var> {
    let samples = model.sample_differentiable(g, ctx, n_model, opts.sampling, rng)?;
    let x = g.constant(vec![real.rows(), real.cols()], real.as_slice().to_vec())?;
    mmd2_tape(g, x, samples, &opts.kernel, opts.estimator)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kernel_basics() {
        let spec = KernelSpec::default();
        assert_eq!(kernel_eval(&[0.3, -1.0], &[0.3, -1.0], &spec).unwrap(), 5.0);
        let one = KernelSpec::new(vec![1.0]).unwrap();
        assert!((kernel_eval(&[0.0], &[1.0], &one).unwrap() - 0.367_879_441_171_442_3).abs() < 1e-15);
        assert_eq!(kernel_eval(&[0.1, 2.0], &[-0.4, 0.3], &spec).unwrap(), kernel_eval(&[-0.4, 0.3], &[0.1, 2.0], &spec).unwrap());
        assert!(kernel_eval(&[0.0], &[0.0, 1.0], &spec).is_err());
        assert!(KernelSpec::new(vec![]).is_err());
        assert!(KernelSpec::new(vec![1.0, 0.0]).is_err());
    }

    #[test]
    fn identical_samples_give_zero() {
        let x = Matrix::new(3, 2, vec![0.1, 0.2, -1.0, 3.0, 0.5, 0.5]).unwrap();
        assert_eq!(mmd2(&x, &x, &KernelSpec::default(), EstimatorKind::Biased).unwrap().value, 0.0);
    }

    #[test]
    fn empty_and_undersized_inputs_error() {
        let spec = KernelSpec::default();
        let one = Matrix::new(1, 1, vec![0.0]).unwrap();
        assert!(mmd2(&Matrix::zeros(0, 1), &one, &spec, EstimatorKind::Biased).is_err());
        assert!(mmd2(&one, &one, &spec, EstimatorKind::Unbiased).is_err());
        assert!(mmd2(&one, &one, &spec, EstimatorKind::Biased).is_ok());
    }
}
