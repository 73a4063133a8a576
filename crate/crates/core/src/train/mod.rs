//! Penalized maximum-likelihood training.

mod adam;
mod fit;

use rand::RngCore;
use serde::{Deserialize, Serialize};
use trade_autodiff::{Graph, Var};

pub use adam::{clip_global_norm, Adam, ADAM_EPS, BETA1, BETA2};
pub use fit::{fit, EpochRecord, FitResult};

use crate::error::{config_err, Result};
use crate::matrix::Matrix;
use crate::mmd::{mmd_penalty, EstimatorKind, KernelSpec, MmdOptions};
use crate::model::{encode_input, log_conditionals, AutoregressiveModel, DiffSampleOptions, Selection};
use crate::nn::Ctx;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Weight of the MMD² penalty.
    pub lambda: f64,
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub weight_decay: f64,
    pub clip_norm: f64,
    pub seed: u64,
    pub estimator: EstimatorKind,
    /// Model samples per penalty evaluation; the batch size when unset.
    pub n_model: Option<usize>,
    /// Drop the likelihood term and train on `λ·MMD²` alone.
    pub mmd_only: bool,
    /// Omit wall-clock times from the metric log so that logs compare equal.
    pub deterministic: bool,
    /// Gumbel-softmax temperature for discrete and mixture selections.
    pub tau: f64,
    pub kernel: KernelSpec,
    /// Model feature `i` reads data column `feature_order[i]`.
    pub feature_order: Option<Vec<usize>>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lambda: 0.1,
            lr: 5e-4,
            batch_size: 256,
            epochs: 1000,
            weight_decay: 0.0,
            clip_norm: 5.0,
            seed: 0,
            estimator: EstimatorKind::Biased,
            n_model: None,
            mmd_only: false,
            deterministic: false,
            tau: 1.5,
            kernel: KernelSpec::default(),
            feature_order: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(config_err(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        if !(self.lr > 0.0) {
            return Err(config_err(format!("learning rate must be positive, got {}", self.lr)));
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(config_err("batch size and epochs must be at least 1"));
        }
        if !(self.clip_norm > 0.0) {
            return Err(config_err(format!("clip norm must be positive, got {}", self.clip_norm)));
        }
        if !(self.weight_decay >= 0.0) {
            return Err(config_err(format!("weight decay must be >= 0, got {}", self.weight_decay)));
        }
        if !(self.tau > 0.0) {
            return Err(config_err(format!("temperature must be positive, got {}", self.tau)));
        }
        if self.n_model == Some(0) {
            return Err(config_err("n_model must be at least 1"));
        }
        if self.mmd_only && self.lambda == 0.0 {
            return Err(config_err("mmd_only training needs lambda > 0"));
        }
        self.kernel.validate()
    }

    pub fn mmd_options(&self) -> MmdOptions {
        MmdOptions {
            kernel: self.kernel.clone(),
            estimator: self.estimator,
            sampling: DiffSampleOptions {
                tau: self.tau,
                selection: Selection::StraightThrough,
            },
        }
    }

    fn uses_mmd(&self) -> bool {
        self.lambda > 0.0
    }
}

/// The training objective on the tape plus its logged parts.
pub struct LossTerms {
    pub total: Var,
    /// `−(1/(B·d)) Σ log q`.
    pub nll: f64,
    /// Unweighted MMD²; `None` when the penalty is switched off.
    pub mmd: Option<f64>,
}

/// `−(1/(B·d)) ΣΣ log q_i + λ·MMD²`. With `λ = 0` no samples are drawn and
/// `sample_rng` is left untouched; with `mmd_only` the likelihood term is
/// dropped.
pub fn loss<M: AutoregressiveModel + ?Sized>(
    g: &mut Graph<f64>,
    ctx: &mut Ctx<'_>,
    model: &M,
    batch: &Matrix,
    cfg: &TrainConfig,
    sample_rng: &mut dyn RngCore,
) -> Result<LossTerms> {
    let input = encode_input(g, model.kind(), batch)?;
    let heads = model.heads(g, ctx, input)?;
    let lc = log_conditionals(g, heads, batch)?;
    let mean = g.mean(lc);
    let nll_var = g.neg(mean);
    let nll = g.item(nll_var);
    if !cfg.uses_mmd() {
        return Ok(LossTerms { total: nll_var, nll, mmd: None });
    }
    let n_model = cfg.n_model.unwrap_or(batch.rows());
    let penalty = mmd_penalty(g, ctx, model, batch, n_model, &cfg.mmd_options(), sample_rng)?;
    let mmd = g.item(penalty);
    let weighted = g.scale(penalty, cfg.lambda);
    let total = if cfg.mmd_only { weighted } else { g.add(nll_var, weighted)? };
    Ok(LossTerms {
        total,
        nll,
        mmd: Some(mmd),
    })
}
