use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use trade_autodiff::Graph;

use super::{loss, Adam, TrainConfig};
use crate::data::{Dataset, Split};
use crate::error::{config_err, data_err, Result, TradeError};
use crate::matrix::Matrix;
use crate::model::{AutoregressiveModel, FittedModel, ModelConfig, TradeModel};
use crate::nn::Ctx;

/// One line of the metric log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean objective over the epoch's minibatches.
    pub train_loss: f64,
    /// Mean per-dimension NLL term.
    pub nll: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub mmd: Option<f64>,
    /// Validation NLL per sample, in data units.
    pub valid_nll: f64,
    pub valid_nll_per_dim: f64,
    pub best: bool,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub wall_time: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct FitResult {
    /// Parameters with the lowest validation NLL.
    pub best: FittedModel,
    pub last: FittedModel,
    pub log: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_valid_nll: f64,
    /// Test NLL of `best`, per sample and per dimension.
    pub test_nll: f64,
    pub test_nll_per_dim: f64,
}

/// Independent generator streams derived from one seed.
pub(crate) fn stream(seed: u64, k: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(k);
    rng
}

/// Trains a fresh model on the training split with best-validation
/// selection. `ds.x` is taken as data space: continuous features are
/// standardized with training-split statistics stored in the result.
/// `observer` sees every epoch record and, on improvement, the new best
/// model; an error from it stops training.
pub fn fit(
    ds: &Dataset,
    model_cfg: &ModelConfig,
    cfg: &TrainConfig,
    observer: &mut dyn FnMut(&EpochRecord, Option<&FittedModel>) -> Result<()>,
) -> Result<FitResult> {
    cfg.validate()?;
    model_cfg.validate()?;
    if model_cfg.d != ds.d() {
        return Err(config_err(format!("model has d={}, dataset `{}` has {} features", model_cfg.d, ds.name, ds.d())));
    }
    if model_cfg.kind != ds.kind {
        return Err(config_err(format!("model data kind {:?} does not match dataset kind {:?}", model_cfg.kind, ds.kind)));
    }
    if ds.train.is_empty() || ds.valid.is_empty() {
        return Err(data_err(format!("dataset `{}` needs non-empty training and validation splits", ds.name)));
    }
    let mut ds = ds.clone();
    ds.standardizer = None;
    if !ds.kind.is_discrete() {
        ds = ds.standardize()?;
    }
    let order = match &cfg.feature_order {
        Some(o) => {
            let mut seen = vec![false; ds.d()];
            for &c in o {
                if c >= ds.d() || std::mem::replace(&mut seen[c], true) {
                    return Err(config_err(format!("feature order {o:?} is not a permutation of 0..{}", ds.d())));
                }
            }
            if o.len() != ds.d() {
                return Err(config_err(format!("feature order {o:?} is not a permutation of 0..{}", ds.d())));
            }
            o.clone()
        }
        None => (0..ds.d()).collect(),
    };
    let kind = match &ds.kind {
        crate::model::DataKind::Discrete { categories } => crate::model::DataKind::Discrete {
            categories: order.iter().map(|&c| categories[c]).collect(),
        },
        k => k.clone(),
    };
    let model_cfg = ModelConfig { kind, ..model_cfg.clone() };
    let permute = |split| ds.split(split).select_columns(&order);
    let (train, valid, test) = (permute(Split::Train), permute(Split::Valid), permute(Split::Test));
    let log_jac = ds.standardizer.as_ref().map_or(0.0, |s| s.log_jacobian());
    let d = ds.d() as f64;

    let mut model = TradeModel::new(model_cfg, &mut stream(cfg.seed, 0))?;
    let mut shuffle_rng = stream(cfg.seed, 1);
    let mut dropout_rng = stream(cfg.seed, 2);
    let mut sample_rng = stream(cfg.seed, 3);
    let mut adam = Adam::new(model.params(), cfg.lr, cfg.weight_decay, cfg.clip_norm);
    let dropout = model.config().dropout;

    let wrap = |model: &TradeModel| FittedModel {
        model: model.clone(),
        standardizer: ds.standardizer.clone(),
        feature_order: order.clone(),
    };
    let mut best: Option<(FittedModel, usize, f64)> = None;
    let mut log = Vec::with_capacity(cfg.epochs);
    let start = Instant::now();
    let mut rows: Vec<usize> = (0..train.rows()).collect();
    for epoch in 1..=cfg.epochs {
        rows.shuffle(&mut shuffle_rng);
        let (mut loss_sum, mut nll_sum, mut mmd_sum, mut batches) = (0.0, 0.0, 0.0, 0usize);
        for (b, chunk) in rows.chunks(cfg.batch_size).enumerate() {
            let batch = train.select_rows(chunk);
            let mut g = Graph::new();
            let p = model.params().bind(&mut g, true);
            let mut ctx = Ctx::train(&p, dropout, &mut dropout_rng);
            let terms = loss(&mut g, &mut ctx, &model, &batch, cfg, &mut sample_rng)?;
            let value = g.item(terms.total);
            if !value.is_finite() {
                return Err(TradeError::Divergence {
                    epoch,
                    batch: b,
                    loss: value,
                    param_norm: model.params().norm(),
                });
            }
            g.backward(terms.total)?;
            let grads = model.params().grads(&g, &p);
            adam.step(model.params_mut(), grads)?;
            loss_sum += value;
            nll_sum += terms.nll;
            mmd_sum += terms.mmd.unwrap_or(0.0);
            batches += 1;
        }
        let valid_nll = mean_nll(&model, &valid)? + log_jac;
        if !valid_nll.is_finite() {
            return Err(TradeError::Divergence {
                epoch,
                batch: batches,
                loss: valid_nll,
                param_norm: model.params().norm(),
            });
        }
        let improved = best.as_ref().is_none_or(|(_, _, v)| valid_nll < *v);
        let record = EpochRecord {
            epoch,
            train_loss: loss_sum / batches as f64,
            nll: nll_sum / batches as f64,
            mmd: cfg.uses_mmd().then(|| mmd_sum / batches as f64),
            valid_nll,
            valid_nll_per_dim: valid_nll / d,
            best: improved,
            wall_time: (!cfg.deterministic).then(|| start.elapsed().as_secs_f64()),
        };
        if improved {
            best = Some((wrap(&model), epoch, valid_nll));
        }
        observer(&record, if improved { best.as_ref().map(|b| &b.0) } else { None })?;
        log.push(record);
    }
    let (best, best_epoch, best_valid_nll) = best.expect("at least one epoch");
    let test_nll = if test.rows() > 0 { mean_nll(&best.model, &test)? + log_jac } else { f64::NAN };
    Ok(FitResult {
        last: wrap(&model),
        best,
        log,
        best_epoch,
        best_valid_nll,
        test_nll,
        test_nll_per_dim: test_nll / d,
    })
}

/// `−mean log q(x)` in model space.
pub(crate) fn mean_nll(model: &dyn AutoregressiveModel, x: &Matrix) -> Result<f64> {
    let lp = model.log_prob(x)?;
    Ok(-lp.iter().sum::<f64>() / lp.len() as f64)
}
