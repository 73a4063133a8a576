//! The autoregressive density model: configuration, conditional heads,
//! likelihood evaluation and (differentiable) ancestral sampling.

mod checkpoint;
mod config;
mod forced;
mod grid;
mod heads;
mod trade;

use rand::{Rng, RngCore};
use rand_distr::{Gumbel, StandardNormal};
use trade_autodiff::{Graph, Var};

pub use checkpoint::{load_checkpoint, save_checkpoint, FittedModel, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use config::{Backbone, DataKind, ModelConfig, PositionMode};
pub use forced::ForcedHeads;
pub use grid::{grid_density, grid_points, GridBounds, GridDensity, LogDensity};
pub use heads::{
    categorical_heads, encode_input, log_conditionals, mixture_heads, mixture_log_density, validate_rows, ConditionalValues, Heads,
    SIGMA_FLOOR,
};
pub use trade::TradeModel;

use crate::error::{config_err, Result, TradeError};
use crate::matrix::Matrix;
use crate::nn::{Ctx, ParameterStore};

/// Rows per forward pass when evaluating large matrices.
pub const EVAL_CHUNK: usize = 2048;

/// How a mixture component or category is picked in differentiable sampling.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Selection {
    /// Hard one-hot forward value, relaxed Gumbel-softmax gradient.
    #[default]
    StraightThrough,
    /// Relaxed Gumbel-softmax weights in both passes (smooth in every input).
    Relaxed,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DiffSampleOptions {
    /// Gumbel-softmax temperature.
    pub tau: f64,
    pub selection: Selection,
}

impl Default for DiffSampleOptions {
    fn default() -> Self {
        DiffSampleOptions {
            tau: 1.5,
            selection: Selection::StraightThrough,
        }
    }
}

/// Gumbel-softmax over the last axis of `logits: [n, K]`. Entries equal to
/// −∞ are never selected.
pub fn gumbel_softmax(g: &mut Graph<f64>, logits: Var, tau: f64, selection: Selection, rng: &mut dyn RngCore) -> Result<Var> {
    if !(tau > 0.0) {
        return Err(config_err(format!("Gumbel-softmax temperature must be positive, got {tau}")));
    }
    let shape = g.shape(logits).to_vec();
    let k = *shape.last().expect("logits have a category axis");
    let gumbel = Gumbel::new(0.0, 1.0).expect("unit Gumbel");
    let noise: Vec<f64> = (0..g.value(logits).len()).map(|_| rng.sample(gumbel)).collect();
    let perturbed: Vec<f64> = g.value(logits).iter().zip(&noise).map(|(l, n)| l + n).collect();
    let nv = g.constant(shape.clone(), noise)?;
    let z = g.add(logits, nv)?;
    let z = g.scale(z, 1.0 / tau);
    let soft = g.softmax(z, shape.len() - 1)?;
    match selection {
        Selection::Relaxed => Ok(soft),
        Selection::StraightThrough => {
            let mut hard = vec![0.0; perturbed.len()];
            for (row, lane) in perturbed.chunks(k).enumerate() {
                let best = argmax(lane);
                hard[row * k + best] = 1.0;
            }
            Ok(g.straight_through(soft, hard)?)
        }
    }
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Inverse-CDF draw from unnormalized nonnegative weights.
fn draw_index(weights: &[f64], u: f64) -> usize {
    let total: f64 = weights.iter().sum();
    let target = u * total;
    let mut acc = 0.0;
    for (i, &w) in weights.iter().enumerate() {
        acc += w;
        if target < acc {
            return i;
        }
    }
    weights.iter().rposition(|&w| w > 0.0).unwrap_or(0)
}

/// A density over `d` ordered features built from per-position conditionals.
///
/// `heads` receives the model input for the first `t ≤ d` features and
/// returns the conditionals of those `t` positions; position `i` may depend
/// on inputs `0..i` only.
pub trait AutoregressiveModel {
    fn kind(&self) -> &DataKind;

    fn dim(&self) -> usize;

    fn params(&self) -> &ParameterStore;

    fn params_mut(&mut self) -> &mut ParameterStore;

    fn heads(&self, g: &mut Graph<f64>, ctx: &mut Ctx<'_>, x: Var) -> Result<Heads>;

    /// `log q(x)` per row, in nats.
    fn log_prob(&self, x: &Matrix) -> Result<Vec<f64>> {
        let per = self.log_conditional_matrix(x)?;
        Ok((0..per.rows()).map(|r| per.row(r).iter().sum()).collect())
    }

    /// `log q_i(x_i | x_<i)` per row and feature.
    fn log_conditional_matrix(&self, x: &Matrix) -> Result<Matrix> {
        check_width(self.dim(), x)?;
        let mut out = Vec::with_capacity(x.rows() * x.cols());
        for start in (0..x.rows()).step_by(EVAL_CHUNK) {
            let chunk = x.row_range(start, EVAL_CHUNK);
            let mut g = Graph::new();
            let p = self.params().bind(&mut g, false);
            let mut ctx = Ctx::eval(&p);
            let input = encode_input(&mut g, self.kind(), &chunk)?;
            let heads = self.heads(&mut g, &mut ctx, input)?;
            let lc = log_conditionals(&mut g, heads, &chunk)?;
            out.extend_from_slice(g.value(lc));
        }
        Matrix::new(x.rows(), x.cols(), out)
    }

    /// Conditional parameters for every row of `x` (evaluation mode).
    fn conditional_values(&self, x: &Matrix) -> Result<ConditionalValues> {
        check_width(self.dim(), x)?;
        validate_rows(self.kind(), x)?;
        let mut g = Graph::new();
        let p = self.params().bind(&mut g, false);
        let mut ctx = Ctx::eval(&p);
        let input = encode_input(&mut g, self.kind(), x)?;
        let heads = self.heads(&mut g, &mut ctx, input)?;
        Ok(ConditionalValues::from_heads(&g, heads))
    }

    /// Ancestral sampling, one forward pass per feature over the growing prefix.
    fn sample(&self, n: usize, rng: &mut dyn RngCore) -> Result<Matrix> {
        let d = self.dim();
        let mut out = Matrix::zeros(n, d);
        for start in (0..n).step_by(EVAL_CHUNK) {
            let rows = EVAL_CHUNK.min(n - start);
            let mut x = Matrix::zeros(rows, d);
            for i in 0..d {
                let prefix = x.select_columns(&(0..=i).collect::<Vec<_>>());
                let mut g = Graph::new();
                let p = self.params().bind(&mut g, false);
                let mut ctx = Ctx::eval(&p);
                let input = encode_input(&mut g, self.kind(), &prefix)?;
                let heads = self.heads(&mut g, &mut ctx, input)?;
                let cv = ConditionalValues::from_heads(&g, heads);
                for b in 0..rows {
                    let v = match &cv {
                        ConditionalValues::Continuous { .. } => {
                            let (pi, mu, sigma) = cv.mixture(b, i).expect("continuous");
                            let k = draw_index(pi, rng.random::<f64>());
                            let eps: f64 = rng.sample(StandardNormal);
                            mu[k] + sigma[k] * eps
                        }
                        ConditionalValues::Discrete { .. } => {
                            draw_index(cv.categorical(b, i).expect("discrete"), rng.random::<f64>()) as f64
                        }
                    };
                    x.set(b, i, v);
                }
            }
            for b in 0..rows {
                out.row_mut(start + b).copy_from_slice(x.row(b));
            }
        }
        Ok(out)
    }

    /// Sampling on the tape: returns `[n, d]` values whose gradients reach
    /// the model parameters through reparametrized Gaussian draws and
    /// Gumbel-softmax selections. Sampled prefixes are fed back on the tape.
    fn sample_differentiable(&self, g: &mut Graph<f64>, ctx: &mut Ctx<'_>, n: usize, opts: DiffSampleOptions, rng: &mut dyn RngCore) -> Result<Var> {
        if !(opts.tau > 0.0) {
            return Err(config_err(format!("Gumbel-softmax temperature must be positive, got {}", opts.tau)));
        }
        if n == 0 {
            return Err(TradeError::Input("differentiable sampling needs n >= 1".into()));
        }
        let d = self.dim();
        let kind = self.kind().clone();
        let k_max = kind.max_categories();
        let mut values: Vec<Var> = Vec::with_capacity(d);
        let mut inputs: Vec<Var> = Vec::with_capacity(d);
        for i in 0..d {
            let input = match &kind {
                DataKind::Continuous => {
                    let pad = g.full(vec![n, 1], 0.0);
                    let mut cols = inputs.clone();
                    cols.push(pad);
                    if cols.len() == 1 { pad } else { g.concat(&cols, 1)? }
                }
                DataKind::Discrete { .. } => {
                    let mut pad = vec![0.0; n * k_max];
                    pad.iter_mut().step_by(k_max).for_each(|v| *v = 1.0);
                    let pad = g.constant(vec![n, 1, k_max], pad)?;
                    let mut cols = inputs.clone();
                    cols.push(pad);
                    if cols.len() == 1 { pad } else { g.concat(&cols, 1)? }
                }
            };
            let heads = self.heads(g, ctx, input)?;
            match heads {
                Heads::Continuous { log_pi, mu, sigma } => {
                    let m = g.shape(mu)[2];
                    let pick = |g: &mut Graph<f64>, v: Var| -> Result<Var> {
                        let s = g.slice(v, 1, i, 1)?;
                        Ok(g.reshape(s, vec![n, m])?)
                    };
                    let (lp, mu_i, sd_i) = (pick(g, log_pi)?, pick(g, mu)?, pick(g, sigma)?);
                    let y = gumbel_softmax(g, lp, opts.tau, opts.selection, rng)?;
                    let eps: Vec<f64> = (0..n * m).map(|_| rng.sample(StandardNormal)).collect();
                    let eps = g.constant(vec![n, m], eps)?;
                    let noise = g.mul(sd_i, eps)?;
                    let comp = g.add(mu_i, noise)?;
                    let chosen = g.mul(y, comp)?;
                    let x_i = g.sum_axis(chosen, 1)?;
                    values.push(x_i);
                    inputs.push(x_i);
                }
                Heads::Discrete { log_p } => {
                    let s = g.slice(log_p, 1, i, 1)?;
                    let lp = g.reshape(s, vec![n, k_max])?;
                    let y = gumbel_softmax(g, lp, opts.tau, opts.selection, rng)?;
                    let codes: Vec<f64> = (0..k_max).map(|c| c as f64).collect();
                    let codes = g.constant(vec![k_max], codes)?;
                    let weighted = g.mul(y, codes)?;
                    values.push(g.sum_axis(weighted, 1)?);
                    inputs.push(g.reshape(y, vec![n, 1, k_max])?);
                }
            }
        }
        if values.len() == 1 {
            Ok(values[0])
        } else {
            Ok(g.concat(&values, 1)?)
        }
    }
}

fn check_width(d: usize, x: &Matrix) -> Result<()> {
    if x.cols() != d {
        return Err(TradeError::Input(format!("model expects {d} features, got {}", x.cols())));
    }
    Ok(())
}
