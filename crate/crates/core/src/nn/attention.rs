use rand::Rng;
use trade_autodiff::{Graph, Var};

use super::linear::Linear;
use super::params::ParameterStore;
use super::Ctx;
use crate::error::{config_err, Result};

/// Autoregressive attention pattern over `d` features.
///
/// Feature `i` may use feature `j` iff `j < i`; every feature also sees the
/// begin-of-sequence slot. Internally the sequence is shifted right by one
/// slot (slot 0 holds the begin-of-sequence embedding, slot `s` holds
/// feature `s − 1`), so the slot pattern is plain lower-triangular.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CausalMask {
    d: usize,
}

pub fn causal_mask(d: usize) -> CausalMask {
    CausalMask { d }
}

impl CausalMask {
    pub fn dim(&self) -> usize {
        self.d
    }

    /// Whether the output for feature `i` may depend on feature `j` (0-based).
    pub fn permits(&self, i: usize, j: usize) -> bool {
        j < i && i < self.d
    }

    /// Row-major `[d, d]` slot mask, `true` where query slot `q` must not
    /// attend key slot `k` (that is, `k > q`).
    pub fn blocked_slots(&self) -> Vec<bool> {
        let d = self.d;
        (0..d * d).map(|e| e % d > e / d).collect()
    }
}

/// Multi-head scaled dot-product attention with per-head slices of shared
/// `hidden`-wide projections.
#[derive(Clone, Debug)]
pub struct MultiHeadAttention {
    pub query: Linear,
    pub key: Linear,
    pub value: Linear,
    pub output: Linear,
    pub heads: usize,
    pub hidden: usize,
}

#[derive(Clone, Debug)]
pub struct AttentionOutput {
    /// `[batch, positions, hidden]` context after the output projection.
    pub output: Var,
    /// Per-head attention weights `[batch, positions, positions]`, before dropout.
    pub weights: Vec<Var>,
}

impl MultiHeadAttention {
    pub fn new<R: Rng + ?Sized>(store: &mut ParameterStore, prefix: &str, hidden: usize, heads: usize, rng: &mut R) -> Result<Self> {
        if heads == 0 || hidden % heads != 0 {
            return Err(config_err(format!("hidden width {hidden} is not divisible by {heads} heads")));
        }
        Ok(MultiHeadAttention {
            query: Linear::new(store, &format!("{prefix}.query"), hidden, hidden, rng)?,
            key: Linear::new(store, &format!("{prefix}.key"), hidden, hidden, rng)?,
            value: Linear::new(store, &format!("{prefix}.value"), hidden, hidden, rng)?,
            output: Linear::new(store, &format!("{prefix}.output"), hidden, hidden, rng)?,
            heads,
            hidden,
        })
    }

    /// `x: [batch, t, hidden]`; `blocked` is a row-major `[t, t]` mask where
    /// `true` removes the key from the query's softmax (additive −∞).
    pub fn forward(&self, g: &mut Graph<f64>, ctx: &mut Ctx<'_>, x: Var, blocked: Option<&[bool]>) -> Result<AttentionOutput> {
        let t = g.shape(x)[1];
        let dh = self.hidden / self.heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let q = self.query.forward(g, ctx.params, x)?;
        let k = self.key.forward(g, ctx.params, x)?;
        let v = self.value.forward(g, ctx.params, x)?;
        let mut contexts = Vec::with_capacity(self.heads);
        let mut weights = Vec::with_capacity(self.heads);
        for h in 0..self.heads {
            let qh = g.slice(q, 2, h * dh, dh)?;
            let kh = g.slice(k, 2, h * dh, dh)?;
            let vh = g.slice(v, 2, h * dh, dh)?;
            let kt = g.transpose(kh)?;
            let scores = g.matmul(qh, kt)?;
            let mut scores = g.scale(scores, scale);
            if let Some(mask) = blocked {
                scores = g.where_mask(scores, mask, &[t, t], f64::NEG_INFINITY)?;
            }
            let a = g.softmax(scores, 2)?;
            weights.push(a);
            let a = ctx.dropout(g, a)?;
            contexts.push(g.matmul(a, vh)?);
        }
        let joined = if contexts.len() == 1 {
            contexts[0]
        } else {
            g.concat(&contexts, 2)?
        };
        let output = self.output.forward(g, ctx.params, joined)?;
        Ok(AttentionOutput { output, weights })
    }
}
