use rand::Rng;
use trade_autodiff::{Graph, Var};

use super::attention::MultiHeadAttention;
use super::linear::Linear;
use super::params::{ParamId, ParameterStore};
use super::Ctx;
use crate::error::Result;

pub const LAYER_NORM_EPS: f64 = 1e-5;

#[derive(Clone, Debug)]
pub struct LayerNorm {
    pub gain: ParamId,
    pub shift: ParamId,
}

impl LayerNorm {
    pub fn new(store: &mut ParameterStore, prefix: &str, width: usize) -> Result<Self> {
        Ok(LayerNorm {
            gain: store.ones(format!("{prefix}.gain"), vec![width])?,
            shift: store.zeros(format!("{prefix}.shift"), vec![width])?,
        })
    }

    pub fn forward(&self, g: &mut Graph<f64>, ctx: &Ctx<'_>, x: Var) -> Result<Var> {
        let (gain, shift) = (ctx.params.var(self.gain), ctx.params.var(self.shift));
        Ok(g.layer_norm(x, gain, shift, LAYER_NORM_EPS)?)
    }
}

/// Post-norm encoder block:
/// `y = LN(x + Drop(MHA(x)))`, `x' = LN(y + Drop(FFN(y)))`.
#[derive(Clone, Debug)]
pub struct EncoderBlock {
    pub attention: MultiHeadAttention,
    pub norm1: LayerNorm,
    pub ff_in: Linear,
    pub ff_out: Linear,
    pub norm2: LayerNorm,
}

impl EncoderBlock {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParameterStore,
        prefix: &str,
        hidden: usize,
        heads: usize,
        ffn_hidden: usize,
        rng: &mut R,
    ) -> Result<Self> {
        Ok(EncoderBlock {
            attention: MultiHeadAttention::new(store, &format!("{prefix}.attn"), hidden, heads, rng)?,
            norm1: LayerNorm::new(store, &format!("{prefix}.norm1"), hidden)?,
            ff_in: Linear::new(store, &format!("{prefix}.ff_in"), hidden, ffn_hidden, rng)?,
            ff_out: Linear::new(store, &format!("{prefix}.ff_out"), ffn_hidden, hidden, rng)?,
            norm2: LayerNorm::new(store, &format!("{prefix}.norm2"), hidden)?,
        })
    }

    pub fn forward(&self, g: &mut Graph<f64>, ctx: &mut Ctx<'_>, x: Var, blocked: Option<&[bool]>) -> Result<Var> {
        let att = self.attention.forward(g, ctx, x, blocked)?.output;
        let att = ctx.dropout(g, att)?;
        let y = g.add(x, att)?;
        let y = self.norm1.forward(g, ctx, y)?;
        let f = self.ff_in.forward(g, ctx.params, y)?;
        let f = g.relu(f);
        let f = ctx.dropout(g, f)?;
        let f = self.ff_out.forward(g, ctx.params, f)?;
        let f = ctx.dropout(g, f)?;
        let z = g.add(y, f)?;
        self.norm2.forward(g, ctx, z)
    }
}
