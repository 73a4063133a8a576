//! Layers shared by the density model: parameters, affine maps, GRU scan,
//! masked multi-head attention and post-norm encoder blocks.

mod attention;
mod encoder;
mod gru;
mod linear;
mod params;
mod position;

use rand::RngCore;
use trade_autodiff::{Graph, Var};

pub use attention::{causal_mask, AttentionOutput, CausalMask, MultiHeadAttention};
pub use encoder::{EncoderBlock, LayerNorm, LAYER_NORM_EPS};
pub use gru::Gru;
pub use linear::Linear;
pub use params::{Binding, ParamId, ParameterStore};
pub use position::fourier_position_encoding;

use crate::error::Result;

/// Per-forward context: bound parameters plus the dropout stream. Without a
/// stream the forward pass runs in evaluation mode and is deterministic.
pub struct Ctx<'a> {
    pub params: &'a Binding,
    rng: Option<&'a mut dyn RngCore>,
    dropout: f64,
}

impl<'a> Ctx<'a> {
    pub fn eval(params: &'a Binding) -> Self {
        Ctx {
            params,
            rng: None,
            dropout: 0.0,
        }
    }

    pub fn train(params: &'a Binding, dropout: f64, rng: &'a mut dyn RngCore) -> Self {
        Ctx {
            params,
            rng: Some(rng),
            dropout,
        }
    }

    pub fn training(&self) -> bool {
        self.rng.is_some()
    }

    pub fn dropout(&mut self, g: &mut Graph<f64>, x: Var) -> Result<Var> {
        match &mut self.rng {
            Some(rng) if self.dropout > 0.0 => Ok(g.dropout(x, self.dropout, &mut **rng)?),
            _ => Ok(x),
        }
    }
}
