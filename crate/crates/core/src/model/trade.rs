use rand::Rng;
use trade_autodiff::{Graph, Var};

use super::config::{Backbone, DataKind, ModelConfig, PositionMode};
use super::heads::{categorical_heads, mixture_heads, Heads};
use super::AutoregressiveModel;
use crate::error::{Result, TradeError};
use crate::nn::{causal_mask, fourier_position_encoding, Ctx, EncoderBlock, Gru, Linear, ParamId, ParameterStore};

/// Self-attention autoregressive density model.
///
/// Feature values are lifted to the hidden width by one shared affine map,
/// shifted right behind a learned begin-of-sequence vector, given positional
/// information (recurrent scan or sinusoidal features), passed through
/// causally masked encoder blocks and read out by a position-wise head.
#[derive(Clone, Debug)]
pub struct TradeModel {
    config: ModelConfig,
    store: ParameterStore,
    bos: ParamId,
    embed: Linear,
    input_gru: Option<Gru>,
    layer_grus: Vec<Gru>,
    blocks: Vec<EncoderBlock>,
    rnn: Vec<Gru>,
    head: Linear,
}

impl TradeModel {
    pub fn new<R: Rng + ?Sized>(config: ModelConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let h = config.hidden;
        let mut store = ParameterStore::new();
        let bos = store.add(
            "bos",
            trade_autodiff::Tensor::new(vec![h], (0..h).map(|_| rng.random_range(-1.0..1.0)).collect())?,
        )?;
        let embed_in = match config.kind {
            DataKind::Continuous => 1,
            DataKind::Discrete { .. } => config.kind.max_categories(),
        };
        let embed = Linear::new(&mut store, "embed", embed_in, h, rng)?;
        let mut input_gru = None;
        let mut layer_grus = Vec::new();
        let mut blocks = Vec::new();
        let mut rnn = Vec::new();
        match config.backbone {
            Backbone::Rnn => {
                for l in 0..config.layers {
                    rnn.push(Gru::new(&mut store, &format!("rnn{l}"), h, h, rng)?);
                }
            }
            Backbone::Transformer => {
                let gru_mode = config.position_mode == PositionMode::Gru;
                if gru_mode && !config.gru_per_layer {
                    input_gru = Some(Gru::new(&mut store, "input_gru", h, h, rng)?);
                }
                for l in 0..config.layers {
                    if gru_mode && config.gru_per_layer {
                        layer_grus.push(Gru::new(&mut store, &format!("gru{l}"), h, h, rng)?);
                    }
                    blocks.push(EncoderBlock::new(
                        &mut store,
                        &format!("block{l}"),
                        h,
                        config.heads,
                        config.ffn_hidden,
                        rng,
                    )?);
                }
            }
        }
        let head = Linear::new(&mut store, "head", h, config.head_width(), rng)?;
        Ok(TradeModel {
            config,
            store,
            bos,
            embed,
            input_gru,
            layer_grus,
            blocks,
            rnn,
            head,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    /// Hidden states `[batch, t, hidden]` for the first `t` positions.
    fn encode(&self, g: &mut Graph<f64>, ctx: &mut Ctx<'_>, x: Var) -> Result<Var> {
        let shape = g.shape(x).to_vec();
        let (b, t) = (shape[0], shape[1]);
        let h = self.config.hidden;
        let zeros = g.full(vec![b, 1, h], 0.0);
        let bos = g.add(zeros, ctx.params.var(self.bos))?;
        let mut s = if t > 1 {
            let prev = g.slice(x, 1, 0, t - 1)?;
            let prev = match self.config.kind {
                DataKind::Continuous => g.reshape(prev, vec![b, t - 1, 1])?,
                DataKind::Discrete { .. } => prev,
            };
            let e = self.embed.forward(g, ctx.params, prev)?;
            g.concat(&[bos, e], 1)?
        } else {
            bos
        };
        if self.config.backbone == Backbone::Rnn {
            for gru in &self.rnn {
                s = gru.scan(g, ctx.params, s)?;
            }
            return Ok(s);
        }
        if self.config.position_mode == PositionMode::Fourier {
            let pe = g.constant(vec![t, h], fourier_position_encoding(t, h))?;
            s = g.add(s, pe)?;
        }
        if let Some(gru) = &self.input_gru {
            s = gru.scan(g, ctx.params, s)?;
        }
        let mask = causal_mask(t).blocked_slots();
        for (l, block) in self.blocks.iter().enumerate() {
            if let Some(gru) = self.layer_grus.get(l) {
                s = gru.scan(g, ctx.params, s)?;
            }
            s = block.forward(g, ctx, s, Some(&mask))?;
        }
        Ok(s)
    }
}

impl AutoregressiveModel for TradeModel {
    fn kind(&self) -> &DataKind {
        &self.config.kind
    }

    fn dim(&self) -> usize {
        self.config.d
    }

    fn params(&self) -> &ParameterStore {
        &self.store
    }

    fn params_mut(&mut self) -> &mut ParameterStore {
        &mut self.store
    }

    fn heads(&self, g: &mut Graph<f64>, ctx: &mut Ctx<'_>, x: Var) -> Result<Heads> {
        let t = g.shape(x).get(1).copied().unwrap_or(0);
        if t == 0 || t > self.config.d {
            return Err(TradeError::Input(format!(
                "input covers {t} positions, model has {}",
                self.config.d
            )));
        }
        let hidden = self.encode(g, ctx, x)?;
        let out = self.head.forward(g, ctx.params, hidden)?;
        match &self.config.kind {
            DataKind::Continuous => mixture_heads(g, out, self.config.m),
            DataKind::Discrete { categories } => categorical_heads(g, out, categories),
        }
    }
}
