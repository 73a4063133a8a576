use rand::Rng;
use trade_autodiff::{Graph, Var};

use super::params::{Binding, ParamId, ParameterStore};
use crate::error::Result;

/// Affine map over the last axis: `x W + b` with `W: [input, output]`.
#[derive(Clone, Debug)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
    pub input: usize,
    pub output: usize,
}

impl Linear {
    pub fn new<R: Rng + ?Sized>(store: &mut ParameterStore, prefix: &str, input: usize, output: usize, rng: &mut R) -> Result<Self> {
        let weight = store.xavier(format!("{prefix}.weight"), input, output, rng)?;
        let bias = store.zeros(format!("{prefix}.bias"), vec![output])?;
        Ok(Linear {
            weight,
            bias,
            input,
            output,
        })
    }

    pub fn forward(&self, g: &mut Graph<f64>, p: &Binding, x: Var) -> Result<Var> {
        let h = g.matmul(x, p.var(self.weight))?;
        Ok(g.add(h, p.var(self.bias))?)
    }
}
