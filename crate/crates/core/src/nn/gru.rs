use rand::Rng;
use trade_autodiff::{Graph, Var};

use super::linear::Linear;
use super::params::{Binding, ParamId, ParameterStore};
use crate::error::Result;

/// Gated recurrent unit scanned over the sequence axis:
///
/// ```text
/// z = σ(W_z x + U_z h + b_z)
/// r = σ(W_r x + U_r h + b_r)
/// n = tanh(W_n x + U_n (r ⊙ h) + b_n)
/// h' = (1 − z) ⊙ h + z ⊙ n
/// ```
#[derive(Clone, Debug)]
pub struct Gru {
    /// Input projection for all three gates, `[input, 3·hidden]`.
    pub input_proj: Linear,
    /// Recurrent weights for update and reset gates, `[hidden, 2·hidden]`.
    pub recur_zr: ParamId,
    /// Recurrent weights for the candidate, `[hidden, hidden]`.
    pub recur_n: ParamId,
    pub hidden: usize,
}

impl Gru {
    pub fn new<R: Rng + ?Sized>(store: &mut ParameterStore, prefix: &str, input: usize, hidden: usize, rng: &mut R) -> Result<Self> {
        let input_proj = Linear::new(store, &format!("{prefix}.input"), input, 3 * hidden, rng)?;
        let recur_zr = store.xavier(format!("{prefix}.recur_zr"), hidden, 2 * hidden, rng)?;
        let recur_n = store.xavier(format!("{prefix}.recur_n"), hidden, hidden, rng)?;
        Ok(Gru {
            input_proj,
            recur_zr,
            recur_n,
            hidden,
        })
    }

    /// `x: [batch, steps, input]` to hidden states `[batch, steps, hidden]`,
    /// starting from `h₀ = 0`.
    pub fn scan(&self, g: &mut Graph<f64>, p: &Binding, x: Var) -> Result<Var> {
        let shape = g.shape(x).to_vec();
        let (batch, steps) = (shape[0], shape[1]);
        let hd = self.hidden;
        let gx = self.input_proj.forward(g, p, x)?;
        let mut h = g.full(vec![batch, hd], 0.0);
        let mut outputs = Vec::with_capacity(steps);
        for t in 0..steps {
            let gt = g.slice(gx, 1, t, 1)?;
            let gt = g.reshape(gt, vec![batch, 3 * hd])?;
            let hzr = g.matmul(h, p.var(self.recur_zr))?;
            let xz = g.slice(gt, 1, 0, hd)?;
            let xr = g.slice(gt, 1, hd, hd)?;
            let xn = g.slice(gt, 1, 2 * hd, hd)?;
            let hz = g.slice(hzr, 1, 0, hd)?;
            let hr = g.slice(hzr, 1, hd, hd)?;
            let z = g.add(xz, hz)?;
            let z = g.sigmoid(z);
            let r = g.add(xr, hr)?;
            let r = g.sigmoid(r);
            let rh = g.mul(r, h)?;
            let hn = g.matmul(rh, p.var(self.recur_n))?;
            let n = g.add(xn, hn)?;
            let n = g.tanh(n);
            let delta = g.sub(n, h)?;
            let step = g.mul(z, delta)?;
            h = g.add(h, step)?;
            outputs.push(g.reshape(h, vec![batch, 1, hd])?);
        }
        Ok(g.concat(&outputs, 1)?)
    }
}
