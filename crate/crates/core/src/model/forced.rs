use trade_autodiff::{Graph, Tensor, Var};

use super::config::DataKind;
use super::heads::Heads;
use super::AutoregressiveModel;
use crate::error::{config_err, Result};
use crate::nn::{Ctx, ParamId, ParameterStore};

/// Conditionals fixed per position and independent of the prefix. Shares
/// every likelihood and sampling code path with the learned model; the
/// stored values are parameters, so gradients with respect to them can be
/// taken on the tape.
#[derive(Clone, Debug)]
pub struct ForcedHeads {
    kind: DataKind,
    d: usize,
    store: ParameterStore,
    logits: ParamId,
    mu: Option<ParamId>,
    sigma: Option<ParamId>,
}

impl ForcedHeads {
    /// Gaussian mixtures: `pi[i]`, `mu[i]`, `sigma[i]` describe position `i`
    /// (`pi` need not be normalized; it is used through its logarithm).
    pub fn mixture(pi: &[Vec<f64>], mu: &[Vec<f64>], sigma: &[Vec<f64>]) -> Result<Self> {
        let d = pi.len();
        let m = pi.first().map_or(0, Vec::len);
        let ok = |v: &[Vec<f64>]| v.len() == d && v.iter().all(|r| r.len() == m);
        if d == 0 || m == 0 || !ok(mu) || !ok(sigma) {
            return Err(config_err("forced mixture needs equal [d][m] tables"));
        }
        if sigma.iter().flatten().any(|&s| !(s > 0.0)) || pi.iter().flatten().any(|&p| !(p > 0.0)) {
            return Err(config_err("forced mixture needs positive weights and scales"));
        }
        let mut store = ParameterStore::new();
        let flat = |v: &[Vec<f64>]| v.concat();
        let logits = store.add("forced.logits", Tensor::new(vec![d, m], pi.concat().iter().map(|p| p.ln()).collect())?)?;
        let mu = store.add("forced.mu", Tensor::new(vec![d, m], flat(mu))?)?;
        let sigma = store.add("forced.sigma", Tensor::new(vec![d, m], flat(sigma))?)?;
        Ok(ForcedHeads {
            kind: DataKind::Continuous,
            d,
            store,
            logits,
            mu: Some(mu),
            sigma: Some(sigma),
        })
    }

    /// Categorical conditionals from raw logits, `logits[i]` for position `i`.
    pub fn categorical(logits: &[Vec<f64>]) -> Result<Self> {
        let d = logits.len();
        let k = logits.first().map_or(0, Vec::len);
        if d == 0 || k < 2 || logits.iter().any(|r| r.len() != k) {
            return Err(config_err("forced categorical needs [d][K] logits with K >= 2"));
        }
        let mut store = ParameterStore::new();
        let id = store.add("forced.logits", Tensor::new(vec![d, k], logits.concat())?)?;
        Ok(ForcedHeads {
            kind: DataKind::Discrete {
                categories: vec![k; d],
            },
            d,
            store,
            logits: id,
            mu: None,
            sigma: None,
        })
    }

    pub fn logits_id(&self) -> ParamId {
        self.logits
    }

    pub fn mu_id(&self) -> Option<ParamId> {
        self.mu
    }

    pub fn sigma_id(&self) -> Option<ParamId> {
        self.sigma
    }

    fn broadcast(&self, g: &mut Graph<f64>, ctx: &Ctx<'_>, id: ParamId, b: usize, t: usize) -> Result<Var> {
        let w = self.store.get(id).shape()[1];
        let rows = g.slice(ctx.params.var(id), 0, 0, t)?;
        let zeros = g.full(vec![b, t, w], 0.0);
        Ok(g.add(zeros, rows)?)
    }
}

impl AutoregressiveModel for ForcedHeads {
    fn kind(&self) -> &DataKind {
        &self.kind
    }

    fn dim(&self) -> usize {
        self.d
    }

    fn params(&self) -> &ParameterStore {
        &self.store
    }

    fn params_mut(&mut self) -> &mut ParameterStore {
        &mut self.store
    }

    fn heads(&self, g: &mut Graph<f64>, ctx: &mut Ctx<'_>, x: Var) -> Result<Heads> {
        let shape = g.shape(x).to_vec();
        let (b, t) = (shape[0], shape[1]);
        let logits = self.broadcast(g, ctx, self.logits, b, t)?;
        match (self.mu, self.sigma) {
            (Some(mu), Some(sigma)) => Ok(Heads::Continuous {
                log_pi: g.log_softmax(logits, 2)?,
                mu: self.broadcast(g, ctx, mu, b, t)?,
                sigma: self.broadcast(g, ctx, sigma, b, t)?,
            }),
            _ => Ok(Heads::Discrete {
                log_p: g.log_softmax(logits, 2)?,
            }),
        }
    }
}
