use trade_autodiff::{Graph, Var};

use super::config::DataKind;
use crate::error::{Result, TradeError};
use crate::matrix::Matrix;

/// Lower bound added to every mixture scale.
pub const SIGMA_FLOOR: f64 = 1e-3;

const HALF_LN_TWO_PI: f64 = 0.918_938_533_204_672_8;

/// Per-position conditional parameters on a tape, each `[batch, t, ·]`.
#[derive(Clone, Copy, Debug)]
pub enum Heads {
    Continuous { log_pi: Var, mu: Var, sigma: Var },
    /// Normalized log-probabilities; invalid categories hold −∞.
    Discrete { log_p: Var },
}

/// Splits a continuous head output `[batch, t, 3m]` into log-weights, means
/// and scales (`softplus + floor`).
pub fn mixture_heads(g: &mut Graph<f64>, out: Var, m: usize) -> Result<Heads> {
    let logits = g.slice(out, 2, 0, m)?;
    let mu = g.slice(out, 2, m, m)?;
    let raw = g.slice(out, 2, 2 * m, m)?;
    let log_pi = g.log_softmax(logits, 2)?;
    let sigma = g.softplus(raw);
    let sigma = g.add_scalar(sigma, SIGMA_FLOOR);
    Ok(Heads::Continuous { log_pi, mu, sigma })
}

/// Masks categories beyond each feature's support and normalizes.
pub fn categorical_heads(g: &mut Graph<f64>, out: Var, categories: &[usize]) -> Result<Heads> {
    let t = g.shape(out)[1];
    let k = g.shape(out)[2];
    let mask: Vec<bool> = (0..t * k).map(|e| e % k >= categories[e / k]).collect();
    let masked = g.where_mask(out, &mask, &[t, k], f64::NEG_INFINITY)?;
    Ok(Heads::Discrete {
        log_p: g.log_softmax(masked, 2)?,
    })
}

/// Records observed data as model input: `[batch, d]` values for continuous
/// data, `[batch, d, K]` one-hot codes for discrete data.
pub fn encode_input(g: &mut Graph<f64>, kind: &DataKind, x: &Matrix) -> Result<Var> {
    validate_rows(kind, x)?;
    match kind {
        DataKind::Continuous => Ok(g.constant(vec![x.rows(), x.cols()], x.as_slice().to_vec())?),
        DataKind::Discrete { .. } => {
            let k = kind.max_categories();
            let mut one_hot = vec![0.0; x.rows() * x.cols() * k];
            for (e, &v) in x.as_slice().iter().enumerate() {
                one_hot[e * k + v as usize] = 1.0;
            }
            Ok(g.constant(vec![x.rows(), x.cols(), k], one_hot)?)
        }
    }
}

pub fn validate_rows(kind: &DataKind, x: &Matrix) -> Result<()> {
    for r in 0..x.rows() {
        for (c, &v) in x.row(r).iter().enumerate() {
            if v.is_nan() || v.is_infinite() {
                return Err(TradeError::Input(format!("non-finite value at row {r}, column {c}")));
            }
            if let DataKind::Discrete { categories } = kind {
                if v.fract() != 0.0 || v < 0.0 || v as usize >= categories[c] {
                    return Err(TradeError::Input(format!(
                        "value {v} at row {r}, column {c} is not a code in 0..{}",
                        categories[c]
                    )));
                }
            }
        }
    }
    Ok(())
}

/// `log q_i(x_i | x_<i)` for every row and position, `[batch, t]`.
pub fn log_conditionals(g: &mut Graph<f64>, heads: Heads, x: &Matrix) -> Result<Var> {
    match heads {
        Heads::Continuous { log_pi, mu, sigma } => {
            let shape = g.shape(mu).to_vec();
            let (b, t) = (shape[0], shape[1]);
            let xs = x.select_columns(&(0..t).collect::<Vec<_>>());
            let xv = g.constant(vec![b, t, 1], xs.into_vec())?;
            let diff = g.sub(xv, mu)?;
            let z = g.div(diff, sigma)?;
            let z2 = g.square(z);
            let quad = g.scale(z2, -0.5);
            let log_sigma = g.log(sigma);
            let a = g.sub(log_pi, log_sigma)?;
            let a = g.add(a, quad)?;
            let a = g.add_scalar(a, -HALF_LN_TWO_PI);
            let lse = g.logsumexp(a, 2)?;
            Ok(g.reshape(lse, vec![b, t])?)
        }
        Heads::Discrete { log_p } => {
            let shape = g.shape(log_p).to_vec();
            let (b, t) = (shape[0], shape[1]);
            let idx: Vec<usize> = (0..b)
                .flat_map(|r| (0..t).map(move |c| (r, c)))
                .map(|(r, c)| x.get(r, c) as usize)
                .collect();
            Ok(g.gather_last(log_p, &idx)?)
        }
    }
}

/// Conditional parameters copied off the tape.
#[derive(Clone, Debug, PartialEq)]
pub enum ConditionalValues {
    Continuous {
        batch: usize,
        d: usize,
        m: usize,
        pi: Vec<f64>,
        mu: Vec<f64>,
        sigma: Vec<f64>,
    },
    Discrete {
        batch: usize,
        d: usize,
        k: usize,
        probs: Vec<f64>,
    },
}

impl ConditionalValues {
    pub fn from_heads(g: &Graph<f64>, heads: Heads) -> Self {
        match heads {
            Heads::Continuous { log_pi, mu, sigma } => {
                let s = g.shape(mu);
                ConditionalValues::Continuous {
                    batch: s[0],
                    d: s[1],
                    m: s[2],
                    pi: g.value(log_pi).iter().map(|v| v.exp()).collect(),
                    mu: g.value(mu).to_vec(),
                    sigma: g.value(sigma).to_vec(),
                }
            }
            Heads::Discrete { log_p } => {
                let s = g.shape(log_p);
                ConditionalValues::Discrete {
                    batch: s[0],
                    d: s[1],
                    k: s[2],
                    probs: g.value(log_p).iter().map(|v| v.exp()).collect(),
                }
            }
        }
    }

    /// Mixture `(π, μ, σ)` of row `b`, position `i`.
    pub fn mixture(&self, b: usize, i: usize) -> Option<(&[f64], &[f64], &[f64])> {
        match self {
            ConditionalValues::Continuous { d, m, pi, mu, sigma, .. } => {
                let o = (b * d + i) * m;
                Some((&pi[o..o + m], &mu[o..o + m], &sigma[o..o + m]))
            }
            ConditionalValues::Discrete { .. } => None,
        }
    }

    /// Category probabilities of row `b`, position `i`.
    pub fn categorical(&self, b: usize, i: usize) -> Option<&[f64]> {
        match self {
            ConditionalValues::Discrete { d, k, probs, .. } => {
                let o = (b * d + i) * k;
                Some(&probs[o..o + k])
            }
            ConditionalValues::Continuous { .. } => None,
        }
    }
}

/// Density of a univariate Gaussian mixture, evaluated directly.
pub fn mixture_log_density(pi: &[f64], mu: &[f64], sigma: &[f64], x: f64) -> f64 {
    let terms: Vec<f64> = pi
        .iter()
        .zip(mu)
        .zip(sigma)
        .map(|((p, m), s)| p.ln() - s.ln() - HALF_LN_TWO_PI - 0.5 * ((x - m) / s).powi(2))
        .collect();
    let mx = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if mx == f64::NEG_INFINITY {
        return mx;
    }
    mx + terms.iter().map(|t| (t - mx).exp()).sum::<f64>().ln()
}
