use crate::error::{config_err, Result};
use crate::nn::ParameterStore;

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// Rescales `grads` in place so that their joint L2 norm is at most
/// `max_norm`; returns the norm before clipping.
pub fn clip_global_norm(grads: &mut [Vec<f64>], max_norm: f64) -> f64 {
    let norm = grads.iter().flatten().map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm {
        let s = max_norm / norm;
        grads.iter_mut().flatten().for_each(|g| *g *= s);
    }
    norm
}

/// Adam with bias correction and decoupled weight decay
/// (`p ← p − lr·m̂/(√v̂ + ε) − lr·wd·p`).
#[derive(Clone, Debug)]
pub struct Adam {
    pub lr: f64,
    pub weight_decay: f64,
    pub clip_norm: f64,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(store: &ParameterStore, lr: f64, weight_decay: f64, clip_norm: f64) -> Self {
        let zeros: Vec<Vec<f64>> = store.iter().map(|(_, t)| vec![0.0; t.numel()]).collect();
        Adam {
            lr,
            weight_decay,
            clip_norm,
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Clips, then updates every parameter. Returns the unclipped gradient norm.
    pub fn step(&mut self, store: &mut ParameterStore, mut grads: Vec<Vec<f64>>) -> Result<f64> {
        if grads.len() != self.m.len() || grads.iter().zip(&self.m).any(|(g, m)| g.len() != m.len()) {
            return Err(config_err("gradient layout does not match the optimizer state"));
        }
        let norm = clip_global_norm(&mut grads, self.clip_norm);
        self.step += 1;
        let c1 = 1.0 - BETA1.powi(self.step as i32);
        let c2 = 1.0 - BETA2.powi(self.step as i32);
        for (((_, t), g), (m, v)) in store.iter_mut().zip(&grads).zip(self.m.iter_mut().zip(self.v.iter_mut())) {
            for (i, p) in t.values_mut().iter_mut().enumerate() {
                m[i] = BETA1 * m[i] + (1.0 - BETA1) * g[i];
                v[i] = BETA2 * v[i] + (1.0 - BETA2) * g[i] * g[i];
                let update = (m[i] / c1) / ((v[i] / c2).sqrt() + ADAM_EPS);
                *p -= self.lr * update + self.lr * self.weight_decay * *p;
            }
        }
        Ok(norm)
    }
}
