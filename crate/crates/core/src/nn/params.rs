use indexmap::IndexMap;
use rand::Rng;
use trade_autodiff::{Graph, Tensor, Var};

use crate::error::{config_err, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Named parameters in insertion order. Names are hierarchical paths such as
/// `block0.attn.q.weight`; the order is stable and drives serialization.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParameterStore {
    params: IndexMap<String, Tensor<f64>>,
}

/// Graph handles for every parameter of a store, valid for one tape.
#[derive(Clone, Debug)]
pub struct Binding {
    vars: Vec<Var>,
}

impl Binding {
    pub fn var(&self, id: ParamId) -> Var {
        self.vars[id.0]
    }

    pub fn vars(&self) -> &[Var] {
        &self.vars
    }
}

impl ParameterStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, tensor: Tensor<f64>) -> Result<ParamId> {
        let name = name.into();
        if self.params.contains_key(&name) {
            return Err(config_err(format!("duplicate parameter name `{name}`")));
        }
        let (idx, _) = self.params.insert_full(name, tensor);
        Ok(ParamId(idx))
    }

    /// Xavier-uniform `[fan_in, fan_out]` matrix.
    pub fn xavier<R: Rng + ?Sized>(&mut self, name: impl Into<String>, fan_in: usize, fan_out: usize, rng: &mut R) -> Result<ParamId> {
        let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let values = (0..fan_in * fan_out).map(|_| rng.random_range(-a..=a)).collect();
        self.add(name, Tensor::new(vec![fan_in, fan_out], values)?)
    }

    pub fn zeros(&mut self, name: impl Into<String>, shape: Vec<usize>) -> Result<ParamId> {
        self.add(name, Tensor::zeros(shape))
    }

    pub fn ones(&mut self, name: impl Into<String>, shape: Vec<usize>) -> Result<ParamId> {
        self.add(name, Tensor::filled(shape, 1.0))
    }

    pub fn get(&self, id: ParamId) -> &Tensor<f64> {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor<f64> {
        &mut self.params[id.0]
    }

    pub fn by_name(&self, name: &str) -> Option<&Tensor<f64>> {
        self.params.get(name)
    }

    pub fn id_of(&self, name: &str) -> Option<ParamId> {
        self.params.get_index_of(name).map(ParamId)
    }

    /// Number of tensors.
    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn count(&self) -> usize {
        self.params.values().map(Tensor::numel).sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<f64>)> {
        self.params.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor<f64>)> {
        self.params.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    /// Global L2 norm of all parameter values.
    pub fn norm(&self) -> f64 {
        self.params
            .values()
            .flat_map(|t| t.values().iter())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }

    /// Records every parameter as a leaf of `g`; differentiable when `trainable`.
    pub fn bind(&self, g: &mut Graph<f64>, trainable: bool) -> Binding {
        let vars = self
            .params
            .values()
            .map(|t| {
                let shape = t.shape().to_vec();
                let values = t.values().to_vec();
                if trainable {
                    g.variable(shape, values)
                } else {
                    g.constant(shape, values)
                }
                .expect("stored tensors are consistent")
            })
            .collect();
        Binding { vars }
    }

    /// Gradients accumulated on `g` for each bound parameter (zeros where
    /// no gradient reached the parameter).
    pub fn grads(&self, g: &Graph<f64>, binding: &Binding) -> Vec<Vec<f64>> {
        self.params
            .values()
            .zip(&binding.vars)
            .map(|(t, &v)| g.grad(v).map_or_else(|| vec![0.0; t.numel()], <[f64]>::to_vec))
            .collect()
    }

    /// Replaces all values from a flat vector in store order.
    pub fn set_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.count() {
            return Err(config_err(format!(
                "{} values for {} parameters",
                flat.len(),
                self.count()
            )));
        }
        let mut off = 0;
        for t in self.params.values_mut() {
            let n = t.numel();
            t.values_mut().copy_from_slice(&flat[off..off + n]);
            off += n;
        }
        Ok(())
    }

    pub fn flat(&self) -> Vec<f64> {
        self.params.values().flat_map(|t| t.values().iter().copied()).collect()
    }
}
