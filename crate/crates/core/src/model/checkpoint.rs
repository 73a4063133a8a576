use std::fs;
use std::path::Path;

use rand::RngCore;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{DataKind, ModelConfig};
use super::grid::LogDensity;
use super::trade::TradeModel;
use super::AutoregressiveModel;
use crate::data::Standardizer;
use crate::error::{Result, TradeError};
use crate::matrix::Matrix;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"TRADECKP";
pub const CHECKPOINT_VERSION: u32 = 1;

/// A trained model together with the preprocessing that maps data-space
/// rows into model space: columns are standardized, then permuted so that
/// model feature `i` is data column `feature_order[i]`.
#[derive(Clone, Debug)]
pub struct FittedModel {
    pub model: TradeModel,
    pub standardizer: Option<Standardizer>,
    pub feature_order: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    format_version: u32,
    model: ModelConfig,
    standardizer: Option<Standardizer>,
    feature_order: Vec<usize>,
    parameter_count: usize,
}

impl FittedModel {
    pub fn new(model: TradeModel) -> Self {
        let d = model.config().d;
        FittedModel {
            model,
            standardizer: None,
            feature_order: (0..d).collect(),
        }
    }

    pub fn to_model_space(&self, x: &Matrix) -> Result<Matrix> {
        let z = match &self.standardizer {
            Some(s) => s.apply(x)?,
            None => x.clone(),
        };
        Ok(z.select_columns(&self.feature_order))
    }

    pub fn to_data_space(&self, z: &Matrix) -> Result<Matrix> {
        let mut inverse = vec![0; self.feature_order.len()];
        for (i, &c) in self.feature_order.iter().enumerate() {
            inverse[c] = i;
        }
        let x = z.select_columns(&inverse);
        match &self.standardizer {
            Some(s) => s.invert(&x),
            None => Ok(x),
        }
    }

    /// Log-density in data units (includes the standardization Jacobian).
    pub fn log_prob_data(&self, x: &Matrix) -> Result<Vec<f64>> {
        let z = self.to_model_space(x)?;
        let shift = self.standardizer.as_ref().map_or(0.0, |s| s.log_jacobian());
        Ok(self.model.log_prob(&z)?.into_iter().map(|v| v - shift).collect())
    }

    pub fn sample_data(&self, n: usize, rng: &mut dyn RngCore) -> Result<Matrix> {
        let z = self.model.sample(n, rng)?;
        self.to_data_space(&z)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = Header {
            format_version: CHECKPOINT_VERSION,
            model: self.model.config().clone(),
            standardizer: self.standardizer.clone(),
            feature_order: self.feature_order.clone(),
            parameter_count: self.model.params().count(),
        };
        let header = serde_json::to_vec_pretty(&header).map_err(|e| TradeError::Checkpoint(e.to_string()))?;
        let store = self.model.params();
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        out.extend_from_slice(&(store.len() as u64).to_le_bytes());
        for (name, t) in store.iter() {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
            for &dim in t.shape() {
                out.extend_from_slice(&(dim as u64).to_le_bytes());
            }
            for v in t.values() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != CHECKPOINT_MAGIC {
            return Err(TradeError::Checkpoint("not a model checkpoint (bad magic bytes)".into()));
        }
        let version = u32::from_le_bytes(r.array()?);
        if version != CHECKPOINT_VERSION {
            return Err(TradeError::Checkpoint(format!(
                "checkpoint format version {version} is not supported by this build (format version {CHECKPOINT_VERSION})"
            )));
        }
        let hlen = u64::from_le_bytes(r.array()?) as usize;
        let header: Header =
            serde_json::from_slice(r.take(hlen)?).map_err(|e| TradeError::Checkpoint(format!("bad header: {e}")))?;
        if header.format_version != version {
            return Err(TradeError::Checkpoint(format!(
                "header declares format version {} but container is version {version}",
                header.format_version
            )));
        }
        let mut model = TradeModel::new(header.model, &mut ChaCha8Rng::seed_from_u64(0))?;
        let blocks = u64::from_le_bytes(r.array()?) as usize;
        let store = model.params_mut();
        if blocks != store.len() || header.parameter_count != store.count() {
            return Err(TradeError::Checkpoint(format!(
                "checkpoint holds {blocks} tensors / {} values, configuration implies {} / {}",
                header.parameter_count,
                store.len(),
                store.count()
            )));
        }
        for _ in 0..blocks {
            let nlen = u32::from_le_bytes(r.array()?) as usize;
            let name = std::str::from_utf8(r.take(nlen)?)
                .map_err(|_| TradeError::Checkpoint("parameter name is not UTF-8".into()))?
                .to_string();
            let rank = u32::from_le_bytes(r.array()?) as usize;
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                shape.push(u64::from_le_bytes(r.array()?) as usize);
            }
            let id = store
                .id_of(&name)
                .ok_or_else(|| TradeError::Checkpoint(format!("unexpected parameter `{name}`")))?;
            let t = store.get_mut(id);
            if t.shape() != shape.as_slice() {
                return Err(TradeError::Checkpoint(format!(
                    "parameter `{name}` has shape {shape:?}, configuration implies {:?}",
                    t.shape()
                )));
            }
            for v in t.values_mut() {
                *v = f64::from_le_bytes(r.array()?);
            }
        }
        if r.pos != bytes.len() {
            return Err(TradeError::Checkpoint("trailing bytes after parameter blocks".into()));
        }
        let d = model.config().d;
        let mut order = header.feature_order.clone();
        order.sort_unstable();
        if order != (0..d).collect::<Vec<_>>() {
            return Err(TradeError::Checkpoint("feature order is not a permutation".into()));
        }
        if let Some(s) = &header.standardizer {
            if s.mean.len() != d || matches!(model.config().kind, DataKind::Discrete { .. }) {
                return Err(TradeError::Checkpoint("normalization statistics do not match the model".into()));
            }
        }
        Ok(FittedModel {
            model,
            standardizer: header.standardizer,
            feature_order: header.feature_order,
        })
    }
}

impl LogDensity for FittedModel {
    fn dim(&self) -> usize {
        self.model.config().d
    }

    fn log_density(&self, x: &Matrix) -> Result<Vec<f64>> {
        self.log_prob_data(x)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(TradeError::Checkpoint("truncated checkpoint".into()));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }
}

pub fn save_checkpoint(path: &Path, model: &FittedModel) -> Result<()> {
    fs::write(path, model.to_bytes()?).map_err(|e| TradeError::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<FittedModel> {
    let bytes = fs::read(path).map_err(|e| TradeError::io(path, e))?;
    FittedModel::from_bytes(&bytes)
}
