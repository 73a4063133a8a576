use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::dataset::{Dataset, Split};
use crate::error::{data_err, Result};

/// Additive Gaussian corruption; `scale` is in units of each column's
/// training-split standard deviation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoiseSpec {
    pub scale: f64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        NoiseSpec { scale: 3.0 }
    }
}

#[derive(Clone, Debug)]
pub struct NoisyDataset {
    pub dataset: Dataset,
    /// Modified entries, row-major over the training split in index order.
    pub mask: Vec<bool>,
}

impl NoisyDataset {
    pub fn modified(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }
}

/// Perturbs exactly `round(fraction · n_train · d)` uniformly chosen entries
/// of the training split; validation and test rows are untouched.
pub fn inject_noise(ds: &Dataset, fraction: f64, spec: NoiseSpec, seed: u64) -> Result<NoisyDataset> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(data_err(format!("noise fraction {fraction} outside [0, 1]")));
    }
    if !(spec.scale >= 0.0) {
        return Err(data_err(format!("noise scale {} must be nonnegative", spec.scale)));
    }
    let d = ds.d();
    let total = ds.train.len() * d;
    let count = (fraction * total as f64).round() as usize;
    let stds = ds.split(Split::Train).column_stds();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = ds.clone();
    let mut mask = vec![false; total];
    for e in sample(&mut rng, total, count).into_vec() {
        mask[e] = true;
        let (r, c) = (ds.train[e / d], e % d);
        let z: f64 = rng.sample(StandardNormal);
        if spec.scale > 0.0 {
            let v = out.x.get(r, c) + z * spec.scale * stds[c];
            out.x.set(r, c, v);
        }
    }
    out.note = format!("{} + noise(fraction={fraction}, scale={})", ds.note, spec.scale);
    Ok(NoisyDataset { dataset: out, mask })
}
