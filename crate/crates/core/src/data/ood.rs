use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::csv::{load_csv, CsvOptions};
use super::dataset::{Dataset, Split};
use super::manifest::benchmark_shape;
use super::synthetic::DiagGaussianMixture;
use crate::error::{data_err, Result};
use crate::matrix::Matrix;
use crate::model::DataKind;

/// Name of the always-available synthetic corpus.
pub const SYNTH_OOD: &str = "synth-ood";

/// Dataset whose rows carry an outlier flag. The flags are for scoring
/// only; training never sees them.
#[derive(Clone, Debug)]
pub struct OodCorpus {
    pub dataset: Dataset,
    /// `labels[r]` is true when row `r` of `dataset.x` is an outlier.
    pub labels: Vec<bool>,
}

impl OodCorpus {
    pub fn outliers(&self) -> usize {
        self.labels.iter().filter(|&&l| l).count()
    }

    pub fn split_labels(&self, split: Split) -> Vec<bool> {
        self.dataset.indices(split).iter().map(|&r| self.labels[r]).collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthOodSpec {
    pub n: usize,
    pub contamination: f64,
    /// Half-width multiplier applied to the inlier bounding box.
    pub inflate: f64,
}

impl Default for SynthOodSpec {
    fn default() -> Self {
        SynthOodSpec {
            n: 5000,
            contamination: 0.02,
            inflate: 1.5,
        }
    }
}

/// The four-dimensional inlier mixture of the synthetic corpus.
pub fn synth_inliers() -> DiagGaussianMixture {
    DiagGaussianMixture::new(
        vec![0.5, 0.3, 0.2],
        vec![vec![0.0, 0.0, 0.0, 0.0], vec![3.0, 2.0, -1.0, 1.0], vec![-2.0, 3.0, 1.5, -2.0]],
        vec![vec![1.0, 0.7, 0.8, 0.5], vec![0.6, 0.9, 0.5, 0.7], vec![0.8, 0.5, 0.6, 0.9]],
    )
    .expect("valid mixture")
}

/// Log-density level enclosing 99.9% of the inlier mass, estimated as the
/// 0.1% quantile of `log p(X)` over a large independent inlier sample.
pub fn contour_threshold(mix: &DiagGaussianMixture, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = mix.sample(200_000, &mut rng);
    let mut lp: Vec<f64> = (0..x.rows()).map(|r| mix.log_density_row(x.row(r))).collect();
    lp.sort_by(f64::total_cmp);
    lp[lp.len() / 1000]
}

/// Inliers from [`synth_inliers`] and `round(contamination · n)` outliers
/// drawn uniformly from the inflated inlier box, each rejected unless it lies
/// outside the 99.9% contour. Rows are shuffled and split 70/10/20.
pub fn synth_ood(spec: &SynthOodSpec, seed: u64) -> Result<OodCorpus> {
    if !(0.0..1.0).contains(&spec.contamination) || spec.n == 0 || !(spec.inflate >= 1.0) {
        return Err(data_err(format!("invalid synthetic OOD spec {spec:?}")));
    }
    let mix = synth_inliers();
    let d = mix.d();
    let threshold = contour_threshold(&mix, seed ^ 0xc0_47_00);
    let n_out = (spec.contamination * spec.n as f64).round() as usize;
    let n_in = spec.n - n_out;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let inliers = mix.sample(n_in, &mut rng);
    let (lo, hi) = mixture_box(&mix);
    let mut outliers = Vec::with_capacity(n_out * d);
    let mut row = vec![0.0; d];
    while outliers.len() < n_out * d {
        for (j, v) in row.iter_mut().enumerate() {
            let (c, h) = ((lo[j] + hi[j]) / 2.0, spec.inflate * (hi[j] - lo[j]) / 2.0);
            *v = rng.random_range(c - h..c + h);
        }
        if mix.log_density_row(&row) < threshold {
            outliers.extend_from_slice(&row);
        }
    }

    let mut order: Vec<usize> = (0..spec.n).collect();
    order.shuffle(&mut rng);
    let all = inliers.vstack(&Matrix::new(n_out, d, outliers)?)?;
    let x = all.select_rows(&order);
    let labels = order.iter().map(|&i| i >= n_in).collect();
    let mut dataset = Dataset::with_random_splits(SYNTH_OOD, x, DataKind::Continuous, 0.7, 0.1, seed ^ 0x5eed)?;
    dataset.note = format!("{SYNTH_OOD} n={} contamination={} seed={seed}", spec.n, spec.contamination);
    Ok(OodCorpus { dataset, labels })
}

/// Means ± 4 standard deviations over all components.
fn mixture_box(mix: &DiagGaussianMixture) -> (Vec<f64>, Vec<f64>) {
    let d = mix.d();
    let mut lo = vec![f64::INFINITY; d];
    let mut hi = vec![f64::NEG_INFINITY; d];
    for (m, s) in mix.means.iter().zip(&mix.stds) {
        for j in 0..d {
            lo[j] = lo[j].min(m[j] - 4.0 * s[j]);
            hi[j] = hi[j].max(m[j] + 4.0 * s[j]);
        }
    }
    (lo, hi)
}

/// Labeled split files: every row ends with a 0/1 outlier flag. Known
/// corpora (pendigits, forestcover, satimage-2) must match their published
/// feature count.
pub fn load_ood_files(name: &str, train: &Path, valid: &Path, test: &Path, opts: &CsvOptions) -> Result<OodCorpus> {
    let mut parts = Vec::new();
    let mut labels = Vec::new();
    for path in [train, valid, test] {
        let m = load_csv(path, opts)?;
        if m.cols() < 2 {
            return Err(data_err(format!("{}: need features plus a label column", path.display())));
        }
        let d = m.cols() - 1;
        for r in 0..m.rows() {
            labels.push(match m.get(r, d) {
                v if v == 0.0 => false,
                v if v == 1.0 => true,
                v => return Err(data_err(format!("{}: row {} has label {v}, expected 0 or 1", path.display(), r + 1))),
            });
        }
        parts.push(m.select_columns(&(0..d).collect::<Vec<_>>()));
    }
    let d = parts[0].cols();
    if let Some(shape) = benchmark_shape(name) {
        if shape.d != d {
            return Err(data_err(format!("{name} has {} features, files have {d}", shape.d)));
        }
    }
    let mut dataset = Dataset::from_splits(name, DataKind::Continuous, &parts[0], &parts[1], &parts[2])?;
    dataset.note = format!("{name} from {}", train.display());
    Ok(OodCorpus { dataset, labels })
}

/// `synth-ood` is generated; any other name needs files.
pub fn make_ood_corpus(name: &str, seed: u64) -> Result<OodCorpus> {
    if name == SYNTH_OOD {
        return synth_ood(&SynthOodSpec::default(), seed);
    }
    Err(data_err(format!(
        "OOD corpus `{name}` is file-backed; supply its split files through a manifest (`{SYNTH_OOD}` is always available)"
    )))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_corpus_has_exactly_one_hundred_outliers() {
        let c = make_ood_corpus(SYNTH_OOD, 4).unwrap();
        assert_eq!(c.dataset.x.rows(), 5000);
        assert_eq!(c.outliers(), 100);
    }

    #[test]
    fn outliers_fall_outside_the_contour() {
        let c = make_ood_corpus(SYNTH_OOD, 9).unwrap();
        let mix = synth_inliers();
        // Analytic check: the contour level from the exact inlier log-density
        // of a fresh sample, independent of the generator's own estimate.
        let t = contour_threshold(&mix, 12345);
        let mut inside = 0;
        for (r, &l) in c.labels.iter().enumerate() {
            if l && mix.log_density_row(c.dataset.x.row(r)) >= t {
                inside += 1;
            }
        }
        // The two quantile estimates differ by Monte-Carlo error only.
        assert!(inside <= 1, "{inside} outliers inside the contour");
    }

    #[test]
    fn unknown_file_corpus_errors() {
        let e = make_ood_corpus("pendigits", 0).unwrap_err().to_string();
        assert!(e.contains("synth-ood"));
    }
}
