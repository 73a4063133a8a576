//! Dataset manifests and the published benchmark shapes.

use std::path::{Path, PathBuf};

use super::csv::{load_csv, CsvOptions, HeaderMode};
use super::dataset::Dataset;
use super::images::{binarize_dataset, Binarize};
use super::ood::{load_ood_files, OodCorpus};
use crate::error::{config_err, data_err, Result, TradeError};
use crate::model::DataKind;
use crate::textconf::{parse_bool, parse_value, KeyValues};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BenchmarkShape {
    pub name: &'static str,
    pub d: usize,
    pub train: usize,
    pub valid: usize,
    pub test: usize,
}

pub const BENCHMARKS: [BenchmarkShape; 9] = [
    BenchmarkShape { name: "power", d: 6, train: 1_659_917, valid: 184_435, test: 204_928 },
    BenchmarkShape { name: "gas", d: 8, train: 852_174, valid: 94_685, test: 105_206 },
    BenchmarkShape { name: "hepmass", d: 21, train: 315_123, valid: 35_013, test: 174_987 },
    BenchmarkShape { name: "miniboone", d: 43, train: 29_556, valid: 3_284, test: 3_648 },
    BenchmarkShape { name: "bsds300", d: 63, train: 1_000_000, valid: 50_000, test: 250_000 },
    BenchmarkShape { name: "mnist", d: 784, train: 50_000, valid: 10_000, test: 10_000 },
    BenchmarkShape { name: "forestcover", d: 10, train: 252_499, valid: 28_055, test: 5_494 },
    BenchmarkShape { name: "pendigits", d: 16, train: 5_903, valid: 655, test: 312 },
    BenchmarkShape { name: "satimage-2", d: 36, train: 5_095, valid: 566, test: 142 },
];

pub fn benchmark_shape(name: &str) -> Option<BenchmarkShape> {
    BENCHMARKS.iter().copied().find(|b| b.name.eq_ignore_ascii_case(name))
}

/// Checks a known benchmark's feature count and, unless `subset` is set,
/// its split sizes. Unknown names pass.
pub fn check_benchmark(name: &str, d: usize, sizes: [usize; 3], subset: bool) -> Result<()> {
    let Some(b) = benchmark_shape(name) else {
        return Ok(());
    };
    if b.d != d {
        return Err(data_err(format!("{} has d={}, files have {d} columns", b.name, b.d)));
    }
    let want = [b.train, b.valid, b.test];
    if !subset && sizes != want {
        return Err(data_err(format!(
            "{} expects train/valid/test sizes {}/{}/{}, files have {}/{}/{} (set `subset = true` for partial files)",
            b.name, want[0], want[1], want[2], sizes[0], sizes[1], sizes[2]
        )));
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub enum ManifestFiles {
    /// One file split at random with the given fractions.
    Single { path: PathBuf, train_frac: f64, valid_frac: f64, seed: u64 },
    Splits { train: PathBuf, valid: PathBuf, test: PathBuf },
}

/// `key = value` description of a dataset on disk:
///
/// ```text
/// name = hepmass
/// kind = continuous          # or discrete:K, or binary-images
/// train = hepmass/train.csv  # or a single `path`
/// valid = hepmass/valid.csv
/// test = hepmass/test.csv
/// ```
///
/// Optional keys: `d`, `delimiter`, `header` (auto|present|absent),
/// `labels` (true when the last column is an outlier flag), `subset`,
/// `binarize` (threshold|stochastic), `train_frac`, `valid_frac`,
/// `split_seed`. Relative paths resolve against the manifest's directory.
#[derive(Clone, Debug, PartialEq)]
pub struct DatasetManifest {
    pub name: String,
    pub kind: ManifestKind,
    pub files: ManifestFiles,
    pub d: Option<usize>,
    pub csv: CsvOptions,
    pub labels: bool,
    pub subset: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub enum ManifestKind {
    Continuous,
    Discrete(usize),
    BinaryImages(Binarize),
}

const MANIFEST_KEYS: [&str; 15] = [
    "name", "kind", "path", "train", "valid", "test", "d", "delimiter", "header", "labels", "subset", "binarize", "train_frac",
    "valid_frac", "split_seed",
];

impl DatasetManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| TradeError::io(path, e))?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let kv = KeyValues::parse(text)?;
        if let Some(k) = kv.entries.keys().find(|k| !MANIFEST_KEYS.contains(&k.as_str())) {
            return Err(config_err(format!("unknown manifest key `{k}`")));
        }
        let req = |k: &str| kv.get(k).ok_or_else(|| config_err(format!("manifest is missing `{k}`")));
        let resolve = |p: &str| {
            let p = PathBuf::from(p);
            if p.is_absolute() {
                p
            } else {
                base.join(p)
            }
        };
        let binarize = match kv.get("binarize") {
            None | Some("threshold") => Binarize::Threshold(0.5),
            Some("stochastic") => Binarize::Stochastic {
                seed: kv.get("split_seed").map(|s| parse_value("split_seed", s)).transpose()?.unwrap_or(0),
            },
            Some(other) => return Err(config_err(format!("`binarize`: expected threshold or stochastic, got `{other}`"))),
        };
        let kind = match req("kind")? {
            "continuous" => ManifestKind::Continuous,
            "binary-images" => ManifestKind::BinaryImages(binarize),
            k => match k.strip_prefix("discrete:") {
                Some(n) => ManifestKind::Discrete(parse_value("kind", n)?),
                None => return Err(config_err(format!("`kind`: expected continuous, discrete:K or binary-images, got `{k}`"))),
            },
        };
        let files = match kv.get("path") {
            Some(p) => ManifestFiles::Single {
                path: resolve(p),
                train_frac: kv.get("train_frac").map(|v| parse_value("train_frac", v)).transpose()?.unwrap_or(0.8),
                valid_frac: kv.get("valid_frac").map(|v| parse_value("valid_frac", v)).transpose()?.unwrap_or(0.1),
                seed: kv.get("split_seed").map(|v| parse_value("split_seed", v)).transpose()?.unwrap_or(0),
            },
            None => ManifestFiles::Splits {
                train: resolve(req("train")?),
                valid: resolve(req("valid")?),
                test: resolve(req("test")?),
            },
        };
        let delimiter = match kv.get("delimiter") {
            None => b',',
            Some("tab" | "\\t") => b'\t',
            Some("space") => b' ',
            Some(s) if s.len() == 1 => s.as_bytes()[0],
            Some(s) => return Err(config_err(format!("`delimiter`: expected one character, got `{s}`"))),
        };
        let header = match kv.get("header") {
            None | Some("auto") => HeaderMode::Auto,
            Some("present") => HeaderMode::Present,
            Some("absent") => HeaderMode::Absent,
            Some(s) => return Err(config_err(format!("`header`: expected auto, present or absent, got `{s}`"))),
        };
        Ok(DatasetManifest {
            name: req("name")?.to_string(),
            kind,
            files,
            d: kv.get("d").map(|v| parse_value("d", v)).transpose()?,
            csv: CsvOptions {
                delimiter,
                header,
                expected_cols: None,
                expected_rows: None,
            },
            labels: kv.get("labels").map(|v| parse_bool("labels", v)).transpose()?.unwrap_or(false),
            subset: kv.get("subset").map(|v| parse_bool("subset", v)).transpose()?.unwrap_or(false),
        })
    }

    fn expected_cols(&self) -> Option<usize> {
        let d = self.d.or_else(|| benchmark_shape(&self.name).map(|b| b.d));
        d.map(|d| d + usize::from(self.labels))
    }

    fn data_kind(&self, d: usize) -> DataKind {
        match self.kind {
            ManifestKind::Continuous => DataKind::Continuous,
            ManifestKind::Discrete(k) => DataKind::Discrete { categories: vec![k; d] },
            ManifestKind::BinaryImages(_) => DataKind::Discrete { categories: vec![2; d] },
        }
    }

    /// Loads the (unlabeled) dataset, validating shapes.
    pub fn load_dataset(&self) -> Result<Dataset> {
        if self.labels {
            return Ok(self.load_labeled()?.dataset);
        }
        let opts = CsvOptions {
            expected_cols: self.expected_cols(),
            ..self.csv
        };
        let mut ds = match &self.files {
            ManifestFiles::Single {
                path,
                train_frac,
                valid_frac,
                seed,
            } => {
                let x = load_csv(path, &opts)?;
                let kind = self.data_kind(x.cols());
                Dataset::with_random_splits(self.name.clone(), x, kind, *train_frac, *valid_frac, *seed)?
            }
            ManifestFiles::Splits { train, valid, test } => {
                let (a, b, c) = (load_csv(train, &opts)?, load_csv(valid, &opts)?, load_csv(test, &opts)?);
                check_benchmark(&self.name, a.cols(), [a.rows(), b.rows(), c.rows()], self.subset)?;
                match self.kind {
                    ManifestKind::BinaryImages(mode) => binarize_dataset(&self.name, &a, &b, &c, mode)?,
                    _ => Dataset::from_splits(self.name.clone(), self.data_kind(a.cols()), &a, &b, &c)?,
                }
            }
        };
        if let ManifestKind::Discrete(k) = self.kind {
            if let Some(v) = ds.x.as_slice().iter().find(|&&v| !(v >= 0.0 && v < k as f64 && v.fract() == 0.0)) {
                return Err(data_err(format!("{}: value {v} is not a category code below {k}", self.name)));
            }
        }
        ds.note = format!("manifest {}", self.name);
        Ok(ds)
    }

    /// Loads split files whose last column is a 0/1 outlier flag.
    pub fn load_labeled(&self) -> Result<OodCorpus> {
        let ManifestFiles::Splits { train, valid, test } = &self.files else {
            return Err(config_err("labeled corpora need separate train/valid/test files"));
        };
        let opts = CsvOptions {
            expected_cols: self.expected_cols(),
            ..self.csv
        };
        let corpus = load_ood_files(&self.name, train, valid, test, &opts)?;
        let ds = &corpus.dataset;
        check_benchmark(&self.name, ds.d(), [ds.train.len(), ds.valid.len(), ds.test.len()], self.subset)?;
        Ok(corpus)
    }
}
