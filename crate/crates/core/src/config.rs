//! Run configuration: presets, `key = value` files and overrides.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::data::{
    bimodal_1d, make_ood_corpus, mixture_dataset, regression_dataset, toy2d, Dataset, DatasetManifest, OodCorpus, ToyDensity, SYNTH_OOD,
};
use crate::error::{config_err, Result, TradeError};
use crate::mmd::KernelSpec;
use crate::model::{DataKind, ModelConfig};
use crate::textconf::{parse_bool, parse_value, KeyValues};
use crate::train::TrainConfig;

pub const PRESETS: [&str; 6] = ["power", "gas", "hepmass", "miniboone", "bsds300", "mnist"];

/// Where rows come from.
#[derive(Clone, Debug, PartialEq)]
pub enum DataSource {
    Toy(String),
    SynthOod,
    Regression8,
    Bimodal1d,
    Manifest(PathBuf),
}

impl FromStr for DataSource {
    type Err = TradeError;

    fn from_str(s: &str) -> Result<Self> {
        if let Some(name) = s.strip_prefix("toy2d:") {
            name.parse::<crate::data::Toy>()?;
            return Ok(DataSource::Toy(name.to_string()));
        }
        Ok(match s {
            "" => return Err(config_err("empty data source")),
            SYNTH_OOD => DataSource::SynthOod,
            "regression8" => DataSource::Regression8,
            "bimodal1d" => DataSource::Bimodal1d,
            path => DataSource::Manifest(PathBuf::from(path)),
        })
    }
}

impl std::fmt::Display for DataSource {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            DataSource::Toy(n) => write!(f, "toy2d:{n}"),
            DataSource::SynthOod => f.write_str(SYNTH_OOD),
            DataSource::Regression8 => f.write_str("regression8"),
            DataSource::Bimodal1d => f.write_str("bimodal1d"),
            DataSource::Manifest(p) => write!(f, "{}", p.display()),
        }
    }
}

/// A loaded dataset plus whatever oracle comes with it.
#[derive(Clone, Debug)]
pub struct LoadedData {
    pub dataset: Dataset,
    pub toy: Option<ToyDensity>,
    pub corpus: Option<OodCorpus>,
}

impl DataSource {
    /// Rows generated when `n` is unset (synthetic sources only).
    pub fn default_rows(&self) -> usize {
        match self {
            DataSource::Toy(_) => 20_000,
            DataSource::Regression8 => 10_000,
            DataSource::Bimodal1d => 5_000,
            DataSource::SynthOod | DataSource::Manifest(_) => 0,
        }
    }

    pub fn load(&self, n: Option<usize>, seed: u64) -> Result<LoadedData> {
        let rows = n.unwrap_or(self.default_rows());
        let plain = |dataset| LoadedData { dataset, toy: None, corpus: None };
        match self {
            DataSource::Toy(name) => {
                let (dataset, toy) = toy2d(name, rows, seed)?;
                Ok(LoadedData {
                    dataset,
                    toy: Some(toy),
                    corpus: None,
                })
            }
            DataSource::Regression8 => Ok(plain(regression_dataset(rows, seed)?)),
            DataSource::Bimodal1d => Ok(plain(mixture_dataset("bimodal1d", &bimodal_1d(), rows, seed)?)),
            DataSource::SynthOod => {
                if n.is_some() {
                    return Err(config_err("synth-ood has a fixed size; drop `data.n`"));
                }
                let corpus = make_ood_corpus(SYNTH_OOD, seed)?;
                Ok(LoadedData {
                    dataset: corpus.dataset.clone(),
                    toy: None,
                    corpus: Some(corpus),
                })
            }
            DataSource::Manifest(path) => {
                if n.is_some() {
                    return Err(config_err("`data.n` only applies to generated data"));
                }
                let m = DatasetManifest::load(path)?;
                if m.labels {
                    let corpus = m.load_labeled()?;
                    return Ok(LoadedData {
                        dataset: corpus.dataset.clone(),
                        toy: None,
                        corpus: Some(corpus),
                    });
                }
                Ok(plain(m.load_dataset()?))
            }
        }
    }
}

/// Everything a run needs. `model.d` and `model.kind` are taken from the
/// data at resolve time.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub preset: Option<String>,
    pub data: DataSource,
    /// Generated rows (synthetic sources).
    pub data_n: Option<usize>,
    pub data_seed: u64,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub out: PathBuf,
    /// Worker threads for independent jobs (ablation variants).
    pub threads: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            preset: None,
            data: DataSource::Toy("two-rings".into()),
            data_n: None,
            data_seed: 0,
            model: ModelConfig::continuous(0),
            train: TrainConfig::default(),
            out: PathBuf::from("runs/latest"),
            threads: 1,
        }
    }
}

struct Preset {
    lambda: f64,
    m: usize,
    layers: usize,
    heads: usize,
    hidden: usize,
    dropout: f64,
    lr: f64,
    batch: usize,
    weight_decay: f64,
    tau: Option<f64>,
}

fn preset_table(name: &str) -> Option<Preset> {
    let p = |lambda, m, layers, heads, hidden, dropout, lr, batch, weight_decay| Preset {
        lambda,
        m,
        layers,
        heads,
        hidden,
        dropout,
        lr,
        batch,
        weight_decay,
        tau: None,
    };
    Some(match name {
        "power" => p(0.2, 150, 5, 8, 512, 0.1, 3e-4, 512, 1e-6),
        "gas" => p(0.1, 100, 8, 16, 400, 0.1, 3e-4, 512, 1e-6),
        "hepmass" => p(0.1, 100, 6, 8, 128, 0.1, 5e-4, 512, 1e-6),
        "miniboone" => p(0.4, 20, 8, 8, 64, 0.2, 5e-4, 64, 0.0),
        "bsds300" => p(0.2, 100, 5, 2, 128, 0.3, 5e-4, 512, 1e-6),
        "mnist" => Preset {
            tau: Some(1.5),
            ..p(0.1, 1, 6, 4, 256, 0.1, 5e-4, 16, 1e-6)
        },
        _ => return None,
    })
}

fn list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    value.split(',').map(|s| parse_value(key, s.trim())).collect()
}

fn optional<T: FromStr>(key: &str, value: &str) -> Result<Option<T>>
where
    T::Err: std::fmt::Display,
{
    if value == "auto" || value == "none" {
        Ok(None)
    } else {
        parse_value(key, value).map(Some)
    }
}

fn join<T: ToString>(v: &[T]) -> String {
    v.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

impl RunConfig {
    /// Defaults with a named hyper-parameter preset applied. The dataset is
    /// left for the caller to supply.
    pub fn from_preset(name: &str) -> Result<Self> {
        let mut c = RunConfig::default();
        c.apply_preset(name)?;
        Ok(c)
    }

    pub fn apply_preset(&mut self, name: &str) -> Result<()> {
        let p = preset_table(name)
            .ok_or_else(|| config_err(format!("unknown preset `{name}` (known: {})", PRESETS.join(", "))))?;
        self.preset = Some(name.to_string());
        self.model.m = p.m;
        self.model.layers = p.layers;
        self.model.heads = p.heads;
        self.model.hidden = p.hidden;
        self.model.ffn_hidden = p.hidden;
        self.model.dropout = p.dropout;
        self.model.gru_per_layer = true;
        self.train.lambda = p.lambda;
        self.train.lr = p.lr;
        self.train.batch_size = p.batch;
        self.train.weight_decay = p.weight_decay;
        self.train.clip_norm = 5.0;
        self.train.epochs = 1000;
        if let Some(t) = p.tau {
            self.train.tau = t;
        }
        Ok(())
    }

    /// Applies a config file: its `run.preset` first, then every other key.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        let kv = KeyValues::parse(text)?;
        if let Some(p) = kv.get("run.preset") {
            self.apply_preset(p)?;
        }
        for (k, (v, line)) in &kv.entries {
            if k == "run.preset" {
                continue;
            }
            self.set(k, v).map_err(|e| match e {
                TradeError::Config(msg) => config_err(format!("line {line}: {msg}")),
                other => other,
            })?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path).map_err(|e| TradeError::io(path, e))?;
        self.apply_text(&text)
    }

    /// Sets one `section.key`; unknown keys are errors.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        let (m, t) = (&mut self.model, &mut self.train);
        match key {
            "run.preset" => self.apply_preset(v)?,
            "run.out" => self.out = PathBuf::from(v),
            "run.seed" => t.seed = parse_value(key, v)?,
            "run.deterministic" => t.deterministic = parse_bool(key, v)?,
            "run.threads" => self.threads = parse_value(key, v)?,
            "data.source" => self.data = v.parse()?,
            "data.n" => self.data_n = optional(key, v)?,
            "data.seed" => self.data_seed = parse_value(key, v)?,
            "model.m" => m.m = parse_value(key, v)?,
            "model.layers" => m.layers = parse_value(key, v)?,
            "model.heads" => m.heads = parse_value(key, v)?,
            "model.hidden" => m.hidden = parse_value(key, v)?,
            "model.ffn_hidden" => m.ffn_hidden = parse_value(key, v)?,
            "model.dropout" => m.dropout = parse_value(key, v)?,
            "model.gru_per_layer" => m.gru_per_layer = parse_bool(key, v)?,
            "model.position_mode" => m.position_mode = v.parse()?,
            "model.backbone" => m.backbone = v.parse()?,
            "train.lambda" => t.lambda = parse_value(key, v)?,
            "train.lr" => t.lr = parse_value(key, v)?,
            "train.batch_size" => t.batch_size = parse_value(key, v)?,
            "train.epochs" => t.epochs = parse_value(key, v)?,
            "train.weight_decay" => t.weight_decay = parse_value(key, v)?,
            "train.clip_norm" => t.clip_norm = parse_value(key, v)?,
            "train.estimator" => t.estimator = parse_value(key, v)?,
            "train.n_model" => t.n_model = optional(key, v)?,
            "train.mmd_only" => t.mmd_only = parse_bool(key, v)?,
            "train.tau" => t.tau = parse_value(key, v)?,
            "train.bandwidths" => t.kernel = KernelSpec::new(list(key, v)?)?,
            "train.feature_order" => t.feature_order = if v == "none" { None } else { Some(list(key, v)?) },
            _ => return Err(config_err(format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    pub fn load_data(&self) -> Result<LoadedData> {
        self.data.load(self.data_n, self.data_seed)
    }

    /// The model config with `d` and the data kind taken from `ds`.
    pub fn model_for(&self, ds: &Dataset) -> Result<ModelConfig> {
        let mut m = self.model.clone();
        m.d = ds.d();
        m.kind = ds.kind.clone();
        if let DataKind::Discrete { .. } = m.kind {
            m.m = 1;
        }
        m.validate()?;
        self.train.validate()?;
        Ok(m)
    }

    /// The fully resolved config in the same `key = value` form it is read
    /// from; feeding it back through [`RunConfig::apply_text`] reproduces
    /// `self`.
    pub fn to_text(&self) -> String {
        let (m, t) = (&self.model, &self.train);
        let opt = |v: Option<usize>| v.map_or("auto".to_string(), |n| n.to_string());
        let mut s = String::new();
        let _ = writeln!(s, "[run]");
        if let Some(p) = &self.preset {
            let _ = writeln!(s, "# preset {p} applied, values below are final");
        }
        let _ = writeln!(s, "out = {}", self.out.display());
        let _ = writeln!(s, "seed = {}", t.seed);
        let _ = writeln!(s, "deterministic = {}", t.deterministic);
        let _ = writeln!(s, "threads = {}", self.threads);
        let _ = writeln!(s, "\n[data]");
        let _ = writeln!(s, "source = {}", self.data);
        let _ = writeln!(s, "n = {}", opt(self.data_n));
        let _ = writeln!(s, "seed = {}", self.data_seed);
        let _ = writeln!(s, "\n[model]");
        let _ = writeln!(s, "m = {}", m.m);
        let _ = writeln!(s, "layers = {}", m.layers);
        let _ = writeln!(s, "heads = {}", m.heads);
        let _ = writeln!(s, "hidden = {}", m.hidden);
        let _ = writeln!(s, "ffn_hidden = {}", m.ffn_hidden);
        let _ = writeln!(s, "dropout = {}", m.dropout);
        let _ = writeln!(s, "gru_per_layer = {}", m.gru_per_layer);
        let _ = writeln!(s, "position_mode = {}", m.position_mode);
        let _ = writeln!(s, "backbone = {}", m.backbone);
        let _ = writeln!(s, "\n[train]");
        let _ = writeln!(s, "lambda = {}", t.lambda);
        let _ = writeln!(s, "lr = {}", t.lr);
        let _ = writeln!(s, "batch_size = {}", t.batch_size);
        let _ = writeln!(s, "epochs = {}", t.epochs);
        let _ = writeln!(s, "weight_decay = {}", t.weight_decay);
        let _ = writeln!(s, "clip_norm = {}", t.clip_norm);
        let _ = writeln!(s, "estimator = {}", t.estimator);
        let _ = writeln!(s, "n_model = {}", opt(t.n_model));
        let _ = writeln!(s, "mmd_only = {}", t.mmd_only);
        let _ = writeln!(s, "tau = {}", t.tau);
        let _ = writeln!(s, "bandwidths = {}", join(&t.kernel.bandwidths));
        let order = t.feature_order.as_deref().map_or("none".to_string(), join);
        let _ = writeln!(s, "feature_order = {order}");
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hepmass_preset() {
        let c = RunConfig::from_preset("hepmass").unwrap();
        assert_eq!(c.train.lambda, 0.1);
        assert_eq!((c.model.m, c.model.layers, c.model.heads, c.model.hidden), (100, 6, 8, 128));
        assert_eq!((c.train.lr, c.train.batch_size, c.train.clip_norm), (5e-4, 512, 5.0));
        assert_eq!(c.train.weight_decay, 1e-6);
        assert_eq!(c.model.dropout, 0.1);
    }

    #[test]
    fn every_preset_resolves_to_a_valid_model() {
        for name in PRESETS {
            let c = RunConfig::from_preset(name).unwrap();
            let mut m = c.model.clone();
            m.d = 4;
            m.validate().unwrap();
            c.train.validate().unwrap();
        }
        assert_eq!(RunConfig::from_preset("mnist").unwrap().train.tau, 1.5);
        assert_eq!(RunConfig::from_preset("miniboone").unwrap().train.batch_size, 64);
        assert!(RunConfig::from_preset("cifar").is_err());
    }

    #[test]
    fn file_overrides_preset_and_round_trips() {
        let mut c = RunConfig::default();
        c.apply_text("[run]\npreset = gas\nseed = 9\n[train]\nepochs = 3\nbandwidths = 1, 2\n[data]\nsource = toy2d:spiral\nn = 500\n")
            .unwrap();
        assert_eq!(c.preset.as_deref(), Some("gas"));
        assert_eq!((c.train.epochs, c.train.seed, c.model.hidden), (3, 9, 400));
        assert_eq!(c.train.kernel.bandwidths, vec![1.0, 2.0]);
        assert_eq!(c.data, DataSource::Toy("spiral".into()));
        let mut back = RunConfig::default();
        back.apply_text(&c.to_text()).unwrap();
        back.preset = c.preset.clone();
        assert_eq!(back, c);
    }

    #[test]
    fn unknown_and_malformed_keys_are_errors() {
        let mut c = RunConfig::default();
        let e = c.apply_text("[train]\nepochz = 3\n").unwrap_err();
        assert!(e.to_string().contains("epochz"), "{e}");
        assert_eq!(e.exit_code(), 2);
        assert!(c.apply_text("[train]\nlr = fast\n").is_err());
        assert!(c.set("model.position_mode", "sinusoid").is_err());
        assert!(c.set("data.source", "toy2d:nope").is_err());
    }

    #[test]
    fn data_sources_parse() {
        assert_eq!("synth-ood".parse::<DataSource>().unwrap(), DataSource::SynthOod);
        assert_eq!("regression8".parse::<DataSource>().unwrap(), DataSource::Regression8);
        assert_eq!(
            "runs/power.manifest".parse::<DataSource>().unwrap(),
            DataSource::Manifest("runs/power.manifest".into())
        );
        assert_eq!(DataSource::Toy("two-rings".into()).to_string(), "toy2d:two-rings");
    }

    #[test]
    fn model_takes_shape_from_data() {
        let mut c = RunConfig::default();
        c.data_n = Some(200);
        let data = c.load_data().unwrap();
        let m = c.model_for(&data.dataset).unwrap();
        assert_eq!(m.d, 2);
        assert!(data.toy.is_some());
    }
}
