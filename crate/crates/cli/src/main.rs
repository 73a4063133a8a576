use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use trade::config::{LoadedData, RunConfig};
use trade::data::{contact_sheet, write_csv, write_grid_csv, write_grid_pgm, write_pgm, NoiseSpec, Split};
use trade::error::{Result, TradeError};
use trade::eval::*;
use trade::model::{load_checkpoint, save_checkpoint, DataKind, FittedModel, LogDensity, ModelConfig, CHECKPOINT_VERSION};
use trade::train::fit;

#[derive(Parser)]
#[command(name = "trade", about = "Autoregressive density estimation with self-attention and an MMD penalty")]
struct Cli {
    /// Worker threads for independent jobs (ablation variants).
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,
    /// Leave wall-clock times out of metric logs so reruns compare byte for byte.
    #[arg(long, global = true)]
    deterministic: bool,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Fit a model and write checkpoints, the metric log and the resolved config.
    Train(TrainArgs),
    /// Score a checkpoint on one evaluation task.
    Eval(EvalArgs),
    /// Draw rows from a checkpoint as CSV in data units.
    Sample(SampleArgs),
}

/// Settings shared by every command that resolves a run config.
#[derive(Args)]
struct RunArgs {
    /// `key = value` config file with [run] [data] [model] [train] sections.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Hyper-parameter preset: power, gas, hepmass, miniboone, bsds300, mnist.
    #[arg(long)]
    preset: Option<String>,
    /// toy2d:NAME, synth-ood, regression8, bimodal1d or a manifest path.
    #[arg(long)]
    data: Option<String>,
    /// Rows to generate for synthetic data.
    #[arg(long)]
    data_n: Option<usize>,
    #[arg(long)]
    data_seed: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    /// Comma-separated data columns in model order.
    #[arg(long)]
    feature_order: Option<String>,
    /// Any config key, e.g. `--set model.hidden=64`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Task {
    Nll,
    Grid,
    Ood,
    TwoSample,
    Regression,
    Noise,
    Ablate,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long, value_enum)]
    task: Task,
    #[command(flatten)]
    run: RunArgs,
    /// Directory for grids, tables and `results.jsonl` (default: next to the checkpoint).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Grid points per axis for `grid`.
    #[arg(long, default_value_t = 256)]
    resolution: usize,
    /// Fraction of training entries to corrupt for `noise`.
    #[arg(long, default_value_t = 0.1)]
    fraction: f64,
    /// Noise scale in training standard deviations for `noise`.
    #[arg(long, default_value_t = NoiseSpec::default().scale)]
    noise_scale: f64,
    /// Trees in the random forests of `two-sample` and `regression`.
    #[arg(long, default_value_t = ForestConfig::default().trees)]
    trees: usize,
}

#[derive(Args)]
struct SampleArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(short = 'n', long = "rows")]
    n: i64,
    /// CSV file; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Also write the samples as a PGM contact sheet (square binary images).
    #[arg(long)]
    pgm: Option<PathBuf>,
}

fn main() -> ExitCode {
    let version = format!("{} (checkpoint format {CHECKPOINT_VERSION})", env!("CARGO_PKG_VERSION"));
    let matches = Cli::command().version(version).get_matches();
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => e.exit(),
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.cmd {
        Cmd::Train(a) => train(a, cli.threads, cli.deterministic),
        Cmd::Eval(a) => eval(a, cli.threads, cli.deterministic),
        Cmd::Sample(a) => sample(a),
    }
}

fn config_error(msg: impl Into<String>) -> TradeError {
    TradeError::Config(msg.into())
}

fn resolve(base: RunConfig, a: &RunArgs, threads: usize, deterministic: bool) -> Result<RunConfig> {
    let mut c = base;
    if let Some(p) = &a.preset {
        c.apply_preset(p)?;
    }
    if let Some(path) = &a.config {
        c.apply_file(path)?;
    }
    let pairs = [
        ("data.source", a.data.clone()),
        ("data.n", a.data_n.map(|v| v.to_string())),
        ("data.seed", a.data_seed.map(|v| v.to_string())),
        ("run.seed", a.seed.map(|v| v.to_string())),
        ("train.epochs", a.epochs.map(|v| v.to_string())),
        ("train.lambda", a.lambda.map(|v| v.to_string())),
        ("train.lr", a.lr.map(|v| v.to_string())),
        ("train.batch_size", a.batch_size.map(|v| v.to_string())),
        ("train.feature_order", a.feature_order.clone()),
    ];
    for (k, v) in pairs {
        if let Some(v) = v {
            c.set(k, &v)?;
        }
    }
    for s in &a.sets {
        let (k, v) = s.split_once('=').ok_or_else(|| config_error(format!("--set expects KEY=VALUE, got `{s}`")))?;
        c.set(k.trim(), v)?;
    }
    if threads == 0 {
        return Err(config_error("--threads must be at least 1"));
    }
    if threads > 1 {
        c.threads = threads;
    }
    if deterministic {
        c.train.deterministic = true;
    }
    Ok(c)
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| TradeError::io(dir, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| TradeError::io(path, e))
}

fn train(a: TrainArgs, threads: usize, deterministic: bool) -> Result<()> {
    let mut cfg = resolve(RunConfig::default(), &a.run, threads, deterministic)?;
    if let Some(out) = a.out {
        cfg.out = out;
    }
    let data = cfg.load_data()?;
    let model_cfg = cfg.model_for(&data.dataset)?;
    let out = cfg.out.clone();
    create_dir(&out)?;
    write_text(&out.join("config.txt"), &cfg.to_text())?;

    let log_path = out.join("metrics.jsonl");
    let mut log = fs::File::create(&log_path).map_err(|e| TradeError::io(&log_path, e))?;
    let best_path = out.join("best.ckpt");
    let result = fit(&data.dataset, &model_cfg, &cfg.train, &mut |rec, best| {
        let line = serde_json::to_string(rec).map_err(|e| config_error(e.to_string()))?;
        writeln!(log, "{line}").map_err(|e| TradeError::io(&log_path, e))?;
        if let Some(b) = best {
            save_checkpoint(&best_path, b)?;
        }
        Ok(())
    })?;
    save_checkpoint(&out.join("final.ckpt"), &result.last)?;
    println!(
        "{}: best epoch {} of {}, valid nll {:.6}, test nll {:.6} ({:.6} per dim)",
        data.dataset.name,
        result.best_epoch,
        cfg.train.epochs,
        result.best_valid_nll,
        result.test_nll,
        result.test_nll_per_dim
    );
    println!("wrote {}", out.display());
    Ok(())
}

/// Config for a checkpoint: the run directory's own config when present.
fn checkpoint_base(checkpoint: Option<&Path>) -> Result<RunConfig> {
    let mut base = RunConfig::default();
    if let Some(dir) = checkpoint.and_then(Path::parent) {
        let echoed = dir.join("config.txt");
        if echoed.is_file() {
            base.apply_file(&echoed)?;
        }
    }
    Ok(base)
}

fn need_model(model: &Option<FittedModel>, task: &str) -> Result<FittedModel> {
    model.clone().ok_or_else(|| config_error(format!("task `{task}` needs --checkpoint")))
}

fn check_shape(model: &FittedModel, data: &LoadedData) -> Result<()> {
    let (md, dd) = (LogDensity::dim(model), data.dataset.d());
    if md != dd {
        return Err(TradeError::Data(format!(
            "checkpoint models {md} features but dataset `{}` has {dd}",
            data.dataset.name
        )));
    }
    Ok(())
}

fn eval(a: EvalArgs, threads: usize, deterministic: bool) -> Result<()> {
    let base = checkpoint_base(a.checkpoint.as_deref())?;
    let cfg = resolve(base, &a.run, threads, deterministic)?;
    let model = a.checkpoint.as_deref().map(load_checkpoint).transpose()?;
    let out = match (&a.out, &a.checkpoint) {
        (Some(o), _) => o.clone(),
        (None, Some(c)) => c.parent().map(Path::to_path_buf).unwrap_or_default(),
        (None, None) => cfg.out.clone(),
    };
    let out = if out.as_os_str().is_empty() { PathBuf::from(".") } else { out };
    create_dir(&out)?;
    let data = cfg.load_data()?;
    if let Some(m) = &model {
        check_shape(m, &data)?;
    }
    let seed = cfg.train.seed;
    let rf = ForestConfig {
        trees: a.trees,
        seed,
        ..Default::default()
    };
    let ds = &data.dataset;
    let report = match a.task {
        Task::Nll => test_nll(&need_model(&model, "nll")?, ds)?,
        Task::Grid => {
            let m = need_model(&model, "grid")?;
            let toy = data
                .toy
                .as_ref()
                .ok_or_else(|| config_error("task `grid` needs toy2d data (e.g. --data toy2d:two-rings)"))?;
            let g = grid_comparison(&m, toy, a.resolution)?;
            write_grid_pgm(&out.join("truth.pgm"), &g.truth)?;
            write_grid_pgm(&out.join("model.pgm"), &g.model)?;
            write_grid_csv(&out.join("truth.csv"), &g.truth)?;
            write_grid_csv(&out.join("model.csv"), &g.model)?;
            g.report
        }
        Task::Ood => {
            let corpus = data
                .corpus
                .as_ref()
                .ok_or_else(|| config_error("task `ood` needs labeled data (synth-ood or a manifest with labels = true)"))?;
            ood_average_precision(&need_model(&model, "ood")?, corpus, Split::Test)?
        }
        Task::TwoSample => two_sample_test(&need_model(&model, "two-sample")?, ds, &rf, seed)?,
        Task::Regression => regression_on_samples(&need_model(&model, "regression")?, ds, &rf, seed)?,
        Task::Noise => {
            let model_cfg = base_model(&cfg, &model, &data)?;
            let toy = data.toy.as_ref().map(|t| (t, a.resolution));
            noise_robustness(ds, &model_cfg, &cfg.train, NoiseSpec { scale: a.noise_scale }, a.fraction, toy)?.report
        }
        Task::Ablate => {
            let model_cfg = base_model(&cfg, &model, &data)?;
            let toy = data.toy.as_ref().map(|t| (t, a.resolution));
            let rows = ablation_run(ds, &model_cfg, &cfg.train, &standard_variants(cfg.train.lambda), toy, cfg.threads > 1)?;
            let table = format_ablation_table(&rows);
            write_text(&out.join("ablation.txt"), &table)?;
            write_text(&out.join("ablation.csv"), &format_ablation_csv(&rows))?;
            print!("{table}");
            for r in &rows {
                append_report(&out.join("results.jsonl"), &r.report)?;
            }
            return Ok(());
        }
    };
    append_report(&out.join("results.jsonl"), &report)?;
    println!("{}", report.summary());
    Ok(())
}

/// Architecture for tasks that train from scratch: the checkpoint's when one
/// is given, otherwise the run config's.
fn base_model(cfg: &RunConfig, model: &Option<FittedModel>, data: &LoadedData) -> Result<ModelConfig> {
    let c = match model {
        Some(m) => m.model.config().clone(),
        None => cfg.model_for(&data.dataset)?,
    };
    cfg.train.validate()?;
    Ok(c)
}

fn sample(a: SampleArgs) -> Result<()> {
    if a.n <= 0 {
        return Err(config_error(format!("-n must be positive, got {}", a.n)));
    }
    let model = load_checkpoint(&a.checkpoint)?;
    let x = model.sample_data(a.n as usize, &mut ChaCha8Rng::seed_from_u64(a.seed))?;
    match &a.out {
        Some(path) => write_csv(path, &x, None)?,
        None => {
            let stdout = std::io::stdout();
            let mut w = stdout.lock();
            for r in 0..x.rows() {
                let line: Vec<String> = x.row(r).iter().map(f64::to_string).collect();
                writeln!(w, "{}", line.join(",")).map_err(|e| TradeError::io("<stdout>", e))?;
            }
        }
    }
    if let Some(pgm) = &a.pgm {
        let side = (x.cols() as f64).sqrt().round() as usize;
        let binary = matches!(&model.model.config().kind, DataKind::Discrete { categories } if categories.iter().all(|&k| k == 2));
        if side * side != x.cols() || !binary {
            return Err(config_error("--pgm needs a binary model whose dimension is a perfect square"));
        }
        let images: Vec<Vec<f64>> = (0..x.rows()).map(|r| x.row(r).to_vec()).collect();
        let cols = (x.rows() as f64).sqrt().ceil() as usize;
        let (w, h, pixels) = contact_sheet(&images, side, cols)?;
        write_pgm(pgm, w, h, &pixels)?;
    }
    Ok(())
}
