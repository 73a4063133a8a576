use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::forest::{accuracy, mse, ForestConfig, ForestTask, RandomForest};
use super::metrics::{average_precision, mean_and_std, mean_and_stderr};
use super::report::EvalReport;
use crate::data::{inject_noise, Dataset, NoiseSpec, OodCorpus, Split, ToyDensity};
use crate::error::{data_err, Result};
use crate::matrix::Matrix;
use crate::model::{grid_density, FittedModel, GridDensity, LogDensity, ModelConfig};
use crate::train::{fit, TrainConfig};

/// Anything that draws rows in data units.
pub trait SampleSource {
    fn draw(&self, n: usize, rng: &mut dyn RngCore) -> Result<Matrix>;
}

impl SampleSource for FittedModel {
    fn draw(&self, n: usize, rng: &mut dyn RngCore) -> Result<Matrix> {
        self.sample_data(n, rng)
    }
}

impl SampleSource for ToyDensity {
    fn draw(&self, n: usize, rng: &mut dyn RngCore) -> Result<Matrix> {
        Ok(self.sample(n, rng))
    }
}

/// Mean test-split log-likelihood per sample (higher is better) with its
/// standard error.
pub fn test_nll(model: &dyn LogDensity, ds: &Dataset) -> Result<EvalReport> {
    let x = ds.split(Split::Test);
    if x.rows() == 0 {
        return Err(data_err(format!("dataset `{}` has an empty test split", ds.name)));
    }
    let lp = model.log_density(&x)?;
    let (mean, se) = mean_and_stderr(&lp);
    let mut r = EvalReport::new("test_nll", "mean_test_log_likelihood", mean, 0)
        .with("dataset", ds.name.clone())
        .with("rows", x.rows())
        .with("units", "nats per sample")
        .with("uncertainty", "standard error");
    r.uncertainty = Some(se);
    r.values.insert("per_dim".into(), mean / ds.d() as f64);
    Ok(r)
}

#[derive(Clone, Debug)]
pub struct GridComparison {
    pub report: EvalReport,
    pub truth: GridDensity,
    pub model: GridDensity,
}

/// `KL(p‖q)` between two grids after normalizing each to unit sum.
pub fn grid_kl(truth: &GridDensity, model: &GridDensity) -> Result<f64> {
    if truth.log_values.len() != model.log_values.len() {
        return Err(data_err("grids differ in size"));
    }
    let lse = |v: &[f64]| {
        let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
    };
    let (zp, zq) = (lse(&truth.log_values), lse(&model.log_values));
    let mut kl = 0.0;
    for (&lp, &lq) in truth.log_values.iter().zip(&model.log_values) {
        if lp == f64::NEG_INFINITY {
            continue;
        }
        let p = (lp - zp).exp();
        kl += p * ((lp - zp) - (lq - zq));
    }
    Ok(kl)
}

pub fn grid_comparison(model: &dyn LogDensity, toy: &ToyDensity, resolution: usize) -> Result<GridComparison> {
    let bounds = toy.bounds();
    let truth = grid_density(toy, bounds, resolution)?;
    let est = grid_density(model, bounds, resolution)?;
    let kl = grid_kl(&truth, &est)?;
    let mut report = EvalReport::new("grid", "grid_kl", kl, 0)
        .with("toy", toy.name())
        .with("resolution", resolution)
        .with("bounds", format!("{:?}", bounds));
    report.values.insert("model_mass".into(), est.mass);
    report.values.insert("truth_mass".into(), truth.mass);
    Ok(GridComparison { report, truth, model: est })
}

/// Scores rows of `split` by `−log q(x)` and computes average precision
/// against the outlier flags.
pub fn ood_average_precision(model: &dyn LogDensity, corpus: &OodCorpus, split: Split) -> Result<EvalReport> {
    let x = corpus.dataset.split(split);
    let labels = corpus.split_labels(split);
    let scores: Vec<f64> = model.log_density(&x)?.into_iter().map(|v| -v).collect();
    let ap = average_precision(&scores, &labels)?;
    let prevalence = labels.iter().filter(|&&l| l).count() as f64 / labels.len() as f64;
    let mut r = EvalReport::new("ood", "average_precision", ap, 0)
        .with("corpus", corpus.dataset.name.clone())
        .with("split", format!("{split:?}").to_lowercase())
        .with("rows", x.rows())
        .with("score", "negative log-likelihood");
    r.values.insert("prevalence".into(), prevalence);
    Ok(r)
}

fn label_stack(real: &Matrix, synth: &Matrix, cols: &[usize]) -> Result<(Matrix, Vec<f64>)> {
    let x = real.select_columns(cols).vstack(&synth.select_columns(cols))?;
    let y = std::iter::repeat_n(0.0, real.rows()).chain(std::iter::repeat_n(1.0, synth.rows())).collect();
    Ok((x, y))
}

/// Classifier accuracy at telling real from synthetic rows on every
/// feature prefix `x₁, (x₁, x₂), …`: fitted on the `*_fit` pair, scored on
/// the `*_eval` pair. Returns one accuracy per prefix.
pub fn two_sample_accuracy(real_fit: &Matrix, synth_fit: &Matrix, real_eval: &Matrix, synth_eval: &Matrix, rf: &ForestConfig) -> Result<Vec<f64>> {
    let d = real_fit.cols();
    (1..=d)
        .map(|k| {
            let cols: Vec<usize> = (0..k).collect();
            let (x, y) = label_stack(real_fit, synth_fit, &cols)?;
            let forest = RandomForest::fit(&x, &y, ForestTask::Classification, rf)?;
            let (xe, ye) = label_stack(real_eval, synth_eval, &cols)?;
            Ok(accuracy(&forest.predict(&xe), &ye))
        })
        .collect()
}

/// Validation rows vs. as many model samples to fit; test rows vs. fresh
/// samples to score. Mean ± standard deviation over the prefixes.
pub fn two_sample_test(model: &dyn SampleSource, ds: &Dataset, rf: &ForestConfig, seed: u64) -> Result<EvalReport> {
    let (valid, test) = (ds.split(Split::Valid), ds.split(Split::Test));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let synth_fit = model.draw(valid.rows(), &mut rng)?;
    let synth_eval = model.draw(test.rows(), &mut rng)?;
    let accs = two_sample_accuracy(&valid, &synth_fit, &test, &synth_eval, rf)?;
    let (mean, std) = mean_and_std(&accs);
    let mut r = EvalReport::new("two_sample", "classifier_accuracy", mean, seed)
        .with("dataset", ds.name.clone())
        .with("subsets", "nested prefixes")
        .with("fit_rows_per_side", valid.rows())
        .with("eval_rows_per_side", test.rows())
        .with("forest", serde_json::to_value(rf).unwrap_or_default())
        .with("uncertainty", "standard deviation over prefixes");
    r.uncertainty = Some(std);
    for (k, a) in accs.iter().enumerate() {
        r.values.insert(format!("prefix_{}", k + 1), *a);
    }
    Ok(r)
}

fn split_target(x: &Matrix) -> (Matrix, Vec<f64>) {
    let d = x.cols();
    (x.select_columns(&(0..d - 1).collect::<Vec<_>>()), x.column(d - 1))
}

/// Test MSE of a forest regressing the last feature on the others, fitted
/// on the real training split and on `synthetic`.
pub fn regression_with_samples(ds: &Dataset, synthetic: &Matrix, rf: &ForestConfig) -> Result<EvalReport> {
    if ds.d() < 2 {
        return Err(data_err("regression needs at least two features"));
    }
    let (xr, yr) = split_target(&ds.split(Split::Train));
    let (xs, ys) = split_target(synthetic);
    let (xt, yt) = split_target(&ds.split(Split::Test));
    let real = mse(&RandomForest::fit(&xr, &yr, ForestTask::Regression, rf)?.predict(&xt), &yt);
    let synth = mse(&RandomForest::fit(&xs, &ys, ForestTask::Regression, rf)?.predict(&xt), &yt);
    let (_, sd) = mean_and_std(&yt);
    let mut r = EvalReport::new("regression", "mse_gap", synth - real, rf.seed)
        .with("dataset", ds.name.clone())
        .with("target", format!("feature {}", ds.d()))
        .with("train_rows", xr.rows())
        .with("synthetic_rows", xs.rows())
        .with("forest", serde_json::to_value(rf).unwrap_or_default());
    r.values.insert("mse_real".into(), real);
    r.values.insert("mse_synthetic".into(), synth);
    r.values.insert("target_variance".into(), sd * sd);
    Ok(r)
}

/// Draws as many rows as the training split from `model`, then
/// [`regression_with_samples`].
pub fn regression_on_samples(model: &dyn SampleSource, ds: &Dataset, rf: &ForestConfig, seed: u64) -> Result<EvalReport> {
    let synthetic = model.draw(ds.train.len(), &mut ChaCha8Rng::seed_from_u64(seed))?;
    let mut r = regression_with_samples(ds, &synthetic, rf)?;
    r.seed = seed;
    Ok(r)
}

#[derive(Clone, Debug)]
pub struct NoiseRobustness {
    pub report: EvalReport,
    pub clean: FittedModel,
    pub noisy: FittedModel,
}

/// Trains on the clean and on a corrupted training split with identical
/// configs; both are scored on the clean test split (and on the toy grid
/// when given).
pub fn noise_robustness(
    ds: &Dataset,
    model_cfg: &ModelConfig,
    train_cfg: &TrainConfig,
    noise: NoiseSpec,
    fraction: f64,
    toy: Option<(&ToyDensity, usize)>,
) -> Result<NoiseRobustness> {
    let noisy_ds = inject_noise(ds, fraction, noise, train_cfg.seed)?;
    let clean = fit(ds, model_cfg, train_cfg, &mut |_, _| Ok(()))?.best;
    let noisy = fit(&noisy_ds.dataset, model_cfg, train_cfg, &mut |_, _| Ok(()))?.best;
    let (lc, ln) = (test_nll(&clean, ds)?.value, test_nll(&noisy, ds)?.value);
    let mut report = EvalReport::new("noise", "test_ll_degradation", lc - ln, train_cfg.seed)
        .with("dataset", ds.name.clone())
        .with("fraction", fraction)
        .with("scale_train_stds", noise.scale)
        .with("modified_entries", noisy_ds.modified());
    report.values.insert("clean_test_ll".into(), lc);
    report.values.insert("noisy_test_ll".into(), ln);
    if let Some((t, res)) = toy {
        let kc = grid_comparison(&clean, t, res)?.report.value;
        let kn = grid_comparison(&noisy, t, res)?.report.value;
        report.values.insert("clean_grid_kl".into(), kc);
        report.values.insert("noisy_grid_kl".into(), kn);
        report.values.insert("grid_kl_degradation".into(), kn - kc);
    }
    Ok(NoiseRobustness { report, clean, noisy })
}
