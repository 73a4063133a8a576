use std::fmt::Write;

use super::report::EvalReport;
use super::tasks::{grid_comparison, test_nll};
use crate::data::{Dataset, ToyDensity};
use crate::error::Result;
use crate::model::{Backbone, ModelConfig, PositionMode};
use crate::train::{fit, TrainConfig};

#[derive(Clone, Debug, PartialEq)]
pub struct Variant {
    pub name: String,
    pub backbone: Backbone,
    pub position_mode: PositionMode,
    pub lambda: f64,
}

/// RNN, transformer without and with sinusoidal positions, the full model
/// without the MMD term, and the full model.
pub fn standard_variants(lambda: f64) -> Vec<Variant> {
    let v = |name: &str, backbone, position_mode, lambda| Variant {
        name: name.into(),
        backbone,
        position_mode,
        lambda,
    };
    vec![
        v("rnn", Backbone::Rnn, PositionMode::None, 0.0),
        v("transformer-no-pe", Backbone::Transformer, PositionMode::None, 0.0),
        v("transformer-fourier-pe", Backbone::Transformer, PositionMode::Fourier, 0.0),
        v("trade-no-mmd", Backbone::Transformer, PositionMode::Gru, 0.0),
        v("trade", Backbone::Transformer, PositionMode::Gru, lambda),
    ]
}

#[derive(Clone, Debug)]
pub struct AblationRow {
    pub variant: Variant,
    pub report: EvalReport,
    pub grid_kl: Option<f64>,
}

fn run_one(ds: &Dataset, base: &ModelConfig, train: &TrainConfig, v: &Variant, toy: Option<(&ToyDensity, usize)>) -> Result<AblationRow> {
    let model_cfg = ModelConfig {
        backbone: v.backbone,
        position_mode: v.position_mode,
        ..base.clone()
    };
    let train_cfg = TrainConfig {
        lambda: v.lambda,
        ..train.clone()
    };
    let fitted = fit(ds, &model_cfg, &train_cfg, &mut |_, _| Ok(()))?.best;
    let mut report = test_nll(&fitted, ds)?
        .with("variant", v.name.clone())
        .with("backbone", v.backbone.to_string())
        .with("position_mode", v.position_mode.to_string())
        .with("lambda", v.lambda)
        .with("epochs", train.epochs);
    report.task = "ablation".into();
    report.seed = train.seed;
    let grid_kl = match toy {
        Some((t, res)) => Some(grid_comparison(&fitted, t, res)?.report.value),
        None => None,
    };
    if let Some(k) = grid_kl {
        report.values.insert("grid_kl".into(), k);
    }
    Ok(AblationRow {
        variant: v.clone(),
        report,
        grid_kl,
    })
}

/// One row per variant, sharing seed and budget. With `concurrent` each
/// variant trains on its own thread; results do not depend on scheduling.
pub fn ablation_run(
    ds: &Dataset,
    base: &ModelConfig,
    train: &TrainConfig,
    variants: &[Variant],
    toy: Option<(&ToyDensity, usize)>,
    concurrent: bool,
) -> Result<Vec<AblationRow>> {
    if !concurrent {
        return variants.iter().map(|v| run_one(ds, base, train, v, toy)).collect();
    }
    std::thread::scope(|s| {
        let handles: Vec<_> = variants.iter().map(|v| s.spawn(move || run_one(ds, base, train, v, toy))).collect();
        handles.into_iter().map(|h| h.join().expect("ablation worker panicked")).collect()
    })
}

pub fn format_ablation_table(rows: &[AblationRow]) -> String {
    let width = rows.iter().map(|r| r.variant.name.len()).max().unwrap_or(7).max(7);
    let mut s = format!("{:<width$}  {:>12}  {:>10}  {:>10}\n", "variant", "test_ll", "stderr", "grid_kl");
    for r in rows {
        let kl = r.grid_kl.map_or("-".to_string(), |k| format!("{k:.5}"));
        let _ = writeln!(
            s,
            "{:<width$}  {:>12.5}  {:>10.5}  {:>10}",
            r.variant.name,
            r.report.value,
            r.report.uncertainty.unwrap_or(0.0),
            kl
        );
    }
    s
}

pub fn format_ablation_csv(rows: &[AblationRow]) -> String {
    let mut s = String::from("variant,backbone,position_mode,lambda,test_ll,stderr,grid_kl\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{}",
            r.variant.name,
            r.variant.backbone,
            r.variant.position_mode,
            r.variant.lambda,
            r.report.value,
            r.report.uncertainty.unwrap_or(0.0),
            r.grid_kl.map_or(String::new(), |k| k.to_string())
        );
    }
    s
}
