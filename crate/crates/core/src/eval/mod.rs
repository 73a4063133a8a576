//! Held-out likelihood, grid comparison, OOD average precision, classifier
//! two-sample test, regression on samples, noise robustness and ablations.

mod ablation;
mod forest;
mod metrics;
mod report;
mod tasks;

pub use ablation::{ablation_run, format_ablation_csv, format_ablation_table, standard_variants, AblationRow, Variant};
pub use forest::{accuracy, mse, ForestConfig, ForestTask, RandomForest};
pub use metrics::{average_precision, mean_and_std, mean_and_stderr};
pub use report::{append_report, read_reports, EvalReport};
pub use tasks::{
    grid_comparison, grid_kl, noise_robustness, ood_average_precision, regression_on_samples, regression_with_samples, test_nll,
    two_sample_accuracy, two_sample_test, GridComparison, NoiseRobustness, SampleSource,
};
