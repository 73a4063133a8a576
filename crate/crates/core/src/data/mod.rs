pub mod csv;
pub mod dataset;
pub mod gridio;
pub mod images;
pub mod manifest;
pub mod noise;
pub mod ood;
pub mod synthetic;
pub mod toy;

pub use self::csv::{load_csv, read_csv, write_csv, CsvOptions, HeaderMode};
pub use dataset::{standardize, Dataset, Split, Standardizer};
pub use gridio::{contact_sheet, write_grid_csv, write_grid_pgm, write_pgm};
pub use images::{binarize_dataset, binarize_images, Binarize};
pub use manifest::{benchmark_shape, check_benchmark, BenchmarkShape, DatasetManifest, BENCHMARKS};
pub use noise::{inject_noise, NoiseSpec, NoisyDataset};
pub use ood::{make_ood_corpus, synth_ood, OodCorpus, SynthOodSpec, SYNTH_OOD};
pub use synthetic::{bimodal_1d, entropy_1d, mixture_dataset, regression_dataset, DiagGaussianMixture};
pub use toy::{toy2d, Toy, ToyDensity, TOY_NAMES};

#[cfg(test)]
mod tests;
