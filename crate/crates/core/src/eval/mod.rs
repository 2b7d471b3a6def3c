//! Splits, metrics and experiment reporting.

mod config;
mod metrics;
pub mod plot;
pub mod report;
mod split;

pub use config::{DataConfig, RunConfig};

pub use metrics::{accuracy, accuracy_per_snr, macro_precision, ConfusionMatrix, MetricsReport, SnrAccuracy};
pub use split::{split_dataset, split_records, DatasetSplit, SplitConfig, MIN_CLASS_RECORDS};
