//! Metrics, experiment orchestration and reports.

mod cache;
mod experiment;
mod metrics;
mod report;

pub use cache::{cached_gram, kernel_cache_key, kernel_cache_path, CacheStatus};
pub use experiment::{
    file_sha256, run_experiment, ExperimentResult, ExperimentSpec, InputFile, ModelSpec, RunManifest, STACKER_FOLDS,
    STACKER_PROTOCOL,
};
pub use metrics::{accuracy, check_alignment, confusion_matrix, macro_f1, per_class, ClassMetrics};
pub use report::{deterministic_part, hardware_description, render_table, EvalReport, REPORT_VERSION, ZERO_DIVISION};
