//! Context-aware permutation importance.
//!
//! Within a context, a feature's whole per-sample sequences are shuffled
//! among the context members without replacement; labels, other features
//! and non-members stay put. Repetition `j` of a plan draws its shuffle from
//! a stream keyed by `(seed, context notation, feature, j)`, never by the
//! model, so every oracle in a run sees identical shuffles. Cross-context
//! donation instead samples donors with replacement.

mod importance;
mod permute;
mod report;

pub use crate::dataset::DatasetView;
pub use importance::{compute_pi, importance_stats, ImportanceRecord, Scorer, StatsRow};
pub use permute::{
    apply_permutation, cross_context_permute, invert_permutation, permute_within_context,
    CrossPermuted, PermutationPlan, PermutationUnit, PermutedView,
};
pub use report::{
    cross_repetition_seed, run_baseline, run_cross, run_full_analysis, Aggregate, AnalysisConfig,
    BaselineReport, BaselineRow, CellFailure, ContextInfo, CrossReport, CrossRow, ImportanceReport,
    MetricDelta, RunHeader, ShuffleInfo, F1_CONVENTION, REPORT_SCHEMA_VERSION,
};

use crate::metrics::Metric;
use crate::oracle::OracleError;

#[derive(Debug, thiserror::Error)]
pub enum EngineError {
    #[error("context `{0}` is empty")]
    EmptyContext(String),
    #[error("repetition {j} out of range for a plan with {repetitions} repetitions")]
    RepetitionOutOfRange { j: usize, repetitions: usize },
    #[error("repetitions must be at least 1")]
    ZeroRepetitions,
    #[error("baseline {metric} undefined on `{context}`: {reason}")]
    BaselineUndefined {
        context: String,
        metric: Metric,
        reason: String,
    },
    #[error("{metric} absent in every repetition on `{context}`")]
    AllAbsent { context: String, metric: Metric },
    #[error("analysis needs at least one oracle, context, feature and metric")]
    EmptySelection,
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error("report error: {0}")]
    Report(String),
}
