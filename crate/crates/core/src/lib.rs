//! Context-aware permutation feature importance (CAPFI) for binary
//! crossing-intention models.
//!
//! The crate is organised around the pipeline a typical analysis follows:
//!
//! 1. [`dataset`] loads a context-tagged manifest and builds the scenario
//!    context subsets (`S_C`, `S_FW`, `S_Stopped`, ...) plus set-algebra
//!    combinations of them.
//! 2. [`synth`] generates manifests with planted feature/label dependencies.
//! 3. [`features`] holds the motion, bounding-box and flattening transforms.
//! 4. [`oracle`] wraps prediction models: a built-in logistic surrogate and
//!    external child-process models speaking a line-delimited protocol.
//! 5. [`metrics`] computes accuracy, ROC AUC and F1.
//! 6. [`engine`] permutes features within and across contexts and turns the
//!    resulting metric drops into importance records.
//! 7. [`cli`] and [`render`] expose all of the above as batch commands.

pub mod cli;
pub mod dataset;
pub mod engine;
pub mod features;
pub mod metrics;
pub mod numfmt;
pub mod oracle;
pub mod render;
pub mod seed;
pub mod stats;
pub mod synth;

pub use dataset::{
    build_subsets, load_manifest, ContextIndex, ContextSet, ContextTags, DatasetError, Dims,
    Label, Manifest, Modality, Sample,
};
pub use engine::{
    compute_pi, cross_context_permute, importance_stats, permute_within_context,
    run_full_analysis, DatasetView, EngineError, ImportanceRecord, ImportanceReport,
    PermutationPlan,
};
pub use features::{flatten, proximity_change_rate, speed_state, FeatureLayout, MotionFeature};
pub use metrics::{Metric, MetricError, MetricTriple, PredictionBatch};
pub use oracle::{BuiltinModel, ExternalOracle, Oracle, OracleError, OracleMeta, TrainConfig};
pub use synth::{generate, plant_check, GeneratorSpec};

/// Version string embedded in every report.
pub const TOOLKIT_VERSION: &str = env!("CARGO_PKG_VERSION");
