//! Whole-run reports: importance grids, baselines and cross-context swaps.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::importance::{compute_cell, importance_stats, ImportanceRecord, Scorer, StatsRow};
use super::permute::{cross_context_permute, PermutationPlan};
use super::EngineError;
use crate::dataset::{ContextSet, DatasetView, Manifest, Modality};
use crate::features::FeatureLayout;
use crate::metrics::{evaluate_raw, Metric, MetricTriple, DECISION_THRESHOLD};
use crate::oracle::{Oracle, OracleMeta};
use crate::seed::derive_seed;
use crate::stats::mean;

pub const REPORT_SCHEMA_VERSION: u32 = 1;
pub const F1_CONVENTION: &str =
    "F1 = 2TP / (2TP + FP + FN); 1 when there are no positive labels and no positive predictions";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunHeader {
    pub schema_version: u32,
    pub toolkit_version: String,
    pub layout: String,
    pub seed: u64,
    pub decision_threshold: f64,
    pub f1_convention: String,
    pub oracles: Vec<OracleMeta>,
}

impl RunHeader {
    fn new(layout: &FeatureLayout, seed: u64, oracles: &[&dyn Oracle]) -> Self {
        RunHeader {
            schema_version: REPORT_SCHEMA_VERSION,
            toolkit_version: crate::TOOLKIT_VERSION.to_string(),
            layout: layout.fingerprint(),
            seed,
            decision_threshold: DECISION_THRESHOLD,
            f1_convention: F1_CONVENTION.to_string(),
            oracles: oracles.iter().map(|o| o.meta().clone()).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextInfo {
    pub notation: String,
    pub cardinality: usize,
    pub positives: usize,
}

impl ContextInfo {
    fn of(set: &ContextSet, manifest: &Manifest) -> Self {
        ContextInfo {
            notation: set.notation.clone(),
            cardinality: set.cardinality(),
            positives: set.positives(manifest),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShuffleInfo {
    pub context: String,
    pub feature: Modality,
    pub repetitions: usize,
    pub digest: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellFailure {
    pub model: String,
    pub context: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feature: Option<Modality>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metric: Option<Metric>,
    pub error: String,
}

/// PI averaged over contexts, once with equal weights and once weighted by
/// context cardinality.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub model: String,
    pub feature: Modality,
    pub metric: Metric,
    pub contexts: usize,
    pub unweighted_pi: f64,
    pub cardinality_weighted_pi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceReport {
    #[serde(flatten)]
    pub header: RunHeader,
    pub metrics: Vec<Metric>,
    pub features: Vec<Modality>,
    pub contexts: Vec<ContextInfo>,
    pub shuffles: Vec<ShuffleInfo>,
    pub records: Vec<ImportanceRecord>,
    pub failures: Vec<CellFailure>,
    pub stats: Vec<StatsRow>,
    pub aggregates: Vec<Aggregate>,
}

impl ImportanceReport {
    pub fn to_json(&self) -> String {
        crate::numfmt::to_json_string(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, EngineError> {
        let r: ImportanceReport = serde_json::from_str(text).map_err(|e| EngineError::Report(e.to_string()))?;
        if r.header.schema_version != REPORT_SCHEMA_VERSION {
            return Err(EngineError::Report(format!(
                "unsupported report schema {}, expected {REPORT_SCHEMA_VERSION}",
                r.header.schema_version
            )));
        }
        Ok(r)
    }

    pub fn record(&self, model: &str, context: &str, feature: Modality, metric: Metric) -> Option<&ImportanceRecord> {
        self.records
            .iter()
            .find(|r| r.model == model && r.context == context && r.feature == feature && r.metric == metric)
    }
}

/// Settings shared by every cell of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisConfig {
    pub layout: FeatureLayout,
    pub metrics: Vec<Metric>,
    pub seed: u64,
    /// Fixed `N`; `None` uses each context's cardinality.
    pub repetitions: Option<usize>,
}

fn plan_for(feature: Modality, context: &ContextSet, config: &AnalysisConfig) -> Result<PermutationPlan, EngineError> {
    let plan = PermutationPlan::new(feature, context.clone(), config.seed);
    match config.repetitions {
        Some(n) => plan.with_repetitions(n),
        None => Ok(plan),
    }
}

fn aggregates(records: &[ImportanceRecord]) -> Vec<Aggregate> {
    let mut groups: BTreeMap<(&str, Modality, Metric), Vec<(f64, usize)>> = BTreeMap::new();
    let mut order = Vec::new();
    for r in records {
        let key = (r.model.as_str(), r.feature, r.metric);
        groups
            .entry(key)
            .or_insert_with(|| {
                order.push(key);
                Vec::new()
            })
            .push((r.pi, r.cardinality));
    }
    order
        .into_iter()
        .map(|key| {
            let cells = &groups[&key];
            let pis: Vec<f64> = cells.iter().map(|c| c.0).collect();
            let total: usize = cells.iter().map(|c| c.1).sum();
            let weighted = cells.iter().map(|&(pi, c)| pi * c as f64).sum::<f64>() / total as f64;
            Aggregate {
                model: key.0.to_string(),
                feature: key.1,
                metric: key.2,
                contexts: cells.len(),
                unweighted_pi: mean(&pis),
                cardinality_weighted_pi: weighted,
            }
        })
        .collect()
}

/// Evaluate every (oracle, context, feature, metric) cell. Shuffles depend
/// only on `(seed, context, feature, j)`, so every oracle sees the same
/// ones. Cell failures are collected, not fatal.
pub fn run_full_analysis(
    manifest: &Manifest,
    oracles: &[&dyn Oracle],
    contexts: &[ContextSet],
    features: &[Modality],
    config: &AnalysisConfig,
) -> Result<ImportanceReport, EngineError> {
    if oracles.is_empty() || contexts.is_empty() || features.is_empty() || config.metrics.is_empty() {
        return Err(EngineError::EmptySelection);
    }
    let mut plans = Vec::new();
    let mut shuffles = Vec::new();
    for ctx in contexts {
        for &f in features {
            let plan = plan_for(f, ctx, config)?;
            let digest = plan.digest();
            shuffles.push(ShuffleInfo {
                context: ctx.notation.clone(),
                feature: f,
                repetitions: plan.repetitions,
                digest: digest.clone(),
            });
            plans.push((plan, digest));
        }
    }

    let mut records = Vec::new();
    let mut failures = Vec::new();
    for &oracle in oracles {
        let model = oracle.meta().name.clone();
        let scorer = match Scorer::new(oracle, manifest, &config.layout) {
            Ok(s) => s,
            Err(e) => {
                failures.push(CellFailure {
                    model,
                    context: "*".into(),
                    feature: None,
                    metric: None,
                    error: e.to_string(),
                });
                continue;
            }
        };
        for (plan, digest) in &plans {
            match compute_cell(&scorer, manifest, plan, &config.metrics, digest) {
                Ok(cells) => {
                    for (metric, r) in cells {
                        match r {
                            Ok(rec) => records.push(rec),
                            Err(e) => failures.push(CellFailure {
                                model: model.clone(),
                                context: plan.context.notation.clone(),
                                feature: Some(plan.feature),
                                metric: Some(metric),
                                error: e.to_string(),
                            }),
                        }
                    }
                }
                Err(e) => failures.push(CellFailure {
                    model: model.clone(),
                    context: plan.context.notation.clone(),
                    feature: Some(plan.feature),
                    metric: None,
                    error: e.to_string(),
                }),
            }
        }
    }

    Ok(ImportanceReport {
        header: RunHeader::new(&config.layout, config.seed, oracles),
        metrics: config.metrics.clone(),
        features: features.to_vec(),
        contexts: contexts.iter().map(|c| ContextInfo::of(c, manifest)).collect(),
        shuffles,
        stats: importance_stats(&records),
        aggregates: aggregates(&records),
        records,
        failures,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineRow {
    pub model: String,
    pub context: String,
    pub n: usize,
    pub positives: usize,
    pub negatives: usize,
    pub metrics: MetricTriple,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineReport {
    #[serde(flatten)]
    pub header: RunHeader,
    pub rows: Vec<BaselineRow>,
    pub failures: Vec<CellFailure>,
}

impl BaselineReport {
    pub fn to_json(&self) -> String {
        crate::numfmt::to_json_string(self).expect("report serializes")
    }
}

/// Unpermuted metrics per (oracle, context).
pub fn run_baseline(
    manifest: &Manifest,
    oracles: &[&dyn Oracle],
    contexts: &[ContextSet],
    layout: &FeatureLayout,
    seed: u64,
) -> Result<BaselineReport, EngineError> {
    if oracles.is_empty() || contexts.is_empty() {
        return Err(EngineError::EmptySelection);
    }
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    let identity = DatasetView::identity(manifest);
    for &oracle in oracles {
        let model = oracle.meta().name.clone();
        let scorer = match Scorer::new(oracle, manifest, layout) {
            Ok(s) => s,
            Err(e) => {
                failures.push(CellFailure { model, context: "*".into(), feature: None, metric: None, error: e.to_string() });
                continue;
            }
        };
        for ctx in contexts {
            let fail = |error: String| CellFailure {
                model: model.clone(),
                context: ctx.notation.clone(),
                feature: None,
                metric: None,
                error,
            };
            if ctx.is_empty() {
                failures.push(fail(EngineError::EmptyContext(ctx.notation.clone()).to_string()));
                continue;
            }
            let labels: Vec<bool> = ctx.members.iter().map(|&i| manifest.sample(i).label.is_cross()).collect();
            match scorer.scores(&identity, &ctx.members).map_err(EngineError::from).and_then(|s| {
                evaluate_raw(&s, &labels).map_err(|e| EngineError::Report(e.to_string()))
            }) {
                Ok(ev) => {
                    let mut notes = Vec::new();
                    if ev.metrics.auc.is_none() {
                        notes.push("AUC absent: single-class context".to_string());
                    }
                    if let Some(c) = ev.f1_convention {
                        notes.push(c);
                    }
                    rows.push(BaselineRow {
                        model: model.clone(),
                        context: ctx.notation.clone(),
                        n: ev.n,
                        positives: ev.positives,
                        negatives: ev.negatives,
                        metrics: ev.metrics,
                        note: (!notes.is_empty()).then(|| notes.join("; ")),
                    })
                }
                Err(e) => failures.push(fail(e.to_string())),
            }
        }
    }
    Ok(BaselineReport {
        header: RunHeader::new(layout, seed, oracles),
        rows,
        failures,
    })
}

/// Mean permuted metric minus baseline, per metric; `None` where either
/// side is undefined.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricDelta {
    pub acc: Option<f64>,
    pub auc: Option<f64>,
    pub f1: Option<f64>,
}

impl MetricDelta {
    pub fn get(&self, metric: Metric) -> Option<f64> {
        match metric {
            Metric::Acc => self.acc,
            Metric::Auc => self.auc,
            Metric::F1 => self.f1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossRow {
    pub model: String,
    pub baseline: MetricTriple,
    pub permuted: Vec<MetricTriple>,
    pub mean_permuted: MetricDelta,
    pub delta: MetricDelta,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossReport {
    #[serde(flatten)]
    pub header: RunHeader,
    pub feature: Modality,
    pub source: ContextInfo,
    pub donor: ContextInfo,
    pub overlap: usize,
    pub repetitions: usize,
    pub donor_digest: String,
    pub rows: Vec<CrossRow>,
    pub failures: Vec<CellFailure>,
}

impl CrossReport {
    pub fn to_json(&self) -> String {
        crate::numfmt::to_json_string(self).expect("report serializes")
    }
}

/// Seed of repetition `j` of a cross-context run.
pub fn cross_repetition_seed(seed: u64, j: usize) -> u64 {
    derive_seed(seed, "cross-repetition", "", j as u64)
}

/// Swap `feature` from `donor` into `source` `repetitions` times and
/// compare source metrics with the unswapped baseline.
#[allow(clippy::too_many_arguments)]
pub fn run_cross(
    manifest: &Manifest,
    oracles: &[&dyn Oracle],
    feature: Modality,
    source: &ContextSet,
    donor: &ContextSet,
    layout: &FeatureLayout,
    seed: u64,
    repetitions: usize,
) -> Result<CrossReport, EngineError> {
    if oracles.is_empty() {
        return Err(EngineError::EmptySelection);
    }
    if repetitions == 0 {
        return Err(EngineError::ZeroRepetitions);
    }
    let views = (0..repetitions)
        .map(|j| cross_context_permute(manifest, feature, source, donor, cross_repetition_seed(seed, j)))
        .collect::<Result<Vec<_>, _>>()?;
    let mut hasher = <sha2::Sha256 as sha2::Digest>::new();
    for v in &views {
        for &d in &v.donors {
            sha2::Digest::update(&mut hasher, (d as u64).to_le_bytes());
        }
    }
    let donor_digest = hex::encode(sha2::Digest::finalize(hasher));
    let labels: Vec<bool> = source.members.iter().map(|&i| manifest.sample(i).label.is_cross()).collect();
    let identity = DatasetView::identity(manifest);

    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for &oracle in oracles {
        let model = oracle.meta().name.clone();
        let result = (|| -> Result<CrossRow, EngineError> {
            let scorer = Scorer::new(oracle, manifest, layout)?;
            let eval = |view: &DatasetView<'_>| -> Result<MetricTriple, EngineError> {
                let s = scorer.scores(view, &source.members)?;
                Ok(evaluate_raw(&s, &labels).map_err(|e| EngineError::Report(e.to_string()))?.metrics)
            };
            let baseline = eval(&identity)?;
            let permuted = views.iter().map(|v| eval(&v.view)).collect::<Result<Vec<_>, _>>()?;
            let mean_of = |m: Metric| -> Option<f64> {
                let vals: Vec<f64> = permuted.iter().filter_map(|t| t.get(m)).collect();
                (!vals.is_empty()).then(|| mean(&vals))
            };
            let mean_permuted = MetricDelta {
                acc: mean_of(Metric::Acc),
                auc: mean_of(Metric::Auc),
                f1: mean_of(Metric::F1),
            };
            let delta_of = |m: Metric| -> Option<f64> {
                let b = baseline.get(m)?;
                let vals: Vec<f64> = permuted.iter().filter_map(|t| t.get(m)).map(|p| p - b).collect();
                (!vals.is_empty()).then(|| mean(&vals))
            };
            Ok(CrossRow {
                model: model.clone(),
                baseline,
                delta: MetricDelta {
                    acc: delta_of(Metric::Acc),
                    auc: delta_of(Metric::Auc),
                    f1: delta_of(Metric::F1),
                },
                mean_permuted,
                permuted,
            })
        })();
        match result {
            Ok(row) => rows.push(row),
            Err(e) => failures.push(CellFailure {
                model,
                context: source.notation.clone(),
                feature: Some(feature),
                metric: None,
                error: e.to_string(),
            }),
        }
    }

    let donor_members: std::collections::HashSet<usize> = donor.members.iter().copied().collect();
    Ok(CrossReport {
        header: RunHeader::new(layout, seed, oracles),
        feature,
        source: ContextInfo::of(source, manifest),
        donor: ContextInfo::of(donor, manifest),
        overlap: source.members.iter().filter(|i| donor_members.contains(i)).count(),
        repetitions,
        donor_digest,
        rows,
        failures,
    })
}
