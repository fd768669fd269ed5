//! Permutation importance: `PI = (1/N) sum_j (baseline - permuted_j)`.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::permute::{permute_within_context, PermutationPlan};
use super::EngineError;
use crate::dataset::{DatasetView, Manifest, Modality};
use crate::features::FeatureLayout;
use crate::metrics::{Metric, MetricError};
use crate::oracle::{check_layout, predict_checked, AdditiveTable, Oracle, OracleError};
use crate::stats::{summarize, Summary};

/// Scores views of one manifest with one oracle, using the oracle's
/// additive decomposition when it offers one.
pub struct Scorer<'a> {
    oracle: &'a dyn Oracle,
    layout: &'a FeatureLayout,
    table: Option<AdditiveTable>,
}

impl<'a> Scorer<'a> {
    pub fn new(oracle: &'a dyn Oracle, manifest: &Manifest, layout: &'a FeatureLayout) -> Result<Self, OracleError> {
        check_layout(oracle, layout)?;
        let table = oracle
            .additive_table(manifest)
            .filter(|t| t.modalities == layout.modalities);
        Ok(Scorer { oracle, layout, table })
    }

    pub fn oracle(&self) -> &'a dyn Oracle {
        self.oracle
    }

    pub fn scores(&self, view: &DatasetView<'_>, indices: &[usize]) -> Result<Vec<f64>, OracleError> {
        match &self.table {
            Some(t) => Ok(indices.iter().map(|&i| t.score(view, i)).collect()),
            None => {
                let rows = view.flatten_rows(indices, self.layout);
                predict_checked(self.oracle, &rows, self.layout.dim())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceRecord {
    pub model: String,
    pub feature: Modality,
    pub context: String,
    pub metric: Metric,
    pub cardinality: usize,
    pub repetitions: usize,
    pub baseline: f64,
    /// Metric after each repetition's shuffle; `None` where it was undefined.
    pub permuted: Vec<Option<f64>>,
    /// Repetitions whose metric was undefined (excluded from `pi`).
    pub absent: usize,
    /// Mean of `baseline - permuted_j` over the present repetitions.
    pub pi: f64,
    /// Distribution of the present permuted values.
    pub permuted_stats: Summary,
    /// Distribution of the per-repetition scores `baseline - permuted_j`.
    pub score_stats: Summary,
    /// SHA-256 of the permutation index stream; equal for every model.
    pub shuffle_digest: String,
}

impl ImportanceRecord {
    pub fn scores(&self) -> Vec<f64> {
        self.permuted.iter().flatten().map(|p| self.baseline - p).collect()
    }
}

/// Per-metric outcome of one (model, context, feature) cell.
pub(crate) fn compute_cell(
    scorer: &Scorer<'_>,
    manifest: &Manifest,
    plan: &PermutationPlan,
    metrics: &[Metric],
    digest: &str,
) -> Result<Vec<(Metric, Result<ImportanceRecord, EngineError>)>, EngineError> {
    let members = &plan.context.members;
    if members.is_empty() {
        return Err(EngineError::EmptyContext(plan.context.notation.clone()));
    }
    let labels: Vec<bool> = members.iter().map(|&i| manifest.sample(i).label.is_cross()).collect();
    let base_scores = scorer.scores(&DatasetView::identity(manifest), members)?;

    let mut baselines = Vec::with_capacity(metrics.len());
    for &m in metrics {
        baselines.push(m.compute(&base_scores, &labels));
    }
    let wanted: Vec<usize> = (0..metrics.len()).filter(|&k| baselines[k].is_ok()).collect();

    let per_rep: Vec<Vec<Option<f64>>> = (0..plan.repetitions)
        .into_par_iter()
        .map(|j| -> Result<Vec<Option<f64>>, EngineError> {
            if wanted.is_empty() {
                return Ok(vec![None; metrics.len()]);
            }
            let permuted = permute_within_context(manifest, plan, j)?;
            let scores = scorer.scores(&permuted.view, members)?;
            Ok((0..metrics.len())
                .map(|k| {
                    if baselines[k].is_err() {
                        return None;
                    }
                    match metrics[k].compute(&scores, &labels) {
                        Ok(v) => Some(v),
                        Err(MetricError::SingleClass { .. }) => None,
                        Err(e) => panic!("metric error on a validated batch: {e}"),
                    }
                })
                .collect())
        })
        .collect::<Result<_, _>>()?;

    let model = scorer.oracle().meta().name.clone();
    Ok(metrics
        .iter()
        .enumerate()
        .map(|(k, &metric)| {
            let baseline = match &baselines[k] {
                Ok(v) => *v,
                Err(e) => {
                    return (
                        metric,
                        Err(EngineError::BaselineUndefined {
                            context: plan.context.notation.clone(),
                            metric,
                            reason: e.to_string(),
                        }),
                    )
                }
            };
            let permuted: Vec<Option<f64>> = per_rep.iter().map(|r| r[k]).collect();
            let present: Vec<f64> = permuted.iter().flatten().copied().collect();
            if present.is_empty() {
                return (
                    metric,
                    Err(EngineError::AllAbsent {
                        context: plan.context.notation.clone(),
                        metric,
                    }),
                );
            }
            let diffs: Vec<f64> = present.iter().map(|p| baseline - p).collect();
            let pi = diffs.iter().sum::<f64>() / diffs.len() as f64;
            (
                metric,
                Ok(ImportanceRecord {
                    model: model.clone(),
                    feature: plan.feature,
                    context: plan.context.notation.clone(),
                    metric,
                    cardinality: members.len(),
                    repetitions: plan.repetitions,
                    baseline,
                    absent: permuted.len() - present.len(),
                    permuted,
                    pi,
                    permuted_stats: summarize(&present).expect("non-empty"),
                    score_stats: summarize(&diffs).expect("non-empty"),
                    shuffle_digest: digest.to_string(),
                }),
            )
        })
        .collect())
}

/// One record per selected metric for `plan`, scored by `oracle` on the
/// flattened `layout`.
pub fn compute_pi(
    oracle: &dyn Oracle,
    manifest: &Manifest,
    plan: &PermutationPlan,
    metrics: &[Metric],
    layout: &FeatureLayout,
) -> Result<Vec<ImportanceRecord>, EngineError> {
    let scorer = Scorer::new(oracle, manifest, layout)?;
    let digest = plan.digest();
    compute_cell(&scorer, manifest, plan, metrics, &digest)?
        .into_iter()
        .map(|(_, r)| r)
        .collect()
}

/// Pooled importance-score distribution per (feature, context, metric).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsRow {
    pub feature: Modality,
    pub context: String,
    pub metric: Metric,
    pub models: usize,
    pub summary: Summary,
}

/// Pool `baseline - permuted_j` across models and repetitions.
pub fn importance_stats(records: &[ImportanceRecord]) -> Vec<StatsRow> {
    let mut groups: BTreeMap<(Modality, &str, Metric), (usize, Vec<f64>)> = BTreeMap::new();
    let mut order = Vec::new();
    for r in records {
        let key = (r.feature, r.context.as_str(), r.metric);
        let entry = groups.entry(key).or_insert_with(|| {
            order.push(key);
            (0, Vec::new())
        });
        entry.0 += 1;
        entry.1.extend(r.scores());
    }
    order
        .into_iter()
        .filter_map(|key| {
            let (models, values) = &groups[&key];
            summarize(values).map(|summary| StatsRow {
                feature: key.0,
                context: key.1.to_string(),
                metric: key.2,
                models: *models,
                summary,
            })
        })
        .collect()
}
