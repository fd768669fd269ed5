//! Accuracy, ROC AUC and F1 for binary crossing predictions.
//!
//! Hard labels come from a fixed threshold: a score `>= 0.5` predicts crossing.
//! AUC is the Mann–Whitney concordance computed from mid-ranks, so ties count
//! one half. It is undefined for single-class batches and reported as absent
//! rather than as a number.

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

pub const DECISION_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MetricError {
    #[error("empty batch")]
    Empty,
    #[error("AUC undefined: batch has {positives} positive and {negatives} negative labels")]
    SingleClass { positives: usize, negatives: usize },
    #[error("scores and labels differ in length ({scores} vs {labels})")]
    LengthMismatch { scores: usize, labels: usize },
    #[error("score {0} outside [0, 1]")]
    ScoreOutOfRange(f64),
    #[error("duplicate prediction id `{0}`")]
    DuplicateId(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Acc,
    Auc,
    F1,
}

impl Metric {
    pub const ALL: [Metric; 3] = [Metric::Acc, Metric::Auc, Metric::F1];

    pub fn as_str(self) -> &'static str {
        match self {
            Metric::Acc => "acc",
            Metric::Auc => "auc",
            Metric::F1 => "f1",
        }
    }

    /// Compute this metric on raw scores and labels.
    pub fn compute(self, scores: &[f64], labels: &[bool]) -> Result<f64, MetricError> {
        match self {
            Metric::Acc => accuracy_raw(scores, labels),
            Metric::Auc => auc_raw(scores, labels),
            Metric::F1 => f1_raw(scores, labels),
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Metric {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "acc" | "accuracy" => Ok(Metric::Acc),
            "auc" => Ok(Metric::Auc),
            "f1" => Ok(Metric::F1),
            other => Err(format!("unknown metric `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub id: String,
    pub score: f64,
    pub truth: bool,
}

impl Prediction {
    pub fn hard_label(&self) -> bool {
        self.score >= DECISION_THRESHOLD
    }
}

/// A validated set of predictions: scores in `[0, 1]`, unique ids.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionBatch {
    scores: Vec<f64>,
    labels: Vec<bool>,
    ids: Vec<String>,
}

impl PredictionBatch {
    pub fn new(predictions: Vec<Prediction>) -> Result<Self, MetricError> {
        let mut seen = HashSet::with_capacity(predictions.len());
        let mut batch = PredictionBatch {
            scores: Vec::with_capacity(predictions.len()),
            labels: Vec::with_capacity(predictions.len()),
            ids: Vec::with_capacity(predictions.len()),
        };
        for p in predictions {
            check_score(p.score)?;
            if !seen.insert(p.id.clone()) {
                return Err(MetricError::DuplicateId(p.id));
            }
            batch.scores.push(p.score);
            batch.labels.push(p.truth);
            batch.ids.push(p.id);
        }
        Ok(batch)
    }

    /// Build from parallel score / label slices with positional ids.
    pub fn from_scores(scores: &[f64], labels: &[bool]) -> Result<Self, MetricError> {
        check_lengths(scores, labels)?;
        Self::new(
            scores
                .iter()
                .zip(labels)
                .enumerate()
                .map(|(i, (&score, &truth))| Prediction {
                    id: i.to_string(),
                    score,
                    truth,
                })
                .collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn labels(&self) -> &[bool] {
        &self.labels
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }
}

fn check_score(s: f64) -> Result<(), MetricError> {
    if (0.0..=1.0).contains(&s) {
        Ok(())
    } else {
        Err(MetricError::ScoreOutOfRange(s))
    }
}

fn check_lengths(scores: &[f64], labels: &[bool]) -> Result<(), MetricError> {
    if scores.len() != labels.len() {
        return Err(MetricError::LengthMismatch {
            scores: scores.len(),
            labels: labels.len(),
        });
    }
    Ok(())
}

/// Confusion counts at the fixed decision threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

impl Confusion {
    pub fn from_scores(scores: &[f64], labels: &[bool]) -> Self {
        let mut c = Confusion::default();
        for (&s, &y) in scores.iter().zip(labels) {
            match (s >= DECISION_THRESHOLD, y) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, false) => c.tn += 1,
                (false, true) => c.fn_ += 1,
            }
        }
        c
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }

    /// F1 with the degenerate conventions: no positive labels and no positive
    /// predictions gives 1; otherwise zero precision plus recall gives 0.
    pub fn f1(&self) -> f64 {
        if self.tp + self.fp + self.fn_ == 0 {
            return 1.0;
        }
        // 2PR / (P + R) reduces to 2TP / (2TP + FP + FN)
        let tp = self.tp as f64;
        2.0 * tp / (2.0 * tp + self.fp as f64 + self.fn_ as f64)
    }
}

pub fn accuracy_raw(scores: &[f64], labels: &[bool]) -> Result<f64, MetricError> {
    check_lengths(scores, labels)?;
    if scores.is_empty() {
        return Err(MetricError::Empty);
    }
    let c = Confusion::from_scores(scores, labels);
    Ok((c.tp + c.tn) as f64 / c.total() as f64)
}

pub fn f1_raw(scores: &[f64], labels: &[bool]) -> Result<f64, MetricError> {
    check_lengths(scores, labels)?;
    if scores.is_empty() {
        return Err(MetricError::Empty);
    }
    Ok(Confusion::from_scores(scores, labels).f1())
}

/// Rank-sum AUC with mid-ranks for ties.
pub fn auc_raw(scores: &[f64], labels: &[bool]) -> Result<f64, MetricError> {
    check_lengths(scores, labels)?;
    let positives = labels.iter().filter(|&&y| y).count();
    let negatives = labels.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(MetricError::SingleClass { positives, negatives });
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    // sum of 1-based mid-ranks over positives
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        let mid_rank = (i + 1 + j) as f64 / 2.0;
        let tied_pos = order[i..j].iter().filter(|&&k| labels[k]).count();
        rank_sum += mid_rank * tied_pos as f64;
        i = j;
    }
    let (p, n) = (positives as f64, negatives as f64);
    let u = rank_sum - p * (p + 1.0) / 2.0;
    Ok(u / (p * n))
}

pub fn accuracy(batch: &PredictionBatch) -> Result<f64, MetricError> {
    accuracy_raw(&batch.scores, &batch.labels)
}

pub fn auc_roc(batch: &PredictionBatch) -> Result<f64, MetricError> {
    auc_raw(&batch.scores, &batch.labels)
}

pub fn f1(batch: &PredictionBatch) -> Result<f64, MetricError> {
    f1_raw(&batch.scores, &batch.labels)
}

/// Accuracy, AUC and F1 of one evaluation pass. `auc` is `None` when the
/// batch holds a single class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricTriple {
    pub acc: f64,
    pub auc: Option<f64>,
    pub f1: f64,
}

impl MetricTriple {
    pub fn get(&self, metric: Metric) -> Option<f64> {
        match metric {
            Metric::Acc => Some(self.acc),
            Metric::Auc => self.auc,
            Metric::F1 => Some(self.f1),
        }
    }
}

/// A [`MetricTriple`] with the sample count and class balance it came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub metrics: MetricTriple,
    pub n: usize,
    pub positives: usize,
    pub negatives: usize,
    pub confusion: Confusion,
    /// Set when F1 came from the no-positives convention.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub f1_convention: Option<String>,
}

pub fn evaluate(batch: &PredictionBatch) -> Result<Evaluation, MetricError> {
    evaluate_raw(&batch.scores, &batch.labels)
}

pub fn evaluate_raw(scores: &[f64], labels: &[bool]) -> Result<Evaluation, MetricError> {
    let acc = accuracy_raw(scores, labels)?;
    let f1 = f1_raw(scores, labels)?;
    let auc = match auc_raw(scores, labels) {
        Ok(v) => Some(v),
        Err(MetricError::SingleClass { .. }) => None,
        Err(e) => return Err(e),
    };
    let confusion = Confusion::from_scores(scores, labels);
    let positives = labels.iter().filter(|&&y| y).count();
    let f1_convention = (confusion.tp + confusion.fp + confusion.fn_ == 0)
        .then(|| "no positive labels and no positive predictions: F1 := 1".to_string());
    Ok(Evaluation {
        metrics: MetricTriple { acc, auc, f1 },
        n: labels.len(),
        positives,
        negatives: labels.len() - positives,
        confusion,
        f1_convention,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// O(n²) concordance over all positive/negative pairs; ties count ½.
    fn pairwise_auc(scores: &[f64], labels: &[bool]) -> f64 {
        let mut num = 0.0;
        let mut pairs = 0.0;
        for (i, &yi) in labels.iter().enumerate() {
            if !yi {
                continue;
            }
            for (j, &yj) in labels.iter().enumerate() {
                if yj {
                    continue;
                }
                pairs += 1.0;
                if scores[i] > scores[j] {
                    num += 1.0;
                } else if scores[i] == scores[j] {
                    num += 0.5;
                }
            }
        }
        num / pairs
    }

    #[test]
    fn accuracy_examples() {
        assert_eq!(accuracy_raw(&[0.9, 0.1], &[true, false]).unwrap(), 1.0);
        assert_eq!(accuracy_raw(&[0.1, 0.9], &[true, false]).unwrap(), 0.0);
        assert_eq!(accuracy_raw(&[0.9, 0.1, 0.7, 0.2], &[true, false, true, true]).unwrap(), 0.75);
        assert_eq!(accuracy_raw(&[], &[]), Err(MetricError::Empty));
    }

    #[test]
    fn auc_examples() {
        let s = [0.1, 0.4, 0.35, 0.8];
        let y = [false, false, true, true];
        assert_eq!(pairwise_auc(&s, &y), 0.75);
        assert_eq!(auc_raw(&s, &y).unwrap(), 0.75);
        assert_eq!(auc_raw(&[0.1, 0.2, 0.8, 0.9], &[false, false, true, true]).unwrap(), 1.0);
        assert_eq!(auc_raw(&[0.3; 5], &[true, false, true, false, false]).unwrap(), 0.5);
        assert_eq!(
            auc_raw(&[0.3, 0.6], &[true, true]),
            Err(MetricError::SingleClass { positives: 2, negatives: 0 })
        );
    }

    #[test]
    fn f1_examples() {
        // TP=2, FP=1, FN=1
        let s = [0.9, 0.8, 0.7, 0.1, 0.2];
        let y = [true, true, false, true, false];
        assert!((f1_raw(&s, &y).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        // all negative, all correct
        assert_eq!(f1_raw(&[0.1, 0.2], &[false, false]).unwrap(), 1.0);
        // TP=0, FP>0
        assert_eq!(f1_raw(&[0.9, 0.2], &[false, false]).unwrap(), 0.0);
        assert_eq!(f1_raw(&[0.1, 0.2], &[true, false]).unwrap(), 0.0);
    }

    #[test]
    fn evaluate_bundles_triple() {
        let e = evaluate_raw(&[0.9, 0.1, 0.8, 0.3], &[true, false, true, false]).unwrap();
        assert_eq!(e.metrics, MetricTriple { acc: 1.0, auc: Some(1.0), f1: 1.0 });
        assert_eq!((e.n, e.positives, e.negatives), (4, 2, 2));

        // hand fixture: scores/labels chosen so TP=2 FP=1 TN=2 FN=1
        let s = [0.9, 0.6, 0.55, 0.4, 0.2, 0.1];
        let y = [true, true, false, true, false, false];
        let e = evaluate_raw(&s, &y).unwrap();
        assert!((e.metrics.acc - 4.0 / 6.0).abs() < 1e-15);
        assert!((e.metrics.f1 - 4.0 / 6.0).abs() < 1e-15);
        // concordant pairs: 0.9 beats all 3 negatives, 0.6 beats 3, 0.4 beats 2 → 8/9
        assert!((e.metrics.auc.unwrap() - 8.0 / 9.0).abs() < 1e-15);

        let e = evaluate_raw(&[0.1, 0.2], &[false, false]).unwrap();
        assert_eq!(e.metrics.auc, None);
        assert!(e.f1_convention.is_some());
    }

    #[test]
    fn random_scores_are_near_chance() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 10_000;
        let scores: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let labels: Vec<bool> = (0..n).map(|_| rng.random::<bool>()).collect();
        let e = evaluate_raw(&scores, &labels).unwrap();
        assert!((e.metrics.acc - 0.5).abs() < 0.05);
        assert!((e.metrics.auc.unwrap() - 0.5).abs() < 0.05);
    }

    #[test]
    fn batch_validation() {
        assert_eq!(
            PredictionBatch::from_scores(&[1.2], &[true]),
            Err(MetricError::ScoreOutOfRange(1.2))
        );
        let dup = vec![
            Prediction { id: "a".into(), score: 0.1, truth: true },
            Prediction { id: "a".into(), score: 0.2, truth: false },
        ];
        assert_eq!(PredictionBatch::new(dup), Err(MetricError::DuplicateId("a".into())));
        assert!(matches!(
            PredictionBatch::from_scores(&[0.1], &[true, false]),
            Err(MetricError::LengthMismatch { .. })
        ));
        let b = PredictionBatch::from_scores(&[0.1, 0.7], &[false, true]).unwrap();
        assert_eq!(auc_roc(&b).unwrap(), 1.0);
        assert_eq!(accuracy(&b).unwrap(), 1.0);
        assert_eq!(f1(&b).unwrap(), 1.0);
    }

    fn batch_strategy() -> impl Strategy<Value = (Vec<f64>, Vec<bool>)> {
        (2usize..50).prop_flat_map(|n| {
            (
                proptest::collection::vec((0u8..8).prop_map(|k| f64::from(k) / 7.0), n),
                proptest::collection::vec(any::<bool>(), n),
            )
        })
    }

    proptest! {
        #[test]
        fn rank_sum_matches_pairwise((scores, labels) in batch_strategy()) {
            match auc_raw(&scores, &labels) {
                Ok(a) => prop_assert!((a - pairwise_auc(&scores, &labels)).abs() <= 1e-12),
                Err(MetricError::SingleClass { .. }) => {
                    prop_assert!(labels.iter().all(|&y| y) || labels.iter().all(|&y| !y))
                }
                Err(e) => prop_assert!(false, "{e}"),
            }
        }

        #[test]
        fn auc_invariant_under_monotone_transform((scores, labels) in batch_strategy()) {
            prop_assume!(labels.iter().any(|&y| y) && labels.iter().any(|&y| !y));
            let t: Vec<f64> = scores.iter().map(|s| (s * 3.0).exp() / 30.0).collect();
            prop_assert_eq!(auc_raw(&scores, &labels).unwrap(), auc_raw(&t, &labels).unwrap());
        }

        #[test]
        fn acc_f1_ignore_order((scores, labels) in batch_strategy(), rot in 0usize..50) {
            let k = rot % scores.len();
            let mut s2 = scores.clone();
            let mut l2 = labels.clone();
            s2.rotate_left(k);
            l2.rotate_left(k);
            prop_assert_eq!(accuracy_raw(&scores, &labels).unwrap(), accuracy_raw(&s2, &l2).unwrap());
            prop_assert_eq!(f1_raw(&scores, &labels).unwrap(), f1_raw(&s2, &l2).unwrap());
        }
    }
}
