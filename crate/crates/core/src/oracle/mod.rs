//! Prediction oracles: anything that maps flattened feature rows to crossing
//! probabilities.

mod builtin;
mod external;
pub mod protocol;

use serde::{Deserialize, Serialize};

use crate::dataset::{DatasetView, Manifest, Modality};
use crate::features::FeatureLayout;

pub use builtin::{gradient_check, train_builtin, BuiltinModel, TrainConfig};
pub use external::ExternalOracle;

#[derive(Debug, thiserror::Error)]
pub enum OracleError {
    #[error("oracle `{oracle}` expects layout `{found}`, run uses `{expected}`")]
    LayoutMismatch {
        oracle: String,
        expected: String,
        found: String,
    },
    #[error("oracle process error: {0}")]
    Io(#[from] std::io::Error),
    #[error("oracle protocol error: {0}")]
    Protocol(String),
    #[error("oracle returned {found} scores for {expected} rows")]
    CountMismatch { expected: usize, found: usize },
    #[error("oracle returned invalid score {0}")]
    InvalidScore(f64),
    #[error("training set needs at least 2 samples per class, got {positives} positive and {negatives} negative")]
    TooFewPerClass { positives: usize, negatives: usize },
    #[error("training diverged at epoch {epoch}: loss {loss}")]
    Diverged { epoch: usize, loss: f64 },
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("invalid weight dump: {0}")]
    Weights(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleKind {
    Builtin,
    External,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OracleMeta {
    pub kind: OracleKind,
    pub name: String,
    pub version: String,
    /// Fingerprint of the feature layout the oracle consumes.
    pub layout: String,
}

/// A black-box crossing-probability model.
pub trait Oracle: Send + Sync {
    fn meta(&self) -> &OracleMeta;

    /// Score row-major rows of width `dim`. Returns one score per row.
    fn predict_rows(&self, rows: &[f64], dim: usize) -> Result<Vec<f64>, OracleError>;

    /// Additive decomposition of the logit over modalities, when the model
    /// has one. Lets the engine rescore permuted views without re-flattening.
    fn additive_table(&self, _manifest: &Manifest) -> Option<AdditiveTable> {
        None
    }
}

/// `score(i) = sigmoid(bias + sum_m contributions[m][source_m(i)])`, with the
/// sum taken in layout order.
#[derive(Debug, Clone, PartialEq)]
pub struct AdditiveTable {
    pub bias: f64,
    pub modalities: Vec<Modality>,
    /// One vector per entry of `modalities`, indexed by manifest sample.
    pub contributions: Vec<Vec<f64>>,
}

impl AdditiveTable {
    pub fn score(&self, view: &DatasetView<'_>, i: usize) -> f64 {
        let mut z = self.bias;
        for (m, c) in self.modalities.iter().zip(&self.contributions) {
            z += c[view.source(*m, i)];
        }
        sigmoid(z)
    }
}

pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OraclePrediction {
    pub id: String,
    pub score: f64,
}

/// Check that an oracle consumes `layout`.
pub fn check_layout(oracle: &dyn Oracle, layout: &FeatureLayout) -> Result<(), OracleError> {
    let expected = layout.fingerprint();
    if oracle.meta().layout != expected {
        return Err(OracleError::LayoutMismatch {
            oracle: oracle.meta().name.clone(),
            expected,
            found: oracle.meta().layout.clone(),
        });
    }
    Ok(())
}

/// Score rows and enforce the response contract: one finite score in
/// `[0, 1]` per row.
pub fn predict_checked(oracle: &dyn Oracle, rows: &[f64], dim: usize) -> Result<Vec<f64>, OracleError> {
    let expected = if dim == 0 { 0 } else { rows.len() / dim };
    let scores = oracle.predict_rows(rows, dim)?;
    if scores.len() != expected {
        return Err(OracleError::CountMismatch {
            expected,
            found: scores.len(),
        });
    }
    if let Some(&bad) = scores.iter().find(|s| !(0.0..=1.0).contains(*s)) {
        return Err(OracleError::InvalidScore(bad));
    }
    Ok(scores)
}

/// Score `indices` of a (possibly permuted) view. Output order follows `indices`.
pub fn predict(
    oracle: &dyn Oracle,
    view: &DatasetView<'_>,
    indices: &[usize],
    layout: &FeatureLayout,
) -> Result<Vec<OraclePrediction>, OracleError> {
    check_layout(oracle, layout)?;
    let rows = view.flatten_rows(indices, layout);
    let scores = predict_checked(oracle, &rows, layout.dim())?;
    Ok(indices
        .iter()
        .zip(scores)
        .map(|(&i, score)| OraclePrediction {
            id: view.manifest().sample(i).id.clone(),
            score,
        })
        .collect())
}

/// Wraps a closure as an oracle. Mostly useful in tests and for quick
/// experiments with hand-written decision rules.
pub struct FnOracle<F> {
    meta: OracleMeta,
    f: F,
}

impl<F> FnOracle<F>
where
    F: Fn(&[f64]) -> f64 + Send + Sync,
{
    pub fn new(name: &str, layout: &FeatureLayout, f: F) -> Self {
        FnOracle {
            meta: OracleMeta {
                kind: OracleKind::Builtin,
                name: name.to_string(),
                version: "fn".to_string(),
                layout: layout.fingerprint(),
            },
            f,
        }
    }
}

impl<F> Oracle for FnOracle<F>
where
    F: Fn(&[f64]) -> f64 + Send + Sync,
{
    fn meta(&self) -> &OracleMeta {
        &self.meta
    }

    fn predict_rows(&self, rows: &[f64], dim: usize) -> Result<Vec<f64>, OracleError> {
        Ok(rows.chunks_exact(dim).map(|r| (self.f)(r)).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sigmoid_is_stable_and_monotone() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(-800.0) >= 0.0 && sigmoid(800.0) <= 1.0);
        let mut last = 0.0;
        for k in -50..50 {
            let s = sigmoid(k as f64 * 0.3);
            assert!(s > last);
            last = s;
        }
    }
}
