//! L2-regularized logistic regression over flattened features, trained by
//! deterministic full-batch gradient descent.
//!
//! Inputs are standardized per column with training-set mean and population
//! standard deviation; weights live in that standardized space. Unless a
//! step size is given, it is set to `1 / L` where `L = lambda_max / 4 + l2`
//! bounds the curvature of the loss and `lambda_max` is the top eigenvalue of
//! the (bias-augmented) second-moment matrix, found by power iteration. With
//! that step the loss never increases between epochs.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{sigmoid, AdditiveTable, Oracle, OracleError, OracleKind, OracleMeta};
use crate::dataset::{DatasetView, Manifest};
use crate::features::FeatureLayout;
use crate::numfmt;

const POWER_ITERATIONS: usize = 50;
/// Columns whose spread falls below this (relative to their magnitude) are
/// centered but not rescaled.
const MIN_RELATIVE_SCALE: f64 = 1e-9;
/// Absolute floor in the relative-error denominator of [`gradient_check`].
pub const GRADIENT_CHECK_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    /// Fixed step size; `None` derives a monotone step from the data.
    pub learning_rate: Option<f64>,
    pub epochs: usize,
    pub l2: f64,
    /// Recorded for provenance. Full-batch descent from zero weights draws
    /// no randomness.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: None,
            epochs: 500,
            l2: 1e-3,
            seed: 0,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<(), OracleError> {
        if let Some(lr) = self.learning_rate {
            if !(lr > 0.0) || !lr.is_finite() {
                return Err(OracleError::Config(format!("learning_rate must be positive, got {lr}")));
            }
        }
        if !(self.l2 >= 0.0) || !self.l2.is_finite() {
            return Err(OracleError::Config(format!("l2 must be non-negative, got {}", self.l2)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuiltinModel {
    meta: OracleMeta,
    layout: FeatureLayout,
    /// Standardized-space weights; the last entry is the bias.
    weights: Vec<f64>,
    center: Vec<f64>,
    scale: Vec<f64>,
    config: TrainConfig,
    step_size: f64,
    loss_history: Vec<f64>,
}

fn meta_for(name: &str, layout: &FeatureLayout) -> OracleMeta {
    OracleMeta {
        kind: OracleKind::Builtin,
        name: name.to_string(),
        version: format!("logreg-{}", crate::TOOLKIT_VERSION),
        layout: layout.fingerprint(),
    }
}

impl BuiltinModel {
    /// All-zero model: every score is 0.5.
    pub fn zeros(name: &str, layout: FeatureLayout) -> Self {
        let d = layout.dim();
        BuiltinModel {
            meta: meta_for(name, &layout),
            weights: vec![0.0; d + 1],
            center: vec![0.0; d],
            scale: vec![1.0; d],
            layout,
            config: TrainConfig {
                epochs: 0,
                ..TrainConfig::default()
            },
            step_size: 0.0,
            loss_history: Vec::new(),
        }
    }

    pub fn from_parts(
        name: &str,
        layout: FeatureLayout,
        weights: Vec<f64>,
        center: Vec<f64>,
        scale: Vec<f64>,
    ) -> Result<Self, OracleError> {
        let d = layout.dim();
        if weights.len() != d + 1 || center.len() != d || scale.len() != d {
            return Err(OracleError::Weights(format!(
                "expected {} weights and {d} center/scale entries, got {}/{}/{}",
                d + 1,
                weights.len(),
                center.len(),
                scale.len()
            )));
        }
        if weights.iter().chain(&center).any(|v| !v.is_finite())
            || scale.iter().any(|s| !(*s > 0.0) || !s.is_finite())
        {
            return Err(OracleError::Weights("non-finite weight or non-positive scale".into()));
        }
        let mut m = BuiltinModel::zeros(name, layout);
        m.weights = weights;
        m.center = center;
        m.scale = scale;
        Ok(m)
    }

    pub fn layout(&self) -> &FeatureLayout {
        &self.layout
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn bias(&self) -> f64 {
        self.weights[self.weights.len() - 1]
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn step_size(&self) -> f64 {
        self.step_size
    }

    /// Loss before the first epoch and after every epoch.
    pub fn loss_history(&self) -> &[f64] {
        &self.loss_history
    }

    /// Zero every weight that reads `modality`, making the model constant in it.
    pub fn without_modality(&self, modality: crate::dataset::Modality) -> Self {
        let mut m = self.clone();
        for (start, len) in self.layout.blocks(modality) {
            m.weights[start..start + len].fill(0.0);
        }
        m.meta.name = format!("{}-no-{}", self.meta.name, modality);
        m
    }

    pub fn set_name(&mut self, name: &str) {
        self.meta.name = name.to_string();
    }

    /// Logit of one raw (unstandardized) row. Per-modality block sums are
    /// accumulated in layout order so the additive table reproduces it exactly.
    pub fn logit(&self, row: &[f64]) -> f64 {
        let mut z = self.bias();
        for &m in &self.layout.modalities {
            z += self.block_sum(row, m, 0);
        }
        z
    }

    fn block_sum(&self, row: &[f64], modality: crate::dataset::Modality, row_offset: usize) -> f64 {
        let mut s = 0.0;
        for (start, len) in self.layout.blocks(modality) {
            for k in start..start + len {
                s += self.weights[k] * ((row[k - row_offset] - self.center[k]) / self.scale[k]);
            }
        }
        s
    }

    pub fn predict_row(&self, row: &[f64]) -> f64 {
        sigmoid(self.logit(row))
    }

    pub fn to_json(&self) -> String {
        numfmt::to_json_string(self).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, OracleError> {
        let m: BuiltinModel = serde_json::from_str(text).map_err(|e| OracleError::Weights(e.to_string()))?;
        let checked = BuiltinModel::from_parts(
            &m.meta.name,
            m.layout.clone(),
            m.weights.clone(),
            m.center.clone(),
            m.scale.clone(),
        )?;
        if checked.meta.layout != m.meta.layout {
            return Err(OracleError::Weights("layout fingerprint does not match layout".into()));
        }
        Ok(m)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), OracleError> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, OracleError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

impl Oracle for BuiltinModel {
    fn meta(&self) -> &OracleMeta {
        &self.meta
    }

    fn predict_rows(&self, rows: &[f64], dim: usize) -> Result<Vec<f64>, OracleError> {
        if dim != self.layout.dim() {
            return Err(OracleError::LayoutMismatch {
                oracle: self.meta.name.clone(),
                expected: format!("{dim} columns"),
                found: format!("{} columns", self.layout.dim()),
            });
        }
        Ok(rows.chunks_exact(dim).map(|r| self.predict_row(r)).collect())
    }

    fn additive_table(&self, manifest: &Manifest) -> Option<AdditiveTable> {
        if *manifest.dims() != self.layout.dims {
            return None;
        }
        let view = DatasetView::identity(manifest);
        let mut row = Vec::new();
        let mut contributions = vec![Vec::with_capacity(manifest.len()); self.layout.modalities.len()];
        for i in 0..manifest.len() {
            view.flatten_row(i, &self.layout, &mut row);
            for (c, &m) in contributions.iter_mut().zip(&self.layout.modalities) {
                c.push(self.block_sum(&row, m, 0));
            }
        }
        Some(AdditiveTable {
            bias: self.bias(),
            modalities: self.layout.modalities.clone(),
            contributions,
        })
    }
}

/// Standardized design matrix plus labels.
struct Design {
    z: Vec<f64>,
    y: Vec<f64>,
    n: usize,
    d: usize,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        let k = c * 4;
        acc[0] += a[k] * b[k];
        acc[1] += a[k + 1] * b[k + 1];
        acc[2] += a[k + 2] * b[k + 2];
        acc[3] += a[k + 3] * b[k + 3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for k in chunks * 4..a.len() {
        s += a[k] * b[k];
    }
    s
}

fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

impl Design {
    fn build(rows: &[f64], labels: &[bool], center: &[f64], scale: &[f64]) -> Design {
        let d = center.len();
        let n = labels.len();
        let mut z = Vec::with_capacity(rows.len());
        for r in rows.chunks_exact(d) {
            for k in 0..d {
                z.push((r[k] - center[k]) / scale[k]);
            }
        }
        Design {
            z,
            y: labels.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect(),
            n,
            d,
        }
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.z[i * self.d..(i + 1) * self.d]
    }

    fn logits(&self, w: &[f64]) -> Vec<f64> {
        let bias = w[self.d];
        (0..self.n).map(|i| bias + dot(self.row(i), &w[..self.d])).collect()
    }

    fn loss_from_logits(&self, logits: &[f64], w: &[f64], l2: f64) -> f64 {
        let data: f64 = logits
            .iter()
            .zip(&self.y)
            .map(|(&z, &y)| softplus(z) - y * z)
            .sum::<f64>()
            / self.n as f64;
        let reg: f64 = w[..self.d].iter().map(|v| v * v).sum::<f64>();
        data + 0.5 * l2 * reg
    }

    fn gradient_from_logits(&self, logits: &[f64], w: &[f64], l2: f64) -> Vec<f64> {
        let mut g = vec![0.0; self.d + 1];
        for (i, &z) in logits.iter().enumerate() {
            let r = sigmoid(z) - self.y[i];
            let row = self.row(i);
            for (gk, &x) in g[..self.d].iter_mut().zip(row) {
                *gk += r * x;
            }
            g[self.d] += r;
        }
        let inv_n = 1.0 / self.n as f64;
        for k in 0..self.d {
            g[k] = g[k] * inv_n + l2 * w[k];
        }
        g[self.d] *= inv_n;
        g
    }

    /// Largest eigenvalue of `A^T A / n` for `A = [Z, 1]`.
    fn top_eigenvalue(&self) -> f64 {
        let dim = self.d + 1;
        let mut v = vec![1.0 / (dim as f64).sqrt(); dim];
        let mut lambda = 0.0;
        for _ in 0..POWER_ITERATIONS {
            let mut out = vec![0.0; dim];
            for i in 0..self.n {
                let row = self.row(i);
                let av = dot(row, &v[..self.d]) + v[self.d];
                for (o, &x) in out[..self.d].iter_mut().zip(row) {
                    *o += av * x;
                }
                out[self.d] += av;
            }
            for o in &mut out {
                *o /= self.n as f64;
            }
            let norm = out.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm == 0.0 {
                return 0.0;
            }
            lambda = norm;
            v = out.into_iter().map(|x| x / norm).collect();
        }
        lambda
    }
}

fn column_stats(rows: &[f64], d: usize) -> (Vec<f64>, Vec<f64>) {
    let n = rows.len() / d;
    let mut mean = vec![0.0; d];
    for r in rows.chunks_exact(d) {
        for (m, x) in mean.iter_mut().zip(r) {
            *m += x;
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }
    let mut var = vec![0.0; d];
    for r in rows.chunks_exact(d) {
        for k in 0..d {
            let dx = r[k] - mean[k];
            var[k] += dx * dx;
        }
    }
    let scale = var
        .iter()
        .zip(&mean)
        .map(|(v, m)| {
            let sd = (v / n as f64).sqrt();
            if sd > MIN_RELATIVE_SCALE * (1.0 + m.abs()) {
                sd
            } else {
                1.0
            }
        })
        .collect();
    (mean, scale)
}

/// Fit the surrogate on the samples at `indices` of `manifest`.
pub fn train_builtin(
    manifest: &Manifest,
    indices: &[usize],
    layout: &FeatureLayout,
    config: &TrainConfig,
    name: &str,
) -> Result<BuiltinModel, OracleError> {
    config.validate()?;
    let labels: Vec<bool> = indices.iter().map(|&i| manifest.sample(i).label.is_cross()).collect();
    let positives = labels.iter().filter(|&&y| y).count();
    let negatives = labels.len() - positives;
    if positives < 2 || negatives < 2 {
        return Err(OracleError::TooFewPerClass { positives, negatives });
    }
    if *manifest.dims() != layout.dims {
        return Err(OracleError::Config("layout dims differ from manifest dims".into()));
    }

    let d = layout.dim();
    let rows = DatasetView::identity(manifest).flatten_rows(indices, layout);
    let (center, scale) = column_stats(&rows, d);
    let design = Design::build(&rows, &labels, &center, &scale);

    let step = match config.learning_rate {
        Some(lr) => lr,
        None => 1.0 / (design.top_eigenvalue() / 4.0 + config.l2),
    };

    let mut w = vec![0.0; d + 1];
    let mut history = Vec::with_capacity(config.epochs + 1);
    for epoch in 0..=config.epochs {
        let logits = design.logits(&w);
        let loss = design.loss_from_logits(&logits, &w, config.l2);
        if !loss.is_finite() || w.iter().any(|v| !v.is_finite()) {
            return Err(OracleError::Diverged { epoch, loss });
        }
        history.push(loss);
        if epoch == config.epochs {
            break;
        }
        let g = design.gradient_from_logits(&logits, &w, config.l2);
        for (wk, gk) in w.iter_mut().zip(&g) {
            *wk -= step * gk;
        }
    }

    let mut model = BuiltinModel::from_parts(name, layout.clone(), w, center, scale)?;
    model.config = config.clone();
    model.step_size = step;
    model.loss_history = history;
    Ok(model)
}

/// Largest relative error between the analytic gradient of the regularized
/// logistic loss and central differences with step `1e-5`, evaluated at the
/// model's weights on the samples at `indices`.
///
/// Relative error per coordinate is `|a - n| / max(|a| + |n|, floor)` with
/// `floor` = [`GRADIENT_CHECK_FLOOR`].
pub fn gradient_check(model: &BuiltinModel, manifest: &Manifest, indices: &[usize]) -> f64 {
    const H: f64 = 1e-5;
    if indices.is_empty() {
        return 0.0;
    }
    let labels: Vec<bool> = indices.iter().map(|&i| manifest.sample(i).label.is_cross()).collect();
    let rows = DatasetView::identity(manifest).flatten_rows(indices, &model.layout);
    let design = Design::build(&rows, &labels, &model.center, &model.scale);
    let l2 = model.config.l2;
    let w = model.weights.clone();
    let analytic = design.gradient_from_logits(&design.logits(&w), &w, l2);

    let logits = design.logits(&w);
    let mut worst: f64 = 0.0;
    for k in 0..w.len() {
        // Perturb the base logits directly instead of re-running every dot
        // product; the function is the same, the round-off much smaller.
        let mut data = 0.0;
        for (i, &z) in logits.iter().enumerate() {
            let x = if k < design.d { design.row(i)[k] } else { 1.0 };
            let step = H * x;
            data += (softplus(z + step) - softplus(z - step)) - 2.0 * design.y[i] * step;
        }
        let mut numeric = data / (design.n as f64 * 2.0 * H);
        if k < design.d {
            numeric += 0.5 * l2 * ((w[k] + H).powi(2) - (w[k] - H).powi(2)) / (2.0 * H);
        }
        let a = analytic[k];
        let err = (a - numeric).abs() / (a.abs() + numeric.abs()).max(GRADIENT_CHECK_FLOOR);
        worst = worst.max(err);
    }
    worst
}
