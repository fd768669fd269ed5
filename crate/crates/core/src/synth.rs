//! Synthetic manifests with planted feature/label dependencies.
//!
//! Each modality gets one scalar summary per sample:
//!
//! | modality        | summary                                             | sign |
//! |-----------------|-----------------------------------------------------|------|
//! | bbox            | relative box-area growth per frame                  | +    |
//! | pose            | mean RMS joint distance from the pose centroid      | +    |
//! | local_context   | mean of the first embedding component               | +    |
//! | speed           | mean ego speed (km/h)                               | -    |
//!
//! Summaries are standardized over the generated samples to `s_m`, combined
//! as `z = sum_m w_m sign_m s_m / |w|`, and mixed with standard logistic
//! noise `l`: `latent = (1 - eps) z + eps l`. A sample crosses when
//! `latent > 0`, so `P(cross | z) = sigmoid((1 - eps) z / eps)`; with
//! `eps = 0` the label is a threshold on `z`. When `positive_fraction` is
//! set, the `round(n * fraction)` largest latents cross instead.
//!
//! Kinematics: the ego speed trace is linear in the frame index with slope
//! `0` (constant), `+a` (accelerating) or `-a` (decelerating), `a` in
//! `[0.3, 1.5]` km/h per frame, and identically zero when stopped. The
//! pedestrian is static in the world frame, so the distance drops between
//! frames `t` and `t + 1` by `speed[t] / 3.6 / fps` meters.
//!
//! Every draw comes from a stream derived from `(seed, purpose, index)`.

use std::path::Path;

use indexmap::IndexMap;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{
    proximity_bucket, ContextTags, Crosswalk, DatasetError, Dims, Label, Manifest, Modality,
    Proximity, Roadway, Sample, SpeedState, TrafficLight, CLOSE_PROXIMITY_M, MEDIUM_PROXIMITY_M,
};
use crate::features::{speed_state, SLOPE_TOLERANCE_KMH_PER_FRAME};
use crate::seed::derived_rng;

const WEIGHT_SUM_TOLERANCE: f64 = 1e-9;
const BBOX_GROWTH_PER_SD: f64 = 0.01;
const BBOX_ASPECT: f64 = 0.41;
// Placement jitter is kept small next to the planted growth and spread
// signals. Wide ranges make the flattened design badly conditioned and a
// linear surrogate then needs far more epochs to find those contrasts.
const BBOX_HEIGHT_PX: (f64, f64) = (110.0, 130.0);
const BBOX_BOTTOM_PX: (f64, f64) = (700.0, 740.0);
const CENTER_X_PX: (f64, f64) = (940.0, 980.0);
const POSE_CENTER_Y_PX: (f64, f64) = (500.0, 540.0);
const POSE_BASE_SPREAD_PX: f64 = 20.0;
const POSE_JITTER_PX: f64 = 1.0;
const EMBED_JITTER: f64 = 0.1;
const ACCEL_RANGE_KMH_PER_FRAME: (f64, f64) = (0.3, 1.5);
const MIN_MOVING_SPEED_KMH: f64 = 1.0;
/// Latent draws are clipped to this many standard deviations.
const CLIP_SD: f64 = 3.0;

#[derive(Debug, thiserror::Error)]
pub enum SynthError {
    #[error("infeasible generator spec: {0}")]
    Infeasible(String),
    #[error("cannot read generator spec {path}: {source}")]
    Io {
        path: std::path::PathBuf,
        source: std::io::Error,
    },
    #[error("malformed generator spec: {0}")]
    Parse(#[from] serde_json::Error),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Allocation {
    /// Tags drawn independently per sample from the axis weights.
    #[default]
    Sampled,
    /// Per-axis counts fixed by largest remainder of `n * weight`, then
    /// assigned to samples by a seeded shuffle.
    Exact,
}

/// Categorical weights per tag axis. A missing axis is uniform; a missing
/// value within a given axis has weight 0.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TagWeights {
    pub roadway: Option<IndexMap<Roadway, f64>>,
    pub light: Option<IndexMap<TrafficLight, f64>>,
    pub crosswalk: Option<IndexMap<Crosswalk, f64>>,
    pub proximity: Option<IndexMap<Proximity, f64>>,
    pub ego_speed_state: Option<IndexMap<SpeedState, f64>>,
}

/// Per-modality label dependence `w_m` in `[0, 1]`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Dependency {
    pub bbox: f64,
    pub pose: f64,
    pub local_context: f64,
    pub speed: f64,
}

impl Dependency {
    pub fn get(&self, m: Modality) -> f64 {
        match m {
            Modality::Bbox => self.bbox,
            Modality::Pose => self.pose,
            Modality::LocalContext => self.local_context,
            Modality::Speed => self.speed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Kinematics {
    /// Range of the window-mean ego speed for moving states, km/h.
    pub speed_kmh: [f64; 2],
    /// Overrides of `speed_kmh` per speed state.
    pub speed_kmh_by_state: IndexMap<SpeedState, [f64; 2]>,
    /// Range of the window-mean pedestrian distance, m; intersected with
    /// the sample's proximity band.
    pub distance_m: [f64; 2],
}

impl Default for Kinematics {
    fn default() -> Self {
        Kinematics {
            speed_kmh: [5.0, 50.0],
            speed_kmh_by_state: IndexMap::new(),
            distance_m: [3.0, 60.0],
        }
    }
}

impl Kinematics {
    fn speed_range(&self, state: SpeedState) -> [f64; 2] {
        self.speed_kmh_by_state.get(&state).copied().unwrap_or(self.speed_kmh)
    }
}

fn default_fps() -> f64 {
    30.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorSpec {
    pub n_samples: usize,
    pub seed: u64,
    #[serde(default)]
    pub dims: Dims,
    #[serde(default = "default_fps")]
    pub fps: f64,
    #[serde(default)]
    pub allocation: Allocation,
    #[serde(default)]
    pub tags: TagWeights,
    #[serde(default)]
    pub dependency: Dependency,
    /// Label noise `eps` in `[0, 1)`.
    #[serde(default)]
    pub noise: f64,
    #[serde(default)]
    pub positive_fraction: Option<f64>,
    #[serde(default)]
    pub kinematics: Kinematics,
}

impl GeneratorSpec {
    /// A spec with default dims, uniform tags and kinematics, and no
    /// dependencies set.
    pub fn new(n_samples: usize, seed: u64) -> Self {
        GeneratorSpec {
            n_samples,
            seed,
            dims: Dims::default(),
            fps: default_fps(),
            allocation: Allocation::default(),
            tags: TagWeights::default(),
            dependency: Dependency::default(),
            noise: 0.0,
            positive_fraction: None,
            kinematics: Kinematics::default(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self, SynthError> {
        let spec: GeneratorSpec = serde_json::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, SynthError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| SynthError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::Infeasible(m));
        self.dims.validate()?;
        if !(self.fps > 0.0) || !self.fps.is_finite() {
            return bad(format!("fps must be positive, got {}", self.fps));
        }
        for m in Modality::ALL {
            let w = self.dependency.get(m);
            if !(0.0..=1.0).contains(&w) {
                return bad(format!("dependency weight for {m} must lie in [0, 1], got {w}"));
            }
        }
        if !(0.0..1.0).contains(&self.noise) {
            return bad(format!("noise must lie in [0, 1), got {}", self.noise));
        }
        if self.noise == 0.0 && Modality::ALL.iter().all(|&m| self.dependency.get(m) == 0.0) {
            return bad("all dependency weights are zero and noise is zero; labels would be undefined".into());
        }
        if let Some(f) = self.positive_fraction {
            if !(0.0..=1.0).contains(&f) {
                return bad(format!("positive_fraction must lie in [0, 1], got {f}"));
            }
        }
        self.axis_weights()?;

        let k = &self.kinematics;
        let [dlo, dhi] = k.distance_m;
        if !(dlo > 0.0 && dlo < dhi && dhi.is_finite()) {
            return bad(format!("distance_m must be an increasing positive range, got [{dlo}, {dhi}]"));
        }
        let min_moving = MIN_MOVING_SPEED_KMH.max(SLOPE_TOLERANCE_KMH_PER_FRAME * (self.dims.frames - 1) as f64);
        for &state in SpeedState::ALL {
            if state == SpeedState::Stopped {
                continue;
            }
            let [lo, hi] = k.speed_range(state);
            if !(lo <= hi && hi.is_finite()) || lo < min_moving {
                return bad(format!(
                    "speed range for {state} must be increasing with lower bound at least {min_moving} km/h, got [{lo}, {hi}]"
                ));
            }
        }
        let [plo, phi] = self.axis_weights()?.proximity_bounds(k.distance_m);
        for (p, w) in Proximity::ALL.iter().zip(plo.iter().zip(phi.iter())) {
            if w.0 >= w.1 {
                return bad(format!("distance_m range does not reach the {p} band"));
            }
        }
        Ok(())
    }

    fn axis_weights(&self) -> Result<AxisWeights, SynthError> {
        fn resolve<T: Copy + Eq + std::hash::Hash + std::fmt::Display>(
            axis: &str,
            all: &[T],
            given: &Option<IndexMap<T, f64>>,
        ) -> Result<Vec<f64>, SynthError> {
            let Some(map) = given else {
                return Ok(vec![1.0 / all.len() as f64; all.len()]);
            };
            let w: Vec<f64> = all.iter().map(|v| map.get(v).copied().unwrap_or(0.0)).collect();
            if w.iter().any(|x| !(*x >= 0.0) || !x.is_finite()) {
                return Err(SynthError::Infeasible(format!("{axis} weights must be non-negative")));
            }
            let sum: f64 = w.iter().sum();
            if (sum - 1.0).abs() > WEIGHT_SUM_TOLERANCE {
                return Err(SynthError::Infeasible(format!("{axis} weights sum to {sum}, expected 1")));
            }
            Ok(w)
        }
        Ok(AxisWeights {
            roadway: resolve("roadway", Roadway::ALL, &self.tags.roadway)?,
            light: resolve("light", TrafficLight::ALL, &self.tags.light)?,
            crosswalk: resolve("crosswalk", Crosswalk::ALL, &self.tags.crosswalk)?,
            proximity: resolve("proximity", Proximity::ALL, &self.tags.proximity)?,
            speed: resolve("ego_speed_state", SpeedState::ALL, &self.tags.ego_speed_state)?,
        })
    }
}

struct AxisWeights {
    roadway: Vec<f64>,
    light: Vec<f64>,
    crosswalk: Vec<f64>,
    proximity: Vec<f64>,
    speed: Vec<f64>,
}

impl AxisWeights {
    /// Mean-distance bounds of each proximity band with non-zero weight,
    /// clipped to the kinematics range. Zero-weight bands report `(0, 1)`.
    fn proximity_bounds(&self, range: [f64; 2]) -> [[f64; 3]; 2] {
        let edges = [(0.0, CLOSE_PROXIMITY_M), (CLOSE_PROXIMITY_M, MEDIUM_PROXIMITY_M), (MEDIUM_PROXIMITY_M, f64::INFINITY)];
        let mut lo = [0.0; 3];
        let mut hi = [1.0; 3];
        for (k, (a, b)) in edges.iter().enumerate() {
            if self.proximity[k] > 0.0 {
                lo[k] = a.max(range[0]);
                hi[k] = b.min(range[1]);
            }
        }
        [lo, hi]
    }
}

/// Counts per category by largest remainder of `n * w`; ties go to the
/// earlier category.
fn exact_counts(n: usize, weights: &[f64]) -> Vec<usize> {
    let quotas: Vec<f64> = weights.iter().map(|w| w * n as f64).collect();
    let mut counts: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = quotas[a] - quotas[a].floor();
        let rb = quotas[b] - quotas[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &k in order.iter().take(n.saturating_sub(assigned)) {
        counts[k] += 1;
    }
    counts
}

fn allocate_axis(n: usize, weights: &[f64], seed: u64, axis: &str, allocation: Allocation) -> Vec<usize> {
    match allocation {
        Allocation::Exact => {
            let mut values: Vec<usize> = exact_counts(n, weights)
                .iter()
                .enumerate()
                .flat_map(|(k, &c)| std::iter::repeat_n(k, c))
                .collect();
            values.shuffle(&mut derived_rng(seed, "allocate", axis, 0));
            values
        }
        Allocation::Sampled => (0..n)
            .map(|i| {
                let u: f64 = derived_rng(seed, "tag", axis, i as u64).random();
                let mut acc = 0.0;
                for (k, w) in weights.iter().enumerate() {
                    acc += w;
                    if u < acc {
                        return k;
                    }
                }
                weights.iter().rposition(|&w| w > 0.0).unwrap_or(0)
            })
            .collect(),
    }
}

fn clipped_normal(rng: &mut ChaCha8Rng) -> f64 {
    let z: f64 = rng.sample(StandardNormal);
    z.clamp(-CLIP_SD, CLIP_SD)
}

fn gen_bbox(rng: &mut ChaCha8Rng, frames: usize) -> Vec<[f64; 4]> {
    let g = BBOX_GROWTH_PER_SD * clipped_normal(rng);
    let h0 = rng.random_range(BBOX_HEIGHT_PX.0..BBOX_HEIGHT_PX.1);
    let cx = rng.random_range(CENTER_X_PX.0..CENTER_X_PX.1);
    let y2 = rng.random_range(BBOX_BOTTOM_PX.0..BBOX_BOTTOM_PX.1);
    (0..frames)
        .map(|t| {
            let h = h0 * (1.0 + g * t as f64);
            let half_w = 0.5 * BBOX_ASPECT * h;
            [cx - half_w, y2 - h, cx + half_w, y2]
        })
        .collect()
}

fn pose_template(joints: usize) -> Vec<(f64, f64)> {
    (0..joints)
        .map(|k| {
            let angle = std::f64::consts::TAU * k as f64 / joints as f64;
            let radius = 1.0 + 0.3 * (k % 3) as f64;
            (radius * angle.cos(), radius * angle.sin())
        })
        .collect()
}

fn gen_pose(rng: &mut ChaCha8Rng, frames: usize, template: &[(f64, f64)]) -> Vec<Vec<f64>> {
    let spread = POSE_BASE_SPREAD_PX * (0.25 * clipped_normal(rng)).exp();
    let cx = rng.random_range(CENTER_X_PX.0..CENTER_X_PX.1);
    let cy = rng.random_range(POSE_CENTER_Y_PX.0..POSE_CENTER_Y_PX.1);
    (0..frames)
        .map(|_| {
            let mut frame = Vec::with_capacity(2 * template.len());
            for &(ox, oy) in template {
                let jx: f64 = rng.sample(StandardNormal);
                let jy: f64 = rng.sample(StandardNormal);
                frame.push(cx + spread * ox + POSE_JITTER_PX * jx);
                frame.push(cy + spread * oy + POSE_JITTER_PX * jy);
            }
            frame
        })
        .collect()
}

fn gen_local_context(rng: &mut ChaCha8Rng, frames: usize, dim: usize) -> Vec<Vec<f64>> {
    let base: Vec<f64> = (0..dim).map(|_| clipped_normal(rng)).collect();
    (0..frames)
        .map(|_| {
            base.iter()
                .map(|b| {
                    let j: f64 = rng.sample(StandardNormal);
                    b + EMBED_JITTER * j
                })
                .collect()
        })
        .collect()
}

fn gen_speed(rng: &mut ChaCha8Rng, frames: usize, state: SpeedState, range: [f64; 2]) -> Vec<f64> {
    if state == SpeedState::Stopped {
        return vec![0.0; frames];
    }
    let mean = if range[0] < range[1] {
        rng.random_range(range[0]..range[1])
    } else {
        range[0]
    };
    let half = (frames - 1) as f64 / 2.0;
    let slope = match state {
        SpeedState::Constant => 0.0,
        _ => {
            let a = rng
                .random_range(ACCEL_RANGE_KMH_PER_FRAME.0..ACCEL_RANGE_KMH_PER_FRAME.1)
                .min(mean / half);
            if state == SpeedState::Accelerating {
                a
            } else {
                -a
            }
        }
    };
    (0..frames)
        .map(|t| (mean + slope * (t as f64 - half)).max(0.0))
        .collect()
}

/// Per-frame distances whose mean lies strictly inside `band` and whose
/// decrements follow `speed`. `None` when no such trace exists.
fn gen_distance(rng: &mut ChaCha8Rng, speed: &[f64], fps: f64, band: (f64, f64)) -> Option<Vec<f64>> {
    let mut travelled = vec![0.0; speed.len()];
    for t in 1..speed.len() {
        travelled[t] = travelled[t - 1] + speed[t - 1] / 3.6 / fps;
    }
    let mean_travel = travelled.iter().sum::<f64>() / speed.len() as f64;
    let last = travelled[speed.len() - 1];
    // keep the final distance at least half a meter away
    let lo = band.0.max(last - mean_travel + 0.5);
    let (lo, hi) = (lo, band.1);
    if lo >= hi {
        return None;
    }
    let target = lo + (hi - lo) * rng.random_range(0.02..0.98);
    let d0 = target + mean_travel;
    Some(travelled.iter().map(|c| d0 - c).collect())
}

/// Scalar summary of one modality of a sample (see the module docs).
pub fn modality_summary(sample: &Sample, modality: Modality) -> f64 {
    match modality {
        Modality::Bbox => {
            let area = |b: &[f64; 4]| (b[2] - b[0]) * (b[3] - b[1]);
            let first = area(&sample.bbox[0]);
            let last = area(&sample.bbox[sample.bbox.len() - 1]);
            (last / first - 1.0) / (sample.bbox.len() - 1) as f64
        }
        Modality::Pose => {
            let mut total = 0.0;
            for frame in &sample.pose {
                let k = frame.len() / 2;
                let (mut mx, mut my) = (0.0, 0.0);
                for j in 0..k {
                    mx += frame[2 * j];
                    my += frame[2 * j + 1];
                }
                mx /= k as f64;
                my /= k as f64;
                let mut ss = 0.0;
                for j in 0..k {
                    ss += (frame[2 * j] - mx).powi(2) + (frame[2 * j + 1] - my).powi(2);
                }
                total += (ss / k as f64).sqrt();
            }
            total / sample.pose.len() as f64
        }
        Modality::LocalContext => {
            sample.local_context.iter().map(|f| f[0]).sum::<f64>() / sample.local_context.len() as f64
        }
        Modality::Speed => sample.speed.iter().sum::<f64>() / sample.speed.len() as f64,
    }
}

/// Direction in which a modality's summary pushes towards crossing.
pub fn summary_sign(modality: Modality) -> f64 {
    match modality {
        Modality::Speed => -1.0,
        _ => 1.0,
    }
}

fn standardize(values: &[f64]) -> Vec<f64> {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let sd = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    if sd > 0.0 {
        values.iter().map(|v| (v - mean) / sd).collect()
    } else {
        vec![0.0; values.len()]
    }
}

/// Build a manifest from `spec`. The output is a pure function of the spec.
pub fn generate(spec: &GeneratorSpec) -> Result<Manifest, SynthError> {
    spec.validate()?;
    let n = spec.n_samples;
    let dims = spec.dims;
    let weights = spec.axis_weights()?;
    let seed = spec.seed;

    let roadway = allocate_axis(n, &weights.roadway, seed, "roadway", spec.allocation);
    let light = allocate_axis(n, &weights.light, seed, "light", spec.allocation);
    let crosswalk = allocate_axis(n, &weights.crosswalk, seed, "crosswalk", spec.allocation);
    let proximity = allocate_axis(n, &weights.proximity, seed, "proximity", spec.allocation);
    let speed_states = allocate_axis(n, &weights.speed, seed, "ego_speed_state", spec.allocation);
    let [band_lo, band_hi] = weights.proximity_bounds(spec.kinematics.distance_m);
    let template = pose_template(dims.joints);

    let samples: Vec<Sample> = (0..n)
        .into_par_iter()
        .map(|i| {
            let idx = i as u64;
            let state = SpeedState::ALL[speed_states[i]];
            let prox = Proximity::ALL[proximity[i]];
            let speed = gen_speed(
                &mut derived_rng(seed, "speed", "", idx),
                dims.frames,
                state,
                spec.kinematics.speed_range(state),
            );
            let p = proximity[i];
            let distance = gen_distance(
                &mut derived_rng(seed, "distance", "", idx),
                &speed,
                spec.fps,
                (band_lo[p], band_hi[p]),
            )
            .ok_or_else(|| {
                SynthError::Infeasible(format!(
                    "sample {i}: ego travel over the window leaves no room for a {prox} mean distance"
                ))
            })?;
            let derived_state = speed_state(&speed).expect("frames >= 2");
            let mean_d = distance.iter().sum::<f64>() / distance.len() as f64;
            debug_assert_eq!(derived_state, state);
            debug_assert_eq!(proximity_bucket(mean_d).ok(), Some(prox));
            Ok(Sample {
                id: format!("syn{i:06}"),
                label: Label::NotCross,
                tags: ContextTags {
                    roadway: Roadway::ALL[roadway[i]],
                    light: TrafficLight::ALL[light[i]],
                    crosswalk: Crosswalk::ALL[crosswalk[i]],
                    proximity: prox,
                    ego_speed_state: state,
                },
                bbox: gen_bbox(&mut derived_rng(seed, "bbox", "", idx), dims.frames),
                pose: gen_pose(&mut derived_rng(seed, "pose", "", idx), dims.frames, &template),
                local_context: gen_local_context(
                    &mut derived_rng(seed, "local_context", "", idx),
                    dims.frames,
                    dims.embed_dim,
                ),
                speed,
                distance: Some(distance),
            })
        })
        .collect::<Result<_, SynthError>>()?;

    let latent = latent_scores(&samples, spec);
    let labels = assign_labels(&latent, spec.positive_fraction);
    let samples = samples
        .into_iter()
        .zip(labels)
        .map(|(mut s, y)| {
            s.label = Label::from(y);
            s
        })
        .collect();

    let provenance = vec![format!(
        "synthetic; generator spec: {}",
        serde_json::to_string(spec).expect("spec serializes")
    )];
    Ok(Manifest::new(dims, samples, provenance)?)
}

fn latent_scores(samples: &[Sample], spec: &GeneratorSpec) -> Vec<f64> {
    let n = samples.len();
    let norm = Modality::ALL
        .iter()
        .map(|&m| spec.dependency.get(m).powi(2))
        .sum::<f64>()
        .sqrt();
    let mut z = vec![0.0; n];
    if norm > 0.0 && n > 0 {
        for m in Modality::ALL {
            let w = spec.dependency.get(m);
            if w == 0.0 {
                continue;
            }
            let raw: Vec<f64> = samples.iter().map(|s| modality_summary(s, m)).collect();
            for (zi, s) in z.iter_mut().zip(standardize(&raw)) {
                *zi += w * summary_sign(m) * s / norm;
            }
        }
    }
    let eps = spec.noise;
    (0..n)
        .map(|i| {
            let noise = if eps > 0.0 {
                let u: f64 = derived_rng(spec.seed, "label_noise", "", i as u64).random_range(f64::EPSILON..1.0);
                (u / (1.0 - u)).ln()
            } else {
                0.0
            };
            (1.0 - eps) * z[i] + eps * noise
        })
        .collect()
}

fn assign_labels(latent: &[f64], positive_fraction: Option<f64>) -> Vec<bool> {
    match positive_fraction {
        None => latent.iter().map(|&v| v > 0.0).collect(),
        Some(f) => {
            let k = (f * latent.len() as f64).round() as usize;
            let mut order: Vec<usize> = (0..latent.len()).collect();
            order.sort_by(|&a, &b| latent[b].total_cmp(&latent[a]).then(a.cmp(&b)));
            let mut labels = vec![false; latent.len()];
            for &i in order.iter().take(k) {
                labels[i] = true;
            }
            labels
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantEntry {
    pub modality: Modality,
    pub weight: f64,
    /// Pearson correlation between the modality summary and the label;
    /// `None` when either side has no variance.
    pub correlation: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantReport {
    pub n: usize,
    /// `3 / sqrt(n)`: zero-weight modalities are expected to stay below it.
    pub null_bound: f64,
    pub entries: Vec<PlantEntry>,
}

impl PlantReport {
    /// Zero-weight modalities whose correlation reaches the null bound.
    pub fn violations(&self) -> Vec<Modality> {
        self.entries
            .iter()
            .filter(|e| e.weight == 0.0 && e.correlation.is_some_and(|r| r.abs() >= self.null_bound))
            .map(|e| e.modality)
            .collect()
    }
}

fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    (sxx > 0.0 && syy > 0.0).then(|| sxy / (sxx * syy).sqrt())
}

/// Empirical summary/label correlation per modality.
pub fn plant_check(manifest: &Manifest, spec: &GeneratorSpec) -> PlantReport {
    let n = manifest.len();
    if n == 0 {
        return PlantReport {
            n,
            null_bound: f64::INFINITY,
            entries: Vec::new(),
        };
    }
    let labels: Vec<f64> = manifest
        .samples()
        .iter()
        .map(|s| if s.label.is_cross() { 1.0 } else { 0.0 })
        .collect();
    let entries = Modality::ALL
        .iter()
        .map(|&m| {
            let x: Vec<f64> = manifest.samples().iter().map(|s| modality_summary(s, m)).collect();
            PlantEntry {
                modality: m,
                weight: spec.dependency.get(m),
                correlation: pearson(&x, &labels).map(|r| r * summary_sign(m)),
            }
        })
        .collect();
    PlantReport {
        n,
        null_bound: 3.0 / (n as f64).sqrt(),
        entries,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::build_subsets;

    fn spec(n: usize, seed: u64) -> GeneratorSpec {
        let mut s = GeneratorSpec::new(n, seed);
        s.dependency.speed = 1.0;
        s
    }

    #[test]
    fn same_seed_same_bytes() {
        let a = generate(&spec(50, 1)).unwrap().to_json();
        let b = generate(&spec(50, 1)).unwrap().to_json();
        assert_eq!(a, b);
        assert_ne!(a, generate(&spec(50, 2)).unwrap().to_json());
    }

    #[test]
    fn speed_only_labels_follow_a_threshold() {
        let m = generate(&spec(300, 4)).unwrap();
        let mut pts: Vec<(f64, bool)> = m
            .samples()
            .iter()
            .map(|s| (modality_summary(s, Modality::Speed), s.label.is_cross()))
            .collect();
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        // slower egos cross: labels go true..true, false..false along the sorted summary
        let flips = pts.windows(2).filter(|w| w[0].1 != w[1].1).count();
        assert!(flips <= 1, "{flips} label changes along the speed summary");
    }

    #[test]
    fn stopped_weight_gives_zero_speed_everywhere() {
        let mut s = spec(40, 3);
        s.dependency = Dependency { bbox: 1.0, ..Dependency::default() };
        s.tags.ego_speed_state = Some(IndexMap::from([(SpeedState::Stopped, 1.0)]));
        let m = generate(&s).unwrap();
        assert!(m.samples().iter().all(|x| x.speed.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn kinematics_are_consistent_and_tags_rederive() {
        let m = generate(&spec(200, 9)).unwrap();
        for s in m.samples() {
            let d = s.distance.as_ref().unwrap();
            for t in 0..d.len() - 1 {
                let drop = d[t] - d[t + 1];
                assert!((drop - s.speed[t] / 3.6 / 30.0).abs() < 1e-6);
            }
            assert!(d.iter().all(|&x| x > 0.0));
            assert_eq!(speed_state(&s.speed).unwrap(), s.tags.ego_speed_state);
            assert_eq!(
                s.tags.ego_speed_state == SpeedState::Stopped,
                s.speed.iter().all(|&v| v == 0.0)
            );
            assert_eq!(proximity_bucket(s.mean_distance().unwrap()).unwrap(), s.tags.proximity);
        }
    }

    #[test]
    fn exact_allocation_hits_counts() {
        let mut s = spec(10, 0);
        s.allocation = Allocation::Exact;
        s.tags.crosswalk = Some(IndexMap::from([(Crosswalk::Zebra, 0.3), (Crosswalk::NonZebra, 0.7)]));
        s.positive_fraction = Some(0.4);
        let m = generate(&s).unwrap();
        let idx = build_subsets(&m);
        assert_eq!(idx.get("S_ZC").unwrap().cardinality(), 3);
        assert_eq!(idx.get("S_C").unwrap().cardinality(), 4);
    }

    #[test]
    fn largest_remainder() {
        assert_eq!(exact_counts(10, &[1.0 / 3.0; 3]), vec![4, 3, 3]);
        assert_eq!(exact_counts(7, &[0.5, 0.5]), vec![4, 3]);
        assert_eq!(exact_counts(0, &[1.0]), vec![0]);
    }

    #[test]
    fn infeasible_specs() {
        let s = GeneratorSpec::new(10, 0);
        assert!(matches!(generate(&s), Err(SynthError::Infeasible(_))));
        let mut s = spec(10, 0);
        s.noise = 1.0;
        assert!(generate(&s).is_err());
        let mut s = spec(10, 0);
        s.dependency.pose = 1.5;
        assert!(generate(&s).is_err());
        let mut s = spec(10, 0);
        s.tags.light = Some(IndexMap::from([(TrafficLight::Red, 0.5)]));
        assert!(generate(&s).is_err());
        let mut s = spec(10, 0);
        s.kinematics.distance_m = [40.0, 60.0];
        assert!(generate(&s).is_err());
        let mut s = spec(10, 0);
        s.kinematics.distance_m = [40.0, 60.0];
        s.tags.proximity = Some(IndexMap::from([(Proximity::Far, 1.0)]));
        assert!(generate(&s).is_ok());
    }

    #[test]
    fn spec_json_round_trip_and_unknown_fields() {
        let text = r#"{"n_samples": 5, "seed": 7, "dependency": {"bbox": 1.0},
                       "tags": {"light": {"red": 0.25, "none": 0.75}}}"#;
        let s = GeneratorSpec::from_json(text).unwrap();
        assert_eq!(s.dims, Dims::default());
        assert_eq!(s.tags.light.as_ref().unwrap()[&TrafficLight::Red], 0.25);
        assert!(GeneratorSpec::from_json(r#"{"n_samples": 5, "seed": 7, "bogus": 1}"#).is_err());
    }

    #[test]
    fn plant_check_reports() {
        let mut s = spec(2000, 11);
        s.dependency = Dependency { bbox: 1.0, ..Dependency::default() };
        let m = generate(&s).unwrap();
        let r = plant_check(&m, &s);
        assert!(r.entries[0].correlation.unwrap() > 0.5);
        assert!(r.violations().is_empty(), "{r:?}");
        let empty = Manifest::new(Dims::default(), vec![], vec![]).unwrap();
        assert!(plant_check(&empty, &s).entries.is_empty());
    }
}
