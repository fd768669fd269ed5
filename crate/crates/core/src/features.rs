//! Feature transforms: proximity change rate, bounding-box normalization,
//! model-input flattening and ego speed-state classification.

use serde::{Deserialize, Serialize};

use crate::dataset::{Dims, Modality, Sample, SpeedState};

/// Version tag of the flattened input layout.
pub const LAYOUT_VERSION: &str = "flat-v1";

/// Below this peak speed (km/h) the ego vehicle counts as stopped.
pub const STOP_BAND_KMH: f64 = 0.5;
/// Least-squares speed slope (km/h per frame) separating constant from
/// accelerating / decelerating.
pub const SLOPE_TOLERANCE_KMH_PER_FRAME: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FeatureError {
    #[error("need at least {needed} frames, got {found}")]
    InsufficientFrames { needed: usize, found: usize },
    #[error("frame interval must be at least 1")]
    ZeroInterval,
    #[error("distance must be positive and finite, got {0}")]
    NonPositiveDistance(f64),
    #[error("image dimensions must be positive, got {width}x{height}")]
    InvalidImageDims { width: f64, height: f64 },
    #[error("invalid bbox at frame {frame}: {bbox:?}")]
    InvalidBbox { frame: usize, bbox: [f64; 4] },
    #[error("unknown modality `{0}`")]
    UnknownModality(String),
    #[error("modality selection is empty")]
    EmptySelection,
}

/// Net approach rate between pedestrian and ego vehicle.
///
/// `delta_p = (delta_t0 - delta_tn) / dt` in meters per frame; positive means
/// the gap is closing. The quantity is sometimes described as a change "per
/// meter", which does not match dividing by a frame count. We keep the formula
/// literal and expose [`MotionFeature::per_second`] for a time-based unit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MotionFeature {
    pub delta_p: f64,
    pub dt: usize,
    pub delta_t0: f64,
    pub delta_tn: f64,
}

impl MotionFeature {
    /// The same rate in meters per second at `fps` frames per second.
    pub fn per_second(&self, fps: f64) -> f64 {
        self.delta_p * fps
    }
}

/// Proximity change rate between the first frame and the frame `dt` later.
pub fn proximity_change_rate(distances: &[f64], dt: usize) -> Result<MotionFeature, FeatureError> {
    if dt == 0 {
        return Err(FeatureError::ZeroInterval);
    }
    if distances.len() < dt + 1 {
        return Err(FeatureError::InsufficientFrames {
            needed: dt + 1,
            found: distances.len(),
        });
    }
    if let Some(&bad) = distances.iter().find(|d| !(**d > 0.0) || !d.is_finite()) {
        return Err(FeatureError::NonPositiveDistance(bad));
    }
    let delta_t0 = distances[0];
    let delta_tn = distances[dt];
    Ok(MotionFeature {
        delta_p: (delta_t0 - delta_tn) / dt as f64,
        dt,
        delta_t0,
        delta_tn,
    })
}

/// Proximity change rate over the whole window (`dt = T - 1`).
pub fn proximity_change_rate_window(distances: &[f64]) -> Result<MotionFeature, FeatureError> {
    if distances.len() < 2 {
        return Err(FeatureError::InsufficientFrames {
            needed: 2,
            found: distances.len(),
        });
    }
    proximity_change_rate(distances, distances.len() - 1)
}

/// Scale pixel boxes into `[0, 1]` by image width and height.
pub fn normalize_bbox(
    boxes: &[[f64; 4]],
    width: f64,
    height: f64,
) -> Result<Vec<[f64; 4]>, FeatureError> {
    if !(width > 0.0 && height > 0.0) || !width.is_finite() || !height.is_finite() {
        return Err(FeatureError::InvalidImageDims { width, height });
    }
    boxes
        .iter()
        .enumerate()
        .map(|(frame, &b)| {
            let [x1, y1, x2, y2] = b;
            let inside = x1 >= 0.0 && y1 >= 0.0 && x2 <= width && y2 <= height;
            if !(x1 < x2 && y1 < y2) || !inside {
                return Err(FeatureError::InvalidBbox { frame, bbox: b });
            }
            Ok([x1 / width, y1 / height, x2 / width, y2 / height])
        })
        .collect()
}

/// Classify ego speed over the window.
///
/// Stopped when the peak speed stays under [`STOP_BAND_KMH`]; otherwise the
/// least-squares slope against frame index is compared with
/// ±[`SLOPE_TOLERANCE_KMH_PER_FRAME`].
pub fn speed_state(speeds: &[f64]) -> Result<SpeedState, FeatureError> {
    let n = speeds.len();
    if n < 2 {
        return Err(FeatureError::InsufficientFrames { needed: 2, found: n });
    }
    let peak = speeds.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if peak < STOP_BAND_KMH {
        return Ok(SpeedState::Stopped);
    }
    let slope = ls_slope(speeds);
    Ok(if slope > SLOPE_TOLERANCE_KMH_PER_FRAME {
        SpeedState::Accelerating
    } else if slope < -SLOPE_TOLERANCE_KMH_PER_FRAME {
        SpeedState::Decelerating
    } else {
        SpeedState::Constant
    })
}

/// Least-squares slope of `values` against `0..n`.
pub(crate) fn ls_slope(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let t_mean = (n - 1.0) / 2.0;
    let v_mean = values.iter().sum::<f64>() / n;
    let (mut num, mut den) = (0.0, 0.0);
    for (t, v) in values.iter().enumerate() {
        let dt = t as f64 - t_mean;
        num += dt * (v - v_mean);
        den += dt * dt;
    }
    num / den
}

/// The flattened model-input layout.
///
/// Frames-major: for each frame, the selected modalities in the fixed order
/// bbox → pose → local_context → speed. With all modalities selected, frame
/// `t` starts at offset `t * (4 + 2K + D + 1)`, and inside a frame bbox sits
/// at 0, pose at 4, local context at `4 + 2K`, speed at `4 + 2K + D`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureLayout {
    pub dims: Dims,
    pub modalities: Vec<Modality>,
}

impl FeatureLayout {
    pub fn new(dims: Dims, selection: &[Modality]) -> Result<Self, FeatureError> {
        if selection.is_empty() {
            return Err(FeatureError::EmptySelection);
        }
        let mut modalities = selection.to_vec();
        modalities.sort();
        modalities.dedup();
        Ok(FeatureLayout { dims, modalities })
    }

    pub fn all(dims: Dims) -> Self {
        FeatureLayout {
            dims,
            modalities: Modality::ALL.to_vec(),
        }
    }

    /// Build from modality names; `all` selects every modality.
    pub fn from_names<S: AsRef<str>>(dims: Dims, names: &[S]) -> Result<Self, FeatureError> {
        Self::new(dims, &parse_modalities(names)?)
    }

    pub fn frame_width(&self) -> usize {
        self.modalities.iter().map(|m| m.width(&self.dims)).sum()
    }

    pub fn dim(&self) -> usize {
        self.dims.frames * self.frame_width()
    }

    pub fn contains(&self, modality: Modality) -> bool {
        self.modalities.contains(&modality)
    }

    /// Offset of `modality` inside one frame, if selected.
    pub fn offset_in_frame(&self, modality: Modality) -> Option<usize> {
        let mut off = 0;
        for &m in &self.modalities {
            if m == modality {
                return Some(off);
            }
            off += m.width(&self.dims);
        }
        None
    }

    /// Flat index ranges `(start, len)` holding `modality`, one per frame.
    pub fn blocks(&self, modality: Modality) -> Vec<(usize, usize)> {
        let Some(off) = self.offset_in_frame(modality) else {
            return Vec::new();
        };
        let fw = self.frame_width();
        let w = modality.width(&self.dims);
        (0..self.dims.frames).map(|t| (t * fw + off, w)).collect()
    }

    /// Identity string oracles must echo back; covers version, dims and selection.
    pub fn fingerprint(&self) -> String {
        let names: Vec<&str> = self.modalities.iter().map(|m| m.as_str()).collect();
        format!(
            "{LAYOUT_VERSION};T={};K={};D={};{}",
            self.dims.frames,
            self.dims.joints,
            self.dims.embed_dim,
            names.join(",")
        )
    }

    /// Flatten with each modality read from a possibly different sample.
    pub fn flatten_with<'a>(&self, source: impl Fn(Modality) -> &'a Sample, out: &mut Vec<f64>) {
        out.clear();
        out.reserve(self.dim());
        let sources: Vec<&Sample> = self.modalities.iter().map(|&m| source(m)).collect();
        for t in 0..self.dims.frames {
            for (&m, s) in self.modalities.iter().zip(&sources) {
                out.extend_from_slice(s.frame_values(m, t));
            }
        }
    }
}

/// Parse a modality selection; `all` expands to every modality.
pub fn parse_modalities<S: AsRef<str>>(names: &[S]) -> Result<Vec<Modality>, FeatureError> {
    let mut out = Vec::new();
    for n in names {
        let n = n.as_ref().trim();
        if n == "all" {
            out.extend(Modality::ALL);
            continue;
        }
        out.push(
            n.parse::<Modality>()
                .map_err(|_| FeatureError::UnknownModality(n.to_string()))?,
        );
    }
    if out.is_empty() {
        return Err(FeatureError::EmptySelection);
    }
    Ok(out)
}

/// Flatten one sample into the model-input vector.
pub fn flatten(sample: &Sample, layout: &FeatureLayout) -> Vec<f64> {
    let mut out = Vec::new();
    layout.flatten_with(|_| sample, &mut out);
    out
}
