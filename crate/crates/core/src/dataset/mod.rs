//! Context-tagged datasets: samples, manifests, and scenario context subsets.

mod algebra;
mod manifest;
mod subsets;
mod tags;
mod view;

use std::fmt;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

pub use algebra::SetExpr;
pub use manifest::{load_manifest, Manifest, MANIFEST_SCHEMA_VERSION};
pub use subsets::{build_subsets, BaseContext, ContextIndex, ContextSet};
pub use view::DatasetView;
pub use tags::{
    proximity_bucket, ContextTags, Crosswalk, Proximity, Roadway, SpeedState, TrafficLight,
    CLOSE_PROXIMITY_M, MEDIUM_PROXIMITY_M,
};

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("parse error in {path}: {source}")]
    Parse {
        path: PathBuf,
        source: serde_json::Error,
    },
    #[error("unsupported manifest schema version {found} (expected {expected})")]
    UnsupportedSchema { found: u32, expected: u32 },
    #[error("invalid dimensions: {0}")]
    Dims(String),
    #[error("sample `{sample}`, field `{field}`: {message}")]
    Validation {
        sample: String,
        field: String,
        message: String,
    },
    #[error("distance must be positive, got {0}")]
    NonPositiveDistance(f64),
    #[error("unknown context notation `{0}`")]
    UnknownNotation(String),
    #[error("malformed set expression `{expr}`: {message}")]
    Expression { expr: String, message: String },
}

impl DatasetError {
    pub(crate) fn invalid(sample: &str, field: &str, message: impl Into<String>) -> Self {
        DatasetError::Validation {
            sample: sample.to_string(),
            field: field.to_string(),
            message: message.into(),
        }
    }
}

/// Ground-truth crossing label. Serialized as `0` / `1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Label {
    NotCross,
    Cross,
}

impl Label {
    pub fn is_cross(self) -> bool {
        self == Label::Cross
    }
}

impl From<bool> for Label {
    fn from(cross: bool) -> Self {
        if cross {
            Label::Cross
        } else {
            Label::NotCross
        }
    }
}

impl From<Label> for u8 {
    fn from(l: Label) -> u8 {
        match l {
            Label::NotCross => 0,
            Label::Cross => 1,
        }
    }
}

impl TryFrom<u8> for Label {
    type Error = String;

    fn try_from(v: u8) -> Result<Self, Self::Error> {
        match v {
            0 => Ok(Label::NotCross),
            1 => Ok(Label::Cross),
            other => Err(format!("label must be 0 or 1, got {other}")),
        }
    }
}

/// The per-frame input modalities a model consumes. Declaration order is the
/// flattening order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Modality {
    Bbox,
    Pose,
    LocalContext,
    Speed,
}

impl Modality {
    pub const ALL: [Modality; 4] = [
        Modality::Bbox,
        Modality::Pose,
        Modality::LocalContext,
        Modality::Speed,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Modality::Bbox => "bbox",
            Modality::Pose => "pose",
            Modality::LocalContext => "local_context",
            Modality::Speed => "speed",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    /// Values per frame for this modality.
    pub fn width(self, dims: &Dims) -> usize {
        match self {
            Modality::Bbox => 4,
            Modality::Pose => 2 * dims.joints,
            Modality::LocalContext => dims.embed_dim,
            Modality::Speed => 1,
        }
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Modality {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "bbox" => Ok(Modality::Bbox),
            "pose" => Ok(Modality::Pose),
            "local_context" => Ok(Modality::LocalContext),
            "speed" => Ok(Modality::Speed),
            other => Err(format!("unknown modality `{other}`")),
        }
    }
}

/// Observation-window dimensions shared by every sample of a manifest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    /// Frames per observation window (T).
    pub frames: usize,
    /// Body joints per pose (K); a pose frame holds 2K coordinates.
    pub joints: usize,
    /// Local-context embedding width (D).
    pub embed_dim: usize,
}

impl Default for Dims {
    fn default() -> Self {
        Dims {
            frames: 15,
            joints: 17,
            embed_dim: 8,
        }
    }
}

impl Dims {
    pub fn validate(&self) -> Result<(), DatasetError> {
        if self.frames < 2 {
            return Err(DatasetError::Dims(format!(
                "frames must be at least 2, got {}",
                self.frames
            )));
        }
        if self.joints == 0 || self.embed_dim == 0 {
            return Err(DatasetError::Dims(
                "joints and embed_dim must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// One pedestrian–vehicle interaction episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub id: String,
    pub label: Label,
    pub tags: ContextTags,
    /// `[x1, y1, x2, y2]` in pixels, one per frame.
    pub bbox: Vec<[f64; 4]>,
    /// `2K` joint coordinates per frame.
    pub pose: Vec<Vec<f64>>,
    /// `D`-wide appearance embedding per frame.
    pub local_context: Vec<Vec<f64>>,
    /// Ego speed in km/h per frame.
    pub speed: Vec<f64>,
    /// Pedestrian–ego distance in meters per frame.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub distance: Option<Vec<f64>>,
}

impl Sample {
    /// The values this sample stores for `modality` in frame `t`.
    pub fn frame_values(&self, modality: Modality, t: usize) -> &[f64] {
        match modality {
            Modality::Bbox => &self.bbox[t],
            Modality::Pose => &self.pose[t],
            Modality::LocalContext => &self.local_context[t],
            Modality::Speed => std::slice::from_ref(&self.speed[t]),
        }
    }

    /// Swap in another sample's sequence for one modality.
    pub fn copy_modality_from(&mut self, modality: Modality, other: &Sample) {
        match modality {
            Modality::Bbox => self.bbox.clone_from(&other.bbox),
            Modality::Pose => self.pose.clone_from(&other.pose),
            Modality::LocalContext => self.local_context.clone_from(&other.local_context),
            Modality::Speed => self.speed.clone_from(&other.speed),
        }
    }

    pub fn mean_distance(&self) -> Option<f64> {
        self.distance
            .as_ref()
            .map(|d| d.iter().sum::<f64>() / d.len() as f64)
    }
}
