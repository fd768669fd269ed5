//! Manifest file format.
//!
//! A manifest is a UTF-8 JSON document:
//!
//! ```json
//! {
//!   "schema_version": 1,
//!   "dims": { "frames": 15, "joints": 17, "embed_dim": 8 },
//!   "provenance": ["free-form notes"],
//!   "sidecar": "embeddings.bin",
//!   "samples": [
//!     {
//!       "id": "ped-0001",
//!       "label": 1,
//!       "tags": { "roadway": "four_way", "light": "green", "crosswalk": "zebra",
//!                 "proximity": "medium", "ego_speed_state": "decelerating" },
//!       "bbox": [[x1, y1, x2, y2], ...],
//!       "pose": [[...2K values...], ...],
//!       "local_context": [[...D values...], ...]  |  { "offset": 0 },
//!       "speed": [...],
//!       "distance": [...]
//!     }
//!   ]
//! }
//! ```
//!
//! `proximity` and `ego_speed_state` may be omitted and are then derived from
//! `distance` and `speed`. When present they win over the derived value and a
//! warning is recorded on conflict. `local_context` may instead reference the
//! optional sidecar file: little-endian `f32`, row-major `[sample][frame][dim]`,
//! with `offset` counted in bytes from the start of the file.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::tags::{proximity_bucket, ContextTags, Crosswalk, Proximity, Roadway, SpeedState, TrafficLight};
use super::{DatasetError, Dims, Label, Sample};
use crate::features::speed_state;
use crate::numfmt;

pub const MANIFEST_SCHEMA_VERSION: u32 = 1;

/// A validated, immutable collection of samples.
#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    dims: Dims,
    samples: Vec<Sample>,
    provenance: Vec<String>,
    warnings: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct RawManifest {
    schema_version: u32,
    dims: Dims,
    #[serde(default)]
    provenance: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    sidecar: Option<String>,
    samples: Vec<RawSample>,
}

#[derive(Serialize, Deserialize)]
struct RawTags {
    roadway: Roadway,
    light: TrafficLight,
    crosswalk: Crosswalk,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    proximity: Option<Proximity>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    ego_speed_state: Option<SpeedState>,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum LocalContextField {
    Inline(Vec<Vec<f64>>),
    Sidecar { offset: u64 },
}

#[derive(Serialize, Deserialize)]
struct RawSample {
    id: String,
    label: Label,
    tags: RawTags,
    bbox: Vec<Vec<f64>>,
    pose: Vec<Vec<f64>>,
    local_context: LocalContextField,
    speed: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    distance: Option<Vec<f64>>,
}

/// Read and validate a manifest file.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<Manifest, DatasetError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let raw: RawManifest = serde_json::from_str(&text).map_err(|source| DatasetError::Parse {
        path: path.to_path_buf(),
        source,
    })?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    Manifest::from_raw(raw, base)
}

impl Manifest {
    /// Validate samples against `dims`. Tags on the samples are taken as given.
    pub fn new(dims: Dims, samples: Vec<Sample>, provenance: Vec<String>) -> Result<Self, DatasetError> {
        dims.validate()?;
        let mut seen = HashSet::with_capacity(samples.len());
        for s in &samples {
            validate_sample(s, &dims)?;
            if !seen.insert(s.id.as_str()) {
                return Err(DatasetError::invalid(&s.id, "id", "duplicate sample id"));
            }
        }
        Ok(Manifest {
            dims,
            samples,
            provenance,
            warnings: Vec::new(),
        })
    }

    /// Parse a manifest from JSON text; sidecar paths resolve against `base_dir`.
    pub fn from_json(text: &str, base_dir: &Path) -> Result<Self, DatasetError> {
        let raw: RawManifest = serde_json::from_str(text).map_err(|source| DatasetError::Parse {
            path: PathBuf::from("<memory>"),
            source,
        })?;
        Self::from_raw(raw, base_dir)
    }

    fn from_raw(raw: RawManifest, base_dir: &Path) -> Result<Self, DatasetError> {
        if raw.schema_version != MANIFEST_SCHEMA_VERSION {
            return Err(DatasetError::UnsupportedSchema {
                found: raw.schema_version,
                expected: MANIFEST_SCHEMA_VERSION,
            });
        }
        raw.dims.validate()?;
        let sidecar = match &raw.sidecar {
            Some(name) => {
                let p = base_dir.join(name);
                Some(fs::read(&p).map_err(|source| DatasetError::Io { path: p, source })?)
            }
            None => None,
        };

        let mut warnings = Vec::new();
        let mut samples = Vec::with_capacity(raw.samples.len());
        for rs in raw.samples {
            samples.push(resolve_sample(rs, &raw.dims, sidecar.as_deref(), &mut warnings)?);
        }
        let mut manifest = Manifest::new(raw.dims, samples, raw.provenance)?;
        manifest.warnings = warnings;
        Ok(manifest)
    }

    pub fn dims(&self) -> &Dims {
        &self.dims
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn sample(&self, index: usize) -> &Sample {
        &self.samples[index]
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn provenance(&self) -> &[String] {
        &self.provenance
    }

    /// Tag conflicts noticed while loading.
    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.samples.iter().position(|s| s.id == id)
    }

    pub fn labels(&self) -> Vec<bool> {
        self.samples.iter().map(|s| s.label.is_cross()).collect()
    }

    /// Serialize with inline embeddings.
    pub fn to_json(&self) -> String {
        let raw = self.to_raw(None);
        numfmt::to_json_string(&raw).expect("manifest serializes")
    }

    /// Serialize with embeddings moved into a sidecar blob. Returns the JSON
    /// text and the sidecar bytes; `sidecar_name` is recorded in the JSON.
    pub fn to_json_with_sidecar(&self, sidecar_name: &str) -> (String, Vec<u8>) {
        let mut blob = Vec::new();
        let mut raw = self.to_raw(Some(sidecar_name.to_string()));
        for (rs, s) in raw.samples.iter_mut().zip(&self.samples) {
            let offset = blob.len() as u64;
            for frame in &s.local_context {
                for v in frame {
                    blob.extend_from_slice(&(*v as f32).to_le_bytes());
                }
            }
            rs.local_context = LocalContextField::Sidecar { offset };
        }
        let text = numfmt::to_json_string(&raw).expect("manifest serializes");
        (text, blob)
    }

    /// Write the manifest as a single JSON file with inline embeddings.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), DatasetError> {
        let path = path.as_ref();
        fs::write(path, self.to_json()).map_err(|source| DatasetError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    fn to_raw(&self, sidecar: Option<String>) -> RawManifest {
        RawManifest {
            schema_version: MANIFEST_SCHEMA_VERSION,
            dims: self.dims,
            provenance: self.provenance.clone(),
            sidecar,
            samples: self
                .samples
                .iter()
                .map(|s| RawSample {
                    id: s.id.clone(),
                    label: s.label,
                    tags: RawTags {
                        roadway: s.tags.roadway,
                        light: s.tags.light,
                        crosswalk: s.tags.crosswalk,
                        proximity: Some(s.tags.proximity),
                        ego_speed_state: Some(s.tags.ego_speed_state),
                    },
                    bbox: s.bbox.iter().map(|b| b.to_vec()).collect(),
                    pose: s.pose.clone(),
                    local_context: LocalContextField::Inline(s.local_context.clone()),
                    speed: s.speed.clone(),
                    distance: s.distance.clone(),
                })
                .collect(),
        }
    }

    /// Replace samples without re-validating. Callers only rearrange modality
    /// sequences between already valid samples of the same manifest.
    pub(crate) fn with_samples(&self, samples: Vec<Sample>) -> Manifest {
        Manifest {
            dims: self.dims,
            samples,
            provenance: self.provenance.clone(),
            warnings: Vec::new(),
        }
    }
}

fn resolve_sample(
    rs: RawSample,
    dims: &Dims,
    sidecar: Option<&[u8]>,
    warnings: &mut Vec<String>,
) -> Result<Sample, DatasetError> {
    let id = rs.id;
    let t = dims.frames;

    let mut bbox = Vec::with_capacity(rs.bbox.len());
    for b in &rs.bbox {
        let arr: [f64; 4] = b.as_slice().try_into().map_err(|_| {
            DatasetError::invalid(&id, "bbox", format!("expected 4 values per frame, found {}", b.len()))
        })?;
        bbox.push(arr);
    }

    let local_context = match rs.local_context {
        LocalContextField::Inline(v) => v,
        LocalContextField::Sidecar { offset } => {
            let blob = sidecar.ok_or_else(|| {
                DatasetError::invalid(&id, "local_context", "sidecar offset given but manifest declares no sidecar")
            })?;
            read_sidecar_block(blob, offset, t, dims.embed_dim)
                .ok_or_else(|| DatasetError::invalid(&id, "local_context", format!("sidecar offset {offset} out of range")))?
        }
    };

    // shape checks come before tag derivation, which indexes frames
    let speed = rs.speed;
    check_len(&id, "bbox", bbox.len(), t)?;
    check_len(&id, "speed", speed.len(), t)?;
    if let Some(d) = &rs.distance {
        check_len(&id, "distance", d.len(), t)?;
        if let Some(bad) = d.iter().find(|v| !(**v > 0.0) || !v.is_finite()) {
            return Err(DatasetError::invalid(&id, "distance", format!("distance must be positive, got {bad}")));
        }
    }
    if let Some(bad) = speed.iter().find(|v| !(**v >= 0.0) || !v.is_finite()) {
        return Err(DatasetError::invalid(&id, "speed", format!("speed must be non-negative, got {bad}")));
    }

    let derived_proximity = match &rs.distance {
        Some(d) => Some(proximity_bucket(d.iter().sum::<f64>() / d.len() as f64)?),
        None => None,
    };
    let proximity = match (rs.tags.proximity, derived_proximity) {
        (Some(explicit), Some(derived)) => {
            if explicit != derived {
                warnings.push(format!(
                    "sample `{id}`: explicit proximity `{explicit}` conflicts with distance-derived `{derived}`; keeping explicit"
                ));
            }
            explicit
        }
        (Some(explicit), None) => explicit,
        (None, Some(derived)) => derived,
        (None, None) => {
            return Err(DatasetError::invalid(&id, "tags.proximity", "missing and no distance to derive it from"))
        }
    };

    let derived_speed = speed_state(&speed).map_err(|e| DatasetError::invalid(&id, "speed", e.to_string()))?;
    let ego_speed_state = match rs.tags.ego_speed_state {
        Some(explicit) => {
            if explicit != derived_speed {
                warnings.push(format!(
                    "sample `{id}`: explicit ego_speed_state `{explicit}` conflicts with speed-derived `{derived_speed}`; keeping explicit"
                ));
            }
            explicit
        }
        None => derived_speed,
    };

    Ok(Sample {
        id,
        label: rs.label,
        tags: ContextTags {
            roadway: rs.tags.roadway,
            light: rs.tags.light,
            crosswalk: rs.tags.crosswalk,
            proximity,
            ego_speed_state,
        },
        bbox,
        pose: rs.pose,
        local_context,
        speed,
        distance: rs.distance,
    })
}

fn read_sidecar_block(blob: &[u8], offset: u64, frames: usize, dim: usize) -> Option<Vec<Vec<f64>>> {
    let start = usize::try_from(offset).ok()?;
    let len = frames.checked_mul(dim)?.checked_mul(4)?;
    let bytes = blob.get(start..start.checked_add(len)?)?;
    let values: Vec<f64> = bytes
        .chunks_exact(4)
        .map(|c| f64::from(f32::from_le_bytes([c[0], c[1], c[2], c[3]])))
        .collect();
    Some(values.chunks(dim).map(<[f64]>::to_vec).collect())
}

fn check_len(id: &str, field: &str, found: usize, expected: usize) -> Result<(), DatasetError> {
    if found != expected {
        return Err(DatasetError::invalid(
            id,
            field,
            format!("frame length mismatch: expected {expected}, found {found}"),
        ));
    }
    Ok(())
}

fn check_finite(id: &str, field: &str, values: &[f64]) -> Result<(), DatasetError> {
    if let Some(v) = values.iter().find(|v| !v.is_finite()) {
        return Err(DatasetError::invalid(id, field, format!("non-finite value {v}")));
    }
    Ok(())
}

fn validate_sample(s: &Sample, dims: &Dims) -> Result<(), DatasetError> {
    let id = s.id.as_str();
    if id.is_empty() {
        return Err(DatasetError::invalid("<empty>", "id", "sample id must be non-empty"));
    }
    let t = dims.frames;
    check_len(id, "bbox", s.bbox.len(), t)?;
    check_len(id, "pose", s.pose.len(), t)?;
    check_len(id, "local_context", s.local_context.len(), t)?;
    check_len(id, "speed", s.speed.len(), t)?;
    if let Some(d) = &s.distance {
        check_len(id, "distance", d.len(), t)?;
    }

    for (f, b) in s.bbox.iter().enumerate() {
        check_finite(id, "bbox", b)?;
        if !(b[0] < b[2] && b[1] < b[3]) {
            return Err(DatasetError::invalid(
                id,
                "bbox",
                format!("frame {f}: expected x1 < x2 and y1 < y2, got {b:?}"),
            ));
        }
    }
    for (f, p) in s.pose.iter().enumerate() {
        if p.len() != 2 * dims.joints {
            return Err(DatasetError::invalid(
                id,
                "pose",
                format!("frame {f}: expected {} coordinates, found {}", 2 * dims.joints, p.len()),
            ));
        }
        check_finite(id, "pose", p)?;
    }
    for (f, e) in s.local_context.iter().enumerate() {
        if e.len() != dims.embed_dim {
            return Err(DatasetError::invalid(
                id,
                "local_context",
                format!("frame {f}: expected {} values, found {}", dims.embed_dim, e.len()),
            ));
        }
        check_finite(id, "local_context", e)?;
    }
    check_finite(id, "speed", &s.speed)?;
    if let Some(v) = s.speed.iter().find(|v| **v < 0.0) {
        return Err(DatasetError::invalid(id, "speed", format!("speed must be non-negative, got {v}")));
    }
    if let Some(d) = &s.distance {
        check_finite(id, "distance", d)?;
        if let Some(v) = d.iter().find(|v| **v <= 0.0) {
            return Err(DatasetError::invalid(id, "distance", format!("distance must be positive, got {v}")));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn sample_json(id: &str, label: u8, frames: usize) -> serde_json::Value {
        json!({
            "id": id,
            "label": label,
            "tags": {"roadway": "four_way", "light": "green", "crosswalk": "zebra"},
            "bbox": vec![[10.0, 20.0, 50.0, 120.0]; frames],
            "pose": vec![vec![1.0, 2.0]; frames],
            "local_context": vec![vec![0.5]; frames],
            "speed": (0..frames).map(|t| 10.0 + 2.0 * t as f64).collect::<Vec<_>>(),
            "distance": vec![20.0; frames],
        })
    }

    fn manifest_json(samples: Vec<serde_json::Value>) -> String {
        json!({
            "schema_version": 1,
            "dims": {"frames": 3, "joints": 1, "embed_dim": 1},
            "samples": samples,
        })
        .to_string()
    }

    fn parse(text: &str) -> Result<Manifest, DatasetError> {
        Manifest::from_json(text, Path::new("."))
    }

    #[test]
    fn loads_three_samples_and_derives_tags() {
        let text = manifest_json(vec![
            sample_json("a", 1, 3),
            sample_json("b", 0, 3),
            sample_json("c", 1, 3),
        ]);
        let m = parse(&text).unwrap();
        assert_eq!(m.len(), 3);
        assert_eq!(m.sample(0).tags.proximity, Proximity::Medium);
        assert_eq!(m.sample(0).tags.ego_speed_state, SpeedState::Accelerating);
        assert!(m.warnings().is_empty());
    }

    #[test]
    fn inverted_bbox_names_sample() {
        let mut bad = sample_json("bad-one", 1, 3);
        bad["bbox"][1] = json!([60.0, 20.0, 50.0, 120.0]);
        let err = parse(&manifest_json(vec![sample_json("a", 0, 3), bad])).unwrap_err();
        match err {
            DatasetError::Validation { sample, field, .. } => {
                assert_eq!(sample, "bad-one");
                assert_eq!(field, "bbox");
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn mixed_frame_counts_are_rejected() {
        let err = parse(&manifest_json(vec![sample_json("a", 0, 3), sample_json("b", 1, 4)])).unwrap_err();
        assert!(err.to_string().contains("frame length mismatch"), "{err}");
        assert!(err.to_string().contains("`b`"), "{err}");
    }

    #[test]
    fn malformed_json_is_a_parse_error() {
        assert!(matches!(parse("{not json"), Err(DatasetError::Parse { .. })));
        // schema_version is mandatory
        let err = parse(r#"{"dims":{"frames":3,"joints":1,"embed_dim":1},"samples":[]}"#).unwrap_err();
        assert!(matches!(err, DatasetError::Parse { .. }));
        let err = parse(r#"{"schema_version":7,"dims":{"frames":3,"joints":1,"embed_dim":1},"samples":[]}"#)
            .unwrap_err();
        assert!(matches!(err, DatasetError::UnsupportedSchema { found: 7, .. }));
    }

    #[test]
    fn duplicate_ids_and_bad_labels() {
        let err = parse(&manifest_json(vec![sample_json("a", 0, 3), sample_json("a", 1, 3)])).unwrap_err();
        assert!(err.to_string().contains("duplicate"));
        assert!(matches!(
            parse(&manifest_json(vec![sample_json("a", 2, 3)])),
            Err(DatasetError::Parse { .. })
        ));
    }

    #[test]
    fn negative_speed_and_zero_distance() {
        let mut s = sample_json("neg", 0, 3);
        s["speed"] = json!([1.0, -1.0, 0.0]);
        assert!(parse(&manifest_json(vec![s])).unwrap_err().to_string().contains("speed"));
        let mut s = sample_json("zero", 0, 3);
        s["distance"] = json!([1.0, 0.0, 2.0]);
        assert!(parse(&manifest_json(vec![s])).unwrap_err().to_string().contains("distance"));
    }

    #[test]
    fn explicit_tags_win_with_warning() {
        let mut s = sample_json("a", 0, 3);
        s["tags"]["proximity"] = json!("far");
        s["tags"]["ego_speed_state"] = json!("stopped");
        let m = parse(&manifest_json(vec![s])).unwrap();
        assert_eq!(m.sample(0).tags.proximity, Proximity::Far);
        assert_eq!(m.sample(0).tags.ego_speed_state, SpeedState::Stopped);
        assert_eq!(m.warnings().len(), 2);
    }

    #[test]
    fn missing_proximity_without_distance_fails() {
        let mut s = sample_json("a", 0, 3);
        s.as_object_mut().unwrap().remove("distance");
        let err = parse(&manifest_json(vec![s])).unwrap_err();
        assert!(err.to_string().contains("proximity"));
    }

    #[test]
    fn sidecar_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut s = sample_json("a", 0, 3);
        s["local_context"] = json!([[0.25], [0.5], [-1.0]]);
        let m = parse(&manifest_json(vec![s, sample_json("b", 1, 3)])).unwrap();
        let (text, blob) = m.to_json_with_sidecar("emb.bin");
        assert_eq!(blob.len(), 2 * 3 * 4);
        std::fs::write(dir.path().join("emb.bin"), &blob).unwrap();
        std::fs::write(dir.path().join("m.json"), &text).unwrap();
        let back = load_manifest(dir.path().join("m.json")).unwrap();
        // values chosen to be exact in f32
        assert_eq!(back.samples(), m.samples());

        std::fs::write(dir.path().join("emb.bin"), &blob[..10]).unwrap();
        let err = load_manifest(dir.path().join("m.json")).unwrap_err();
        assert!(err.to_string().contains("out of range"));
    }

    #[test]
    fn json_round_trip_is_exact() {
        let mut s = sample_json("a", 1, 3);
        s["speed"] = json!([0.1, 0.2, 0.30000000000000004]);
        let m = parse(&manifest_json(vec![s])).unwrap();
        let again = parse(&m.to_json()).unwrap();
        assert_eq!(again, m);
        assert_eq!(again.to_json(), m.to_json());
    }
}
