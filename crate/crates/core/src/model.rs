//! Package data model: sample records, the manifest, JSONL streams and
//! on-disk validation.
//!
//! A package directory looks like
//!
//! ```text
//! <package_id>/
//!   manifest.json
//!   sensors.jsonl
//!   gps.jsonl
//!   frames.jsonl
//!   frames/<NNNNNN>.jpg   (optional, not read by analysis)
//! ```
//!
//! Stream timestamps are session-relative milliseconds; the wall-clock
//! anchor lives only in the manifest. Units are SI throughout.

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::canonical;

pub const SCHEMA_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";
pub const SENSORS_BLOB: &str = "sensors.jsonl";
pub const GPS_BLOB: &str = "gps.jsonl";
pub const FRAMES_BLOB: &str = "frames.jsonl";
pub const DEFAULT_SENSOR_RATE_HZ: u32 = 30;
pub const DEFAULT_FRAME_RATE_FPS: u32 = 10;

/// The three JSONL streams every package carries.
pub const STREAM_BLOBS: [&str; 3] = [SENSORS_BLOB, GPS_BLOB, FRAMES_BLOB];

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid {field}: {reason}")]
    Validation { field: String, reason: String },
    #[error("malformed JSON at byte {offset}: {message}")]
    Parse { offset: usize, message: String },
    #[error("unsupported schema_version {0} (expected {SCHEMA_VERSION})")]
    UnsupportedVersion(i64),
    #[error("{blob} line {line}: {message}")]
    Stream {
        blob: String,
        line: usize,
        message: String,
    },
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl ModelError {
    fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        ModelError::Validation {
            field: field.into(),
            reason: reason.into(),
        }
    }
}

/// Accelerometer / gyroscope axis. With the phone on the windshield, `Z` is
/// perpendicular to the road plane, `X` lateral and `Y` longitudinal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub const ALL: [Axis; 3] = [Axis::X, Axis::Y, Axis::Z];
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Axis::X => "x",
            Axis::Y => "y",
            Axis::Z => "z",
        })
    }
}

/// One 6-axis IMU reading: acceleration in m/s², angular rate in rad/s.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorSample {
    pub t: i64,
    pub ax: f64,
    pub ay: f64,
    pub az: f64,
    pub gx: f64,
    pub gy: f64,
    pub gz: f64,
}

impl SensorSample {
    pub fn accel(&self, axis: Axis) -> f64 {
        match axis {
            Axis::X => self.ax,
            Axis::Y => self.ay,
            Axis::Z => self.az,
        }
    }

    pub fn accel_mut(&mut self, axis: Axis) -> &mut f64 {
        match axis {
            Axis::X => &mut self.ax,
            Axis::Y => &mut self.ay,
            Axis::Z => &mut self.az,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.t < 0 {
            return Err(ModelError::invalid("t", "negative timestamp"));
        }
        let channels = [
            ("ax", self.ax),
            ("ay", self.ay),
            ("az", self.az),
            ("gx", self.gx),
            ("gy", self.gy),
            ("gz", self.gz),
        ];
        for (name, v) in channels {
            if !v.is_finite() {
                return Err(ModelError::invalid(name, "not finite"));
            }
        }
        Ok(())
    }
}

/// One GPS fix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GpsFix {
    pub t: i64,
    pub lat: f64,
    pub lon: f64,
    pub alt_m: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub speed_mps: Option<f64>,
    pub h_acc_m: f64,
}

impl GpsFix {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.t < 0 {
            return Err(ModelError::invalid("t", "negative timestamp"));
        }
        if !(-90.0..=90.0).contains(&self.lat) {
            return Err(ModelError::invalid("lat", "outside [-90, 90]"));
        }
        if !(-180.0..=180.0).contains(&self.lon) {
            return Err(ModelError::invalid("lon", "outside [-180, 180]"));
        }
        if !self.alt_m.is_finite() {
            return Err(ModelError::invalid("alt_m", "not finite"));
        }
        if let Some(s) = self.speed_mps {
            if !(s.is_finite() && s >= 0.0) {
                return Err(ModelError::invalid("speed_mps", "must be finite and >= 0"));
            }
        }
        if !(self.h_acc_m.is_finite() && self.h_acc_m >= 0.0) {
            return Err(ModelError::invalid("h_acc_m", "must be finite and >= 0"));
        }
        Ok(())
    }
}

/// Metadata for one video frame. Pixel payloads are never read.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameRef {
    pub t: i64,
    pub index: u64,
    pub file: String,
}

impl FrameRef {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.t < 0 {
            return Err(ModelError::invalid("t", "negative timestamp"));
        }
        check_relative_path(&self.file).map_err(|reason| ModelError::invalid("file", reason))
    }

    /// Conventional payload path for frame `index`.
    pub fn file_for(index: u64) -> String {
        format!("frames/{index:06}.jpg")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlobEntry {
    pub name: String,
    pub bytes: u64,
    pub sha256: String,
}

impl BlobEntry {
    pub fn for_bytes(name: impl Into<String>, data: &[u8]) -> Self {
        BlobEntry {
            name: name.into(),
            bytes: data.len() as u64,
            sha256: canonical::sha256_hex(data),
        }
    }
}

/// Metadata, blob list and digests for one recording session.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PackageManifest {
    pub schema_version: u32,
    pub package_id: String,
    pub device_id: String,
    pub started_at_ms: i64,
    pub ended_at_ms: i64,
    pub sensor_rate_hz: u32,
    pub frame_rate_fps: u32,
    pub blobs: Vec<BlobEntry>,
}

impl PackageManifest {
    pub fn blob(&self, name: &str) -> Option<&BlobEntry> {
        self.blobs.iter().find(|b| b.name == name)
    }

    pub fn total_bytes(&self) -> u64 {
        self.blobs.iter().map(|b| b.bytes).sum()
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(ModelError::UnsupportedVersion(self.schema_version as i64));
        }
        match uuid::Uuid::parse_str(&self.package_id) {
            Ok(id) if id.hyphenated().to_string() == self.package_id => {}
            _ => {
                return Err(ModelError::invalid(
                    "package_id",
                    "must be a lowercase hyphenated UUID",
                ))
            }
        }
        if self.device_id.is_empty() {
            return Err(ModelError::invalid("device_id", "empty"));
        }
        if self.ended_at_ms < self.started_at_ms {
            return Err(ModelError::invalid(
                "ended_at_ms",
                "earlier than started_at_ms",
            ));
        }
        if self.sensor_rate_hz == 0 {
            return Err(ModelError::invalid("sensor_rate_hz", "must be > 0"));
        }
        let mut seen = HashSet::new();
        for b in &self.blobs {
            check_relative_path(&b.name)
                .map_err(|reason| ModelError::invalid(format!("blobs[{}].name", b.name), reason))?;
            if b.name == MANIFEST_FILE {
                return Err(ModelError::invalid("blobs.name", "manifest.json is reserved"));
            }
            if !seen.insert(b.name.as_str()) {
                return Err(ModelError::invalid(
                    "blobs.name",
                    format!("duplicate blob {}", b.name),
                ));
            }
            if !is_lower_hex_sha256(&b.sha256) {
                return Err(ModelError::invalid(
                    format!("blobs[{}].sha256", b.name),
                    "must be 64 lowercase hex digits",
                ));
            }
        }
        Ok(())
    }
}

fn is_lower_hex_sha256(s: &str) -> bool {
    s.len() == 64 && s.bytes().all(|c| matches!(c, b'0'..=b'9' | b'a'..=b'f'))
}

/// Checks that `p` is a relative path that stays inside its base directory.
pub fn check_relative_path(p: &str) -> Result<(), &'static str> {
    if p.is_empty() {
        return Err("empty path");
    }
    if p.starts_with('/') || p.contains('\\') || p.contains('\0') {
        return Err("must be a relative forward-slash path");
    }
    for part in p.split('/') {
        if part.is_empty() || part == "." || part == ".." {
            return Err("path escapes or has empty components");
        }
    }
    Ok(())
}

/// Canonical JSON bytes for a valid manifest.
pub fn serialize_manifest(m: &PackageManifest) -> Result<Vec<u8>, ModelError> {
    m.validate()?;
    canonical::to_canonical_vec(m).map_err(|e| ModelError::invalid("manifest", e.to_string()))
}

pub fn parse_manifest(bytes: &[u8]) -> Result<PackageManifest, ModelError> {
    let tree: serde_json::Value = serde_json::from_slice(bytes).map_err(|e| ModelError::Parse {
        offset: byte_offset(bytes, e.line(), e.column()),
        message: e.to_string(),
    })?;
    match tree.get("schema_version") {
        Some(v) => match v.as_i64() {
            Some(n) if n == SCHEMA_VERSION as i64 => {}
            Some(n) => return Err(ModelError::UnsupportedVersion(n)),
            None => return Err(ModelError::invalid("schema_version", "not an integer")),
        },
        None => return Err(ModelError::invalid("schema_version", "missing")),
    }
    let m: PackageManifest = serde_json::from_value(tree)
        .map_err(|e| ModelError::invalid("manifest", e.to_string()))?;
    m.validate()?;
    Ok(m)
}

/// serde_json reports 1-based line / column; convert to a byte offset.
fn byte_offset(bytes: &[u8], line: usize, column: usize) -> usize {
    if line == 0 {
        return 0;
    }
    let mut current = 1;
    let mut start = 0;
    for (i, &c) in bytes.iter().enumerate() {
        if current == line {
            break;
        }
        if c == b'\n' {
            current += 1;
            start = i + 1;
        }
    }
    (start + column.saturating_sub(1)).min(bytes.len())
}

/// One record per line, LF-terminated, fields in declaration order.
pub fn encode_jsonl<T: Serialize>(items: &[T]) -> Vec<u8> {
    let mut out = Vec::new();
    for item in items {
        // Record types hold only numbers and strings; encoding cannot fail.
        serde_json::to_writer(&mut out, item).expect("record serializes");
        out.push(b'\n');
    }
    out
}

pub fn decode_jsonl<T: DeserializeOwned>(blob: &str, bytes: &[u8]) -> Result<Vec<T>, ModelError> {
    let text = std::str::from_utf8(bytes).map_err(|e| ModelError::Stream {
        blob: blob.to_string(),
        line: 0,
        message: format!("not UTF-8: {e}"),
    })?;
    if text.is_empty() {
        return Ok(Vec::new());
    }
    let body = text.strip_suffix('\n').ok_or_else(|| ModelError::Stream {
        blob: blob.to_string(),
        line: text.lines().count(),
        message: "missing final LF".into(),
    })?;
    body.split('\n')
        .enumerate()
        .map(|(i, line)| {
            serde_json::from_str(line).map_err(|e| ModelError::Stream {
                blob: blob.to_string(),
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

/// The three streams of one package, in memory.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PackageStreams {
    pub samples: Vec<SensorSample>,
    pub gps: Vec<GpsFix>,
    pub frames: Vec<FrameRef>,
}

impl PackageStreams {
    pub fn encode(&self) -> [(&'static str, Vec<u8>); 3] {
        [
            (SENSORS_BLOB, encode_jsonl(&self.samples)),
            (GPS_BLOB, encode_jsonl(&self.gps)),
            (FRAMES_BLOB, encode_jsonl(&self.frames)),
        ]
    }

    pub fn load(dir: &Path) -> Result<Self, ModelError> {
        Ok(PackageStreams {
            samples: decode_jsonl(SENSORS_BLOB, &fs::read(dir.join(SENSORS_BLOB))?)?,
            gps: decode_jsonl(GPS_BLOB, &fs::read(dir.join(GPS_BLOB))?)?,
            frames: decode_jsonl(FRAMES_BLOB, &fs::read(dir.join(FRAMES_BLOB))?)?,
        })
    }

    /// Record invariants plus strictly increasing timestamps per stream.
    pub fn check(&self) -> Result<(), ModelError> {
        check_stream(SENSORS_BLOB, &self.samples, |s| s.t, SensorSample::validate)?;
        check_stream(GPS_BLOB, &self.gps, |g| g.t, GpsFix::validate)?;
        check_stream(FRAMES_BLOB, &self.frames, |f| f.t, FrameRef::validate)?;
        check_frame_indices(&self.frames)
    }
}

fn check_stream<T>(
    blob: &str,
    items: &[T],
    time: impl Fn(&T) -> i64,
    validate: impl Fn(&T) -> Result<(), ModelError>,
) -> Result<(), ModelError> {
    let mut prev: Option<i64> = None;
    for (i, item) in items.iter().enumerate() {
        validate(item).map_err(|e| ModelError::Stream {
            blob: blob.to_string(),
            line: i + 1,
            message: e.to_string(),
        })?;
        let t = time(item);
        if let Some(p) = prev {
            if t <= p {
                return Err(ModelError::Stream {
                    blob: blob.to_string(),
                    line: i + 1,
                    message: format!("timestamp {t} not after {p}"),
                });
            }
        }
        prev = Some(t);
    }
    Ok(())
}

fn check_frame_indices(frames: &[FrameRef]) -> Result<(), ModelError> {
    for (i, w) in frames.windows(2).enumerate() {
        if w[1].index <= w[0].index {
            return Err(ModelError::Stream {
                blob: FRAMES_BLOB.to_string(),
                line: i + 2,
                message: format!("frame index {} not after {}", w[1].index, w[0].index),
            });
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct BlobCheck {
    pub name: String,
    pub present: bool,
    pub expected_bytes: u64,
    pub actual_bytes: Option<u64>,
    pub size_ok: bool,
    pub digest_ok: bool,
}

impl BlobCheck {
    pub fn ok(&self) -> bool {
        self.present && self.size_ok && self.digest_ok
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct StreamCheck {
    pub name: String,
    pub records: usize,
    pub issue: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub package_dir: PathBuf,
    pub manifest_error: Option<String>,
    pub blobs: Vec<BlobCheck>,
    pub streams: Vec<StreamCheck>,
    pub valid: bool,
}

impl ValidationReport {
    pub fn blob(&self, name: &str) -> Option<&BlobCheck> {
        self.blobs.iter().find(|b| b.name == name)
    }

    /// One human-readable line per failed check.
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if let Some(e) = &self.manifest_error {
            out.push(format!("manifest: {e}"));
        }
        for b in &self.blobs {
            if !b.present {
                out.push(format!("{}: missing", b.name));
            } else if !b.size_ok {
                out.push(format!(
                    "{}: size {} != {}",
                    b.name,
                    b.actual_bytes.unwrap_or(0),
                    b.expected_bytes
                ));
            } else if !b.digest_ok {
                out.push(format!("{}: sha256 mismatch", b.name));
            }
        }
        for s in &self.streams {
            if let Some(issue) = &s.issue {
                out.push(format!("{}: {issue}", s.name));
            }
        }
        out
    }
}

/// Checks a package directory against its manifest.
///
/// Only an unreadable directory is an error; every content problem is
/// reported in the returned [`ValidationReport`].
pub fn validate_package(dir: &Path) -> Result<ValidationReport, ModelError> {
    fs::read_dir(dir)?;
    let mut report = ValidationReport {
        package_dir: dir.to_path_buf(),
        manifest_error: None,
        blobs: Vec::new(),
        streams: Vec::new(),
        valid: false,
    };
    let manifest = match fs::read(dir.join(MANIFEST_FILE)) {
        Ok(bytes) => match parse_manifest(&bytes) {
            Ok(m) => m,
            Err(e) => {
                report.manifest_error = Some(e.to_string());
                return Ok(report);
            }
        },
        Err(e) if e.kind() == io::ErrorKind::NotFound => {
            report.manifest_error = Some("manifest.json missing".into());
            return Ok(report);
        }
        Err(e) => return Err(e.into()),
    };

    for entry in &manifest.blobs {
        let mut check = BlobCheck {
            name: entry.name.clone(),
            present: false,
            expected_bytes: entry.bytes,
            actual_bytes: None,
            size_ok: false,
            digest_ok: false,
        };
        match fs::read(dir.join(&entry.name)) {
            Ok(data) => {
                check.present = true;
                check.actual_bytes = Some(data.len() as u64);
                check.size_ok = data.len() as u64 == entry.bytes;
                check.digest_ok = canonical::sha256_hex(&data) == entry.sha256;
            }
            Err(e) if e.kind() == io::ErrorKind::NotFound => {}
            Err(e) => return Err(e.into()),
        }
        report.blobs.push(check);
    }

    for name in STREAM_BLOBS {
        let mut check = StreamCheck {
            name: name.to_string(),
            records: 0,
            issue: None,
        };
        if manifest.blob(name).is_none() {
            check.issue = Some("not listed in manifest".into());
        } else if report.blob(name).is_some_and(|b| b.present) {
            match check_stream_file(dir, name) {
                Ok(n) => check.records = n,
                Err(e) => check.issue = Some(e.to_string()),
            }
        }
        report.streams.push(check);
    }

    report.valid = report.blobs.iter().all(BlobCheck::ok)
        && report.streams.iter().all(|s| s.issue.is_none());
    Ok(report)
}

fn check_stream_file(dir: &Path, name: &str) -> Result<usize, ModelError> {
    let bytes = fs::read(dir.join(name))?;
    match name {
        SENSORS_BLOB => {
            let items: Vec<SensorSample> = decode_jsonl(name, &bytes)?;
            check_stream(name, &items, |s| s.t, SensorSample::validate)?;
            Ok(items.len())
        }
        GPS_BLOB => {
            let items: Vec<GpsFix> = decode_jsonl(name, &bytes)?;
            check_stream(name, &items, |g| g.t, GpsFix::validate)?;
            Ok(items.len())
        }
        FRAMES_BLOB => {
            let items: Vec<FrameRef> = decode_jsonl(name, &bytes)?;
            check_stream(name, &items, |f| f.t, FrameRef::validate)?;
            check_frame_indices(&items)?;
            Ok(items.len())
        }
        _ => unreachable!("not a stream blob: {name}"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn manifest() -> PackageManifest {
        PackageManifest {
            schema_version: 1,
            package_id: "6f1c2d3e-4a5b-4c6d-8e9f-0a1b2c3d4e5f".into(),
            device_id: "iphone-12".into(),
            started_at_ms: 1_627_776_000_000,
            ended_at_ms: 1_627_776_120_000,
            sensor_rate_hz: 30,
            frame_rate_fps: 10,
            blobs: vec![BlobEntry::for_bytes(SENSORS_BLOB, b"")],
        }
    }

    #[test]
    fn empty_blob_list_serializes_as_empty_array() {
        let mut m = manifest();
        m.blobs.clear();
        let bytes = serialize_manifest(&m).unwrap();
        let text = String::from_utf8(bytes.clone()).unwrap();
        assert!(text.contains("\"blobs\":[]"), "{text}");
        assert_eq!(parse_manifest(&bytes).unwrap(), m);
    }

    #[test]
    fn serialization_is_byte_stable() {
        let m = manifest();
        let a = serialize_manifest(&m).unwrap();
        let b = serialize_manifest(&m.clone()).unwrap();
        assert_eq!(canonical::sha256_hex(&a), canonical::sha256_hex(&b));
    }

    #[test]
    fn end_before_start_is_rejected() {
        let mut m = manifest();
        m.ended_at_ms = m.started_at_ms - 1;
        let err = serialize_manifest(&m).unwrap_err();
        assert!(matches!(err, ModelError::Validation { ref field, .. } if field == "ended_at_ms"));

        // Same violation arriving as bytes.
        let mut tree = serde_json::to_value(manifest()).unwrap();
        tree["ended_at_ms"] = serde_json::json!(0);
        let err = parse_manifest(&serde_json::to_vec(&tree).unwrap()).unwrap_err();
        assert!(matches!(err, ModelError::Validation { ref field, .. } if field == "ended_at_ms"));
    }

    #[test]
    fn truncated_input_is_a_parse_error_with_offset() {
        let bytes = serialize_manifest(&manifest()).unwrap();
        let cut = &bytes[..bytes.len() / 2];
        match parse_manifest(cut).unwrap_err() {
            ModelError::Parse { offset, .. } => assert!(offset <= cut.len()),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn other_schema_versions_are_unsupported() {
        let mut tree = serde_json::to_value(manifest()).unwrap();
        tree["schema_version"] = serde_json::json!(2);
        let err = parse_manifest(&serde_json::to_vec(&tree).unwrap()).unwrap_err();
        assert!(matches!(err, ModelError::UnsupportedVersion(2)));
    }

    #[test]
    fn duplicate_and_escaping_blob_names_are_rejected() {
        let mut m = manifest();
        m.blobs.push(m.blobs[0].clone());
        assert!(serialize_manifest(&m).is_err());

        let mut m = manifest();
        m.blobs[0].name = "../etc/passwd".into();
        assert!(serialize_manifest(&m).is_err());
    }

    #[test]
    fn uppercase_digest_is_rejected() {
        let mut m = manifest();
        m.blobs[0].sha256 = m.blobs[0].sha256.to_uppercase();
        assert!(serialize_manifest(&m).is_err());
    }

    #[test]
    fn jsonl_field_order_matches_layout() {
        let s = SensorSample {
            t: 33,
            ax: 0.5,
            ay: -0.25,
            az: 9.81,
            gx: 0.0,
            gy: 0.0,
            gz: 0.01,
        };
        let bytes = encode_jsonl(&[s]);
        assert_eq!(
            bytes,
            b"{\"t\":33,\"ax\":0.5,\"ay\":-0.25,\"az\":9.81,\"gx\":0.0,\"gy\":0.0,\"gz\":0.01}\n"
        );
        assert_eq!(decode_jsonl::<SensorSample>(SENSORS_BLOB, &bytes).unwrap(), vec![s]);
    }

    #[test]
    fn jsonl_without_final_newline_is_rejected() {
        let err = decode_jsonl::<FrameRef>(FRAMES_BLOB, b"{\"t\":0,\"index\":0,\"file\":\"frames/000000.jpg\"}")
            .unwrap_err();
        assert!(matches!(err, ModelError::Stream { .. }));
    }

    #[test]
    fn stream_check_names_first_non_monotonic_line() {
        let streams = PackageStreams {
            samples: vec![],
            gps: vec![],
            frames: vec![
                FrameRef { t: 0, index: 0, file: FrameRef::file_for(0) },
                FrameRef { t: 100, index: 1, file: FrameRef::file_for(1) },
                FrameRef { t: 100, index: 2, file: FrameRef::file_for(2) },
            ],
        };
        match streams.check().unwrap_err() {
            ModelError::Stream { line, .. } => assert_eq!(line, 3),
            e => panic!("{e:?}"),
        }
    }

    #[test]
    fn frame_paths_must_stay_inside_package() {
        let f = FrameRef { t: 0, index: 0, file: "../x.jpg".into() };
        assert!(f.validate().is_err());
        let f = FrameRef { t: 0, index: 0, file: "/abs.jpg".into() };
        assert!(f.validate().is_err());
    }

    #[test]
    fn gps_ranges_are_enforced() {
        let mut g = GpsFix { t: 0, lat: 38.95, lon: -92.33, alt_m: 230.0, speed_mps: None, h_acc_m: 5.0 };
        assert!(g.validate().is_ok());
        g.lat = 91.0;
        assert!(g.validate().is_err());
        g.lat = 0.0;
        g.speed_mps = Some(-1.0);
        assert!(g.validate().is_err());
    }

    #[test]
    fn missing_directory_is_an_io_error() {
        let err = validate_package(Path::new("/nonexistent/package/dir")).unwrap_err();
        assert!(matches!(err, ModelError::Io(_)));
    }
}
