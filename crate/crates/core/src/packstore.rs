//! On-device package library and the offline-first upload state machine.
//!
//! Each package directory carries an `upload_state.json` sidecar, replaced
//! atomically on every transition. The uploader persists a transition before
//! acting on it, so after a crash the sidecar names a state the upload had
//! actually reached.
//!
//! Transition table (anything else is rejected):
//!
//! | from        | event       | to                                   |
//! |-------------|-------------|--------------------------------------|
//! | Pending     | Start       | InProgress                           |
//! | InProgress  | ChunkAcked  | InProgress, `sent` = acked offset    |
//! | InProgress  | NetLost     | Interrupted                          |
//! | Interrupted | Start       | InProgress (resume)                  |
//! | InProgress  | Committed   | Complete (every blob fully sent)     |
//! | Pending, InProgress, Interrupted | ServerError | Interrupted, attempts + 1 |
//! | Interrupted | GiveUp      | Failed, once attempts > max_retries  |
//!
//! `Complete` is terminal. `Failed` is terminal except for an explicit
//! [`UploadState::requeue`].

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::canonical;
use crate::model::{
    self, BlobEntry, ModelError, PackageManifest, PackageStreams, ValidationReport, MANIFEST_FILE,
    SCHEMA_VERSION,
};

pub const UPLOAD_STATE_FILE: &str = "upload_state.json";
/// Suffix of the hidden scratch directory a package is assembled in.
pub const PARTIAL_SUFFIX: &str = ".partial";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UploadStatus {
    Pending,
    InProgress,
    Interrupted,
    Complete,
    Failed,
}

impl UploadStatus {
    pub const ALL: [UploadStatus; 5] = [
        UploadStatus::Pending,
        UploadStatus::InProgress,
        UploadStatus::Interrupted,
        UploadStatus::Complete,
        UploadStatus::Failed,
    ];

    pub fn is_terminal(self) -> bool {
        matches!(self, UploadStatus::Complete | UploadStatus::Failed)
    }
}

impl fmt::Display for UploadStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            UploadStatus::Pending => "pending",
            UploadStatus::InProgress => "in_progress",
            UploadStatus::Interrupted => "interrupted",
            UploadStatus::Complete => "complete",
            UploadStatus::Failed => "failed",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum UploadEvent {
    Start,
    /// The server reports `offset` bytes of `blob` as durable.
    ChunkAcked { blob: String, offset: u64 },
    NetLost,
    ServerError { message: String },
    Committed,
    GiveUp,
}

impl UploadEvent {
    pub fn name(&self) -> &'static str {
        match self {
            UploadEvent::Start => "Start",
            UploadEvent::ChunkAcked { .. } => "ChunkAcked",
            UploadEvent::NetLost => "NetLost",
            UploadEvent::ServerError { .. } => "ServerError",
            UploadEvent::Committed => "Committed",
            UploadEvent::GiveUp => "GiveUp",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub backoff_base_ms: u64,
    pub backoff_cap_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_retries: 5,
            backoff_base_ms: 1000,
            backoff_cap_ms: 60_000,
        }
    }
}

impl RetryPolicy {
    /// `base · 2^attempt`, capped.
    pub fn backoff(&self, attempt: u32) -> Duration {
        let factor = 1u64.checked_shl(attempt.min(63)).unwrap_or(u64::MAX);
        Duration::from_millis(self.backoff_base_ms.saturating_mul(factor).min(self.backoff_cap_ms))
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("{event} not allowed in state {status}: {reason}")]
pub struct TransitionError {
    pub status: UploadStatus,
    pub event: &'static str,
    pub reason: String,
}

#[derive(Debug, Error)]
pub enum PackstoreError {
    #[error(transparent)]
    Transition(#[from] TransitionError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("package {0} already exists")]
    AlreadyExists(String),
    #[error("corrupt upload state: {0}")]
    CorruptState(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlobProgress {
    pub bytes: u64,
    pub sent: u64,
}

/// Upload progress of one package.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UploadState {
    pub package_id: String,
    pub status: UploadStatus,
    pub blobs: BTreeMap<String, BlobProgress>,
    pub attempt_count: u32,
    pub last_error: Option<String>,
}

impl UploadState {
    pub fn new(manifest: &PackageManifest) -> Self {
        UploadState {
            package_id: manifest.package_id.clone(),
            status: UploadStatus::Pending,
            blobs: manifest
                .blobs
                .iter()
                .map(|b| (b.name.clone(), BlobProgress { bytes: b.bytes, sent: 0 }))
                .collect(),
            attempt_count: 0,
            last_error: None,
        }
    }

    pub fn fully_sent(&self) -> bool {
        self.blobs.values().all(|b| b.sent == b.bytes)
    }

    pub fn bytes_sent(&self) -> u64 {
        self.blobs.values().map(|b| b.sent).sum()
    }

    pub fn advance(&self, event: &UploadEvent, policy: &RetryPolicy) -> Result<UploadState, TransitionError> {
        use UploadStatus::*;
        let reject = |reason: &str| TransitionError {
            status: self.status,
            event: event.name(),
            reason: reason.to_string(),
        };
        let mut next = self.clone();
        match (self.status, event) {
            (Pending | Interrupted, UploadEvent::Start) => next.status = InProgress,
            (InProgress, UploadEvent::ChunkAcked { blob, offset }) => {
                let progress = next
                    .blobs
                    .get_mut(blob)
                    .ok_or_else(|| reject(&format!("unknown blob {blob}")))?;
                if *offset > progress.bytes {
                    return Err(reject(&format!(
                        "offset {offset} beyond blob size {}",
                        progress.bytes
                    )));
                }
                progress.sent = *offset;
            }
            (InProgress, UploadEvent::NetLost) => next.status = Interrupted,
            (InProgress, UploadEvent::Committed) => {
                if !self.fully_sent() {
                    return Err(reject("blobs not fully acknowledged"));
                }
                next.status = Complete;
                next.last_error = None;
            }
            (Pending | InProgress | Interrupted, UploadEvent::ServerError { message }) => {
                next.status = Interrupted;
                next.attempt_count = self.attempt_count.saturating_add(1);
                next.last_error = Some(message.clone());
            }
            (Interrupted, UploadEvent::GiveUp) => {
                if self.attempt_count <= policy.max_retries {
                    return Err(reject(&format!(
                        "{} attempts do not exceed max_retries {}",
                        self.attempt_count, policy.max_retries
                    )));
                }
                next.status = Failed;
            }
            _ => return Err(reject("not in transition table")),
        }
        Ok(next)
    }

    /// Manual re-enqueue of a failed upload.
    pub fn requeue(&self) -> Result<UploadState, TransitionError> {
        if self.status != UploadStatus::Failed {
            return Err(TransitionError {
                status: self.status,
                event: "Requeue",
                reason: "only failed uploads can be re-enqueued".into(),
            });
        }
        Ok(UploadState {
            status: UploadStatus::Pending,
            attempt_count: 0,
            ..self.clone()
        })
    }
}

pub fn save_state(dir: &Path, state: &UploadState) -> io::Result<()> {
    let bytes = canonical::to_canonical_vec(state).map_err(io::Error::other)?;
    canonical::write_atomic(&dir.join(UPLOAD_STATE_FILE), &bytes)
}

pub fn load_state(dir: &Path) -> Result<Option<UploadState>, PackstoreError> {
    match fs::read(dir.join(UPLOAD_STATE_FILE)) {
        Ok(bytes) => serde_json::from_slice(&bytes)
            .map(Some)
            .map_err(|e| PackstoreError::CorruptState(e.to_string())),
        Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(None),
        Err(e) => Err(e.into()),
    }
}

/// Where a simulated crash stops [`save_state`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CrashPoint {
    /// Nothing reached disk.
    BeforeWrite,
    /// Half of the scratch file was written.
    MidTempWrite,
    /// Scratch file complete, rename not done.
    BeforeRename,
    /// Rename done.
    AfterRename,
}

impl CrashPoint {
    pub const ALL: [CrashPoint; 4] = [
        CrashPoint::BeforeWrite,
        CrashPoint::MidTempWrite,
        CrashPoint::BeforeRename,
        CrashPoint::AfterRename,
    ];
}

/// Leaves the disk exactly as a process killed at `point` inside
/// [`save_state`] would.
#[doc(hidden)]
pub fn save_state_crashing(dir: &Path, state: &UploadState, point: CrashPoint) -> io::Result<()> {
    let path = dir.join(UPLOAD_STATE_FILE);
    let tmp = canonical::temp_path(&path);
    let bytes = canonical::to_canonical_vec(state).map_err(io::Error::other)?;
    match point {
        CrashPoint::BeforeWrite => Ok(()),
        CrashPoint::MidTempWrite => fs::write(tmp, &bytes[..bytes.len() / 2]),
        CrashPoint::BeforeRename => fs::write(tmp, &bytes),
        CrashPoint::AfterRename => canonical::write_atomic(&path, &bytes),
    }
}

/// Offsets the server holds durably, per blob. Implemented by the sync
/// client; consulted on recovery because client-side counts can run ahead
/// of what the server persisted.
pub trait RemoteOffsets {
    fn durable_offsets(&self, manifest: &PackageManifest) -> Result<BTreeMap<String, u64>, String>;
}

/// Session metadata for [`create_package`].
#[derive(Debug, Clone, PartialEq)]
pub struct PackageMeta {
    /// Random v4 UUID when absent.
    pub package_id: Option<String>,
    pub device_id: String,
    pub started_at_ms: i64,
    pub sensor_rate_hz: u32,
    pub frame_rate_fps: u32,
}

impl Default for PackageMeta {
    fn default() -> Self {
        PackageMeta {
            package_id: None,
            device_id: "roadsense-device".into(),
            started_at_ms: 0,
            sensor_rate_hz: model::DEFAULT_SENSOR_RATE_HZ,
            frame_rate_fps: model::DEFAULT_FRAME_RATE_FPS,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CreatedPackage {
    pub dir: PathBuf,
    pub manifest: PackageManifest,
}

/// Writes a new package under `root` with a `Pending` upload state.
///
/// The package is assembled in a hidden scratch directory and renamed into
/// place; on failure the scratch directory is removed.
pub fn create_package(
    root: &Path,
    streams: &PackageStreams,
    meta: &PackageMeta,
) -> Result<CreatedPackage, PackstoreError> {
    streams.check()?;
    let package_id = meta
        .package_id
        .clone()
        .unwrap_or_else(|| uuid::Uuid::new_v4().hyphenated().to_string());
    let final_dir = root.join(&package_id);
    if final_dir.exists() {
        return Err(PackstoreError::AlreadyExists(package_id));
    }
    let last_t = [
        streams.samples.last().map(|s| s.t),
        streams.gps.last().map(|g| g.t),
        streams.frames.last().map(|f| f.t),
    ]
    .into_iter()
    .flatten()
    .max()
    .unwrap_or(0);

    let encoded = streams.encode();
    let manifest = PackageManifest {
        schema_version: SCHEMA_VERSION,
        package_id: package_id.clone(),
        device_id: meta.device_id.clone(),
        started_at_ms: meta.started_at_ms,
        ended_at_ms: meta.started_at_ms + last_t,
        sensor_rate_hz: meta.sensor_rate_hz,
        frame_rate_fps: meta.frame_rate_fps,
        blobs: encoded
            .iter()
            .map(|(name, data)| BlobEntry::for_bytes(*name, data))
            .collect(),
    };
    let manifest_bytes = model::serialize_manifest(&manifest)?;

    let scratch = root.join(format!(".{package_id}{PARTIAL_SUFFIX}"));
    let write = || -> io::Result<()> {
        fs::create_dir_all(&scratch)?;
        for (name, data) in &encoded {
            fs::write(scratch.join(name), data)?;
            fs::File::open(scratch.join(name))?.sync_all()?;
        }
        canonical::write_atomic(&scratch.join(MANIFEST_FILE), &manifest_bytes)?;
        save_state(&scratch, &UploadState::new(&manifest))?;
        fs::rename(&scratch, &final_dir)?;
        fs::File::open(root)?.sync_all()
    };
    if let Err(e) = write() {
        let _ = fs::remove_dir_all(&scratch);
        return Err(e.into());
    }
    Ok(CreatedPackage {
        dir: final_dir,
        manifest,
    })
}

/// One package directory as found on disk.
#[derive(Debug, Clone, PartialEq)]
pub struct LibraryEntry {
    pub dir: PathBuf,
    pub manifest: Option<PackageManifest>,
    pub state: Option<UploadState>,
    pub validation: ValidationReport,
    /// Recovery problems that are not validation failures.
    pub issues: Vec<String>,
}

impl LibraryEntry {
    pub fn is_valid(&self) -> bool {
        self.validation.valid
    }

    pub fn status(&self) -> Option<UploadStatus> {
        self.state.as_ref().map(|s| s.status)
    }
}

/// Directory name → entry, one per package directory under the root.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LibraryIndex {
    pub root: PathBuf,
    pub entries: BTreeMap<String, LibraryEntry>,
}

impl LibraryIndex {
    pub fn get(&self, package_id: &str) -> Option<&LibraryEntry> {
        self.entries.get(package_id)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Valid packages still waiting to reach the server.
    pub fn uploadable(&self) -> impl Iterator<Item = &LibraryEntry> {
        self.entries.values().filter(|e| {
            e.is_valid()
                && matches!(
                    e.status(),
                    Some(UploadStatus::Pending | UploadStatus::InProgress | UploadStatus::Interrupted)
                )
        })
    }
}

/// Rebuilds the library index from disk.
///
/// Scratch directories of interrupted creates and stray sidecar scratch
/// files are removed. An upload caught `InProgress` is moved to
/// `Interrupted`; with `remote`, its per-blob progress is replaced by the
/// server's durable offsets. Broken packages stay listed with their
/// validation failures.
pub fn recover(root: &Path, remote: Option<&dyn RemoteOffsets>) -> Result<LibraryIndex, PackstoreError> {
    let mut index = LibraryIndex {
        root: root.to_path_buf(),
        entries: BTreeMap::new(),
    };
    for entry in fs::read_dir(root)? {
        let entry = entry?;
        if !entry.file_type()?.is_dir() {
            continue;
        }
        let name = entry.file_name().to_string_lossy().into_owned();
        let dir = entry.path();
        if name.starts_with('.') {
            if name.ends_with(PARTIAL_SUFFIX) {
                fs::remove_dir_all(&dir)?;
            }
            continue;
        }
        index.entries.insert(name, recover_entry(&dir, remote)?);
    }
    Ok(index)
}

fn recover_entry(dir: &Path, remote: Option<&dyn RemoteOffsets>) -> Result<LibraryEntry, PackstoreError> {
    let scratch = canonical::temp_path(&dir.join(UPLOAD_STATE_FILE));
    if scratch.exists() {
        fs::remove_file(&scratch)?;
    }
    let validation = model::validate_package(dir)?;
    let mut issues = Vec::new();
    let manifest = fs::read(dir.join(MANIFEST_FILE))
        .ok()
        .and_then(|b| model::parse_manifest(&b).ok());
    let Some(manifest) = manifest else {
        return Ok(LibraryEntry {
            dir: dir.to_path_buf(),
            manifest: None,
            state: None,
            validation,
            issues,
        });
    };

    let loaded = match load_state(dir) {
        Ok(s) => s,
        Err(PackstoreError::CorruptState(e)) => {
            issues.push(format!("upload state unreadable, reset to pending: {e}"));
            None
        }
        Err(e) => return Err(e),
    };
    let mut state = match loaded {
        Some(s) if s.package_id == manifest.package_id && blobs_match(&s, &manifest) => s,
        Some(_) => {
            issues.push("upload state does not match manifest, reset to pending".into());
            UploadState::new(&manifest)
        }
        None => UploadState::new(&manifest),
    };
    let before = state.clone();
    if state.status == UploadStatus::InProgress {
        state = state.advance(&UploadEvent::NetLost, &RetryPolicy::default())?;
    }
    if let (UploadStatus::Interrupted, Some(remote)) = (state.status, remote) {
        match remote.durable_offsets(&manifest) {
            Ok(offsets) => {
                for (name, p) in state.blobs.iter_mut() {
                    p.sent = offsets.get(name).copied().unwrap_or(0).min(p.bytes);
                }
            }
            Err(e) => issues.push(format!("server offsets unavailable: {e}")),
        }
    }
    if state != before || !dir.join(UPLOAD_STATE_FILE).exists() {
        save_state(dir, &state)?;
    }
    Ok(LibraryEntry {
        dir: dir.to_path_buf(),
        manifest: Some(manifest),
        state: Some(state),
        validation,
        issues,
    })
}

fn blobs_match(state: &UploadState, manifest: &PackageManifest) -> bool {
    state.blobs.len() == manifest.blobs.len()
        && manifest
            .blobs
            .iter()
            .all(|b| state.blobs.get(&b.name).is_some_and(|p| p.bytes == b.bytes && p.sent <= p.bytes))
}
