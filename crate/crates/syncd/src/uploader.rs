//! Client-side upload worker: drives a package's upload state machine
//! against a server, persisting every transition before acting on it.
//!
//! Resume offsets always come from the server. Each attempt re-registers the
//! package (idempotent), adopts the server's per-blob offsets, then appends
//! from there.

use std::fs;
use std::io::{self, Write};
use std::net::TcpStream;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use roadsense_core::model::{self, PackageManifest, MANIFEST_FILE};
use roadsense_core::packstore::{
    self, load_state, save_state, LibraryIndex, RetryPolicy, TransitionError, UploadEvent, UploadState, UploadStatus,
};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::client::{ChunkOutcome, ClientError, SyncClient};
use crate::protocol::{content_range, PackageStatus};

#[derive(Debug, Error)]
pub enum UploadError {
    #[error("package invalid: {0}")]
    InvalidPackage(String),
    #[error("upload is {0}; re-enqueue first")]
    NotUploadable(UploadStatus),
    #[error(transparent)]
    Transition(#[from] TransitionError),
    #[error(transparent)]
    Packstore(#[from] packstore::PackstoreError),
    #[error(transparent)]
    Io(#[from] io::Error),
    /// Injected process kill; the sidecar holds the last persisted state.
    #[error("simulated crash")]
    Crashed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fault {
    /// The chunk is delivered in full but the response is discarded.
    LostAck,
    /// The connection closes halfway through the chunk body.
    TruncatedBody,
    /// The uploading process dies before sending the chunk.
    Crash,
}

/// Faults keyed by byte position in the concatenation of the package's
/// blobs (manifest order). A fault fires on the first chunk that starts at
/// or after its position; chunks are split so one starts exactly there.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FaultPlan {
    points: Vec<(u64, Fault)>,
}

impl FaultPlan {
    pub fn new(mut points: Vec<(u64, Fault)>) -> Self {
        points.sort_by_key(|p| p.0);
        FaultPlan { points }
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    fn next_boundary_after(&self, pos: u64) -> Option<u64> {
        self.points.iter().map(|p| p.0).find(|&p| p > pos)
    }

    fn take_due(&mut self, pos: u64) -> Option<Fault> {
        if self.points.first().is_some_and(|p| p.0 <= pos) {
            Some(self.points.remove(0).1)
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TranscriptEntry {
    Transition {
        at_ms: u64,
        from: UploadStatus,
        event: String,
        to: UploadStatus,
    },
    Http {
        at_ms: u64,
        method: String,
        path: String,
        #[serde(skip_serializing_if = "Option::is_none")]
        range: Option<String>,
        #[serde(skip_serializing_if = "Option::is_none")]
        status: Option<u16>,
        /// Durable offset reported by the server.
        #[serde(skip_serializing_if = "Option::is_none")]
        offset: Option<u64>,
        #[serde(skip_serializing_if = "Option::is_none")]
        error: Option<String>,
    },
    Fault {
        at_ms: u64,
        fault: Fault,
        blob: String,
        offset: u64,
    },
    Backoff {
        at_ms: u64,
        wait_ms: u64,
    },
}

/// Timestamped record of one upload run.
#[derive(Debug, Clone)]
pub struct Transcript {
    start: Instant,
    pub entries: Vec<TranscriptEntry>,
}

impl Default for Transcript {
    fn default() -> Self {
        Transcript {
            start: Instant::now(),
            entries: Vec::new(),
        }
    }
}

impl Transcript {
    fn at(&self) -> u64 {
        self.start.elapsed().as_millis() as u64
    }

    pub fn to_jsonl(&self) -> Vec<u8> {
        model::encode_jsonl(&self.entries)
    }

    pub fn transitions(&self) -> impl Iterator<Item = (UploadStatus, &str, UploadStatus)> {
        self.entries.iter().filter_map(|e| match e {
            TranscriptEntry::Transition { from, event, to, .. } => Some((*from, event.as_str(), *to)),
            _ => None,
        })
    }
}

#[derive(Debug, Clone)]
pub struct UploadOptions {
    pub policy: RetryPolicy,
    pub chunk_size: usize,
    /// Added before every request.
    pub latency: Duration,
}

impl Default for UploadOptions {
    fn default() -> Self {
        UploadOptions {
            policy: RetryPolicy::default(),
            chunk_size: 64 * 1024,
            latency: Duration::ZERO,
        }
    }
}

enum AttemptError {
    /// Connectivity lost; resume without counting an attempt.
    Lost,
    /// Counts against the retry budget.
    Server(String),
    Crash,
    Local(UploadError),
}

impl From<UploadError> for AttemptError {
    fn from(e: UploadError) -> Self {
        AttemptError::Local(e)
    }
}

impl From<TransitionError> for AttemptError {
    fn from(e: TransitionError) -> Self {
        AttemptError::Local(e.into())
    }
}

pub struct Uploader<'a> {
    client: &'a SyncClient,
    opts: UploadOptions,
    faults: FaultPlan,
    pub transcript: Transcript,
}

impl<'a> Uploader<'a> {
    pub fn new(client: &'a SyncClient, opts: UploadOptions) -> Self {
        Uploader {
            client,
            opts,
            faults: FaultPlan::default(),
            transcript: Transcript::default(),
        }
    }

    pub fn with_faults(mut self, faults: FaultPlan) -> Self {
        self.faults = faults;
        self
    }

    fn step(&mut self, dir: &Path, state: &UploadState, event: UploadEvent) -> Result<UploadState, TransitionError> {
        let next = state.advance(&event, &self.opts.policy)?;
        save_state(dir, &next).map_err(|e| TransitionError {
            status: state.status,
            event: event.name(),
            reason: format!("persisting state: {e}"),
        })?;
        let at_ms = self.transcript.at();
        self.transcript.entries.push(TranscriptEntry::Transition {
            at_ms,
            from: state.status,
            event: event.name().to_string(),
            to: next.status,
        });
        Ok(next)
    }

    fn http(&mut self, method: &str, path: String, range: Option<String>, result: Result<(u16, Option<u64>), &ClientError>) {
        let at_ms = self.transcript.at();
        let (status, offset, error) = match result {
            Ok((s, o)) => (Some(s), o, None),
            Err(e) => (e.status(), None, Some(e.to_string())),
        };
        self.transcript.entries.push(TranscriptEntry::Http {
            at_ms,
            method: method.into(),
            path,
            range,
            status,
            offset,
            error,
        });
    }

    fn pause(&self) {
        if !self.opts.latency.is_zero() {
            std::thread::sleep(self.opts.latency);
        }
    }

    /// Uploads one package directory until it is `Complete` or `Failed`.
    pub fn upload(&mut self, dir: &Path) -> Result<UploadState, UploadError> {
        let report = model::validate_package(dir).map_err(|e| UploadError::InvalidPackage(e.to_string()))?;
        if !report.valid {
            return Err(UploadError::InvalidPackage(report.problems().join("; ")));
        }
        let manifest = model::parse_manifest(&fs::read(dir.join(MANIFEST_FILE))?)
            .map_err(|e| UploadError::InvalidPackage(e.to_string()))?;
        let mut state = load_state(dir)?.unwrap_or_else(|| UploadState::new(&manifest));
        match state.status {
            UploadStatus::Complete => return Ok(state),
            UploadStatus::Failed => return Err(UploadError::NotUploadable(state.status)),
            UploadStatus::InProgress => state = self.step(dir, &state, UploadEvent::NetLost)?,
            _ => {}
        }
        loop {
            state = self.step(dir, &state, UploadEvent::Start)?;
            match self.attempt(dir, &manifest, &mut state) {
                Ok(()) => return Ok(state),
                Err(AttemptError::Lost) => state = self.step(dir, &state, UploadEvent::NetLost)?,
                Err(AttemptError::Server(message)) => {
                    state = self.step(dir, &state, UploadEvent::ServerError { message })?;
                    if state.attempt_count > self.opts.policy.max_retries {
                        return Ok(self.step(dir, &state, UploadEvent::GiveUp)?);
                    }
                    let wait = self.opts.policy.backoff(state.attempt_count - 1);
                    let at_ms = self.transcript.at();
                    self.transcript.entries.push(TranscriptEntry::Backoff {
                        at_ms,
                        wait_ms: wait.as_millis() as u64,
                    });
                    std::thread::sleep(wait);
                }
                Err(AttemptError::Crash) => return Err(UploadError::Crashed),
                Err(AttemptError::Local(e)) => return Err(e),
            }
        }
    }

    fn attempt(&mut self, dir: &Path, manifest: &PackageManifest, state: &mut UploadState) -> Result<(), AttemptError> {
        let id = manifest.package_id.clone();
        self.pause();
        let created = self.client.create_package(manifest);
        self.http(
            "POST",
            "/v1/packages".into(),
            None,
            created.as_ref().map(|(c, _)| (if *c == crate::client::Created::New { 201 } else { 200 }, None)),
        );
        let (_, session) = created.map_err(|e| AttemptError::Server(e.to_string()))?;

        for b in &manifest.blobs {
            let server = session.blobs.get(&b.name).map_or(0, |o| o.offset);
            if state.blobs[&b.name].sent != server {
                *state = self.step(dir, state, UploadEvent::ChunkAcked { blob: b.name.clone(), offset: server })?;
            }
        }

        if session.status != PackageStatus::Committed {
            let mut base = 0u64;
            for b in &manifest.blobs {
                self.send_blob(dir, &id, &b.name, b.bytes, base, state)?;
                base += b.bytes;
            }
        }

        self.pause();
        let committed = self.client.commit(&id);
        self.http(
            "POST",
            format!("/v1/packages/{id}/commit"),
            None,
            committed.as_ref().map(|_| (200, None)),
        );
        committed.map_err(|e| AttemptError::Server(e.to_string()))?;
        *state = self.step(dir, state, UploadEvent::Committed)?;
        Ok(())
    }

    fn send_blob(
        &mut self,
        dir: &Path,
        id: &str,
        name: &str,
        size: u64,
        base: u64,
        state: &mut UploadState,
    ) -> Result<(), AttemptError> {
        if state.blobs[name].sent >= size {
            return Ok(());
        }
        let data = fs::read(dir.join(name)).map_err(|e| AttemptError::Local(e.into()))?;
        let path = SyncClient::blob_path(id, name);
        while state.blobs[name].sent < size {
            let sent = state.blobs[name].sent;
            let mut end = (sent + self.opts.chunk_size as u64).min(size);
            if let Some(b) = self.faults.next_boundary_after(base + sent) {
                if b < base + end {
                    end = b - base;
                }
            }
            let chunk = &data[sent as usize..end as usize];
            let range = content_range(sent, chunk.len() as u64, size);

            if let Some(fault) = self.faults.take_due(base + sent) {
                let at_ms = self.transcript.at();
                self.transcript.entries.push(TranscriptEntry::Fault {
                    at_ms,
                    fault,
                    blob: name.into(),
                    offset: sent,
                });
                match fault {
                    Fault::Crash => return Err(AttemptError::Crash),
                    Fault::LostAck => {
                        self.pause();
                        let r = self.client.put_chunk(id, name, sent, chunk, size);
                        self.http("PUT", path.clone(), Some(range), Err(&ClientError::Transport("response lost".into())));
                        drop(r);
                        return Err(AttemptError::Lost);
                    }
                    Fault::TruncatedBody => {
                        self.pause();
                        let sent_result = send_truncated(self.client.base_url(), &path, &range, chunk);
                        let note = match sent_result {
                            Ok(()) => "connection closed mid-body".to_string(),
                            Err(e) => format!("connection closed mid-body ({e})"),
                        };
                        self.http("PUT", path.clone(), Some(range), Err(&ClientError::Transport(note.clone())));
                        return Err(AttemptError::Lost);
                    }
                }
            }

            self.pause();
            let outcome = self.client.put_chunk(id, name, sent, chunk, size);
            let logged = outcome.as_ref().map(|o| match o {
                ChunkOutcome::Accepted(off) => (204, Some(*off)),
                ChunkOutcome::Mismatch(off) => (416, Some(*off)),
            });
            self.http("PUT", path.clone(), Some(range), logged);
            match outcome {
                Ok(ChunkOutcome::Accepted(off)) | Ok(ChunkOutcome::Mismatch(off)) => {
                    if off == sent && matches!(outcome, Ok(ChunkOutcome::Mismatch(_))) {
                        return Err(AttemptError::Server(format!("server rejected range at {off}")));
                    }
                    *state = self.step(dir, state, UploadEvent::ChunkAcked { blob: name.into(), offset: off })?;
                }
                Err(e) => return Err(AttemptError::Server(e.to_string())),
            }
        }
        Ok(())
    }
}

/// Writes a PUT whose declared body is `chunk` but sends only half of it,
/// then closes the socket.
fn send_truncated(base_url: &str, path: &str, range: &str, chunk: &[u8]) -> io::Result<()> {
    let authority = base_url
        .strip_prefix("http://")
        .unwrap_or(base_url)
        .split('/')
        .next()
        .unwrap_or_default();
    let mut s = TcpStream::connect(authority)?;
    write!(
        s,
        "PUT {path} HTTP/1.1\r\nHost: {authority}\r\nContent-Range: {range}\r\nContent-Type: application/octet-stream\r\nContent-Length: {}\r\nConnection: close\r\n\r\n",
        chunk.len()
    )?;
    s.write_all(&chunk[..chunk.len() / 2])?;
    s.flush()?;
    s.shutdown(std::net::Shutdown::Both)
}

/// Outcome per package of a library upload run.
#[derive(Debug)]
pub struct LibraryUpload {
    pub dir: PathBuf,
    pub result: Result<UploadState, UploadError>,
}

/// Recovers the library at `root` against the server's offsets, then
/// uploads every uploadable package with `parallelism` workers. Each
/// package is handled by one worker at a time.
pub fn upload_library(
    root: &Path,
    client: &SyncClient,
    opts: &UploadOptions,
    parallelism: usize,
) -> Result<(LibraryIndex, Vec<LibraryUpload>), UploadError> {
    let index = packstore::recover(root, Some(client))?;
    let dirs: Vec<PathBuf> = index.uploadable().map(|e| e.dir.clone()).collect();
    let queue = std::sync::Mutex::new(dirs.into_iter());
    let results = std::sync::Mutex::new(Vec::new());
    std::thread::scope(|scope| {
        for _ in 0..parallelism.max(1) {
            scope.spawn(|| loop {
                let Some(dir) = queue.lock().expect("queue lock").next() else {
                    break;
                };
                let result = Uploader::new(client, opts.clone()).upload(&dir);
                results.lock().expect("results lock").push(LibraryUpload { dir, result });
            });
        }
    });
    let mut results = results.into_inner().expect("results lock");
    results.sort_by(|a, b| a.dir.cmp(&b.dir));
    Ok((index, results))
}
