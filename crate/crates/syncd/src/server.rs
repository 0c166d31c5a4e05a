//! Ingestion server: package registry, append-only blob store, commit log
//! and commit fan-out over server-sent events.
//!
//! On-disk layout under the data directory:
//!
//! ```text
//! commits.jsonl               one EventRecord per line, in commit_seq order
//! packages/<id>/manifest.json
//! packages/<id>/<blob name>   bytes received so far; length = durable offset
//! ```
//!
//! Everything is reloaded from these files at boot. A blob's durable offset
//! is its file length after fsync, so a restart never reports bytes the
//! disk does not hold.

use std::collections::{BTreeMap, HashMap};
use std::convert::Infallible;
use std::fs::{self, File, OpenOptions};
use std::io::{self, BufRead, BufReader, Read, Seek, SeekFrom, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};
use std::thread::JoinHandle;
use std::time::{SystemTime, UNIX_EPOCH};

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, Path as UrlPath, Query, State};
use axum::http::{header, HeaderMap, HeaderValue, StatusCode};
use axum::response::sse::{Event, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use futures::{Stream, StreamExt};
use roadsense_core::canonical;
use roadsense_core::model::{self, ModelError, PackageManifest, MANIFEST_FILE};
use serde::Deserialize;
use sha2::{Digest, Sha256};
use tokio::sync::{broadcast, watch};

use crate::protocol::{
    parse_content_range, BlobOffset, CommitResponse, CommittedPackage, ErrorBody, EventRecord, PackageStatus,
    SessionInfo, LENGTH_HEADER, OFFSET_HEADER,
};

pub const COMMIT_LOG: &str = "commits.jsonl";
pub const PACKAGES_DIR: &str = "packages";

#[derive(Debug, Clone)]
pub struct ServerConfig {
    pub listen: SocketAddr,
    pub data_dir: PathBuf,
    pub max_body_bytes: usize,
    /// Per-subscriber queue bound; a subscriber further behind is dropped
    /// and must reconnect with its last seen sequence number.
    pub subscriber_queue: usize,
}

impl ServerConfig {
    pub fn new(listen: SocketAddr, data_dir: impl Into<PathBuf>) -> Self {
        ServerConfig {
            listen,
            data_dir: data_dir.into(),
            max_body_bytes: 16 * 1024 * 1024,
            subscriber_queue: 1024,
        }
    }
}

struct BlobSlot {
    size: u64,
    sha256: String,
    offset: u64,
}

struct ServerPackage {
    manifest: PackageManifest,
    dir: PathBuf,
    /// Locked per blob so appends to one blob serialize while different
    /// blobs proceed in parallel. A commit holds all of them.
    blobs: BTreeMap<String, tokio::sync::Mutex<BlobSlot>>,
    commit_seq: Mutex<Option<u64>>,
}

impl ServerPackage {
    fn committed(&self) -> Option<u64> {
        *self.commit_seq.lock().expect("commit_seq lock")
    }

    async fn session(&self) -> SessionInfo {
        let mut blobs = BTreeMap::new();
        for (name, slot) in &self.blobs {
            let s = slot.lock().await;
            blobs.insert(
                name.clone(),
                BlobOffset {
                    size: s.size,
                    offset: s.offset,
                },
            );
        }
        let commit_seq = self.committed();
        SessionInfo {
            package_id: self.manifest.package_id.clone(),
            status: if commit_seq.is_some() {
                PackageStatus::Committed
            } else {
                PackageStatus::Open
            },
            blobs,
            commit_seq,
        }
    }
}

struct CommitLog {
    file: File,
}

struct Shared {
    packages_dir: PathBuf,
    packages: RwLock<HashMap<String, Arc<ServerPackage>>>,
    /// Serializes commit sequencing; holds the append handle of the log.
    commit_log: tokio::sync::Mutex<CommitLog>,
    /// Committed events in seq order, for replay to new subscribers.
    events: RwLock<Vec<EventRecord>>,
    fanout: broadcast::Sender<EventRecord>,
    shutdown: watch::Receiver<bool>,
}

/// A loaded server state, ready to be served.
pub struct Server {
    shared: Arc<Shared>,
    max_body_bytes: usize,
}

fn now_ms() -> i64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as i64)
        .unwrap_or(0)
}

fn invalid_data(msg: impl Into<String>) -> io::Error {
    io::Error::new(io::ErrorKind::InvalidData, msg.into())
}

fn load_package(dir: &Path) -> io::Result<Option<ServerPackage>> {
    let Ok(bytes) = fs::read(dir.join(MANIFEST_FILE)) else {
        return Ok(None);
    };
    let manifest = model::parse_manifest(&bytes).map_err(|e| invalid_data(format!("{}: {e}", dir.display())))?;
    let mut blobs = BTreeMap::new();
    for b in &manifest.blobs {
        let path = dir.join(&b.name);
        let offset = match fs::metadata(&path) {
            Ok(m) => m.len(),
            Err(e) if e.kind() == io::ErrorKind::NotFound => 0,
            Err(e) => return Err(e),
        };
        if offset > b.bytes {
            return Err(invalid_data(format!("{} longer than declared", path.display())));
        }
        blobs.insert(
            b.name.clone(),
            tokio::sync::Mutex::new(BlobSlot {
                size: b.bytes,
                sha256: b.sha256.clone(),
                offset,
            }),
        );
    }
    Ok(Some(ServerPackage {
        manifest,
        dir: dir.to_path_buf(),
        blobs,
        commit_seq: Mutex::new(None),
    }))
}

/// Reads the commit log, dropping a torn trailing line left by a crash.
fn load_commit_log(path: &Path) -> io::Result<(File, Vec<EventRecord>)> {
    let mut file = OpenOptions::new().read(true).append(true).create(true).open(path)?;
    let mut events = Vec::new();
    let mut good_len = 0u64;
    let mut reader = BufReader::new(&mut file);
    let mut line = String::new();
    loop {
        line.clear();
        let n = reader.read_line(&mut line)?;
        if n == 0 || !line.ends_with('\n') {
            break;
        }
        let ev: EventRecord = serde_json::from_str(line.trim_end())
            .map_err(|e| invalid_data(format!("{COMMIT_LOG} line {}: {e}", events.len() + 1)))?;
        if ev.commit_seq != events.len() as u64 + 1 {
            return Err(invalid_data(format!("{COMMIT_LOG}: sequence gap at {}", ev.commit_seq)));
        }
        events.push(ev);
        good_len += n as u64;
    }
    drop(reader);
    if file.metadata()?.len() != good_len {
        file.set_len(good_len)?;
        file.sync_all()?;
    }
    file.seek(SeekFrom::End(0))?;
    Ok((file, events))
}

impl Server {
    /// Loads (or initializes) the data directory.
    pub fn open(data_dir: &Path, max_body_bytes: usize, subscriber_queue: usize, shutdown: watch::Receiver<bool>) -> io::Result<Server> {
        let packages_dir = data_dir.join(PACKAGES_DIR);
        fs::create_dir_all(&packages_dir)?;
        let mut packages = HashMap::new();
        for entry in fs::read_dir(&packages_dir)? {
            let entry = entry?;
            if !entry.file_type()?.is_dir() {
                continue;
            }
            if let Some(p) = load_package(&entry.path())? {
                packages.insert(p.manifest.package_id.clone(), Arc::new(p));
            }
        }
        let (file, events) = load_commit_log(&data_dir.join(COMMIT_LOG))?;
        for ev in &events {
            let p = packages
                .get(&ev.package_id)
                .ok_or_else(|| invalid_data(format!("commit {} names missing package {}", ev.commit_seq, ev.package_id)))?;
            *p.commit_seq.lock().expect("commit_seq lock") = Some(ev.commit_seq);
        }
        let (fanout, _) = broadcast::channel(subscriber_queue.max(1));
        Ok(Server {
            shared: Arc::new(Shared {
                packages_dir,
                packages: RwLock::new(packages),
                commit_log: tokio::sync::Mutex::new(CommitLog { file }),
                events: RwLock::new(events),
                fanout,
                shutdown,
            }),
            max_body_bytes,
        })
    }

    pub fn router(&self) -> Router {
        Router::new()
            .route("/v1/health", get(|| async { "ok" }))
            .route("/v1/packages", post(create_package).get(query_packages))
            .route("/v1/packages/{id}", get(get_session))
            .route("/v1/packages/{id}/commit", post(commit_package))
            .route(
                "/v1/packages/{id}/blobs/{*name}",
                get(download_blob).head(head_blob).put(put_blob_chunk),
            )
            .route("/v1/stream", get(subscribe_events))
            .layer(DefaultBodyLimit::max(self.max_body_bytes))
            .with_state(self.shared.clone())
    }
}

type AppState = Arc<Shared>;

fn error(status: StatusCode, body: ErrorBody) -> Response {
    (status, Json(body)).into_response()
}

fn message(status: StatusCode, msg: impl Into<String>) -> Response {
    error(
        status,
        ErrorBody {
            error: msg.into(),
            ..ErrorBody::default()
        },
    )
}

fn io_error(e: io::Error) -> Response {
    message(StatusCode::INTERNAL_SERVER_ERROR, e.to_string())
}

fn offset_headers(offset: u64) -> [(header::HeaderName, HeaderValue); 1] {
    [(header::HeaderName::from_static(OFFSET_HEADER), HeaderValue::from(offset))]
}

fn lookup(state: &Shared, id: &str) -> Result<Arc<ServerPackage>, Response> {
    state
        .packages
        .read()
        .expect("registry lock")
        .get(id)
        .cloned()
        .ok_or_else(|| message(StatusCode::NOT_FOUND, format!("unknown package {id}")))
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> io::Result<T> + Send + 'static) -> io::Result<T> {
    tokio::task::spawn_blocking(f).await.map_err(io::Error::other)?
}

async fn create_package(State(state): State<AppState>, body: Bytes) -> Response {
    let manifest = match model::parse_manifest(&body) {
        Ok(m) => m,
        Err(e) => {
            let field = match &e {
                ModelError::Validation { field, .. } => Some(field.clone()),
                ModelError::UnsupportedVersion(_) => Some("schema_version".to_string()),
                _ => None,
            };
            return error(
                StatusCode::BAD_REQUEST,
                ErrorBody {
                    error: e.to_string(),
                    field,
                    ..ErrorBody::default()
                },
            );
        }
    };
    let id = manifest.package_id.clone();
    if let Ok(existing) = lookup(&state, &id) {
        if existing.manifest == manifest {
            return (StatusCode::OK, Json(existing.session().await)).into_response();
        }
        return message(StatusCode::CONFLICT, format!("package {id} exists with a different manifest"));
    }

    let dir = state.packages_dir.join(&id);
    let manifest_bytes = match model::serialize_manifest(&manifest) {
        Ok(b) => b,
        Err(e) => return message(StatusCode::BAD_REQUEST, e.to_string()),
    };
    let write_dir = dir.clone();
    let names: Vec<String> = manifest.blobs.iter().map(|b| b.name.clone()).collect();
    let created = blocking(move || {
        fs::create_dir_all(&write_dir)?;
        for name in &names {
            let path = write_dir.join(name);
            fs::create_dir_all(path.parent().expect("blob path has a parent"))?;
            OpenOptions::new().create(true).append(true).open(&path)?;
        }
        canonical::write_atomic(&write_dir.join(MANIFEST_FILE), &manifest_bytes)
    })
    .await;
    if let Err(e) = created {
        return io_error(e);
    }

    let package = Arc::new(ServerPackage {
        blobs: manifest
            .blobs
            .iter()
            .map(|b| {
                (
                    b.name.clone(),
                    tokio::sync::Mutex::new(BlobSlot {
                        size: b.bytes,
                        sha256: b.sha256.clone(),
                        offset: 0,
                    }),
                )
            })
            .collect(),
        manifest,
        dir,
        commit_seq: Mutex::new(None),
    });
    // A concurrent create of the same id may have won the race.
    let winner = {
        let mut map = state.packages.write().expect("registry lock");
        map.entry(id).or_insert_with(|| package.clone()).clone()
    };
    if Arc::ptr_eq(&winner, &package) {
        (StatusCode::CREATED, Json(package.session().await)).into_response()
    } else if winner.manifest == package.manifest {
        (StatusCode::OK, Json(winner.session().await)).into_response()
    } else {
        message(StatusCode::CONFLICT, "package exists with a different manifest")
    }
}

async fn get_session(State(state): State<AppState>, UrlPath(id): UrlPath<String>) -> Response {
    match lookup(&state, &id) {
        Ok(p) => Json(p.session().await).into_response(),
        Err(r) => r,
    }
}

async fn head_blob(State(state): State<AppState>, UrlPath((id, name)): UrlPath<(String, String)>) -> Response {
    let package = match lookup(&state, &id) {
        Ok(p) => p,
        Err(r) => return r,
    };
    let Some(slot) = package.blobs.get(&name) else {
        return StatusCode::NOT_FOUND.into_response();
    };
    let s = slot.lock().await;
    (
        StatusCode::OK,
        [
            (header::HeaderName::from_static(OFFSET_HEADER), HeaderValue::from(s.offset)),
            (header::HeaderName::from_static(LENGTH_HEADER), HeaderValue::from(s.size)),
        ],
    )
        .into_response()
}

async fn put_blob_chunk(
    State(state): State<AppState>,
    UrlPath((id, name)): UrlPath<(String, String)>,
    headers: HeaderMap,
    body: Bytes,
) -> Response {
    let package = match lookup(&state, &id) {
        Ok(p) => p,
        Err(r) => return r,
    };
    let Some(slot) = package.blobs.get(&name) else {
        return message(StatusCode::NOT_FOUND, format!("unknown blob {name}"));
    };
    let Some((start, end, total)) = headers
        .get(header::CONTENT_RANGE)
        .and_then(|v| v.to_str().ok())
        .and_then(parse_content_range)
    else {
        return message(StatusCode::BAD_REQUEST, "Content-Range: bytes start-end/total required");
    };
    if end - start + 1 != body.len() as u64 {
        return message(StatusCode::BAD_REQUEST, "body length does not match Content-Range");
    }

    let mut s = slot.lock().await;
    if package.committed().is_some() {
        return message(StatusCode::CONFLICT, "package already committed");
    }
    if total != s.size || end >= s.size {
        return error(
            StatusCode::RANGE_NOT_SATISFIABLE,
            ErrorBody {
                error: format!("range exceeds blob size {}", s.size),
                expected_offset: Some(s.offset),
                ..ErrorBody::default()
            },
        );
    }
    if end < s.offset {
        // Already durable: a replay after a lost acknowledgement.
        return (StatusCode::NO_CONTENT, offset_headers(s.offset)).into_response();
    }
    if start != s.offset {
        let mut r = error(
            StatusCode::RANGE_NOT_SATISFIABLE,
            ErrorBody {
                error: format!("expected range starting at {}", s.offset),
                expected_offset: Some(s.offset),
                ..ErrorBody::default()
            },
        );
        r.headers_mut().extend(offset_headers(s.offset));
        return r;
    }
    let path = package.dir.join(&name);
    let appended = blocking(move || {
        let mut f = OpenOptions::new().append(true).open(&path)?;
        f.write_all(&body)?;
        f.sync_data()?;
        Ok(f.metadata()?.len())
    })
    .await;
    match appended {
        Ok(len) => {
            s.offset = len;
            (StatusCode::NO_CONTENT, offset_headers(len)).into_response()
        }
        Err(e) => {
            // Re-derive the durable offset from disk after a failed write.
            if let Ok(m) = fs::metadata(package.dir.join(&name)) {
                s.offset = m.len().min(s.size);
            }
            io_error(e)
        }
    }
}

fn file_sha256(path: &Path) -> io::Result<String> {
    let mut f = File::open(path)?;
    let mut h = Sha256::new();
    let mut buf = vec![0u8; 64 * 1024];
    loop {
        let n = f.read(&mut buf)?;
        if n == 0 {
            break;
        }
        h.update(&buf[..n]);
    }
    Ok(hex::encode(h.finalize()))
}

async fn commit_package(State(state): State<AppState>, UrlPath(id): UrlPath<String>) -> Response {
    let package = match lookup(&state, &id) {
        Ok(p) => p,
        Err(r) => return r,
    };
    let mut log = state.commit_log.lock().await;
    if let Some(seq) = package.committed() {
        let at = state.events.read().expect("events lock")[seq as usize - 1].committed_at_ms;
        return Json(CommitResponse {
            commit_seq: seq,
            committed_at_ms: at,
        })
        .into_response();
    }
    let mut guards = Vec::with_capacity(package.blobs.len());
    for (name, slot) in &package.blobs {
        guards.push((name.clone(), slot.lock().await));
    }
    let incomplete: Vec<String> = guards
        .iter()
        .filter(|(_, s)| s.offset != s.size)
        .map(|(n, _)| n.clone())
        .collect();
    if !incomplete.is_empty() {
        return error(
            StatusCode::CONFLICT,
            ErrorBody {
                error: "blobs incomplete".into(),
                blobs: incomplete,
                ..ErrorBody::default()
            },
        );
    }
    let checks: Vec<(String, PathBuf, String)> = guards
        .iter()
        .map(|(n, s)| (n.clone(), package.dir.join(n), s.sha256.clone()))
        .collect();
    let mismatched = blocking(move || {
        let mut bad = Vec::new();
        for (name, path, expected) in checks {
            if file_sha256(&path)? != expected {
                bad.push(name);
            }
        }
        Ok(bad)
    })
    .await;
    let mismatched = match mismatched {
        Ok(m) => m,
        Err(e) => return io_error(e),
    };
    if !mismatched.is_empty() {
        return error(
            StatusCode::UNPROCESSABLE_ENTITY,
            ErrorBody {
                error: format!("sha256 mismatch: {}", mismatched.join(", ")),
                blobs: mismatched,
                ..ErrorBody::default()
            },
        );
    }

    let seq = state.events.read().expect("events lock").len() as u64 + 1;
    let record = EventRecord {
        commit_seq: seq,
        package_id: id,
        committed_at_ms: now_ms(),
    };
    let mut line = serde_json::to_vec(&record).expect("event serializes");
    line.push(b'\n');
    if let Err(e) = log.file.write_all(&line).and_then(|_| log.file.sync_data()) {
        return io_error(e);
    }
    *package.commit_seq.lock().expect("commit_seq lock") = Some(seq);
    state.events.write().expect("events lock").push(record.clone());
    // No receivers is not an error.
    let _ = state.fanout.send(record.clone());
    drop(guards);
    drop(log);
    Json(CommitResponse {
        commit_seq: seq,
        committed_at_ms: record.committed_at_ms,
    })
    .into_response()
}

#[derive(Debug, Deserialize)]
struct SinceQuery {
    #[serde(default)]
    since_seq: u64,
}

async fn query_packages(State(state): State<AppState>, Query(q): Query<SinceQuery>) -> Response {
    let events: Vec<EventRecord> = state
        .events
        .read()
        .expect("events lock")
        .iter()
        .skip(q.since_seq as usize)
        .cloned()
        .collect();
    let map = state.packages.read().expect("registry lock");
    let list: Vec<CommittedPackage> = events
        .iter()
        .filter_map(|e| {
            map.get(&e.package_id).map(|p| CommittedPackage {
                commit_seq: e.commit_seq,
                manifest: p.manifest.clone(),
            })
        })
        .collect();
    Json(list).into_response()
}

async fn download_blob(State(state): State<AppState>, UrlPath((id, name)): UrlPath<(String, String)>) -> Response {
    let package = match lookup(&state, &id) {
        Ok(p) => p,
        Err(r) => return r,
    };
    if !package.blobs.contains_key(&name) {
        return message(StatusCode::NOT_FOUND, format!("unknown blob {name}"));
    }
    if package.committed().is_none() {
        return message(StatusCode::CONFLICT, "package not committed");
    }
    let path = package.dir.join(&name);
    match blocking(move || fs::read(path)).await {
        Ok(bytes) => (StatusCode::OK, [(header::CONTENT_TYPE, "application/octet-stream")], bytes).into_response(),
        Err(e) => io_error(e),
    }
}

#[derive(Debug, Deserialize)]
struct StreamQuery {
    #[serde(default)]
    from_seq: u64,
}

fn sse_event(e: &EventRecord) -> Result<Event, Infallible> {
    Ok(Event::default()
        .id(e.commit_seq.to_string())
        .event("commit")
        .data(serde_json::to_string(e).expect("event serializes")))
}

/// Replays committed events after `from_seq`, then tails live commits.
/// Subscribing before taking the backlog snapshot means no commit falls
/// between the two; duplicates are skipped by sequence number.
async fn subscribe_events(
    State(state): State<AppState>,
    Query(q): Query<StreamQuery>,
) -> Sse<impl Stream<Item = Result<Event, Infallible>>> {
    let rx = state.fanout.subscribe();
    let backlog: Vec<EventRecord> = state
        .events
        .read()
        .expect("events lock")
        .iter()
        .skip(q.from_seq as usize)
        .cloned()
        .collect();
    let last = backlog.last().map_or(q.from_seq, |e| e.commit_seq);
    let live = futures::stream::unfold((rx, last), |(mut rx, last)| async move {
        loop {
            match rx.recv().await {
                Ok(e) if e.commit_seq <= last => continue,
                Ok(e) => {
                    let seq = e.commit_seq;
                    return Some((e, (rx, seq)));
                }
                // Lagged subscribers are cut off and reconnect with replay.
                Err(_) => return None,
            }
        }
    });
    let mut shutdown = state.shutdown.clone();
    let stream = futures::stream::iter(backlog)
        .chain(live)
        .map(|e| sse_event(&e))
        .take_until(async move {
            let _ = shutdown.wait_for(|stop| *stop).await;
        });
    Sse::new(stream).keep_alive(KeepAlive::default())
}

/// Runs the server until `shutdown` turns true.
pub async fn serve(listener: tokio::net::TcpListener, server: Server, mut shutdown: watch::Receiver<bool>) -> io::Result<()> {
    axum::serve(listener, server.router())
        .with_graceful_shutdown(async move {
            let _ = shutdown.wait_for(|stop| *stop).await;
        })
        .await
}

/// A server running on its own thread and runtime.
pub struct ServerHandle {
    addr: SocketAddr,
    stop: watch::Sender<bool>,
    thread: Option<JoinHandle<io::Result<()>>>,
}

impl ServerHandle {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    /// Stops accepting, closes event streams, and waits for in-flight
    /// requests to finish.
    pub fn shutdown(mut self) -> io::Result<()> {
        self.stop_and_join()
    }

    fn stop_and_join(&mut self) -> io::Result<()> {
        let _ = self.stop.send(true);
        match self.thread.take() {
            Some(t) => t.join().map_err(|_| io::Error::other("server thread panicked"))?,
            None => Ok(()),
        }
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        let _ = self.stop_and_join();
    }
}

/// Binds, loads the data directory, and serves on a background thread.
/// Port 0 picks a free port; see [`ServerHandle::addr`].
pub fn spawn_background(config: ServerConfig) -> io::Result<ServerHandle> {
    let (stop, stop_rx) = watch::channel(false);
    let server = Server::open(&config.data_dir, config.max_body_bytes, config.subscriber_queue, stop_rx.clone())?;
    let std_listener = std::net::TcpListener::bind(config.listen)?;
    std_listener.set_nonblocking(true)?;
    let addr = std_listener.local_addr()?;
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .worker_threads(4)
        .enable_all()
        .build()?;
    let thread = std::thread::Builder::new()
        .name(format!("syncd-{}", addr.port()))
        .spawn(move || {
            runtime.block_on(async move {
                let listener = tokio::net::TcpListener::from_std(std_listener)?;
                serve(listener, server, stop_rx).await
            })
        })?;
    Ok(ServerHandle {
        addr,
        stop,
        thread: Some(thread),
    })
}
