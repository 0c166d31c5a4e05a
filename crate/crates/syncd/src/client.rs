//! Blocking client for the sync protocol.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Read};
use std::time::Duration;

use roadsense_core::model::{self, PackageManifest};
use roadsense_core::packstore::RemoteOffsets;
use thiserror::Error;
use ureq::http::Response;
use ureq::{Agent, Body};

use crate::protocol::{
    content_range, CommitResponse, CommittedPackage, ErrorBody, EventRecord, SessionInfo, LENGTH_HEADER, OFFSET_HEADER,
};

#[derive(Debug, Error)]
pub enum ClientError {
    /// No usable response: connection refused, reset, timed out.
    #[error("transport: {0}")]
    Transport(String),
    #[error("HTTP {status}: {}", body.error)]
    Status { status: u16, body: ErrorBody },
    #[error("protocol: {0}")]
    Protocol(String),
}

impl ClientError {
    pub fn status(&self) -> Option<u16> {
        match self {
            ClientError::Status { status, .. } => Some(*status),
            _ => None,
        }
    }

    /// Worth retrying later: transport failures and 5xx.
    pub fn is_transient(&self) -> bool {
        match self {
            ClientError::Transport(_) => true,
            ClientError::Status { status, .. } => *status >= 500,
            ClientError::Protocol(_) => false,
        }
    }
}

impl From<ureq::Error> for ClientError {
    fn from(e: ureq::Error) -> Self {
        ClientError::Transport(e.to_string())
    }
}

/// Result of a chunk upload.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChunkOutcome {
    /// Server's durable offset after the request.
    Accepted(u64),
    /// 416: the server expects the next chunk at this offset.
    Mismatch(u64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Created {
    New,
    Existing,
}

#[derive(Debug, Clone)]
pub struct SyncClient {
    base: String,
    agent: Agent,
}

const MAX_DOWNLOAD: u64 = 4 * 1024 * 1024 * 1024;

fn header_u64(resp: &Response<Body>, name: &str) -> Option<u64> {
    resp.headers().get(name)?.to_str().ok()?.parse().ok()
}

fn read_json<T: serde::de::DeserializeOwned>(mut resp: Response<Body>) -> Result<T, ClientError> {
    let text = resp
        .body_mut()
        .read_to_string()
        .map_err(|e| ClientError::Transport(e.to_string()))?;
    serde_json::from_str(&text).map_err(|e| ClientError::Protocol(format!("{e}: {text}")))
}

fn status_error(mut resp: Response<Body>) -> ClientError {
    let status = resp.status().as_u16();
    let text = resp.body_mut().read_to_string().unwrap_or_default();
    let body = serde_json::from_str(&text).unwrap_or(ErrorBody {
        error: text,
        ..ErrorBody::default()
    });
    ClientError::Status { status, body }
}

fn encode_segment(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for b in s.bytes() {
        if b.is_ascii_alphanumeric() || matches!(b, b'-' | b'_' | b'.' | b'~' | b'/') {
            out.push(b as char);
        } else {
            out.push_str(&format!("%{b:02X}"));
        }
    }
    out
}

impl SyncClient {
    pub fn new(base_url: &str) -> Self {
        let agent: Agent = Agent::config_builder()
            .http_status_as_error(false)
            .timeout_connect(Some(Duration::from_secs(5)))
            .timeout_recv_response(Some(Duration::from_secs(30)))
            .build()
            .into();
        SyncClient {
            base: base_url.trim_end_matches('/').to_string(),
            agent,
        }
    }

    pub fn base_url(&self) -> &str {
        &self.base
    }

    fn url(&self, path: &str) -> String {
        format!("{}{}", self.base, path)
    }

    pub fn blob_path(package_id: &str, name: &str) -> String {
        format!("/v1/packages/{}/blobs/{}", encode_segment(package_id), encode_segment(name))
    }

    pub fn health(&self) -> Result<(), ClientError> {
        let resp = self.agent.get(&self.url("/v1/health")).call()?;
        if resp.status().is_success() {
            Ok(())
        } else {
            Err(status_error(resp))
        }
    }

    /// Registers the package, or returns the existing session for an
    /// identical manifest.
    pub fn create_package(&self, manifest: &PackageManifest) -> Result<(Created, SessionInfo), ClientError> {
        let body = model::serialize_manifest(manifest).map_err(|e| ClientError::Protocol(e.to_string()))?;
        let resp = self
            .agent
            .post(&self.url("/v1/packages"))
            .header("content-type", "application/json")
            .send(&body[..])?;
        match resp.status().as_u16() {
            201 => Ok((Created::New, read_json(resp)?)),
            200 => Ok((Created::Existing, read_json(resp)?)),
            _ => Err(status_error(resp)),
        }
    }

    /// `None` for an unknown package.
    pub fn session(&self, package_id: &str) -> Result<Option<SessionInfo>, ClientError> {
        let resp = self
            .agent
            .get(&self.url(&format!("/v1/packages/{}", encode_segment(package_id))))
            .call()?;
        match resp.status().as_u16() {
            200 => Ok(Some(read_json(resp)?)),
            404 => Ok(None),
            _ => Err(status_error(resp)),
        }
    }

    /// `(offset, size)` of one blob via HEAD.
    pub fn blob_offset(&self, package_id: &str, name: &str) -> Result<(u64, u64), ClientError> {
        let resp = self.agent.head(&self.url(&Self::blob_path(package_id, name))).call()?;
        if resp.status().as_u16() != 200 {
            return Err(ClientError::Status {
                status: resp.status().as_u16(),
                body: ErrorBody::default(),
            });
        }
        match (header_u64(&resp, OFFSET_HEADER), header_u64(&resp, LENGTH_HEADER)) {
            (Some(o), Some(l)) => Ok((o, l)),
            _ => Err(ClientError::Protocol("HEAD without offset headers".into())),
        }
    }

    pub fn put_chunk(
        &self,
        package_id: &str,
        name: &str,
        start: u64,
        data: &[u8],
        total: u64,
    ) -> Result<ChunkOutcome, ClientError> {
        let resp = self
            .agent
            .put(&self.url(&Self::blob_path(package_id, name)))
            .header("content-range", &content_range(start, data.len() as u64, total))
            .header("content-type", "application/octet-stream")
            .send(data)?;
        match resp.status().as_u16() {
            204 => header_u64(&resp, OFFSET_HEADER)
                .map(ChunkOutcome::Accepted)
                .ok_or_else(|| ClientError::Protocol("204 without offset".into())),
            416 => {
                let offset = header_u64(&resp, OFFSET_HEADER);
                let err = status_error(resp);
                let expected = match &err {
                    ClientError::Status { body, .. } => body.expected_offset.or(offset),
                    _ => offset,
                };
                expected.map(ChunkOutcome::Mismatch).ok_or(err)
            }
            _ => Err(status_error(resp)),
        }
    }

    pub fn commit(&self, package_id: &str) -> Result<CommitResponse, ClientError> {
        let resp = self
            .agent
            .post(&self.url(&format!("/v1/packages/{}/commit", encode_segment(package_id))))
            .send_empty()?;
        match resp.status().as_u16() {
            200 => read_json(resp),
            _ => Err(status_error(resp)),
        }
    }

    pub fn query(&self, since_seq: u64) -> Result<Vec<CommittedPackage>, ClientError> {
        let resp = self
            .agent
            .get(&self.url(&format!("/v1/packages?since_seq={since_seq}")))
            .call()?;
        match resp.status().as_u16() {
            200 => read_json(resp),
            _ => Err(status_error(resp)),
        }
    }

    pub fn download(&self, package_id: &str, name: &str) -> Result<Vec<u8>, ClientError> {
        let mut resp = self.agent.get(&self.url(&Self::blob_path(package_id, name))).call()?;
        if resp.status().as_u16() != 200 {
            return Err(status_error(resp));
        }
        resp.body_mut()
            .with_config()
            .limit(MAX_DOWNLOAD)
            .read_to_vec()
            .map_err(|e| ClientError::Transport(e.to_string()))
    }

    /// Opens the commit event stream, replaying from after `from_seq`.
    pub fn subscribe(&self, from_seq: u64) -> Result<EventStream, ClientError> {
        let resp = self
            .agent
            .get(&self.url(&format!("/v1/stream?from_seq={from_seq}")))
            .header("accept", "text/event-stream")
            .config()
            .timeout_recv_body(None)
            .build()
            .call()?;
        if resp.status().as_u16() != 200 {
            return Err(status_error(resp));
        }
        Ok(EventStream {
            reader: BufReader::new(Box::new(resp.into_body().into_reader())),
        })
    }
}

impl RemoteOffsets for SyncClient {
    fn durable_offsets(&self, manifest: &PackageManifest) -> Result<BTreeMap<String, u64>, String> {
        match self.session(&manifest.package_id) {
            Ok(Some(s)) => Ok(s.blobs.into_iter().map(|(k, v)| (k, v.offset)).collect()),
            Ok(None) => Ok(BTreeMap::new()),
            Err(e) => Err(e.to_string()),
        }
    }
}

/// Blocking iterator over `commit` events. Ends when the server closes the
/// stream; dropping it closes the connection.
pub struct EventStream {
    reader: BufReader<Box<dyn Read + Send>>,
}

impl Iterator for EventStream {
    type Item = Result<EventRecord, ClientError>;

    fn next(&mut self) -> Option<Self::Item> {
        let mut event = String::new();
        let mut data = String::new();
        let mut line = String::new();
        loop {
            line.clear();
            match self.reader.read_line(&mut line) {
                Ok(0) => return None,
                Ok(_) => {}
                Err(e) => return Some(Err(ClientError::Transport(e.to_string()))),
            }
            let l = line.trim_end_matches(['\r', '\n']);
            if l.is_empty() {
                if data.is_empty() {
                    continue;
                }
                if event.is_empty() || event == "commit" {
                    return Some(
                        serde_json::from_str(&data).map_err(|e| ClientError::Protocol(format!("{e}: {data}"))),
                    );
                }
                event.clear();
                data.clear();
                continue;
            }
            if l.starts_with(':') {
                continue;
            }
            let (field, value) = l.split_once(':').unwrap_or((l, ""));
            let value = value.strip_prefix(' ').unwrap_or(value);
            match field {
                "event" => event = value.to_string(),
                "data" => {
                    if !data.is_empty() {
                        data.push('\n');
                    }
                    data.push_str(value);
                }
                _ => {}
            }
        }
    }
}
