//! Wire types shared by the server and the blocking client.

use std::collections::BTreeMap;

use roadsense_core::model::PackageManifest;
use serde::{Deserialize, Serialize};

/// Durable byte count of a blob, reported on PUT, HEAD and 416 responses.
pub const OFFSET_HEADER: &str = "upload-offset";
/// Declared blob size, reported on HEAD.
pub const LENGTH_HEADER: &str = "upload-length";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventRecord {
    pub commit_seq: u64,
    pub package_id: String,
    pub committed_at_ms: i64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PackageStatus {
    Open,
    Committed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlobOffset {
    pub size: u64,
    pub offset: u64,
}

/// Upload session: returned by package creation and `GET /v1/packages/{id}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionInfo {
    pub package_id: String,
    pub status: PackageStatus,
    pub blobs: BTreeMap<String, BlobOffset>,
    pub commit_seq: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommitResponse {
    pub commit_seq: u64,
    pub committed_at_ms: i64,
}

/// One element of the `GET /v1/packages` listing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommittedPackage {
    pub commit_seq: u64,
    pub manifest: PackageManifest,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub field: Option<String>,
    /// Blobs responsible for a commit rejection.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub blobs: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expected_offset: Option<u64>,
}

/// `bytes start-end/total` with `end` inclusive.
pub fn content_range(start: u64, len: u64, total: u64) -> String {
    format!("bytes {}-{}/{}", start, start + len - 1, total)
}

/// Parses a `Content-Range` header into `(start, end_inclusive, total)`.
pub fn parse_content_range(v: &str) -> Option<(u64, u64, u64)> {
    let rest = v.trim().strip_prefix("bytes ")?;
    let (range, total) = rest.split_once('/')?;
    let (start, end) = range.split_once('-')?;
    let (start, end, total) = (start.parse().ok()?, end.parse().ok()?, total.parse().ok()?);
    (start <= end).then_some((start, end, total))
}
