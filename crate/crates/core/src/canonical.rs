//! Canonical JSON encoding and atomic file replacement.
//!
//! Canonical form is compact JSON with object keys sorted lexicographically,
//! followed by a single LF. Integers print as integers; floats use the
//! shortest representation that round-trips.

use std::fs::{self, File};
use std::io::{self, Write};
use std::path::Path;

use serde::Serialize;

/// Encodes `value` as canonical JSON bytes.
pub fn to_canonical_vec<T: Serialize>(value: &T) -> serde_json::Result<Vec<u8>> {
    // `Value` objects are backed by a sorted map, so re-encoding through it
    // orders every nested object by key.
    let tree = serde_json::to_value(value)?;
    let mut out = serde_json::to_vec(&tree)?;
    out.push(b'\n');
    Ok(out)
}

/// Lowercase hex SHA-256 of `bytes`.
pub fn sha256_hex(bytes: &[u8]) -> String {
    use sha2::{Digest, Sha256};
    hex::encode(Sha256::digest(bytes))
}

/// Replaces `path` with `bytes` via write-temp, fsync, rename.
///
/// Readers observe either the old or the new content, never a mix.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let tmp = temp_path(path);
    {
        let mut f = File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    sync_parent(path)
}

/// Name of the scratch file used by [`write_atomic`] for `path`.
pub fn temp_path(path: &Path) -> std::path::PathBuf {
    let mut name = path
        .file_name()
        .map(|n| n.to_os_string())
        .unwrap_or_default();
    name.push(".tmp");
    path.with_file_name(name)
}

fn sync_parent(path: &Path) -> io::Result<()> {
    #[cfg(unix)]
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            File::open(parent)?.sync_all()?;
        }
    }
    #[cfg(not(unix))]
    let _ = path;
    Ok(())
}
