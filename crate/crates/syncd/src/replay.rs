//! Scripted network conditions for upload runs against a live server.

use std::path::Path;
use std::time::Duration;

use roadsense_core::model::{self, MANIFEST_FILE};
use roadsense_core::packstore::{RetryPolicy, UploadState};
use serde::{Deserialize, Serialize};

use crate::client::SyncClient;
use crate::uploader::{Fault, FaultPlan, Transcript, UploadError, UploadOptions, Uploader};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkProfile {
    /// Cut the connection mid-chunk once this share of the package's bytes
    /// is durable.
    pub drop_at_fraction: Option<f64>,
    pub latency_ms: u64,
    /// Further disconnects, spread evenly over the rest of the transfer and
    /// alternating lost acknowledgements with truncated bodies.
    pub disconnect_count: u32,
    /// Simulated process kill at this share of the bytes.
    pub crash_at_fraction: Option<f64>,
}

impl NetworkProfile {
    pub fn clean() -> Self {
        NetworkProfile::default()
    }

    pub fn fault_plan(&self, total_bytes: u64) -> FaultPlan {
        let at = |f: f64| ((f.clamp(0.0, 1.0) * total_bytes as f64).floor() as u64).min(total_bytes.saturating_sub(1));
        let mut points = Vec::new();
        if total_bytes == 0 {
            return FaultPlan::default();
        }
        let base = self.drop_at_fraction.map_or(0, at);
        if self.drop_at_fraction.is_some() {
            points.push((base, Fault::TruncatedBody));
        }
        let n = self.disconnect_count as u64;
        for k in 1..=n {
            let fault = if k % 2 == 1 { Fault::LostAck } else { Fault::TruncatedBody };
            points.push((base + (total_bytes - base) * k / (n + 1), fault));
        }
        if let Some(f) = self.crash_at_fraction {
            points.push((at(f), Fault::Crash));
        }
        FaultPlan::new(points)
    }
}

#[derive(Debug)]
pub struct ReplayOutcome {
    /// `None` when the run ended in a simulated crash.
    pub state: Option<UploadState>,
    pub transcript: Transcript,
    pub error: Option<UploadError>,
}

/// Uploads the package at `package_dir` to `endpoint` under `profile`.
/// Unreachable servers end in `Failed` once retries run out; the
/// transcript is returned either way.
pub fn replay_upload(
    package_dir: &Path,
    endpoint: &str,
    profile: &NetworkProfile,
    policy: RetryPolicy,
) -> Result<ReplayOutcome, UploadError> {
    let manifest = model::parse_manifest(&std::fs::read(package_dir.join(MANIFEST_FILE))?)
        .map_err(|e| UploadError::InvalidPackage(e.to_string()))?;
    let client = SyncClient::new(endpoint);
    let opts = UploadOptions {
        policy,
        latency: Duration::from_millis(profile.latency_ms),
        ..UploadOptions::default()
    };
    let mut uploader = Uploader::new(&client, opts).with_faults(profile.fault_plan(manifest.total_bytes()));
    let result = uploader.upload(package_dir);
    let transcript = std::mem::take(&mut uploader.transcript);
    match result {
        Ok(state) => Ok(ReplayOutcome {
            state: Some(state),
            transcript,
            error: None,
        }),
        Err(e @ UploadError::Crashed) => Ok(ReplayOutcome {
            state: None,
            transcript,
            error: Some(e),
        }),
        Err(e) => Err(e),
    }
}
