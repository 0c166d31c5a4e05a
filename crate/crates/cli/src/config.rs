//! Tunables shared by every command, loadable from one JSON file.
//!
//! Every field has a default, so a config file only needs the keys it
//! changes. Command-line flags override the file.

use std::path::Path;

use roadsense_core::kinematics::SpikeConfig;
use roadsense_core::packstore::RetryPolicy;
use roadsense_core::timeline::AlignConfig;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RmsConfig {
    pub window_ms: u64,
    pub hop_ms: u64,
    pub detrend: bool,
}

impl Default for RmsConfig {
    fn default() -> Self {
        RmsConfig {
            window_ms: 1000,
            hop_ms: 500,
            detrend: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisConfig {
    pub align: AlignConfig,
    pub spikes: SpikeConfig,
    /// Series plotted in `accel.svg`.
    pub rms: RmsConfig,
    /// 0.1 mile.
    pub segment_len_m: f64,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig {
            align: AlignConfig::default(),
            spikes: SpikeConfig::default(),
            rms: RmsConfig::default(),
            segment_len_m: 160.9,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UploadConfig {
    pub retry: RetryPolicy,
    pub chunk_size: usize,
    pub parallelism: usize,
}

impl Default for UploadConfig {
    fn default() -> Self {
        UploadConfig {
            retry: RetryPolicy::default(),
            chunk_size: 64 * 1024,
            parallelism: 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QueryConfig {
    /// Nearest-lookup tolerance.
    pub tol_ms: u64,
}

impl Default for QueryConfig {
    fn default() -> Self {
        QueryConfig { tol_ms: 50 }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub analysis: AnalysisConfig,
    pub upload: UploadConfig,
    pub query: QueryConfig,
}

impl Config {
    /// Defaults when `path` is `None`.
    pub fn load(path: Option<&Path>) -> Result<Config, CliError> {
        let Some(path) = path else {
            return Ok(Config::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Argument(format!("{}: {e}", path.display())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_file_keeps_other_defaults() {
        let c: Config = serde_json::from_str(r#"{"analysis":{"segment_len_m":100,"spikes":{"k":4}}}"#).unwrap();
        assert_eq!(c.analysis.segment_len_m, 100.0);
        assert_eq!(c.analysis.spikes.k, 4.0);
        assert_eq!(c.analysis.spikes.window_ms, SpikeConfig::default().window_ms);
        assert_eq!(c.upload, UploadConfig::default());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(serde_json::from_str::<Config>(r#"{"analysis":{"segment_length":1}}"#).is_err());
    }

    #[test]
    fn defaults_round_trip() {
        let c = Config::default();
        let text = serde_json::to_string(&c).unwrap();
        assert_eq!(serde_json::from_str::<Config>(&text).unwrap(), c);
    }
}
