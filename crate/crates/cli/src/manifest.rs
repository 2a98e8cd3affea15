//! Run manifests embedded in every output artifact.

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    /// Full parsed configuration; re-parses to an identical config.
    pub config_echo: serde_json::Value,
    pub tool_version: String,
    pub started: DateTime<Utc>,
    pub finished: DateTime<Utc>,
    pub exit_status: i32,
}

/// Captures the start time; sealed into a manifest when the artifact is
/// written.
pub struct ManifestTimer {
    command: String,
    config_echo: serde_json::Value,
    started: DateTime<Utc>,
}

impl ManifestTimer {
    pub fn start(command: impl Into<String>, config_echo: serde_json::Value) -> Self {
        ManifestTimer { command: command.into(), config_echo, started: Utc::now() }
    }

    pub fn finish(self, exit_status: i32) -> RunManifest {
        RunManifest {
            command: self.command,
            config_echo: self.config_echo,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            started: self.started,
            finished: Utc::now(),
            exit_status,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_round_trip() {
        let timer = ManifestTimer::start("se", serde_json::json!({"t": 3}));
        let m = timer.finish(0);
        let text = serde_json::to_string(&m).unwrap();
        let back: RunManifest = serde_json::from_str(&text).unwrap();
        assert_eq!(back.command, "se");
        assert_eq!(back.config_echo, serde_json::json!({"t": 3}));
        assert_eq!(back.exit_status, 0);
        assert!(back.finished >= back.started);
    }
}
