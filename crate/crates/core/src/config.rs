//! One JSON configuration document covering every pipeline stage.
//!
//! Every section has complete defaults, so `{}` is a valid configuration and
//! partial documents override only what they name. Unknown fields are
//! rejected anywhere in the tree — a typo must fail loudly, not silently
//! fall back to a default.

use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use thiserror::Error;

use crate::coldstart::MixPolicy;
use crate::reward::RewardConfig;
use crate::sim::{EnvConfig, TrainConfig};

/// How the code verifier executes candidate programs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SandboxConfig {
    /// Command template; `{source}` expands to the candidate program's path.
    pub run_command_template: String,
    /// Per-case wall-clock limit in seconds.
    pub time_limit_secs: f64,
    /// Address-space cap in bytes; 0 disables the cap.
    pub memory_limit_bytes: u64,
}

impl Default for SandboxConfig {
    fn default() -> Self {
        SandboxConfig {
            run_command_template: "sh {source}".into(),
            time_limit_secs: 2.0,
            memory_limit_bytes: 1 << 30,
        }
    }
}

impl SandboxConfig {
    /// Range and template checks.
    pub fn validate(&self) -> Result<(), String> {
        if self.run_command_template.split_whitespace().next().is_none() {
            return Err("run_command_template is empty".into());
        }
        if !self.run_command_template.contains("{source}") {
            return Err("run_command_template never mentions {source}, so the candidate program would not be run".into());
        }
        if !(self.time_limit_secs.is_finite() && self.time_limit_secs > 0.0) {
            return Err(format!("time_limit_secs {} must be positive", self.time_limit_secs));
        }
        Ok(())
    }
}

/// Which transcript generator the corpus builder talks to.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum BackendSelection {
    /// The deterministic built-in generator.
    #[default]
    Synthetic,
    /// Replay transcripts recorded in a JSONL file.
    Replay(PathBuf),
    /// POST queries to an HTTP generation service at this URL.
    Remote(String),
}

/// Top-level configuration: one section per pipeline stage.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct GlobalConfig {
    /// Reward composition and advantage normalization.
    pub reward: RewardConfig,
    /// Simulated environment response model.
    pub env: EnvConfig,
    /// Policy-gradient training loop sizes.
    pub train: TrainConfig,
    /// Corpus mode-mix policy.
    pub mix: MixPolicy,
    /// Code-verifier sandbox limits.
    pub sandbox: SandboxConfig,
    /// Transcript generator selection.
    pub backend: BackendSelection,
}

/// Configuration loading and validation errors.
#[derive(Debug, Error)]
pub enum ConfigError {
    /// The file could not be read.
    #[error("read {path}: {message}")]
    Io {
        /// Offending path.
        path: String,
        /// Underlying error.
        message: String,
    },
    /// The document is not valid JSON for this schema.
    #[error("parse {path}: {message}")]
    Parse {
        /// Offending path.
        path: String,
        /// Underlying error.
        message: String,
    },
    /// The document parsed but a value is out of range.
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

impl GlobalConfig {
    /// Cross-field range checks over every section.
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.reward.validate().map_err(|e| ConfigError::Invalid(format!("reward: {e}")))?;
        self.env.validate().map_err(|e| ConfigError::Invalid(format!("env: {e}")))?;
        self.train.validate().map_err(|e| ConfigError::Invalid(format!("train: {e}")))?;
        self.mix.validate().map_err(|e| ConfigError::Invalid(format!("mix: {e}")))?;
        self.sandbox.validate().map_err(|e| ConfigError::Invalid(format!("sandbox: {e}")))?;
        if let BackendSelection::Replay(path) = &self.backend {
            if !path.exists() {
                return Err(ConfigError::Invalid(format!(
                    "backend: replay file {} does not exist",
                    path.display()
                )));
            }
        }
        Ok(())
    }
}

/// Reads, parses, and validates a configuration file.
pub fn load_config(path: &Path) -> Result<GlobalConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    let config: GlobalConfig = serde_json::from_str(&text).map_err(|e| ConfigError::Parse {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    config.validate()?;
    Ok(config)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_yields_defaults() {
        let cfg: GlobalConfig = serde_json::from_str("{}").unwrap();
        assert_eq!(cfg, GlobalConfig::default());
        assert!(cfg.validate().is_ok());
        assert_eq!(cfg.sandbox.run_command_template, "sh {source}");
        assert_eq!(cfg.backend, BackendSelection::Synthetic);
    }

    #[test]
    fn partial_documents_override_selectively() {
        let cfg: GlobalConfig =
            serde_json::from_str(r#"{"reward": {"judge_weight": 0.3}, "train": {"updates": 5}}"#)
                .unwrap();
        assert_eq!(cfg.reward.judge_weight, 0.3);
        assert_eq!(cfg.reward.modulation_floor, 0.5);
        assert_eq!(cfg.train.updates, 5);
    }

    #[test]
    fn unknown_fields_are_rejected_at_any_depth() {
        assert!(serde_json::from_str::<GlobalConfig>(r#"{"rewards": {}}"#).is_err());
        assert!(serde_json::from_str::<GlobalConfig>(r#"{"reward": {"judge_wieght": 0.2}}"#).is_err());
    }

    #[test]
    fn backend_selection_uses_external_tags() {
        let cfg: GlobalConfig = serde_json::from_str(r#"{"backend": "synthetic"}"#).unwrap();
        assert_eq!(cfg.backend, BackendSelection::Synthetic);
        let cfg: GlobalConfig =
            serde_json::from_str(r#"{"backend": {"remote": "http://127.0.0.1:1/generate"}}"#).unwrap();
        assert_eq!(cfg.backend, BackendSelection::Remote("http://127.0.0.1:1/generate".into()));
    }

    #[test]
    fn validation_rejects_bad_sandbox_and_missing_replay() {
        let mut cfg = GlobalConfig::default();
        cfg.sandbox.run_command_template = "static-command".into();
        assert!(matches!(cfg.validate(), Err(ConfigError::Invalid(_))));

        let mut cfg = GlobalConfig::default();
        cfg.backend = BackendSelection::Replay(PathBuf::from("/nonexistent/replay.jsonl"));
        assert!(matches!(cfg.validate(), Err(ConfigError::Invalid(_))));
    }

    #[test]
    fn load_config_reports_io_and_parse_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cfg.json");
        assert!(matches!(load_config(&path), Err(ConfigError::Io { .. })));
        std::fs::write(&path, "{not json").unwrap();
        assert!(matches!(load_config(&path), Err(ConfigError::Parse { .. })));
        std::fs::write(&path, r#"{"train": {"learning_rate": -1.0}}"#).unwrap();
        assert!(matches!(load_config(&path), Err(ConfigError::Invalid(_))));
        std::fs::write(&path, r#"{"train": {"learning_rate": 0.1}}"#).unwrap();
        assert_eq!(load_config(&path).unwrap().train.learning_rate, 0.1);
    }
}
