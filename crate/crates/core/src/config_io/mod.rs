//! File formats: scene configuration, detection streams (JSON Lines),
//! scenario specs and the append-only results store.

mod detections;
mod scene;
mod store;

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use thiserror::Error;

use crate::simulator::ScenarioSpec;

pub use detections::{parse_detections, read_detections, write_detections, write_detections_to};
pub use scene::SceneConfig;
pub use store::{append_report, load_report, read_reports};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{origin}: malformed document: {detail}")]
    Malformed { origin: String, detail: String },
    #[error("invalid {field}: {reason}")]
    Invalid { field: String, reason: String },
    #[error("line {line}: malformed record: {detail}")]
    MalformedLine { line: usize, detail: String },
    #[error("line {line}: invalid {field}: {reason}")]
    InvalidRecord {
        line: usize,
        field: String,
        reason: String,
    },
    #[error("{origin}: no report with run_id {run_id}")]
    ReportNotFound { origin: String, run_id: String },
}

impl ConfigError {
    pub(crate) fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Self::Invalid {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: &Path, source: io::Error) -> Self {
        Self::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

/// Deserializes with the offending JSON path reported on failure.
pub(crate) fn from_json<T: DeserializeOwned>(text: &str, origin: &str) -> Result<T, ConfigError> {
    let mut de = serde_json::Deserializer::from_str(text);
    let value = serde_path_to_error::deserialize(&mut de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        ConfigError::Malformed {
            origin: origin.to_string(),
            detail: if path == "." {
                inner.to_string()
            } else {
                format!("{path}: {inner}")
            },
        }
    })?;
    de.end().map_err(|e| ConfigError::Malformed {
        origin: origin.to_string(),
        detail: e.to_string(),
    })?;
    Ok(value)
}

pub(crate) fn read_text(path: &Path) -> Result<String, ConfigError> {
    fs::read_to_string(path).map_err(|e| ConfigError::io(path, e))
}

pub(crate) fn write_text(path: &Path, text: &str) -> Result<(), ConfigError> {
    fs::write(path, text).map_err(|e| ConfigError::io(path, e))
}

pub fn load_scene(path: impl AsRef<Path>) -> Result<SceneConfig, ConfigError> {
    let path = path.as_ref();
    SceneConfig::from_json_str(&read_text(path)?, &path.display().to_string())
}

pub fn save_scene(path: impl AsRef<Path>, scene: &SceneConfig) -> Result<(), ConfigError> {
    write_text(path.as_ref(), &scene.to_canonical_json())
}

pub fn load_scenario(path: impl AsRef<Path>) -> Result<ScenarioSpec, ConfigError> {
    let path = path.as_ref();
    ScenarioSpec::from_json_str(&read_text(path)?, &path.display().to_string())
}

pub fn save_scenario(path: impl AsRef<Path>, spec: &ScenarioSpec) -> Result<(), ConfigError> {
    write_text(path.as_ref(), &spec.to_canonical_json())
}
