use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::checkpoint::CHECKPOINT_VERSION;
use crate::error::{Error, Result};
use crate::tracker::{Trajectory, TrajectoryRecord};

/// SHA-256 of the value's compact JSON encoding, hex encoded.
pub fn config_hash<S: Serialize>(value: &S) -> Result<String> {
    let bytes = serde_json::to_vec(value)?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Versions of everything that shapes an output file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArtifactVersions {
    pub toolkit: String,
    pub checkpoint_format: u32,
}

impl Default for ArtifactVersions {
    fn default() -> Self {
        ArtifactVersions {
            toolkit: env!("CARGO_PKG_VERSION").to_string(),
            checkpoint_format: CHECKPOINT_VERSION,
        }
    }
}

/// Contents of `run.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub seed: u64,
    pub config_hash: String,
    /// The effective configuration, so the run can be repeated from this
    /// file alone.
    pub config: serde_json::Value,
    pub versions: ArtifactVersions,
    /// Output files relative to the output directory.
    pub artifacts: Vec<String>,
}

impl RunManifest {
    pub fn new<S: Serialize>(command: &str, seed: u64, config: &S, artifacts: Vec<String>) -> Result<Self> {
        Ok(RunManifest {
            command: command.to_string(),
            seed,
            config_hash: config_hash(config)?,
            config: serde_json::to_value(config)?,
            versions: ArtifactVersions::default(),
            artifacts,
        })
    }
}

/// Trajectory plus the metadata needed to reproduce it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryDocument {
    pub sequence: String,
    pub seed: u64,
    pub config_hash: String,
    pub frames: Vec<TrajectoryRecord>,
}

impl TrajectoryDocument {
    pub fn new(sequence: &str, seed: u64, config_hash: String, trajectory: &Trajectory) -> Self {
        TrajectoryDocument {
            sequence: sequence.to_string(),
            seed,
            config_hash,
            frames: trajectory.records().to_vec(),
        }
    }

    pub fn trajectory(&self) -> Result<Trajectory> {
        Trajectory::new(self.frames.clone())
    }
}

pub fn write_json<S: Serialize>(path: &Path, value: &S) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    write_text(path, &s)
}

pub fn read_json<D: for<'de> Deserialize<'de>>(path: &Path) -> Result<D> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}
