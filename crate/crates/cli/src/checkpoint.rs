//! Versioned, checksummed agent checkpoints.
//!
//! Layout: a magic/version line, a `sha256 <hex>` line, then a JSON body.
//! Floats are written with round-trip precision so reloads are bitwise exact.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use transducer_core::agent::{Agent, TrainingReport};

pub const MAGIC: &str = "TRANSDUCER-CHECKPOINT";
pub const VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("checkpoint i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a checkpoint file")]
    NotACheckpoint,
    #[error("unsupported checkpoint version {found} (expected {VERSION})")]
    Version { found: String },
    #[error("checkpoint is corrupt: {0}")]
    Corrupt(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub seed: u64,
    pub config_hash: String,
    pub config_echo: String,
    pub agent: Agent,
    pub report: TrainingReport,
}

impl Checkpoint {
    pub fn encode(&self) -> Result<String, CheckpointError> {
        let body = serde_json::to_string(self).map_err(|e| CheckpointError::Corrupt(e.to_string()))?;
        let digest = hex::encode(Sha256::digest(body.as_bytes()));
        Ok(format!("{MAGIC} v{VERSION}\nsha256 {digest}\n{body}"))
    }

    pub fn decode(text: &str) -> Result<Self, CheckpointError> {
        let mut parts = text.splitn(3, '\n');
        let header = parts.next().unwrap_or_default();
        let version = header.strip_prefix(MAGIC).ok_or(CheckpointError::NotACheckpoint)?.trim();
        if version != format!("v{VERSION}") {
            return Err(CheckpointError::Version { found: version.to_string() });
        }
        let digest = parts
            .next()
            .and_then(|l| l.strip_prefix("sha256 "))
            .ok_or_else(|| CheckpointError::Corrupt("missing checksum line".into()))?;
        let body = parts.next().ok_or_else(|| CheckpointError::Corrupt("missing body".into()))?;
        if hex::encode(Sha256::digest(body.as_bytes())) != digest.trim() {
            return Err(CheckpointError::Corrupt("checksum mismatch".into()));
        }
        serde_json::from_str(body).map_err(|e| CheckpointError::Corrupt(e.to_string()))
    }
}

pub fn save_checkpoint(ck: &Checkpoint, path: &Path) -> Result<(), CheckpointError> {
    std::fs::write(path, ck.encode()?)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, CheckpointError> {
    Checkpoint::decode(&std::fs::read_to_string(path)?)
}
