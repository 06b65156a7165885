//! File formats, wire protocol, ground station and the `mural` command
//! line built on `mural-core`.

use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

pub mod pgm;
pub mod plan_file;
pub mod report;
pub mod reproject;
pub mod scenario_file;
pub mod service;
pub mod station;
pub mod wire;

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut s = String::with_capacity(64);
    for b in digest {
        s.push_str(&format!("{b:02x}"));
    }
    s
}

#[derive(Debug, thiserror::Error)]
pub enum FormatError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("plan: {0}")]
    Plan(String),
    #[error("params: {0}")]
    Params(String),
    #[error("scenario: {0}")]
    Scenario(String),
    #[error("metrics: {0}")]
    Metrics(String),
    #[error("image: {0}")]
    Pgm(String),
}

impl FormatError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        FormatError::Io { path: path.to_path_buf(), source }
    }
}
