//! Per-run manifests: the resolved configuration plus content digests of every
//! input and output.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::Result;

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub tool_version: String,
    pub seed: Option<u64>,
    pub config: serde_json::Value,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn digest_file(path: &Path) -> Result<FileDigest> {
    Ok(FileDigest {
        path: path.display().to_string(),
        sha256: sha256_hex(&fs::read(path)?),
    })
}

impl RunManifest {
    pub fn new(command: &str, config: serde_json::Value, seed: Option<u64>) -> Self {
        Self {
            command: command.to_string(),
            tool_version: TOOL_VERSION.to_string(),
            seed,
            config,
            inputs: Vec::new(),
            outputs: Vec::new(),
        }
    }

    pub fn add_input(&mut self, path: &Path) -> Result<()> {
        self.inputs.push(digest_file(path)?);
        Ok(())
    }

    pub fn add_output(&mut self, path: &Path) -> Result<()> {
        self.outputs.push(digest_file(path)?);
        Ok(())
    }

    /// Records data that went to standard output.
    pub fn add_stdout(&mut self, bytes: &[u8]) {
        self.outputs.push(FileDigest {
            path: "<stdout>".into(),
            sha256: sha256_hex(bytes),
        });
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        fs::write(path, text)?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Ok(serde_json::from_slice(&fs::read(path)?)?)
    }
}

/// Where a command's manifest goes: an explicit path, next to the primary
/// output, or the working directory.
pub fn manifest_path(
    explicit: Option<&Path>,
    primary_output: Option<&Path>,
    command: &str,
) -> PathBuf {
    if let Some(p) = explicit {
        return p.to_path_buf();
    }
    match primary_output {
        Some(out) if out.is_dir() => out.join("run.json"),
        Some(out) => {
            let mut name = out.file_name().unwrap_or_default().to_os_string();
            name.push(".run.json");
            out.with_file_name(name)
        }
        None => PathBuf::from(format!("xlalign-{command}.run.json")),
    }
}
