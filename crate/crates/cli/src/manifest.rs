//! Run manifests: everything needed to regenerate a command's outputs.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::commands::Invocation;
use crate::error::{CliError, CliResult};
use crate::output::{read_file, to_json, write_atomic};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputDigest {
    pub path: PathBuf,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub tool: String,
    pub tool_version: String,
    pub command: String,
    pub seed: Option<u64>,
    /// Files written; an empty list means the report goes to stdout.
    pub outputs: Vec<PathBuf>,
    pub inputs: Vec<InputDigest>,
    pub resolved: Invocation,
}

impl Manifest {
    pub fn new(invocation: Invocation) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            tool: env!("CARGO_PKG_NAME").to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            command: invocation.name().to_string(),
            seed: invocation.seed(),
            outputs: invocation.outputs(),
            inputs: invocation.inputs(),
            resolved: invocation,
        }
    }

    pub fn write(&self, path: &Path) -> CliResult<()> {
        write_atomic(path, to_json(self).as_bytes())
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let bytes = read_file(path)?;
        let manifest: Manifest = serde_json::from_slice(&bytes)
            .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        if manifest.schema_version != SCHEMA_VERSION {
            return Err(CliError::Usage(format!(
                "{}: manifest schema {} is not supported (expected {SCHEMA_VERSION})",
                path.display(),
                manifest.schema_version
            )));
        }
        Ok(manifest)
    }
}
