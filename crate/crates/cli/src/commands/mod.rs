//! Resolved command invocations and their execution.
//!
//! Argument parsing produces an [`Invocation`] with every default and config
//! file already folded in; execution depends on nothing else, which is what
//! makes a manifest sufficient for a byte-identical rerun.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};
use crate::manifest::{InputDigest, Manifest};
use crate::output::{read_file, sha256_hex, write_atomic};

pub mod campaign;
pub mod inference;
pub mod point;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Invocation {
    Transition(point::TransitionRun),
    Contrast(point::ContrastRun),
    Scan(point::ScanRun),
    Dataset(inference::DatasetRun),
    Campaign(campaign::CampaignRun),
    Fit(inference::FitRun),
    Bound(inference::BoundRun),
}

impl Invocation {
    pub fn name(&self) -> &'static str {
        match self {
            Invocation::Transition(_) => "transition",
            Invocation::Contrast(_) => "contrast",
            Invocation::Scan(_) => "scan",
            Invocation::Dataset(_) => "dataset",
            Invocation::Campaign(_) => "campaign",
            Invocation::Fit(_) => "fit",
            Invocation::Bound(_) => "bound",
        }
    }

    pub fn seed(&self) -> Option<u64> {
        match self {
            Invocation::Contrast(r) => Some(r.seed),
            Invocation::Dataset(r) => Some(r.seed),
            Invocation::Campaign(r) => Some(r.config.campaign.seed),
            _ => None,
        }
    }

    pub fn outputs(&self) -> Vec<PathBuf> {
        let mut out = Vec::new();
        match self {
            Invocation::Transition(r) => out.extend(r.output.clone()),
            Invocation::Contrast(r) => out.extend(r.output.clone()),
            Invocation::Scan(r) => out.push(r.output.clone()),
            Invocation::Dataset(r) => out.push(r.output.clone()),
            Invocation::Campaign(r) => {
                out.push(r.output.clone());
                out.extend(r.summary.clone());
            }
            Invocation::Fit(r) => out.extend(r.output.clone()),
            Invocation::Bound(r) => out.extend(r.output.clone()),
        }
        out
    }

    pub fn inputs(&self) -> Vec<InputDigest> {
        match self {
            Invocation::Fit(r) => vec![r.dataset.clone()],
            Invocation::Bound(r) => vec![r.dataset.clone()],
            _ => Vec::new(),
        }
    }
}

/// Where outputs go during execution.
#[derive(Debug, Clone, Default)]
pub struct Context {
    /// Replace every output directory with this one (keeping file names).
    pub redirect: Option<PathBuf>,
}

impl Context {
    pub fn target(&self, path: &Path) -> PathBuf {
        match (&self.redirect, path.file_name()) {
            (Some(dir), Some(name)) => dir.join(name),
            _ => path.to_path_buf(),
        }
    }

    /// Write `text` to `output` if given, otherwise hand it back for stdout.
    fn emit(&self, output: Option<&Path>, text: String) -> CliResult<String> {
        match output {
            Some(path) => {
                write_atomic(&self.target(path), text.as_bytes())?;
                Ok(String::new())
            }
            None => Ok(text),
        }
    }
}

pub struct Outcome {
    pub stdout: String,
    pub exit_code: i32,
}

impl Outcome {
    fn ok(stdout: String) -> Self {
        Self {
            stdout,
            exit_code: 0,
        }
    }
}

pub fn execute(manifest: &Manifest, ctx: &Context) -> CliResult<Outcome> {
    match &manifest.resolved {
        Invocation::Transition(r) => point::transition(r, ctx),
        Invocation::Contrast(r) => point::contrast(r, ctx),
        Invocation::Scan(r) => point::scan(r, ctx),
        Invocation::Dataset(r) => inference::dataset(r, ctx),
        Invocation::Campaign(r) => campaign::campaign(r, manifest, ctx),
        Invocation::Fit(r) => inference::fit(r, ctx),
        Invocation::Bound(r) => inference::bound(r, ctx),
    }
}

/// Hash an input file for the manifest.
pub fn digest(path: &Path) -> CliResult<InputDigest> {
    Ok(InputDigest {
        path: path.to_path_buf(),
        sha256: sha256_hex(&read_file(path)?),
    })
}

/// Read an input and check it against its recorded digest.
pub fn read_verified(input: &InputDigest) -> CliResult<Vec<u8>> {
    let bytes = read_file(&input.path)?;
    let found = sha256_hex(&bytes);
    if found != input.sha256 {
        return Err(CliError::Usage(format!(
            "{}: sha256 {found} does not match the recorded {}",
            input.path.display(),
            input.sha256
        )));
    }
    Ok(bytes)
}
