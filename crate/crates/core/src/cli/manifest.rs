use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use super::commands::{self, Outcome};
use super::Cli;
use crate::error::{Error, Result};
use crate::hash::sha256_hex;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileHash {
    pub path: PathBuf,
    pub sha256: String,
}

impl FileHash {
    fn of(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Ok(Self {
            path: path.to_path_buf(),
            sha256: sha256_hex(&bytes),
        })
    }
}

/// Reproducibility record written next to every output.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    /// Invocation with absolute paths; replayed as is.
    pub invocation: Cli,
    /// Hash of the effective configuration after defaults and overrides.
    pub config_hash: String,
    pub config: serde_json::Value,
    pub seeds: Vec<u64>,
    pub inputs: Vec<FileHash>,
    /// Outputs relative to the manifest's directory.
    pub outputs: Vec<FileHash>,
    pub version: String,
    pub started_unix_s: f64,
    pub finished_unix_s: f64,
    #[serde(skip)]
    pub location: PathBuf,
}

fn now() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0.0, |d| d.as_secs_f64())
}

impl RunManifest {
    pub fn read_json(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut m: Self = serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
        m.location = path.to_path_buf();
        Ok(m)
    }

    /// Output hashes in write order, ignoring file names so runs into
    /// different locations compare equal.
    pub fn output_hashes(&self) -> Vec<&str> {
        self.outputs.iter().map(|f| f.sha256.as_str()).collect()
    }

    /// True when both runs wrote byte-identical outputs.
    pub fn same_outputs(&self, other: &RunManifest) -> bool {
        self.output_hashes() == other.output_hashes()
    }
}

pub(super) fn execute(invocation: Cli) -> Result<RunManifest> {
    let started = now();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(invocation.global.threads.unwrap_or(0))
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let outcome: Outcome = pool.install(|| commands::execute(&invocation))?;
    let base = outcome.manifest.parent().unwrap_or(Path::new(".")).to_path_buf();
    let outputs = outcome
        .outputs
        .iter()
        .map(|p| {
            FileHash::of(p).map(|mut h| {
                h.path = p.strip_prefix(&base).map_or_else(|_| p.clone(), Path::to_path_buf);
                h
            })
        })
        .collect::<Result<_>>()?;
    let manifest = RunManifest {
        command: invocation.name().into(),
        config_hash: crate::hash::json_hash(&outcome.config),
        config: outcome.config,
        seeds: outcome.seeds,
        inputs: outcome.inputs.iter().map(|p| FileHash::of(p)).collect::<Result<_>>()?,
        outputs,
        version: env!("CARGO_PKG_VERSION").into(),
        started_unix_s: started,
        finished_unix_s: now(),
        location: outcome.manifest.clone(),
        invocation,
    };
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| Error::json(&outcome.manifest, e))?;
    std::fs::write(&outcome.manifest, text).map_err(|e| Error::io(&outcome.manifest, e))?;
    Ok(manifest)
}

/// Re-run the invocation recorded in a manifest, writing to `out` instead of
/// the original location when given. Inputs whose hashes changed since the
/// original run are rejected.
pub fn replay(manifest: impl AsRef<Path>, out: Option<PathBuf>) -> Result<RunManifest> {
    let original = RunManifest::read_json(manifest)?;
    for input in &original.inputs {
        let now = FileHash::of(&input.path)?;
        if now.sha256 != input.sha256 {
            return Err(Error::invalid(format!("{} changed since the recorded run", input.path.display())));
        }
    }
    let mut invocation = original.invocation;
    if out.is_some() {
        invocation.global.out = out;
    }
    super::run(&invocation)
}
