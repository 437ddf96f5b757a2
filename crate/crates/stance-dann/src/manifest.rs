//! Run manifests and dataset fingerprints.

use std::fs::File;
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::ingest::open;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fingerprint {
    pub path: String,
    pub sha256: String,
}

pub fn fingerprint(path: &Path) -> Result<Fingerprint> {
    let mut hasher = Sha256::new();
    io::copy(&mut open(path)?, &mut hasher).map_err(|e| Error::io(path, e))?;
    Ok(Fingerprint {
        path: path.display().to_string(),
        sha256: hex::encode(hasher.finalize()),
    })
}

/// Output files, relative to the output directory.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Artifacts {
    pub checkpoint: String,
    pub histories: Vec<String>,
    pub plot: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunManifest {
    /// Every config key with its resolved value, in `key = value` form.
    pub config: Vec<String>,
    pub seed: u64,
    pub runs: usize,
    pub datasets: Vec<Fingerprint>,
    pub embeddings: Option<Fingerprint>,
    pub artifacts: Artifacts,
    /// Index of the selected run; absent until training finishes.
    pub best_run: Option<usize>,
}

impl RunManifest {
    pub fn write(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        serde_json::to_writer_pretty(file, self).map_err(|e| Error::Invalid(e.to_string()))
    }

    pub fn read(path: &Path) -> Result<Self> {
        serde_json::from_reader(io::BufReader::new(open(path)?))
            .map_err(|e| Error::parse(path, e.line() as u64, e))
    }
}
