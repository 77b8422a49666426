use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use fpt_core::ingest::read_dataset;
use fpt_core::{Dataset, Error, IngestReport, Model, ModelSpec, Result};
use sha2::{Digest, Sha256};

/// One loaded model version. Requests hold an `Arc` to it for their whole
/// lifetime, so a reload never mixes versions within a request.
#[derive(Debug)]
pub struct Session {
    pub model: Model,
    pub dataset: Dataset,
    pub report: IngestReport,
    /// SHA-256 over the spec and data bytes, hex encoded.
    pub fingerprint: String,
    /// Seconds since the Unix epoch.
    pub loaded_at: u64,
}

/// Where a session was loaded from, kept for reloads.
#[derive(Debug, Clone)]
pub struct Sources {
    pub spec: PathBuf,
    pub data: PathBuf,
}

impl Session {
    pub fn load(sources: &Sources) -> Result<Self> {
        let spec = read(&sources.spec)?;
        let data = read(&sources.data)?;
        let spec = String::from_utf8(spec).map_err(|e| Error::Io {
            path: sources.spec.clone(),
            source: std::io::Error::new(std::io::ErrorKind::InvalidData, e),
        })?;
        Session::from_sources(&spec, &data)
    }

    pub fn from_sources(spec_text: &str, data: &[u8]) -> Result<Self> {
        let spec = ModelSpec::from_json(spec_text)?;
        let (dataset, report) = read_dataset(data, &spec)?;
        let model = Model::fit(spec, &dataset.records)?;
        Ok(Session {
            model,
            dataset,
            report,
            fingerprint: fingerprint(spec_text.as_bytes(), data),
            loaded_at: now(),
        })
    }
}

fn read(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn fingerprint(spec: &[u8], data: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update((spec.len() as u64).to_le_bytes());
    hasher.update(spec);
    hasher.update(data);
    format!("{:x}", hasher.finalize())
}

pub(crate) fn now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_secs())
}
