//! Output directory layout and the hash manifest.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::{EngineError, Result, Stage};

pub const MANIFEST: &str = "manifest.json";

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileEntry {
    pub sha256: String,
    pub bytes: u64,
}

/// Stage outcomes and file hashes. Holds nothing time-dependent, so two
/// identical runs write identical manifests.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Manifest {
    pub stages: BTreeMap<String, String>,
    /// Keyed by path relative to the output directory.
    pub files: BTreeMap<String, FileEntry>,
}

impl Manifest {
    pub fn load(out: &Path) -> Result<Self> {
        let path = out.join(MANIFEST);
        let text = std::fs::read_to_string(&path).map_err(|err| EngineError::Io { path, err })?;
        serde_json::from_str(&text).map_err(|e| EngineError::Invalid(format!("manifest: {e}")))
    }
}

/// Writes artifacts as `<out>/<stage>/<name>` and keeps the manifest
/// current after every file, so a failed run leaves a usable record.
#[derive(Debug)]
pub struct ArtifactWriter {
    out: PathBuf,
    manifest: Manifest,
}

impl ArtifactWriter {
    pub fn create(out: &Path) -> Result<Self> {
        std::fs::create_dir_all(out).map_err(|err| EngineError::Io { path: out.to_path_buf(), err })?;
        let w = Self { out: out.to_path_buf(), manifest: Manifest::default() };
        w.flush()?;
        Ok(w)
    }

    pub fn out(&self) -> &Path {
        &self.out
    }

    pub fn manifest(&self) -> &Manifest {
        &self.manifest
    }

    pub fn write(&mut self, stage: Stage, name: &str, bytes: &[u8]) -> Result<PathBuf> {
        let rel = format!("{}/{name}", stage.dir());
        let path = self.out.join(&rel);
        let io = |path: &Path| {
            let path = path.to_path_buf();
            move |err| EngineError::Io { path, err }
        };
        std::fs::create_dir_all(path.parent().expect("has a stage dir")).map_err(io(&path))?;
        std::fs::write(&path, bytes).map_err(io(&path))?;
        self.manifest.files.insert(rel, FileEntry { sha256: sha256_hex(bytes), bytes: bytes.len() as u64 });
        self.flush()?;
        Ok(path)
    }

    pub fn write_json<T: Serialize>(&mut self, stage: Stage, name: &str, value: &T) -> Result<PathBuf> {
        let mut text = serde_json::to_string_pretty(value).expect("artifacts serialize");
        text.push('\n');
        self.write(stage, name, text.as_bytes())
    }

    pub fn mark(&mut self, stage: Stage, status: impl Into<String>) -> Result<()> {
        self.manifest.stages.insert(stage.dir().to_string(), status.into());
        self.flush()
    }

    fn flush(&self) -> Result<()> {
        let path = self.out.join(MANIFEST);
        let mut text = serde_json::to_string_pretty(&self.manifest).expect("manifest serializes");
        text.push('\n');
        std::fs::write(&path, text).map_err(|err| EngineError::Io { path, err })
    }
}
