use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Serialize)]
pub struct Artifact {
    pub name: String,
    pub sha256: String,
    pub bytes: usize,
}

/// Writes artifacts into one directory, each through a temp file and a
/// rename, and remembers their digests for the manifest.
pub struct Sink {
    dir: PathBuf,
    written: Vec<Artifact>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

impl Sink {
    pub fn new(dir: &Path) -> std::io::Result<Self> {
        std::fs::create_dir_all(dir)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            written: Vec::new(),
        })
    }

    pub fn write(&mut self, name: &str, contents: &str) -> std::io::Result<()> {
        let mut tmp = tempfile::NamedTempFile::new_in(&self.dir)?;
        tmp.write_all(contents.as_bytes())?;
        tmp.as_file().sync_all()?;
        tmp.persist(self.dir.join(name)).map_err(|e| e.error)?;
        log::info!("wrote {}", self.dir.join(name).display());
        self.written.push(Artifact {
            name: name.to_string(),
            sha256: sha256_hex(contents.as_bytes()),
            bytes: contents.len(),
        });
        Ok(())
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> std::io::Result<()> {
        let mut s = serde_json::to_string_pretty(value).map_err(std::io::Error::other)?;
        s.push('\n');
        self.write(name, &s)
    }

    pub fn artifacts(&self) -> &[Artifact] {
        &self.written
    }
}

#[derive(Debug, Serialize)]
pub struct Versions {
    pub cli: &'static str,
    pub core: &'static str,
}

#[derive(Debug, Serialize)]
pub struct ClaimOutcome {
    pub paper_ref: String,
    pub status: String,
}

#[derive(Debug, Serialize)]
pub struct Manifest<'a> {
    pub command: &'a str,
    pub config_sha256: String,
    pub seed: u64,
    pub versions: Versions,
    pub status: &'a str,
    pub artifacts: Vec<Artifact>,
    pub claims: Vec<ClaimOutcome>,
}
