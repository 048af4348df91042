//! The artifact manifest and the output-directory lock.

use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const MANIFEST_FORMAT: &str = "neurodenote-manifest";
pub const LOCK_FILE: &str = ".neurodenote.lock";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Entry {
    /// Relative to the manifest's directory, `/`-separated.
    pub path: String,
    pub kind: String,
    pub stage: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub version: u32,
    pub config_hash: String,
    pub seeds: serde_json::Value,
    pub entries: Vec<Entry>,
    /// Set when a stage failed; entries then cover the completed stages.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failed_stage: Option<String>,
}

impl Manifest {
    pub fn new(config_hash: String, seeds: serde_json::Value) -> Self {
        Manifest {
            format: MANIFEST_FORMAT.into(),
            version: 1,
            config_hash,
            seeds,
            entries: Vec::new(),
            failed_stage: None,
        }
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let m: Manifest = serde_json::from_str(&text).map_err(|e| CliError::io(path, e))?;
        if m.format != MANIFEST_FORMAT {
            return Err(CliError::Data(format!("{}: not a manifest", path.display())));
        }
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> CliResult<()> {
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        fs::write(path, text + "\n").map_err(|e| CliError::io(path, e))
    }

    /// Hashes `root/rel` and records it, replacing any entry for that path.
    pub fn record(&mut self, root: &Path, rel: &str, kind: &str, stage: &str) -> CliResult<()> {
        let full = root.join(rel);
        let bytes = fs::read(&full).map_err(|e| CliError::io(&full, e))?;
        let entry = Entry {
            path: rel.to_string(),
            kind: kind.to_string(),
            stage: stage.to_string(),
            sha256: sha256_hex(&bytes),
            bytes: bytes.len() as u64,
        };
        match self.entries.binary_search_by(|e| e.path.as_str().cmp(rel)) {
            Ok(i) => self.entries[i] = entry,
            Err(i) => self.entries.insert(i, entry),
        }
        Ok(())
    }

    pub fn find(&self, rel: &str) -> Option<&Entry> {
        self.entries.iter().find(|e| e.path == rel)
    }

    pub fn of_kind<'a>(&'a self, kind: &'a str) -> impl Iterator<Item = &'a Entry> + 'a {
        self.entries.iter().filter(move |e| e.kind == kind)
    }

    /// Checks every entry against the files under `root`.
    pub fn verify(&self, root: &Path) -> Vec<Integrity> {
        self.entries
            .iter()
            .map(|e| match fs::read(root.join(&e.path)) {
                Err(_) => Integrity::Missing(e.path.clone()),
                Ok(b) if sha256_hex(&b) != e.sha256 => Integrity::HashMismatch(e.path.clone()),
                Ok(_) => Integrity::Ok,
            })
            .filter(|i| *i != Integrity::Ok)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Integrity {
    Ok,
    Missing(String),
    HashMismatch(String),
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Exclusive hold on an output directory, released on drop.
#[derive(Debug)]
pub struct DirLock {
    path: PathBuf,
}

impl DirLock {
    pub fn acquire(dir: &Path) -> CliResult<Self> {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        let path = dir.join(LOCK_FILE);
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                let _ = writeln!(f, "{}", std::process::id());
                Ok(DirLock { path })
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(CliError::Usage(format!(
                "{} is locked by another run; remove {} if that run is gone",
                dir.display(),
                path.display()
            ))),
            Err(e) => Err(CliError::io(&path, e)),
        }
    }
}

impl Drop for DirLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}
