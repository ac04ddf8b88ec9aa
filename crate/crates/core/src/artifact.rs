//! Where run outputs go, and how they are fingerprinted.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::PathBuf;

use sha2::{Digest, Sha256};

pub fn digest(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub trait ArtifactSink {
    /// Stores `bytes` under `name` and returns where it went.
    fn write(&mut self, name: &str, bytes: &[u8]) -> io::Result<String>;
}

/// Writes `<dir>/<prefix>_<name>`.
#[derive(Debug, Clone)]
pub struct DirSink {
    pub dir: PathBuf,
    pub prefix: String,
}

impl DirSink {
    pub fn new(dir: impl Into<PathBuf>, prefix: impl Into<String>) -> Self {
        Self {
            dir: dir.into(),
            prefix: prefix.into(),
        }
    }

    pub fn path_for(&self, name: &str) -> PathBuf {
        self.dir.join(format!("{}_{}", self.prefix, name))
    }
}

impl ArtifactSink for DirSink {
    fn write(&mut self, name: &str, bytes: &[u8]) -> io::Result<String> {
        fs::create_dir_all(&self.dir)?;
        let path = self.path_for(name);
        fs::write(&path, bytes)?;
        Ok(path.display().to_string())
    }
}

#[derive(Debug, Clone, Default)]
pub struct MemorySink {
    pub files: BTreeMap<String, Vec<u8>>,
}

impl ArtifactSink for MemorySink {
    fn write(&mut self, name: &str, bytes: &[u8]) -> io::Result<String> {
        self.files.insert(name.to_string(), bytes.to_vec());
        Ok(name.to_string())
    }
}
