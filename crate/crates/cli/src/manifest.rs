//! Run manifests: every input and output with its SHA-256, the effective
//! settings and seed. No timestamps or host details are recorded, so a
//! manifest is a pure function of the run's inputs.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::SeedSource;
use crate::error::{CliError, CliResult};

pub const MANIFEST_NAME: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileRecord {
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Complete,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub status: RunStatus,
    /// Stage that failed, for partial manifests.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failed_stage: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub seed: u64,
    pub seed_source: String,
    pub settings: BTreeMap<String, String>,
    /// Input paths as given on the command line.
    pub inputs: Vec<FileRecord>,
    /// Output paths relative to the manifest's directory.
    pub outputs: Vec<FileRecord>,
    pub notes: Vec<String>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn record(path: String, bytes: &[u8]) -> FileRecord {
    FileRecord {
        path,
        bytes: bytes.len() as u64,
        sha256: sha256_hex(bytes),
    }
}

/// Single writer for one output directory; records every file it writes.
#[derive(Debug)]
pub struct RunWriter {
    dir: PathBuf,
    manifest: Manifest,
}

impl RunWriter {
    pub fn create(
        dir: &Path,
        command: &str,
        seed: u64,
        seed_source: SeedSource,
        settings: BTreeMap<String, String>,
    ) -> CliResult<Self> {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        Ok(RunWriter {
            dir: dir.to_path_buf(),
            manifest: Manifest {
                tool: "uq".into(),
                version: env!("CARGO_PKG_VERSION").into(),
                command: command.into(),
                status: RunStatus::Complete,
                failed_stage: None,
                error: None,
                seed,
                seed_source: seed_source.to_string(),
                settings,
                inputs: Vec::new(),
                outputs: Vec::new(),
                notes: Vec::new(),
            },
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Reads an input file and records its hash.
    pub fn read_input(&mut self, path: &Path) -> CliResult<Vec<u8>> {
        let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
        let rec = record(path.display().to_string(), &bytes);
        if !self.manifest.inputs.contains(&rec) {
            self.manifest.inputs.push(rec);
        }
        Ok(bytes)
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> CliResult<()> {
        if name == MANIFEST_NAME || self.manifest.outputs.iter().any(|r| r.path == name) {
            return Err(CliError::usage(format!("output `{name}` written twice")));
        }
        let path = self.dir.join(name);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
        }
        std::fs::write(&path, bytes).map_err(|e| CliError::io(&path, e))?;
        self.manifest.outputs.push(record(name.to_string(), bytes));
        Ok(())
    }

    pub fn note(&mut self, note: impl Into<String>) {
        self.manifest.notes.push(note.into());
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        self.manifest.settings.insert(key.to_string(), value.to_string());
    }

    pub fn manifest(&self) -> &Manifest {
        &self.manifest
    }

    /// Writes the manifest and returns it.
    pub fn finish(self) -> CliResult<Manifest> {
        self.persist()?;
        Ok(self.manifest)
    }

    /// Writes a partial manifest naming the failed stage, then hands the
    /// error back.
    pub fn fail(mut self, stage: &str, err: CliError) -> CliError {
        self.manifest.status = RunStatus::Failed;
        self.manifest.failed_stage = Some(stage.to_string());
        self.manifest.error = Some(err.to_string());
        let err = err.context(format!("stage `{stage}` failed"));
        match self.persist() {
            Ok(()) => err,
            Err(e) => e.context(err.to_string()),
        }
    }

    fn persist(&self) -> CliResult<()> {
        let path = self.dir.join(MANIFEST_NAME);
        let mut text = serde_json::to_string_pretty(&self.manifest).expect("manifest serializes");
        text.push('\n');
        std::fs::write(&path, text).map_err(|e| CliError::io(&path, e))
    }
}

pub fn read_manifest(path: &Path) -> CliResult<Manifest> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::Verification(format!("{}: not a run manifest: {e}", path.display())))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Check {
    Ok,
    Missing,
    Changed { sha256: String },
}

/// Re-hashes every recorded file. Outputs resolve against the manifest's
/// directory, inputs as recorded.
pub fn verify(manifest: &Manifest, dir: &Path) -> Vec<(String, Check)> {
    let check = |path: PathBuf, rec: &FileRecord| match std::fs::read(&path) {
        Err(_) => Check::Missing,
        Ok(bytes) => {
            let sha256 = sha256_hex(&bytes);
            if sha256 == rec.sha256 {
                Check::Ok
            } else {
                Check::Changed { sha256 }
            }
        }
    };
    let inputs = manifest
        .inputs
        .iter()
        .map(|r| (format!("input {}", r.path), check(PathBuf::from(&r.path), r)));
    let outputs = manifest
        .outputs
        .iter()
        .map(|r| (format!("output {}", r.path), check(dir.join(&r.path), r)));
    inputs.chain(outputs).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_digest() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn write_verify_tamper() {
        let dir = tempfile::tempdir().unwrap();
        let mut w = RunWriter::create(dir.path(), "test", 1, SeedSource::Flag, BTreeMap::new()).unwrap();
        w.write("a.txt", b"hello").unwrap();
        assert!(w.write("a.txt", b"again").is_err());
        let m = w.finish().unwrap();
        let back = read_manifest(&dir.path().join(MANIFEST_NAME)).unwrap();
        assert_eq!(back, m);
        assert!(verify(&m, dir.path()).iter().all(|(_, c)| *c == Check::Ok));
        std::fs::write(dir.path().join("a.txt"), b"hellO").unwrap();
        assert!(matches!(verify(&m, dir.path())[0].1, Check::Changed { .. }));
        std::fs::remove_file(dir.path().join("a.txt")).unwrap();
        assert_eq!(verify(&m, dir.path())[0].1, Check::Missing);
    }
}
