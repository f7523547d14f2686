//! Run artifacts: CSV files and the run manifest.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;
use crate::CliResult;

/// Shortest round-trip decimal form; `nan`, `inf` and `-inf` otherwise.
pub fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{v}")
    }
}

#[derive(Debug, Serialize)]
pub struct FileEntry {
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub version: String,
    pub seed: u64,
    pub started_unix: f64,
    pub finished_unix: f64,
    pub config: std::collections::BTreeMap<String, String>,
    pub files: Vec<FileEntry>,
}

/// Output directory of one run; tracks every file written through it.
pub struct RunDir {
    root: PathBuf,
    files: Vec<PathBuf>,
    started: f64,
}

fn now() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0.0, |d| d.as_secs_f64())
}

pub fn sha256_file(path: &Path) -> std::io::Result<(u64, String)> {
    let bytes = fs::read(path)?;
    let digest = Sha256::digest(&bytes);
    let hex = digest.iter().map(|b| format!("{b:02x}")).collect();
    Ok((bytes.len() as u64, hex))
}

impl RunDir {
    pub fn create(root: impl Into<PathBuf>) -> CliResult<RunDir> {
        let root = root.into();
        fs::create_dir_all(&root)?;
        Ok(RunDir {
            root,
            files: Vec::new(),
            started: now(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    /// Records a file written by other means (relative to the root).
    pub fn track(&mut self, name: impl Into<PathBuf>) {
        self.files.push(name.into());
    }

    pub fn write_csv(&mut self, name: &str, header: &[&str], rows: &[Vec<String>]) -> CliResult<()> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_path(self.path(name))?;
        w.write_record(header)?;
        for r in rows {
            w.write_record(r)?;
        }
        w.flush()?;
        self.track(name);
        Ok(())
    }

    /// Writes `manifest.json` through a temporary file and a rename.
    pub fn finish(self, subcommand: &str, cfg: &ExperimentConfig, seed: u64) -> CliResult<PathBuf> {
        let mut files = Vec::with_capacity(self.files.len());
        for rel in &self.files {
            let (bytes, sha256) = sha256_file(&self.root.join(rel))?;
            files.push(FileEntry {
                path: rel.to_string_lossy().replace('\\', "/"),
                bytes,
                sha256,
            });
        }
        let manifest = RunManifest {
            subcommand: subcommand.to_string(),
            version: format!("infomax {}", env!("CARGO_PKG_VERSION")),
            seed,
            started_unix: self.started,
            finished_unix: now(),
            config: cfg.snapshot(),
            files,
        };
        let target = self.root.join("manifest.json");
        let tmp = self.root.join(".manifest.json.tmp");
        {
            let mut f = fs::File::create(&tmp)?;
            serde_json::to_writer_pretty(&mut f, &manifest)?;
            f.write_all(b"\n")?;
            f.sync_all()?;
        }
        fs::rename(&tmp, &target)?;
        Ok(target)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip() {
        for v in [0.1, -2.5e-10, 1.0 / 3.0, 0.0] {
            assert_eq!(fmt_f64(v).parse::<f64>().unwrap(), v);
        }
        assert_eq!(fmt_f64(f64::NAN), "nan");
        assert_eq!(fmt_f64(f64::NEG_INFINITY), "-inf");
    }

    #[test]
    fn manifest_lists_every_file_with_its_checksum() {
        let dir = tempfile::tempdir().unwrap();
        let mut run = RunDir::create(dir.path()).unwrap();
        run.write_csv("a.csv", &["x", "y"], &[vec!["1".into(), "2".into()]]).unwrap();
        assert_eq!(fs::read_to_string(dir.path().join("a.csv")).unwrap(), "x,y\n1,2\n");
        let path = run.finish("test", &ExperimentConfig::default(), 0).unwrap();
        let m: serde_json::Value = serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap();
        let entry = &m["files"][0];
        assert_eq!(entry["path"], "a.csv");
        assert_eq!(entry["sha256"], "81bf9fa83c6f7f151bd491a98cd7d933de3965289e3ebd77c6c425f7eaa16392");
        assert_eq!(entry["bytes"], 8);
        assert!(!dir.path().join(".manifest.json.tmp").exists());
    }
}
