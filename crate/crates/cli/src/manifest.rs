use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::Seeds;
use crate::error::{CliError, CliResult};

pub fn sha256_file(path: &Path) -> CliResult<String> {
    let mut f = File::open(path)?;
    let mut h = Sha256::new();
    let mut buf = [0u8; 1 << 16];
    loop {
        let n = f.read(&mut buf)?;
        if n == 0 {
            break;
        }
        h.update(&buf[..n]);
    }
    Ok(hex::encode(h.finalize()))
}

/// Writes `bytes` through a temporary file so readers never see a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> CliResult<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let tmp = path.with_extension(match path.extension() {
        Some(e) => format!("{}.tmp", e.to_string_lossy()),
        None => "tmp".to_string(),
    });
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Run record: what was asked for and the hash of everything written.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub stage: Option<String>,
    pub config_hash: String,
    pub seeds: Seeds,
    pub versions: BTreeMap<String, String>,
    /// Output path relative to the output directory, mapped to its sha256.
    pub outputs: BTreeMap<String, String>,
}

impl Manifest {
    pub fn new(command: &str, stage: Option<&str>, config_hash: &str, seeds: &Seeds) -> Self {
        let mut versions = BTreeMap::new();
        versions.insert("gpr-cli".to_string(), env!("CARGO_PKG_VERSION").to_string());
        Manifest {
            command: command.to_string(),
            stage: stage.map(str::to_string),
            config_hash: config_hash.to_string(),
            seeds: seeds.clone(),
            versions,
            outputs: BTreeMap::new(),
        }
    }

    pub fn record(&mut self, out: &Path, files: &[PathBuf]) -> CliResult<()> {
        for f in files {
            let rel = f.strip_prefix(out).unwrap_or(f).to_string_lossy().replace('\\', "/");
            self.outputs.insert(rel, sha256_file(f)?);
        }
        Ok(())
    }

    /// Writes `manifests/<command>[-<stage>].json` and returns its path.
    pub fn write(&self, out: &Path) -> CliResult<PathBuf> {
        let name = match &self.stage {
            Some(s) => format!("{}-{s}.json", self.command),
            None => format!("{}.json", self.command),
        };
        let path = out.join("manifests").join(name);
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        write_atomic(&path, text.as_bytes())?;
        Ok(path)
    }
}

/// Exclusive hold on an output directory, released on drop.
#[derive(Debug)]
pub struct DirLock {
    path: PathBuf,
}

impl DirLock {
    pub fn acquire(out: &Path) -> CliResult<Self> {
        fs::create_dir_all(out)?;
        let path = out.join(".gpr.lock");
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                writeln!(f, "{}", std::process::id())?;
                Ok(DirLock { path })
            }
            Err(e) if e.kind() == io::ErrorKind::AlreadyExists => Err(CliError::config(format!(
                "output directory {} is locked by another run (remove {} if stale)",
                out.display(),
                path.display()
            ))),
            Err(e) => Err(e.into()),
        }
    }
}

impl Drop for DirLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

/// Completion marker of one pipeline stage.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageMarker {
    pub stage: String,
    pub config_hash: String,
    /// Checkpoint file name mapped to its sha256.
    pub checkpoint: BTreeMap<String, String>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum MarkerStatus {
    Missing,
    /// Done under this config and the checkpoint still matches.
    Done,
}

pub fn marker_path(out: &Path, stage: &str) -> PathBuf {
    out.join("stages").join(format!("{stage}.done"))
}

pub fn write_marker(out: &Path, marker: &StageMarker) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(marker)?;
    text.push('\n');
    write_atomic(&marker_path(out, &marker.stage), text.as_bytes())
}

/// A marker left by a different config, or a checkpoint that no longer
/// matches its marker, is a config error.
pub fn check_marker(out: &Path, stage: &str, config_hash: &str, ckpt_dir: &Path) -> CliResult<MarkerStatus> {
    let path = marker_path(out, stage);
    let text = match fs::read_to_string(&path) {
        Ok(t) => t,
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(MarkerStatus::Missing),
        Err(e) => return Err(e.into()),
    };
    let marker: StageMarker =
        serde_json::from_str(&text).map_err(|e| CliError::Data(format!("marker {}: {e}", path.display())))?;
    if marker.config_hash != config_hash {
        return Err(CliError::config(format!(
            "stage {stage} was completed under config {} but this run uses {config_hash}; use a fresh output directory",
            marker.config_hash
        )));
    }
    for (name, sha) in &marker.checkpoint {
        let actual = sha256_file(&ckpt_dir.join(name)).map_err(|_| {
            CliError::config(format!("stage {stage} is marked done but checkpoint {name} is missing"))
        })?;
        if &actual != sha {
            return Err(CliError::config(format!(
                "checkpoint {name} of stage {stage} does not match its completion marker"
            )));
        }
    }
    Ok(MarkerStatus::Done)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lock_is_exclusive_and_released() {
        let dir = tempfile::tempdir().unwrap();
        let a = DirLock::acquire(dir.path()).unwrap();
        let err = DirLock::acquire(dir.path()).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        drop(a);
        DirLock::acquire(dir.path()).unwrap();
    }

    #[test]
    fn markers_detect_changes() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path();
        let ck = out.join("checkpoints");
        assert_eq!(check_marker(out, "mtp", "h", &ck).unwrap(), MarkerStatus::Missing);
        write_atomic(&ck.join("mtp.gprp"), b"abc").unwrap();
        let mut checkpoint = BTreeMap::new();
        checkpoint.insert("mtp.gprp".to_string(), sha256_file(&ck.join("mtp.gprp")).unwrap());
        write_marker(
            out,
            &StageMarker {
                stage: "mtp".into(),
                config_hash: "h".into(),
                checkpoint,
            },
        )
        .unwrap();
        assert_eq!(check_marker(out, "mtp", "h", &ck).unwrap(), MarkerStatus::Done);
        assert_eq!(check_marker(out, "mtp", "other", &ck).unwrap_err().exit_code(), 2);
        write_atomic(&ck.join("mtp.gprp"), b"abd").unwrap();
        assert_eq!(check_marker(out, "mtp", "h", &ck).unwrap_err().exit_code(), 2);
    }

    #[test]
    fn sha_of_known_bytes() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x");
        fs::write(&p, b"abc").unwrap();
        assert_eq!(
            sha256_file(&p).unwrap(),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
