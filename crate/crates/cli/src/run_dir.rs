use std::fs::{self, OpenOptions};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};

use unlearnrec::config::ExperimentConfig;
use unlearnrec::pipeline::checkpoint::{atomic_write, sha256_hex};

pub const LOCK: &str = ".lock";
pub const MANIFEST: &str = "manifest.txt";
pub const CONFIG: &str = "config.txt";

/// Every stage output lives at a fixed name below the root.
pub struct RunDir {
    pub root: PathBuf,
}

impl RunDir {
    pub fn new(root: PathBuf) -> Self {
        Self { root }
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    pub fn checkpoints(&self) -> PathBuf {
        self.root.join("checkpoints")
    }

    /// Creates the directory skeleton and takes the writer lock.
    pub fn open(&self) -> Result<RunLock> {
        for sub in ["checkpoints", "logs", "data", "scores"] {
            fs::create_dir_all(self.root.join(sub)).with_context(|| format!("creating {}", self.root.join(sub).display()))?;
        }
        let path = self.root.join(LOCK);
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(_) => Ok(RunLock { path }),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => bail!(
                "{} is locked by another command; delete {} if no command is running",
                self.root.display(),
                path.display()
            ),
            Err(e) => Err(e).with_context(|| format!("creating {}", path.display())),
        }
    }

    pub fn write_text(&self, rel: &str, text: &str) -> Result<()> {
        atomic_write(&self.path(rel), text.as_bytes())?;
        Ok(())
    }

    /// Seed, dataset hash, the resolved config and a hash of every artifact.
    /// Deliberately free of timestamps so reruns reproduce it exactly.
    pub fn write_manifest(&self, cfg: &ExperimentConfig, dataset_hash: Option<&str>) -> Result<()> {
        let mut out = String::from("# unlearnrec run manifest\n");
        out.push_str(&format!("seed={}\n", cfg.seed));
        out.push_str(&format!("dataset_sha256={}\n", dataset_hash.unwrap_or("-")));
        out.push_str("\n[config]\n");
        out.push_str(&cfg.to_text());
        out.push_str("\n[artifacts]\n");
        let mut files = Vec::new();
        collect_files(&self.root, &self.root, &mut files)?;
        files.sort();
        for rel in files {
            if rel == MANIFEST || rel == LOCK || rel.rsplit('/').next().is_some_and(|n| n.starts_with('.')) {
                continue;
            }
            let bytes = fs::read(self.root.join(&rel))?;
            let shape = if rel.ends_with(".mat") {
                header_shape(&bytes).unwrap_or_else(|| "?".into())
            } else {
                format!("{} bytes", bytes.len())
            };
            out.push_str(&format!("{rel}\t{shape}\t{}\n", sha256_hex(&bytes)));
        }
        self.write_text(MANIFEST, &out)
    }
}

fn collect_files(root: &Path, dir: &Path, out: &mut Vec<String>) -> Result<()> {
    for entry in fs::read_dir(dir).with_context(|| format!("listing {}", dir.display()))? {
        let path = entry?.path();
        if path.is_dir() {
            collect_files(root, &path, out)?;
        } else {
            let rel = path.strip_prefix(root).expect("below root");
            out.push(rel.components().map(|c| c.as_os_str().to_string_lossy()).collect::<Vec<_>>().join("/"));
        }
    }
    Ok(())
}

fn header_shape(bytes: &[u8]) -> Option<String> {
    let nl = bytes.iter().position(|&b| b == b'\n')?;
    let header = std::str::from_utf8(&bytes[..nl]).ok()?;
    let mut parts = header.split(' ').skip(1);
    Some(format!("{}x{}", parts.next()?, parts.next()?))
}

/// Removes the lock file when the command ends, successfully or not.
pub struct RunLock {
    path: PathBuf,
}

impl Drop for RunLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}
