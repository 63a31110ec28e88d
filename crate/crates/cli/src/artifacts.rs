//! Output directory handling and the run manifest.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::RunError;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseTiming {
    pub name: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactEntry {
    /// Path relative to the run directory, `/`-separated.
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config: serde_json::Value,
    /// SHA-256 of the config file bytes.
    pub config_sha256: String,
    pub seed: Option<u64>,
    pub status: RunStatus,
    pub failed_phase: Option<String>,
    pub error: Option<String>,
    pub phases: Vec<PhaseTiming>,
    /// Every file in the run directory except this manifest.
    pub artifacts: Vec<ArtifactEntry>,
    /// SHA-256 over the sorted `path sha256` lines of the artifacts. Timing
    /// is not part of it, so equal inputs give equal digests whenever the
    /// artifacts themselves carry no timing.
    pub content_digest: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RunStatus {
    Complete,
    Failed,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Collects the files of one run inside `<out>.partial` and moves them to
/// `<out>` once everything succeeded.
pub struct RunDir {
    target: PathBuf,
    partial: PathBuf,
    files: Vec<PathBuf>,
    phases: Vec<PhaseTiming>,
}

impl RunDir {
    /// Prepares `<target>.partial`. An existing `target` is replaced only if
    /// it holds a manifest from an earlier run.
    pub fn create(target: &Path) -> Result<Self, RunError> {
        if target.exists() && !target.join(MANIFEST_FILE).is_file() {
            return Err(RunError::OutputExists(target.to_path_buf()));
        }
        let mut name = target.file_name().unwrap_or_default().to_os_string();
        name.push(".partial");
        let partial = target.with_file_name(name);
        if partial.exists() {
            fs::remove_dir_all(&partial).map_err(|e| RunError::io(&partial, e))?;
        }
        fs::create_dir_all(&partial).map_err(|e| RunError::io(&partial, e))?;
        Ok(Self {
            target: target.to_path_buf(),
            partial,
            files: Vec::new(),
            phases: Vec::new(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.partial
    }

    pub fn target(&self) -> &Path {
        &self.target
    }

    /// Runs `f`, recording its wall-clock time under `name`.
    pub fn phase<R>(&mut self, name: &str, f: impl FnOnce(&mut Self) -> Result<R, RunError>) -> Result<R, RunError> {
        let start = Instant::now();
        let out = f(self).map_err(|e| e.in_phase(name));
        self.phases.push(PhaseTiming {
            name: name.into(),
            seconds: start.elapsed().as_secs_f64(),
        });
        out
    }

    /// Records files written by someone else (paths inside the run dir).
    pub fn record(&mut self, paths: impl IntoIterator<Item = PathBuf>) {
        self.files.extend(paths);
    }

    pub fn write_with(
        &mut self,
        rel: &str,
        f: impl FnOnce(&mut BufWriter<fs::File>) -> std::io::Result<()>,
    ) -> Result<(), RunError> {
        let path = self.partial.join(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| RunError::io(parent, e))?;
        }
        let file = fs::File::create(&path).map_err(|e| RunError::io(&path, e))?;
        let mut w = BufWriter::new(file);
        f(&mut w).and_then(|_| w.flush()).map_err(|e| RunError::io(&path, e))?;
        self.files.push(path);
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, rel: &str, value: &T) -> Result<(), RunError> {
        self.write_with(rel, |w| {
            serde_json::to_writer_pretty(&mut *w, value).map_err(std::io::Error::other)?;
            writeln!(w)
        })
    }

    fn entries(&self) -> Result<Vec<ArtifactEntry>, RunError> {
        let mut entries = Vec::with_capacity(self.files.len());
        for path in &self.files {
            let bytes = fs::read(path).map_err(|e| RunError::io(path, e))?;
            let rel = path.strip_prefix(&self.partial).unwrap_or(path);
            let rel: Vec<String> = rel.components().map(|c| c.as_os_str().to_string_lossy().into_owned()).collect();
            entries.push(ArtifactEntry {
                path: rel.join("/"),
                bytes: bytes.len() as u64,
                sha256: sha256_hex(&bytes),
            });
        }
        entries.sort_by(|a, b| a.path.cmp(&b.path));
        entries.dedup_by(|a, b| a.path == b.path);
        Ok(entries)
    }

    /// Writes the manifest. On success the directory is renamed to its final
    /// name; on failure it keeps the `.partial` suffix.
    pub fn finish(
        self,
        command: &str,
        config: serde_json::Value,
        config_sha256: String,
        seed: Option<u64>,
        failure: Option<&RunError>,
    ) -> Result<(PathBuf, RunManifest), RunError> {
        let artifacts = self.entries()?;
        let listing: String = artifacts.iter().map(|a| format!("{} {}\n", a.path, a.sha256)).collect();
        let manifest = RunManifest {
            command: command.into(),
            config,
            config_sha256,
            seed,
            status: if failure.is_some() { RunStatus::Failed } else { RunStatus::Complete },
            failed_phase: failure.and_then(|e| e.phase().map(str::to_owned)),
            error: failure.map(|e| e.to_string()),
            phases: self.phases,
            content_digest: sha256_hex(listing.as_bytes()),
            artifacts,
        };
        let path = self.partial.join(MANIFEST_FILE);
        let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n";
        fs::write(&path, text).map_err(|e| RunError::io(&path, e))?;
        if failure.is_some() {
            return Ok((self.partial, manifest));
        }
        if self.target.exists() {
            fs::remove_dir_all(&self.target).map_err(|e| RunError::io(&self.target, e))?;
        }
        fs::rename(&self.partial, &self.target).map_err(|e| RunError::io(&self.target, e))?;
        Ok((self.target, manifest))
    }
}
