use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use tempfile::NamedTempFile;
use time::format_description::well_known::Rfc3339;
use time::OffsetDateTime;

use crate::CliError;

/// Output directory override for relative `--out` paths.
pub const OUT_DIR_ENV: &str = "TIMEBIN_OUT_DIR";

pub fn resolve_out(path: &Path) -> PathBuf {
    match std::env::var_os(OUT_DIR_ENV) {
        Some(dir) if path.is_relative() => Path::new(&dir).join(path),
        _ => path.to_path_buf(),
    }
}

/// Files staged in their destination directories and published together.
#[derive(Default)]
pub struct Staged {
    files: Vec<(NamedTempFile, PathBuf)>,
}

impl Staged {
    pub fn add(&mut self, path: &Path, contents: &str) -> Result<(), CliError> {
        let io = |e: std::io::Error| CliError::Config(format!("cannot write {}: {e}", path.display()));
        let dir = match path.parent() {
            Some(p) if !p.as_os_str().is_empty() => p,
            _ => Path::new("."),
        };
        let mut tmp = NamedTempFile::new_in(dir).map_err(io)?;
        tmp.write_all(contents.as_bytes()).map_err(io)?;
        tmp.as_file().sync_all().map_err(io)?;
        self.files.push((tmp, path.to_path_buf()));
        Ok(())
    }

    /// Renames every staged file into place. Nothing is published unless
    /// all files were staged.
    pub fn commit(self) -> Result<(), CliError> {
        for (tmp, path) in self.files {
            tmp.persist(&path)
                .map_err(|e| CliError::Config(format!("cannot write {}: {}", path.display(), e.error)))?;
        }
        Ok(())
    }
}

pub fn now() -> String {
    OffsetDateTime::now_utc().format(&Rfc3339).unwrap_or_default()
}

#[derive(Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub config_digest: Option<String>,
    pub seed: Option<u64>,
    pub cycles: Option<u64>,
    pub started_at: String,
    pub finished_at: String,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub config: Option<serde_json::Value>,
}

impl RunManifest {
    pub fn new(command: &str, started_at: String) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command: command.to_string(),
            config_digest: None,
            seed: None,
            cycles: None,
            started_at,
            finished_at: String::new(),
            inputs: Vec::new(),
            outputs: Vec::new(),
            config: None,
        }
    }

    pub fn finish(&mut self) -> String {
        self.finished_at = now();
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        s
    }
}

/// `run.csv` -> `run.manifest.json`.
pub fn manifest_path(out: &Path) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    out.with_file_name(format!("{stem}.manifest.json"))
}

pub fn file_name(path: &Path) -> String {
    path.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}
