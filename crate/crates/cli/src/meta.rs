//! `run_meta.json`: the audit record written next to every command's output.

use std::collections::BTreeMap;
use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::CliError;

pub const RUN_META_FILE: &str = "run_meta.json";

#[derive(Debug, Clone, Serialize)]
pub struct ErrorInfo {
    pub code: String,
    pub message: String,
}

#[derive(Debug, Serialize)]
pub struct RunMeta {
    pub command: String,
    pub argv: Vec<String>,
    pub code_version: String,
    pub seed: u64,
    pub workers: usize,
    pub deterministic: bool,
    /// Fully resolved configuration of the command.
    pub config: serde_json::Value,
    /// Input path -> SHA-256 (file contents, or a dataset's `fonts.jsonl`).
    pub inputs: BTreeMap<String, String>,
    pub status: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<ErrorInfo>,
    /// Omitted in deterministic mode so identical runs write identical files.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub started_unix: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub elapsed_seconds: Option<f64>,
    #[serde(skip)]
    pub out_dir: Option<PathBuf>,
    #[serde(skip)]
    started: Option<Instant>,
}

impl RunMeta {
    pub fn new(argv: Vec<String>, seed: u64, workers: usize, deterministic: bool) -> Self {
        RunMeta {
            command: String::new(),
            argv,
            code_version: env!("CARGO_PKG_VERSION").to_string(),
            seed,
            workers,
            deterministic,
            config: serde_json::Value::Null,
            inputs: BTreeMap::new(),
            status: "running".into(),
            error: None,
            started_unix: (!deterministic)
                .then(|| SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())),
            elapsed_seconds: None,
            out_dir: None,
            started: Some(Instant::now()),
        }
    }

    /// Marks the output directory; once set, the record is written on exit.
    pub fn set_out_dir(&mut self, dir: &Path) {
        self.out_dir = Some(dir.to_path_buf());
    }

    pub fn set_config(&mut self, config: &impl Serialize) {
        self.config = serde_json::to_value(config).unwrap_or(serde_json::Value::Null);
    }

    /// Records the digest of an input file or dataset directory.
    pub fn add_input(&mut self, path: &Path) {
        let digest = digest_input(path).unwrap_or_else(|| "unreadable".into());
        self.inputs.insert(path.display().to_string(), digest);
    }

    pub fn finish(&mut self, result: &Result<(), CliError>) {
        match result {
            Ok(()) => self.status = "ok".into(),
            Err(e) => {
                self.status = "error".into();
                self.error = Some(ErrorInfo { code: e.code().into(), message: e.to_string() });
            }
        }
        if !self.deterministic {
            self.elapsed_seconds = self.started.map(|s| s.elapsed().as_secs_f64());
        }
    }

    pub fn write(&self) -> std::io::Result<()> {
        let Some(dir) = &self.out_dir else {
            return Ok(());
        };
        fs::create_dir_all(dir)?;
        let text = serde_json::to_string_pretty(self).map_err(std::io::Error::other)?;
        fs::write(dir.join(RUN_META_FILE), text + "\n")
    }
}

/// SHA-256 of a file, or of `fonts.jsonl` for a dataset directory, or of the
/// sorted (name, digest) listing for any other directory.
pub fn digest_input(path: &Path) -> Option<String> {
    if path.is_file() {
        return sha256_file(path);
    }
    if !path.is_dir() {
        return None;
    }
    let manifest = path.join(fontpair::raster::FONTS_FILE);
    if manifest.is_file() {
        return sha256_file(&manifest);
    }
    let files = fontpair::raster::find_font_files(path).ok()?;
    let mut hasher = Sha256::new();
    for f in files {
        let rel = f.strip_prefix(path).unwrap_or(&f);
        hasher.update(rel.to_string_lossy().as_bytes());
        hasher.update(sha256_file(&f)?.as_bytes());
    }
    Some(hex::encode(hasher.finalize()))
}

fn sha256_file(path: &Path) -> Option<String> {
    let mut file = fs::File::open(path).ok()?;
    let mut hasher = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = file.read(&mut buf).ok()?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Some(hex::encode(hasher.finalize()))
}
