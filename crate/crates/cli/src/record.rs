//! Run-record manifest: config snapshot, artifact version, wall time, and a
//! SHA-256 manifest of every file the run produced. Re-running with the same
//! config and version must reproduce identical output hashes (the wall-time
//! line is informational and excluded from that contract).

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use sha2::{Digest, Sha256};

use crate::config::{snapshot, Config};
use crate::error::CliError;

pub struct RunRecord {
    subcommand: &'static str,
    started: Instant,
    files: Vec<PathBuf>,
}

impl RunRecord {
    pub fn start(subcommand: &'static str) -> Self {
        RunRecord {
            subcommand,
            started: Instant::now(),
            files: Vec::new(),
        }
    }

    pub fn add_file(&mut self, path: &Path) {
        self.files.push(path.to_path_buf());
    }

    /// Writes `run_record.txt` into `dir` and returns its path.
    pub fn write(self, dir: &Path, config: &Config) -> Result<PathBuf, CliError> {
        let path = dir.join("run_record.txt");
        let mut out = BufWriter::new(File::create(&path)?);
        writeln!(out, "artifact=qfilter {}", env!("CARGO_PKG_VERSION"))?;
        writeln!(out, "subcommand={}", self.subcommand)?;
        writeln!(out, "wall_time_s={:.3}", self.started.elapsed().as_secs_f64())?;
        for (key, value) in snapshot(config) {
            writeln!(out, "config.{key}={value}")?;
        }
        for file in &self.files {
            let digest = sha256_file(file)?;
            let name = file
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_else(|| file.display().to_string());
            let bytes = std::fs::metadata(file)?.len();
            writeln!(out, "file={name} sha256={digest} bytes={bytes}")?;
        }
        out.flush()?;
        Ok(path)
    }
}

pub fn sha256_file(path: &Path) -> Result<String, CliError> {
    let mut file = File::open(path)?;
    let mut hasher = Sha256::new();
    let mut buf = [0u8; 64 * 1024];
    loop {
        let n = file.read(&mut buf)?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hex::encode(hasher.finalize()))
}
