use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};
use surfrbf::geometry::NodeSet;

use crate::CliError;

/// Tracks every file a command writes, for the run manifest.
#[derive(Debug, Default)]
pub struct Sink {
    pub files: Vec<PathBuf>,
}

impl Sink {
    pub fn create(&mut self, path: &Path) -> Result<BufWriter<File>, CliError> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)?;
        }
        let f = File::create(path)?;
        self.files.push(path.to_path_buf());
        Ok(BufWriter::new(f))
    }

    pub fn record(&mut self, path: &Path) {
        self.files.push(path.to_path_buf());
    }

    pub fn json<T: Serialize>(&mut self, path: &Path, value: &T) -> Result<(), CliError> {
        let mut w = self.create(path)?;
        serde_json::to_writer_pretty(&mut w, value).map_err(|e| CliError::Io(e.to_string()))?;
        writeln!(w)?;
        w.flush()?;
        Ok(())
    }

    /// ASCII point cloud with per-vertex `u` and `v`.
    pub fn ply(&mut self, path: &Path, ns: &NodeSet, u: &[f64], v: &[f64]) -> Result<(), CliError> {
        let mut w = self.create(path)?;
        writeln!(w, "ply\nformat ascii 1.0\nelement vertex {}", ns.len())?;
        for p in ["x", "y", "z", "u", "v"] {
            writeln!(w, "property double {p}")?;
        }
        writeln!(w, "end_header")?;
        for ((x, a), b) in ns.points.iter().zip(u).zip(v) {
            writeln!(w, "{:.17e} {:.17e} {:.17e} {:.17e} {:.17e}", x[0], x[1], x[2], a, b)?;
        }
        w.flush()?;
        Ok(())
    }
}

pub fn with_ext(prefix: &Path, ext: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(".");
    s.push(ext);
    PathBuf::from(s)
}

pub fn sha256_file(path: &Path) -> Result<String, CliError> {
    let bytes = std::fs::read(path)?;
    Ok(Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect())
}

#[derive(Debug, Serialize)]
pub struct Manifest<'a, C: Serialize, R: Serialize> {
    pub command: &'a str,
    pub version: &'a str,
    pub threads: usize,
    pub config: &'a C,
    pub result: &'a R,
    pub wall_seconds: f64,
    pub files: Vec<String>,
}
