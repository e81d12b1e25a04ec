use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::Context;
use chrono::{SecondsFormat, Utc};
use serde::Serialize;

/// Collects every file a run writes, plus warnings, for the manifest.
#[derive(Debug)]
pub struct OutputDir {
    root: PathBuf,
    outputs: Vec<String>,
    pub warnings: Vec<String>,
}

impl OutputDir {
    pub fn create(root: &Path) -> anyhow::Result<Self> {
        fs::create_dir_all(root).with_context(|| format!("creating {}", root.display()))?;
        Ok(Self { root: root.to_path_buf(), outputs: Vec::new(), warnings: Vec::new() })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn open(&mut self, name: &str) -> anyhow::Result<BufWriter<File>> {
        let path = self.root.join(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        let f = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
        self.outputs.push(name.to_string());
        Ok(BufWriter::new(f))
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> anyhow::Result<()> {
        let mut w = self.open(name)?;
        serde_json::to_writer_pretty(&mut w, value)?;
        w.write_all(b"\n")?;
        w.flush()?;
        Ok(())
    }

    /// RFC 4180 CSV with LF line endings.
    pub fn csv(&mut self, name: &str, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> anyhow::Result<()> {
        let w = self.open(name)?;
        let mut cw = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w);
        cw.write_record(header)?;
        for row in rows {
            cw.write_record(&row)?;
        }
        cw.flush()?;
        Ok(())
    }

    pub fn binary(&mut self, name: &str, write: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> anyhow::Result<()> {
        let mut w = self.open(name)?;
        write(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn warn(&mut self, msg: impl Into<String>) {
        let msg = msg.into();
        log::warn!("{msg}");
        self.warnings.push(msg);
    }

    pub fn outputs(&self) -> &[String] {
        &self.outputs
    }
}

pub fn num(x: f64) -> String {
    format!("{x}")
}

pub fn now() -> String {
    Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true)
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub config_hash: String,
    pub seed: u64,
    pub code_version: String,
    pub started_at: String,
    pub finished_at: String,
    pub threads: usize,
    /// Bound on the noise variance discarded by truncating at N modes.
    pub spectral_tail_bound: Option<f64>,
    pub outputs: Vec<String>,
    pub warnings: Vec<String>,
}
