//! CSV tables, SVG files and the per-run manifest.

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{LabError, Result};

pub fn fmt(v: f64) -> String {
    v.to_string()
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Self { header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> String {
        let mut s = self.header.join(",");
        s.push('\n');
        for r in &self.rows {
            s.push_str(&r.join(","));
            s.push('\n');
        }
        s
    }

    /// Column by header name, parsed as numbers.
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let j = self.header.iter().position(|h| h == name)?;
        self.rows.iter().map(|r| r[j].parse().ok()).collect()
    }
}

/// Output directory of one run; remembers what it wrote.
#[derive(Debug)]
pub struct Sink {
    pub dir: PathBuf,
    pub files: Vec<PathBuf>,
    manifest: Vec<(String, String)>,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> LabError + '_ {
    move |source| LabError::Io { path: path.to_path_buf(), source }
}

impl Sink {
    pub fn create(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        Ok(Self { dir: dir.to_path_buf(), files: Vec::new(), manifest: Vec::new() })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn text(&mut self, name: &str, content: &str) -> Result<()> {
        let path = self.path(name);
        fs::write(&path, content).map_err(io_err(&path))?;
        self.files.push(path);
        Ok(())
    }

    pub fn table(&mut self, name: &str, t: &Table) -> Result<()> {
        self.text(name, &t.to_csv())
    }

    /// Writes through a callback for formats produced by the core crate.
    pub fn with_file(&mut self, name: &str, f: impl FnOnce(&mut std::io::BufWriter<fs::File>) -> rcgff::Result<()>) -> Result<()> {
        let path = self.path(name);
        let file = fs::File::create(&path).map_err(io_err(&path))?;
        let mut w = std::io::BufWriter::new(file);
        f(&mut w)?;
        std::io::Write::flush(&mut w).map_err(io_err(&path))?;
        self.files.push(path);
        Ok(())
    }

    /// Provenance entry for `manifest.txt`.
    pub fn note(&mut self, key: &str, value: impl ToString) {
        self.manifest.push((key.to_string(), value.to_string()));
    }

    pub fn finish(mut self, config_kv: &str) -> Result<Vec<PathBuf>> {
        let mut s = format!("tool = rcgff {}\n", env!("CARGO_PKG_VERSION"));
        s.push_str("[config]\n");
        s.push_str(config_kv);
        s.push_str("[provenance]\n");
        for (k, v) in &self.manifest {
            s.push_str(&format!("{k} = {v}\n"));
        }
        self.text("manifest.txt", &s)?;
        Ok(self.files)
    }
}
