//! Report files. Each one starts with a provenance comment line.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone)]
pub struct Provenance {
    pub experiment: String,
    pub seed: u64,
    pub config_sha256: String,
}

impl Provenance {
    pub fn header(&self) -> String {
        format!(
            "# wearlab {VERSION} | experiment={} | seed={} | config_sha256={}\n",
            self.experiment, self.seed, self.config_sha256
        )
    }
}

/// Writes reports under one directory and remembers what it wrote.
#[derive(Debug)]
pub struct ReportDir {
    pub dir: PathBuf,
    pub provenance: Provenance,
    pub written: Vec<PathBuf>,
}

impl ReportDir {
    pub fn create(dir: &Path, provenance: Provenance) -> Result<Self> {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(ReportDir { dir: dir.to_path_buf(), provenance, written: Vec::new() })
    }

    pub fn write(&mut self, name: &str, body: &str) -> Result<PathBuf> {
        let path = self.dir.join(name);
        let mut text = self.provenance.header();
        text.push_str(body);
        std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        self.written.push(path.clone());
        Ok(path)
    }
}

/// Drops leading `#` lines.
pub fn strip_header(text: &str) -> &str {
    let mut rest = text;
    while rest.starts_with('#') {
        rest = rest.split_once('\n').map_or("", |(_, r)| r);
    }
    rest
}
