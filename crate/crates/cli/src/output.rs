//! Output-file plumbing: everything is written to a temp file first and
//! renamed into place, so partially written results never appear under the
//! final name.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};

pub struct OutDir {
    dir: PathBuf,
}

impl OutDir {
    pub fn new(dir: PathBuf) -> Result<Self> {
        std::fs::create_dir_all(&dir)
            .with_context(|| format!("cannot create output directory {}", dir.display()))?;
        Ok(Self { dir })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn write(&self, name: &str, bytes: &[u8]) -> Result<PathBuf> {
        let final_path = self.path(name);
        let tmp_path = self.dir.join(format!("{name}.tmp"));
        std::fs::write(&tmp_path, bytes)
            .with_context(|| format!("cannot write {}", tmp_path.display()))?;
        std::fs::rename(&tmp_path, &final_path)
            .with_context(|| format!("cannot move into place {}", final_path.display()))?;
        Ok(final_path)
    }

    pub fn write_json<T: serde::Serialize>(&self, name: &str, value: &T) -> Result<PathBuf> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write(name, text.as_bytes())
    }
}

/// CSV of one `(index, probability)` column pair behind the version header.
pub fn marginal_csv(label: &str, pmf: &[f64]) -> String {
    let mut text = format!("{}\n{label},p\n", crn_queues::CSV_VERSION_HEADER);
    for (k, p) in pmf.iter().enumerate() {
        text.push_str(&format!("{k},{p}\n"));
    }
    text
}

/// Formats an optional CSV cell; absent values become empty cells.
pub fn cell(value: Option<f64>) -> String {
    value.map(|v| v.to_string()).unwrap_or_default()
}

pub fn report_path(path: &Path) {
    println!("wrote {}", path.display());
}
