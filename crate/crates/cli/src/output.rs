//! Output files, metadata headers and the results cache.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use sha2::{Digest, Sha256};

use crate::config::Source;
use crate::experiments::{Artifact, Experiment};

/// Metadata block: experiment, version, seed, the full config and results.
/// Every line is `# key=value`.
pub fn header(experiment: Experiment, src: &Source, results: &[(String, String)]) -> String {
    let mut out = format!(
        "# experiment={}\n# version={}\n# seed={}\n",
        experiment.name(),
        hclab_core::VERSION,
        src.config.seed
    );
    for (k, v) in src.flatten() {
        out.push_str(&format!("# config.{k}={v}\n"));
    }
    for (k, v) in results {
        out.push_str(&format!("# result.{k}={v}\n"));
    }
    out
}

pub fn render(experiment: Experiment, src: &Source, art: &Artifact) -> String {
    header(experiment, src, &art.results) + &art.body
}

/// Column manifest for plotting tools: one `index name` line per column.
pub fn manifest(data_file: &Path, columns: &[String]) -> String {
    let mut out = format!("# columns of {}\n", data_file.display());
    for (i, c) in columns.iter().enumerate() {
        out.push_str(&format!("{} {c}\n", i + 1));
    }
    out
}

/// Content hash of everything that determines the output.
pub fn cache_key(experiment: Experiment, src: &Source) -> String {
    let mut h = Sha256::new();
    h.update(format!("hclab {}\n{}\n", hclab_core::VERSION, experiment.name()));
    for (k, v) in src.flatten() {
        h.update(format!("{k}={v}\n"));
    }
    hex::encode(h.finalize())
}

/// `HCLAB_CACHE_DIR` if set, else `.hclab-cache` inside the output directory.
pub fn cache_dir(out: &Path) -> PathBuf {
    match std::env::var_os("HCLAB_CACHE_DIR") {
        Some(d) if !d.is_empty() => PathBuf::from(d),
        _ => out.join(".hclab-cache"),
    }
}

pub struct Cache {
    dir: PathBuf,
    key: String,
}

impl Cache {
    pub fn new(dir: PathBuf, key: String) -> Cache {
        Cache { dir, key }
    }

    fn path(&self, suffix: &str) -> PathBuf {
        self.dir.join(format!("{}.{suffix}", self.key))
    }

    pub fn load(&self) -> Option<(String, Option<String>)> {
        let data = fs::read_to_string(self.path("data")).ok()?;
        let plt = fs::read_to_string(self.path("plt")).ok();
        Some((data, plt))
    }

    pub fn store(&self, data: &str, plt: Option<&str>) -> Result<()> {
        fs::create_dir_all(&self.dir).with_context(|| format!("creating cache {}", self.dir.display()))?;
        // Write then rename so an interrupted run never leaves a partial entry.
        let tmp = self.path("data.tmp");
        fs::write(&tmp, data)?;
        fs::rename(&tmp, self.path("data"))?;
        match plt {
            Some(p) => fs::write(self.path("plt"), p)?,
            None => {
                let _ = fs::remove_file(self.path("plt"));
            }
        }
        Ok(())
    }
}
