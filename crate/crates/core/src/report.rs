//! JSON reports with adjacent plain-text summaries, confined to one directory.

use std::path::{Component, Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::error::{Error, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Envelope shared by every emitted report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report<T> {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub seed: u64,
    pub config: ExperimentConfig,
    pub result: T,
}

impl<T> Report<T> {
    pub fn new(command: &str, config: &ExperimentConfig, result: T) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: VERSION.to_string(),
            command: command.to_string(),
            seed: config.seed,
            config: config.clone(),
            result,
        }
    }
}

/// Output directory that only hands out paths of plain file names inside it.
#[derive(Debug, Clone)]
pub struct OutputDir {
    root: PathBuf,
}

impl OutputDir {
    pub fn create(root: &Path) -> Result<Self> {
        std::fs::create_dir_all(root)?;
        Ok(Self {
            root: root.to_path_buf(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Path for `name`, which must be a single normal file-name component.
    pub fn path(&self, name: &str) -> Result<PathBuf> {
        let mut comps = Path::new(name).components();
        match (comps.next(), comps.next()) {
            (Some(Component::Normal(_)), None) => Ok(self.root.join(name)),
            _ => Err(Error::InvalidArgument(format!(
                "artifact name {name:?} must be a plain file name inside the output directory"
            ))),
        }
    }

    pub fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<PathBuf> {
        let p = self.path(name)?;
        std::fs::write(&p, serde_json::to_vec_pretty(value)?)?;
        Ok(p)
    }

    /// Writes `<stem>.json` and `<stem>.txt`.
    pub fn write_report<T: Serialize>(
        &self,
        stem: &str,
        report: &Report<T>,
        summary: &str,
    ) -> Result<(PathBuf, PathBuf)> {
        let json = self.write_json(&format!("{stem}.json"), report)?;
        let txt = self.path(&format!("{stem}.txt"))?;
        let header = format!(
            "{} {} | {} | seed {}\n\n",
            report.tool, report.version, report.command, report.seed
        );
        std::fs::write(&txt, header + summary)?;
        Ok((json, txt))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn confines_names() {
        let dir = tempfile::tempdir().unwrap();
        let out = OutputDir::create(&dir.path().join("o")).unwrap();
        assert!(out.path("a.json").is_ok());
        for bad in ["../a.json", "/etc/x", "sub/a.json", "..", ""] {
            assert!(out.path(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn report_pair_embeds_config() {
        let dir = tempfile::tempdir().unwrap();
        let out = OutputDir::create(dir.path()).unwrap();
        let c = ExperimentConfig::default();
        let (j, t) = out.write_report("r", &Report::new("eval", &c, 0.5), "acc 0.5\n").unwrap();
        let back: Report<f64> = serde_json::from_slice(&std::fs::read(j).unwrap()).unwrap();
        assert_eq!(back.config, c);
        assert_eq!(back.result, 0.5);
        assert!(std::fs::read_to_string(t).unwrap().contains("seed 7"));
    }
}
