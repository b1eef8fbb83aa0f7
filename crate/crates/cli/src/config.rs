//! Run configuration: defaults, then a TOML file, then command-line flags.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use chrono::NaiveDate;
use lppls::indicator::ScanConfig;
use lppls::{BubbleSign, SynthSpec};
use serde::{Deserialize, Serialize};

/// File name of the echoed configuration inside an output directory.
pub const CONFIG_FILE: &str = "config.toml";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub input: Option<PathBuf>,
    pub column: Option<String>,
    pub output: Option<PathBuf>,
    /// Worker threads for scans; all cores when absent.
    pub workers: Option<usize>,
    /// Window of a single fit.
    pub t1: Option<NaiveDate>,
    pub t2: Option<NaiveDate>,
    pub scan: ScanConfig,
    pub postmortem: PostMortemSettings,
    pub synth: Option<SynthSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PostMortemSettings {
    /// JSON-lines fit store written by a scan.
    pub store: Option<PathBuf>,
    /// Endpoint range of the selected cluster.
    pub start: Option<NaiveDate>,
    pub end: Option<NaiveDate>,
    pub sign: BubbleSign,
    pub levels: Vec<f64>,
}

impl Default for PostMortemSettings {
    fn default() -> Self {
        Self {
            store: None,
            start: None,
            end: None,
            sign: BubbleSign::Positive,
            levels: lppls::postmortem::DEFAULT_LEVELS.to_vec(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).context("serializing configuration")
    }

    pub fn input(&self) -> Result<&Path> {
        match &self.input {
            Some(p) => Ok(p),
            None => bail!("no input CSV given (--csv or `input` in the config file)"),
        }
    }

    pub fn output(&self) -> Result<&Path> {
        match &self.output {
            Some(p) => Ok(p),
            None => bail!("no output directory given (--out or `output` in the config file)"),
        }
    }

    /// Creates the output directory and writes the resolved configuration
    /// into it.
    pub fn echo(&self) -> Result<PathBuf> {
        let dir = self.output()?.to_path_buf();
        std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        std::fs::write(dir.join(CONFIG_FILE), self.to_toml()?)
            .with_context(|| format!("writing {}", dir.join(CONFIG_FILE).display()))?;
        Ok(dir)
    }
}
