use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::SyntheticConfig;
use crate::error::{Error, Result};
use crate::io_util::{read_text, write_atomic};
use crate::model::ModelKind;

pub const RUN_CONFIG_FILE: &str = "run_config.toml";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum SplitKind {
    CrossSubject,
    CrossView,
    File,
}

/// A split with its groups resolved: subject ids, camera ids, or (for `File`)
/// nothing, since membership comes from manifest tags.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub kind: SplitKind,
    pub train: Vec<u32>,
    pub test: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerateRun {
    pub out: PathBuf,
    pub synthetic: SyntheticConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchRun {
    pub blocks: usize,
    pub hidden: usize,
    pub beta: f64,
    pub kernel_size: usize,
    pub dropout: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainRun {
    pub dataset: PathBuf,
    pub out: PathBuf,
    pub model: ModelKind,
    pub split: SplitSpec,
    pub view: usize,
    pub epochs: usize,
    pub lr: f64,
    pub factor: f64,
    pub patience: usize,
    pub min_lr: f64,
    pub batch: usize,
    pub seed: u64,
    pub arch: ArchRun,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRun {
    pub checkpoint: PathBuf,
    pub dataset: PathBuf,
    pub out: PathBuf,
    pub split: SplitSpec,
    pub view: usize,
    pub tau: f64,
    pub iou: Vec<f64>,
    pub fuse_with: Option<PathBuf>,
    pub fuse_view: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InspectRun {
    pub dataset: PathBuf,
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExportRun {
    pub checkpoint: PathBuf,
    pub dataset: PathBuf,
    pub out: PathBuf,
    pub view: usize,
    /// Empty means every video in the dataset.
    pub videos: Vec<String>,
}

/// Fully resolved parameters of one command, saved beside its outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum RunConfig {
    Generate(GenerateRun),
    Train(TrainRun),
    Eval(EvalRun),
    Inspect(InspectRun),
    ExportAttention(ExportRun),
}

impl RunConfig {
    pub fn out(&self) -> &Path {
        match self {
            RunConfig::Generate(r) => &r.out,
            RunConfig::Train(r) => &r.out,
            RunConfig::Eval(r) => &r.out,
            RunConfig::Inspect(r) => &r.out,
            RunConfig::ExportAttention(r) => &r.out,
        }
    }

    pub fn set_out(&mut self, out: PathBuf) {
        match self {
            RunConfig::Generate(r) => r.out = out,
            RunConfig::Train(r) => r.out = out,
            RunConfig::Eval(r) => r.out = out,
            RunConfig::Inspect(r) => r.out = out,
            RunConfig::ExportAttention(r) => r.out = out,
        }
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(format!("cannot serialise run config: {e}")))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(format!("bad run config: {e}")))
    }

    pub fn save(&self) -> Result<PathBuf> {
        let path = self.out().join(RUN_CONFIG_FILE);
        write_atomic(&path, self.to_toml()?.as_bytes())?;
        Ok(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&read_text(path)?)
    }
}
