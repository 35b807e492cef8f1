//! Command-line front end. Every command resolves its flags into a
//! [`RunConfig`], writes it next to its outputs, and then executes it, so
//! `agnet replay --config <run_config.toml>` reproduces the run exactly.

mod commands;
mod config;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

pub use commands::{execute, predict_videos, resolve_split};
pub use config::{
    ArchRun, EvalRun, ExportRun, GenerateRun, InspectRun, RunConfig, SplitKind, SplitSpec, TrainRun, RUN_CONFIG_FILE,
};

use crate::data::SyntheticConfig;
use crate::model::ModelKind;

#[derive(Debug, Parser)]
#[command(name = "agnet", version, about = "Attention-guided temporal convolution networks for activity detection")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset directory.
    Generate(GenerateArgs),
    /// Train a model on a dataset split and write a checkpoint.
    Train(TrainArgs),
    /// Evaluate a checkpoint on the test side of a split.
    Eval(EvalArgs),
    /// Write dataset statistics.
    Inspect(InspectArgs),
    /// Write per-block attention maps for each video.
    ExportAttention(ExportArgs),
    /// Re-run a command from a saved run configuration.
    Replay(ReplayArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Preset {
    Small,
    Tsu,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value = "small")]
    pub preset: Preset,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub n_videos: Option<usize>,
    #[arg(long)]
    pub classes: Option<usize>,
    #[arg(long)]
    pub segments: Option<usize>,
    #[arg(long)]
    pub instances: Option<f64>,
    #[arg(long)]
    pub zipf: Option<f64>,
    #[arg(long)]
    pub snr: Option<f64>,
    #[arg(long)]
    pub att_snr: Option<f64>,
    #[arg(long)]
    pub channels: Option<usize>,
    #[arg(long)]
    pub att_channels: Option<usize>,
    #[arg(long)]
    pub views: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    #[arg(long, value_enum, default_value = "cross-subject")]
    pub split: SplitKind,
    /// Training subjects or cameras, comma-separated (default depends on the split).
    #[arg(long, value_delimiter = ',')]
    pub train_groups: Vec<u32>,
    #[arg(long, value_delimiter = ',')]
    pub test_groups: Vec<u32>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value = "agnet")]
    pub model: ModelKind,
    #[command(flatten)]
    pub split: SplitArgs,
    #[arg(long, default_value_t = 0)]
    pub view: usize,
    #[arg(long, default_value_t = 300)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0.001)]
    pub lr: f64,
    #[arg(long, default_value_t = 0.3)]
    pub factor: f64,
    #[arg(long, default_value_t = 10)]
    pub patience: usize,
    #[arg(long, default_value_t = 2)]
    pub batch: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 5)]
    pub blocks: usize,
    #[arg(long, default_value_t = 512)]
    pub hidden: usize,
    #[arg(long, default_value_t = 0.125)]
    pub beta: f64,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub split: SplitArgs,
    #[arg(long, default_value_t = 0)]
    pub view: usize,
    #[arg(long, default_value_t = 0.5)]
    pub tau: f64,
    #[arg(long, value_delimiter = ',', default_value = "0.3,0.5,0.7")]
    pub iou: Vec<f64>,
    /// Second checkpoint whose predictions are averaged with the first.
    #[arg(long)]
    pub fuse_with: Option<PathBuf>,
    /// View read by the second checkpoint (defaults to `--view`).
    #[arg(long)]
    pub fuse_view: Option<usize>,
}

#[derive(Debug, Args)]
pub struct InspectArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub view: usize,
    /// Restrict to these videos (comma-separated).
    #[arg(long, value_delimiter = ',')]
    pub video: Vec<String>,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Write outputs here instead of the recorded output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl GenerateArgs {
    fn synthetic(&self) -> SyntheticConfig {
        let mut c = match self.preset {
            Preset::Small => SyntheticConfig::default(),
            Preset::Tsu => SyntheticConfig::tsu_scale(),
        };
        macro_rules! set {
            ($($flag:ident => $field:ident),*) => {
                $(if let Some(v) = self.$flag { c.$field = v; })*
            };
        }
        set!(seed => seed, n_videos => n_videos, classes => n_classes, segments => segments_per_video,
             instances => instances_per_video, zipf => zipf_s, snr => snr, att_snr => attention_snr,
             channels => input_channels, att_channels => attention_channels, views => n_views);
        c
    }
}

/// Turns parsed arguments into a resolved run configuration (or a replay of one).
pub fn resolve(command: Command) -> anyhow::Result<RunConfig> {
    use anyhow::Context;
    Ok(match command {
        Command::Generate(a) => RunConfig::Generate(GenerateRun {
            synthetic: a.synthetic(),
            out: a.out,
        }),
        Command::Train(a) => {
            let split = resolve_split(&a.dataset, &a.split)?;
            RunConfig::Train(TrainRun {
                dataset: a.dataset,
                out: a.out,
                model: a.model,
                split,
                view: a.view,
                epochs: a.epochs,
                lr: a.lr,
                factor: a.factor,
                patience: a.patience,
                min_lr: 1e-7,
                batch: a.batch,
                seed: a.seed,
                arch: ArchRun {
                    blocks: a.blocks,
                    hidden: a.hidden,
                    beta: a.beta,
                    kernel_size: 3,
                    dropout: 0.5,
                },
            })
        }
        Command::Eval(a) => {
            let split = resolve_split(&a.dataset, &a.split)?;
            RunConfig::Eval(EvalRun {
                fuse_view: a.fuse_view.unwrap_or(a.view),
                checkpoint: a.checkpoint,
                dataset: a.dataset,
                out: a.out,
                split,
                view: a.view,
                tau: a.tau,
                iou: a.iou,
                fuse_with: a.fuse_with,
            })
        }
        Command::Inspect(a) => RunConfig::Inspect(InspectRun {
            dataset: a.dataset,
            out: a.out,
        }),
        Command::ExportAttention(a) => RunConfig::ExportAttention(ExportRun {
            checkpoint: a.checkpoint,
            dataset: a.dataset,
            out: a.out,
            view: a.view,
            videos: a.video,
        }),
        Command::Replay(a) => {
            let mut run = RunConfig::load(&a.config).with_context(|| format!("loading {}", a.config.display()))?;
            if let Some(out) = a.out {
                run.set_out(out);
            }
            run
        }
    })
}

/// Parses, resolves, records, and executes one command.
pub fn run(cli: Cli) -> anyhow::Result<()> {
    let run = resolve(cli.command)?;
    execute(&run)
}
