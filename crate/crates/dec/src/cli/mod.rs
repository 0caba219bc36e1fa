//! Command-line interface: argument parsing, config resolution, dispatch,
//! and exit-code mapping.

pub mod commands;
pub mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::error::{Error, Result};

pub use commands::{recommend_k, Baseline, SelectKRow};
pub use config::{DataFormat, Manifest, Preset, RunConfig};

#[derive(Debug, Parser)]
#[command(
    name = "dec",
    version,
    about = "Deep embedded clustering: autoencoder pretraining, k-means \
             initialization in embedding space, KL self-training refinement"
)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Layer-wise denoising pretraining plus finetuning of the autoencoder
    Pretrain(CommonArgs),
    /// Initialize centroids in embedding space and refine by KL self-training
    Cluster(ClusterArgs),
    /// Score an assignments file against ground-truth labels
    Evaluate(EvaluateArgs),
    /// Sweep candidate cluster counts and recommend one
    SelectK(SelectKArgs),
    /// Project refined embeddings to 2-D for plotting
    Project(CommonArgs),
}

#[derive(Debug, Args)]
struct CommonArgs {
    /// Key = value config file; a previous run's manifest.txt works
    #[arg(long)]
    config: Option<PathBuf>,
    /// Defaults bundle: paper (full-scale) or desk (seconds-scale)
    #[arg(long)]
    preset: Option<String>,
    /// Dataset file
    #[arg(long)]
    data: Option<PathBuf>,
    /// Dataset format: csv or idx
    #[arg(long)]
    format: Option<String>,
    /// Zero-based CSV column holding integer labels
    #[arg(long)]
    label_column: Option<usize>,
    /// IDX label file companion to --data
    #[arg(long)]
    labels: Option<PathBuf>,
    /// Root RNG seed
    #[arg(long)]
    seed: Option<u64>,
    /// Number of clusters
    #[arg(long)]
    k: Option<usize>,
    /// Pretrained checkpoint to start from
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Output directory for artifacts
    #[arg(long)]
    out: Option<PathBuf>,
    /// Extra KEY=VALUE override; repeatable
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl CommonArgs {
    /// Resolution order: preset defaults, then config file, then --set
    /// overrides, then explicit flags.
    fn resolve(&self) -> Result<RunConfig> {
        let preset = match &self.preset {
            Some(text) => Some(Preset::parse(text)?),
            None => None,
        };
        let mut overrides: Vec<(String, String)> = Vec::new();
        for item in &self.set {
            let (key, value) = item.split_once('=').ok_or_else(|| {
                Error::Config(format!("--set expects KEY=VALUE, got {:?}", item))
            })?;
            overrides.push((key.trim().to_string(), value.trim().to_string()));
        }
        let mut config = RunConfig::from_sources(self.config.as_deref(), preset, &overrides)?;
        if let Some(path) = &self.data {
            config.dataset.path = Some(path.clone());
        }
        if let Some(format) = &self.format {
            config.dataset.format = DataFormat::parse(format)?;
        }
        if let Some(column) = self.label_column {
            config.dataset.label_column = Some(column);
        }
        if let Some(path) = &self.labels {
            config.dataset.labels_path = Some(path.clone());
        }
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        if let Some(k) = self.k {
            config.k = k;
        }
        if let Some(path) = &self.checkpoint {
            config.checkpoint = Some(path.clone());
        }
        if let Some(path) = &self.out {
            config.out_dir = path.clone();
        }
        Ok(config)
    }
}

#[derive(Debug, Args)]
struct ClusterArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Keep encoder weights fixed during refinement
    #[arg(long)]
    freeze_encoder: bool,
    /// Run a reference method instead: kmeans or ae-kmeans
    #[arg(long)]
    baseline: Option<String>,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Assignments CSV produced by the cluster command
    #[arg(long)]
    assignments: PathBuf,
}

#[derive(Debug, Args)]
struct SelectKArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Smallest candidate k
    #[arg(long, default_value_t = 2)]
    k_min: usize,
    /// Largest candidate k
    #[arg(long, default_value_t = 8)]
    k_max: usize,
    /// Refinement repetitions averaged per candidate k
    #[arg(long, default_value_t = 3)]
    repeats: usize,
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Pretrain(args) => {
            let config = args.resolve()?;
            commands::cmd_pretrain(&config)
        }
        Command::Cluster(args) => {
            let mut config = args.common.resolve()?;
            if args.freeze_encoder {
                config.dec.freeze_encoder = true;
            }
            let baseline = match &args.baseline {
                Some(text) => Some(Baseline::parse(text)?),
                None => None,
            };
            commands::cmd_cluster(&config, baseline)
        }
        Command::Evaluate(args) => {
            let config = args.common.resolve()?;
            commands::cmd_evaluate(&config, &args.assignments)
        }
        Command::SelectK(args) => {
            let config = args.common.resolve()?;
            commands::cmd_select_k(&config, args.k_min, args.k_max, args.repeats)
        }
        Command::Project(args) => {
            let config = args.resolve()?;
            commands::cmd_project(&config)
        }
    }
}

/// Exit code for a failed run: 2 usage or config, 3 data format,
/// 4 numerical or degenerate data. Success is 0.
pub fn exit_code(error: &Error) -> u8 {
    match error {
        Error::Format { .. } => 3,
        Error::Numerical(_) | Error::DegenerateCluster(_) | Error::DegenerateData(_) => 4,
        _ => 2,
    }
}

/// Binary entry point: parse argv, run, map errors to exit codes.
pub fn run() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(error) => {
            eprintln!("error: {}", error);
            ExitCode::from(exit_code(&error))
        }
    }
}
