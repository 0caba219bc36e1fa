//! Run configuration: presets, flat key = value config files, and run
//! manifests. A manifest records every resolved setting plus results and
//! artifact checksums, and is itself a loadable config, so any run can be
//! reproduced by pointing `--config` at its manifest.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::autoencoder::PretrainConfig;
use crate::cluster::DecTrainConfig;
use crate::error::{Error, Result};
use crate::kmeans::KMeansConfig;

/// Named bundle of training defaults. `paper` is the full-scale recipe;
/// `desk` is scaled for seconds-scale runs on small synthetic data.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    Paper,
    Desk,
}

impl Preset {
    pub fn tag(self) -> &'static str {
        match self {
            Preset::Paper => "paper",
            Preset::Desk => "desk",
        }
    }

    pub fn parse(text: &str) -> Result<Preset> {
        match text {
            "paper" => Ok(Preset::Paper),
            "desk" => Ok(Preset::Desk),
            other => Err(Error::Config(format!(
                "unknown preset {:?}, expected paper or desk",
                other
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DataFormat {
    Csv,
    Idx,
}

impl DataFormat {
    pub fn tag(self) -> &'static str {
        match self {
            DataFormat::Csv => "csv",
            DataFormat::Idx => "idx",
        }
    }

    pub fn parse(text: &str) -> Result<DataFormat> {
        match text {
            "csv" => Ok(DataFormat::Csv),
            "idx" => Ok(DataFormat::Idx),
            other => Err(Error::Config(format!(
                "unknown dataset.format {:?}, expected csv or idx",
                other
            ))),
        }
    }
}

/// Where and how to read the dataset.
#[derive(Debug, Clone)]
pub struct DatasetSpec {
    pub path: Option<PathBuf>,
    pub format: DataFormat,
    /// CSV only: zero-based column holding integer labels.
    pub label_column: Option<usize>,
    /// IDX only: companion label file.
    pub labels_path: Option<PathBuf>,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        DatasetSpec {
            path: None,
            format: DataFormat::Csv,
            label_column: None,
            labels_path: None,
        }
    }
}

/// Fully resolved settings for one command invocation.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub preset: Preset,
    pub dataset: DatasetSpec,
    /// Scale features so the mean squared norm per dimension is 1.
    pub normalize: bool,
    pub seed: u64,
    pub k: usize,
    pub out_dir: PathBuf,
    /// Pretrained model to start from (cluster and project commands).
    pub checkpoint: Option<PathBuf>,
    pub alpha: f64,
    /// Train share of the train/validation split used by select-k.
    pub train_fraction: f64,
    /// Template whose `layer_dims` holds only the dims after the input
    /// layer; `pretrain_for` prepends the dataset dimension.
    pub pretrain: PretrainConfig,
    pub dec: DecTrainConfig,
    pub kmeans: KMeansConfig,
}

impl RunConfig {
    pub fn default_for(preset: Preset) -> RunConfig {
        let mut pretrain = match preset {
            Preset::Paper => PretrainConfig::paper(0),
            Preset::Desk => PretrainConfig::desk(0),
        };
        pretrain.layer_dims.remove(0);
        let mut dec = DecTrainConfig::default();
        if preset == Preset::Desk {
            // At desk scale (hundreds of points, a handful of batches per
            // epoch) the full-scale refinement rate of 0.01 can jump from a
            // clean initialisation straight into the merged zero-KL optimum
            // whenever the normalised cluster separation is moderate (~3-4σ).
            // A 10x gentler rate sharpens instead of merging.
            dec.learning_rate = 0.001;
        }
        RunConfig {
            preset,
            dataset: DatasetSpec::default(),
            normalize: true,
            seed: 0,
            k: 10,
            out_dir: PathBuf::from("runs"),
            checkpoint: None,
            alpha: crate::cluster::DEFAULT_ALPHA,
            train_fraction: 0.9,
            pretrain,
            dec,
            kmeans: KMeansConfig::default(),
        }
    }

    /// Pretraining config with the input dimension prepended and the run
    /// seed applied.
    pub fn pretrain_for(&self, input_dim: usize) -> PretrainConfig {
        let mut config = self.pretrain.clone();
        config.layer_dims.insert(0, input_dim);
        config.seed = self.seed;
        config
    }

    /// Refinement config with the run seed applied.
    pub fn dec_config(&self) -> DecTrainConfig {
        let mut config = self.dec.clone();
        config.seed = self.seed;
        config
    }

    /// Applies one key = value setting. Keys under `result.`, `timing.`,
    /// `artifact.`, and `decision.` are informational manifest output and
    /// are ignored on load; any other unknown key is a config error.
    /// `preset` switches every training section back to that preset's
    /// defaults, so it belongs before other training keys in a file.
    pub fn apply(&mut self, key: &str, value: &str) -> Result<()> {
        if let Some(namespace) = key.split('.').next() {
            if matches!(namespace, "result" | "timing" | "artifact" | "decision") {
                return Ok(());
            }
        }
        match key {
            "preset" => {
                let preset = Preset::parse(value)?;
                let fresh = RunConfig::default_for(preset);
                self.preset = preset;
                self.pretrain = fresh.pretrain;
                self.dec = fresh.dec;
                self.kmeans = fresh.kmeans;
            }
            "dataset.path" => self.dataset.path = parse_path(key, value)?,
            "dataset.format" => self.dataset.format = DataFormat::parse(value)?,
            "dataset.label_column" => {
                self.dataset.label_column = parse_optional(key, value, parse_usize)?
            }
            "dataset.labels_path" => self.dataset.labels_path = parse_path(key, value)?,
            "normalize" => self.normalize = parse_bool(key, value)?,
            "seed" => self.seed = parse_u64(key, value)?,
            "k" => self.k = parse_usize(key, value)?,
            "out" => self.out_dir = PathBuf::from(value),
            "checkpoint" => self.checkpoint = parse_path(key, value)?,
            "alpha" => self.alpha = parse_f64(key, value)?,
            "train_fraction" => self.train_fraction = parse_f64(key, value)?,
            "pretrain.hidden_dims" => self.pretrain.layer_dims = parse_dims(key, value)?,
            "pretrain.dropout_rate" => self.pretrain.dropout_rate = parse_f64(key, value)?,
            "pretrain.iters_per_layer" => {
                self.pretrain.iters_per_layer = parse_usize(key, value)?
            }
            "pretrain.finetune_iters" => self.pretrain.finetune_iters = parse_usize(key, value)?,
            "pretrain.batch_size" => self.pretrain.batch_size = parse_usize(key, value)?,
            "pretrain.lr_initial" => self.pretrain.lr_initial = parse_f64(key, value)?,
            "pretrain.lr_drop_every" => self.pretrain.lr_drop_every = parse_usize(key, value)?,
            "pretrain.lr_drop_factor" => self.pretrain.lr_drop_factor = parse_f64(key, value)?,
            "pretrain.momentum" => self.pretrain.momentum = parse_f64(key, value)?,
            "pretrain.weight_decay" => self.pretrain.weight_decay = parse_f64(key, value)?,
            "pretrain.init_std" => self.pretrain.init_std = parse_f64(key, value)?,
            "dec.learning_rate" => self.dec.learning_rate = parse_f64(key, value)?,
            "dec.momentum" => self.dec.momentum = parse_f64(key, value)?,
            "dec.batch_size" => self.dec.batch_size = parse_usize(key, value)?,
            "dec.tol_percent" => self.dec.tol_percent = parse_f64(key, value)?,
            "dec.refresh_interval" => {
                self.dec.target_refresh_interval = if value == "epoch" {
                    None
                } else {
                    Some(parse_usize(key, value)?)
                }
            }
            "dec.max_epochs" => self.dec.max_epochs = parse_usize(key, value)?,
            "dec.freeze_encoder" => self.dec.freeze_encoder = parse_bool(key, value)?,
            "kmeans.restarts" => self.kmeans.restarts = parse_usize(key, value)?,
            "kmeans.max_iters" => self.kmeans.max_iters = parse_usize(key, value)?,
            other => {
                return Err(Error::Config(format!("unknown config key {:?}", other)));
            }
        }
        Ok(())
    }

    /// Every setting in canonical order, formatted so that applying the
    /// pairs to a fresh config reproduces this one exactly.
    pub fn to_pairs(&self) -> Vec<(String, String)> {
        let mut pairs: Vec<(String, String)> = Vec::new();
        let mut push = |key: &str, value: String| pairs.push((key.to_string(), value));
        push("preset", self.preset.tag().to_string());
        push("dataset.path", display_path(&self.dataset.path));
        push("dataset.format", self.dataset.format.tag().to_string());
        push(
            "dataset.label_column",
            match self.dataset.label_column {
                Some(c) => c.to_string(),
                None => "none".to_string(),
            },
        );
        push("dataset.labels_path", display_path(&self.dataset.labels_path));
        push("normalize", self.normalize.to_string());
        push("seed", self.seed.to_string());
        push("k", self.k.to_string());
        push("out", self.out_dir.display().to_string());
        push("checkpoint", display_path(&self.checkpoint));
        push("alpha", self.alpha.to_string());
        push("train_fraction", self.train_fraction.to_string());
        push("pretrain.hidden_dims", join_dims(&self.pretrain.layer_dims));
        push("pretrain.dropout_rate", self.pretrain.dropout_rate.to_string());
        push(
            "pretrain.iters_per_layer",
            self.pretrain.iters_per_layer.to_string(),
        );
        push(
            "pretrain.finetune_iters",
            self.pretrain.finetune_iters.to_string(),
        );
        push("pretrain.batch_size", self.pretrain.batch_size.to_string());
        push("pretrain.lr_initial", self.pretrain.lr_initial.to_string());
        push(
            "pretrain.lr_drop_every",
            self.pretrain.lr_drop_every.to_string(),
        );
        push(
            "pretrain.lr_drop_factor",
            self.pretrain.lr_drop_factor.to_string(),
        );
        push("pretrain.momentum", self.pretrain.momentum.to_string());
        push("pretrain.weight_decay", self.pretrain.weight_decay.to_string());
        push("pretrain.init_std", self.pretrain.init_std.to_string());
        push("dec.learning_rate", self.dec.learning_rate.to_string());
        push("dec.momentum", self.dec.momentum.to_string());
        push("dec.batch_size", self.dec.batch_size.to_string());
        push("dec.tol_percent", self.dec.tol_percent.to_string());
        push(
            "dec.refresh_interval",
            match self.dec.target_refresh_interval {
                Some(i) => i.to_string(),
                None => "epoch".to_string(),
            },
        );
        push("dec.max_epochs", self.dec.max_epochs.to_string());
        push("dec.freeze_encoder", self.dec.freeze_encoder.to_string());
        push("kmeans.restarts", self.kmeans.restarts.to_string());
        push("kmeans.max_iters", self.kmeans.max_iters.to_string());
        pairs
    }

    /// Builds a config from an optional file, an optional preset flag, and
    /// explicit overrides, in that precedence order (later wins; the preset
    /// flag beats a `preset` line in the file).
    pub fn from_sources(
        config_path: Option<&Path>,
        preset_flag: Option<Preset>,
        overrides: &[(String, String)],
    ) -> Result<RunConfig> {
        let file_pairs = match config_path {
            Some(path) => {
                let text = std::fs::read_to_string(path)?;
                parse_kv(&text, &path.display().to_string())?
            }
            None => Vec::new(),
        };
        let mut preset = Preset::Desk;
        for (key, value) in &file_pairs {
            if key == "preset" {
                preset = Preset::parse(value)?;
            }
        }
        if let Some(flag) = preset_flag {
            preset = flag;
        }
        let mut config = RunConfig::default_for(preset);
        for (key, value) in &file_pairs {
            if key != "preset" {
                config.apply(key, value)?;
            }
        }
        for (key, value) in overrides {
            config.apply(key, value)?;
        }
        Ok(config)
    }
}

fn display_path(path: &Option<PathBuf>) -> String {
    match path {
        Some(p) => p.display().to_string(),
        None => "none".to_string(),
    }
}

fn join_dims(dims: &[usize]) -> String {
    dims.iter()
        .map(|d| d.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

fn parse_path(_key: &str, value: &str) -> Result<Option<PathBuf>> {
    if value == "none" {
        Ok(None)
    } else {
        Ok(Some(PathBuf::from(value)))
    }
}

fn parse_optional<T>(
    key: &str,
    value: &str,
    inner: impl Fn(&str, &str) -> Result<T>,
) -> Result<Option<T>> {
    if value == "none" {
        Ok(None)
    } else {
        inner(key, value).map(Some)
    }
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" => Ok(true),
        "false" => Ok(false),
        other => Err(Error::Config(format!(
            "{}: expected true or false, got {:?}",
            key, other
        ))),
    }
}

fn parse_u64(key: &str, value: &str) -> Result<u64> {
    value
        .parse::<u64>()
        .map_err(|_| Error::Config(format!("{}: expected an integer, got {:?}", key, value)))
}

fn parse_usize(key: &str, value: &str) -> Result<usize> {
    value
        .parse::<usize>()
        .map_err(|_| Error::Config(format!("{}: expected an integer, got {:?}", key, value)))
}

fn parse_f64(key: &str, value: &str) -> Result<f64> {
    value
        .parse::<f64>()
        .map_err(|_| Error::Config(format!("{}: expected a number, got {:?}", key, value)))
}

fn parse_dims(key: &str, value: &str) -> Result<Vec<usize>> {
    let dims = value
        .split(',')
        .map(|part| parse_usize(key, part.trim()))
        .collect::<Result<Vec<usize>>>()?;
    if dims.is_empty() {
        return Err(Error::Config(format!("{}: needs at least one dim", key)));
    }
    Ok(dims)
}

/// Parses flat key = value text. Blank lines and lines starting with `#`
/// are skipped; anything else must contain `=`.
pub fn parse_kv(text: &str, origin: &str) -> Result<Vec<(String, String)>> {
    let mut pairs = Vec::new();
    for (index, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Error::Config(format!(
                "{} line {}: expected key = value, got {:?}",
                origin,
                index + 1,
                raw
            ))
        })?;
        pairs.push((key.trim().to_string(), value.trim().to_string()));
    }
    Ok(pairs)
}

/// Ordered key = value record of a run: resolved config first, then
/// results, timings, and artifact checksums appended by the command.
#[derive(Debug, Default)]
pub struct Manifest {
    entries: Vec<(String, String)>,
}

impl Manifest {
    pub fn from_config(config: &RunConfig) -> Manifest {
        Manifest {
            entries: config.to_pairs(),
        }
    }

    pub fn push(&mut self, key: impl Into<String>, value: impl ToString) {
        self.entries.push((key.into(), value.to_string()));
    }

    /// Records the SHA-256 of a written artifact under
    /// `artifact.<name>.sha256`.
    pub fn push_artifact(&mut self, name: &str, path: &Path) -> Result<()> {
        let digest = sha256_hex(path)?;
        self.push(format!("artifact.{}.sha256", name), digest);
        Ok(())
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        for (key, value) in &self.entries {
            let _ = writeln!(out, "{} = {}", key, value);
        }
        crate::data::write_atomic(path, out.as_bytes())
    }
}

pub fn sha256_hex(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path)?;
    let mut hasher = Sha256::new();
    hasher.update(&bytes);
    let digest = hasher.finalize();
    let mut hex = String::with_capacity(64);
    for byte in digest {
        let _ = write!(hex, "{:02x}", byte);
    }
    Ok(hex)
}
