//! Command implementations shared by the binary and the integration tests.
//! Each command loads data per the run config, does its work, writes its
//! artifacts atomically under the output directory, and finishes with a
//! `manifest.txt` that records resolved settings, results, timings, and
//! artifact checksums.

use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use crate::autoencoder::{finetune, greedy_pretrain, StackedAutoencoder};
use crate::checkpoint;
use crate::cli::config::{DataFormat, Manifest, RunConfig};
use crate::cluster::{self, hard_assign, init_dec, DecModel, EvalHook};
use crate::data::{self, Dataset};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::metrics;
use crate::pca;
use crate::rng::RngState;

/// Child-stream indices off the root seed. Each phase draws from its own
/// derived stream, so a change in how much randomness one phase consumes
/// cannot shift any other phase.
const STREAM_PRETRAIN: u64 = 0;
const STREAM_KMEANS: u64 = 1;
const STREAM_DEC: u64 = 2;
const STREAM_SELECT: u64 = 3;

/// Reference methods selectable in the cluster command.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Baseline {
    /// k-means directly on raw features.
    Kmeans,
    /// k-means on pretrained embeddings, no refinement.
    AeKmeans,
}

impl Baseline {
    pub fn tag(self) -> &'static str {
        match self {
            Baseline::Kmeans => "kmeans",
            Baseline::AeKmeans => "ae-kmeans",
        }
    }

    pub fn parse(text: &str) -> Result<Baseline> {
        match text {
            "kmeans" => Ok(Baseline::Kmeans),
            "ae-kmeans" => Ok(Baseline::AeKmeans),
            other => Err(Error::Config(format!(
                "unknown baseline {:?}, expected kmeans or ae-kmeans",
                other
            ))),
        }
    }
}

/// Loads the configured dataset and applies normalization if enabled.
/// Returns the scale factor actually applied, if any.
fn load_dataset(config: &RunConfig) -> Result<(Dataset, Option<f64>)> {
    let path = config.dataset.path.as_deref().ok_or_else(|| {
        Error::Config("dataset.path is required (pass --data or set dataset.path)".to_string())
    })?;
    let mut dataset = match config.dataset.format {
        DataFormat::Csv => data::load_csv(path, config.dataset.label_column)?,
        DataFormat::Idx => data::load_idx(path, config.dataset.labels_path.as_deref())?,
    };
    let scale = if config.normalize {
        Some(data::normalize(&mut dataset)?)
    } else {
        None
    };
    Ok((dataset, scale))
}

fn load_sae_checked(config: &RunConfig, input_dim: usize) -> Result<StackedAutoencoder> {
    let path = config.checkpoint.as_deref().ok_or_else(|| {
        Error::Config("checkpoint is required (pass --checkpoint or set checkpoint)".to_string())
    })?;
    let sae = checkpoint::load_sae(path)?;
    if sae.input_dim() != input_dim {
        return Err(Error::Config(format!(
            "checkpoint expects input dim {}, dataset has {}",
            sae.input_dim(),
            input_dim
        )));
    }
    Ok(sae)
}

fn write_assignments(path: &Path, ids: &[usize]) -> Result<()> {
    let mut out = String::from("index,cluster\n");
    for (index, cluster) in ids.iter().enumerate() {
        let _ = writeln!(out, "{},{}", index, cluster);
    }
    data::write_atomic(path, out.as_bytes())
}

/// Reads an assignments file produced by `write_assignments`.
pub fn read_assignments(path: &Path, expected_n: usize) -> Result<Vec<usize>> {
    let text = std::fs::read_to_string(path)?;
    let display = path.display().to_string();
    let mut ids = Vec::new();
    for (index, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if index == 0 && line.starts_with(|c: char| c.is_ascii_alphabetic()) {
            continue;
        }
        let position = format!("line {}", index + 1);
        let (row_text, cluster_text) = line.split_once(',').ok_or_else(|| {
            Error::format(&display, &position, "expected index,cluster")
        })?;
        let row: usize = row_text.trim().parse().map_err(|_| {
            Error::format(&display, &position, format!("bad index {:?}", row_text))
        })?;
        if row != ids.len() {
            return Err(Error::format(
                &display,
                &position,
                format!("expected index {}, got {}", ids.len(), row),
            ));
        }
        let cluster: usize = cluster_text.trim().parse().map_err(|_| {
            Error::format(&display, &position, format!("bad cluster id {:?}", cluster_text))
        })?;
        ids.push(cluster);
    }
    if ids.len() != expected_n {
        return Err(Error::format(
            &display,
            "end of file",
            format!("assignments cover {} points, dataset has {}", ids.len(), expected_n),
        ));
    }
    Ok(ids)
}

fn write_history(path: &Path, records: &[cluster::RefreshRecord]) -> Result<()> {
    let mut out = String::new();
    for record in records {
        let line = serde_json::to_string(record)
            .map_err(|e| Error::Numerical(format!("history serialization failed: {}", e)))?;
        out.push_str(&line);
        out.push('\n');
    }
    data::write_atomic(path, out.as_bytes())
}

fn write_loss_trace(path: &Path, layer_traces: &[Vec<f64>], finetune_trace: &[f64]) -> Result<()> {
    let mut out = String::from("phase,iteration,loss\n");
    for (layer, trace) in layer_traces.iter().enumerate() {
        for (iteration, loss) in trace.iter().enumerate() {
            let _ = writeln!(out, "layer{},{},{:.16e}", layer, iteration, loss);
        }
    }
    for (iteration, loss) in finetune_trace.iter().enumerate() {
        let _ = writeln!(out, "finetune,{},{:.16e}", iteration, loss);
    }
    data::write_atomic(path, out.as_bytes())
}

fn push_quality_metrics(
    manifest: &mut Manifest,
    dataset: &Dataset,
    ids: &[usize],
) -> Result<Option<(f64, f64)>> {
    if let Some(labels) = &dataset.labels {
        let acc = metrics::clustering_accuracy(labels, ids)?;
        let nmi = metrics::nmi(labels, ids)?;
        manifest.push("result.acc", acc);
        manifest.push("result.nmi", nmi);
        Ok(Some((acc, nmi)))
    } else {
        Ok(None)
    }
}

/// Layer-wise pretraining followed by finetuning; saves the autoencoder
/// checkpoint and the loss traces.
pub fn cmd_pretrain(config: &RunConfig) -> Result<()> {
    let started = Instant::now();
    let (dataset, scale) = load_dataset(config)?;
    let pretrain = config.pretrain_for(dataset.dim());
    pretrain.validate()?;

    let mut rng = RngState::new(config.seed).derive(STREAM_PRETRAIN);
    let (mut sae, layer_traces) = greedy_pretrain(&dataset.features, &pretrain, &mut rng)?;
    let loss_stacked = sae.reconstruction_loss(&dataset.features)?;
    let finetune_trace = finetune(&mut sae, &dataset.features, &pretrain, &mut rng)?;
    let loss_final = sae.reconstruction_loss(&dataset.features)?;

    let checkpoint_path = config.out_dir.join("checkpoint.bin");
    checkpoint::save_sae(&checkpoint_path, &sae)?;
    let trace_path = config.out_dir.join("loss_trace.csv");
    write_loss_trace(&trace_path, &layer_traces, &finetune_trace)?;

    let mut manifest = Manifest::from_config(config);
    manifest.push("decision.command", "pretrain");
    if let Some(s) = scale {
        manifest.push("decision.normalize_scale", s);
    }
    manifest.push("result.n", dataset.n());
    manifest.push("result.input_dim", dataset.dim());
    manifest.push("result.reconstruction_loss_stacked", loss_stacked);
    manifest.push("result.reconstruction_loss_final", loss_final);
    manifest.push(
        "timing.total_seconds",
        format!("{:.3}", started.elapsed().as_secs_f64()),
    );
    manifest.push_artifact("checkpoint", &checkpoint_path)?;
    manifest.push_artifact("loss_trace", &trace_path)?;
    manifest.write(&config.out_dir.join("manifest.txt"))?;

    println!(
        "pretrained encoder {:?} on {} points",
        sae.layer_dims(),
        dataset.n()
    );
    println!("reconstruction_loss_final = {}", loss_final);
    println!("checkpoint = {}", checkpoint_path.display());
    Ok(())
}

/// Full clustering run: k-means init in embedding space plus KL refinement.
/// With `--baseline`, runs the reference method instead.
pub fn cmd_cluster(config: &RunConfig, baseline: Option<Baseline>) -> Result<()> {
    let started = Instant::now();
    let (dataset, scale) = load_dataset(config)?;

    let mut manifest = Manifest::from_config(config);
    manifest.push("decision.command", "cluster");
    if let Some(s) = scale {
        manifest.push("decision.normalize_scale", s);
    }

    let ids: Vec<usize>;
    match baseline {
        Some(Baseline::Kmeans) => {
            manifest.push("decision.baseline", "kmeans");
            let rng = RngState::new(config.seed).derive(STREAM_KMEANS);
            let result = crate::kmeans::kmeans(
                &dataset.features,
                config.k,
                config.kmeans.restarts,
                config.kmeans.max_iters,
                &rng,
            )?;
            manifest.push("result.inertia", result.inertia);
            ids = result.assignments;
        }
        Some(Baseline::AeKmeans) => {
            manifest.push("decision.baseline", "ae-kmeans");
            let sae = load_sae_checked(config, dataset.dim())?;
            let rng = RngState::new(config.seed).derive(STREAM_KMEANS);
            let model = init_dec(&sae, &dataset.features, config.k, &config.kmeans, &rng)?;
            let q = model.soft_assign_data(&dataset.features)?;
            ids = hard_assign(&q);
            let checkpoint_path = config.out_dir.join("checkpoint.bin");
            checkpoint::save_dec(&checkpoint_path, &model)?;
            manifest.push_artifact("checkpoint", &checkpoint_path)?;
        }
        None => {
            let sae = load_sae_checked(config, dataset.dim())?;
            let init_rng = RngState::new(config.seed).derive(STREAM_KMEANS);
            let mut model =
                init_dec(&sae, &dataset.features, config.k, &config.kmeans, &init_rng)?;
            let dec_config = config.dec_config();
            let mut train_rng = RngState::new(config.seed).derive(STREAM_DEC);
            let eval = dataset
                .labels
                .as_ref()
                .map(|labels| EvalHook { labels });
            let history =
                cluster::train(&mut model, &dataset.features, &dec_config, &mut train_rng, eval)?;
            let q = model.soft_assign_data(&dataset.features)?;
            ids = hard_assign(&q);

            let checkpoint_path = config.out_dir.join("checkpoint.bin");
            checkpoint::save_dec(&checkpoint_path, &model)?;
            let history_path = config.out_dir.join("history.jsonl");
            write_history(&history_path, &history)?;

            let last = history.last().expect("train returns at least one record");
            manifest.push("result.refreshes", history.len());
            manifest.push("result.final_loss", last.loss);
            manifest.push("result.final_mean_loss", last.mean_loss);
            if let Some(changed) = last.changed_fraction {
                manifest.push("result.final_changed_fraction", changed);
            }
            let reseeded: usize = history.iter().map(|r| r.reseeded_clusters.len()).sum();
            manifest.push("result.reseeded_total", reseeded);
            manifest.push_artifact("checkpoint", &checkpoint_path)?;
            manifest.push_artifact("history", &history_path)?;
        }
    }

    let assignments_path = config.out_dir.join("assignments.csv");
    write_assignments(&assignments_path, &ids)?;
    manifest.push_artifact("assignments", &assignments_path)?;
    let quality = push_quality_metrics(&mut manifest, &dataset, &ids)?;
    manifest.push(
        "timing.total_seconds",
        format!("{:.3}", started.elapsed().as_secs_f64()),
    );
    manifest.write(&config.out_dir.join("manifest.txt"))?;

    println!("clustered {} points into k = {}", dataset.n(), config.k);
    if let Some((acc, nmi)) = quality {
        println!("acc = {}", acc);
        println!("nmi = {}", nmi);
    }
    println!("assignments = {}", assignments_path.display());
    Ok(())
}

/// Scores an assignments file against ground-truth labels.
pub fn cmd_evaluate(config: &RunConfig, assignments_path: &Path) -> Result<()> {
    let (dataset, _) = load_dataset(config)?;
    let labels = dataset.labels.as_ref().ok_or_else(|| {
        Error::Config(
            "evaluate needs labels (set dataset.label_column or dataset.labels_path)".to_string(),
        )
    })?;
    let ids = read_assignments(assignments_path, dataset.n())?;
    let acc = metrics::clustering_accuracy(labels, &ids)?;
    let nmi = metrics::nmi(labels, &ids)?;
    let table = metrics::ContingencyTable::from_pairs(labels, &ids)?;

    let mut report = String::new();
    let _ = writeln!(report, "n = {}", dataset.n());
    let _ = writeln!(report, "acc = {}", acc);
    let _ = writeln!(report, "nmi = {}", nmi);
    let _ = writeln!(
        report,
        "contingency rows = labels {:?}, columns = clusters {:?}",
        table.row_values(),
        table.col_values()
    );
    for i in 0..table.rows() {
        let counts: Vec<String> = (0..table.cols())
            .map(|j| table.count(i, j).to_string())
            .collect();
        let _ = writeln!(report, "label {}: {}", table.row_values()[i], counts.join(" "));
    }

    let report_path = config.out_dir.join("report.txt");
    data::write_atomic(&report_path, report.as_bytes())?;

    let mut manifest = Manifest::from_config(config);
    manifest.push("decision.command", "evaluate");
    manifest.push("decision.assignments", assignments_path.display());
    manifest.push("result.n", dataset.n());
    manifest.push("result.acc", acc);
    manifest.push("result.nmi", nmi);
    manifest.push_artifact("report", &report_path)?;
    manifest.write(&config.out_dir.join("manifest.txt"))?;

    print!("{}", report);
    println!("report = {}", report_path.display());
    Ok(())
}

fn mean_kl(model: &DecModel, features: &Matrix) -> Result<f64> {
    let q = model.soft_assign_data(features)?;
    let p = cluster::target_distribution(&q)?;
    Ok(cluster::kl_loss(&p.p, &q.q)? / features.rows() as f64)
}

/// One candidate row of the model-selection sweep.
#[derive(Debug, Clone)]
pub struct SelectKRow {
    pub k: usize,
    pub train_loss: f64,
    pub validation_loss: f64,
    pub generalizability: f64,
    pub nmi: Option<f64>,
}

/// The k preceding the largest relative drop in generalizability; with one
/// candidate, that candidate. Ties keep the smallest k.
pub fn recommend_k(rows: &[SelectKRow]) -> usize {
    assert!(!rows.is_empty(), "need at least one candidate k");
    let mut best_index = 0;
    let mut best_drop = f64::NEG_INFINITY;
    for i in 0..rows.len().saturating_sub(1) {
        let here = rows[i].generalizability;
        let next = rows[i + 1].generalizability;
        let denom = here.abs().max(1e-300);
        let drop = (here - next) / denom;
        if drop > best_drop {
            best_drop = drop;
            best_index = i;
        }
    }
    rows[best_index].k
}

/// One pass of the k sweep: splits the dataset, pretrains once on the
/// train split, then for each candidate k runs centroid init plus
/// refinement and scores train/validation KL. NMI against labels, when
/// present, is computed over the whole dataset.
fn sweep_once(
    config: &RunConfig,
    dataset: &Dataset,
    k_min: usize,
    k_max: usize,
) -> Result<Vec<SelectKRow>> {
    let spec = data::SplitSpec {
        train_fraction: config.train_fraction,
        seed: config.seed,
    };
    let (train_set, val_set) = data::split(dataset, &spec)?;

    let pretrain = config.pretrain_for(dataset.dim());
    pretrain.validate()?;
    let mut rng = RngState::new(config.seed).derive(STREAM_PRETRAIN);
    let (mut sae, _) = greedy_pretrain(&train_set.features, &pretrain, &mut rng)?;
    finetune(&mut sae, &train_set.features, &pretrain, &mut rng)?;

    let mut rows = Vec::new();
    for k in k_min..=k_max {
        // Identical streams for every candidate: within a pass, runs differ
        // only in k, so the sweep compares cluster counts rather than batch
        // draws.
        let init_rng = RngState::new(config.seed).derive(STREAM_KMEANS);
        let mut model = init_dec(&sae, &train_set.features, k, &config.kmeans, &init_rng)?;
        let dec_config = config.dec_config();
        let mut train_rng = RngState::new(config.seed).derive(STREAM_DEC);
        cluster::train(&mut model, &train_set.features, &dec_config, &mut train_rng, None)?;
        let train_loss = mean_kl(&model, &train_set.features)?;
        let validation_loss = mean_kl(&model, &val_set.features)?;
        let generalizability = metrics::generalizability(train_loss, validation_loss)?;
        let nmi = match &dataset.labels {
            Some(labels) => {
                let q = model.soft_assign_data(&dataset.features)?;
                Some(metrics::nmi(labels, &hard_assign(&q))?)
            }
            None => None,
        };
        rows.push(SelectKRow {
            k,
            train_loss,
            validation_loss,
            generalizability,
            nmi,
        });
    }
    Ok(rows)
}

/// Library core of select-k: averages `repeats` independent sweep passes,
/// each with its own split, pretraining, and refinement seeds. A single
/// pass is noisy enough at small n to scramble the generalizability
/// ranking; averaging whole passes is what stabilizes it, because the
/// dominant variance comes from the split and pretraining draw rather
/// than the per-k refinement.
pub fn sweep_k(
    config: &RunConfig,
    dataset: &Dataset,
    k_min: usize,
    k_max: usize,
    repeats: usize,
) -> Result<Vec<SelectKRow>> {
    if k_min < 1 || k_max < k_min {
        return Err(Error::Config(format!(
            "invalid k range {}..={}",
            k_min, k_max
        )));
    }
    if repeats == 0 {
        return Err(Error::Config("repeats must be at least 1".to_string()));
    }
    let mut seed_rng = RngState::new(config.seed).derive(STREAM_SELECT);
    let mut rows: Vec<SelectKRow> = Vec::new();
    for rep in 0..repeats {
        let mut pass_config = config.clone();
        // First pass keeps the configured seed so repeats=1 is an ordinary
        // single sweep; later passes draw fresh seeds from a side stream.
        if rep > 0 {
            pass_config.seed = seed_rng.next_u64();
        }
        let pass = sweep_once(&pass_config, dataset, k_min, k_max)?;
        if rows.is_empty() {
            rows = pass;
        } else {
            for (sum, row) in rows.iter_mut().zip(&pass) {
                sum.train_loss += row.train_loss;
                sum.validation_loss += row.validation_loss;
                sum.generalizability += row.generalizability;
                if let (Some(total), Some(value)) = (sum.nmi.as_mut(), row.nmi) {
                    *total += value;
                }
            }
        }
    }
    let scale = repeats as f64;
    for row in &mut rows {
        row.train_loss /= scale;
        row.validation_loss /= scale;
        row.generalizability /= scale;
        if let Some(nmi) = row.nmi.as_mut() {
            *nmi /= scale;
        }
    }
    Ok(rows)
}

/// Sweeps candidate k values and recommends one; writes `select_k.csv`.
pub fn cmd_select_k(config: &RunConfig, k_min: usize, k_max: usize, repeats: usize) -> Result<()> {
    let started = Instant::now();
    let (dataset, scale) = load_dataset(config)?;
    let rows = sweep_k(config, &dataset, k_min, k_max, repeats)?;
    let recommended = recommend_k(&rows);

    let mut out = String::from("k,train_loss,validation_loss,generalizability,nmi\n");
    for row in &rows {
        let nmi_text = match row.nmi {
            Some(v) => v.to_string(),
            None => "none".to_string(),
        };
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            row.k, row.train_loss, row.validation_loss, row.generalizability, nmi_text
        );
    }
    let table_path = config.out_dir.join("select_k.csv");
    data::write_atomic(&table_path, out.as_bytes())?;

    let mut manifest = Manifest::from_config(config);
    manifest.push("decision.command", "select-k");
    if let Some(s) = scale {
        manifest.push("decision.normalize_scale", s);
    }
    manifest.push("decision.k_min", k_min);
    manifest.push("decision.k_max", k_max);
    manifest.push("decision.repeats", repeats);
    manifest.push("result.n", dataset.n());
    for row in &rows {
        manifest.push(format!("result.g.k{}", row.k), row.generalizability);
        if let Some(nmi) = row.nmi {
            manifest.push(format!("result.nmi.k{}", row.k), nmi);
        }
    }
    manifest.push("result.recommended_k", recommended);
    manifest.push(
        "timing.total_seconds",
        format!("{:.3}", started.elapsed().as_secs_f64()),
    );
    manifest.push_artifact("select_k", &table_path)?;
    manifest.write(&config.out_dir.join("manifest.txt"))?;

    println!("k train_loss validation_loss generalizability nmi");
    for row in &rows {
        let nmi_text = match row.nmi {
            Some(v) => format!("{:.4}", v),
            None => "-".to_string(),
        };
        println!(
            "{} {:.6} {:.6} {:.4} {}",
            row.k, row.train_loss, row.validation_loss, row.generalizability, nmi_text
        );
    }
    println!("recommended_k = {}", recommended);
    Ok(())
}

/// Embeds the dataset with a refined model and writes a 2-D PCA projection
/// of the embeddings with cluster ids.
pub fn cmd_project(config: &RunConfig) -> Result<()> {
    let (dataset, scale) = load_dataset(config)?;
    let path = config.checkpoint.as_deref().ok_or_else(|| {
        Error::Config("checkpoint is required (pass --checkpoint or set checkpoint)".to_string())
    })?;
    let model = checkpoint::load_dec(path)?;
    if model.input_dim() != dataset.dim() {
        return Err(Error::Config(format!(
            "checkpoint expects input dim {}, dataset has {}",
            model.input_dim(),
            dataset.dim()
        )));
    }
    let embedded = model.embed(&dataset.features)?;
    let q = model.soft_assign_data(&dataset.features)?;
    let ids = hard_assign(&q);
    let (projected, explained) = pca::project_2d(&embedded)?;

    let mut out = String::new();
    for i in 0..projected.rows() {
        let _ = writeln!(
            out,
            "{:.16e},{:.16e},{}",
            projected.get(i, 0),
            projected.get(i, 1),
            ids[i]
        );
    }
    let projection_path = config.out_dir.join("projection.csv");
    data::write_atomic(&projection_path, out.as_bytes())?;

    let mut manifest = Manifest::from_config(config);
    manifest.push("decision.command", "project");
    if let Some(s) = scale {
        manifest.push("decision.normalize_scale", s);
    }
    manifest.push("result.n", dataset.n());
    manifest.push("result.explained_variance_1", explained[0]);
    manifest.push("result.explained_variance_2", explained[1]);
    manifest.push_artifact("projection", &projection_path)?;
    manifest.write(&config.out_dir.join("manifest.txt"))?;

    println!(
        "projected {} embeddings, explained variance ({}, {})",
        dataset.n(),
        explained[0],
        explained[1]
    );
    println!("projection = {}", projection_path.display());
    Ok(())
}
