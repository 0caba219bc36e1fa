//! End-to-end runs of the compiled binary: exit codes, artifact layout,
//! manifest reruns, and byte-level determinism.

use dec::data;
use dec::rng::RngState;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_dec"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary should launch")
}

fn assert_exit(output: &Output, code: i32) {
    assert_eq!(
        output.status.code(),
        Some(code),
        "stdout:\n{}\nstderr:\n{}",
        String::from_utf8_lossy(&output.stdout),
        String::from_utf8_lossy(&output.stderr)
    );
}

/// Labeled blob CSV; returns the path and the label column index.
fn write_blobs(dir: &Path, n: usize, dim: usize, seed: u64) -> (PathBuf, usize) {
    let dataset = data::make_blobs(n, 3, dim, 8.0, 0.5, seed).unwrap();
    let path = dir.join("blobs.csv");
    data::save_csv(&path, &dataset.features, dataset.labels.as_deref()).unwrap();
    (path, dim)
}

/// Flags that shrink training to fractions of a second.
fn tiny_profile() -> Vec<&'static str> {
    vec![
        "--set",
        "pretrain.hidden_dims=8,4",
        "--set",
        "pretrain.iters_per_layer=60",
        "--set",
        "pretrain.finetune_iters=60",
        "--set",
        "pretrain.lr_drop_every=50",
        "--set",
        "dec.max_epochs=5",
    ]
}

fn read(path: &Path) -> Vec<u8> {
    std::fs::read(path).unwrap_or_else(|e| panic!("reading {}: {}", path.display(), e))
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let output = run(&["cluster", "--no-such-flag"]);
    assert_exit(&output, 2);
}

#[test]
fn missing_dataset_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let output = run(&["pretrain", "--out", out.to_str().unwrap()]);
    assert_exit(&output, 2);
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("dataset"), "stderr: {}", stderr);
}

#[test]
fn malformed_csv_is_a_format_error() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "1.0,2.0\n3.0,oops\n").unwrap();
    let out = dir.path().join("out");
    let output = run(&[
        "pretrain",
        "--data",
        bad.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_exit(&output, 3);
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("line"), "stderr: {}", stderr);
}

#[test]
fn all_zero_data_is_a_numerical_error() {
    let dir = tempfile::tempdir().unwrap();
    let zeros = dir.path().join("zeros.csv");
    std::fs::write(&zeros, "0,0,0\n0,0,0\n0,0,0\n").unwrap();
    let out = dir.path().join("out");
    let output = run(&[
        "pretrain",
        "--data",
        zeros.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_exit(&output, 4);
}

#[test]
fn pretrain_cluster_evaluate_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let (csv, label_column) = write_blobs(dir.path(), 90, 6, 31);
    let label_flag = label_column.to_string();
    let pre_out = dir.path().join("pre");
    let tiny = tiny_profile();

    let mut args = vec![
        "pretrain",
        "--data",
        csv.to_str().unwrap(),
        "--label-column",
        &label_flag,
        "--out",
        pre_out.to_str().unwrap(),
    ];
    args.extend(&tiny);
    let output = run(&args);
    assert_exit(&output, 0);
    let checkpoint = pre_out.join("checkpoint.bin");
    assert!(checkpoint.exists());
    assert!(pre_out.join("loss_trace.csv").exists());
    assert!(pre_out.join("manifest.txt").exists());

    let cluster_out = dir.path().join("cluster");
    let mut args = vec![
        "cluster",
        "--data",
        csv.to_str().unwrap(),
        "--label-column",
        &label_flag,
        "--checkpoint",
        checkpoint.to_str().unwrap(),
        "--k",
        "3",
        "--out",
        cluster_out.to_str().unwrap(),
    ];
    args.extend(&tiny);
    let output = run(&args);
    assert_exit(&output, 0);
    let assignments = cluster_out.join("assignments.csv");
    assert!(assignments.exists());
    assert!(cluster_out.join("history.jsonl").exists());

    let text = String::from_utf8(read(&assignments)).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("index,cluster"));
    assert_eq!(lines.count(), 90);

    let eval_out = dir.path().join("eval");
    let output = run(&[
        "evaluate",
        "--data",
        csv.to_str().unwrap(),
        "--label-column",
        &label_flag,
        "--assignments",
        assignments.to_str().unwrap(),
        "--out",
        eval_out.to_str().unwrap(),
    ]);
    assert_exit(&output, 0);
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("acc"), "stdout: {}", stdout);
    assert!(eval_out.join("report.txt").exists());
}

#[test]
fn evaluate_without_labels_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let dataset = data::make_blobs(30, 3, 4, 8.0, 0.5, 77).unwrap();
    let csv = dir.path().join("unlabeled.csv");
    data::save_csv(&csv, &dataset.features, None).unwrap();
    let fake = dir.path().join("assignments.csv");
    let mut body = String::from("index,cluster\n");
    for i in 0..30 {
        body.push_str(&format!("{},{}\n", i, i % 3));
    }
    std::fs::write(&fake, body).unwrap();
    let out = dir.path().join("out");
    let output = run(&[
        "evaluate",
        "--data",
        csv.to_str().unwrap(),
        "--assignments",
        fake.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_exit(&output, 2);
}

#[test]
fn same_seed_reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let (csv, label_column) = write_blobs(dir.path(), 80, 5, 41);
    let label_flag = label_column.to_string();
    let tiny = tiny_profile();

    let pre_out = dir.path().join("pre");
    let mut args = vec![
        "pretrain",
        "--data",
        csv.to_str().unwrap(),
        "--label-column",
        &label_flag,
        "--seed",
        "9",
        "--out",
        pre_out.to_str().unwrap(),
    ];
    args.extend(&tiny);
    assert_exit(&run(&args), 0);
    let checkpoint = pre_out.join("checkpoint.bin");

    let mut outputs = Vec::new();
    for name in ["a", "b"] {
        let out = dir.path().join(name);
        let mut args = vec![
            "cluster",
            "--data",
            csv.to_str().unwrap(),
            "--label-column",
            &label_flag,
            "--checkpoint",
            checkpoint.to_str().unwrap(),
            "--k",
            "3",
            "--seed",
            "9",
            "--out",
            out.to_str().unwrap(),
        ];
        args.extend(&tiny);
        assert_exit(&run(&args), 0);
        outputs.push(out);
    }
    assert_eq!(
        read(&outputs[0].join("assignments.csv")),
        read(&outputs[1].join("assignments.csv"))
    );
    assert_eq!(
        read(&outputs[0].join("checkpoint.bin")),
        read(&outputs[1].join("checkpoint.bin"))
    );
    assert_eq!(
        read(&outputs[0].join("history.jsonl")),
        read(&outputs[1].join("history.jsonl"))
    );
}

#[test]
fn manifest_rerun_reproduces_assignments() {
    let dir = tempfile::tempdir().unwrap();
    let (csv, label_column) = write_blobs(dir.path(), 70, 5, 53);
    let label_flag = label_column.to_string();
    let tiny = tiny_profile();

    let pre_out = dir.path().join("pre");
    let mut args = vec![
        "pretrain",
        "--data",
        csv.to_str().unwrap(),
        "--label-column",
        &label_flag,
        "--out",
        pre_out.to_str().unwrap(),
    ];
    args.extend(&tiny);
    assert_exit(&run(&args), 0);
    let checkpoint = pre_out.join("checkpoint.bin");

    let first = dir.path().join("first");
    let mut args = vec![
        "cluster",
        "--data",
        csv.to_str().unwrap(),
        "--label-column",
        &label_flag,
        "--checkpoint",
        checkpoint.to_str().unwrap(),
        "--k",
        "3",
        "--out",
        first.to_str().unwrap(),
    ];
    args.extend(&tiny);
    assert_exit(&run(&args), 0);

    // The manifest doubles as a config file; replaying it must reproduce
    // the run exactly (result./timing./artifact. lines are ignored).
    let manifest = first.join("manifest.txt");
    let second = dir.path().join("second");
    let output = run(&[
        "cluster",
        "--config",
        manifest.to_str().unwrap(),
        "--out",
        second.to_str().unwrap(),
    ]);
    assert_exit(&output, 0);
    assert_eq!(
        read(&first.join("assignments.csv")),
        read(&second.join("assignments.csv"))
    );
}

#[test]
fn kmeans_baseline_needs_no_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let (csv, label_column) = write_blobs(dir.path(), 60, 4, 67);
    let label_flag = label_column.to_string();
    let out = dir.path().join("out");
    let output = run(&[
        "cluster",
        "--data",
        csv.to_str().unwrap(),
        "--label-column",
        &label_flag,
        "--baseline",
        "kmeans",
        "--k",
        "3",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_exit(&output, 0);
    assert!(out.join("assignments.csv").exists());
    let manifest = String::from_utf8(read(&out.join("manifest.txt"))).unwrap();
    assert!(manifest.contains("result.inertia"), "manifest:\n{}", manifest);
}

#[test]
fn project_writes_two_dimensional_embedding() {
    let dir = tempfile::tempdir().unwrap();
    let (csv, label_column) = write_blobs(dir.path(), 60, 5, 71);
    let label_flag = label_column.to_string();
    let tiny = tiny_profile();

    let pre_out = dir.path().join("pre");
    let mut args = vec![
        "pretrain",
        "--data",
        csv.to_str().unwrap(),
        "--label-column",
        &label_flag,
        "--out",
        pre_out.to_str().unwrap(),
    ];
    args.extend(&tiny);
    assert_exit(&run(&args), 0);
    let checkpoint = pre_out.join("checkpoint.bin");

    let cluster_out = dir.path().join("cluster");
    let mut args = vec![
        "cluster",
        "--data",
        csv.to_str().unwrap(),
        "--label-column",
        &label_flag,
        "--checkpoint",
        checkpoint.to_str().unwrap(),
        "--k",
        "3",
        "--out",
        cluster_out.to_str().unwrap(),
    ];
    args.extend(&tiny);
    assert_exit(&run(&args), 0);

    let project_out = dir.path().join("proj");
    let output = run(&[
        "project",
        "--data",
        csv.to_str().unwrap(),
        "--label-column",
        &label_flag,
        "--checkpoint",
        cluster_out.join("checkpoint.bin").to_str().unwrap(),
        "--out",
        project_out.to_str().unwrap(),
    ]);
    assert_exit(&output, 0);
    let text = String::from_utf8(read(&project_out.join("projection.csv"))).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 60);
    for line in lines {
        assert_eq!(line.split(',').count(), 3, "line: {}", line);
    }
}

/// Seeds are stable across equal runs but each stream stays distinct; a
/// cheap guard that nothing reuses another phase's stream by accident.
#[test]
fn derived_streams_differ() {
    let mut a = RngState::new(7).derive(0);
    let mut b = RngState::new(7).derive(1);
    assert_ne!(a.next_u64(), b.next_u64());
}
