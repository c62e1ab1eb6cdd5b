//! End-to-end checks of the `eftc` binary: the thread-count determinism
//! criterion, exit-code conventions, and the published scenario sizes.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn eftc() -> Command {
    Command::new(env!("CARGO_BIN_EXE_eftc"))
}

fn run_ok(args: &[&str]) -> Output {
    let out = eftc().args(args).output().expect("binary runs");
    assert!(
        out.status.success(),
        "command {:?} failed: {}",
        args,
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

#[test]
fn bench_runs_are_byte_identical_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("config.json");
    fs::write(
        &config,
        r#"{"methods":["tree","forest","knn"],"repetitions":3,"master_seed":7,
            "ranges":{"n_trees":20,"rounds":5}}"#,
    )
    .unwrap();
    let out1 = dir.path().join("runs_t1.csv");
    let out8 = dir.path().join("runs_t8.csv");
    run_ok(&[
        "bench",
        "--config",
        config.to_str().unwrap(),
        "--data",
        "scenario:1",
        "--out",
        out1.to_str().unwrap(),
        "--threads",
        "1",
    ]);
    run_ok(&[
        "bench",
        "--config",
        config.to_str().unwrap(),
        "--data",
        "scenario:1",
        "--out",
        out8.to_str().unwrap(),
        "--threads",
        "8",
    ]);
    let b1 = fs::read(&out1).unwrap();
    let b8 = fs::read(&out8).unwrap();
    assert_eq!(
        b1, b8,
        "runs.csv differs between --threads 1 and --threads 8"
    );
    println!("ACCEPTANCE 7 (bench byte-identical at 1 vs 8 threads): PASS");
}

#[test]
fn simulate_writes_published_scenario_sizes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("s4");
    run_ok(&[
        "simulate",
        "--scenario",
        "4",
        "--seed",
        "3",
        "--out",
        out.to_str().unwrap(),
    ]);
    let train = fs::read_to_string(out.join("train.tsv")).unwrap();
    assert_eq!(train.lines().count(), 200);
    let test = fs::read_to_string(out.join("test.tsv")).unwrap();
    assert_eq!(test.lines().count(), 200);
}

fn prepare_matrix(dir: &Path) -> (String, String) {
    let s1 = dir.join("s1");
    run_ok(&[
        "simulate",
        "--scenario",
        "1",
        "--seed",
        "11",
        "--out",
        s1.to_str().unwrap(),
    ]);
    let train_csv = dir.join("train.csv");
    run_ok(&[
        "enrich",
        "--in",
        s1.join("train.tsv").to_str().unwrap(),
        "--out",
        train_csv.to_str().unwrap(),
    ]);
    let test_csv = dir.join("test.csv");
    run_ok(&[
        "enrich",
        "--in",
        s1.join("test.tsv").to_str().unwrap(),
        "--out",
        test_csv.to_str().unwrap(),
    ]);
    (
        train_csv.to_string_lossy().into_owned(),
        test_csv.to_string_lossy().into_owned(),
    )
}

#[test]
fn evaluate_prints_perfect_accuracy_on_training_matrix() {
    let dir = tempfile::tempdir().unwrap();
    let (train_csv, _) = prepare_matrix(dir.path());
    let model = dir.path().join("tree.json");
    run_ok(&[
        "train",
        "--matrix",
        &train_csv,
        "--method",
        "tree",
        "--params",
        r#"{"max_depth":25}"#,
        "--model-out",
        model.to_str().unwrap(),
    ]);
    // An unpruned tree memorizes its training matrix.
    let out = run_ok(&[
        "evaluate",
        "--model",
        model.to_str().unwrap(),
        "--matrix",
        &train_csv,
    ]);
    let text = String::from_utf8_lossy(&out.stdout);
    assert_eq!(text.trim(), "1.000000", "evaluate printed {text:?}");
}

#[test]
fn explain_subcommands_produce_csv() {
    let dir = tempfile::tempdir().unwrap();
    let (train_csv, _) = prepare_matrix(dir.path());
    let model = dir.path().join("forest.json");
    run_ok(&[
        "train",
        "--matrix",
        &train_csv,
        "--method",
        "forest",
        "--params",
        r#"{"n_trees":10,"max_depth":6}"#,
        "--model-out",
        model.to_str().unwrap(),
    ]);
    let sep = dir.path().join("sep.csv");
    run_ok(&[
        "explain",
        "sep-curve",
        "--model",
        model.to_str().unwrap(),
        "--matrix",
        &train_csv,
        "--path",
        "L",
        "--out",
        sep.to_str().unwrap(),
    ]);
    let sep_text = fs::read_to_string(&sep).unwrap();
    assert!(sep_text.starts_with("t,block,value\n"));
    assert!(sep_text.lines().count() > 1);

    let imp = dir.path().join("imp.csv");
    run_ok(&[
        "explain",
        "importance",
        "--matrix",
        &train_csv,
        "--feature",
        "0",
        "--policy",
        "corr:0.7",
        "--reps",
        "3",
        "--method",
        "tree",
        "--out",
        imp.to_str().unwrap(),
    ]);
    let imp_text = fs::read_to_string(&imp).unwrap();
    assert!(imp_text.contains("corr_0.7"));
}

#[test]
fn exit_codes_follow_convention() {
    // Validation error: unknown scenario id -> 2.
    let out = eftc()
        .args([
            "simulate",
            "--scenario",
            "9",
            "--seed",
            "0",
            "--out",
            "/tmp/x",
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2), "invalid scenario must exit 2");

    // Validation error: bad method name -> 2.
    let dir = tempfile::tempdir().unwrap();
    let (train_csv, _) = prepare_matrix(dir.path());
    let out = eftc()
        .args([
            "train",
            "--matrix",
            &train_csv,
            "--method",
            "perceptron",
            "--model-out",
            "/tmp/m.json",
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2), "unknown method must exit 2");

    // Runtime error: missing file -> 1.
    let out = eftc()
        .args([
            "evaluate",
            "--model",
            "/nonexistent/model.json",
            "--matrix",
            &train_csv,
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1), "missing model must exit 1");

    // Success -> 0 (covered throughout, asserted once explicitly).
    let out = eftc().args(["--help"]).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn bench_reads_dataset_directories() {
    let dir = tempfile::tempdir().unwrap();
    let s3 = dir.path().join("s3");
    run_ok(&[
        "simulate",
        "--scenario",
        "3",
        "--seed",
        "5",
        "--out",
        s3.to_str().unwrap(),
    ]);
    let config = dir.path().join("config.json");
    fs::write(
        &config,
        r#"{"methods":["tree"],"repetitions":2,"master_seed":2}"#,
    )
    .unwrap();
    let runs = dir.path().join("runs.csv");
    run_ok(&[
        "bench",
        "--config",
        config.to_str().unwrap(),
        "--data",
        s3.to_str().unwrap(),
        "--out",
        runs.to_str().unwrap(),
    ]);
    let records = eftc_core::dataio::load_runs(&runs).unwrap();
    assert_eq!(records.len(), 4);
    assert_eq!(records[0].dataset, "train");
}

#[test]
fn bench_output_round_trips_through_the_loader() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("config.json");
    fs::write(
        &config,
        r#"{"methods":["knn"],"repetitions":2,"master_seed":1}"#,
    )
    .unwrap();
    let runs = dir.path().join("runs.csv");
    run_ok(&[
        "bench",
        "--config",
        config.to_str().unwrap(),
        "--data",
        "scenario:2",
        "--out",
        runs.to_str().unwrap(),
    ]);
    let records = eftc_core::dataio::load_runs(&runs).unwrap();
    assert_eq!(records.len(), 4); // 1 method x 2 variants x 2 reps
    assert!(records.iter().all(|r| (0.0..=1.0).contains(&r.accuracy)));
    assert!(records.iter().all(|r| r.dataset == "scenario2"));
}
