//! End-to-end checks of the `cfbalance` binary: exit codes, file outputs,
//! and determinism.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use ndarray::{Array1, Array2};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_cfbalance"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary should spawn")
}

#[test]
fn simulate_writes_three_files_with_requested_rows() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("d1");
    let res = run(&[
        "simulate",
        "--generator",
        "linear",
        "--n",
        "1500",
        "--p",
        "100",
        "--seed",
        "7",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let dataset = fs::read_to_string(out.join("dataset.csv")).unwrap();
    assert_eq!(dataset.lines().count(), 1501, "header plus 1500 data rows");
    assert!(out.join("potential_outcomes.csv").exists());
    let meta: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("metadata.json")).unwrap()).unwrap();
    assert_eq!(meta["generator"], "linear");
    assert_eq!(meta["seed"], 7);
    assert_eq!(meta["prng"], "chacha20/rand_chacha-0.9");
}

#[test]
fn simulate_is_deterministic_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let res = run(&[
            "simulate",
            "--generator",
            "complex",
            "--n",
            "200",
            "--p",
            "12",
            "--seed",
            "9",
            "--out",
            out.to_str().unwrap(),
        ]);
        assert!(res.status.success());
    }
    for file in ["dataset.csv", "potential_outcomes.csv", "metadata.json"] {
        assert_eq!(
            fs::read(a.join(file)).unwrap(),
            fs::read(b.join(file)).unwrap(),
            "{file} differs"
        );
    }
}

#[test]
fn simulate_env_seed_fallback() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("env"), dir.path().join("flag"));
    let res = bin()
        .env("CFBALANCE_SEED", "31")
        .args(["simulate", "--generator", "linear", "--n", "60", "--p", "10"])
        .args(["--out", a.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(res.status.success());
    let res = run(&[
        "simulate", "--generator", "linear", "--n", "60", "--p", "10", "--seed", "31", "--out",
        b.to_str().unwrap(),
    ]);
    assert!(res.status.success());
    assert_eq!(
        fs::read(a.join("dataset.csv")).unwrap(),
        fs::read(b.join("dataset.csv")).unwrap()
    );
}

#[test]
fn simulate_rejects_bad_flags_with_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x");
    let res = run(&[
        "simulate",
        "--generator",
        "ihdp",
        "--n",
        "100",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(res.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&res.stderr).contains("747"));

    let res = run(&[
        "simulate",
        "--generator",
        "nope",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(res.status.code(), Some(2));

    // Missing required flag is a clap usage error.
    let res = run(&["simulate", "--generator", "linear"]);
    assert_eq!(res.status.code(), Some(2));
}

#[test]
fn estimate_requires_train_flag() {
    let res = run(&["estimate", "--method", "olsr"]);
    assert_eq!(res.status.code(), Some(2));
    let err = String::from_utf8_lossy(&res.stderr);
    assert!(err.contains("--train"), "stderr: {err}");
}

/// Write a noiseless linear dataset to CSV, returning the known effect.
fn write_linear_csv(path: &Path, n: usize, d: usize, seed: u64) -> f64 {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let x = Array2::from_shape_fn((n, d), |_| rng.sample::<f64, _>(rand_distr::StandardNormal));
    let beta = Array1::from_iter((1..=d).map(|j| 1.0 / j as f64));
    let mut csv = String::from("y,w");
    for j in 1..=d {
        csv.push_str(&format!(",x{j}"));
    }
    csv.push('\n');
    for i in 0..n {
        let w = u8::from(rng.random::<f64>() < 0.5);
        let y = x.row(i).dot(&beta) + 10.0 * f64::from(w);
        csv.push_str(&format!("{y},{w}"));
        for j in 0..d {
            csv.push_str(&format!(",{}", x[[i, j]]));
        }
        csv.push('\n');
    }
    fs::write(path, csv).unwrap();
    10.0
}

#[test]
fn estimate_end_to_end_recovers_constant_effect() {
    let dir = tempfile::tempdir().unwrap();
    let train = dir.path().join("train.csv");
    let predict = dir.path().join("new.csv");
    let effect = write_linear_csv(&train, 400, 8, 5);
    write_linear_csv(&predict, 50, 8, 6);

    let model_out = dir.path().join("model.json");
    let pred_out = dir.path().join("tau.csv");
    let res = run(&[
        "estimate",
        "--train",
        train.to_str().unwrap(),
        "--method",
        "olsr",
        "--seed",
        "3",
        "--model-out",
        model_out.to_str().unwrap(),
        "--predict",
        predict.to_str().unwrap(),
        "--predictions-out",
        pred_out.to_str().unwrap(),
    ]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));

    let model: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&model_out).unwrap()).unwrap();
    assert_eq!(model["version"], "cfbalance-model/1");
    assert_eq!(model["method"], "olsr");

    let pred = fs::read_to_string(&pred_out).unwrap();
    let mut lines = pred.lines();
    assert_eq!(lines.next(), Some("tau_hat"));
    let taus: Vec<f64> = lines.map(|l| l.parse().unwrap()).collect();
    assert_eq!(taus.len(), 50);
    for t in &taus {
        assert!(
            (t - effect).abs() < 0.2,
            "estimated effect {t} too far from {effect}"
        );
    }
}

#[test]
fn estimate_defaults_and_bound_report() {
    let dir = tempfile::tempdir().unwrap();
    let train = dir.path().join("train.csv");
    write_linear_csv(&train, 150, 6, 11);
    let model_out = dir.path().join("model.json");
    let bound_out = dir.path().join("bounds.json");
    // Method defaults to algo2 with the L-infinity norm.
    let res = run(&[
        "estimate",
        "--train",
        train.to_str().unwrap(),
        "--seed",
        "4",
        "--folds",
        "4",
        "--grid-size",
        "15",
        "--model-out",
        model_out.to_str().unwrap(),
        "--bound-report",
        bound_out.to_str().unwrap(),
    ]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));

    let model: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&model_out).unwrap()).unwrap();
    assert_eq!(model["method"], "algo2");
    assert_eq!(model["config"]["balance"]["norm"], "linf");
    assert_eq!(model["config"]["alpha"], 0.9);
    assert_eq!(model["config"]["balance"]["xi"], 0.5);

    let bounds: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&bound_out).unwrap()).unwrap();
    assert!(bounds["treated"]["anchored"]["delta_sf"].as_f64().unwrap().is_finite());
    assert_eq!(bounds["coefficient_scale"], "original");
}

#[test]
fn estimate_rejects_bad_numeric_flags() {
    let dir = tempfile::tempdir().unwrap();
    let train = dir.path().join("train.csv");
    write_linear_csv(&train, 60, 4, 2);
    let res = run(&[
        "estimate",
        "--train",
        train.to_str().unwrap(),
        "--xi",
        "1.5",
    ]);
    assert_eq!(res.status.code(), Some(2));
}

#[test]
fn estimate_missing_file_is_runtime_error() {
    let res = run(&["estimate", "--train", "/nonexistent/file.csv"]);
    assert_eq!(res.status.code(), Some(1));
}

#[test]
fn benchmark_structure_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let res = run(&[
            "benchmark",
            "--suite",
            "data3",
            "--replications",
            "1",
            "--seed",
            "5",
            "--jobs",
            "2",
            "--out",
            out.to_str().unwrap(),
        ]);
        assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    }
    let report = fs::read_to_string(a.join("report.csv")).unwrap();
    let lines: Vec<&str> = report.lines().collect();
    assert_eq!(lines[0], "method,dataset,mean_pehe,sd_pehe,replications");
    assert_eq!(lines.len(), 6, "five method rows: {report}");
    for name in ["algo1-l2", "algo1-linf", "algo2-l2", "algo2-linf", "olsr"] {
        assert!(report.contains(name), "missing {name}");
    }
    assert_eq!(
        fs::read(a.join("report.csv")).unwrap(),
        fs::read(b.join("report.csv")).unwrap(),
        "reports differ between identical runs"
    );
    let json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(a.join("report.json")).unwrap()).unwrap();
    assert_eq!(json["flags"]["seed"], 5);
    assert_eq!(json["flags"]["replications"], 1);

    let res = run(&["benchmark", "--suite", "data9"]);
    assert_eq!(res.status.code(), Some(2));
}
