use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use magmaclust::data::read_csv;
use magmaclust::{predict, train, Dataset, HypothesisRegime, InitConfig, PredictConfig, StopConfig, TrainingState};
use serde_json::Value;
use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_magmaclust"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}{}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

/// Small main-scheme data set with held-out individuals.
fn small_sim(dir: &Path, seed: &str, regime: &str) {
    ok(&[
        "simulate", "--seed", seed, "--m", "16", "--n-pool", "40", "--n-i", "12", "--k", "2", "--regime", regime,
        "--n-new", "2", "--n-obs", "8", "--out", p(dir),
    ]);
}

#[test]
fn simulate_is_deterministic() {
    let (a, b) = (TempDir::new().unwrap(), TempDir::new().unwrap());
    small_sim(a.path(), "7", "H00");
    small_sim(b.path(), "7", "H00");
    for f in ["data.csv", "truth.json", "new_obs.csv", "new_test.csv", "manifest.json"] {
        assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f}");
    }
}

#[test]
fn scheme_a_is_fifty_by_thirty() {
    let d = TempDir::new().unwrap();
    ok(&["simulate", "--scheme", "a", "--out", p(d.path())]);
    let inds = read_csv(fs::File::open(d.path().join("data.csv")).unwrap()).unwrap();
    assert_eq!(inds.len(), 50);
    assert!(inds.iter().all(|i| i.t == inds[0].t && i.len() == 30));
}

#[test]
fn missing_output_dir_is_a_usage_error() {
    let out = run(&["simulate", "--out", "/nonexistent/magmaclust/out"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("does not exist"));
}

#[test]
fn bad_flag_is_a_usage_error() {
    assert_eq!(run(&["train", "--nope"]).status.code(), Some(1));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
}

#[test]
fn malformed_csv_cites_the_line() {
    let d = TempDir::new().unwrap();
    let data = d.path().join("bad.csv");
    fs::write(&data, "id,t,y\na,0,1\na,1,oops\n").unwrap();
    let out = run(&["train", "--data", p(&data), "--k", "1", "--out", p(d.path())]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 3"), "{err}");
}

#[test]
fn train_outputs_and_single_cluster() {
    let d = TempDir::new().unwrap();
    small_sim(d.path(), "3", "H00");
    let data = d.path().join("data.csv");
    ok(&["train", "--data", p(&data), "--k", "1", "--out", p(d.path())]);
    let report = json(&d.path().join("report.json"));
    assert_eq!(report["k"], 1);
    assert!(report["iterations"].as_u64().unwrap() <= 25);
    assert!(report["elbo"].as_f64().unwrap().is_finite());
    let state = TrainingState::load(d.path().join("model.json")).unwrap();
    assert_eq!(state.posterior.clusters.len(), 1);
    let tau = fs::read_to_string(d.path().join("tau.csv")).unwrap();
    assert!(tau.starts_with("id,k1\n"));
    assert_eq!(tau.lines().count(), 17);
    let trace = fs::read_to_string(d.path().join("elbo_trace.csv")).unwrap();
    assert!(trace.starts_with("iteration,step,elbo\n1,e_step_mu,"));
}

#[test]
fn cli_prediction_matches_in_process_bit_for_bit() {
    let d = TempDir::new().unwrap();
    small_sim(d.path(), "11", "H00");
    let data = d.path().join("data.csv");
    ok(&["train", "--data", p(&data), "--k", "2", "--seed", "5", "--out", p(d.path())]);
    let stdout = ok(&[
        "predict", "--model", p(&d.path().join("model.json")), "--obs", p(&d.path().join("new_obs.csv")),
        "--id", "new000", "--targets", p(&d.path().join("new_test.csv")), "--out", p(d.path()),
    ]);
    assert!(stdout.contains("Shortcut3bis"), "{stdout}");

    let inds = read_csv(fs::File::open(&data).unwrap()).unwrap();
    let state = train(
        &Dataset::new(inds).unwrap(),
        2,
        HypothesisRegime::H00,
        &InitConfig::with_seed(5),
        &StopConfig::default(),
    )
    .unwrap();
    let obs = read_csv(fs::File::open(d.path().join("new_obs.csv")).unwrap()).unwrap().remove(0);
    let test = read_csv(fs::File::open(d.path().join("new_test.csv")).unwrap()).unwrap().remove(0);
    let want = predict(&state, &obs.t, &obs.y, &test.t, &PredictConfig::default()).unwrap();

    let got = json(&d.path().join("prediction.json"));
    let mean: Vec<f64> = serde_json::from_value(got["mixture_mean"].clone()).unwrap();
    let tau: Vec<f64> = serde_json::from_value(got["tau"].clone()).unwrap();
    assert_eq!(mean, want.mixture.mean());
    assert_eq!(tau, want.new.tau);
    for (k, c) in want.mixture.clusters.iter().enumerate() {
        let var: Vec<f64> = serde_json::from_value(got["clusters"][k]["var_diag"].clone()).unwrap();
        assert_eq!(var, c.cov.diagonal().as_slice());
    }
    assert!(got["scores"]["mse"].as_f64().unwrap() >= 0.0);
}

#[test]
fn individual_specific_model_runs_prediction_em() {
    let d = TempDir::new().unwrap();
    small_sim(d.path(), "4", "Hki");
    ok(&["train", "--data", p(&d.path().join("data.csv")), "--k", "2", "--regime", "Hki", "--out", p(d.path())]);
    let stdout = ok(&[
        "predict", "--model", p(&d.path().join("model.json")), "--obs", p(&d.path().join("new_obs.csv")),
        "--id", "new001", "--t-grid", "0:10:7", "--heatmap", "--collapse", "--out", p(d.path()),
    ]);
    assert!(stdout.contains("prediction path: Em"), "{stdout}");
    let pred = json(&d.path().join("prediction.json"));
    assert_eq!(pred["method"], "em");
    assert!(pred["iterations"].as_u64().unwrap() >= 1);
    assert_eq!(pred["t"].as_array().unwrap().len(), 7);
    assert_eq!(pred["heatmap"]["y"].as_array().unwrap().len(), 100);
    let heat = fs::read_to_string(d.path().join("heatmap.csv")).unwrap();
    assert_eq!(heat.lines().count(), 101);
    let collapsed = json(&d.path().join("collapsed.json"));
    assert_eq!(collapsed["cluster"], pred["most_probable"]);
}

#[test]
fn select_k_table_and_normalized_range() {
    let d = TempDir::new().unwrap();
    small_sim(d.path(), "2", "H00");
    let data = d.path().join("data.csv");
    let stdout = ok(&["select-k", "--data", p(&data), "--k-range", "3..1", "--out", p(d.path())]);
    assert!(stdout.contains("VBIC"));
    let sel = json(&d.path().join("selection.json"));
    let ks: Vec<u64> = sel["rows"].as_array().unwrap().iter().map(|r| r["k"].as_u64().unwrap()).collect();
    assert_eq!(ks, vec![1, 2, 3]);
    let flagged: Vec<u64> =
        sel["rows"].as_array().unwrap().iter().filter(|r| r["selected"] == true).map(|r| r["k"].as_u64().unwrap()).collect();
    assert_eq!(flagged, vec![sel["selected"].as_u64().unwrap()]);
    assert!(d.path().join("model.json").exists());

    ok(&["select-k", "--data", p(&data), "--k-range", "2", "--out", p(d.path())]);
    assert_eq!(json(&d.path().join("selection.json"))["selected"], 2);
}

#[test]
fn evaluate_perfect_prediction_and_missing_truth() {
    let d = TempDir::new().unwrap();
    small_sim(d.path(), "9", "H00");
    ok(&["train", "--data", p(&d.path().join("data.csv")), "--k", "2", "--out", p(d.path())]);
    ok(&[
        "predict", "--model", p(&d.path().join("model.json")), "--obs", p(&d.path().join("new_obs.csv")),
        "--id", "new000", "--t-pred", "1.5,4,8.25", "--out", p(d.path()),
    ]);
    let pred = json(&d.path().join("prediction.json"));
    let mut csv = String::from("id,t,y\n");
    for (t, y) in pred["t"].as_array().unwrap().iter().zip(pred["mixture_mean"].as_array().unwrap()) {
        csv += &format!("new000,{t},{y}\n");
    }
    let truth = d.path().join("perfect.csv");
    fs::write(&truth, csv).unwrap();
    let metrics = d.path().join("metrics.json");
    ok(&["evaluate", "--prediction", p(&d.path().join("prediction.json")), "--truth", p(&truth), "--out", p(&metrics)]);
    assert_eq!(json(&metrics)["mse"], 0.0);

    let out = run(&["evaluate", "--prediction", p(&d.path().join("prediction.json")), "--truth", "/nonexistent.csv"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(run(&["evaluate"]).status.code(), Some(1));
}

#[test]
fn evaluate_ari_on_separated_data() {
    let d = TempDir::new().unwrap();
    ok(&["simulate", "--seed", "0", "--out", p(d.path())]);
    ok(&["train", "--data", p(&d.path().join("data.csv")), "--k", "3", "--out", p(d.path())]);
    let metrics = d.path().join("metrics.json");
    ok(&[
        "evaluate", "--model", p(&d.path().join("model.json")), "--labels", p(&d.path().join("truth.json")),
        "--out", p(&metrics),
    ]);
    assert_eq!(json(&metrics)["ari"], 1.0);
}

#[test]
fn thread_cap_is_accepted() {
    let d = TempDir::new().unwrap();
    ok(&["--threads", "1", "simulate", "--m", "4", "--n-pool", "10", "--n-i", "5", "--out", p(d.path())]);
    assert_eq!(run(&["--threads", "0", "simulate", "--out", p(d.path())]).status.code(), Some(1));
}
