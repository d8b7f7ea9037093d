use std::fs;
use std::process::{Command, Output};

fn infomarket(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_infomarket")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn solve_mvp_prints_equilibrium() {
    let o = infomarket(&["solve", "--market", "mvp", "--lambda", "2", "--v", "0,2,3"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let j: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert!((j["effort"].as_f64().unwrap() - 0.364519).abs() < 1e-6);
    assert_eq!(j["corner"], false);
}

#[test]
fn solve_from_noise_model() {
    let o = infomarket(&["solve", "--market", "pm-race", "--alpha", "0.1", "--beta", "0", "--scale", "20"]);
    assert!(o.status.success());
    let j: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert!((j["effort"].as_f64().unwrap() - 0.9).abs() < 1e-9);
}

#[test]
fn figure_writes_csv_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("eas");
    let o = infomarket(&["figure", "fig_eas", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(out.join("fig_eas.csv")).unwrap();
    assert!(csv.starts_with("lambda,mvp_effort,mvp_residual,mvp_corner,pm_effort,pm_residual\n"));
    let row = csv.lines().find(|l| l.starts_with("1,")).unwrap();
    let effort: f64 = row.split(',').nth(1).unwrap().parse().unwrap();
    assert!((effort - 0.290773).abs() < 1e-6);
    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["experiment"], "fig_eas");

    let again = dir.path().join("eas2");
    assert!(infomarket(&["figure", "fig_eas", "--out", again.to_str().unwrap()]).status.success());
    assert_eq!(csv, fs::read_to_string(again.join("fig_eas.csv")).unwrap());
}

#[test]
fn run_config_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("subst.toml");
    let out = dir.path().join("subst");
    fs::write(
        &config,
        format!("experiment = \"fig_subst\"\noutput_path = \"{}\"\n[parameters]\nlambdas = [8.0]\n", out.display()),
    )
    .unwrap();
    let o = infomarket(&["run", config.to_str().unwrap(), "--lambda", "1"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(out.join("fig_subst.csv")).unwrap();
    let header = csv.lines().next().unwrap();
    assert_eq!(header, "v1,pm_effort,pm_residual,mvp_lambda_1_effort,mvp_lambda_1_residual");
    assert!(csv.lines().any(|l| l.starts_with("2,0.5,0,0.207106781")));
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(infomarket(&["figure", "fig_nine"]).status.code(), Some(2));
    assert_eq!(infomarket(&["solve"]).status.code(), Some(2));
    assert_eq!(infomarket(&["solve", "--market", "mvp"]).status.code(), Some(2));
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "experiment = \"fig_eas\"\n[parameters]\nlamda = [1.0]\n").unwrap();
    assert_eq!(infomarket(&["run", bad.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn settle_fpm_from_json() {
    let dir = tempfile::tempdir().unwrap();
    let batch = dir.path().join("batch.json");
    fs::write(&batch, r#"{"reports": [[0.8], [0.5]], "outcome": 1}"#).unwrap();
    let o = infomarket(&["settle-fpm", batch.to_str().unwrap(), "--prior", "0.98,0.02"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let j: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    let rewards = j["rewards"].as_array().unwrap();
    assert_eq!(rewards[1].as_f64().unwrap(), 0.0);
    assert!(rewards[0].as_f64().unwrap() > 0.0);
}

#[test]
fn settle_fpm_rejects_out_of_range_report() {
    let dir = tempfile::tempdir().unwrap();
    let batch = dir.path().join("batch.json");
    fs::write(&batch, r#"{"reports": [[1.5]], "outcome": 1}"#).unwrap();
    assert_eq!(infomarket(&["settle-fpm", batch.to_str().unwrap(), "--prior", "0.5,0.5"]).status.code(), Some(2));
}

#[test]
fn settle_mvp_stream_with_trace() {
    let dir = tempfile::tempdir().unwrap();
    let stream = dir.path().join("reports.csv");
    let trace = dir.path().join("trace.csv");
    fs::write(&stream, "agent_id,time,b_1\n0,1.0,0.8\n1,2.0,0.8\n").unwrap();
    let o = infomarket(&[
        "settle-mvp",
        stream.to_str().unwrap(),
        "--prior",
        "0.98,0.02",
        "--outcome",
        "1",
        "--trace",
        trace.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let out = stdout(&o);
    assert!(out.starts_with("agent_id,reward\n0,"));
    assert_eq!(out.lines().count(), 3);
    let trace = fs::read_to_string(trace).unwrap();
    assert!(trace.starts_with("time,p_1,p_2\n"));
    assert_eq!(trace.lines().count(), 4);
}

#[test]
fn settle_mvp_rejects_double_report() {
    let dir = tempfile::tempdir().unwrap();
    let stream = dir.path().join("reports.csv");
    fs::write(&stream, "0,1.0,0.8\n0,2.0,0.8\n").unwrap();
    let o = infomarket(&["settle-mvp", stream.to_str().unwrap(), "--prior", "0.98,0.02", "--outcome", "1"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn simulate_is_deterministic_and_logs_trials() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("trials.csv");
    let args = [
        "simulate", "--mechanism", "mvp", "--alpha", "0.3", "--beta", "0.2", "--effort", "0.3", "--lambda", "2",
        "--trials", "2000", "--seed", "9",
    ];
    let a = infomarket(&args);
    assert!(a.status.success(), "{}", String::from_utf8_lossy(&a.stderr));
    let mut with_log = args.to_vec();
    with_log.extend(["--trial-log", log.to_str().unwrap()]);
    let b = infomarket(&with_log);
    assert_eq!(stdout(&a), stdout(&b));
    assert_eq!(fs::read_to_string(&log).unwrap().lines().count(), 2001);
    let j: serde_json::Value = serde_json::from_str(&stdout(&a)).unwrap();
    assert_eq!(j["trials"], 2000);
}

#[test]
fn simulate_deviation() {
    let o = infomarket(&[
        "simulate", "--mechanism", "mvp", "--alpha", "0.3", "--beta", "0.2", "--effort", "0.3", "--lambda", "2",
        "--trials", "500", "--deviant", "0", "--deviation", "truthful",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let j: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(j["utility_delta_mean"].as_f64().unwrap(), 0.0);
    let o = infomarket(&[
        "simulate", "--mechanism", "mvp", "--alpha", "0.3", "--beta", "0.2", "--effort", "0.3", "--deviant", "0",
        "--deviation", "sulk",
    ]);
    assert_eq!(o.status.code(), Some(2));
}
