use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn kpa() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_kpa"));
    cmd.env_remove("KPA_SEED");
    cmd
}

fn run(args: &[&str]) -> Output {
    kpa().args(args).output().expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn json(out: &Output) -> Value {
    assert!(out.status.success(), "stderr: {}", stderr(out));
    serde_json::from_slice(&out.stdout).expect("valid JSON")
}

/// One line of the form `error[E_SOMETHING]: ...` and the given exit code.
fn assert_fails(out: &Output, code: i32, needle: &str) {
    assert_eq!(out.status.code(), Some(code), "stderr: {}", stderr(out));
    let err = stderr(out);
    assert_eq!(err.trim_end().lines().count(), 1, "{err}");
    assert!(err.starts_with("error[E_"), "{err}");
    assert!(err.contains(needle), "{err} lacks {needle:?}");
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn simulate_into(dir: &Path, extra: &[&str]) {
    let mut args = vec!["simulate", "--p", "0.5,0.3,0.2", "--q", "0.5", "--out", dir.to_str().unwrap()];
    args.extend_from_slice(extra);
    let out = run(&args);
    assert!(out.status.success(), "stderr: {}", stderr(&out));
}

#[test]
fn simulate_writes_log_and_state() {
    let tmp = tempfile::tempdir().unwrap();
    let run1 = tmp.path().join("run1");
    simulate_into(&run1, &["--theta", "0.5", "--T", "10000", "--seed", "42"]);
    for f in ["events.csv", "meta.json", "state.json"] {
        assert!(run1.join(f).is_file(), "{f}");
    }
    let events = fs::read_to_string(run1.join("events.csv")).unwrap();
    assert!(events.starts_with("t,v,g_w,g_u\n1,"));
    assert_eq!(events.lines().count(), 10_001);
    let state: Value = serde_json::from_str(&fs::read_to_string(run1.join("state.json")).unwrap()).unwrap();
    assert_eq!(state["t"], 10_000);
    let meta: Value = serde_json::from_str(&fs::read_to_string(run1.join("meta.json")).unwrap()).unwrap();
    assert_eq!(meta["sim"]["seed"], 42);
    assert_eq!(meta["per_group_initial"], serde_json::json!([5, 3, 2]));
}

#[test]
fn simulate_is_byte_identical_on_rerun() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for dir in [&a, &b] {
        simulate_into(dir, &["--theta", "0.5", "--T", "5000", "--seed", "42", "--graph"]);
    }
    for f in ["events.csv", "meta.json", "state.json", "edges.txt", "labels.txt"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn invalid_probabilities_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run(&["simulate", "--theta", "0.5", "--p", "0.5,0.6", "--q", "0.5", "--T", "10", "--out", tmp.path().to_str().unwrap()]);
    assert_fails(&out, 2, "p does not sum to 1");
    assert!(stderr(&out).starts_with("error[E_PARAMS]"));
}

#[test]
fn seed_sources_and_precedence() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("run.toml");
    fs::write(&cfg, "theta = 0.5\np = [0.5, 0.5]\nq = 0.5\nT = 500\nseed = 7\n").unwrap();
    let simulate_with = |dir: &str, env: Option<&str>, flag: Option<&str>| {
        let out_dir = tmp.path().join(dir);
        let mut cmd = kpa();
        cmd.args(["simulate", "--config", cfg.to_str().unwrap(), "--out", out_dir.to_str().unwrap()]);
        if let Some(s) = flag {
            cmd.args(["--seed", s]);
        }
        if let Some(s) = env {
            cmd.env("KPA_SEED", s);
        }
        assert!(cmd.output().unwrap().status.success());
        let meta: Value = serde_json::from_str(&fs::read_to_string(out_dir.join("meta.json")).unwrap()).unwrap();
        meta["sim"]["seed"].as_u64().unwrap()
    };
    assert_eq!(simulate_with("file", None, None), 7);
    assert_eq!(simulate_with("env", Some("99"), None), 99);
    assert_eq!(simulate_with("flag", Some("99"), Some("5")), 5);

    let bad = kpa()
        .args(["simulate", "--config", cfg.to_str().unwrap(), "--out", tmp.path().join("x").to_str().unwrap()])
        .env("KPA_SEED", "abc")
        .output()
        .unwrap();
    assert_fails(&bad, 2, "KPA_SEED");
}

#[test]
fn config_rejects_unknown_keys() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("run.toml");
    fs::write(&cfg, "theta = 0.5\nsigma = 2\n").unwrap();
    let out = run(&["simulate", "--config", cfg.to_str().unwrap()]);
    assert_fails(&out, 2, "sigma");
}

#[test]
fn estimate_recovers_theta() {
    let tmp = tempfile::tempdir().unwrap();
    simulate_into(tmp.path(), &["--theta", "0.5", "--T", "10000", "--seed", "42"]);
    let report = json(&run(&["estimate", tmp.path().to_str().unwrap(), "--json"]));
    let theta = report["theta_hat"].as_f64().unwrap();
    assert!((theta - 0.5).abs() < 0.03, "theta_hat = {theta}");
    let ci = &report["ci"]["theta"];
    assert!(ci["lower"].as_f64().unwrap() < theta && theta < ci["upper"].as_f64().unwrap());
    assert_eq!(report["method"], "history");

    let table = stdout(&run(&["estimate", tmp.path().join("events.csv").to_str().unwrap()]));
    assert!(table.lines().next().unwrap().contains("ci_lower"));
}

#[test]
fn estimate_flags_boundary_low() {
    let tmp = tempfile::tempdir().unwrap();
    let mut events = String::from("t,v,g_w,g_u\n");
    for t in 1..=20 {
        let g = t % 2 + 1;
        events.push_str(&format!("{t},{},{g},{g}\n", t % 2));
    }
    fs::write(tmp.path().join("events.csv"), events).unwrap();
    fs::write(tmp.path().join("meta.json"), r#"{"num_groups": 2, "n0": 4, "per_group_initial": [2, 2]}"#).unwrap();
    let report = json(&run(&["estimate", tmp.path().to_str().unwrap(), "--json"]));
    assert!(report["flags"].as_array().unwrap().contains(&Value::from("boundary_low")));
}

#[test]
fn corrupt_csv_names_line() {
    let tmp = tempfile::tempdir().unwrap();
    simulate_into(tmp.path(), &["--theta", "0.5", "--T", "50", "--seed", "1"]);
    let path = tmp.path().join("events.csv");
    let text = fs::read_to_string(&path).unwrap();
    let truncated: String = text.lines().take(11).map(|l| format!("{l}\n")).collect::<String>() + "11,1,2\n";
    fs::write(&path, truncated).unwrap();
    let out = run(&["estimate", tmp.path().to_str().unwrap()]);
    assert_fails(&out, 2, "line 12");
}

#[test]
fn snapshot_fixture_recovers_theta() {
    let dir = fixture("synthetic");
    let out = run(&[
        "snapshot",
        "--edges",
        dir.join("edges.txt").to_str().unwrap(),
        "--labels",
        dir.join("labels.txt").to_str().unwrap(),
        "--json",
    ]);
    let report = json(&out);
    let theta = report["estimate"]["theta_hat"].as_f64().unwrap();
    assert!((theta - 0.7).abs() <= 0.02, "theta_tilde = {theta}");
    assert_eq!(report["summary"]["edges"], 50_000);
}

#[test]
fn snapshot_fixture_is_reproducible_from_its_config() {
    let dir = fixture("synthetic");
    let tmp = tempfile::tempdir().unwrap();
    let out = run(&[
        "simulate",
        "--config",
        dir.join("params.toml").to_str().unwrap(),
        "--graph",
        "--out",
        tmp.path().to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    for f in ["edges.txt", "labels.txt"] {
        assert_eq!(fs::read(tmp.path().join(f)).unwrap(), fs::read(dir.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn snapshot_two_node_toy_and_unlabeled() {
    let tmp = tempfile::tempdir().unwrap();
    let edges = tmp.path().join("edges.txt");
    let labels = tmp.path().join("labels.txt");
    fs::write(&edges, "a b\n").unwrap();
    fs::write(&labels, "a 1\nb 2\n").unwrap();
    let report = json(&run(&["snapshot", "--edges", edges.to_str().unwrap(), "--labels", labels.to_str().unwrap(), "--json"]));
    assert_eq!(report["cross_edges_incident"], serde_json::json!([1, 1]));
    assert_eq!(report["summary"]["same_edges"], serde_json::json!([0, 0]));

    fs::write(&edges, "a b\nb ghost\n").unwrap();
    let out = run(&["snapshot", "--edges", edges.to_str().unwrap(), "--labels", labels.to_str().unwrap()]);
    assert_fails(&out, 2, "ghost");
}

#[test]
fn changepoint_detects_and_emits_curve() {
    let tmp = tempfile::tempdir().unwrap();
    simulate_into(tmp.path(), &["--theta", "0.1", "--theta2", "0.9", "--tau", "500", "--T", "1000", "--seed", "3"]);
    let curve = tmp.path().join("curve.csv");
    let report = json(&run(&[
        "changepoint",
        tmp.path().to_str().unwrap(),
        "--emit-curve",
        curve.to_str().unwrap(),
        "--json",
    ]));
    let tau = report["tau_hat"].as_i64().unwrap();
    assert!((tau - 500).abs() <= 20, "tau_hat = {tau}");
    let text = fs::read_to_string(&curve).unwrap();
    assert!(text.starts_with("tau,split_loglik\n200,"));
    assert!(text.lines().count() > 100);

    let out = run(&["changepoint", tmp.path().to_str().unwrap(), "--c0", "0.6"]);
    assert_fails(&out, 2, "c0");
}

#[test]
fn degdist_writes_histogram() {
    let tmp = tempfile::tempdir().unwrap();
    let csv = tmp.path().join("deg.csv");
    let report = json(&run(&[
        "degdist", "--theta", "0.5", "--p", "0.5,0.5", "--q", "0.5", "--T", "20000", "--seed", "2", "--csv",
        csv.to_str().unwrap(), "--json",
    ]));
    assert!((report["exponent"].as_f64().unwrap() - 7.0 / 3.0).abs() < 1e-5);
    assert_eq!(report["slopes"].as_array().unwrap().len(), 2);
    let text = fs::read_to_string(&csv).unwrap();
    assert!(text.starts_with("group,degree,count,per_step,expected\n1,1,"));

    let dir = fixture("synthetic");
    let from_graph = json(&run(&[
        "degdist",
        "--edges",
        dir.join("edges.txt").to_str().unwrap(),
        "--labels",
        dir.join("labels.txt").to_str().unwrap(),
        "--json",
    ]));
    assert!(from_graph["exponent"].is_null());
}

#[test]
fn trials_json_ignores_jobs() {
    let report = |jobs: &str| {
        stdout(&run(&[
            "--jobs", jobs, "trials", "--theta", "0.5", "--p", "0.5,0.3,0.2", "--q", "0.5", "--T", "2000", "--B", "8",
            "--seed", "11", "--json",
        ]))
    };
    let one = report("1");
    assert!(one.contains("\"aggregate\""));
    assert_eq!(one, report("4"));
}

#[test]
fn selftest_passes() {
    let out = run(&["selftest"]);
    assert!(out.status.success(), "{}", stdout(&out));
    assert!(!stdout(&out).contains("FAIL"));
}

#[test]
fn usage_errors_are_single_line() {
    assert_fails(&run(&["frobnicate"]), 2, "frobnicate");
    assert_fails(&run(&["estimate"]), 2, "required");
    assert_fails(&run(&["estimate", "/nonexistent/run"]), 3, "E_IO");
}
