use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn stratmatch(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_stratmatch"))
        .args(args)
        .current_dir(cwd)
        .env("RUST_LOG", "error")
        .output()
        .unwrap()
}

fn error_record(out: &Output) -> serde_json::Value {
    let stderr = String::from_utf8_lossy(&out.stderr);
    let line = stderr.lines().last().expect("error line on stderr");
    serde_json::from_str(line).unwrap_or_else(|_| panic!("not a JSON record: {stderr}"))
}

fn small_dataset(dir: &Path) {
    let out = stratmatch(&["gen", "--seed", "2", "--n-treated", "20", "--n-control", "480", "--output", "d.csv"], dir);
    assert!(out.status.success());
}

#[test]
fn minimal_six_row_dataset() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("six.csv"),
        "x,treatment,outcome\n0.10,1,2.0\n0.20,0,1.0\n0.30,0,1.5\n0.55,1,3.0\n0.60,0,2.0\n0.90,0,2.5\n",
    )
    .unwrap();
    let out = stratmatch(&["estimate", "--data", "six.csv", "--out", "o"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("o/report.json")).unwrap()).unwrap();
    assert_eq!(report["payload"]["tree"]["kind"], "leaf");
    let units = report["payload"]["report"]["units"].as_array().unwrap();
    assert_eq!(units.len(), 2);
    assert!(units.iter().all(|u| !u["matched"].as_array().unwrap().is_empty()));
    let audit = fs::read_to_string(dir.path().join("o/audit.jsonl")).unwrap();
    assert_eq!(audit.lines().count(), 2);
    assert!(dir.path().join("o/tree.txt").exists());
    assert!(dir.path().join("o/summary.txt").exists());
}

#[test]
fn missing_outcome_column() {
    let dir = tempfile::tempdir().unwrap();
    small_dataset(dir.path());
    let out = stratmatch(&["estimate", "--data", "d.csv", "--outcome", "y"], dir.path());
    assert_eq!(out.status.code(), Some(3));
    let rec = error_record(&out);
    assert_eq!(rec["error"], "NamedColumnAbsent");
    assert_eq!(rec["path"], "d.csv");
}

#[test]
fn malformed_cell_reports_line() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("bad.csv"), "x,treatment,outcome\n0.1,1,2\n0.2,0,abc\n").unwrap();
    let out = stratmatch(&["estimate", "--data", "bad.csv"], dir.path());
    assert_eq!(out.status.code(), Some(3));
    let rec = error_record(&out);
    assert_eq!(rec["error"], "ParseFailure");
    assert_eq!(rec["line"], 3);
}

#[test]
fn config_error_exit_code_and_line() {
    let dir = tempfile::tempdir().unwrap();
    small_dataset(dir.path());
    fs::write(dir.path().join("c.toml"), "seed = 1\n[pipeline]\npsi = -3\n").unwrap();
    let out = stratmatch(&["--config", "c.toml", "estimate", "--data", "d.csv"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let rec = error_record(&out);
    assert_eq!(rec["error"], "ConfigError");
    assert_eq!(rec["line"], 3);
}

#[test]
fn strategy_on_continuous_outcome_is_estimation_error() {
    let dir = tempfile::tempdir().unwrap();
    small_dataset(dir.path());
    let out = stratmatch(&["estimate", "--data", "d.csv", "--method", "strategy-1:1"], dir.path());
    assert_eq!(out.status.code(), Some(4));
    assert_eq!(error_record(&out)["error"], "StrategyRequiresBinary");
}

#[test]
fn dry_run_computes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    small_dataset(dir.path());
    for args in [
        vec!["estimate", "--data", "d.csv"],
        vec!["bench", "--reps", "2"],
        vec!["tree", "export", "--data", "d.csv"],
        vec!["gen", "--output", "other.csv"],
    ] {
        let mut full = args.clone();
        full.extend(["--dry-run", "--out", "dry", "--psi", "7"]);
        let out = stratmatch(&full, dir.path());
        assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
        let body: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
        assert_eq!(body["valid"], true);
        assert_eq!(body["pipeline"]["psi"], 7);
    }
    assert!(!dir.path().join("dry").exists());
    assert!(!dir.path().join("other.csv").exists());
    // invalid values are still caught
    let out = stratmatch(&["estimate", "--data", "d.csv", "--dry-run", "--psi", "0"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn bench_writes_one_row_per_replication_and_method() {
    let dir = tempfile::tempdir().unwrap();
    let out = stratmatch(&["bench", "--preset", "hyb20var-desk", "--reps", "5", "--out", "b"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let mut rdr = csv::Reader::from_path(dir.path().join("b/bench.csv")).unwrap();
    let rows: Vec<csv::StringRecord> = rdr.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 10);
    for m in ["m5c-mf", "naive"] {
        assert_eq!(rows.iter().filter(|r| &r[2] == m).count(), 5);
    }
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("b/bench_summary.json")).unwrap()).unwrap();
    assert_eq!(summary["true_att"], 2.0);
    assert_eq!(summary["summary"].as_array().unwrap().len(), 2);
}

#[test]
fn invalid_preset_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = stratmatch(&["bench", "--preset", "lalonde"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn balance_needs_an_audit_log() {
    let dir = tempfile::tempdir().unwrap();
    small_dataset(dir.path());
    let out = stratmatch(&["balance", "--data", "d.csv", "--audit", "missing.jsonl"], dir.path());
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(error_record(&out)["error"], "AuditNotFound");

    assert!(stratmatch(&["estimate", "--data", "d.csv", "--out", "o"], dir.path()).status.success());
    let out = stratmatch(&["balance", "--data", "d.csv", "--audit", "o/audit.jsonl", "--out", "o"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let bal: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("o/balance.json")).unwrap()).unwrap();
    assert_eq!(bal["post_match"]["records"].as_array().unwrap().len(), 20);
    assert_eq!(bal["pre_match"]["treated_n"], 20);
}

#[test]
fn duplicate_controls_balance_perfectly() {
    let dir = tempfile::tempdir().unwrap();
    // every treated unit has an exact copy among the controls
    let mut text = String::from("a,b,treatment,outcome\n");
    for i in 0..40 {
        let (a, b) = (i as f64 / 40.0, (i % 3) as f64);
        if i % 4 == 0 {
            text.push_str(&format!("{a},{b},1,{}\n", a + 1.0));
        }
        text.push_str(&format!("{a},{b},0,{a}\n"));
    }
    fs::write(dir.path().join("dup.csv"), text).unwrap();
    assert!(stratmatch(&["estimate", "--data", "dup.csv", "--out", "o"], dir.path()).status.success());
    let out = stratmatch(&["balance", "--data", "dup.csv", "--audit", "o/audit.jsonl", "--out", "o"], dir.path());
    assert!(out.status.success());
    let bal: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("o/balance.json")).unwrap()).unwrap();
    for r in bal["post_match"]["records"].as_array().unwrap() {
        assert_eq!(r["smd_abs"], 0.0, "{r}");
    }
}

#[test]
fn tree_export_and_gen_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    small_dataset(dir.path());
    let out = stratmatch(&["tree", "export", "--data", "d.csv", "--out", "t"], dir.path());
    assert!(out.status.success());
    let rules = fs::read_to_string(dir.path().join("t/tree.txt")).unwrap();
    assert!(rules.lines().all(|l| l.contains("→ leaf ")));
    let nested: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("t/tree.json")).unwrap()).unwrap();
    assert!(nested["kind"] == "leaf" || nested["kind"] == "split");
    // same seed, same file
    stratmatch(&["gen", "--seed", "2", "--n-treated", "20", "--n-control", "480", "--output", "again.csv"], dir.path());
    assert_eq!(
        fs::read(dir.path().join("d.csv")).unwrap(),
        fs::read(dir.path().join("again.csv")).unwrap()
    );
}

#[test]
fn tab_delimited_input_with_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let out = stratmatch(
        &["gen", "--seed", "4", "--n-treated", "10", "--n-control", "190", "--delimiter", "tab", "--treatment", "t", "--outcome", "y", "--output", "d.tsv"],
        dir.path(),
    );
    assert!(out.status.success());
    fs::write(
        dir.path().join("c.toml"),
        "treatment = \"t\"\noutcome = \"y\"\ndelimiter = \"tab\"\nmethod = \"m5c-m\"\n",
    )
    .unwrap();
    let out = stratmatch(&["--config", "c.toml", "estimate", "--data", "d.tsv", "--out", "o"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("o/report.json")).unwrap()).unwrap();
    assert_eq!(report["payload"]["report"]["method"], "m5c-m");
}
