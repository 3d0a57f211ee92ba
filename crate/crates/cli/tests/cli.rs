use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use ppz_core::backtest::{MetricsTable, Policy, Scenario};
use ppz_core::escrow::{write_ndjson, EscrowEvent};
use ppz_core::positioning::AllocationPlan;
use ppz_core::sensitivity::SensitivityReport;
use serde_json::Value;
use tempfile::TempDir;

fn ppz(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ppz")).args(args).output().expect("run ppz")
}

fn ok(args: &[&str]) -> String {
    let out = ppz(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn small_city(dir: &Path, params: &str) -> String {
    let params_path = dir.join("params.json");
    fs::write(&params_path, params).unwrap();
    let out = dir.join("city.json");
    ok(&[
        "gen-city",
        "--n",
        "25",
        "--hotspots",
        "2",
        "--seed",
        "3",
        "--params",
        params_path.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    out.to_str().unwrap().to_string()
}

#[test]
fn counterfactual_prints_rescaled_supply() {
    let out = ok(&["counterfactual", "--treat", "5", "--control", "3", "--share", "0.5"]);
    let v: Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["all_control"], 6.0);
    assert_eq!(v["all_treatment"], 10.0);
    assert!(!ppz(&["counterfactual", "--treat", "5", "--control", "3", "--share", "1.5"]).status.success());
}

#[test]
fn gen_city_is_seeded() {
    let dir = TempDir::new().unwrap();
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    for out in [&a, &b] {
        ok(&["gen-city", "--n", "36", "--hotspots", "2", "--seed", "9", "--out", out.to_str().unwrap()]);
    }
    let text = fs::read_to_string(&a).unwrap();
    assert_eq!(text, fs::read_to_string(&b).unwrap());
    let scenario = Scenario::from_json(&text).unwrap();
    assert_eq!(scenario.graph.n(), 36);
}

#[test]
fn solve_writes_plan_and_program() {
    let dir = TempDir::new().unwrap();
    let city = small_city(dir.path(), "{}");
    for objective in ["bookings", "conversion"] {
        let plan_path = dir.path().join(format!("{objective}.json"));
        let dump = dir.path().join("program.json");
        ok(&[
            "solve",
            "--scenario",
            &city,
            "--objective",
            objective,
            "--out",
            plan_path.to_str().unwrap(),
            "--dump-program",
            dump.to_str().unwrap(),
        ]);
        let plan: AllocationPlan = serde_json::from_str(&fs::read_to_string(&plan_path).unwrap()).unwrap();
        assert_eq!(plan.y.len(), 25);
        assert!(plan.allocation.iter().all(|a| a.fraction >= 0.0));
        let program: Value = serde_json::from_str(&fs::read_to_string(&dump).unwrap()).unwrap();
        let vars = program["num_vars"].as_u64().unwrap() as usize;
        assert_eq!(program["linear"].as_array().unwrap().len(), vars);
        for (i, _, _) in serde_json::from_value::<Vec<(usize, usize, f64)>>(program["ineq"].clone()).unwrap() {
            assert!(i < program["ineq_rhs"].as_array().unwrap().len());
        }
    }
}

#[test]
fn ledger_replay_prints_balances() {
    let dir = TempDir::new().unwrap();
    let log = dir.path().join("events.ndjson");
    let events = [
        EscrowEvent::ride_accepted(1, 0, 500).at(1),
        EscrowEvent::ride_completed(1, 0, 700).at(2),
        EscrowEvent::ride_accepted(2, 2, 300).at(3),
        EscrowEvent::ppz_issued(3, 1, 250, vec![(0, 200), (2, 50)]).at(4),
    ];
    let mut buf = Vec::new();
    write_ndjson(&mut buf, &events).unwrap();
    fs::write(&log, buf).unwrap();
    assert_eq!(ok(&["ledger", "replay", "--log", log.to_str().unwrap()]).trim(), "[500,0,250]");
    let wider = ok(&["ledger", "replay", "--log", log.to_str().unwrap(), "--locations", "4"]);
    assert_eq!(wider.trim(), "[500,0,250,0]");
    assert!(!ppz(&["ledger", "replay", "--log", log.to_str().unwrap(), "--locations", "2"]).status.success());

    // an earn for a PPZ that was never issued is rejected
    fs::write(&log, "{\"kind\":\"PpzEarned\",\"ref_id\":9,\"location\":0,\"amount\":0,\"timestamp\":1}\n").unwrap();
    assert!(!ppz(&["ledger", "replay", "--log", log.to_str().unwrap()]).status.success());
}

#[test]
fn sensitivity_writes_report_and_curve() {
    let dir = TempDir::new().unwrap();
    let city = small_city(dir.path(), "{}");
    let report = dir.path().join("report.json");
    let curve = dir.path().join("curve.csv");
    ok(&[
        "sensitivity",
        "--scenario",
        &city,
        "--location",
        "12",
        "--grid",
        "0:2:10",
        "--samples",
        "50",
        "--out",
        report.to_str().unwrap(),
        "--csv",
        curve.to_str().unwrap(),
    ]);
    let r: SensitivityReport = serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(r.curve.len(), 6);
    assert_eq!(r.global_checks.len(), 50);
    assert!(r.min_global_slack() >= -1e-6);
    assert!(r.local_checks.iter().all(|c| c.passed));
    let lines = fs::read_to_string(&curve).unwrap();
    assert_eq!(lines.lines().count(), 7);
    assert!(lines.starts_with("supply,revenue,forward_difference"));

    let bad = ppz(&["sensitivity", "--scenario", &city, "--location", "0", "--grid", "5:1:0", "--out", "x.json"]);
    assert!(!bad.status.success());
}

#[test]
fn backtest_writes_rows_and_summary() {
    let dir = TempDir::new().unwrap();
    let city = small_city(dir.path(), r#"{"budget": 40, "prefill_rides": 30}"#);
    let out = dir.path().join("run");
    ok(&[
        "backtest",
        "--scenario",
        &city,
        "--policies",
        "ppz-bookings,null",
        "--reps",
        "4",
        "--out",
        out.to_str().unwrap(),
    ]);
    let mut reader = csv::Reader::from_path(out.join("metrics.csv")).unwrap();
    let headers = reader.headers().unwrap().clone();
    assert!(headers.iter().any(|h| h == "bookings_gain"));
    let records: Vec<csv::StringRecord> = reader.records().map(|r| r.unwrap()).collect();
    assert_eq!(records.len(), 8);
    let summary: MetricsTable = serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert!(summary.rows.is_empty());
    assert_eq!(summary.replications, 4);
    assert_eq!(summary.summary(Policy::Null).unwrap().bookings_gain.mean, 0.0);
    assert!(summary.summary(Policy::PpzConversion).is_none());
}

#[test]
fn backtest_exits_2_when_solves_fail() {
    let dir = TempDir::new().unwrap();
    // no neighborhood can hold back this many drivers
    let city = small_city(dir.path(), r#"{"reserve": 1000}"#);
    let out = dir.path().join("run");
    let run = ppz(&["backtest", "--scenario", &city, "--policies", "ppz-bookings", "--reps", "3", "--out", out.to_str().unwrap()]);
    assert_eq!(run.status.code(), Some(2), "{}", String::from_utf8_lossy(&run.stderr));
    assert!(out.join("metrics.csv").exists());
}

#[test]
fn bad_inputs_fail_cleanly() {
    let missing = ppz(&["solve", "--scenario", "/nonexistent.json", "--out", "/tmp/never.json"]);
    assert_eq!(missing.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&missing.stderr).contains("/nonexistent.json"));
    let unknown = ppz(&["backtest", "--scenario", "s.json", "--policies", "surge", "--out", "d"]);
    assert!(!unknown.status.success());
}
