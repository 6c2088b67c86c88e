use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

const CYCLE: &str = "2026-02-03T06:00:00Z";

fn earlywarn(data: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_earlywarn")).arg("--data").arg(data).args(args).output().unwrap()
}

fn ok(data: &Path, args: &[&str]) -> String {
    let out = earlywarn(data, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

/// Exit code and error kind of a failing invocation.
fn fails(data: &Path, args: &[&str]) -> (i32, String) {
    let out = earlywarn(data, args);
    assert!(!out.status.success(), "{args:?} unexpectedly succeeded");
    let err: Value = serde_json::from_slice(out.stderr.trim_ascii()).unwrap();
    (out.status.code().unwrap(), err["error"]["kind"].as_str().unwrap().to_owned())
}

#[test]
fn forecast_then_query_prints_series_and_verdict() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let out = ok(d, &["forecast", "--res", "1.0", "--steps", "60", "--seed", "7", "--cycle", CYCLE]);
    assert!(out.contains("61 states, lead hours 0..360 step 6"), "{out}");
    assert!(out.contains("65,160 rows"), "{out}");

    let out = ok(d, &["query", "--place", "Johannesburg", "--vars", "tcwv,tp"]);
    let table: Vec<&str> = out.lines().skip(1).take_while(|l| !l.is_empty()).collect();
    assert_eq!(table[0].split_whitespace().collect::<Vec<_>>(), ["lead_h", "tcwv", "tp"]);
    assert_eq!(table.len(), 62);
    assert!(out.contains("\nrisk: "), "{out}");

    let json: Value = serde_json::from_str(&ok(d, &["query", "--lat", "-26", "--lon", "28", "--json"])).unwrap();
    assert_eq!(json["series"]["lead_hours"].as_array().unwrap().len(), 61);
    assert!(["normal", "elevated", "severe"].contains(&json["risk"]["level"].as_str().unwrap()));

    assert_eq!(fails(d, &["forecast", "--res", "1.0", "--steps", "60", "--seed", "7", "--cycle", CYCLE]), (1, "conflict".into()));
    assert!(ok(d, &["runs"]).contains(CYCLE));
}

#[test]
fn quarter_degree_dry_run_counts_values() {
    let dir = tempfile::tempdir().unwrap();
    let out = ok(dir.path(), &["forecast", "--res", "0.25", "--steps", "60", "--dry-run"]);
    assert!(out.contains("61 states") && out.contains("4,749,948,000 values"), "{out}");
    assert!(!dir.path().join("store").exists());
}

#[test]
fn failures_exit_nonzero_with_a_kind() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(fails(d, &["query", "--place", "Durban"]).1, "no_runs");
    assert_eq!(fails(d, &["forecast", "--res", "0.3", "--steps", "2"]).1, "invalid_resolution");
    assert_eq!(fails(d, &["forecast", "--res", "10", "--steps", "2", "--cycle", "2026-02-03T07:00:00Z"]).1, "cycle_alignment");
    assert_eq!(fails(d, &["forecast", "--res", "10", "--steps", "0"]).1, "invalid_steps");
    ok(d, &["forecast", "--res", "10", "--steps", "4", "--cycle", CYCLE]);
    assert_eq!(fails(d, &["query", "--place", "Atlantis-9Q"]).1, "geocode_miss");
    assert_eq!(fails(d, &["query", "--place", "Durban", "--vars", "nope"]).1, "unknown_variable");
    assert_eq!(fails(d, &["costs", "--preset", "regional"]).1, "invalid_argument");
    assert_eq!(fails(d, &["retention", "--keep", "0"]).1, "invalid_argument");
    assert_eq!(fails(d, &["loadgen", "--target", "http://127.0.0.1:9", "--duration", "1"]).1, "connectivity");
}

#[test]
fn costs_and_capacity_presets() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let costs_json = d.join("costs.json");
    let table = ok(d, &["costs", "--preset", "paper", "--out", costs_json.to_str().unwrap()]);
    assert!(table.contains("$210,000,000.00–$390,000,000.00"), "{table}");
    assert!(table.contains("$1,430.00–$1,730.00"), "{table}");
    let doc: Value = serde_json::from_slice(&std::fs::read(&costs_json).unwrap()).unwrap();
    assert_eq!(doc["computed"]["gpu_monthly"], 108_770);
    assert_eq!(doc["published_monthly_chain"]["ratio"]["low"], 2_023);

    let cap_json = d.join("cap.json");
    let table = ok(d, &["capacity", "--preset", "paper", "--out", cap_json.to_str().unwrap()]);
    assert!(table.contains("2800"), "{table}");
    let doc: Value = serde_json::from_slice(&std::fs::read(&cap_json).unwrap()).unwrap();
    assert_eq!(doc["computed"]["peak_per_second"], "2800");
    assert_eq!(doc["computed"]["instances_raw"]["low"], 3);
    let wider = ok(d, &["capacity", "--preset", "paper", "--headroom", "1.8"]);
    assert!(wider.contains("6–11"), "{wider}");

    let custom = d.join("mine.toml");
    std::fs::write(&custom, include_str!("../presets/costs-paper.toml").replace("years = 5", "years = 10")).unwrap();
    assert!(ok(d, &["costs", "--config", custom.to_str().unwrap()]).contains("$166,524.00"));
}

#[test]
fn ingest_through_the_worker_and_forecast_from_fixture() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let out = ok(d, &["ingest", "--seed-fixture", "10", "--cycle", CYCLE, "--seed", "4"]);
    assert!(out.contains("shape [1, 75, 19, 36]"), "{out}");
    assert!(out.contains("lead hours [0]"), "{out}");
    let out = ok(d, &["ingest", "--cycle", CYCLE, "--vars", "tcwv,tp"]);
    assert!(out.contains("shape [1, 2, 19, 36]"), "{out}");
    assert_eq!(fails(d, &["ingest", "--cycle", "2026-02-03T12:00:00Z", "--vars", "tp"]).1, "missing_variable");
    let out = ok(d, &["forecast", "--res", "10", "--steps", "8", "--cycle", CYCLE, "--from-fixture"]);
    assert!(out.contains("9 states"), "{out}");
}

#[test]
fn subscribe_dispatch_and_retention() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    for cycle in ["2026-02-03T00:00:00Z", "2026-02-03T06:00:00Z", "2026-02-03T12:00:00Z"] {
        ok(d, &["forecast", "--res", "10", "--steps", "60", "--cycle", cycle]);
    }
    ok(d, &["subscribe", "--id", "a", "--place", "Durban", "--min-severity", "normal"]);
    ok(d, &["subscribe", "--id", "b", "--lat", "-30", "--lon", "31", "--opted-out"]);
    assert_eq!(fails(d, &["subscribe", "--id", "c", "--place", "Durban", "--min-severity", "extreme"]).1, "invalid_argument");
    let first = ok(d, &["dispatch"]);
    assert!(first.contains("opted out 1"), "{first}");
    let second = ok(d, &["dispatch"]);
    assert!(second.starts_with("sent 0"), "{second}");

    let out = ok(d, &["retention", "--keep", "1"]);
    assert!(out.contains("removed 2"), "{out}");
    let runs = ok(d, &["runs"]);
    assert!(runs.contains("2026-02-03T12:00:00Z") && !runs.contains("2026-02-03T00:00:00Z"), "{runs}");
}

#[test]
fn catalog_lists_every_variable() {
    let dir = tempfile::tempdir().unwrap();
    let out = ok(dir.path(), &["catalog"]);
    for v in ["t2m", "tcwv", "tp", "sst", "z500", "q1000"] {
        assert!(out.split_whitespace().any(|w| w == v), "{v} missing");
    }
}
