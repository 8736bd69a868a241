use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn xtq(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_xtq")).args(args).env_remove("XTQ_SEED").output().expect("run xtq")
}

fn ok(args: &[&str]) -> String {
    let out = xtq(args);
    assert!(out.status.success(), "xtq {args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn json(args: &[&str]) -> Value {
    serde_json::from_str(&ok(args)).unwrap()
}

fn p(dir: &Path, name: &str) -> String {
    dir.join(name).to_str().unwrap().to_owned()
}

#[test]
fn synth_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (p(dir.path(), "a.jsonl"), p(dir.path(), "b.jsonl"));
    ok(&["synth", "--grid", "16x12", "--events", "100000", "--seed", "7", "--out", &a]);
    ok(&["synth", "--grid", "16x12", "--events", "100000", "--seed", "7", "--out", &b]);
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    let lines = fs::read_to_string(&a).unwrap().lines().count();
    assert!(lines >= 100_000);
}

#[test]
fn seed_falls_back_to_environment() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (p(dir.path(), "a.jsonl"), p(dir.path(), "b.jsonl"));
    ok(&["synth", "--grid", "4x3", "--events", "2000", "--seed", "11", "--out", &a]);
    let out = Command::new(env!("CARGO_BIN_EXE_xtq"))
        .args(["synth", "--grid", "4x3", "--events", "2000", "--out", &b])
        .env("XTQ_SEED", "11")
        .output()
        .unwrap();
    assert!(out.status.success());
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());

    let missing = xtq(&["synth", "--grid", "4x3", "--events", "10", "--out", &b]);
    assert_eq!(missing.status.code(), Some(1));
}

#[test]
fn train_then_solve_is_certified() {
    let dir = tempfile::tempdir().unwrap();
    let (events, model) = (p(dir.path(), "e.jsonl"), p(dir.path(), "model.json"));
    ok(&["synth", "--grid", "16x12", "--events", "100000", "--seed", "7", "--out", &events]);
    ok(&["train", "--events", &events, "--grid", "16x12", "--out", &model]);
    let heat = p(dir.path(), "xt.svg");
    let report = json(&["solve", "--model", &model, "--plot", &heat]);
    assert_eq!(report["schema"], "xtq.solve/1");
    assert!(report["certified_bound"].as_f64().unwrap() < 1e-9);
    assert!(report["iterations"].as_u64().unwrap() > 1);

    let saved: Value = serde_json::from_str(&fs::read_to_string(&model).unwrap()).unwrap();
    assert_eq!(saved["schema"], "xtq.model/1");
    assert_eq!(saved["xt"].as_array().unwrap().len(), 192);
    assert!(fs::read_to_string(&heat).unwrap().starts_with("<svg"));
    assert!(fs::read_to_string(dir.path().join("xt.csv")).unwrap().starts_with("# schema: xtq.xt/1"));
}

#[test]
fn plan_check_with_bundled_law() {
    let v = json(&["plan", "check", "--m", "192", "--n", "620000"]);
    let prob = v["probability_acceptable"].as_f64().unwrap();
    assert!((prob - 0.221).abs() <= 0.002, "{prob}");
    assert_eq!(v["meets_target"], false);
}

#[test]
fn plan_datasize_and_grid() {
    let dir = tempfile::tempdir().unwrap();
    let plot = p(dir.path(), "curve.svg");
    let v = json(&["plan", "datasize", "--m", "192", "--plot", &plot]);
    let n = v["required_n"].as_f64().unwrap();
    assert!((n / 3_348_000.0 - 1.0).abs() <= 0.01);
    assert!(fs::read_to_string(&plot).unwrap().contains("</svg>"));
    assert!(fs::read_to_string(dir.path().join("curve.csv")).unwrap().starts_with("# schema: xtq.curve/1"));

    let v = json(&["plan", "grid", "--n", "2480000"]);
    assert_eq!(v["m"], 154);

    let grids = p(dir.path(), "grids.json");
    fs::write(&grids, r#"["8x6", {"m_x": 64, "m_y": 48}]"#).unwrap();
    let v = json(&["plan", "grid", "--n", "2480000", "--grids", &grids]);
    assert_eq!(v["grid"], "8x6");
}

#[test]
fn plan_grid_without_acceptable_candidate_fails_at_runtime() {
    let out = xtq(&["plan", "grid", "--n", "10"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no grid"));
}

#[test]
fn usage_errors_exit_with_one() {
    let out = xtq(&["plan", "check", "--m", "192", "--n", "620000", "--bogus"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));

    let out = xtq(&["train", "--events", "x.jsonl", "--grid", "0x4", "--out", "m.json"]);
    assert_eq!(out.status.code(), Some(1));

    let out = xtq(&["bounds", "--m", "10", "--n", "1000", "--alpha", "1.5", "--tinf", "0.5"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn missing_input_is_a_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = xtq(&["train", "--events", &p(dir.path(), "nope.jsonl"), "--grid", "4x3", "--out", &p(dir.path(), "m.json")]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn version_and_help() {
    assert!(ok(&["--version"]).starts_with("xtq "));
    assert!(ok(&["simulate", "--help"]).contains("--truth-dir"));
}

#[test]
fn bounds_prints_breakdown() {
    let v = json(&["bounds", "--m", "1", "--n", "10000", "--pg", "1", "--alpha", "0.05", "--tinf", "0.5"]);
    let g = v["bound_g"]["value"].as_f64().unwrap();
    assert!((g - 0.013581).abs() < 1e-6);
    assert!(v["bound_t"].is_null());

    let v = json(&[
        "bounds", "--m", "192", "--n", "620000", "--tinf", "0.9", "--k", "50", "--ghat", "0.3", "--that", "0.9",
    ]);
    let t = &v["theorem"];
    let total = t["total"].as_f64().unwrap();
    assert!((total - t["statistical"].as_f64().unwrap() - t["numerical"].as_f64().unwrap()).abs() < 1e-12);
    assert!((v["crossover_m"].as_f64().unwrap() - 5.97253).abs() < 1e-4);
}

#[test]
fn simulate_fit_is_deterministic_across_jobs() {
    let dir = tempfile::tempdir().unwrap();
    let plan = p(dir.path(), "plan.json");
    fs::write(&plan, r#"{"grids": ["4x3", "8x6"], "n_values": [20000, 80000], "replicates": 8, "master_seed": 5}"#).unwrap();
    let (r1, r3) = (p(dir.path(), "r1.csv"), p(dir.path(), "r3.csv"));
    ok(&["simulate", "--plan", &plan, "--out", &r1, "--jobs", "1"]);
    ok(&["simulate", "--plan", &plan, "--out", &r3, "--jobs", "3"]);
    let a = fs::read_to_string(&r1).unwrap();
    assert_eq!(a, fs::read_to_string(&r3).unwrap());
    assert!(a.starts_with("# schema: xtq.results/1\nM,N,replicate_id,model_error,err_g,err_T,err_T_weighted,passes_filter\n"));
    assert_eq!(a.lines().count(), 2 + 32);

    // --seed overrides the plan's seed
    let r_other = p(dir.path(), "r_other.csv");
    ok(&["simulate", "--plan", &plan, "--out", &r_other, "--seed", "6"]);
    assert_ne!(a, fs::read_to_string(&r_other).unwrap());

    let law = p(dir.path(), "law.json");
    let diag = dir.path().join("diag");
    let summary = json(&["fit", "--records", &r1, "--out", &law, "--diagnostics", diag.to_str().unwrap()]);
    assert_eq!(summary["n_obs"], 32);
    let law_v: Value = serde_json::from_str(&fs::read_to_string(&law).unwrap()).unwrap();
    assert_eq!(law_v["source"], "fitted");
    assert_eq!(law_v["schema"], "xtq.law/1");
    for f in ["residuals.csv", "qq.csv", "groups.csv", "qq.svg", "residuals.svg"] {
        assert!(diag.join(f).exists(), "{f}");
    }

    // the fitted law feeds the planner
    let v = json(&["plan", "check", "--law", &law, "--m", "48", "--n", "100000"]);
    assert!(v["probability_acceptable"].as_f64().unwrap() >= 0.0);
}

#[test]
fn simulate_reads_truth_directory() {
    let dir = tempfile::tempdir().unwrap();
    let truths = dir.path().join("truths");
    ok(&["truth", "--grid", "4x3", "--out", truths.join("4x3.json").to_str().unwrap()]);
    let plan = p(dir.path(), "plan.json");
    fs::write(&plan, r#"{"grids": ["4x3"], "n_values": [5000], "replicates": 3}"#).unwrap();
    let (a, b) = (p(dir.path(), "a.csv"), p(dir.path(), "b.csv"));
    ok(&["simulate", "--plan", &plan, "--truth-dir", truths.to_str().unwrap(), "--out", &a, "--seed", "1"]);
    ok(&["simulate", "--plan", &plan, "--out", &b, "--seed", "1"]);
    // the written truth is the built-in one
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());

    let out = xtq(&["simulate", "--plan", &plan, "--truth-dir", dir.path().to_str().unwrap(), "--out", &a, "--seed", "1"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn ratings_and_quartile_study() {
    let dir = tempfile::tempdir().unwrap();
    let (events, minutes, model) = (p(dir.path(), "e.jsonl"), p(dir.path(), "min.csv"), p(dir.path(), "model.json"));
    ok(&["synth", "--grid", "8x6", "--events", "200000", "--seed", "3", "--out", &events, "--minutes", &minutes]);
    ok(&["train", "--events", &events, "--grid", "8x6", "--out", &model]);

    // unsolved models are solved on the fly
    let ratings = p(dir.path(), "ratings.csv");
    let plot = p(dir.path(), "bees.svg");
    ok(&["rate", "--model", &model, "--events", &events, "--minutes", &minutes, "--position", "MF", "--out", &ratings, "--plot", &plot]);
    let text = fs::read_to_string(&ratings).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("# schema: xtq.ratings/1"));
    assert_eq!(lines.next(), Some("player_id,position,minutes,xt_per90,rank,quartile"));
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert!(rows.len() >= 8);
    assert!(rows.iter().all(|r| r[1] == "MF"));
    assert!(fs::read_to_string(&plot).unwrap().contains("<svg"));

    let players = p(dir.path(), "players.jsonl");
    ok(&["extract-players", "--events", &events, "--minutes", &minutes, "--grid", "8x6", "--out", &players]);
    let (q1, q2) = (p(dir.path(), "q1.csv"), p(dir.path(), "q2.csv"));
    let me = p(dir.path(), "me.json");
    let common = ["quartile-study", "--grid", "8x6", "--players", &players, "--n", "200000,1300000", "--replicates", "12", "--seed", "9"];
    ok(&[&common[..], &["--out", &q1, "--jobs", "1", "--me-max-out", &me, "--bins", "6"]].concat());
    ok(&[&common[..], &["--out", &q2, "--jobs", "2"]].concat());
    assert_eq!(fs::read(&q1).unwrap(), fs::read(&q2).unwrap());
    assert!(fs::read_to_string(&q1).unwrap().starts_with("# schema: xtq.quartiles/1\n"));
    let me_v: Value = serde_json::from_str(&fs::read_to_string(&me).unwrap()).unwrap();
    assert_eq!(me_v["schema"], "xtq.me-max/1");
    assert_eq!(me_v["bins"].as_array().unwrap().len(), 6);
    assert!(me_v["me_max"].as_f64().unwrap() > 0.0);

    // players extracted on another grid are rejected
    let out = xtq(&[&common[..3], &["4x3", "--players", &players, "--seed", "1", "--out", &q2]].concat());
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn ingest_normalizes_statsbomb() {
    let dir = tempfile::tempdir().unwrap();
    let sb = dir.path().join("match1.json");
    fs::write(
        &sb,
        r#"[
 {"index": 1, "minute": 0, "second": 5, "possession": 1, "possession_team": {"id": 10}, "team": {"id": 10},
  "player": {"id": 7}, "type": {"name": "Pass"}, "location": [60.0, 40.0], "pass": {"end_location": [90.0, 30.0]}},
 {"index": 2, "minute": 0, "second": 8, "possession": 1, "possession_team": {"id": 10}, "team": {"id": 10},
  "player": {"id": 9}, "type": {"name": "Shot"}, "location": [108.0, 40.0], "shot": {"outcome": {"name": "Goal"}}},
 {"index": 3, "minute": 0, "second": 9, "possession": 1, "team": {"id": 10}, "type": {"name": "Substitution"}}
]"#,
    )
    .unwrap();
    let out = p(dir.path(), "events.jsonl");
    ok(&["ingest", "--format", "statsbomb", sb.to_str().unwrap(), "--out", &out]);
    let text = fs::read_to_string(&out).unwrap();
    let lines: Vec<Value> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), 2);
    assert_eq!(lines[0]["match_id"], "match1");
    assert_eq!(lines[0]["x0"], 0.5);
    assert_eq!(lines[1]["is_goal"], true);
}
