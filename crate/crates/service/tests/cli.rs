use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use homeplan::cli::{EXIT_IO, EXIT_OK, EXIT_PROVIDER, EXIT_USAGE, run_with_env};
use homeplan::export::CSV_HEADER;
use homeplan_core::{WeeklySchedule, parse_schedule_json, to_canonical_json};
use serde_json::Value;

fn run(args: &[&str]) -> i32 {
    run_env(args, &[])
}

fn run_env(args: &[&str], env: &[(&str, &str)]) -> i32 {
    let env: BTreeMap<String, String> = env.iter().map(|(k, v)| ((*k).to_owned(), (*v).to_owned())).collect();
    run_with_env(std::iter::once("homeplan").chain(args.iter().copied()), move |k| env.get(k).cloned())
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn tree(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_owned()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(dir).unwrap().to_owned(), fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn golden_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name)
}

fn golden(name: &str, actual: &str) {
    let path = golden_path(name);
    if std::env::var_os("HOMEPLAN_BLESS").is_some() {
        fs::write(&path, actual).unwrap();
    }
    assert_eq!(actual, fs::read_to_string(&path).unwrap(), "{name} drifted; rerun with HOMEPLAN_BLESS=1 if intended");
}

fn fixtures(dir: &Path, seed: &str) {
    assert_eq!(run(&["gen-fixtures", "--seed", seed, "--out-dir", s(dir)]), EXIT_OK);
}

#[test]
fn fixtures_are_byte_deterministic_per_seed() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b, c) = (tmp.path().join("a"), tmp.path().join("b"), tmp.path().join("c"));
    fixtures(&a, "7");
    fixtures(&b, "7");
    fixtures(&c, "8");
    let (ta, tb, tc) = (tree(&a), tree(&b), tree(&c));
    assert_eq!(ta.keys().filter(|p| p.starts_with("families")).count(), 10);
    assert_eq!(ta, tb);
    assert_ne!(ta, tc);
}

#[test]
fn caregiver_range_is_checked() {
    let tmp = tempfile::tempdir().unwrap();
    let out = s(tmp.path());
    assert_eq!(run(&["gen-fixtures", "--out-dir", out, "--caregivers-min", "1"]), EXIT_USAGE);
    assert_eq!(run(&["gen-fixtures", "--out-dir", out, "--caregivers-max", "5"]), EXIT_USAGE);
    assert_eq!(run(&["gen-fixtures", "--out-dir", out, "--caregivers-min", "4", "--caregivers-max", "3"]), EXIT_USAGE);
    assert_eq!(run(&["gen-fixtures", "--out-dir", out, "--caregivers-min", "3", "--caregivers-max", "3"]), EXIT_OK);
    for f in fs::read_dir(tmp.path().join("families")).unwrap() {
        let v: Value = serde_json::from_slice(&fs::read(f.unwrap().path()).unwrap()).unwrap();
        assert_eq!(v["family"]["caregivers"].as_array().unwrap().len(), 3);
    }
}

#[test]
fn harness_scores_every_plan_and_logs_faults() {
    let tmp = tempfile::tempdir().unwrap();
    let fx = tmp.path().join("fx");
    fixtures(&fx, "42");
    let clean = tmp.path().join("clean");
    assert_eq!(run(&["run-harness", "--fixtures", s(&fx), "--out-dir", s(&clean), "--jobs", "3"]), EXIT_OK);
    assert_eq!(fs::read_dir(clean.join("reports")).unwrap().count(), 30);
    let agg: Value = serde_json::from_str(&fs::read_to_string(clean.join("aggregate.json")).unwrap()).unwrap();
    assert_eq!((agg["plans_scored"].as_u64(), agg["plans_failed"].as_u64()), (Some(30), Some(0)));
    assert_eq!(agg["dimensions"].as_array().unwrap().len(), 5);

    let faulty = tmp.path().join("faulty");
    let mut args = vec!["run-harness", "--fixtures", s(&fx), "--out-dir", s(&faulty)];
    let ids = ["family-01-set1", "family-02-set2", "family-03-set3", "family-05-set1", "family-10-set2"];
    for id in &ids {
        args.extend(["--fault", id]);
    }
    assert_eq!(run(&args), EXIT_OK);
    assert_eq!(fs::read_dir(faulty.join("reports")).unwrap().count(), 25);
    let mut rows = csv::Reader::from_path(faulty.join("failures.csv")).unwrap();
    let failed: Vec<String> = rows.records().map(|r| r.unwrap()[0].to_owned()).collect();
    assert_eq!(failed, ids);
    // clean plans are unaffected by faults elsewhere
    let p = "plans/family-04-set1.json";
    assert_eq!(fs::read(clean.join(p)).unwrap(), fs::read(faulty.join(p)).unwrap());
}

#[test]
fn harness_needs_fixtures() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(run(&["run-harness", "--fixtures", s(&tmp.path().join("none")), "--out-dir", s(tmp.path())]), EXIT_IO);
    let fx = tmp.path().join("fx");
    fixtures(&fx, "1");
    assert_eq!(run(&["run-harness", "--fixtures", s(&fx), "--task-sets", "4", "--out-dir", s(tmp.path())]), EXIT_IO);
}

#[test]
fn exports() {
    let tmp = tempfile::tempdir().unwrap();
    let plan = golden_path("family-07-set1.json");
    let csv_out = tmp.path().join("week.csv");
    assert_eq!(run(&["export-timesheet", "--plan-file", s(&plan), "--format", "csv", "--out", s(&csv_out)]), EXIT_OK);
    let csv_text = fs::read_to_string(&csv_out).unwrap();
    golden("family-07-set1.csv", &csv_text);
    let schedule = parse_schedule_json(&fs::read_to_string(&plan).unwrap()).unwrap();
    assert_eq!(csv_text.lines().count(), schedule.subtasks.len() + 1);

    let json_out = tmp.path().join("week.json");
    assert_eq!(run(&["export-timesheet", "--plan-file", s(&plan), "--out", s(&json_out)]), EXIT_OK);
    assert_eq!(parse_schedule_json(&fs::read_to_string(&json_out).unwrap()).unwrap(), schedule);
    assert_eq!(fs::read(&json_out).unwrap(), fs::read(&plan).unwrap());

    let md_out = tmp.path().join("week.md");
    assert_eq!(run(&["export-timesheet", "--plan-file", s(&plan), "--format", "md", "--out", s(&md_out)]), EXIT_OK);
    let md = fs::read_to_string(&md_out).unwrap();
    assert!(md.starts_with("| Day 1 |"));
    assert!(schedule.subtasks.iter().all(|st| md.contains(&st.subtask_name)));

    let empty = tmp.path().join("empty.json");
    fs::write(&empty, to_canonical_json(&WeeklySchedule::new("p", "f", Vec::new()))).unwrap();
    let empty_csv = tmp.path().join("empty.csv");
    assert_eq!(run(&["export-timesheet", "--plan-file", s(&empty), "--format", "csv", "--out", s(&empty_csv)]), EXIT_OK);
    assert_eq!(fs::read_to_string(&empty_csv).unwrap(), format!("{}\n", CSV_HEADER.join(",")));
}

#[test]
fn plan_and_score_commands() {
    let tmp = tempfile::tempdir().unwrap();
    let fx = tmp.path().join("fx");
    fixtures(&fx, "42");
    let doc: Value = serde_json::from_str(&fs::read_to_string(fx.join("families/family-07.json")).unwrap()).unwrap();
    let family = tmp.path().join("family.json");
    let tasks = tmp.path().join("tasks.json");
    fs::write(&family, doc["family"].to_string()).unwrap();
    fs::write(&tasks, doc["task_sets"][0].to_string()).unwrap();
    let out = tmp.path().join("out");
    let stub = fx.join("stub");
    let code = run(&[
        "plan", "--family", s(&family), "--tasks", s(&tasks), "--plan-id", "family-07-set1", "--out-dir", s(&out),
        "--stub-dir", s(&stub),
    ]);
    assert_eq!(code, EXIT_OK);
    assert_eq!(fs::read(out.join("family-07-set1.json")).unwrap(), fs::read(golden_path("family-07-set1.json")).unwrap());
    assert!(out.join("family-07-set1.report.json").exists() && out.join("family-07-set1.jsonl").exists());
    let plan = out.join("family-07-set1.json");
    assert_eq!(run(&["score", "--plan", s(&plan), "--family", s(&family), "--tasks", s(&tasks)]), EXIT_OK);
    assert_eq!(run(&["score", "--plan", s(&tasks), "--family", s(&family), "--tasks", s(&tasks)]), EXIT_IO);
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = tmp.path().join("missing.db");
    assert_eq!(run(&["no-such-command"]), EXIT_USAGE);
    assert_eq!(run(&["export-timesheet"]), EXIT_USAGE);
    assert_eq!(run(&["export-timesheet", "--plan-id", "p", "--format", "pdf"]), EXIT_USAGE);
    assert_eq!(run(&["export-timesheet", "--plan-id", "p", "--db", s(&missing)]), EXIT_IO);
    assert!(!missing.exists(), "export must not create a database");
    assert_eq!(run_env(&["gen-fixtures", "--out-dir", s(tmp.path())], &[("HOMEPLAN_SEED", "many")]), EXIT_USAGE);
    assert_eq!(run(&["--config", s(&tmp.path().join("nope.toml")), "gen-fixtures"]), EXIT_IO);

    let fx = tmp.path().join("fx");
    fixtures(&fx, "3");
    let harness = |env: &[(&str, &str)]| run_env(&["run-harness", "--fixtures", s(&fx), "--out-dir", s(tmp.path())], env);
    assert_eq!(harness(&[("HOMEPLAN_PROVIDER", "http")]), EXIT_PROVIDER, "http without endpoint or key");
    assert_eq!(harness(&[("HOMEPLAN_PROVIDER", "carrier-pigeon")]), EXIT_PROVIDER);
    let http = [("HOMEPLAN_PROVIDER", "http"), ("HOMEPLAN_ENDPOINT", "http://127.0.0.1:9/v1/chat"), ("HOMEPLAN_API_KEY", "")];
    assert_eq!(harness(&http), EXIT_PROVIDER, "empty key");
}

#[test]
fn flags_beat_env_beat_file() {
    let tmp = tempfile::tempdir().unwrap();
    let config = tmp.path().join("homeplan.toml");
    let from_file = tmp.path().join("from_file");
    fs::write(&config, format!("seed = 1\nfamilies = 2\nout_dir = {:?}\n", s(&from_file))).unwrap();
    let seed_of = |dir: &Path| -> (u64, u64) {
        let m: Value = serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap();
        (m["seed"].as_u64().unwrap(), m["families"].as_u64().unwrap())
    };

    assert_eq!(run(&["--config", s(&config), "gen-fixtures"]), EXIT_OK);
    assert_eq!(seed_of(&from_file), (1, 2));

    let env = [("HOMEPLAN_SEED", "2")];
    assert_eq!(run_env(&["--config", s(&config), "gen-fixtures"], &env), EXIT_OK);
    assert_eq!(seed_of(&from_file), (2, 2));

    let flagged = tmp.path().join("flagged");
    assert_eq!(run_env(&["--config", s(&config), "gen-fixtures", "--seed", "3", "--out-dir", s(&flagged)], &env), EXIT_OK);
    assert_eq!(seed_of(&flagged), (3, 2));

    // HOMEPLAN_CONFIG names the file when --config is absent
    let env = [("HOMEPLAN_CONFIG", s(&config))];
    assert_eq!(run_env(&["gen-fixtures", "--seed", "4"], &env), EXIT_OK);
    assert_eq!(seed_of(&from_file), (4, 2));

    fs::write(&config, "sead = 1\n").unwrap();
    assert_eq!(run(&["--config", s(&config), "gen-fixtures"]), EXIT_IO);
}

#[test]
fn binary_reports_exit_codes() {
    let bin = env!("CARGO_BIN_EXE_homeplan");
    let out = Command::new(bin).arg("--version").output().unwrap();
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("homeplan "));
    let out = Command::new(bin).arg("bogus").output().unwrap();
    assert_eq!(out.status.code(), Some(EXIT_USAGE));
    let out = Command::new(bin).args(["export-timesheet", "--plan-id", "x", "--db", "/nonexistent/h.db"]).output().unwrap();
    assert_eq!(out.status.code(), Some(EXIT_IO));
    assert!(String::from_utf8_lossy(&out.stderr).contains("database not found"));
}
