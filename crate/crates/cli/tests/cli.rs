use std::path::Path;
use std::process::{Command, Output};

use ecosched::predictor::{Node, RegressionTree, TrainingHistory, TrainingRecord, N_FEATURES};
use ecosched::scenario::Population;
use ecosched::{ComparisonReport, Policy, SimulationResult};

fn ecosched(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ecosched"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

const SMALL: &str = r#"
version = 1
name = "small"

[[cluster.hosts]]
count = 3

[workloads]
arrival = { kind = "poisson", rate = 0.002 }
mix = [{ family = "etl", count = 4 }, { family = "mllib", count = 4 }]
"#;

fn small_scenario(dir: &Path) -> std::path::PathBuf {
    let path = dir.join("small.toml");
    std::fs::write(&path, SMALL).unwrap();
    path
}

#[test]
fn round_robin_run_keeps_every_host_on_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let scn = small_scenario(dir.path());
    let (a, b) = (dir.path().join("a.json"), dir.path().join("b.json"));
    for out in [&a, &b] {
        let o = ecosched(&[
            "run",
            "--scenario",
            p(&scn),
            "--policy",
            "rr",
            "--seed",
            "4",
            "--out",
            p(out),
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let text = std::fs::read_to_string(&a).unwrap();
    assert_eq!(text, std::fs::read_to_string(&b).unwrap());
    let r: SimulationResult = serde_json::from_str(&text).unwrap();
    assert_eq!(r.policy, Policy::RoundRobin);
    assert_eq!(r.hosts.len(), 3);
    for h in &r.hosts {
        assert_eq!(h.power_offs, 0);
        assert_eq!(h.on_seconds, r.horizon);
    }
}

#[test]
fn missing_scenario_exits_2_naming_the_path() {
    let o = ecosched(&["run", "--scenario", "/definitely/not/here.toml"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(
        stderr(&o).contains("/definitely/not/here.toml"),
        "{}",
        stderr(&o)
    );
}

#[test]
fn malformed_scenario_reports_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    std::fs::write(
        &path,
        "version = 1\n[scheduler]\ntau = \"high\"\n[workloads]\n",
    )
    .unwrap();
    let o = ecosched(&["compare", "--scenario", p(&path)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 3"), "{}", stderr(&o));
}

#[test]
fn infeasible_scenario_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("inf.toml");
    std::fs::write(
        &path,
        "version = 1\n[[cluster.hosts]]\ncount = 2\ncapacity = { cpu = 0.5, mem = 1.0, io = 1.0 }\n\
         [workloads]\njobs = [{ workload_id = \"x\", cpu = 0.9, mem = 0.1, disk = 0.0, net = 0.0, nominal_duration = 10.0 }]\n",
    )
    .unwrap();
    let o = ecosched(&["run", "--scenario", p(&path)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("infeasible workload: x"));
}

#[test]
fn invalid_threshold_flag_exits_2() {
    let o = ecosched(&["run", "--delta-low", "0.95"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("delta_low"));
}

fn history(dir: &Path, records: Vec<TrainingRecord>) -> std::path::PathBuf {
    let path = dir.join("history.json");
    std::fs::write(&path, TrainingHistory::new(records).to_json()).unwrap();
    path
}

fn record(x: f64, target: f64) -> TrainingRecord {
    let mut features = [0.0; N_FEATURES];
    features[0] = x;
    TrainingRecord { features, target }
}

fn train(hist: &Path, model: &Path) -> (Output, Option<RegressionTree>) {
    let o = ecosched(&[
        "train",
        "--history",
        p(hist),
        "--out",
        p(model),
        "--min-leaf-size",
        "1",
    ]);
    let tree = std::fs::read_to_string(model)
        .ok()
        .map(|t| RegressionTree::from_json(&t).unwrap());
    (o, tree)
}

#[test]
fn constant_history_trains_a_single_leaf() {
    let dir = tempfile::tempdir().unwrap();
    let hist = history(
        dir.path(),
        (0..6).map(|k| record(k as f64 / 6.0, 2.5)).collect(),
    );
    let (o, tree) = train(&hist, &dir.path().join("m.json"));
    assert!(o.status.success());
    let tree = tree.unwrap();
    assert!(matches!(tree.root, Node::Leaf { value, samples: 6 } if value == 2.5));
    assert!(String::from_utf8_lossy(&o.stdout).contains("MAE 0 Wh"));
}

#[test]
fn stump_history_trains_two_leaves() {
    let dir = tempfile::tempdir().unwrap();
    let records = [0.1, 0.2, 0.3, 0.7, 0.8, 0.9]
        .iter()
        .map(|&x| record(x, if x < 0.5 { 1.0 } else { 4.0 }))
        .collect();
    let (o, tree) = train(&history(dir.path(), records), &dir.path().join("m.json"));
    assert!(o.status.success());
    let tree = tree.unwrap();
    assert_eq!(tree.leaf_count(), 2);
    assert!(matches!(tree.root, Node::Split { feature: 0, threshold, .. } if threshold == 0.5));
    assert!(String::from_utf8_lossy(&o.stdout).contains("MAE 0 Wh"));
}

#[test]
fn empty_or_unreadable_history_fails() {
    let dir = tempfile::tempdir().unwrap();
    let (o, tree) = train(&history(dir.path(), vec![]), &dir.path().join("m.json"));
    assert_ne!(o.status.code(), Some(0));
    assert!(stderr(&o).contains("no history"));
    assert!(tree.is_none());

    let (o, _) = train(&dir.path().join("missing.json"), &dir.path().join("m.json"));
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn recorded_history_feeds_a_model_run() {
    let dir = tempfile::tempdir().unwrap();
    let scn = small_scenario(dir.path());
    let (hist, model) = (dir.path().join("h.json"), dir.path().join("m.json"));
    let o = ecosched(&[
        "run",
        "--scenario",
        p(&scn),
        "--policy",
        "rr",
        "--records",
        p(&hist),
        "--out",
        p(&dir.path().join("rr.json")),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let h = TrainingHistory::from_json(&std::fs::read_to_string(&hist).unwrap()).unwrap();
    assert_eq!(h.records.len(), 8);
    assert!(train(&hist, &model).0.status.success());
    let out = dir.path().join("ea.json");
    let o = ecosched(&[
        "run",
        "--scenario",
        p(&scn),
        "--model",
        p(&model),
        "--out",
        p(&out),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let r: SimulationResult =
        serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!((r.policy, r.completed), (Policy::EnergyAware, 8));
}

#[test]
fn compare_writes_report_and_rows_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    let scn = small_scenario(dir.path());
    let (a, b) = (dir.path().join("a.json"), dir.path().join("b.json"));
    for out in [&a, &b] {
        let o = ecosched(&[
            "compare",
            "--scenario",
            p(&scn),
            "--reps",
            "3",
            "--seed",
            "9",
            "--out",
            p(out),
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
        assert!(stderr(&o).contains("energy savings"));
    }
    let text = std::fs::read_to_string(&a).unwrap();
    assert_eq!(text, std::fs::read_to_string(&b).unwrap());
    let csv = std::fs::read_to_string(a.with_extension("csv")).unwrap();
    assert_eq!(
        csv,
        std::fs::read_to_string(b.with_extension("csv")).unwrap()
    );
    assert_eq!(csv.lines().count(), 7);

    let report: ComparisonReport = serde_json::from_str(&text).unwrap();
    assert_eq!(report.repetitions, 3);
    for policy in [Policy::RoundRobin, Policy::EnergyAware] {
        assert_eq!(report.rows(policy).count(), 3);
    }
    let mean = |policy| report.rows(policy).map(|r| r.energy_wh).sum::<f64>() / 3.0;
    let (rr, ea) = (mean(Policy::RoundRobin), mean(Policy::EnergyAware));
    assert!((report.round_robin.energy_wh - rr).abs() <= 1e-9 * rr);
    assert!((report.energy_savings_pct.unwrap() - 100.0 * (rr - ea) / rr).abs() <= 1e-9);
}

#[test]
fn generate_exports_populations() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b, trace) = (
        dir.path().join("a.json"),
        dir.path().join("b.json"),
        dir.path().join("t.csv"),
    );
    for out in [&a, &b] {
        let o = ecosched(&[
            "generate",
            "--family",
            "mapreduce",
            "--count",
            "5",
            "--seed",
            "3",
            "--out",
            p(out),
            "--trace",
            p(&trace),
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let text = std::fs::read_to_string(&a).unwrap();
    assert_eq!(text, std::fs::read_to_string(&b).unwrap());
    let pop = Population::from_json(&text).unwrap();
    assert_eq!(pop.arrivals.len(), 5);
    assert!(pop.arrivals.iter().all(|x| x.arrival_time == 0.0));
    let samples =
        ecosched::profiling::parse_trace(&std::fs::read_to_string(&trace).unwrap()).unwrap();
    assert!(samples.iter().all(|s| s.subject_id.starts_with("mr-")));

    let o = ecosched(&["generate", "--family", "etl", "--count", "0"]);
    assert!(o.status.success());
    let pop = Population::from_json(&String::from_utf8_lossy(&o.stdout)).unwrap();
    assert!(pop.arrivals.is_empty());

    let o = ecosched(&["generate", "--family", "etl", "--count=-1"]);
    assert_eq!(o.status.code(), Some(2));
}
