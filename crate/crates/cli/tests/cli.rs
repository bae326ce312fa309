use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bergman-lab")).args(args).output().unwrap()
}

fn run_in(dir: &Path, args: &[&str]) -> Output {
    let mut all: Vec<&str> = args.to_vec();
    all.extend(["--out", dir.to_str().unwrap()]);
    run(&all)
}

fn json(dir: &Path, name: &str) -> Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join(name)).unwrap()).unwrap()
}

#[test]
fn identical_maps_have_zero_difference() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(
        dir.path(),
        &["criterion", "--phi", "map poly 0.1,0.5", "--psi", "map poly 0.1,0.5", "--radii", "0.9,0.95,0.99"],
    );
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let doc = json(dir.path(), "criterion.json");
    let sups = doc["result"]["report"]["combined"]["sup_values"].as_array().unwrap();
    assert!(sups.iter().all(|v| v.as_f64() == Some(0.0)), "{sups:?}");
    assert_eq!(doc["result"]["difference"], "compact");
}

#[test]
fn hsnorm_routes_agree_on_constants() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(dir.path(), &["hsnorm", "--route", "both"]);
    assert_eq!(out.status.code(), Some(0));
    let r = &json(dir.path(), "hsnorm.json")["result"];
    let (a, b) = (r["integral"]["value_sq"].as_f64().unwrap(), r["basis"]["value_sq"].as_f64().unwrap());
    assert!((a - b).abs() <= 0.02 * a, "{a} vs {b}");
    assert_eq!(r["agree"], true);
}

#[test]
fn invalid_input_exits_with_two() {
    for args in [
        &["hsnorm", "--tol", "abc"][..],
        &["kernel-probe", "--z", "1.5"],
        &["criterion", "--radii", "0.9,0.8,0.95"],
        &["criterion", "--phi", "map poly 0,2"],
        &["verify-all", "--only", "9"],
        &["no-such-command"],
    ] {
        let out = run(args);
        assert_eq!(out.status.code(), Some(2), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    }
}

#[test]
fn example_verdicts() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(dir.path(), &["example-sec4"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let r = &json(dir.path(), "example_sec4.json")["result"];
    assert_eq!(r["verdicts"]["phi"], "bounded-noncompact");
    assert_eq!(r["verdicts"]["psi"], "bounded-noncompact");
    assert_eq!(r["verdicts"]["difference"], "compact");
}

#[test]
fn csv_header_reruns_as_config() {
    let dir = tempfile::tempdir().unwrap();
    let first = dir.path().join("first");
    let out = run_in(&first, &["path-experiment", "--s-grid", "0,0.5,1", "--tol", "1e-10"]);
    assert_eq!(out.status.code(), Some(0));
    let csv = std::fs::read_to_string(first.join("path_experiment.csv")).unwrap();
    assert!(csv.starts_with("# # bergman-lab "));
    assert!(csv.contains("# s-grid = 0,0.5,1\n"));

    let conf: String = csv.lines().filter_map(|l| l.strip_prefix("# ")).map(|l| format!("{l}\n")).collect();
    let conf_path = dir.path().join("run.conf");
    std::fs::write(&conf_path, conf).unwrap();
    let second = dir.path().join("second");
    let out = run_in(&second, &["path-experiment", "--config", conf_path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let body = |p: &Path| {
        let t = std::fs::read_to_string(p.join("path_experiment.csv")).unwrap();
        t.lines().filter(|l| !l.starts_with('#')).collect::<Vec<_>>().join("\n")
    };
    assert_eq!(body(&first), body(&second));

    // A config written for one command is refused by another.
    assert_eq!(run(&["hsnorm", "--config", conf_path.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn json_records_provenance() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(dir.path(), &["kernel-probe", "--z", "0.3+0.1i", "--w", "-0.2+0.4i"]);
    assert_eq!(out.status.code(), Some(0));
    let doc = json(dir.path(), "kernel_probe.json");
    let s = &doc["provenance"]["settings"];
    assert_eq!(s["command"], "kernel-probe");
    assert_eq!(s["w"], "-0.2+0.4i");
    assert_eq!(s["weight"], "weight A=1 alpha=1");
    assert!(doc["result"]["log_abs"].as_f64().unwrap().is_finite());
}
