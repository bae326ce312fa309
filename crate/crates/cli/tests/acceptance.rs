//! Runs `bergman-lab verify-all` end to end and prints one line per criterion.

use std::process::Command;
use std::time::Instant;

use serde_json::Value;

fn main() {
    let dir = tempfile::tempdir().unwrap();
    let start = Instant::now();
    let out = Command::new(env!("CARGO_BIN_EXE_bergman-lab"))
        .args(["verify-all", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    let wall = start.elapsed().as_secs_f64();

    let doc: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("verify_all.json")).unwrap()).unwrap();
    let criteria = doc["result"]["criteria"].as_array().unwrap();
    let mut failed = Vec::new();
    for c in criteria {
        let id = c["id"].as_u64().unwrap();
        let passed = c["passed"].as_bool().unwrap();
        let mut line = format!(
            "{} [{id}] {} ({:.1} s)",
            if passed { "PASS" } else { "FAIL" },
            c["title"].as_str().unwrap(),
            c["elapsed_secs"].as_f64().unwrap()
        );
        for check in c["checks"].as_array().unwrap() {
            if !check["passed"].as_bool().unwrap() {
                line.push_str(&format!("\n    {}: {}", check["name"].as_str().unwrap(), check["detail"]));
            }
        }
        if let Some(e) = c["error"].as_str() {
            line.push_str(&format!("\n    error: {e}"));
        }
        println!("{line}");
        if !passed {
            failed.push(id);
        }
    }
    println!("wall time {wall:.1} s");

    assert_eq!(criteria.len(), 8, "{}", String::from_utf8_lossy(&out.stderr));
    if !failed.is_empty() || out.status.code() != Some(0) || wall > 900.0 {
        eprintln!("acceptance failed: criteria {failed:?}, exit {:?}", out.status.code());
        std::process::exit(1);
    }
}
