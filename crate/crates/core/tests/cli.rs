use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

const BASE: &str = "
[problem]
pi_low = 0
pi_high = 2
pi0 = 1
sigma = 1
cost = 1
";

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_optlearn"))
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let path = dir.join("run.conf");
    std::fs::write(&path, text).unwrap();
    path
}

fn run(command: &str, config: &Path, out: &Path, extra: &[&str]) -> Output {
    bin()
        .arg(command)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .arg("--quiet")
        .args(extra)
        .output()
        .unwrap()
}

fn summary(out: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(out.join("summary.json")).unwrap()).unwrap()
}

fn check_names(s: &Value) -> Vec<String> {
    s["checks"]
        .as_array()
        .unwrap()
        .iter()
        .map(|c| c["name"].as_str().unwrap().to_string())
        .collect()
}

#[test]
fn solve_writes_fields_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), BASE);
    let out = dir.path().join("out");
    let o = run("solve", &config, &out, &[]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    for (file, column) in [
        ("value.csv", "value"),
        ("policy.csv", "action"),
        ("residual.csv", "residual"),
    ] {
        let text = std::fs::read_to_string(out.join(file)).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 202, "{file}");
        assert_eq!(lines[0], format!("x_1,{column}"));
    }
    let s = summary(&out);
    assert_eq!(s["passed"], Value::Bool(true));
    assert!(s["solve"]["iterations"].as_u64().unwrap() > 0);
    assert!(s["solve"]["residual"].as_f64().unwrap() <= 1e-8);
    assert_eq!(check_names(&s), vec!["value_bounds", "complementarity"]);
    assert!(!out.join("episodes.csv").exists());
}

#[test]
fn simulate_needs_a_policy() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), BASE);
    let out = dir.path().join("fresh");
    let o = run("simulate", &config, &out, &[]);
    assert_eq!(o.status.code(), Some(2));
    let err: Value = serde_json::from_slice(&o.stderr).unwrap();
    assert_eq!(err["code"], "DEPENDENCY_ERROR");
    let message = err["message"].as_str().unwrap();
    assert!(
        message.contains("solve") && message.contains("policy = stop"),
        "{message}"
    );

    // STOP needs no policy file and returns g(x0) exactly
    let config = write_config(
        dir.path(),
        &format!("{BASE}[simulate]\npolicy = stop\npaths = 100\nx0 = 0.7\n"),
    );
    let o = run("simulate", &config, &out, &[]);
    assert_eq!(o.status.code(), Some(0));
    let s = summary(&out);
    assert_eq!(s["simulate"]["mean"].as_f64().unwrap(), 1.4);
    assert_eq!(s["simulate"]["stderr"].as_f64().unwrap(), 0.0);
}

#[test]
fn simulate_after_solve_reads_the_policy_back() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        &format!("{BASE}[grid]\nn = 101\n[simulate]\npaths = 500\nepisodes = true\n"),
    );
    let out = dir.path().join("out");
    assert_eq!(run("solve", &config, &out, &[]).status.code(), Some(0));
    assert_eq!(
        run("simulate", &config, &out, &["--seed", "3"])
            .status
            .code(),
        Some(0)
    );
    let s = summary(&out);
    assert_eq!(s["simulate"]["paths"], 500);
    assert_eq!(s["simulate"]["seed"], 3);
    let episodes = std::fs::read_to_string(out.join("episodes.csv")).unwrap();
    assert_eq!(episodes.lines().count(), 501);
    assert!(episodes.starts_with("path,payoff,terminal_reward,learning_cost,stop_time"));
}

#[test]
fn all_reports_every_check_once() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        &format!("{BASE}[grid]\nn = 101\n[simulate]\npaths = 2000\n[verify]\ndoubling_n = 51\n"),
    );
    let out = dir.path().join("out");
    let o = run("all", &config, &out, &[]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let s = summary(&out);
    assert_eq!(
        check_names(&s),
        vec![
            "value_bounds",
            "complementarity",
            "mc_cross_check",
            "comparison",
            "residual_sign_sub",
            "residual_sign_super",
            "theta_sensitivity",
            "doubling",
        ]
    );
    assert!(s["checks"]
        .as_array()
        .unwrap()
        .iter()
        .all(|c| c["passed"] == true));
    assert_eq!(s["failures"].as_array().unwrap().len(), 0);
}

#[test]
fn verify_and_doubling_commands() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        &format!("{BASE}[grid]\nn = 51\n[verify]\ndoubling_n = 31\n"),
    );
    let out = dir.path().join("v");
    assert_eq!(run("verify", &config, &out, &[]).status.code(), Some(0));
    assert_eq!(
        check_names(&summary(&out)),
        vec![
            "comparison",
            "residual_sign_sub",
            "residual_sign_super",
            "theta_sensitivity"
        ]
    );
    let out = dir.path().join("d");
    assert_eq!(run("doubling", &config, &out, &[]).status.code(), Some(0));
    let s = summary(&out);
    assert_eq!(check_names(&s), vec!["doubling"]);
    assert_eq!(s["checks"][0]["metrics"]["runs"], 12.0);
}

#[test]
fn failed_check_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    // one long forced step costs far more than it can gain
    let config = write_config(
        dir.path(),
        &format!(
            "{BASE}[grid]\nn = 51\n[simulate]\npaths = 200\nx0 = 0.5\ndt = 0.5\nt_max = 0.5\n"
        ),
    );
    let out = dir.path().join("out");
    assert_eq!(run("solve", &config, &out, &[]).status.code(), Some(0));
    let o = run("all", &config, &out, &[]);
    assert_eq!(o.status.code(), Some(1));
    let s = summary(&out);
    assert_eq!(s["passed"], false);
    assert_eq!(s["failures"], serde_json::json!(["mc_cross_check"]));
}

#[test]
fn config_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    for (text, code, needle) in [
        (format!("{BASE}gamma = 1\n"), "PARSE_ERROR", "gamma"),
        (
            format!("{BASE}shift = 1.5\n"),
            "VALIDATION_ERROR",
            "SHIFT_TOO_SMALL",
        ),
    ] {
        let config = write_config(dir.path(), &text);
        let o = run("solve", &config, &out, &[]);
        assert_eq!(o.status.code(), Some(2));
        let err: Value = serde_json::from_slice(&o.stderr).unwrap();
        assert_eq!(err["code"], code);
        assert!(err["message"].as_str().unwrap().contains(needle));
    }
    let o = bin()
        .args(["solve", "--config", "/nonexistent/x.conf"])
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
    let o = bin().args(["frobnicate"]).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    let config = write_config(dir.path(), BASE);
    let o = run("solve", &config, &out, &["--threads", "0"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn no_convergence_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), &format!("{BASE}[solver]\nmax_iters = 5\n"));
    let o = run("solve", &config, &dir.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(3));
    let err: Value = serde_json::from_slice(&o.stderr).unwrap();
    assert_eq!(err["code"], "NO_CONVERGENCE");
}
