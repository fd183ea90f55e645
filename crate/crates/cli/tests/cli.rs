//! End-to-end checks of the binary: exit codes, output files, resume.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_speclease")
}

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, body).unwrap();
    path
}

fn run(args: &[&str]) -> Output {
    Command::new(bin()).args(args).output().unwrap()
}

fn small_config(points: &str) -> String {
    format!(
        r#"
[channel]
edge_snr_db = -6.0

[utility]
family = "alpha_fair"
alpha = 1.0

[prices]
reservation = 1.0
utility_scale = 5.0

[prices.on_demand]
lo = 0.8
hi = 1.8

[traffic]
k_low = 0
k_up = 4

[grid]
variable = "cs_cv"
points = {points}
sessions_per_point = 1000
schemes = ["two_stage", "reservation_only", "on_demand_only"]

[run]
seed = 7
"#
    )
}

#[test]
fn solve_reports_no_reservation_with_reason() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        "dominated.toml",
        r#"
[channel]
edge_snr_db = -6.0

[utility]
family = "alpha_fair"
alpha = 1.0

[prices]
reservation = 1.0
utility_scale = 5.0

[prices.on_demand]
lo = 0.5
hi = 1.5

[traffic]
k_low = 0
k_up = 16
"#,
    );
    let out = dir.path().join("out");
    let result = run(&["solve", config.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(result.status.success());
    let plan: serde_json::Value =
        serde_json::from_slice(&std::fs::read(out.join("leaseplan.json")).unwrap()).unwrap();
    assert_eq!(plan["method"], "no_reservation");
    assert_eq!(plan["reservation"], 0.0);
    assert!(plan["reason"]
        .as_str()
        .unwrap()
        .contains("does not exceed the reservation price"));
}

#[test]
fn solve_sgd_path_tracks_the_analytic_root() {
    // force the SGD route by disabling the fast path; a short run must
    // still land near the bisection root of 25
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        "sgd.toml",
        r#"
[channel]
edge_snr_db = -6.0

[utility]
family = "alpha_fair"
alpha = 1.0
pf_fast_path = false

[prices]
reservation = 1.0
utility_scale = 5.0

[prices.on_demand]
lo = 0.8
hi = 1.8

[traffic]
k_low = 0
k_up = 16

[sgd]
iterations = 600
gradient_check_samples = 0

[run]
seed = 11
"#,
    );
    let out = dir.path().join("out");
    let result = run(&["solve", config.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(result.status.success());
    let plan: serde_json::Value =
        serde_json::from_slice(&std::fs::read(out.join("leaseplan.json")).unwrap()).unwrap();
    assert_eq!(plan["method"], "sgd");
    let reservation = plan["reservation"].as_f64().unwrap();
    assert!(
        (reservation - 25.0).abs() < 4.0,
        "short SGD run at {reservation}, root 25"
    );
    let trace = std::fs::read_to_string(out.join("sgd_trace.csv")).unwrap();
    assert_eq!(trace.lines().count(), 600); // header + 599 updates
    assert!(trace.starts_with("iteration,reservation,gradient,step_size"));
}

#[test]
fn validate_outcome_is_seed_stable() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "exp.toml", &small_config("[0.1]"));
    for seed in ["1", "2", "3", "4", "5"] {
        let out = dir.path().join(format!("out{seed}"));
        let result = run(&[
            "validate",
            config.to_str().unwrap(),
            "--seed",
            seed,
            "--out",
            out.to_str().unwrap(),
        ]);
        assert!(result.status.success(), "seed {seed} failed validate");
        let report: serde_json::Value =
            serde_json::from_slice(&std::fs::read(out.join("validate_report.json")).unwrap())
                .unwrap();
        assert_eq!(report["passed"], true);
        assert!(report["checks"].as_array().unwrap().len() >= 8);
    }
}

#[test]
fn sweep_writes_the_documented_schema() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "exp.toml", &small_config("[0.1, 0.3]"));
    let out = dir.path().join("out");
    let result = run(&["sweep", config.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(result.status.success());
    let csv = std::fs::read_to_string(out.join("sweep.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "sweep_value,scheme,n_r,mean_n_s,se_n_s,mean_total_sc,mean_cost_per_sc,mean_surplus,se_surplus"
    );
    assert_eq!(lines.count(), 6); // 2 points x 3 schemes
}

#[test]
fn sweep_resume_completes_partial_runs_idempotently() {
    let dir = tempfile::tempdir().unwrap();
    let partial = write_config(dir.path(), "one.toml", &small_config("[0.1]"));
    let full = write_config(dir.path(), "two.toml", &small_config("[0.1, 0.3]"));

    // fresh full run as the reference
    let reference_out = dir.path().join("fresh");
    assert!(run(&["sweep", full.to_str().unwrap(), "--out", reference_out.to_str().unwrap()])
        .status
        .success());
    let reference = std::fs::read(reference_out.join("sweep.csv")).unwrap();

    // partial run, then resume with the full grid
    let out = dir.path().join("resumed");
    assert!(run(&["sweep", partial.to_str().unwrap(), "--out", out.to_str().unwrap()])
        .status
        .success());
    let resumed = run(&[
        "sweep",
        full.to_str().unwrap(),
        "--resume",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(resumed.status.success());
    let stdout = String::from_utf8_lossy(&resumed.stdout);
    assert!(stdout.contains("reusing"), "resume did not reuse rows: {stdout}");
    assert_eq!(std::fs::read(out.join("sweep.csv")).unwrap(), reference);

    // resuming a complete file recomputes nothing and changes nothing
    let again = run(&[
        "sweep",
        full.to_str().unwrap(),
        "--resume",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(again.status.success());
    let stdout = String::from_utf8_lossy(&again.stdout);
    assert!(!stdout.contains("sessions in"), "complete resume recomputed: {stdout}");
    assert_eq!(std::fs::read(out.join("sweep.csv")).unwrap(), reference);
}

#[test]
fn config_errors_exit_with_code_2() {
    let dir = tempfile::tempdir().unwrap();

    let missing = run(&["solve", dir.path().join("nope.toml").to_str().unwrap()]);
    assert_eq!(missing.status.code(), Some(2));

    let malformed = write_config(dir.path(), "bad.toml", "not = [valid");
    assert_eq!(run(&["solve", malformed.to_str().unwrap()]).status.code(), Some(2));

    let unknown_field = write_config(
        dir.path(),
        "unknown.toml",
        &small_config("[0.1]").replace("[run]", "[run]\nbogus = 1"),
    );
    assert_eq!(run(&["solve", unknown_field.to_str().unwrap()]).status.code(), Some(2));

    let empty_grid = write_config(
        dir.path(),
        "empty.toml",
        &small_config("[]"),
    );
    assert_eq!(run(&["sweep", empty_grid.to_str().unwrap()]).status.code(), Some(2));

    let no_grid = write_config(
        dir.path(),
        "nogrid.toml",
        &small_config("[0.1]").replace("[grid]", "[grid_disabled]"),
    );
    // unknown section is itself a parse error under deny_unknown_fields
    assert_eq!(run(&["sweep", no_grid.to_str().unwrap()]).status.code(), Some(2));

    let usage = run(&["frobnicate"]);
    assert_eq!(usage.status.code(), Some(2));
}

#[test]
fn sweep_without_grid_section_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let mut body = small_config("[0.1]");
    let grid_start = body.find("[grid]").unwrap();
    let run_start = body.find("[run]").unwrap();
    body.replace_range(grid_start..run_start, "");
    let config = write_config(dir.path(), "nogrid.toml", &body);
    let result = run(&["sweep", config.to_str().unwrap()]);
    assert_eq!(result.status.code(), Some(2));
    // solve still works without a grid
    let out = dir.path().join("out");
    assert!(run(&["solve", config.to_str().unwrap(), "--out", out.to_str().unwrap()])
        .status
        .success());
}
