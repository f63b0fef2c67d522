//! End-to-end checks of the `optneq` binary: subcommand behavior, output
//! files, and the exit-code contract (0 ok, 1 config/validation, 2 numerical,
//! 3 io).

use std::path::Path;
use std::process::{Command, Output};

use optneq::harness::{preset, ExperimentConfig};

fn optneq(args: &[&str], cwd: &Path, envs: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_optneq"));
    cmd.args(args).current_dir(cwd).env_remove("OPTNEQ_OUT_DIR");
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().expect("binary should spawn")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

/// A star-pp derivative small enough for subprocess tests: one schedule
/// variant, 200 iterations, a two-stage reference sweep.
fn small_config() -> ExperimentConfig {
    let mut cfg = preset("star-pp").unwrap();
    cfg.name = "cli-small".into();
    cfg.iterations = 200;
    cfg.log_every = 50;
    cfg.schedule.pairs = vec![(0.5, 0.3)];
    cfg.oracle.reg_sweep = vec![1.0, 0.1];
    cfg.oracle.tolerances = vec![1e-7, 1e-7];
    cfg.out_dir = None;
    cfg
}

#[test]
fn preset_dump_round_trips_through_check() {
    let dir = tempfile::tempdir().unwrap();
    let out = optneq(&["preset", "star-pp", "--dump"], dir.path(), &[]);
    assert!(out.status.success(), "dump failed: {}", stderr(&out));
    let cfg = ExperimentConfig::from_json(&stdout(&out)).unwrap();
    assert_eq!(cfg.name, "star-pp");

    let path = dir.path().join("dumped.json");
    std::fs::write(&path, stdout(&out)).unwrap();
    let check = optneq(&["check", path.to_str().unwrap()], dir.path(), &[]);
    assert!(check.status.success(), "check failed: {}", stderr(&check));
    let text = stdout(&check);
    assert!(text.contains("PASS"), "no PASS lines in:\n{text}");
    assert!(text.contains("all hard checks passed"), "unexpected summary:\n{text}");
}

#[test]
fn unknown_preset_exits_with_the_config_code() {
    let dir = tempfile::tempdir().unwrap();
    let out = optneq(&["preset", "no-such-preset"], dir.path(), &[]);
    assert_eq!(out.status.code(), Some(1), "stderr: {}", stderr(&out));
    assert!(stderr(&out).contains("error:"));
}

#[test]
fn check_rejects_malformed_json() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("broken.json");
    std::fs::write(&path, "{ this is not json").unwrap();
    let out = optneq(&["check", path.to_str().unwrap()], dir.path(), &[]);
    assert_eq!(out.status.code(), Some(1), "stderr: {}", stderr(&out));
    assert!(stderr(&out).contains("error:"));
}

#[test]
fn check_fails_on_inadmissible_exponents() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_config();
    cfg.schedule.pairs = vec![(0.9, 0.5)];
    let path = dir.path().join("bad-pair.json");
    std::fs::write(&path, cfg.to_json()).unwrap();
    let out = optneq(&["check", path.to_str().unwrap()], dir.path(), &[]);
    assert_eq!(out.status.code(), Some(1), "stdout: {}", stdout(&out));
    assert!(stdout(&out).contains("FAIL"), "no FAIL line in:\n{}", stdout(&out));
}

#[test]
fn run_writes_logs_and_honors_the_out_dir_env() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config();
    let path = dir.path().join("small.json");
    std::fs::write(&path, cfg.to_json()).unwrap();

    let parent = dir.path().join("all-runs");
    let out = optneq(
        &["run", path.to_str().unwrap()],
        dir.path(),
        &[("OPTNEQ_OUT_DIR", parent.to_str().unwrap())],
    );
    assert!(out.status.success(), "run failed: {}", stderr(&out));

    let run_dir = parent.join("cli-small");
    assert!(run_dir.join("manifest.json").is_file(), "missing manifest");
    let csv = run_dir.join("cli-small-a0.5-b0.3.csv");
    assert!(csv.is_file(), "missing metrics log at {}", csv.display());
    let text = std::fs::read_to_string(&csv).unwrap();
    assert_eq!(
        text.lines().next().unwrap(),
        "k,lower,upper,consensus_x,consensus_y,dist_tikhonov,dist_opt"
    );
}

#[test]
fn run_reports_missing_config_as_an_io_failure() {
    let dir = tempfile::tempdir().unwrap();
    let out = optneq(&["run", "definitely/not/here.json"], dir.path(), &[]);
    assert_eq!(out.status.code(), Some(3), "stderr: {}", stderr(&out));
}

#[test]
fn run_surfaces_divergence_through_the_numerical_code() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_config();
    cfg.name = "cli-blowup".into();
    cfg.schedule.step_coef = 1e6;
    let path = dir.path().join("blowup.json");
    std::fs::write(&path, cfg.to_json()).unwrap();
    let out = optneq(
        &[
            "run",
            path.to_str().unwrap(),
            "--out",
            dir.path().join("blowup-out").to_str().unwrap(),
            "--force",
        ],
        dir.path(),
        &[],
    );
    assert_eq!(out.status.code(), Some(2), "stderr: {}", stderr(&out));
    assert!(
        stderr(&out).contains("aborted"),
        "expected an aborted-variant report, got: {}",
        stderr(&out)
    );
}

#[test]
fn oracle_writes_a_solution_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config();
    let cfg_path = dir.path().join("small.json");
    std::fs::write(&cfg_path, cfg.to_json()).unwrap();
    let sol_path = dir.path().join("solution.json");
    let out = optneq(
        &[
            "oracle",
            cfg_path.to_str().unwrap(),
            "--out",
            sol_path.to_str().unwrap(),
        ],
        dir.path(),
        &[],
    );
    assert!(out.status.success(), "oracle failed: {}", stderr(&out));
    let value: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&sol_path).unwrap()).unwrap();
    let x_star = value["x_star"].as_array().unwrap();
    assert_eq!(x_star.len(), 10, "expected one coordinate per agent");
    assert_eq!(value["trajectory"].as_array().unwrap().len(), 2);
}

#[test]
fn rates_fits_a_decay_exponent_from_a_metrics_log() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config();
    let cfg_path = dir.path().join("small.json");
    std::fs::write(&cfg_path, cfg.to_json()).unwrap();
    let out_dir = dir.path().join("out");
    let run = optneq(
        &[
            "run",
            cfg_path.to_str().unwrap(),
            "--out",
            out_dir.to_str().unwrap(),
        ],
        dir.path(),
        &[],
    );
    assert!(run.status.success(), "run failed: {}", stderr(&run));

    let csv = out_dir.join("cli-small-a0.5-b0.3.csv");
    let out = optneq(
        &[
            "rates",
            csv.to_str().unwrap(),
            "--field",
            "consensus_x",
            "--exponent",
            "0.2",
            "--gamma",
            "10",
            "--window",
            "50:200",
        ],
        dir.path(),
        &[],
    );
    assert!(out.status.success(), "rates failed: {}", stderr(&out));
    let fit: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert!(fit["slope"].is_number());
    assert!(fit["bound_const"].as_f64().unwrap() > 0.0);

    let bad = optneq(
        &[
            "rates",
            csv.to_str().unwrap(),
            "--field",
            "no-such-column",
            "--exponent",
            "0.2",
            "--gamma",
            "10",
            "--window",
            "50:200",
        ],
        dir.path(),
        &[],
    );
    assert_eq!(bad.status.code(), Some(1), "stderr: {}", stderr(&bad));
}
