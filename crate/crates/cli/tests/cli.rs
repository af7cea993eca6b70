use std::path::Path;
use std::process::{Command, Output};

fn emt_lab(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_emt-lab"))
        .args(args)
        .current_dir(cwd)
        .output()
        .unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn run_writes_artifacts_and_reports() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "p.json", r#"{"name": "pol", "module": "policy"}"#);
    let out = dir.path().join("out");
    let o = emt_lab(&["run", &cfg, "--out", out.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let report: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(report["scenario"], "pol");
    assert_eq!(report["passed"], true);
    assert!(out.join("pol.json").exists());
    assert!(out.join("pol.config.json").exists());
}

#[test]
fn config_errors_exit_2_and_list_every_problem() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "e.json",
        r#"{"name": "e", "module": "epistemic", "params": {"theta0": -1, "thetaO": 1}}"#,
    );
    let o = emt_lab(&["run", &cfg], dir.path());
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("params.theta0"), "{err}");
    assert!(err.contains("did you mean `theta0`"), "{err}");
}

#[test]
fn failing_checks_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "g.json",
        r#"{"name": "g", "module": "game", "params": {"game": {"p_disc": 0.0, "penalty_mode": {"kind": "finite", "omega": 0.0}}, "expect": {"all_c_is_spne": true}}}"#,
    );
    let o = emt_lab(&["run", &cfg], dir.path());
    assert_eq!(o.status.code(), Some(1), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn runtime_errors_exit_3_with_scenario_context() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "m.json",
        r#"{"name": "slow", "module": "mdp", "params": {"max_iter": 3}}"#,
    );
    let o = emt_lab(&["run", &cfg], dir.path());
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("scenario `slow`"));
}

#[test]
fn parallel_runs_match_sequential_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let a = write(dir.path(), "a.json", r#"{"name": "a", "module": "evt"}"#);
    let b = write(dir.path(), "b.json", r#"{"name": "b", "module": "epistemic"}"#);
    let seq = dir.path().join("seq");
    let par = dir.path().join("par");
    for (out, jobs) in [(&seq, "1"), (&par, "2")] {
        let o = emt_lab(
            &[
                "run",
                &a,
                &b,
                "--out",
                out.to_str().unwrap(),
                "--jobs",
                jobs,
                "--seed",
                "5",
            ],
            dir.path(),
        );
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    }
    for f in ["a.json", "b.csv", "a.config.json"] {
        assert_eq!(
            std::fs::read(seq.join(f)).unwrap(),
            std::fs::read(par.join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn clashing_output_paths_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let a = write(
        dir.path(),
        "a.json",
        r#"{"name": "a", "module": "policy", "output": {"format": "json", "path": "x.json"}}"#,
    );
    let b = write(
        dir.path(),
        "b.json",
        r#"{"name": "b", "module": "game", "output": {"format": "json", "path": "x.json"}}"#,
    );
    assert_eq!(emt_lab(&["run", &a, &b], dir.path()).status.code(), Some(2));
}

#[test]
fn schema_prints_fields_and_rejects_unknown_modules() {
    let dir = tempfile::tempdir().unwrap();
    let o = emt_lab(&["schema", "feedback"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(v["fields"]
        .as_array()
        .unwrap()
        .iter()
        .any(|f| f["name"] == "theta_meta"));
    assert_eq!(emt_lab(&["schema", "nope"], dir.path()).status.code(), Some(2));
}

#[test]
fn verify_passes_on_bundled_scenarios() {
    let dir = tempfile::tempdir().unwrap();
    let o = emt_lab(&["verify"], dir.path());
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert_eq!(o.status.code(), Some(0), "{stdout}");
    assert!(stdout.contains("[PASS] flywheel_default/aligned_dominance"));
    assert!(!stdout.contains("[FAIL]"));
}
