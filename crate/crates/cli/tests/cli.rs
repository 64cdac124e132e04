use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn errctl(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_errctl"))
        .args(args)
        .current_dir(dir)
        .output()
        .unwrap()
}

#[test]
fn two_job_schedule_reports_cost() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("two_jobs.csv"), "id,T,a\np,2,1\nq,1,3\n").unwrap();
    let out = errctl(
        dir.path(),
        &[
            "schedule",
            "--jobs",
            "two_jobs.csv",
            "--criterion",
            "sum",
            "--method",
            "wspt",
        ],
    );
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(
        text,
        "position,id,V,contribution\n1,q,1,3\n2,p,3,3\n# cost,6\n"
    );
}

#[test]
fn harmonic_free_program_constant() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("empty.json"), r#"{"harmonics": []}"#).unwrap();
    let out = errctl(
        dir.path(),
        &[
            "synth-program",
            "--model",
            "empty.json",
            "--e0",
            "1",
            "--t0",
            "0",
            "--t1",
            "1",
            "--mode",
            "paper-h0",
            "--out",
            "law.json",
        ],
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let law: serde_json::Value =
        serde_json::from_slice(&fs::read(dir.path().join("law.json")).unwrap()).unwrap();
    assert!((law["C"].as_f64().unwrap() + 0.449490).abs() < 1e-6);
    assert!(dir.path().join("law.json.manifest.json").exists());
}

#[test]
fn cost_of_simulated_program() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("empty.json"), r#"{"harmonics": []}"#).unwrap();
    let d = dir.path();
    assert!(errctl(
        d,
        &[
            "synth-program",
            "--model",
            "empty.json",
            "--e0",
            "1",
            "--t1",
            "1",
            "--out",
            "law.json"
        ]
    )
    .status
    .success());
    assert!(errctl(
        d,
        &[
            "simulate",
            "--model",
            "empty.json",
            "--law",
            "law.json",
            "--out",
            "traj.csv"
        ]
    )
    .status
    .success());
    let out = errctl(d, &["cost", "--trajectory", "traj.csv"]);
    let line = String::from_utf8(out.stdout).unwrap();
    let value: f64 = line.trim().strip_prefix("I,").unwrap().parse().unwrap();
    // ∫((C−t)/2)² dt + E(1) with C = 2 − √6
    let c = 2.0 - 6f64.sqrt();
    let exact = ((c.powi(3) - (c - 1.0).powi(3)) / 12.0) + 1.0 + c / 2.0 - 0.25;
    assert!((value - exact).abs() < 1e-9, "{value} vs {exact}");
}

#[test]
fn exit_codes_follow_error_class() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("empty.json"), r#"{"harmonics": []}"#).unwrap();
    assert_eq!(errctl(d, &["no-such-command"]).status.code(), Some(1));
    assert_eq!(errctl(d, &["--help"]).status.code(), Some(0));
    let bad = errctl(
        d,
        &[
            "synth-feedback",
            "--model",
            "empty.json",
            "--e0",
            "0",
            "--t1",
            "1",
            "--out",
            "f.csv",
        ],
    );
    assert_eq!(bad.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&bad.stderr).contains("e0"));
    assert_eq!(
        errctl(d, &["cost", "--trajectory", "missing.csv"])
            .status
            .code(),
        Some(3)
    );
    fs::write(d.join("jobs.csv"), "id,T,a\np,1,1\n").unwrap();
    let due = errctl(
        d,
        &["schedule", "--jobs", "jobs.csv", "--criterion", "due_max"],
    );
    assert!(String::from_utf8_lossy(&due.stderr).contains("MissingDueDate"));
    fs::write(d.join("jobs.csv"), "id,T\np,1\n").unwrap();
    assert_eq!(
        errctl(d, &["schedule", "--jobs", "jobs.csv"]).status.code(),
        Some(3)
    );
}

#[test]
fn feedback_law_round_trips_through_simulation() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("empty.json"), r#"{"harmonics": []}"#).unwrap();
    assert!(errctl(
        d,
        &[
            "synth-feedback",
            "--model",
            "empty.json",
            "--e0",
            "1",
            "--t1",
            "1",
            "--out",
            "fb.csv"
        ]
    )
    .status
    .success());
    let out = errctl(
        d,
        &[
            "simulate",
            "--model",
            "empty.json",
            "--law",
            "fb.csv",
            "--h",
            "0.01",
            "--out",
            "traj.csv",
        ],
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = fs::read_to_string(d.join("traj.csv")).unwrap();
    let last = text.lines().rfind(|l| !l.starts_with('#')).unwrap();
    let e_end: f64 = last.split(',').nth(1).unwrap().parse().unwrap();
    assert!((e_end - 1.5526).abs() < 1e-3, "{e_end}");
}
