use std::path::Path;
use std::process::Command;

use skt_morse::io::{
    branch_file, load_snapshot, read_csv, read_json, run_diagram, BranchKind, BranchRow,
    DiagramRow, ErrorRecord, EventRecord, RunConfig, RunRecord,
};

fn small_config(dir: &Path, lambda_max: f64, branches: Vec<BranchKind>) -> RunConfig {
    let mut config = RunConfig {
        output_dir: dir.to_path_buf(),
        branches,
        ..RunConfig::default()
    };
    config.grid.n = 40;
    config.continuation.lambda_max = lambda_max;
    config
}

fn cli() -> Command {
    Command::new(env!("CARGO_BIN_EXE_skt-morse"))
}

#[test]
fn below_the_first_eigenvalue_only_the_stable_zero_state_exists() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_config(dir.path(), 9.0, vec![BranchKind::Trivial]);
    let report = run_diagram(&config).unwrap();
    assert_eq!(report.exit_code(), 0);
    let rows: Vec<BranchRow> = read_csv(&branch_file(dir.path(), "trivial")).unwrap();
    assert!(rows.len() >= 2);
    assert!(rows
        .iter()
        .all(|r| r.morse_index == 0 && r.l2_norm_u == 0.0));
    assert!(rows.iter().all(|r| r.overlap_ratio.is_none()));
    let events: Vec<EventRecord> = read_json(&dir.path().join("events.json")).unwrap();
    assert!(events.is_empty());
}

#[test]
fn every_output_file_parses_back() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_config(
        dir.path(),
        45.0,
        vec![
            BranchKind::Trivial,
            BranchKind::SemitrivialU,
            BranchKind::Coexistence,
            BranchKind::Segregation2,
        ],
    );
    let report = run_diagram(&config).unwrap();
    assert_eq!(report.exit_code(), 0, "{:?}", report.failures);

    let record: RunRecord = read_json(&dir.path().join("run.json")).unwrap();
    assert_eq!(record.seed, config.seed);
    assert_eq!(record.config, config);
    assert_eq!(record.failures, 0);
    let errors: Vec<ErrorRecord> = read_json(&dir.path().join("errors.json")).unwrap();
    assert!(errors.is_empty());

    let names = [
        "trivial",
        "semitrivial_u",
        "coexistence",
        "segregation2_plus",
        "segregation2_minus",
    ];
    for name in names {
        let rows: Vec<BranchRow> = read_csv(&branch_file(dir.path(), name)).unwrap();
        let summary = record.branches.iter().find(|b| b.name == name).unwrap();
        assert_eq!(rows.len(), summary.points, "{name}");
        assert!(rows.windows(2).all(|w| w[1].arclength >= w[0].arclength));
    }
    let diagram: Vec<DiagramRow> = read_csv(&dir.path().join("diagram.csv")).unwrap();
    assert!(names.iter().all(|n| diagram.iter().any(|r| r.branch == *n)));
    let events: Vec<EventRecord> = read_json(&dir.path().join("events.json")).unwrap();
    assert!(events
        .iter()
        .any(|e| e.branch == "coexistence" && e.index_before == 1 && e.index_after == 2));
}

#[test]
fn runs_are_deterministic() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let kinds = vec![BranchKind::Coexistence, BranchKind::Segregation2];
    for dir in [&a, &b] {
        let report = run_diagram(&small_config(dir.path(), 45.0, kinds.clone())).unwrap();
        assert_eq!(report.exit_code(), 0);
    }
    for file in [
        "branch_coexistence.csv",
        "branch_segregation2_plus.csv",
        "branch_segregation2_minus.csv",
        "diagram.csv",
        "events.json",
    ] {
        let x = std::fs::read(a.path().join(file)).unwrap();
        let y = std::fs::read(b.path().join(file)).unwrap();
        assert!(x == y, "{file} differs between runs");
    }
}

#[test]
fn cli_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let status = cli()
        .args([
            "diagram",
            "--n",
            "40",
            "--lambda-max",
            "9",
            "--branches",
            "trivial",
            "--out",
        ])
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(status.status.code(), Some(0));
    assert!(out.join("run.json").exists());

    let bad_branch = cli()
        .args(["diagram", "--branches", "bogus"])
        .output()
        .unwrap();
    assert_eq!(bad_branch.status.code(), Some(3));

    let config = dir.path().join("bad.toml");
    std::fs::write(&config, "[grid]\nn = 1\n").unwrap();
    let bad_config = cli()
        .arg("diagram")
        .arg("--config")
        .arg(&config)
        .output()
        .unwrap();
    assert_eq!(bad_config.status.code(), Some(3));

    let snapshot = dir.path().join("broken.csv");
    let missing = cli()
        .arg("eig")
        .arg("--snapshot")
        .arg(&snapshot)
        .output()
        .unwrap();
    assert_eq!(missing.status.code(), Some(3));
    std::fs::write(&snapshot, "x,u,v\n0.1,0.2,oops\n").unwrap();
    std::fs::write(
        dir.path().join("broken.csv.json"),
        serde_json::json!({
            "params": skt_morse::ModelParams::benchmark(20.0),
            "n": 1,
            "branch_tag": "coexistence",
            "morse_index": null
        })
        .to_string(),
    )
    .unwrap();
    let bad_snapshot = cli()
        .arg("eig")
        .arg("--snapshot")
        .arg(&snapshot)
        .output()
        .unwrap();
    assert_eq!(bad_snapshot.status.code(), Some(3));

    // a corrector limited to one Newton iteration cannot start the branch
    let config = dir.path().join("strict.toml");
    std::fs::write(
        &config,
        "branches = [\"coexistence\"]\n[grid]\nn = 40\n[continuation.newton]\nmax_iters = 1\n",
    )
    .unwrap();
    let failed = cli()
        .arg("diagram")
        .arg("--config")
        .arg(&config)
        .arg("--out")
        .arg(dir.path().join("failed"))
        .output()
        .unwrap();
    assert_eq!(failed.status.code(), Some(4));
    let errors: Vec<ErrorRecord> = read_json(&dir.path().join("failed/errors.json")).unwrap();
    assert_eq!(errors.len(), 1);
    assert_eq!(errors[0].kind, "numerical");
}

#[test]
fn cli_snapshot_then_eig() {
    let dir = tempfile::tempdir().unwrap();
    let output = cli()
        .args([
            "snapshot",
            "--n",
            "40",
            "--branch",
            "coexistence",
            "--lambda",
            "20",
            "--out",
        ])
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(0));
    let printed: serde_json::Value = serde_json::from_slice(&output.stdout).unwrap();
    let path = printed["path"].as_str().unwrap().to_string();
    let snap = load_snapshot(Path::new(&path)).unwrap();
    assert_eq!(snap.state.n(), 40);
    assert_eq!(snap.meta.morse_index, Some(1));

    let eig = cli()
        .args(["eig", "--m", "4", "--snapshot", &path])
        .output()
        .unwrap();
    assert_eq!(eig.status.code(), Some(0));
    let spectrum: serde_json::Value = serde_json::from_slice(&eig.stdout).unwrap();
    assert_eq!(spectrum["morse_index"], 1);
    assert_eq!(spectrum["eigenvalues"].as_array().unwrap().len(), 4);
}
