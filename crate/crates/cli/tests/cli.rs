use std::path::{Path, PathBuf};
use std::process::{Command as Process, Output};

use filter_audit_cli::report::run_meta;
use filter_audit_cli::{parse_config, render, Command};

fn configs() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn cli(args: &[&str], out: &Path) -> Output {
    Process::new(env!("CARGO_BIN_EXE_filter-audit"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .unwrap()
}

const ALL: [(Command, &str); 8] = [
    (Command::Audit, "audit.conf"),
    (Command::AuditBatch, "audit-batch.conf"),
    (Command::Mc, "fpr.conf"),
    (Command::Mc, "power.conf"),
    (Command::Mc, "gullibility.conf"),
    (Command::Cost, "cost.conf"),
    (Command::Diversity, "diversity.conf"),
    (Command::DecisionDemo, "decision.conf"),
];

#[test]
fn every_shipped_config_round_trips() {
    for (command, file) in ALL {
        let text = std::fs::read_to_string(configs().join(file)).unwrap();
        let parsed = parse_config(command, &text, &[]).unwrap();
        let echo = run_meta(&parsed);
        assert_eq!(parse_config(command, &echo, &[]).unwrap(), parsed, "{file}");
        assert_eq!(render(&parse_config(command, &echo, &[]).unwrap()), render(&parsed));
    }
}

#[test]
fn golden_run_meta() {
    let text = std::fs::read_to_string(configs().join("audit.conf")).unwrap();
    let parsed = parse_config(Command::Audit, &text, &[]).unwrap();
    let golden = std::fs::read_to_string(
        PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden/audit.run.meta"),
    )
    .unwrap();
    assert_eq!(run_meta(&parsed), golden);
    assert_eq!(parse_config(Command::Audit, &golden, &[]).unwrap(), parsed);
}

#[test]
fn h0_verdict_exits_zero() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = configs().join("audit.conf");
    // same distribution on both sides, huge tolerance: H0 for certain
    let out = cli(
        &[
            "audit",
            "--config",
            cfg.to_str().unwrap(),
            "--set",
            "platform.tokens.x'=0, 1",
            "--set",
            "audit.epsilon=0",
        ],
        tmp.path(),
    );
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(tmp.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(report["hypothesis"], "H0");
    assert_eq!(report["threshold"], "inf");
    assert!(tmp.path().join("run.meta").exists());
}

#[test]
fn failed_batch_exits_two() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = configs().join("audit-batch.conf");
    let out = cli(
        &[
            "audit-batch",
            "--config",
            cfg.to_str().unwrap(),
            "--set",
            "platform.tokens.b=0.5",
            "--set",
            "audit.alpha=0",
        ],
        tmp.path(),
    );
    assert_eq!(out.status.code(), Some(2));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(tmp.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(report["passed"], false);
}

#[test]
fn unwritable_outdir_exits_one_with_path() {
    let tmp = tempfile::tempdir().unwrap();
    let blocker = tmp.path().join("file");
    std::fs::write(&blocker, "not a directory").unwrap();
    let outdir = blocker.join("out");
    let cfg = configs().join("diversity.conf");
    let out = cli(&["diversity", "--config", cfg.to_str().unwrap()], &outdir);
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains(outdir.to_str().unwrap()), "{stderr}");
}

#[test]
fn config_errors_exit_one() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = configs().join("audit.conf");
    let out = cli(
        &["audit", "--config", cfg.to_str().unwrap(), "--set", "audit.epsilon=1.5"],
        tmp.path(),
    );
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("epsilon must lie in [0,1]"));
    assert!(!tmp.path().join("report.json").exists());
}

#[test]
fn curves_csv_and_claim() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = configs().join("power.conf");
    let out = cli(
        &["mc", "--config", cfg.to_str().unwrap(), "--set", "experiment.trials=500"],
        tmp.path(),
    );
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(tmp.path().join("curves.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "series,abscissa,estimate,std_error,half_width,trials,target"
    );
    assert_eq!(lines.count(), 3);

    // an impossible claim turns the run into a failure
    let out = cli(
        &[
            "mc",
            "--config",
            cfg.to_str().unwrap(),
            "--set",
            "experiment.trials=500",
            "--set",
            "experiment.claim=estimate >= 2",
        ],
        tmp.path(),
    );
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn decision_demo_writes_records() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = configs().join("decision.conf");
    let out = cli(&["decision-demo", "--config", cfg.to_str().unwrap()], tmp.path());
    assert_eq!(out.status.code(), Some(0));
    let csv = std::fs::read_to_string(tmp.path().join("decisions.csv")).unwrap();
    assert!(csv.starts_with("query_id,choice,score,eta\n"), "{csv}");
    assert_eq!(csv.lines().count(), 3);
}

#[test]
fn default_outdir_from_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = configs().join("diversity.conf");
    let out = Process::new(env!("CARGO_BIN_EXE_filter-audit"))
        .args(["diversity", "--config", cfg.to_str().unwrap()])
        .env("FILTER_AUDIT_OUT", tmp.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert!(tmp.path().join("report.json").exists());
}
