//! CLI contract tests: exit codes, run artifacts, report conversion,
//! determinism of ledgers, and the verify table's fault detection.

use std::path::Path;

use jflow::cli::{cmd_report, cmd_run, cmd_verify, RUN_ARTIFACTS};
use jflow::config::RunConfig;

fn trivial_config(out_dir: &Path) -> String {
    let cfg = RunConfig {
        scenario: "trivial".to_string(),
        seed: 1,
        out_dir: out_dir.display().to_string(),
        n: 2,
        m: 1,
        points_per_axis: 8,
        t_max: 0.1,
        record_interval: 0.05,
        stationary_tol: 1e-9,
        ..RunConfig::default()
    };
    cfg.to_config_string()
}

fn strict_quick_config(out_dir: &Path, seed: u64) -> String {
    let cfg = RunConfig {
        scenario: "strict".to_string(),
        seed,
        out_dir: out_dir.display().to_string(),
        n: 2,
        m: 1,
        points_per_axis: 16,
        t_max: 0.2,
        record_interval: 0.05,
        tol_converge: 1e-12,
        stationary_tol: 1e-9,
        ..RunConfig::default()
    };
    cfg.to_config_string()
}

#[test]
fn trivial_run_exits_clean_with_all_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let cfg_path = dir.path().join("trivial.cfg");
    std::fs::write(&cfg_path, trivial_config(&out)).unwrap();
    let code = cmd_run(&cfg_path, None, None, 0);
    assert_eq!(code, 0);
    for artifact in RUN_ARTIFACTS {
        assert!(out.join(artifact).exists(), "missing artifact {artifact}");
    }
    // stationary from the start: the ledger has exactly one effective row
    let ledger = std::fs::read(out.join("ledger.jsonl")).unwrap();
    let rows = jflow::ledger::parse_jsonl(&ledger).unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0].t, 0.0);
    assert!(rows[0].violations.is_empty());
}

#[test]
fn bad_config_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("bad.cfg");
    std::fs::write(&cfg_path, "[flow]\ntol_converge = -1\n").unwrap();
    assert_eq!(cmd_run(&cfg_path, None, None, 0), 1);
    // and the parse error names the field
    match RunConfig::parse("[flow]\ntol_converge = -1\n") {
        Err(e) => assert!(e.to_string().contains("tol_converge"), "{e}"),
        Ok(_) => panic!("negative tolerance accepted"),
    }
    // missing file also exits 1
    assert_eq!(cmd_run(&dir.path().join("nope.cfg"), None, None, 0), 1);
}

#[test]
fn same_config_and_seed_gives_bit_identical_ledgers() {
    let dir = tempfile::tempdir().unwrap();
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    let cfg_path = dir.path().join("strict.cfg");
    std::fs::write(&cfg_path, strict_quick_config(&out_a, 77)).unwrap();
    assert_eq!(cmd_run(&cfg_path, None, None, 0), 0);
    assert_eq!(cmd_run(&cfg_path, Some(&out_b), None, 0), 0);
    let a = std::fs::read(out_a.join("ledger.jsonl")).unwrap();
    let b = std::fs::read(out_b.join("ledger.jsonl")).unwrap();
    assert_eq!(a, b, "ledgers differ between identical runs");
    // a different seed must change the ledger
    let out_c = dir.path().join("c");
    let cfg2 = dir.path().join("strict2.cfg");
    std::fs::write(&cfg2, strict_quick_config(&out_c, 78)).unwrap();
    assert_eq!(cmd_run(&cfg2, None, None, 0), 0);
    let c = std::fs::read(out_c.join("ledger.jsonl")).unwrap();
    assert_ne!(a, c);
}

#[test]
fn report_roundtrip_and_truncation() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let cfg_path = dir.path().join("cfg.cfg");
    std::fs::write(&cfg_path, strict_quick_config(&out, 3)).unwrap();
    assert_eq!(cmd_run(&cfg_path, None, None, 0), 0);
    let ledger_path = out.join("ledger.jsonl");
    assert_eq!(cmd_report(&ledger_path, None), 0);
    let ledger = std::fs::read(&ledger_path).unwrap();
    let rows = jflow::ledger::parse_jsonl(&ledger).unwrap();
    let csv = std::fs::read_to_string(out.join("ledger.csv")).unwrap();
    assert_eq!(csv.lines().count(), rows.len() + 1);
    let plot = std::fs::read_to_string(out.join("plot.csv")).unwrap();
    assert_eq!(plot.lines().count(), rows.len() + 1);
    // truncated ledger: exit 1
    let mut broken = ledger.clone();
    broken.truncate(broken.len() - 7);
    let broken_path = dir.path().join("broken.jsonl");
    std::fs::write(&broken_path, broken).unwrap();
    assert_eq!(cmd_report(&broken_path, None), 1);
}

#[test]
fn verify_quick_suite_passes_and_detects_injected_fault() {
    assert_eq!(cmd_verify(None, None, 0, None), 0);
    assert_eq!(
        cmd_verify(None, None, 0, Some("elem_sym_partial_sign".to_string())),
        2
    );
}

#[test]
fn verify_configured_run_checks_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("vrun");
    let cfg_path = dir.path().join("cfg.cfg");
    std::fs::write(&cfg_path, strict_quick_config(&out, 5)).unwrap();
    assert_eq!(cmd_verify(None, Some(&cfg_path), 0, None), 0);
    for artifact in RUN_ARTIFACTS {
        assert!(out.join(artifact).exists());
    }
}

#[test]
fn binary_end_to_end_exit_codes() {
    let bin = env!("CARGO_BIN_EXE_jflow");
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("bin-run");
    let cfg_path = dir.path().join("cfg.cfg");
    std::fs::write(&cfg_path, trivial_config(&out)).unwrap();
    let status = std::process::Command::new(bin)
        .args(["run", "--config"])
        .arg(&cfg_path)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    let status = std::process::Command::new(bin)
        .args(["report", "--ledger"])
        .arg(out.join("ledger.jsonl"))
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    let status = std::process::Command::new(bin)
        .args(["run", "--config", "/definitely/not/there.cfg"])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(1));
}
