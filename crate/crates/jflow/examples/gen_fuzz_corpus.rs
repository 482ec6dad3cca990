//! Regenerates the fuzz seed corpora under fuzz/corpus/ from scratch.
//!
//! Usage: cargo run --example gen_fuzz_corpus

use std::path::PathBuf;

use jflow::config::RunConfig;
use jflow::grid::{PeriodicGrid, ScalarField};
use jflow::herm::HermForm;
use jflow::ledger::{write_jsonl, LedgerRow};
use jflow::snapshot::{write_scalar, write_setup, SnapshotMeta};

fn main() {
    let root = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fuzz/corpus");

    // config_parse: a valid default config, a scenario-parameter variant,
    // and near-miss malformed inputs
    let dir = root.join("config_parse");
    std::fs::create_dir_all(&dir).unwrap();
    std::fs::write(dir.join("default.cfg"), RunConfig::default().to_config_string()).unwrap();
    let mut boundary = RunConfig {
        scenario: "boundary".into(),
        method: "rkc".into(),
        t_max: 200.0,
        ..RunConfig::default()
    };
    boundary.scenario_params.insert("tilde_floor".into(), 0.8);
    std::fs::write(dir.join("boundary.cfg"), boundary.to_config_string()).unwrap();
    std::fs::write(dir.join("comment-heavy.cfg"), "# only comments\n\n# more\n").unwrap();
    std::fs::write(dir.join("bad-section.cfg"), "[floww]\nt_max = 1\n").unwrap();
    std::fs::write(dir.join("bad-value.cfg"), "[flow]\nt_max = banana\n").unwrap();

    // snapshot_decode: scalar and setup snapshots on a tiny grid, plus a
    // truncated one
    let dir = root.join("snapshot_decode");
    std::fs::create_dir_all(&dir).unwrap();
    let grid = PeriodicGrid::new(2, 4).unwrap();
    let phi = ScalarField::from_fn(grid, |x| (x[0] - 0.5) * (x[1] + 0.25)).unwrap();
    let meta = SnapshotMeta::new("phi", 2, 1, 4, 0.5, 2.0);
    let mut buf = Vec::new();
    write_scalar(&mut buf, &meta, &phi).unwrap();
    std::fs::write(dir.join("phi.snap"), &buf).unwrap();
    buf.truncate(buf.len() - 3);
    std::fs::write(dir.join("phi-truncated.snap"), &buf).unwrap();
    let omega = jflow::grid::FormField::constant(grid, &HermForm::identity(2)).unwrap();
    let chi = jflow::grid::FormField::constant(grid, &HermForm::from_diagonal(&[1.5, 0.5])).unwrap();
    let setup_meta = SnapshotMeta::new("setup", 2, 1, 4, 0.0, 2.0);
    let mut buf = Vec::new();
    write_setup(&mut buf, &setup_meta, &chi, &omega, &omega).unwrap();
    std::fs::write(dir.join("setup.snap"), &buf).unwrap();
    std::fs::write(dir.join("header-only.snap"), b"{\"schema\":\"jflow-field/1\",\"n\":2,\"m\":1,\"N\":4,\"t\":0.0,\"c\":1.0,\"kind\":\"phi\"}\n").unwrap();

    // ledger_parse: a small valid ledger and a truncated tail
    let dir = root.join("ledger_parse");
    std::fs::create_dir_all(&dir).unwrap();
    let rows: Vec<LedgerRow> = (0..3)
        .map(|k| LedgerRow {
            t: 0.25 * k as f64,
            dt: 0.01,
            sup_dphidt: 0.1,
            inf_dphidt: -0.1,
            ratio_min: 1.9,
            ratio_max: 2.1,
            phi_min: -0.2,
            phi_max: 0.3,
            w_max: 4.0,
            j: vec![0.01, 0.02, 0.03],
            combined: -0.4 + 0.01 * k as f64,
            dissipation: 1e-3,
            violations: Vec::new(),
        })
        .collect();
    let mut buf = Vec::new();
    write_jsonl(&mut buf, &rows).unwrap();
    std::fs::write(dir.join("ledger.jsonl"), &buf).unwrap();
    buf.truncate(buf.len() - 9);
    std::fs::write(dir.join("ledger-truncated.jsonl"), &buf).unwrap();
    std::fs::write(dir.join("empty-lines.jsonl"), b"\n\n\n").unwrap();

    println!("fuzz corpora regenerated under {}", root.display());
}
