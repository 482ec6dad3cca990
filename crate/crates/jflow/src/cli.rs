//! Batch interface: `jflow run`, `jflow verify`, `jflow report`.
//!
//! Exit-code contract (so CI can tell configuration problems from
//! scientific violations apart):
//! - 0: clean completion
//! - 1: configuration or input-format error
//! - 2: verification failures or monitor violations
//! - 3: solver errors (stiffness, nonconvergence, lost admissibility)

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::config::RunConfig;
use crate::error::Error;
use crate::flow;
use crate::grid::ScalarField;
use crate::ledger;
use crate::monitors;
use crate::snapshot::{self, SnapshotMeta};
use crate::stationary;
use crate::verify::{Scale, Suite, VerifyOptions};

#[derive(Parser)]
#[command(
    name = "jflow",
    about = "Numerical laboratory for generalized J-flows on flat periodic model geometries"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Build the configured scenario, run the flow, write ledger, monitor
    /// report and snapshots.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Override the output directory from the config.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override the scenario seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads (0 = automatic); falls back to JFLOW_THREADS.
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Run the verification suites and print a pass/fail table.
    Verify {
        /// "all" for the full desk-scale acceptance suite; default quick.
        target: Option<String>,
        /// Verify a configured run instead: execute it and check monitors
        /// and artifacts.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        threads: Option<usize>,
        /// Harness self-test: inject a named fault that the suite must
        /// catch (e.g. elem_sym_partial_sign).
        #[arg(long, hide = true)]
        inject_fault: Option<String>,
    },
    /// Convert a JSON-lines ledger to CSV plus a plot-data file.
    Report {
        #[arg(long)]
        ledger: PathBuf,
        /// Output directory (defaults to the ledger's directory).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Process entry point used by the binary.
pub fn main() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            // clap handles --help/--version with its own successful exit
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match cli.cmd {
        Cmd::Run {
            config,
            out,
            seed,
            threads,
        } => cmd_run(&config, out.as_deref(), seed, resolve_threads(threads)),
        Cmd::Verify {
            target,
            config,
            threads,
            inject_fault,
        } => cmd_verify(
            target.as_deref(),
            config.as_deref(),
            resolve_threads(threads),
            inject_fault,
        ),
        Cmd::Report { ledger, out } => cmd_report(&ledger, out.as_deref()),
    }
}

fn resolve_threads(flag: Option<usize>) -> usize {
    flag.or_else(|| {
        std::env::var("JFLOW_THREADS")
            .ok()
            .and_then(|v| v.parse().ok())
    })
    .unwrap_or(0)
}

fn init_threads(threads: usize) {
    if threads > 0 {
        // the pool can only be configured once per process; later calls
        // keep the existing pool (results do not depend on thread count)
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global();
    }
}

fn exit_code_for(e: &Error) -> i32 {
    match e {
        Error::Config { .. } | Error::Argument(_) | Error::Format { .. } | Error::Io(_) => 1,
        Error::Stiffness { .. }
        | Error::Nonconvergence { .. }
        | Error::Geometry { .. }
        | Error::Precondition(_)
        | Error::Calibration(_)
        | Error::Scenario(_) => 3,
    }
}

/// Artifacts every run directory must contain.
pub const RUN_ARTIFACTS: [&str; 5] = [
    "config.cfg",
    "setup.snap",
    "ledger.jsonl",
    "monitor.json",
    "phi_end.snap",
];

/// Execute one configured run; returns the exit code.
pub fn cmd_run(
    config_path: &Path,
    out_override: Option<&Path>,
    seed_override: Option<u64>,
    threads: usize,
) -> i32 {
    init_threads(threads);
    let text = match std::fs::read_to_string(config_path) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: cannot read config {}: {e}", config_path.display());
            return 1;
        }
    };
    let mut cfg = match RunConfig::parse(&text) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return 1;
        }
    };
    if let Some(seed) = seed_override {
        cfg.seed = seed;
    }
    let out_dir = out_override
        .map(|p| p.to_path_buf())
        .unwrap_or_else(|| PathBuf::from(&cfg.out_dir));
    match run_configured(&cfg, &out_dir) {
        Ok(violations) => {
            if violations > 0 {
                eprintln!("run completed with {violations} monitor violations");
                2
            } else {
                0
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code_for(&e)
        }
    }
}

/// The run pipeline shared by `run` and `verify --config`. Returns the
/// number of monitor violations.
pub fn run_configured(cfg: &RunConfig, out_dir: &Path) -> crate::error::Result<usize> {
    std::fs::create_dir_all(out_dir)?;
    std::fs::write(out_dir.join("config.cfg"), cfg.to_config_string())?;

    let scenario = crate::cone::build_scenario(&cfg.scenario_spec())?;
    let setup = &scenario.setup;
    let meta = SnapshotMeta::new(
        "setup",
        setup.n,
        setup.m,
        setup.grid().points_per_axis(),
        0.0,
        setup.c,
    );
    snapshot::write_setup_file(
        &out_dir.join("setup.snap"),
        &meta,
        &setup.chi,
        &setup.chi_tilde,
        &setup.omega,
    )?;

    let mut opts = cfg.run_options()?;
    opts.rho = scenario.rho.clone();
    opts.mask_delta = scenario.mask_delta.min(opts.mask_delta).max(1e-12);
    let trajectory = flow::run(setup, &scenario.phi0, &opts)?;

    let psi = if cfg.solve_reference {
        Some(stationary::solve_elliptic(
            setup,
            &ScalarField::zeros(setup.grid()),
            cfg.stationary_tol,
        )?)
    } else {
        None
    };
    let report = monitors::monitor_all(
        &trajectory,
        psi.as_ref().map(|s| &s.psi),
        &cfg.monitor_slacks(),
    )?;

    let rows = ledger::rows_from_trajectory(&trajectory, &report);
    let mut buf = Vec::new();
    ledger::write_jsonl(&mut buf, &rows)?;
    std::fs::write(out_dir.join("ledger.jsonl"), buf)?;

    let monitor_json = serde_json::to_string_pretty(&report)
        .map_err(|e| Error::argument(format!("monitor serialization failed: {e}")))?;
    std::fs::write(out_dir.join("monitor.json"), monitor_json)?;

    let phi_meta = SnapshotMeta::new(
        "phi",
        setup.n,
        setup.m,
        setup.grid().points_per_axis(),
        trajectory.t_end,
        setup.c,
    );
    snapshot::write_scalar_file(&out_dir.join("phi_end.snap"), &phi_meta, &trajectory.phi_end)?;
    if let Some(psi) = &psi {
        let psi_meta = SnapshotMeta::new(
            "psi",
            setup.n,
            setup.m,
            setup.grid().points_per_axis(),
            0.0,
            setup.c,
        );
        snapshot::write_scalar_file(&out_dir.join("psi.snap"), &psi_meta, &psi.psi)?;
    }
    Ok(report.total_violations)
}

/// Run the verification suites; exit 0 iff everything passes.
pub fn cmd_verify(
    target: Option<&str>,
    config: Option<&Path>,
    threads: usize,
    inject_fault: Option<String>,
) -> i32 {
    init_threads(threads);
    if let Some(path) = config {
        return verify_configured_run(path);
    }
    let scale = match target {
        Some("all") => Scale::Full,
        None | Some("default") => Scale::Quick,
        Some(other) => {
            eprintln!("error: unknown verify target `{other}` (expected `all`)");
            return 1;
        }
    };
    let suite = Suite::new(VerifyOptions {
        scale,
        inject_fault,
    });
    let mut outcomes = suite.run_all();
    if scale == Scale::Quick {
        outcomes.extend(crate::verify::functional_identity_checks());
    }
    let mut all_pass = true;
    println!("{:-<100}", "");
    for o in &outcomes {
        println!("{}", o.line());
        all_pass &= o.passed;
    }
    println!("{:-<100}", "");
    if all_pass {
        println!("verification suite: all {} checks passed", outcomes.len());
        0
    } else {
        let failed: Vec<String> = outcomes
            .iter()
            .filter(|o| !o.passed)
            .map(|o| format!("criterion {} ({})", o.id, o.name))
            .collect();
        eprintln!("verification FAILED: {}", failed.join(", "));
        2
    }
}

fn verify_configured_run(config_path: &Path) -> i32 {
    let text = match std::fs::read_to_string(config_path) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: cannot read config {}: {e}", config_path.display());
            return 1;
        }
    };
    let cfg = match RunConfig::parse(&text) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return 1;
        }
    };
    let out_dir = PathBuf::from(&cfg.out_dir);
    match run_configured(&cfg, &out_dir) {
        Ok(violations) => {
            let mut ok = violations == 0;
            println!(
                "configured run `{}`: {} monitor violations",
                cfg.scenario, violations
            );
            for artifact in RUN_ARTIFACTS {
                let exists = out_dir.join(artifact).exists();
                println!(
                    "artifact {artifact}: {}",
                    if exists { "present" } else { "MISSING" }
                );
                ok &= exists;
            }
            if ok {
                0
            } else {
                2
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code_for(&e)
        }
    }
}

/// Convert a ledger to CSV and plot data; exit 1 with a byte offset on
/// malformed input.
pub fn cmd_report(ledger_path: &Path, out_dir: Option<&Path>) -> i32 {
    let bytes = match std::fs::read(ledger_path) {
        Ok(b) => b,
        Err(e) => {
            eprintln!("error: cannot read ledger {}: {e}", ledger_path.display());
            return 1;
        }
    };
    let rows = match ledger::parse_jsonl(&bytes) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return 1;
        }
    };
    let dir = out_dir
        .map(|p| p.to_path_buf())
        .unwrap_or_else(|| {
            ledger_path
                .parent()
                .map(|p| p.to_path_buf())
                .unwrap_or_else(|| PathBuf::from("."))
        });
    if let Err(e) = std::fs::create_dir_all(&dir) {
        eprintln!("error: cannot create output dir: {e}");
        return 1;
    }
    let csv = ledger::to_csv(&rows);
    let plot = ledger::plot_data(&rows);
    if let Err(e) = std::fs::write(dir.join("ledger.csv"), csv) {
        eprintln!("error: {e}");
        return 1;
    }
    if let Err(e) = std::fs::write(dir.join("plot.csv"), plot) {
        eprintln!("error: {e}");
        return 1;
    }
    println!(
        "report: {} rows -> {} and {}",
        rows.len(),
        dir.join("ledger.csv").display(),
        dir.join("plot.csv").display()
    );
    0
}
