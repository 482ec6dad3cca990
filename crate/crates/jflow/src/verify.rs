//! The verification suite: oracle equivalences, conservation laws,
//! monotonicity, maximum principles, convergence and solver agreement.
//!
//! Each criterion is a self-contained check returning a pass/fail outcome
//! with a one-line detail. The full scale runs the desk-scale configuration
//! (n = 2 at N = 64, n = 3 at N = 32, 1000 oracle draws, boundary run to
//! t = 200); the quick scale shrinks grids and horizons for a fast smoke
//! pass. Expensive trajectories are shared between criteria through lazy
//! fixtures.

use std::sync::OnceLock;
use std::time::Instant;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::cone::{self, build_scenario, Classification, Scenario, ScenarioSpec};
use crate::error::Result;
use crate::flow::{self, Method, RunOptions, StoreFields, Trajectory};
use crate::functionals;
use crate::geometry;
use crate::grid::{FormField, PeriodicGrid, ScalarField};
use crate::herm::{self, HermForm};
use crate::monitors::{self, MonitorSlacks};
use crate::smallmat::{idx, C64};
use crate::stationary::{self, EllipticSolution};

#[derive(Debug, Clone)]
pub struct CriterionOutcome {
    pub id: usize,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub elapsed_s: f64,
}

impl CriterionOutcome {
    pub fn line(&self) -> String {
        format!(
            "[criterion {:>2}] {} — {} ({:.1}s): {}",
            self.id,
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.elapsed_s,
            self.detail
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scale {
    Quick,
    Full,
}

#[derive(Debug, Clone)]
pub struct VerifyOptions {
    pub scale: Scale,
    /// Harness self-test hook: inject a named fault so the suite must
    /// detect it (e.g. "elem_sym_partial_sign").
    pub inject_fault: Option<String>,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions {
            scale: Scale::Quick,
            inject_fault: None,
        }
    }
}

struct RunArtifacts {
    scenario: Scenario,
    trajectory: Trajectory,
    psi: Option<EllipticSolution>,
    elapsed_s: f64,
}

/// Lazily-built shared fixtures for the run-based criteria.
pub struct Suite {
    opts: VerifyOptions,
    strict: OnceLock<Result<RunArtifacts>>,
    converged: OnceLock<Result<RunArtifacts>>,
    boundary: OnceLock<Result<RunArtifacts>>,
    n3: OnceLock<Result<RunArtifacts>>,
}

fn seeded(name: &str, base: u64) -> u64 {
    let mut h = base;
    for b in name.bytes() {
        h = h.wrapping_mul(0x100000001B3).wrapping_add(b as u64);
    }
    h
}

impl Suite {
    pub fn new(opts: VerifyOptions) -> Suite {
        Suite {
            opts,
            strict: OnceLock::new(),
            converged: OnceLock::new(),
            boundary: OnceLock::new(),
            n3: OnceLock::new(),
        }
    }

    fn full(&self) -> bool {
        self.opts.scale == Scale::Full
    }

    fn strict_spec(&self) -> ScenarioSpec {
        let nn = if self.full() { 64 } else { 16 };
        ScenarioSpec::named("strict", 2, 1, nn, seeded("strict", 2024))
    }

    /// Strict-cone run to a fixed horizon with RK4 (criteria 2–4, 6, 8).
    fn strict_run(&self) -> &Result<RunArtifacts> {
        self.strict.get_or_init(|| {
            let start = Instant::now();
            let sc = build_scenario(&self.strict_spec())?;
            let opts = RunOptions {
                method: Method::Rk4,
                t_max: if self.full() { 5.0 } else { 0.8 },
                tol_converge: 0.0,
                record_interval: 0.005,
                store_fields: StoreFields::EndsOnly,
                ..RunOptions::default()
            };
            let trajectory = flow::run(&sc.setup, &sc.phi0, &opts)?;
            let psi = stationary::solve_elliptic(
                &sc.setup,
                &ScalarField::zeros(sc.setup.grid()),
                1e-10,
            )?;
            Ok(RunArtifacts {
                scenario: sc,
                trajectory,
                psi: Some(psi),
                elapsed_s: start.elapsed().as_secs_f64(),
            })
        })
    }

    /// Strict-cone run to convergence with RKC plus the Newton comparison
    /// (criterion 5).
    fn converged_run(&self) -> &Result<RunArtifacts> {
        self.converged.get_or_init(|| {
            let start = Instant::now();
            let sc = build_scenario(&self.strict_spec())?;
            let opts = RunOptions {
                method: Method::Rkc { stages: 0 },
                t_max: 100.0,
                tol_converge: 1e-8,
                record_interval: 0.05,
                dt_max: Some(0.01),
                store_fields: StoreFields::EndsOnly,
                ..RunOptions::default()
            };
            let trajectory = flow::run(&sc.setup, &sc.phi0, &opts)?;
            let psi = stationary::solve_elliptic(
                &sc.setup,
                &ScalarField::zeros(sc.setup.grid()),
                1e-11,
            )?;
            Ok(RunArtifacts {
                scenario: sc,
                trajectory,
                psi: Some(psi),
                elapsed_s: start.elapsed().as_secs_f64(),
            })
        })
    }

    /// Calibrated boundary-case run (criteria 6–8).
    fn boundary_run(&self) -> &Result<RunArtifacts> {
        self.boundary.get_or_init(|| {
            let start = Instant::now();
            let nn = if self.full() { 64 } else { 16 };
            let spec = ScenarioSpec::named("boundary", 2, 1, nn, seeded("boundary", 2024));
            let sc = build_scenario(&spec)?;
            let opts = RunOptions {
                method: Method::Rkc { stages: 0 },
                t_max: if self.full() { 200.0 } else { 10.0 },
                tol_converge: 1e-10,
                record_interval: if self.full() { 0.5 } else { 0.1 },
                dt_max: Some(0.004),
                store_fields: StoreFields::EndsOnly,
                ..RunOptions::default()
            };
            let trajectory = flow::run(&sc.setup, &sc.phi0, &opts)?;
            let psi = stationary::solve_elliptic(
                &sc.setup,
                &ScalarField::zeros(sc.setup.grid()),
                1e-6,
            )?;
            Ok(RunArtifacts {
                scenario: sc,
                trajectory,
                psi: Some(psi),
                elapsed_s: start.elapsed().as_secs_f64(),
            })
        })
    }

    /// Short n = 3 strict run (suite coverage for criteria 6 and 8).
    fn n3_run(&self) -> &Result<RunArtifacts> {
        self.n3.get_or_init(|| {
            let start = Instant::now();
            let nn = if self.full() { 32 } else { 8 };
            let spec = ScenarioSpec::named("strict", 3, 2, nn, seeded("n3", 2024));
            let sc = build_scenario(&spec)?;
            let opts = RunOptions {
                method: Method::Rkc { stages: 0 },
                t_max: 2.0,
                tol_converge: 1e-9,
                record_interval: 0.02,
                dt_max: Some(0.002),
                store_fields: StoreFields::EndsOnly,
                ..RunOptions::default()
            };
            let trajectory = flow::run(&sc.setup, &sc.phi0, &opts)?;
            let psi = stationary::solve_elliptic(
                &sc.setup,
                &ScalarField::zeros(sc.setup.grid()),
                1e-9,
            )?;
            Ok(RunArtifacts {
                scenario: sc,
                trajectory,
                psi: Some(psi),
                elapsed_s: start.elapsed().as_secs_f64(),
            })
        })
    }

    pub fn run_all(&self) -> Vec<CriterionOutcome> {
        vec![
            self.criterion_1(),
            self.criterion_2(),
            self.criterion_3(),
            self.criterion_4(),
            self.criterion_5(),
            self.criterion_6(),
            self.criterion_7(),
            self.criterion_8(),
            self.criterion_9(),
            self.criterion_10(),
        ]
    }

    /// Wedge-algebra oracle equivalence across n ∈ {2,3,4}.
    pub fn criterion_1(&self) -> CriterionOutcome {
        let start = Instant::now();
        let draws = if self.full() { 1000 } else { 150 };
        let faulty_partial = self.opts.inject_fault.as_deref() == Some("elem_sym_partial_sign");
        let mut worst_ratio = 0.0f64;
        let mut worst_cone = 0.0f64;
        let mut failed = None;
        let mut rng = ChaCha8Rng::seed_from_u64(0xACCE55);
        'outer: for n in 2..=4usize {
            for _ in 0..draws {
                let m = rng.gen_range(1..n);
                let a = random_pd(&mut rng, n);
                let b = random_pd(&mut rng, n);
                // mixed_wedge_ratio against the polarization oracle:
                // ratio·MD(A×n) = n·MD(A×m, B×(n−m))
                let ratio = match herm::mixed_wedge_ratio(&a, &b, m, n) {
                    Ok(r) => r,
                    Err(e) => {
                        failed = Some(format!("mixed_wedge_ratio errored: {e}"));
                        break 'outer;
                    }
                };
                let md_an = herm::mixed_discriminant(&vec![a.clone(); n]).unwrap();
                let mut mixed: Vec<HermForm> = vec![a.clone(); m];
                mixed.extend(vec![b.clone(); n - m]);
                let md_mix = herm::mixed_discriminant(&mixed).unwrap();
                let lhs = ratio * md_an;
                let rhs = n as f64 * md_mix;
                let rel = (lhs - rhs).abs() / rhs.abs().max(1e-300);
                worst_ratio = worst_ratio.max(rel);
                if rel > 1e-10 {
                    failed = Some(format!(
                        "mixed_wedge_ratio oracle equivalence violated: rel err {rel:.3e} (n={n}, m={m})"
                    ));
                    break 'outer;
                }
                // cone coefficients against the polarization oracle
                let mu: Vec<f64> = (0..n).map(|_| rng.gen_range(0.2..3.0)).collect();
                let c: f64 = rng.gen_range(0.2..3.0);
                let kappa = cone_kappa_maybe_faulty(&mu, m, c, faulty_partial);
                let chi = HermForm::from_diagonal(&mu);
                let omega = HermForm::identity(n);
                for i in 0..n {
                    let mut e = vec![C64::new(0.0, 0.0); n * n];
                    e[idx(n, i, i)] = C64::new(1.0, 0.0);
                    let ei = HermForm::new(n, e).unwrap();
                    let mut lead = vec![chi.clone(); n - 1];
                    lead.push(ei.clone());
                    let mut tail = vec![chi.clone(); m - 1];
                    tail.extend(vec![omega.clone(); n - m]);
                    tail.push(ei);
                    let oracle = c * herm::mixed_discriminant(&lead).unwrap()
                        - m as f64 * herm::mixed_discriminant(&tail).unwrap();
                    let expect = kappa[i] * herm::factorial(n - 1);
                    let rel = (oracle - expect).abs() / oracle.abs().max(1.0);
                    worst_cone = worst_cone.max(rel);
                    if rel > 1e-10 {
                        failed = Some(format!(
                            "cone_form_coefficients vs mixed_discriminant oracle: rel err {rel:.3e} (n={n}, m={m}, i={i}) — property elem_sym_partial/cone normalization"
                        ));
                        break 'outer;
                    }
                }
            }
        }
        let elapsed = start.elapsed().as_secs_f64();
        let time_ok = elapsed < 30.0;
        let passed = failed.is_none() && time_ok;
        let detail = match failed {
            Some(f) => f,
            None => format!(
                "{draws} draws/dim: worst ratio err {worst_ratio:.2e}, worst cone err {worst_cone:.2e}{}",
                if time_ok { "" } else { " — RUNTIME EXCEEDED 30s" }
            ),
        };
        CriterionOutcome {
            id: 1,
            name: "wedge-algebra oracle equivalence",
            passed,
            detail,
            elapsed_s: elapsed,
        }
    }

    /// J_n conservation along the strict RK4 run.
    pub fn criterion_2(&self) -> CriterionOutcome {
        let start = Instant::now();
        let art = match self.strict_run() {
            Ok(a) => a,
            Err(e) => return fixture_failure(2, "J_n conservation", e, start),
        };
        let recs = &art.trajectory.records;
        let jn0 = *recs[0].functional.j.last().unwrap();
        let mut drift = 0.0f64;
        for r in recs {
            let jn = *r.functional.j.last().unwrap();
            drift = drift.max((jn - jn0).abs() / jn0.abs().max(1.0));
        }
        let time_ok = art.elapsed_s < 300.0;
        let passed = drift < 1e-6 && time_ok;
        CriterionOutcome {
            id: 2,
            name: "J_n conservation along strict RK4 run",
            passed,
            detail: format!(
                "relative drift {drift:.3e} over {} records to t = {} (run {:.1}s{})",
                recs.len(),
                art.trajectory.t_end,
                art.elapsed_s,
                if time_ok { "" } else { " — RUNTIME EXCEEDED 300s" }
            ),
            elapsed_s: start.elapsed().as_secs_f64(),
        }
    }

    /// Dissipation identity and monotonicity of the combined functional.
    pub fn criterion_3(&self) -> CriterionOutcome {
        let start = Instant::now();
        let art = match self.strict_run() {
            Ok(a) => a,
            Err(e) => return fixture_failure(3, "dissipation identity", e, start),
        };
        let mut rows = vec![
            monitors::ViolationRow {
                t: 0.0,
                violations: Vec::new()
            };
            art.trajectory.records.len()
        ];
        let report =
            monitors::conservation_monitor(&art.trajectory, &MonitorSlacks::default(), &mut rows);
        let fd_ok = report.dissipation_identity_worst_rel < 1e-3
            && report.dissipation_rows_checked >= 10;
        let mono_ok = report.combined_worst_decrement <= 1e-8;
        CriterionOutcome {
            id: 3,
            name: "dissipation identity and monotonicity",
            passed: fd_ok && mono_ok,
            detail: format!(
                "d/dt(combined) vs dissipation: rel err {:.3e} over {} rows; worst decrement {:.3e}",
                report.dissipation_identity_worst_rel,
                report.dissipation_rows_checked,
                report.combined_worst_decrement
            ),
            elapsed_s: start.elapsed().as_secs_f64(),
        }
    }

    /// Maximum principle: envelopes and the sign bracket.
    pub fn criterion_4(&self) -> CriterionOutcome {
        let start = Instant::now();
        let art = match self.strict_run() {
            Ok(a) => a,
            Err(e) => return fixture_failure(4, "maximum principle", e, start),
        };
        let mut rows = vec![
            monitors::ViolationRow {
                t: 0.0,
                violations: Vec::new()
            };
            art.trajectory.records.len()
        ];
        let rep =
            monitors::monitor_max_principle(&art.trajectory, &MonitorSlacks::default(), &mut rows);
        let env_ok = rep.worst_upper_margin <= 1e-6 && rep.worst_lower_margin <= 1e-6;
        let ratio_ok = rep.worst_ratio_margin_rel <= 1e-6;
        let sign_ok = rep.worst_sign_upper <= 1e-8 && rep.worst_sign_lower <= 1e-8;
        CriterionOutcome {
            id: 4,
            name: "maximum principle envelopes",
            passed: env_ok && ratio_ok && sign_ok,
            detail: format!(
                "dphi/dt margins ({:.2e}, {:.2e}); ratio margin {:.2e} rel; sign margins ({:.2e}, {:.2e})",
                rep.worst_upper_margin,
                rep.worst_lower_margin,
                rep.worst_ratio_margin_rel,
                rep.worst_sign_upper,
                rep.worst_sign_lower
            ),
            elapsed_s: start.elapsed().as_secs_f64(),
        }
    }

    /// Strict-cone convergence and flow/Newton agreement.
    pub fn criterion_5(&self) -> CriterionOutcome {
        let start = Instant::now();
        let art = match self.converged_run() {
            Ok(a) => a,
            Err(e) => return fixture_failure(5, "convergence and solver agreement", e, start),
        };
        let traj = &art.trajectory;
        let psi = art.psi.as_ref().unwrap();
        let converged_ok = traj.converged && traj.t_end <= 100.0;
        let newton_ok = psi.residual_norm < 1e-10;
        let jn0 = *traj.records[0].functional.j.last().unwrap();
        let cmp = match stationary::compare_flow_limit(
            &traj.phi_end,
            jn0,
            psi,
            &art.scenario.setup,
            &traj.mask,
        ) {
            Ok(c) => c,
            Err(e) => return fixture_failure(5, "convergence and solver agreement", &e, start),
        };
        let agree_ok = cmp.sup_diff_after_matching < 1e-5 && cmp.spread < 1e-6;
        let time_ok = art.elapsed_s < 900.0;
        CriterionOutcome {
            id: 5,
            name: "strict-cone convergence and solver agreement",
            passed: converged_ok && newton_ok && agree_ok && time_ok,
            detail: format!(
                "flow sup|dphi/dt| < 1e-8 at t = {:.2} ({} steps); Newton residual {:.2e}; spread {:.2e}; sup diff after J_n matching {:.2e} (run {:.1}s)",
                traj.t_end,
                traj.steps_taken,
                psi.residual_norm,
                cmp.spread,
                cmp.sup_diff_after_matching,
                art.elapsed_s
            ),
            elapsed_s: start.elapsed().as_secs_f64(),
        }
    }

    /// Time-independent C⁰ bound over every run in the suite.
    ///
    /// Gates on the symmetric envelope (max φ₀ + ‖ψ‖∞ above, min φ₀ − ‖ψ‖∞
    /// below), which is what the comparison argument yields; the sharper
    /// one-sided lower form min φ₀ is reported alongside because generic
    /// runs violate it by up to ‖ψ‖∞ − the ψ-weighted mean (the flow limit
    /// is ψ + K). See the C0 monitor docs.
    pub fn criterion_6(&self) -> CriterionOutcome {
        let start = Instant::now();
        let mut worst = 0.0f64;
        let mut detail_parts = Vec::new();
        for (label, art) in [
            ("strict", self.strict_run()),
            ("boundary", self.boundary_run()),
            ("n3", self.n3_run()),
        ] {
            let art = match art {
                Ok(a) => a,
                Err(e) => return fixture_failure(6, "C0 bound", e, start),
            };
            let psi = art.psi.as_ref().unwrap();
            let mut rows = vec![
                monitors::ViolationRow {
                    t: 0.0,
                    violations: Vec::new()
                };
                art.trajectory.records.len()
            ];
            let rep = monitors::c0_monitor(
                &art.trajectory,
                &psi.psi,
                &MonitorSlacks {
                    c0: 1e-4,
                    ..MonitorSlacks::default()
                },
                &mut rows,
            );
            let m = rep.worst_upper_margin.max(rep.worst_lower_margin);
            worst = worst.max(m);
            detail_parts.push(format!(
                "{label}: margin {m:.2e} (one-sided lower deficit {:.2e}, |psi| {:.2e})",
                rep.worst_lower_margin_onesided, rep.psi_sup_norm
            ));
        }
        CriterionOutcome {
            id: 6,
            name: "time-independent C0 bound",
            passed: worst <= 1e-4,
            detail: detail_parts.join("; "),
            elapsed_s: start.elapsed().as_secs_f64(),
        }
    }

    /// Boundary-case behavior: admissibility, masked decay, normalization
    /// conservation.
    pub fn criterion_7(&self) -> CriterionOutcome {
        let start = Instant::now();
        let art = match self.boundary_run() {
            Ok(a) => a,
            Err(e) => return fixture_failure(7, "boundary-case behavior", e, start),
        };
        let traj = &art.trajectory;
        let recs = &traj.records;
        let admissible_ok = recs.iter().all(|r| r.lambda_min > 0.0);
        let completed = traj.converged || traj.t_end >= if self.full() { 200.0 } else { 10.0 };
        let final_sup = recs.last().unwrap().masked_sup_abs_dphidt;
        let sup_ok = final_sup < 1e-4;
        // decreasing trend: least-squares slope of the masked sup series
        // over the last half of the recorded run is negative
        let half_t = 0.5 * traj.t_end;
        let pts: Vec<(f64, f64)> = recs
            .iter()
            .filter(|r| r.t >= half_t)
            .map(|r| (r.t, r.masked_sup_abs_dphidt))
            .collect();
        let (slope, _) = monitors::least_squares_slope(&pts);
        let trend_ok = slope < 0.0;
        let tn0 = recs[0].functional.theorem_norm;
        let tn_end = recs.last().unwrap().functional.theorem_norm;
        let tn_drift = (tn_end - tn0).abs() / tn0.abs().max(1e-300);
        let tn_ok = tn_drift < 1e-5;
        CriterionOutcome {
            id: 7,
            name: "boundary-case masked decay and normalization",
            passed: admissible_ok && completed && sup_ok && trend_ok && tn_ok,
            detail: format!(
                "ended t = {:.1} (converged: {}); masked sup {final_sup:.2e}; last-half slope {slope:.2e}; theorem-norm drift {tn_drift:.2e}",
                traj.t_end, traj.converged
            ),
            elapsed_s: start.elapsed().as_secs_f64(),
        }
    }

    /// Second-order exponential bound diagnostics.
    pub fn criterion_8(&self) -> CriterionOutcome {
        let start = Instant::now();
        let mut parts = Vec::new();
        let mut all_ok = true;
        for (label, art) in [
            ("strict", self.strict_run()),
            ("boundary", self.boundary_run()),
            ("n3", self.n3_run()),
        ] {
            let art = match art {
                Ok(a) => a,
                Err(e) => return fixture_failure(8, "second-order diagnostics", e, start),
            };
            let rep = monitors::second_order_monitor(&art.trajectory, None);
            let stable = rep.stabilized;
            all_ok &= stable;
            parts.push(format!(
                "{label}: (C,A)=({:.3},{:.3}) dA {:.2e} dC {:.2e}",
                rep.fit_global.c, rep.fit_global.a, rep.rel_change_a, rep.rel_change_c
            ));
            if label == "boundary" {
                all_ok &= rep.masked_uniform;
                parts.push(format!(
                    "boundary masked t-slope {:.2e} (threshold {:.2e})",
                    rep.masked_t_slope, rep.masked_slope_threshold
                ));
            }
        }
        CriterionOutcome {
            id: 8,
            name: "second-order bound fits stabilize",
            passed: all_ok,
            detail: parts.join("; "),
            elapsed_s: start.elapsed().as_secs_f64(),
        }
    }

    /// Jacobian consistency: assembled linearization vs finite differences.
    pub fn criterion_9(&self) -> CriterionOutcome {
        let start = Instant::now();
        let mut worst_order = f64::INFINITY;
        let mut states = 0usize;
        let mut rng = ChaCha8Rng::seed_from_u64(0x1ACB);
        let specs = [
            ScenarioSpec::named("strict", 2, 1, 16, 71),
            ScenarioSpec::named("strict", 3, 1, 8, 72),
            ScenarioSpec::named("strict", 3, 2, 8, 73),
        ];
        'outer: for spec in &specs {
            let sc = match build_scenario(spec) {
                Ok(s) => s,
                Err(e) => return fixture_failure(9, "Jacobian consistency", &e, start),
            };
            let setup = &sc.setup;
            for trial in 0..4 {
                if states >= 10 {
                    break 'outer;
                }
                // random admissible state near phi0
                let amp = 0.01 + 0.01 * trial as f64;
                let coeffs: Vec<(f64, f64, f64)> = (0..setup.n)
                    .map(|_| {
                        (
                            rng.gen_range(-amp..amp),
                            rng.gen_range(-amp..amp),
                            rng.gen_range(0.0..std::f64::consts::TAU),
                        )
                    })
                    .collect();
                let phi = ScalarField::from_fn(setup.grid(), |x| {
                    let mut v = 0.0;
                    for (a, &(ca, cb, ph)) in coeffs.iter().enumerate() {
                        v += ca * (std::f64::consts::TAU * x[a] + ph).cos()
                            + cb * (std::f64::consts::TAU * (x[a] + x[(a + 1) % setup.n])).sin();
                    }
                    v
                })
                .unwrap();
                let phi = sc.phi0.add_scaled(&phi, 1.0);
                if !geometry::admissible(setup, &phi).unwrap().0 {
                    continue;
                }
                let x = setup.x_field(&phi).unwrap();
                let data = stationary::linearization_coefficients(setup, &x).unwrap();
                let op = stationary::LinearOperator::assemble(setup, &data);
                let delta = ScalarField::from_fn(setup.grid(), |xc| {
                    0.6 * (std::f64::consts::TAU * xc[0]).cos()
                        + 0.4 * (std::f64::consts::TAU * (xc[0] + xc[setup.n - 1])).sin()
                })
                .unwrap();
                let l_delta = op.apply(&delta);
                let fd_err = |eps: f64| -> f64 {
                    let plus = flow::flow_rhs_of(&phi.add_scaled(&delta, eps), setup).unwrap();
                    let minus = flow::flow_rhs_of(&phi.add_scaled(&delta, -eps), setup).unwrap();
                    plus.data()
                        .iter()
                        .zip(minus.data())
                        .zip(l_delta.data())
                        .fold(0.0f64, |acc, ((&p, &m), &l)| {
                            acc.max(((p - m) / (2.0 * eps) - l).abs())
                        })
                };
                let e1 = fd_err(2e-3);
                let e2 = fd_err(1e-3);
                let order = (e1 / e2).log2();
                worst_order = worst_order.min(order);
                states += 1;
            }
        }
        CriterionOutcome {
            id: 9,
            name: "Jacobian consistency (linearization vs finite differences)",
            passed: states >= 10 && worst_order >= 1.9,
            detail: format!("{states} states; worst observed order {worst_order:.2}"),
            elapsed_s: start.elapsed().as_secs_f64(),
        }
    }

    /// n = 2 closed-form cone classification equality.
    pub fn criterion_10(&self) -> CriterionOutcome {
        let start = Instant::now();
        let draws = if self.full() { 1000 } else { 300 };
        let grid = PeriodicGrid::new(2, 4).unwrap();
        let omega = FormField::constant(grid, &HermForm::identity(2)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0xC0DE);
        let mut mismatches = 0usize;
        for _ in 0..draws {
            let mu = [rng.gen_range(0.2..2.5), rng.gen_range(0.2..2.5)];
            let c: f64 = rng.gen_range(0.3..3.0);
            let chi = FormField::constant(grid, &HermForm::from_diagonal(&mu)).unwrap();
            let rep = cone::cone_condition(&chi, &omega, 1, c).unwrap();
            let closed = (c * mu[0] - 1.0).min(c * mu[1] - 1.0);
            let want = if closed > cone::TOL_BOUNDARY {
                Classification::Strict
            } else if closed >= -cone::TOL_BOUNDARY {
                Classification::Boundary
            } else {
                Classification::Violated
            };
            if rep.classification != want {
                mismatches += 1;
            }
        }
        CriterionOutcome {
            id: 10,
            name: "n=2 closed-form cone classification",
            passed: mismatches == 0,
            detail: format!("{draws} random constant setups, {mismatches} mismatches"),
            elapsed_s: start.elapsed().as_secs_f64(),
        }
    }
}

fn fixture_failure(
    id: usize,
    name: &'static str,
    e: &crate::error::Error,
    start: Instant,
) -> CriterionOutcome {
    CriterionOutcome {
        id,
        name,
        passed: false,
        detail: format!("fixture failed: {e}"),
        elapsed_s: start.elapsed().as_secs_f64(),
    }
}

fn random_pd(rng: &mut ChaCha8Rng, n: usize) -> HermForm {
    let mut g = vec![C64::new(0.0, 0.0); n * n];
    for v in g.iter_mut() {
        *v = C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
    }
    let mut pd = vec![C64::new(0.0, 0.0); n * n];
    for i in 0..n {
        for j in 0..n {
            let mut s = C64::new(0.0, 0.0);
            for k in 0..n {
                s += g[idx(n, k, i)].conj() * g[idx(n, k, j)];
            }
            pd[idx(n, i, j)] = s;
        }
    }
    for i in 0..n {
        pd[idx(n, i, i)] += C64::new(0.05, 0.0);
    }
    HermForm::new(n, pd).unwrap()
}

/// κ through elem_sym_partial with an optional injected sign fault (harness
/// self-test: the oracle comparison in criterion 1 must then fail).
fn cone_kappa_maybe_faulty(mu: &[f64], m: usize, c: f64, faulty: bool) -> Vec<f64> {
    let n = mu.len();
    let weight = herm::factorial(m) * herm::factorial(n - m) / herm::factorial(n - 1);
    (0..n)
        .map(|i| {
            let lead = herm::elem_sym_partial(n - 1, i, mu).unwrap();
            let tail = herm::elem_sym_partial(m - 1, i, mu).unwrap();
            let tail = if faulty { -tail } else { tail };
            c * lead - weight * tail
        })
        .collect()
}

/// Functional-identity quick checks shared by the default `verify` table
/// (cheap, not part of the numbered acceptance criteria).
pub fn functional_identity_checks() -> Vec<CriterionOutcome> {
    let start = Instant::now();
    let mut outcomes = Vec::new();
    let run = || -> Result<(f64, f64)> {
        let sc = build_scenario(&ScenarioSpec::named("strict", 2, 1, 16, 9))?;
        let u = sc.phi0.clone();
        let base = functionals::combined_functional(&u, &sc.setup)?;
        let shifted = functionals::combined_functional(&u.shift(1.7), &sc.setup)?;
        let translation = (shifted - base).abs() / base.abs().max(1.0);
        let tn = functionals::theorem_normalization(&u, &sc.setup)?;
        let jn = functionals::j_functional(sc.setup.n, &u, &sc.setup)?;
        let identity = (tn - (sc.setup.n + 1) as f64 * jn).abs() / tn.abs().max(1.0);
        Ok((translation, identity))
    };
    match run() {
        Ok((translation, identity)) => {
            outcomes.push(CriterionOutcome {
                id: 101,
                name: "combined-functional translation invariance",
                passed: translation < 1e-10,
                detail: format!("relative change {translation:.2e}"),
                elapsed_s: start.elapsed().as_secs_f64(),
            });
            outcomes.push(CriterionOutcome {
                id: 102,
                name: "normalization equals (n+1)·J_n",
                passed: identity < 1e-10,
                detail: format!("relative error {identity:.2e}"),
                elapsed_s: start.elapsed().as_secs_f64(),
            });
        }
        Err(e) => outcomes.push(CriterionOutcome {
            id: 101,
            name: "functional identities",
            passed: false,
            detail: format!("fixture failed: {e}"),
            elapsed_s: start.elapsed().as_secs_f64(),
        }),
    }
    outcomes
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quick_suite_cheap_criteria_pass() {
        let suite = Suite::new(VerifyOptions::default());
        for outcome in [suite.criterion_1(), suite.criterion_10()] {
            assert!(outcome.passed, "{}", outcome.line());
        }
    }

    #[test]
    fn injected_fault_is_detected() {
        let suite = Suite::new(VerifyOptions {
            scale: Scale::Quick,
            inject_fault: Some("elem_sym_partial_sign".to_string()),
        });
        let outcome = suite.criterion_1();
        assert!(!outcome.passed, "fault went undetected");
        assert!(
            outcome.detail.contains("elem_sym_partial"),
            "detail does not name the property: {}",
            outcome.detail
        );
    }

    #[test]
    fn functional_identities_pass() {
        for o in functional_identity_checks() {
            assert!(o.passed, "{}", o.line());
        }
    }
}
