//! Time integration of the generalized J-flow
//!
//! ```text
//!   dφ/dt = c − (n / C(n,m)) · S_{n−m}(X⁻¹),   X = χ + χ̃ + i∂∂̄φ,
//! ```
//!
//! with explicit steppers (Euler, RK4, and a damped second-order
//! Runge–Kutta–Chebyshev scheme for long stiff runs) under an
//! admissibility-preserving guard: a trial step is accepted only if X stays
//! positive definite and its smallest eigenvalue does not fall below a
//! safety fraction of the previous one; otherwise dt is halved and retried,
//! up to 30 times.
//!
//! Step size is proposed from the linearization: the coefficients
//! a_i = S_{n−m−1;i}(X⁻¹)·(X^{ii})² bound the parabolic symbol, giving a
//! stability limit per method; the 0.1·h²·λ_min² heuristic seeds the very
//! first step and the guard owns correctness throughout.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::functionals::{self, FunctionalRow};
use crate::geometry::{self, GeometrySetup};
use crate::grid::{AmpMask, FormField, PeriodicGrid, ScalarField};
use crate::herm;
use crate::reduce;
use crate::smallmat::{self, C64};

/// Explicit integration methods. Rkc carries its stage count.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    ExplicitEuler,
    Rk4,
    Rkc { stages: usize },
}

impl Method {
    pub fn parse(name: &str) -> Result<Method> {
        match name {
            "explicit-euler" | "euler" => Ok(Method::ExplicitEuler),
            "rk4" => Ok(Method::Rk4),
            "rkc" => Ok(Method::Rkc { stages: 0 }),
            other => Err(Error::argument(format!(
                "unknown method `{other}` (expected explicit-euler, rk4 or rkc)"
            ))),
        }
    }

    /// Real-axis stability extent of the method (β such that z ∈ [−β, 0] is
    /// stable for y' = z·y).
    fn stability_extent(self, rkc: &mut RkcCache) -> f64 {
        match self {
            Method::ExplicitEuler => 2.0,
            Method::Rk4 => 2.785,
            Method::Rkc { stages } => rkc.coeffs(stages.max(2)).beta,
        }
    }
}

/// A flow state: potential, time, and the caches every monitor reads.
#[derive(Debug, Clone)]
pub struct FlowState {
    pub phi: ScalarField,
    pub t: f64,
    pub x: FormField,
    pub dphi_dt: ScalarField,
    /// w = S₁(X) relative to ω (trace of the reduced form).
    pub w: ScalarField,
    /// min over points of the smallest (X, ω) eigenvalue.
    pub lambda_min: f64,
    /// max over points of Σ_i a_i — the linearization coefficient sum that
    /// bounds the parabolic symbol.
    pub stab_coeff: f64,
    /// extremes of the volume-ratio quotient Xⁿ/(Xᵐ∧ω^{n−m}).
    pub ratio_min: f64,
    pub ratio_max: f64,
}

impl FlowState {
    /// Build a state with fresh caches. Errors if φ is not admissible.
    pub fn new(phi: ScalarField, t: f64, setup: &GeometrySetup) -> Result<FlowState> {
        match build_state(phi, t, setup)? {
            Ok(state) => Ok(state),
            Err((point, min)) => Err(Error::geometry_at(
                "potential is not admissible",
                min,
                Some(point),
            )),
        }
    }

    /// Max absolute difference between the X cache and a rebuild from φ.
    pub fn cache_coherence_error(&self, setup: &GeometrySetup) -> Result<f64> {
        let fresh = setup.x_field(&self.phi)?;
        let worst = self
            .x
            .data()
            .iter()
            .zip(fresh.data())
            .fold(0.0f64, |a, (&c, &f)| a.max((c - f).norm()));
        Ok(worst)
    }
}

/// Pointwise evaluation of everything the flow needs from an X field.
struct EvalOutput {
    rhs: Vec<f64>,
    w: Vec<f64>,
    lambda_min: f64,
    stab_coeff: f64,
    ratio_min: f64,
    ratio_max: f64,
}

/// Full pointwise pass. Returns Err((point, value)) when X is not positive
/// definite somewhere (reported through the inner Result so callers can
/// treat it as a guard signal rather than a hard error).
fn evaluate_x(
    setup: &GeometrySetup,
    x: &FormField,
) -> Result<std::result::Result<EvalOutput, (usize, f64)>> {
    let n = setup.n;
    let m = setup.m;
    let total = setup.grid().total_points();
    let prefactor = n as f64 / herm::binomial(n, m);
    let c = setup.c;

    // per-point packed results: [rhs, w, lambda_min, stab, ratio, ok]
    let mut packed = vec![0.0f64; total * 6];
    {
        let eval_point = |p: usize, out: &mut [f64]| {
            let mut red = [C64::new(0.0, 0.0); smallmat::MAX_DIM * smallmat::MAX_DIM];
            let mat: &[C64] = if matches!(setup.omega_mode, crate::geometry::OmegaMode::Identity)
            {
                x.at(p)
            } else {
                // reduce to the ω-orthonormal frame
                if setup.reduce_at(x, p, &mut red[..n * n]).is_err() {
                    out[5] = -1.0;
                    return;
                }
                &red[..n * n]
            };
            let mut e = [0.0f64; 5];
            herm::char_elem_syms(mat, n, &mut e);
            // positivity: all elementary symmetric functions positive; the
            // negated comparison also rejects NaN
            let mut ok = true;
            for &ek in e.iter().take(n + 1).skip(1) {
                if !(ek > 0.0) {
                    ok = false;
                }
            }
            let mut lam = [0.0f64; smallmat::MAX_DIM];
            smallmat::hermitian_eigenvalues_fast(mat, n, &mut lam[..n]);
            let lmin = lam[0];
            if !ok || !(lmin > 0.0) {
                out[2] = lmin.min(0.0);
                out[5] = -1.0;
                return;
            }
            let ratio = herm::binomial(n, m) * e[n] / e[m];
            out[0] = c - prefactor * e[m] / e[n];
            out[1] = e[1];
            out[2] = lmin;
            // Σ_i S_{n−m−1;i}(1/λ)·(1/λ_i)²
            let mut inv = [0.0f64; smallmat::MAX_DIM];
            for i in 0..n {
                inv[i] = 1.0 / lam[i];
            }
            let mut stab = 0.0;
            for i in 0..n {
                let mut s = [0.0f64; 5];
                // e_{n-m-1} of inv with entry i removed, small fixed DP
                s[0] = 1.0;
                let kmax = n - m - 1;
                for (j, &v) in inv.iter().enumerate().take(n) {
                    if j == i {
                        continue;
                    }
                    for k in (1..=kmax).rev() {
                        s[k] += v * s[k - 1];
                    }
                }
                stab += s[kmax] * inv[i] * inv[i];
            }
            out[3] = stab;
            out[4] = ratio;
            out[5] = 1.0;
        };
        // deterministic parallel fill
        if total < 8192 {
            for (p, chunk) in packed.chunks_mut(6).enumerate() {
                eval_point(p, chunk);
            }
        } else {
            use rayon::prelude::*;
            packed
                .par_chunks_mut(6)
                .enumerate()
                .for_each(|(p, chunk)| eval_point(p, chunk));
        }
    }

    // scan for failures and extremes (serial, deterministic)
    let mut lambda_min = f64::INFINITY;
    for p in 0..total {
        if packed[p * 6 + 5] < 0.0 {
            return Ok(Err((p, packed[p * 6 + 2])));
        }
        lambda_min = lambda_min.min(packed[p * 6 + 2]);
    }
    let mut rhs = vec![0.0f64; total];
    let mut w = vec![0.0f64; total];
    let mut stab_coeff = 0.0f64;
    let mut ratio_min = f64::INFINITY;
    let mut ratio_max = f64::NEG_INFINITY;
    for p in 0..total {
        rhs[p] = packed[p * 6];
        w[p] = packed[p * 6 + 1];
        stab_coeff = stab_coeff.max(packed[p * 6 + 3]);
        ratio_min = ratio_min.min(packed[p * 6 + 4]);
        ratio_max = ratio_max.max(packed[p * 6 + 4]);
    }
    Ok(Ok(EvalOutput {
        rhs,
        w,
        lambda_min,
        stab_coeff,
        ratio_min,
        ratio_max,
    }))
}

/// Cheap pointwise RHS pass used by integrator stages. Errors (with the
/// offending point) as soon as positivity fails.
fn evaluate_rhs_only(setup: &GeometrySetup, x: &FormField) -> Result<Vec<f64>> {
    let n = setup.n;
    let m = setup.m;
    let total = setup.grid().total_points();
    let prefactor = n as f64 / herm::binomial(n, m);
    let c = setup.c;
    let identity = matches!(setup.omega_mode, crate::geometry::OmegaMode::Identity);

    let mut rhs = vec![0.0f64; total];
    let mut first_bad: Option<(usize, f64)> = None;
    {
        let eval_point = |p: usize| -> f64 {
            let mut red = [C64::new(0.0, 0.0); smallmat::MAX_DIM * smallmat::MAX_DIM];
            let mat: &[C64] = if identity {
                x.at(p)
            } else if setup.reduce_at(x, p, &mut red[..n * n]).is_ok() {
                &red[..n * n]
            } else {
                return f64::NAN;
            };
            let mut e = [0.0f64; 5];
            herm::char_elem_syms(mat, n, &mut e);
            for &ek in e.iter().take(n + 1).skip(1) {
                if !(ek > 0.0) {
                    return f64::NAN;
                }
            }
            c - prefactor * e[m] / e[n]
        };
        reduce::fill_slice(&mut rhs, eval_point);
        for (p, v) in rhs.iter().enumerate() {
            if !v.is_finite() {
                first_bad = Some((p, 0.0));
                break;
            }
        }
    }
    if let Some((p, _)) = first_bad {
        let mineig = {
            let mut red = [C64::new(0.0, 0.0); smallmat::MAX_DIM * smallmat::MAX_DIM];
            if identity {
                smallmat::hermitian_min_eigenvalue(x.at(p), n)
            } else if setup.reduce_at(x, p, &mut red[..n * n]).is_ok() {
                smallmat::hermitian_min_eigenvalue(&red[..n * n], n)
            } else {
                f64::NAN
            }
        };
        return Err(Error::geometry_at(
            "admissibility lost during RHS evaluation",
            mineig,
            Some(p),
        ));
    }
    Ok(rhs)
}

/// Build a state, distinguishing admissibility failure (inner Err) from
/// structural errors (outer Err).
#[allow(clippy::type_complexity)]
fn build_state(
    phi: ScalarField,
    t: f64,
    setup: &GeometrySetup,
) -> Result<std::result::Result<FlowState, (usize, f64)>> {
    let x = setup.x_field(&phi)?;
    match evaluate_x(setup, &x)? {
        Ok(eval) => {
            let grid = setup.grid();
            Ok(Ok(FlowState {
                phi,
                t,
                x,
                dphi_dt: ScalarField::new(grid, eval.rhs)?,
                w: ScalarField::new(grid, eval.w)?,
                lambda_min: eval.lambda_min,
                stab_coeff: eval.stab_coeff,
                ratio_min: eval.ratio_min,
                ratio_max: eval.ratio_max,
            }))
        }
        Err(bad) => Ok(Err(bad)),
    }
}

/// The flow right-hand side at a cached state:
/// c − n·(Xᵐ∧ω^{n−m})/Xⁿ = c − (n/C(n,m))·S_{n−m}(X⁻¹).
pub fn flow_rhs(state: &FlowState, setup: &GeometrySetup) -> Result<ScalarField> {
    let rhs = evaluate_rhs_only(setup, &state.x)?;
    ScalarField::new(setup.grid(), rhs)
}

/// The flow right-hand side of a bare potential (builds X on the fly).
pub fn flow_rhs_of(phi: &ScalarField, setup: &GeometrySetup) -> Result<ScalarField> {
    let x = setup.x_field(phi)?;
    let rhs = evaluate_rhs_only(setup, &x)?;
    ScalarField::new(setup.grid(), rhs)
}

// ---------------------------------------------------------------------------
// Steppers
// ---------------------------------------------------------------------------

/// Damped RKC2 coefficients for a fixed stage count (Verwer's recurrence,
/// damping ε = 2/13).
struct RkcCoeffs {
    beta: f64,
    mu_tilde1: f64,
    /// per stage j = 2..=s: (mu_j, nu_j, mu_tilde_j, gamma_tilde_j)
    rows: Vec<(f64, f64, f64, f64)>,
}

#[derive(Default)]
struct RkcCache {
    map: HashMap<usize, RkcCoeffs>,
}

impl RkcCache {
    fn coeffs(&mut self, stages: usize) -> &RkcCoeffs {
        self.map.entry(stages).or_insert_with(|| rkc_coeffs(stages))
    }
}

fn rkc_coeffs(stages: usize) -> RkcCoeffs {
    let s = stages.max(2);
    let eps = 2.0 / 13.0;
    let w0 = 1.0 + eps / (s * s) as f64;
    // Chebyshev T_j(w0), T_j'(w0), T_j''(w0) by recurrence
    let mut t = vec![0.0f64; s + 1];
    let mut td = vec![0.0f64; s + 1];
    let mut tdd = vec![0.0f64; s + 1];
    t[0] = 1.0;
    if s >= 1 {
        t[1] = w0;
        td[1] = 1.0;
    }
    for j in 2..=s {
        t[j] = 2.0 * w0 * t[j - 1] - t[j - 2];
        td[j] = 2.0 * t[j - 1] + 2.0 * w0 * td[j - 1] - td[j - 2];
        tdd[j] = 4.0 * td[j - 1] + 2.0 * w0 * tdd[j - 1] - tdd[j - 2];
    }
    let w1 = td[s] / tdd[s];
    let beta = (w0 + 1.0) * tdd[s] / td[s];
    let b = |j: usize| -> f64 {
        if j <= 1 {
            tdd[2] / (td[2] * td[2])
        } else {
            tdd[j] / (td[j] * td[j])
        }
    };
    let a = |j: usize| -> f64 { 1.0 - b(j) * t[j] };
    let mu_tilde1 = b(1) * w1;
    let mut rows = Vec::with_capacity(s.saturating_sub(1));
    for j in 2..=s {
        let mu = 2.0 * b(j) * w0 / b(j - 1);
        let nu = -b(j) / b(j - 2);
        let mu_tilde = 2.0 * b(j) * w1 / b(j - 1);
        let gamma_tilde = -a(j - 1) * mu_tilde;
        rows.push((mu, nu, mu_tilde, gamma_tilde));
    }
    RkcCoeffs {
        beta,
        mu_tilde1,
        rows,
    }
}

/// One un-guarded advance by dt (stage failures bubble up as errors).
fn advance(
    state: &FlowState,
    setup: &GeometrySetup,
    dt: f64,
    method: Method,
    rkc: &mut RkcCache,
) -> Result<ScalarField> {
    let phi = &state.phi;
    let rhs_of = |p: &ScalarField| -> Result<ScalarField> {
        let x = setup.x_field(p)?;
        let data = evaluate_rhs_only(setup, &x)?;
        ScalarField::new(setup.grid(), data)
    };
    match method {
        Method::ExplicitEuler => Ok(phi.add_scaled(&state.dphi_dt, dt)),
        Method::Rk4 => {
            let k1 = &state.dphi_dt;
            let k2 = rhs_of(&phi.add_scaled(k1, dt / 2.0))?;
            let k3 = rhs_of(&phi.add_scaled(&k2, dt / 2.0))?;
            let k4 = rhs_of(&phi.add_scaled(&k3, dt))?;
            let mut out = phi.data().to_vec();
            let (d1, d2, d3, d4) = (k1.data(), k2.data(), k3.data(), k4.data());
            for (p, v) in out.iter_mut().enumerate() {
                *v += dt / 6.0 * (d1[p] + 2.0 * d2[p] + 2.0 * d3[p] + d4[p]);
            }
            ScalarField::new(setup.grid(), out)
        }
        Method::Rkc { stages } => {
            let coeffs = rkc.coeffs(stages.max(2));
            let f0 = &state.dphi_dt;
            let y0 = phi;
            let mut yjm2 = y0.clone();
            let mut yjm1 = y0.add_scaled(f0, coeffs.mu_tilde1 * dt);
            for &(mu, nu, mu_tilde, gamma_tilde) in &coeffs.rows {
                let fjm1 = rhs_of(&yjm1)?;
                let mut data = vec![0.0f64; y0.data().len()];
                let (y0d, y1d, y2d, fd, f0d) = (
                    y0.data(),
                    yjm1.data(),
                    yjm2.data(),
                    fjm1.data(),
                    f0.data(),
                );
                for (p, v) in data.iter_mut().enumerate() {
                    *v = (1.0 - mu - nu) * y0d[p] + mu * y1d[p] + nu * y2d[p]
                        + mu_tilde * dt * fd[p]
                        + gamma_tilde * dt * f0d[p];
                }
                let yj = ScalarField::new(setup.grid(), data)?;
                yjm2 = yjm1;
                yjm1 = yj;
            }
            Ok(yjm1)
        }
    }
}

/// One guarded step: advance by dt, halving (up to 30 times) whenever the
/// trial loses admissibility or its eigenvalue floor drops below
/// `eig_floor_safety`·(previous minimum). Returns the advanced state.
pub fn step(
    state: &FlowState,
    setup: &GeometrySetup,
    dt: f64,
    method: Method,
) -> Result<FlowState> {
    step_with_safety(state, setup, dt, method, 0.5)
}

pub fn step_with_safety(
    state: &FlowState,
    setup: &GeometrySetup,
    dt: f64,
    method: Method,
    eig_floor_safety: f64,
) -> Result<FlowState> {
    let mut rkc = RkcCache::default();
    let floor = eig_floor_safety * state.lambda_min;
    let mut dt_try = dt;
    for _halving in 0..=30u32 {
        let trial = match advance(state, setup, dt_try, method, &mut rkc) {
            Ok(phi) => match build_state(phi, state.t + dt_try, setup)? {
                Ok(s) => Some(s),
                Err(_) => None,
            },
            Err(Error::Geometry { .. }) => None,
            Err(e) => return Err(e),
        };
        if let Some(s) = trial {
            if s.lambda_min > 0.0 && s.lambda_min >= floor {
                return Ok(s);
            }
        }
        dt_try *= 0.5;
    }
    Err(Error::Stiffness {
        halvings: 30,
        t: state.t,
        last: Box::new(state.clone()),
    })
}

// ---------------------------------------------------------------------------
// Run loop with recording
// ---------------------------------------------------------------------------

/// How much field data to keep per record.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StoreFields {
    EndsOnly,
    All,
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub method: Method,
    pub t_max: f64,
    pub tol_converge: f64,
    pub record_interval: f64,
    pub dt0: Option<f64>,
    pub dt_max: Option<f64>,
    /// Guard floor factor on the minimum eigenvalue per step.
    pub eig_floor_safety: f64,
    /// Fraction of the linear stability limit to aim for.
    pub cfl_safety: f64,
    pub rkc_max_stages: usize,
    pub mask_delta: f64,
    /// Optional smooth surrogate ρ for the masked second-order envelope
    /// (u = φ − ρ); the trivial surrogate (ρ = 0) is valid on the mask.
    pub rho: Option<ScalarField>,
    pub store_fields: StoreFields,
    pub max_steps: usize,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            method: Method::Rk4,
            t_max: 5.0,
            tol_converge: 1e-8,
            record_interval: 0.05,
            dt0: None,
            dt_max: None,
            eig_floor_safety: 0.5,
            cfl_safety: 0.9,
            rkc_max_stages: 64,
            mask_delta: 1e-3,
            rho: None,
            store_fields: StoreFields::EndsOnly,
            max_steps: 50_000_000,
        }
    }
}

/// Number of buckets kept per record for the (u, ln w) upper envelopes.
const ENVELOPE_BUCKETS: usize = 48;

#[derive(Debug, Clone)]
pub struct RecordedFields {
    pub phi: ScalarField,
    pub dphi_dt: ScalarField,
}

#[derive(Debug, Clone)]
pub struct TrajectoryRecord {
    pub t: f64,
    pub dt: f64,
    pub sup_dphidt: f64,
    pub inf_dphidt: f64,
    pub masked_sup_abs_dphidt: f64,
    pub ratio_min: f64,
    pub ratio_max: f64,
    pub phi_min: f64,
    pub phi_max: f64,
    pub w_max: f64,
    pub lambda_min: f64,
    pub functional: FunctionalRow,
    /// Upper envelope samples (u, ln w) with u = φ + c·t, all points.
    pub envelope_global: Vec<(f64, f64)>,
    /// Upper envelope samples (u, ln w) with u = φ − ρ, masked points.
    pub envelope_masked: Vec<(f64, f64)>,
    pub fields: Option<RecordedFields>,
}

#[derive(Clone)]
pub struct Trajectory {
    pub records: Vec<TrajectoryRecord>,
    pub mask: AmpMask,
    pub grid: PeriodicGrid,
    pub n: usize,
    pub m: usize,
    pub c: f64,
    pub converged: bool,
    pub t_end: f64,
    pub phi_end: ScalarField,
    pub dphi_dt_end: ScalarField,
    pub steps_taken: usize,
}

impl Trajectory {
    pub fn last(&self) -> &TrajectoryRecord {
        self.records.last().expect("trajectory has records")
    }
}

/// Upper-envelope bucket reduction of a (u, ln w) point cloud.
fn bucket_envelope(
    us: impl Iterator<Item = f64> + Clone,
    lnw: impl Iterator<Item = f64> + Clone,
) -> Vec<(f64, f64)> {
    let mut umin = f64::INFINITY;
    let mut umax = f64::NEG_INFINITY;
    for u in us.clone() {
        umin = umin.min(u);
        umax = umax.max(u);
    }
    if !umin.is_finite() || !umax.is_finite() {
        return Vec::new();
    }
    let span = (umax - umin).max(1e-300);
    let mut buckets: Vec<Option<(f64, f64)>> = vec![None; ENVELOPE_BUCKETS];
    for (u, l) in us.zip(lnw) {
        let b = (((u - umin) / span) * ENVELOPE_BUCKETS as f64) as usize;
        let b = b.min(ENVELOPE_BUCKETS - 1);
        match &mut buckets[b] {
            Some((_, best)) if *best >= l => {}
            slot => *slot = Some((u, l)),
        }
    }
    buckets.into_iter().flatten().collect()
}

pub(crate) fn make_record(
    state: &FlowState,
    dt: f64,
    setup: &GeometrySetup,
    mask: &AmpMask,
    rho: Option<&ScalarField>,
    store: bool,
) -> Result<TrajectoryRecord> {
    let functional = functionals::functional_row(state, setup)?;
    let phi = &state.phi;
    let c = setup.c;
    let total = setup.grid().total_points();
    let lnw: Vec<f64> = state.w.data().iter().map(|&v| v.max(1e-300).ln()).collect();
    let env_global = bucket_envelope(
        (0..total).map(|p| phi.data()[p] + c * state.t),
        lnw.iter().copied(),
    );
    let masked_idx: Vec<usize> = (0..total).filter(|&p| mask.mask[p]).collect();
    let env_masked = bucket_envelope(
        masked_idx
            .iter()
            .map(|&p| phi.data()[p] - rho.map_or(0.0, |r| r.data()[p])),
        masked_idx.iter().map(|&p| lnw[p]),
    );
    Ok(TrajectoryRecord {
        t: state.t,
        dt,
        sup_dphidt: state.dphi_dt.max(),
        inf_dphidt: state.dphi_dt.min(),
        masked_sup_abs_dphidt: mask.masked_max_abs(&state.dphi_dt),
        ratio_min: state.ratio_min,
        ratio_max: state.ratio_max,
        phi_min: phi.min(),
        phi_max: phi.max(),
        w_max: state.w.max(),
        lambda_min: state.lambda_min,
        functional,
        envelope_global: env_global,
        envelope_masked: env_masked,
        fields: if store {
            Some(RecordedFields {
                phi: phi.clone(),
                dphi_dt: state.dphi_dt.clone(),
            })
        } else {
            None
        },
    })
}

/// Integrate the flow from φ₀ until t ≥ t_max or the masked sup of |∂ₜφ|
/// falls below tol_converge, recording rows every record_interval.
pub fn run(setup: &GeometrySetup, phi0: &ScalarField, opts: &RunOptions) -> Result<Trajectory> {
    let (ok, min0) = geometry::admissible(setup, phi0)?;
    if !ok {
        return Err(Error::precondition(format!(
            "phi0 is not admissible (min eigenvalue {min0:.6e})"
        )));
    }
    let mask = if setup.chi_tilde_big {
        geometry::amp_locus(&setup.chi_tilde, &setup.omega, opts.mask_delta)?
    } else {
        AmpMask::all(setup.grid(), opts.mask_delta)
    };

    let mut rkc = RkcCache::default();
    let mut state = FlowState::new(phi0.clone(), 0.0, setup)?;
    let grid = setup.grid();

    // spec'd starting guess: 0.1·h²·λ_min², refined by the stability bound
    let dt_seed = opts
        .dt0
        .unwrap_or(0.1 * grid.spacing().powi(2) * state.lambda_min.powi(2));

    let store_all = matches!(opts.store_fields, StoreFields::All);
    let mut records: Vec<TrajectoryRecord> = Vec::new();
    records.push(make_record(
        &state,
        0.0,
        setup,
        &mask,
        opts.rho.as_ref(),
        true,
    )?);

    let mut converged = mask.masked_max_abs(&state.dphi_dt) < opts.tol_converge;
    let mut steps = 0usize;
    let mut next_record = opts.record_interval;
    let mut dt_prev = dt_seed;

    while !converged && state.t < opts.t_max {
        if steps >= opts.max_steps {
            return Err(Error::Stiffness {
                halvings: 0,
                t: state.t,
                last: Box::new(state),
            });
        }
        // stability-based dt proposal
        let lambda_max = symbol_bound(setup, &state);
        let mut method = opts.method;
        let mut dt = f64::INFINITY;
        if let Some(cap) = opts.dt_max {
            dt = cap;
        }
        match opts.method {
            Method::ExplicitEuler | Method::Rk4 => {
                let stab = method.stability_extent(&mut rkc);
                dt = dt.min(opts.cfl_safety * stab / lambda_max);
            }
            Method::Rkc { .. } => {
                // pick the stage count that covers dt, capped; if capped,
                // shrink dt to the covered extent
                let dt_wanted = dt.min(opts.t_max - state.t).min(2.0 * dt_prev);
                let dt_wanted = if dt_wanted.is_finite() {
                    dt_wanted
                } else {
                    2.0 * dt_prev
                };
                let need = (dt_wanted * lambda_max / (opts.cfl_safety * 0.65)).max(4.0);
                let mut s = need.sqrt().ceil() as usize + 1;
                s = s.clamp(3, opts.rkc_max_stages.max(3));
                let beta = rkc.coeffs(s).beta;
                dt = dt_wanted.min(opts.cfl_safety * beta / lambda_max);
                method = Method::Rkc { stages: s };
            }
        }
        dt = dt.min(2.0 * dt_prev).min(opts.t_max - state.t).max(1e-14);
        if !dt.is_finite() {
            dt = dt_seed;
        }

        let t_before = state.t;
        state = step_with_safety(&state, setup, dt, method, opts.eig_floor_safety)?;
        let dt_accepted = state.t - t_before;
        dt_prev = dt_accepted;
        steps += 1;

        let masked_sup = mask.masked_max_abs(&state.dphi_dt);
        converged = masked_sup < opts.tol_converge;
        let at_end = state.t >= opts.t_max || converged;
        if state.t >= next_record || at_end {
            records.push(make_record(
                &state,
                dt_accepted,
                setup,
                &mask,
                opts.rho.as_ref(),
                store_all || at_end,
            )?);
            while next_record <= state.t {
                next_record += opts.record_interval;
            }
        }
    }

    let last = records.last().unwrap();
    let fields = last.fields.as_ref().expect("final record stores fields");
    let phi_end = fields.phi.clone();
    let dphi_dt_end = fields.dphi_dt.clone();
    let t_end = last.t;
    Ok(Trajectory {
        records,
        mask,
        grid,
        n: setup.n,
        m: setup.m,
        c: setup.c,
        converged,
        t_end,
        phi_end,
        dphi_dt_end,
        steps_taken: steps,
    })
}

/// Conservative bound on the linearized operator norm at a state:
/// (n/C(n,m))·(1/4)·(2π)²·n·(N/2)²·max_x Σ_i a_i / λ_min(ω).
fn symbol_bound(setup: &GeometrySetup, state: &FlowState) -> f64 {
    let n = setup.n as f64;
    let nn = setup.grid().points_per_axis() as f64;
    let pref = n / herm::binomial(setup.n, setup.m);
    let omega_floor = match &setup.omega_mode {
        crate::geometry::OmegaMode::Identity => 1.0,
        _ => {
            // smallest eigenvalue of the constant ω (or a per-point scan)
            geometry::global_min_eigenvalue(
                &FormField::constant(
                    setup.grid(),
                    &herm::HermForm::identity(setup.n),
                )
                .expect("identity"),
                &setup.omega,
            )
            .map(|(_, v)| v.max(1e-12))
            .unwrap_or(1.0)
        }
    };
    pref * 0.25 * (2.0 * std::f64::consts::PI).powi(2) * n * (nn / 2.0).powi(2)
        * state.stab_coeff
        / omega_floor
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cone::{build_scenario, ScenarioSpec};
    use crate::geometry::wedge_integral_weighted;

    fn trivial() -> (GeometrySetup, ScalarField) {
        let sc = build_scenario(&ScenarioSpec::named("trivial", 2, 1, 16, 1)).unwrap();
        (sc.setup, sc.phi0)
    }

    fn strict_small() -> (GeometrySetup, ScalarField) {
        let sc = build_scenario(&ScenarioSpec::named("strict", 2, 1, 16, 3)).unwrap();
        (sc.setup, sc.phi0)
    }

    #[test]
    fn rhs_vanishes_at_trivial_stationary_point() {
        let (setup, phi0) = trivial();
        let state = FlowState::new(phi0, 0.0, &setup).unwrap();
        assert!(state.dphi_dt.max_abs() < 1e-14);
    }

    #[test]
    fn rhs_matches_manual_c_example() {
        // n=2, m=1, X eigenvalues (2,2) rel ω, manual c = 2 → RHS = 1
        let sc = build_scenario(&ScenarioSpec::named("trivial", 2, 1, 8, 1)).unwrap();
        let grid = sc.setup.grid();
        let chi = FormField::constant(grid, &herm::HermForm::from_diagonal(&[2.0, 2.0])).unwrap();
        let zero =
            FormField::constant(grid, &herm::HermForm::from_diagonal(&[0.0, 0.0])).unwrap();
        let omega = FormField::constant(grid, &herm::HermForm::identity(2)).unwrap();
        let setup = GeometrySetup::with_manual_c(
            1,
            chi,
            zero,
            omega,
            sc.setup.diff_arc(),
            2.0,
        )
        .unwrap();
        let rhs = flow_rhs_of(&ScalarField::zeros(grid), &setup).unwrap();
        for &v in rhs.data() {
            assert!((v - 1.0).abs() < 1e-13);
        }
    }

    #[test]
    fn rhs_mean_zero_against_x_volume() {
        // ∫(flow_rhs)·Xⁿ = 0: restatement of d/dt J_n = 0
        let (setup, phi0) = strict_small();
        let state = FlowState::new(phi0, 0.0, &setup).unwrap();
        let integral = wedge_integral_weighted(
            Some(&state.dphi_dt),
            &[(&state.x, setup.n)],
            &setup.omega,
        )
        .unwrap();
        let scale = setup.c.abs().max(1.0);
        assert!(
            (integral / scale).abs() < 1e-10,
            "mean-zero violated: {integral:.3e}"
        );
    }

    #[test]
    fn step_keeps_stationary_point_fixed() {
        let (setup, phi0) = trivial();
        let state = FlowState::new(phi0, 0.0, &setup).unwrap();
        for method in [Method::ExplicitEuler, Method::Rk4, Method::Rkc { stages: 6 }] {
            let next = step(&state, &setup, 0.01, method).unwrap();
            assert!(next.phi.max_abs() < 1e-14, "{method:?} moved the state");
            assert!(next.t > 0.0);
        }
    }

    #[test]
    fn rk4_self_convergence_order() {
        let (setup, phi0) = strict_small();
        let state = FlowState::new(phi0, 0.0, &setup).unwrap();
        let advance_fixed = |dt: f64, steps: usize| -> ScalarField {
            let mut s = state.clone();
            let mut rkc = RkcCache::default();
            for _ in 0..steps {
                let phi = advance(&s, &setup, dt, Method::Rk4, &mut rkc).unwrap();
                s = build_state(phi, s.t + dt, &setup).unwrap().unwrap();
            }
            s.phi
        };
        let dt = 4e-3;
        let a = advance_fixed(dt, 8);
        let b = advance_fixed(dt / 2.0, 16);
        let c = advance_fixed(dt / 4.0, 32);
        let e1 = a
            .data()
            .iter()
            .zip(b.data())
            .fold(0.0f64, |acc, (&x, &y)| acc.max((x - y).abs()));
        let e2 = b
            .data()
            .iter()
            .zip(c.data())
            .fold(0.0f64, |acc, (&x, &y)| acc.max((x - y).abs()));
        let order = (e1 / e2).log2();
        assert!(order > 3.5, "observed RK4 order {order} (e1={e1:.3e}, e2={e2:.3e})");
    }

    #[test]
    fn euler_vs_rk4_difference_is_order_dt() {
        // over a fixed horizon the two methods differ by the Euler global
        // error, O(dt): halving dt must roughly halve the gap
        let (setup, phi0) = strict_small();
        let state = FlowState::new(phi0, 0.0, &setup).unwrap();
        let t_final = 0.016;
        let run_method = |dt: f64, method: Method| -> ScalarField {
            let mut s = state.clone();
            let mut rkc = RkcCache::default();
            let steps = (t_final / dt).round() as usize;
            for _ in 0..steps {
                let phi = advance(&s, &setup, dt, method, &mut rkc).unwrap();
                s = build_state(phi, s.t + dt, &setup).unwrap().unwrap();
            }
            s.phi
        };
        let gap_at = |dt: f64| -> f64 {
            let e = run_method(dt, Method::ExplicitEuler);
            let r = run_method(dt, Method::Rk4);
            e.data()
                .iter()
                .zip(r.data())
                .fold(0.0f64, |acc, (&x, &y)| acc.max((x - y).abs()))
        };
        let d1 = gap_at(2e-3);
        let d2 = gap_at(1e-3);
        let ratio = d1 / d2;
        assert!(
            ratio > 1.6 && ratio < 2.6,
            "global difference ratio {ratio} (d1={d1:.3e}, d2={d2:.3e})"
        );
    }

    #[test]
    fn guard_halves_huge_dt_and_never_returns_inadmissible() {
        let (setup, phi0) = strict_small();
        let state = FlowState::new(phi0, 0.0, &setup).unwrap();
        let stepped = step(&state, &setup, 1e6, Method::ExplicitEuler).unwrap();
        assert!(stepped.lambda_min > 0.0);
        assert!(stepped.t - state.t < 1e6 * 0.51, "dt was not halved");
    }

    #[test]
    fn guard_exhaustion_reports_stiffness_with_last_state() {
        let (setup, phi0) = strict_small();
        let state = FlowState::new(phi0.clone(), 0.0, &setup).unwrap();
        // dt so large that even 30 halvings stay unstable
        match step(&state, &setup, 1e18, Method::ExplicitEuler) {
            Err(Error::Stiffness { halvings, last, .. }) => {
                assert_eq!(halvings, 30);
                assert_eq!(last.phi.data(), phi0.data());
            }
            other => panic!("expected stiffness error, got {:?}", other.map(|_| ())),
        }
    }

    #[test]
    fn rkc_stability_extends_quadratically() {
        let mut cache = RkcCache::default();
        let b4 = cache.coeffs(4).beta;
        let b8 = cache.coeffs(8).beta;
        let b16 = cache.coeffs(16).beta;
        assert!(b8 / b4 > 3.0 && b8 / b4 < 4.5, "beta growth {}", b8 / b4);
        assert!(b16 / b8 > 3.0 && b16 / b8 < 4.5);
        // damped RKC2: β ≈ 0.65·s²
        assert!((b16 / (16.0 * 16.0) - 0.65).abs() < 0.1, "beta(16) = {b16}");
    }

    #[test]
    fn rkc_scalar_amplification_bounded_on_stability_interval() {
        // apply the scheme to y' = λy and check |y₁| ≤ 1 + tiny on [−β, 0]
        let mut cache = RkcCache::default();
        for &s in &[4usize, 9, 16, 33] {
            let co = cache.coeffs(s);
            for frac in [0.02, 0.3, 0.6, 0.9, 0.995] {
                let z = -co.beta * frac;
                // run the recurrence on scalars
                let y0 = 1.0f64;
                let f0 = z * y0;
                let mut yjm2 = y0;
                let mut yjm1 = y0 + co.mu_tilde1 * f0;
                for &(mu, nu, mu_tilde, gamma_tilde) in &co.rows {
                    let fjm1 = z * yjm1;
                    let yj = (1.0 - mu - nu) * y0 + mu * yjm1 + nu * yjm2
                        + mu_tilde * fjm1
                        + gamma_tilde * f0;
                    yjm2 = yjm1;
                    yjm1 = yj;
                }
                assert!(
                    yjm1.abs() <= 1.0 + 1e-9,
                    "s={s} z={z}: amplification {yjm1}"
                );
            }
        }
    }

    #[test]
    fn rkc_second_order_accuracy() {
        let (setup, phi0) = strict_small();
        let state = FlowState::new(phi0, 0.0, &setup).unwrap();
        let t_final = 0.02;
        let reference = {
            let mut s = state.clone();
            let mut rkc = RkcCache::default();
            let dt = 1e-4f64;
            let steps = (t_final / dt).round() as usize;
            for _ in 0..steps {
                let phi = advance(&s, &setup, dt, Method::Rk4, &mut rkc).unwrap();
                s = build_state(phi, s.t + dt, &setup).unwrap().unwrap();
            }
            s.phi
        };
        let rkc_err = |dt: f64| -> f64 {
            let mut s = state.clone();
            let mut rkc = RkcCache::default();
            let steps = (t_final / dt).round() as usize;
            for _ in 0..steps {
                let phi = advance(&s, &setup, dt, Method::Rkc { stages: 8 }, &mut rkc).unwrap();
                s = build_state(phi, s.t + dt, &setup).unwrap().unwrap();
            }
            s.phi
                .data()
                .iter()
                .zip(reference.data())
                .fold(0.0f64, |a, (&x, &y)| a.max((x - y).abs()))
        };
        let e1 = rkc_err(t_final / 4.0);
        let e2 = rkc_err(t_final / 8.0);
        let order = (e1 / e2).log2();
        assert!(order > 1.7, "observed RKC order {order} (e1={e1:.2e}, e2={e2:.2e})");
    }

    #[test]
    fn trivial_run_converges_immediately() {
        let (setup, phi0) = trivial();
        let traj = run(&setup, &phi0, &RunOptions::default()).unwrap();
        assert!(traj.converged);
        assert_eq!(traj.records.len(), 1);
        assert_eq!(traj.t_end, 0.0);
        assert_eq!(traj.steps_taken, 0);
    }

    #[test]
    fn run_rejects_inadmissible_phi0() {
        let (setup, _) = trivial();
        let bad = ScalarField::from_fn(setup.grid(), |x| {
            -(2.0 / (std::f64::consts::PI * std::f64::consts::PI))
                * (2.0 * std::f64::consts::PI * x[0]).cos()
        })
        .unwrap();
        assert!(matches!(
            run(&setup, &bad, &RunOptions::default()),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn short_strict_run_decays_and_stays_admissible() {
        let (setup, phi0) = strict_small();
        let opts = RunOptions {
            t_max: 0.5,
            tol_converge: 1e-12,
            record_interval: 0.05,
            ..RunOptions::default()
        };
        let traj = run(&setup, &phi0, &opts).unwrap();
        assert!(traj.records.len() >= 5);
        let first = &traj.records[0];
        let last = traj.last();
        assert!(last.masked_sup_abs_dphidt < first.masked_sup_abs_dphidt);
        for rec in &traj.records {
            assert!(rec.lambda_min > 0.0, "admissibility lost at t={}", rec.t);
        }
        // cache coherence at the final state
        let state = FlowState::new(traj.phi_end.clone(), traj.t_end, &setup).unwrap();
        assert!(state.cache_coherence_error(&setup).unwrap() < 1e-13);
    }

    #[test]
    fn runs_are_deterministic() {
        let (setup, phi0) = strict_small();
        let opts = RunOptions {
            t_max: 0.1,
            record_interval: 0.02,
            ..RunOptions::default()
        };
        let a = run(&setup, &phi0, &opts).unwrap();
        let b = run(&setup, &phi0, &opts).unwrap();
        assert_eq!(a.records.len(), b.records.len());
        for (ra, rb) in a.records.iter().zip(&b.records) {
            assert_eq!(ra.t.to_bits(), rb.t.to_bits());
            assert_eq!(
                ra.functional.combined.to_bits(),
                rb.functional.combined.to_bits()
            );
            assert_eq!(ra.w_max.to_bits(), rb.w_max.to_bits());
        }
        assert_eq!(a.phi_end.data(), b.phi_end.data());
    }

    #[test]
    fn rkc_run_matches_rk4_run() {
        let (setup, phi0) = strict_small();
        let base = RunOptions {
            t_max: 0.2,
            tol_converge: 1e-13,
            record_interval: 0.1,
            ..RunOptions::default()
        };
        let rk4 = run(&setup, &phi0, &base).unwrap();
        let rkc = run(
            &setup,
            &phi0,
            &RunOptions {
                method: Method::Rkc { stages: 0 },
                dt_max: Some(1e-3),
                ..base
            },
        )
        .unwrap();
        let err = rk4
            .phi_end
            .data()
            .iter()
            .zip(rkc.phi_end.data())
            .fold(0.0f64, |a, (&x, &y)| a.max((x - y).abs()));
        assert!(err < 1e-5, "rkc vs rk4 end-state difference {err:.3e}");
    }
}
