//! Direct solution of the stationary equation
//!
//! ```text
//!   c·(χ + χ̃ + i∂∂̄ψ)ⁿ = n·(χ + χ̃ + i∂∂̄ψ)ᵐ ∧ ω^{n−m},
//! ```
//!
//! by damped Newton iteration on the residual F(ψ) = flow_rhs(ψ). The
//! linearization at an admissible state is the elliptic operator
//!
//! ```text
//!   L δ = (n / C(n,m)) · Σ_i S_{n−m−1;i}(X⁻¹)·(X^{ii})² · (i∂∂̄δ)_{ii}
//! ```
//!
//! in the (X, ω) diagonalizing frame, i.e. tr(C(x)·(1/4)Hess δ) for a
//! positive definite coefficient matrix C(x). Increments are solved by
//! BiCGStab with a constant-coefficient spectral preconditioner (the mean
//! coefficient matrix inverted mode-by-mode), in the zero-mean gauge that
//! removes the constant kernel. Backtracking damping keeps iterates
//! admissible and the residual decreasing; near the cone boundary this is
//! what rescues overshooting steps.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::flow;
use crate::functionals;
use crate::geometry::{self, GeometrySetup};
use crate::grid::{AmpMask, FormField, ScalarField};
use crate::herm;
use crate::reduce;
use crate::smallmat::{self, C64};
use crate::spectral::Differentiator;

/// Solution of the stationary equation, sup-normalized.
#[derive(Debug, Clone)]
pub struct EllipticSolution {
    /// ψ with max over the grid exactly 0.
    pub psi: ScalarField,
    /// sup |flow_rhs(ψ)| at the returned iterate.
    pub residual_norm: f64,
    pub newton_iterations: usize,
    /// max/min nonzero symbol ratio of the preconditioning model operator.
    pub linearization_conditioning: f64,
    /// worst |mean| of an accepted Newton increment (gauge diagnostic).
    pub worst_increment_mean: f64,
    /// sup-residual after each Newton iteration, starting with the initial.
    pub residual_history: Vec<f64>,
}

/// Per-point linearization data: the n positive coefficients a_i and the
/// diagonalizing frame (columns v_i with v^H ω v = I).
pub struct LinearizationData {
    pub n: usize,
    /// a_i = S_{n−m−1;i}(X⁻¹)·(X^{ii})², n per point.
    pub coeffs: Vec<f64>,
    /// frames, n² complex entries per point.
    pub frames: Vec<C64>,
}

/// Coefficients of the linearized operator at an admissible X field.
pub fn linearization_coefficients(
    setup: &GeometrySetup,
    x: &FormField,
) -> Result<LinearizationData> {
    let n = setup.n;
    let m = setup.m;
    let total = setup.grid().total_points();
    let mut coeffs = vec![0.0f64; total * n];
    let mut frames = vec![C64::new(0.0, 0.0); total * n * n];
    let omega_at = |p: usize| -> Result<herm::HermForm> {
        herm::HermForm::new(n, setup.omega.at(p).to_vec())
    };
    for p in 0..total {
        let xf = herm::HermForm::new(n, x.at(p).to_vec())?;
        let of = omega_at(p)?;
        let (lam, frame) = herm::gen_eigen_with_frame(&xf, &of)?;
        if lam[0] <= 0.0 {
            return Err(Error::geometry_at(
                "linearization requires an admissible state",
                lam[0],
                Some(p),
            ));
        }
        let inv: Vec<f64> = lam.iter().map(|&v| 1.0 / v).collect();
        for i in 0..n {
            let s = herm::elem_sym_partial(n - m - 1, i, &inv)?;
            coeffs[p * n + i] = s * inv[i] * inv[i];
        }
        frames[p * n * n..(p + 1) * n * n].copy_from_slice(&frame);
    }
    Ok(LinearizationData { n, coeffs, frames })
}

/// The assembled linear operator L δ = tr(C(x)·(1/4)Hess δ)·(n/C(n,m)),
/// stored as packed real coefficients against the triangular Hessian
/// components (off-diagonal entries pre-doubled).
pub struct LinearOperator {
    diff: Arc<Differentiator>,
    n: usize,
    /// total × n(n+1)/2, includes the (n/C(n,m))·(1/4) prefactor.
    tri_coeffs: Vec<f64>,
    /// grid-mean coefficient matrix (same packing), for the preconditioner.
    mean_coeffs: Vec<f64>,
}

impl LinearOperator {
    /// Assemble from linearization data: C(x) = (n/C(n,m))·Σ_i a_i·v_i v_iᴴ.
    pub fn assemble(setup: &GeometrySetup, data: &LinearizationData) -> LinearOperator {
        let n = setup.n;
        let total = setup.grid().total_points();
        let tri = n * (n + 1) / 2;
        let prefactor = setup.n as f64 / herm::binomial(setup.n, setup.m) * 0.25;
        let mut tri_coeffs = vec![0.0f64; total * tri];
        for p in 0..total {
            let mut cmat = [0.0f64; smallmat::MAX_DIM * smallmat::MAX_DIM];
            for i in 0..n {
                let a = data.coeffs[p * n + i];
                for r in 0..n {
                    let vr = data.frames[p * n * n + r * n + i];
                    for s in 0..n {
                        let vs = data.frames[p * n * n + s * n + i];
                        // real part of v_r conj(v_s) enters against the real
                        // symmetric Hessian
                        cmat[r * n + s] += a * (vr * vs.conj()).re;
                    }
                }
            }
            let mut t = 0usize;
            for r in 0..n {
                for s in r..n {
                    let w = if r == s { 1.0 } else { 2.0 };
                    tri_coeffs[p * tri + t] = prefactor * w * cmat[r * n + s];
                    t += 1;
                }
            }
        }
        let mut mean_coeffs = vec![0.0f64; tri];
        for (t, slot) in mean_coeffs.iter_mut().enumerate() {
            *slot = reduce::grid_sum(total, |p| tri_coeffs[p * tri + t]) / total as f64;
        }
        LinearOperator {
            diff: setup.diff_arc(),
            n,
            tri_coeffs,
            mean_coeffs,
        }
    }

    /// L δ (the elliptic operator itself, negative symbol).
    pub fn apply(&self, delta: &ScalarField) -> ScalarField {
        let derivs = self.diff.second_derivatives(delta);
        let total = delta.data().len();
        let tri = self.n * (self.n + 1) / 2;
        let mut out = vec![0.0f64; total];
        reduce::fill_slice(&mut out, |p| {
            let mut acc = 0.0;
            for (t, d) in derivs.iter().enumerate() {
                acc += self.tri_coeffs[p * tri + t] * d[p];
            }
            acc
        });
        ScalarField::new(delta.grid(), out).expect("finite operator output")
    }

    /// Symbol of the constant-coefficient model operator −L₀ at a Fourier
    /// mode (positive away from zero).
    fn model_symbol(&self, k: &[f64]) -> f64 {
        let mut t = 0usize;
        let mut acc = 0.0;
        for r in 0..self.n {
            for s in r..self.n {
                // second derivative multiplier is −k_r·k_s (angular)
                acc += self.mean_coeffs[t] * k[r] * k[s];
                t += 1;
            }
        }
        acc
    }

    /// max/min nonzero model symbol: the conditioning of the
    /// constant-coefficient preconditioner.
    pub fn model_conditioning(&self) -> f64 {
        let grid = self.diff.grid();
        let nn = grid.points_per_axis();
        let mut lo = f64::INFINITY;
        let mut hi = 0.0f64;
        let mut k = vec![0.0f64; self.n];
        let total = grid.total_points();
        for p in 0..total {
            mode_of(p, nn, self.n, &mut k);
            if k.iter().all(|&v| v == 0.0) {
                continue;
            }
            let s = self.model_symbol(&k);
            lo = lo.min(s);
            hi = hi.max(s);
        }
        (hi / lo.max(1e-300)).max(1.0)
    }

    /// Apply the inverse of the model operator (spectral), zeroing the mean.
    pub fn precondition(&self, rhs: &ScalarField) -> ScalarField {
        let grid = self.diff.grid();
        let nn = grid.points_per_axis();
        let mut hat = self.diff.forward(rhs.data());
        let mut k = vec![0.0f64; self.n];
        for (p, h) in hat.iter_mut().enumerate() {
            mode_of(p, nn, self.n, &mut k);
            if k.iter().all(|&v| v == 0.0) {
                *h = num_complex::Complex64::new(0.0, 0.0);
            } else {
                let s = self.model_symbol(&k).max(1e-300);
                *h /= s;
            }
        }
        let data = self.diff.inverse_real(&hat);
        ScalarField::new(grid, data).expect("finite preconditioner output")
    }
}

/// Angular wavenumbers (2π·k) of the flat spectral index `p`.
fn mode_of(p: usize, nn: usize, n: usize, out: &mut [f64]) {
    let mut rem = p;
    for a in (0..n).rev() {
        let i = rem % nn;
        rem /= nn;
        let k = if i <= nn / 2 {
            i as isize
        } else {
            i as isize - nn as isize
        };
        out[a] = if i == nn / 2 {
            0.0
        } else {
            2.0 * std::f64::consts::PI * k as f64
        };
    }
}

fn project_zero_mean(f: &mut ScalarField) -> f64 {
    let mean = f.mean();
    for v in f.data_mut() {
        *v -= mean;
    }
    mean
}

fn dot(a: &ScalarField, b: &ScalarField) -> f64 {
    let (ad, bd) = (a.data(), b.data());
    reduce::grid_sum(ad.len(), |p| ad[p] * bd[p])
}

fn norm(a: &ScalarField) -> f64 {
    dot(a, a).sqrt()
}

/// Preconditioned BiCGStab for A = −L on the zero-mean subspace.
/// Returns (solution, achieved relative residual, iterations).
fn bicgstab(
    op: &LinearOperator,
    b: &ScalarField,
    rel_tol: f64,
    max_iters: usize,
) -> (ScalarField, f64, usize) {
    let grid = b.grid();
    let apply_a = |v: &ScalarField| -> ScalarField {
        let mut out = op.apply(v);
        for x in out.data_mut() {
            *x = -*x;
        }
        project_zero_mean(&mut out);
        out
    };
    let mut rhs = b.clone();
    project_zero_mean(&mut rhs);
    let b_norm = norm(&rhs).max(1e-300);

    let mut x = ScalarField::zeros(grid);
    let mut r = rhs.clone();
    let mut r_hat = r.clone();
    let mut rho = 1.0f64;
    let mut alpha = 1.0f64;
    let mut omega = 1.0f64;
    let mut v = ScalarField::zeros(grid);
    let mut p = ScalarField::zeros(grid);
    let mut iters = 0usize;
    let mut res = norm(&r) / b_norm;
    while res > rel_tol && iters < max_iters {
        let rho_new = dot(&r_hat, &r);
        if rho_new.abs() < 1e-290 {
            // restart with the current residual
            r_hat = r.clone();
            rho = 1.0;
            alpha = 1.0;
            omega = 1.0;
            v = ScalarField::zeros(grid);
            p = ScalarField::zeros(grid);
            continue;
        }
        let beta = (rho_new / rho) * (alpha / omega);
        // p = r + beta (p − omega v)
        p = ScalarField::new(
            grid,
            r.data()
                .iter()
                .zip(p.data())
                .zip(v.data())
                .map(|((&rv, &pv), &vv)| rv + beta * (pv - omega * vv))
                .collect(),
        )
        .unwrap();
        let mut p_hat = op.precondition(&p);
        project_zero_mean(&mut p_hat);
        v = apply_a(&p_hat);
        let denom = dot(&r_hat, &v);
        if denom.abs() < 1e-290 {
            r_hat = r.clone();
            rho = 1.0;
            continue;
        }
        alpha = rho_new / denom;
        let s = ScalarField::new(
            grid,
            r.data()
                .iter()
                .zip(v.data())
                .map(|(&rv, &vv)| rv - alpha * vv)
                .collect(),
        )
        .unwrap();
        if norm(&s) / b_norm <= rel_tol {
            x = x.add_scaled(&p_hat, alpha);
            r = s;
            iters += 1;
            res = norm(&r) / b_norm;
            break;
        }
        let mut s_hat = op.precondition(&s);
        project_zero_mean(&mut s_hat);
        let t = apply_a(&s_hat);
        let tt = dot(&t, &t);
        omega = if tt > 0.0 { dot(&t, &s) / tt } else { 0.0 };
        x = x.add_scaled(&p_hat, alpha).add_scaled(&s_hat, omega);
        r = ScalarField::new(
            grid,
            s.data()
                .iter()
                .zip(t.data())
                .map(|(&sv, &tv)| sv - omega * tv)
                .collect(),
        )
        .unwrap();
        rho = rho_new;
        iters += 1;
        res = norm(&r) / b_norm;
        if omega.abs() < 1e-290 {
            r_hat = r.clone();
            rho = 1.0;
        }
    }
    (x, res, iters)
}

/// Options for the damped Newton solve.
#[derive(Debug, Clone)]
pub struct NewtonOptions {
    pub tol: f64,
    pub max_newton: usize,
    pub max_linear_iters: usize,
    /// residual decrease required per accepted step
    pub decrease_factor: f64,
    pub max_line_search: usize,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        NewtonOptions {
            tol: 1e-10,
            max_newton: 60,
            max_linear_iters: 600,
            decrease_factor: 0.99,
            max_line_search: 20,
        }
    }
}

/// Damped Newton for the stationary equation. `init` must be admissible.
pub fn solve_elliptic(
    setup: &GeometrySetup,
    init: &ScalarField,
    tol: f64,
) -> Result<EllipticSolution> {
    solve_elliptic_with(
        setup,
        init,
        &NewtonOptions {
            tol,
            ..NewtonOptions::default()
        },
    )
}

pub fn solve_elliptic_with(
    setup: &GeometrySetup,
    init: &ScalarField,
    opts: &NewtonOptions,
) -> Result<EllipticSolution> {
    if opts.tol <= 0.0 {
        return Err(Error::argument("solve_elliptic: tol must be positive"));
    }
    let (ok, min0) = geometry::admissible(setup, init)?;
    if !ok {
        return Err(Error::precondition(format!(
            "solve_elliptic: init is not admissible (min eigenvalue {min0:.6e})"
        )));
    }
    let mut psi = init.clone();
    let mut residual = flow::flow_rhs_of(&psi, setup)?;
    let mut res = residual.max_abs();
    let mut history = vec![res];
    let mut newton_iterations = 0usize;
    let mut worst_mean = 0.0f64;
    let mut conditioning = 1.0f64;
    let mut res_prev = f64::INFINITY;

    while res >= opts.tol {
        if newton_iterations >= opts.max_newton {
            return Err(Error::Nonconvergence {
                what: format!(
                    "Newton did not reach tol {:.1e} in {} iterations",
                    opts.tol, opts.max_newton
                ),
                residual: res,
                last: Box::new(psi),
            });
        }
        let x = setup.x_field(&psi)?;
        let data = linearization_coefficients(setup, &x)?;
        let op = LinearOperator::assemble(setup, &data);
        conditioning = op.model_conditioning();
        // forcing term: quadratic tightening as the residual drops
        let ratio = if res_prev.is_finite() {
            (res / res_prev).clamp(0.0, 1.0)
        } else {
            1.0
        };
        let eta = (0.5 * ratio * ratio).clamp(1e-6, 0.05).max(0.01 * opts.tol / res);
        let (mut delta, _lin_res, _lin_iters) =
            bicgstab(&op, &residual, eta, opts.max_linear_iters);
        let mean = project_zero_mean(&mut delta);
        worst_mean = worst_mean.max(mean.abs());

        // backtracking damping: admissibility + residual decrease
        let mut tau = 1.0f64;
        let mut accepted = false;
        for _ in 0..opts.max_line_search {
            let trial = psi.add_scaled(&delta, tau);
            let (adm, _) = geometry::admissible(setup, &trial)?;
            if adm {
                let trial_residual = flow::flow_rhs_of(&trial, setup)?;
                let trial_res = trial_residual.max_abs();
                if trial_res <= opts.decrease_factor * res {
                    res_prev = res;
                    psi = trial;
                    residual = trial_residual;
                    res = trial_res;
                    accepted = true;
                    break;
                }
            }
            tau *= 0.5;
        }
        if !accepted {
            return Err(Error::Nonconvergence {
                what: format!(
                    "line search failed {} times at residual {res:.3e}",
                    opts.max_line_search
                ),
                residual: res,
                last: Box::new(psi),
            });
        }
        newton_iterations += 1;
        history.push(res);
    }

    // sup-normalization: exact arithmetic subtraction of the max
    let maxv = psi.max();
    let normalized = ScalarField::new(
        psi.grid(),
        psi.data().iter().map(|&v| v - maxv).collect(),
    )?;
    let final_residual = flow::flow_rhs_of(&normalized, setup)?.max_abs();
    Ok(EllipticSolution {
        psi: normalized,
        residual_norm: final_residual,
        newton_iterations,
        linearization_conditioning: conditioning,
        worst_increment_mean: worst_mean,
        residual_history: history,
    })
}

/// Comparison of a flow limit against the Newton solution.
#[derive(Debug, Clone)]
pub struct FlowLimitComparison {
    /// max − min of (φ_end − ψ) over the mask: the constant-mode spread.
    pub spread: f64,
    /// additive constant K with J_n(ψ + K) = J_n(φ₀).
    pub k_shift: f64,
    /// sup over the mask of |φ_end − (ψ + K)|.
    pub sup_diff_after_matching: f64,
    /// dJ_n/dK = ∫(χ+χ̃)ⁿ (the slope certifying uniqueness of K).
    pub jn_slope: f64,
    pub mask_points: usize,
}

/// Compare a converged flow potential with the stationary solution, fixing
/// the additive constant by J_n matching against the flow's initial value.
pub fn compare_flow_limit(
    phi_end: &ScalarField,
    jn_target: f64,
    sol: &EllipticSolution,
    setup: &GeometrySetup,
    mask: &AmpMask,
) -> Result<FlowLimitComparison> {
    let total = setup.grid().total_points();
    let masked: Vec<usize> = (0..total).filter(|&p| mask.mask[p]).collect();
    let pts = if masked.is_empty() {
        (0..total).collect::<Vec<_>>()
    } else {
        masked
    };
    let mut dmin = f64::INFINITY;
    let mut dmax = f64::NEG_INFINITY;
    for &p in &pts {
        let d = phi_end.data()[p] - sol.psi.data()[p];
        dmin = dmin.min(d);
        dmax = dmax.max(d);
    }
    let spread = dmax - dmin;

    // J_n(ψ + K) is exactly linear in K with slope ∫Yⁿ > 0; a secant step
    // from two evaluations lands on the root, and one more verifies it.
    let slope = geometry::wedge_integral(&[(setup.y(), setup.n)], &setup.omega)?;
    if slope <= 0.0 {
        return Err(Error::geometry(format!(
            "J_n slope ∫(χ+χ̃)ⁿ = {slope:.3e} is not positive"
        )));
    }
    let g = |k: f64| -> Result<f64> {
        Ok(functionals::j_functional(setup.n, &sol.psi.shift(k), setup)? - jn_target)
    };
    let mut k0 = 0.0f64;
    let mut g0 = g(k0)?;
    for _ in 0..8 {
        if g0.abs() <= 1e-14 * jn_target.abs().max(1.0) {
            break;
        }
        let k1 = k0 - g0 / slope;
        let g1 = g(k1)?;
        k0 = k1;
        g0 = g1;
    }
    let matched = sol.psi.shift(k0);
    let mut sup = 0.0f64;
    for &p in &pts {
        sup = sup.max((phi_end.data()[p] - matched.data()[p]).abs());
    }
    Ok(FlowLimitComparison {
        spread,
        k_shift: k0,
        sup_diff_after_matching: sup,
        jn_slope: slope,
        mask_points: pts.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cone::{build_scenario, ScenarioSpec};
    use crate::flow::FlowState;
    use std::f64::consts::{PI, TAU};

    fn strict(seed: u64) -> crate::cone::Scenario {
        build_scenario(&ScenarioSpec::named("strict", 2, 1, 16, seed)).unwrap()
    }

    #[test]
    fn linearization_is_identity_at_unit_eigenvalues() {
        // n=2, m=1, λ = (1,1): a_i = S_{0;i} · 1 = 1 in both directions
        let sc = build_scenario(&ScenarioSpec::named("trivial", 2, 1, 8, 1)).unwrap();
        let x = sc.setup.x_field(&sc.phi0).unwrap();
        let data = linearization_coefficients(&sc.setup, &x).unwrap();
        for &a in &data.coeffs {
            assert!((a - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn linearization_coefficients_positive_on_admissible_states() {
        let sc = strict(31);
        let x = sc.setup.x_field(&sc.phi0).unwrap();
        let data = linearization_coefficients(&sc.setup, &x).unwrap();
        assert!(data.coeffs.iter().all(|&a| a > 0.0));
    }

    #[test]
    fn jacobian_matches_finite_differences_at_order_two() {
        let sc = strict(17);
        let setup = &sc.setup;
        let phi = sc.phi0.clone();
        let x = setup.x_field(&phi).unwrap();
        let data = linearization_coefficients(setup, &x).unwrap();
        let op = LinearOperator::assemble(setup, &data);
        let delta = ScalarField::from_fn(setup.grid(), |p| {
            0.7 * (TAU * p[0]).cos() + 0.4 * (TAU * (p[0] + 2.0 * p[1])).sin()
        })
        .unwrap();
        let l_delta = op.apply(&delta);
        let fd_error = |eps: f64| -> f64 {
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
        let e1 = fd_error(2e-3);
        let e2 = fd_error(1e-3);
        let e3 = fd_error(5e-4);
        let o1 = (e1 / e2).log2();
        let o2 = (e2 / e3).log2();
        assert!(o1 > 1.9 && o2 > 1.9, "orders {o1:.2}, {o2:.2} (e={e1:.2e},{e2:.2e},{e3:.2e})");
    }

    #[test]
    fn trivial_setup_solves_immediately() {
        let sc = build_scenario(&ScenarioSpec::named("trivial", 2, 1, 16, 1)).unwrap();
        let sol = solve_elliptic(&sc.setup, &ScalarField::zeros(sc.setup.grid()), 1e-10).unwrap();
        assert_eq!(sol.newton_iterations, 0);
        assert!(sol.residual_norm < 1e-13);
        assert!(sol.psi.max_abs() < 1e-14);
    }

    #[test]
    fn strict_scenario_newton_converges_with_quadratic_tail() {
        let sc = strict(23);
        let sol = solve_elliptic(&sc.setup, &ScalarField::zeros(sc.setup.grid()), 1e-10).unwrap();
        assert!(sol.residual_norm < 1e-10);
        assert_eq!(sol.psi.max(), 0.0, "sup normalization must be exact");
        assert!(sol.worst_increment_mean < 1e-12, "gauge violated: {}", sol.worst_increment_mean);
        assert!(sol.linearization_conditioning >= 1.0);
        // quadratic tail (frozen regression): successive log-residual
        // ratios stay >= 1.8 over the last three iterations
        let h = &sol.residual_history;
        assert!(h.len() >= 3, "history too short: {h:?}");
        for k in h.len() - 3..h.len() - 1 {
            let ratio = h[k + 1].ln() / h[k].ln();
            assert!(
                ratio >= 1.8,
                "no quadratic tail: history {h:?}, ratio at step {k} is {ratio:.2}"
            );
        }
    }

    #[test]
    fn rejects_inadmissible_init() {
        let sc = strict(3);
        let bad = ScalarField::from_fn(sc.setup.grid(), |x| {
            -(3.0 / (PI * PI)) * (TAU * x[0]).cos()
        })
        .unwrap();
        assert!(matches!(
            solve_elliptic(&sc.setup, &bad, 1e-8),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn compare_flow_limit_exact_and_shifted() {
        let sc = strict(29);
        let setup = &sc.setup;
        let sol = solve_elliptic(setup, &ScalarField::zeros(setup.grid()), 1e-11).unwrap();
        let mask = geometry::amp_locus(&setup.chi_tilde, &setup.omega, 1e-3).unwrap();
        // phi_end = psi exactly
        let jn_psi = functionals::j_functional(setup.n, &sol.psi, setup).unwrap();
        let cmp = compare_flow_limit(&sol.psi, jn_psi, &sol, setup, &mask).unwrap();
        assert!(cmp.spread < 1e-14);
        assert!(cmp.k_shift.abs() < 1e-12);
        assert!(cmp.sup_diff_after_matching < 1e-12);
        // phi_end = psi + 3: spread still 0, K recovers the shift
        let shifted = sol.psi.shift(3.0);
        let jn_shifted = functionals::j_functional(setup.n, &shifted, setup).unwrap();
        let cmp2 = compare_flow_limit(&shifted, jn_shifted, &sol, setup, &mask).unwrap();
        assert!(cmp2.spread < 1e-14);
        assert!((cmp2.k_shift - 3.0).abs() < 1e-10, "K = {}", cmp2.k_shift);
        assert!(cmp2.sup_diff_after_matching < 1e-9);
        assert!(cmp2.jn_slope > 0.0);
    }

    #[test]
    fn linearized_rk4_step_decays_perturbations_at_stationary_point() {
        // the linearized operator at the trivial stationary point has
        // nonpositive spectrum: one stable RK4 step must not grow any
        // mean-zero perturbation
        let sc = build_scenario(&ScenarioSpec::named("trivial", 2, 1, 16, 1)).unwrap();
        let setup = &sc.setup;
        let state = FlowState::new(ScalarField::zeros(setup.grid()), 0.0, setup).unwrap();
        let x = &state.x;
        let data = linearization_coefficients(setup, x).unwrap();
        let op = LinearOperator::assemble(setup, &data);
        // stability: |λ| ≤ symbol bound; dt inside the RK4 real interval
        let nn = setup.grid().points_per_axis() as f64;
        let lam_max = 0.25 * (2.0 * PI).powi(2) * 2.0 * (nn / 2.0).powi(2); // coefficients are 1
        let dt = 2.7 / lam_max;
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for _ in 0..5 {
            let coeffs: Vec<(f64, f64)> = (0..3).map(|_| (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
            let mut delta = ScalarField::from_fn(setup.grid(), |x| {
                let mut v = 0.0;
                for (k, &(ca, cb)) in coeffs.iter().enumerate() {
                    let kf = (k + 1) as f64;
                    v += ca * (TAU * kf * x[0]).cos() + cb * (TAU * kf * (x[0] + x[1])).sin();
                }
                v * 1e-3
            })
            .unwrap();
            project_zero_mean(&mut delta);
            // RK4 on δ' = L δ
            let k1 = op.apply(&delta);
            let k2 = op.apply(&delta.add_scaled(&k1, dt / 2.0));
            let k3 = op.apply(&delta.add_scaled(&k2, dt / 2.0));
            let k4 = op.apply(&delta.add_scaled(&k3, dt));
            let mut after = delta.clone();
            for (p, v) in after.data_mut().iter_mut().enumerate() {
                *v += dt / 6.0
                    * (k1.data()[p] + 2.0 * k2.data()[p] + 2.0 * k3.data()[p] + k4.data()[p]);
            }
            assert!(
                norm(&after) <= norm(&delta) * (1.0 + 1e-12),
                "perturbation grew: {} -> {}",
                norm(&delta),
                norm(&after)
            );
        }
    }

    #[test]
    fn boundary_scenario_newton_converges_at_loose_tolerance() {
        let sc = build_scenario(&ScenarioSpec::named("boundary", 2, 1, 16, 11)).unwrap();
        let sol =
            solve_elliptic(&sc.setup, &ScalarField::zeros(sc.setup.grid()), 1e-6).unwrap();
        assert!(sol.residual_norm < 1e-6);
        assert!(sol.psi.max() == 0.0);
        // solution bounded (grid surrogate of the bounded pluripotential ψ)
        assert!(sol.psi.min() > -50.0);
    }
}
