//! The J-functional hierarchy and the identities the flow preserves.
//!
//! For admissible u the functionals are evaluated through the closed
//! straight-line formula
//!
//! ```text
//!   J_i(χ+χ̃, u) = 1/(i+1) · Σ_{j=0}^{i} ∫ u · X_u^j ∧ (χ+χ̃)^{i−j} ∧ ω^{n−i}
//! ```
//!
//! with X_u = χ + χ̃ + i∂∂̄u. The path-integral definition (d/ds along any
//! curve in the admissible cone) is used as a quadrature cross-check in the
//! tests only; the closed formula is exact given the wedge machinery.
//!
//! Identities provided as runtime-checkable facts:
//! - translation invariance of the combined functional c·J_n − n·J_m (the
//!   constant terms cancel by the definition of c),
//! - J_n conservation along the flow,
//! - nonnegative dissipation ∫(∂ₜφ)²·Xⁿ = d/dt(combined),
//! - the normalization quantity Σ_i ∫u·X^i∧(χ+χ̃)^{n−i} = (n+1)·J_n.

use crate::error::{Error, Result};
use crate::flow::FlowState;
use crate::geometry::{self, GeometrySetup};
use crate::grid::{FormField, ScalarField};

/// One recorded row of functional values along a trajectory.
#[derive(Debug, Clone)]
pub struct FunctionalRow {
    pub t: f64,
    /// J_0 … J_n.
    pub j: Vec<f64>,
    /// c·J_n − n·J_m.
    pub combined: f64,
    /// Instantaneous ∫(∂ₜφ)²·Xⁿ.
    pub dissipation: f64,
    /// Σ_i ∫φ·X^i∧(χ+χ̃)^{n−i}; equals (n+1)·J_n.
    pub theorem_norm: f64,
}

/// Time series of functional rows, ordered by strictly increasing t.
#[derive(Debug, Clone, Default)]
pub struct FunctionalLedger {
    pub rows: Vec<FunctionalRow>,
}

impl FunctionalLedger {
    pub fn push(&mut self, row: FunctionalRow) -> Result<()> {
        if let Some(last) = self.rows.last() {
            if row.t <= last.t {
                return Err(Error::argument(format!(
                    "ledger rows must have strictly increasing t: {} after {}",
                    row.t, last.t
                )));
            }
        }
        self.rows.push(row);
        Ok(())
    }

    /// Worst relative deviation of theorem_norm from (n+1)·J_n across rows.
    pub fn theorem_norm_worst_error(&self) -> f64 {
        let mut worst = 0.0f64;
        for row in &self.rows {
            let jn = *row.j.last().unwrap();
            let want = (row.j.len() as f64) * jn;
            let err = (row.theorem_norm - want).abs() / want.abs().max(1.0);
            worst = worst.max(err);
        }
        worst
    }
}

fn check_admissible(setup: &GeometrySetup, u: &ScalarField) -> Result<FormField> {
    let x = setup.x_field(u)?;
    let (arg, min) = geometry::global_min_eigenvalue(&x, &setup.omega)?;
    if min <= 0.0 {
        return Err(Error::geometry_at(
            "potential is not admissible",
            min,
            Some(arg),
        ));
    }
    Ok(x)
}

/// J_i(χ+χ̃, u) by the straight-line formula. Requires u admissible.
pub fn j_functional(i: usize, u: &ScalarField, setup: &GeometrySetup) -> Result<f64> {
    let x = check_admissible(setup, u)?;
    j_functional_with_x(i, u, &x, setup)
}

/// Straight-line formula evaluated against a precomputed X_u cache.
pub fn j_functional_with_x(
    i: usize,
    u: &ScalarField,
    x: &FormField,
    setup: &GeometrySetup,
) -> Result<f64> {
    let n = setup.n;
    if i > n {
        return Err(Error::argument(format!(
            "j_functional index {i} out of range 0..={n}"
        )));
    }
    let mut acc = 0.0;
    for j in 0..=i {
        acc += geometry::wedge_integral_weighted(
            Some(u),
            &[(x, j), (setup.y(), i - j), (&setup.omega, n - i)],
            &setup.omega,
        )?;
    }
    Ok(acc / (i + 1) as f64)
}

/// c·J_n(u) − n·J_m(u). The constant c is shared from the setup so the
/// translation identity cancels exactly.
pub fn combined_functional(u: &ScalarField, setup: &GeometrySetup) -> Result<f64> {
    let x = check_admissible(setup, u)?;
    combined_functional_with_x(u, &x, setup)
}

pub fn combined_functional_with_x(
    u: &ScalarField,
    x: &FormField,
    setup: &GeometrySetup,
) -> Result<f64> {
    let jn = j_functional_with_x(setup.n, u, x, setup)?;
    let jm = j_functional_with_x(setup.m, u, x, setup)?;
    Ok(setup.c * jn - setup.n as f64 * jm)
}

/// Instantaneous dissipation ∫(∂ₜφ)²·Xⁿ of a flow state (uses the caches).
pub fn dissipation(state: &FlowState, setup: &GeometrySetup) -> Result<f64> {
    dissipation_of(&state.dphi_dt, &state.x, setup)
}

/// Dissipation from explicit ∂ₜφ and X fields; always ≥ 0.
pub fn dissipation_of(
    dphi_dt: &ScalarField,
    x: &FormField,
    setup: &GeometrySetup,
) -> Result<f64> {
    let sq = ScalarField::new(
        dphi_dt.grid(),
        dphi_dt.data().iter().map(|&v| v * v).collect(),
    )?;
    geometry::wedge_integral_weighted(Some(&sq), &[(x, setup.n)], &setup.omega)
}

/// The Theorem-normalization quantity Σ_{i=0}^{n} ∫u·X_u^i∧(χ+χ̃)^{n−i};
/// equals (n+1)·J_n(u). Requires u admissible.
pub fn theorem_normalization(u: &ScalarField, setup: &GeometrySetup) -> Result<f64> {
    let x = check_admissible(setup, u)?;
    theorem_normalization_with_x(u, &x, setup)
}

pub fn theorem_normalization_with_x(
    u: &ScalarField,
    x: &FormField,
    setup: &GeometrySetup,
) -> Result<f64> {
    let n = setup.n;
    let mut acc = 0.0;
    for i in 0..=n {
        acc += geometry::wedge_integral_weighted(
            Some(u),
            &[(x, i), (setup.y(), n - i)],
            &setup.omega,
        )?;
    }
    Ok(acc)
}

/// Build a full functional row for a state (shared by the flow recorder).
pub fn functional_row(state: &FlowState, setup: &GeometrySetup) -> Result<FunctionalRow> {
    let n = setup.n;
    let mut j = Vec::with_capacity(n + 1);
    for i in 0..=n {
        j.push(j_functional_with_x(i, &state.phi, &state.x, setup)?);
    }
    let combined = setup.c * j[n] - setup.n as f64 * j[setup.m];
    let dissipation = dissipation(state, setup)?;
    let theorem_norm = theorem_normalization_with_x(&state.phi, &state.x, setup)?;
    Ok(FunctionalRow {
        t: state.t,
        j,
        combined,
        dissipation,
        theorem_norm,
    })
}
