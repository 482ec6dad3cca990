//! Geometric setups on the flat torus: admissibility, wedge quadrature,
//! ample-locus masks, and the flow constant c.
//!
//! Quadrature is the uniform point sum times the cell volume (trapezoidal on
//! a periodic grid), normalized so that ∫ωⁿ = 1 for the identity metric on
//! the unit torus. Pointwise wedge coefficients are evaluated through the
//! characteristic-coefficient route, which agrees with the prescribed
//! gen_eigen/elem_sym route identically and with the mixed-discriminant
//! polarization oracle to rounding; the tests pin all three together.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::grid::{AmpMask, FormField, PeriodicGrid, ScalarField};
use crate::herm;
use crate::reduce;
use crate::smallmat::{self, C64};
use crate::spectral::Differentiator;

/// How the reference form enters pointwise computations.
#[derive(Debug, Clone)]
pub(crate) enum OmegaMode {
    /// ω is the identity at every point; no reduction needed.
    Identity,
    /// ω is constant; its Cholesky factor is precomputed.
    ConstantChol(Vec<C64>),
    /// ω varies across points (experimental; per-point factorization).
    Varying,
}

/// The fixed geometric data of a flow: Kähler form χ, big semipositive χ̃,
/// reference metric ω, the degree m, and the derived constant c.
#[derive(Clone)]
pub struct GeometrySetup {
    grid: PeriodicGrid,
    pub n: usize,
    pub m: usize,
    pub chi: FormField,
    pub chi_tilde: FormField,
    pub omega: FormField,
    /// c = n·∫(χ+χ̃)ᵐ∧ω^{n−m} / ∫(χ+χ̃)ⁿ.
    pub c: f64,
    /// Whether ∫χ̃ⁿ > 0 (the "big" hypothesis). Classic J-flow setups with
    /// χ̃ ≡ 0 are admitted but flagged.
    pub chi_tilde_big: bool,
    y: FormField,
    pub(crate) omega_mode: OmegaMode,
    diff: Arc<Differentiator>,
}

/// Semipositivity slack tolerated for χ̃.
pub const CHI_TILDE_FLOOR: f64 = -1e-12;

/// Ambient curvature of the flat-torus model. The curvature contractions
/// R_{iīll̄} and the derived G_{ll̄iī} terms that enter the second-order
/// evolution inequality vanish identically here; they are housed as an
/// explicit zero so the monitors' bound arithmetic states its assumption.
pub const AMBIENT_CURVATURE_BOUND: f64 = 0.0;

impl GeometrySetup {
    pub fn new(
        m: usize,
        chi: FormField,
        chi_tilde: FormField,
        omega: FormField,
        diff: Arc<Differentiator>,
    ) -> Result<Self> {
        let grid = chi.grid();
        let n = grid.dim();
        if !(1 <= m && m < n) {
            return Err(Error::argument(format!(
                "setup requires 1 <= m < n, got m = {m}, n = {n}"
            )));
        }
        if chi_tilde.grid() != grid || omega.grid() != grid || diff.grid() != grid {
            return Err(Error::argument("setup fields live on different grids"));
        }
        let omega_mode = classify_omega(&omega)?;

        // χ must be Kähler: positive definite relative to ω everywhere.
        let (chi_arg, chi_min) = global_min_eigenvalue(&chi, &omega)?;
        if chi_min <= 0.0 {
            return Err(Error::geometry_at(
                "chi is not positive definite",
                chi_min,
                Some(chi_arg),
            ));
        }
        // χ̃ must be semipositive within tolerance.
        let (tilde_arg, tilde_min) = global_min_eigenvalue(&chi_tilde, &omega)?;
        if tilde_min < CHI_TILDE_FLOOR {
            return Err(Error::geometry_at(
                "chi_tilde is not semipositive",
                tilde_min,
                Some(tilde_arg),
            ));
        }

        let y = chi.add(&chi_tilde)?;
        let c = compute_c(m, &y, &omega)?;
        let tilde_vol = wedge_integral(&[(&chi_tilde, n)], &omega)?;
        let chi_tilde_big = tilde_vol > 0.0;

        Ok(GeometrySetup {
            grid,
            n,
            m,
            chi,
            chi_tilde,
            omega,
            c,
            chi_tilde_big,
            y,
            omega_mode,
            diff,
        })
    }

    /// Same as [`GeometrySetup::new`] but with c pinned by the caller.
    /// Diagnostic constructor: lets tests exercise formulas at a chosen c.
    pub fn with_manual_c(
        m: usize,
        chi: FormField,
        chi_tilde: FormField,
        omega: FormField,
        diff: Arc<Differentiator>,
        c: f64,
    ) -> Result<Self> {
        let mut s = GeometrySetup::new(m, chi, chi_tilde, omega, diff)?;
        s.c = c;
        Ok(s)
    }

    pub fn grid(&self) -> PeriodicGrid {
        self.grid
    }

    /// χ + χ̃ (cached).
    pub fn y(&self) -> &FormField {
        &self.y
    }

    pub fn differentiator(&self) -> &Differentiator {
        &self.diff
    }

    pub fn diff_arc(&self) -> Arc<Differentiator> {
        Arc::clone(&self.diff)
    }

    /// X = χ + χ̃ + i∂∂̄φ.
    pub fn x_field(&self, phi: &ScalarField) -> Result<FormField> {
        let hess = self.diff.complex_hessian(phi);
        self.y.add(&hess)
    }

    /// Reduce the matrix at point `p` of `field` to the ω-orthonormal frame,
    /// writing into `out` (identity ω: plain copy).
    pub(crate) fn reduce_at(&self, field: &FormField, p: usize, out: &mut [C64]) -> Result<()> {
        reduce_point(field.at(p), &self.omega_mode, &self.omega, p, out)
    }
}

fn classify_omega(omega: &FormField) -> Result<OmegaMode> {
    if omega.is_identity() {
        return Ok(OmegaMode::Identity);
    }
    if omega.is_constant() {
        let n = omega.dim();
        match smallmat::cholesky(omega.at(0), n) {
            Ok(l) => Ok(OmegaMode::ConstantChol(l)),
            Err(piv) => Err(Error::geometry_at(
                "omega is not positive definite",
                piv,
                None,
            )),
        }
    } else {
        Ok(OmegaMode::Varying)
    }
}

fn reduce_point(
    mat: &[C64],
    mode: &OmegaMode,
    omega: &FormField,
    p: usize,
    out: &mut [C64],
) -> Result<()> {
    let n = omega.dim();
    match mode {
        OmegaMode::Identity => out.copy_from_slice(mat),
        OmegaMode::ConstantChol(l) => smallmat::reduce_by_cholesky(mat, l, n, out),
        OmegaMode::Varying => {
            let l = smallmat::cholesky(omega.at(p), n).map_err(|piv| {
                Error::geometry_at("omega is not positive definite", piv, Some(p))
            })?;
            smallmat::reduce_by_cholesky(mat, &l, n, out);
        }
    }
    Ok(())
}

/// Per-point minimum generalized eigenvalue of (field, ω).
pub fn min_eigenvalue_field(field: &FormField, omega: &FormField) -> Result<Vec<f64>> {
    let mode = classify_omega(omega)?;
    let n = field.dim();
    let total = field.grid().total_points();
    let mut out = vec![0.0f64; total];
    let mut red = [C64::new(0.0, 0.0); smallmat::MAX_DIM * smallmat::MAX_DIM];
    for p in 0..total {
        reduce_point(field.at(p), &mode, omega, p, &mut red[..n * n])?;
        out[p] = smallmat::hermitian_min_eigenvalue(&red[..n * n], n);
    }
    Ok(out)
}

/// Global minimum over the grid of the smallest (field, ω) eigenvalue.
pub fn global_min_eigenvalue(field: &FormField, omega: &FormField) -> Result<(usize, f64)> {
    let vals = min_eigenvalue_field(field, omega)?;
    let mut arg = 0usize;
    let mut best = f64::INFINITY;
    for (p, &v) in vals.iter().enumerate() {
        if v < best {
            best = v;
            arg = p;
        }
    }
    Ok((arg, best))
}

/// Admissibility of φ: whether X = χ + χ̃ + i∂∂̄φ is positive definite
/// relative to ω at every grid point, together with the global minimum
/// eigenvalue. Non-admissible is a valid return, not an error.
pub fn admissible(setup: &GeometrySetup, phi: &ScalarField) -> Result<(bool, f64)> {
    let x = setup.x_field(phi)?;
    let (_, min) = global_min_eigenvalue(&x, &setup.omega)?;
    Ok((min > 0.0, min))
}

/// Quadrature of a wedge product of form-field powers over the torus,
/// optionally weighted by a scalar field.
///
/// The exponents must sum to the complex dimension n. Normalization anchors
/// ∫ωⁿ = 1 for ω the constant identity field.
pub fn wedge_integral(factors: &[(&FormField, usize)], reference: &FormField) -> Result<f64> {
    wedge_integral_weighted(None, factors, reference)
}

pub fn wedge_integral_weighted(
    weight: Option<&ScalarField>,
    factors: &[(&FormField, usize)],
    reference: &FormField,
) -> Result<f64> {
    let grid = reference.grid();
    let n = grid.dim();
    let total_exp: usize = factors.iter().map(|&(_, k)| k).sum();
    if total_exp != n {
        return Err(Error::argument(format!(
            "wedge_integral: exponents sum to {total_exp}, expected n = {n}"
        )));
    }
    for &(f, _) in factors {
        if f.grid() != grid {
            return Err(Error::argument("wedge_integral: field grids differ"));
        }
    }
    if let Some(w) = weight {
        if w.grid() != grid {
            return Err(Error::argument("wedge_integral: weight grid differs"));
        }
    }
    let active: Vec<(&FormField, usize)> =
        factors.iter().copied().filter(|&(_, k)| k > 0).collect();
    let total = grid.total_points();
    let sum = reduce::grid_sum(total, |p| {
        let slices: Vec<(&[C64], usize)> = active.iter().map(|&(f, k)| (f.at(p), k)).collect();
        let w = herm::wedge_coeff(&slices, n).expect("validated exponents");
        match weight {
            Some(field) => field.data()[p] * w,
            None => w,
        }
    });
    Ok(sum / total as f64)
}

/// The flow constant c = n·∫Yᵐ∧ω^{n−m} / ∫Yⁿ with Y = χ + χ̃.
pub fn compute_c(m: usize, y: &FormField, omega: &FormField) -> Result<f64> {
    let n = y.dim();
    if !(1 <= m && m < n) {
        return Err(Error::argument(format!(
            "compute_c requires 1 <= m < n, got m = {m}, n = {n}"
        )));
    }
    let num = wedge_integral(&[(y, m), (omega, n - m)], omega)?;
    let den = wedge_integral(&[(y, n)], omega)?;
    if den <= 0.0 {
        return Err(Error::geometry(format!(
            "chi_tilde not big enough: total volume integral {den:.3e} is nonpositive"
        )));
    }
    Ok(n as f64 * num / den)
}

/// Numerical surrogate of the ample locus Amp(χ̃): points where the minimum
/// (χ̃, ω) eigenvalue is at least delta.
pub fn amp_locus(chi_tilde: &FormField, omega: &FormField, delta: f64) -> Result<AmpMask> {
    if delta <= 0.0 {
        return Err(Error::argument(format!(
            "amp_locus delta must be positive, got {delta}"
        )));
    }
    let vals = min_eigenvalue_field(chi_tilde, omega)?;
    let mask: Vec<bool> = vals.iter().map(|&v| v >= delta).collect();
    AmpMask::new(chi_tilde.grid(), mask, delta)
}
