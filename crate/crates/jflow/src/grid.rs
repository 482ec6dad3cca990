//! Periodic grids and the fields living on them.
//!
//! The discretization is the torus-invariant reduction: potentials depend
//! only on the n real coordinates of the unit torus, sampled on a uniform
//! N^n grid with spacing 1/N. Indexing is row-major with axis 0 slowest.

use crate::error::{Error, Result};
use crate::herm::HermForm;
use crate::reduce;
use crate::smallmat::{idx, C64};

/// Complex dimensions supported by the grid machinery.
pub const MAX_DIM: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PeriodicGrid {
    n: usize,
    points_per_axis: usize,
}

impl PeriodicGrid {
    pub fn new(n: usize, points_per_axis: usize) -> Result<Self> {
        if n < 1 || n > MAX_DIM {
            return Err(Error::argument(format!(
                "grid dimension must be in 1..={MAX_DIM}, got {n}"
            )));
        }
        if points_per_axis < 4 || points_per_axis % 2 != 0 {
            return Err(Error::argument(format!(
                "points_per_axis must be even and >= 4, got {points_per_axis}"
            )));
        }
        // keep N^n inside addressable range (also guards hostile headers)
        let total = (points_per_axis as u128).checked_pow(n as u32);
        match total {
            Some(t) if t <= (1u128 << 31) => {}
            _ => {
                return Err(Error::argument(format!(
                    "grid {points_per_axis}^{n} exceeds the supported size"
                )))
            }
        }
        Ok(PeriodicGrid {
            n,
            points_per_axis,
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn points_per_axis(&self) -> usize {
        self.points_per_axis
    }

    pub fn total_points(&self) -> usize {
        self.points_per_axis.pow(self.n as u32)
    }

    /// Torus side is normalized to 1, so spacing is exactly 1/N.
    pub fn spacing(&self) -> f64 {
        1.0 / self.points_per_axis as f64
    }

    pub fn cell_volume(&self) -> f64 {
        1.0 / self.total_points() as f64
    }

    /// Coordinates of the grid point with flat index `p` (axis 0 slowest).
    pub fn coords(&self, p: usize, out: &mut [f64]) {
        let mut rem = p;
        let nn = self.points_per_axis;
        for a in (0..self.n).rev() {
            out[a] = (rem % nn) as f64 * self.spacing();
            rem /= nn;
        }
    }

    /// Flat index from per-axis integer indices.
    pub fn flat_index(&self, ix: &[usize]) -> usize {
        let mut p = 0usize;
        for a in 0..self.n {
            p = p * self.points_per_axis + (ix[a] % self.points_per_axis);
        }
        p
    }
}

/// A real scalar field on a periodic grid (potential values).
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    grid: PeriodicGrid,
    data: Vec<f64>,
}

impl ScalarField {
    pub fn new(grid: PeriodicGrid, data: Vec<f64>) -> Result<Self> {
        if data.len() != grid.total_points() {
            return Err(Error::argument(format!(
                "scalar field length {} does not match grid with {} points",
                data.len(),
                grid.total_points()
            )));
        }
        if !data.iter().all(|v| v.is_finite()) {
            return Err(Error::argument("scalar field contains non-finite entries"));
        }
        Ok(ScalarField { grid, data })
    }

    pub fn zeros(grid: PeriodicGrid) -> Self {
        ScalarField {
            grid,
            data: vec![0.0; grid.total_points()],
        }
    }

    pub fn constant(grid: PeriodicGrid, v: f64) -> Self {
        ScalarField {
            grid,
            data: vec![v; grid.total_points()],
        }
    }

    pub fn from_fn(grid: PeriodicGrid, f: impl Fn(&[f64]) -> f64) -> Result<Self> {
        let mut data = vec![0.0; grid.total_points()];
        let mut x = [0.0f64; MAX_DIM];
        for (p, slot) in data.iter_mut().enumerate() {
            grid.coords(p, &mut x[..grid.dim()]);
            *slot = f(&x[..grid.dim()]);
        }
        ScalarField::new(grid, data)
    }

    pub fn grid(&self) -> PeriodicGrid {
        self.grid
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub(crate) fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn min(&self) -> f64 {
        reduce::min(&self.data)
    }

    pub fn max(&self) -> f64 {
        reduce::max(&self.data)
    }

    pub fn max_abs(&self) -> f64 {
        reduce::max_abs(&self.data)
    }

    pub fn mean(&self) -> f64 {
        reduce::mean(&self.data)
    }

    /// self + s·other
    pub fn add_scaled(&self, other: &ScalarField, s: f64) -> ScalarField {
        debug_assert_eq!(self.grid, other.grid);
        ScalarField {
            grid: self.grid,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| a + s * b)
                .collect(),
        }
    }

    pub fn shift(&self, k: f64) -> ScalarField {
        ScalarField {
            grid: self.grid,
            data: self.data.iter().map(|&v| v + k).collect(),
        }
    }
}

/// Provenance of a form field; decides which closedness-dependent
/// identities may be asserted against it.
#[derive(Debug, Clone, PartialEq)]
pub enum FormKind {
    /// The same Hermitian matrix at every point. Closed.
    Constant,
    /// base + (1/4)·Hess(potential): closed by construction.
    FromPotential,
    /// Arbitrary pointwise data; closedness as tagged.
    Surrogate { closed: bool },
}

/// A field of Hermitian forms: one n×n complex matrix per grid point,
/// stored row-major per point.
#[derive(Debug, Clone, PartialEq)]
pub struct FormField {
    grid: PeriodicGrid,
    data: Vec<C64>,
    kind: FormKind,
    /// Constant part when kind == FromPotential.
    base: Option<Vec<C64>>,
    /// Potential when kind == FromPotential.
    potential: Option<ScalarField>,
}

impl FormField {
    /// A constant form field from a single Hermitian matrix.
    pub fn constant(grid: PeriodicGrid, form: &HermForm) -> Result<Self> {
        if form.dim() != grid.dim() {
            return Err(Error::argument(format!(
                "form dim {} does not match grid dim {}",
                form.dim(),
                grid.dim()
            )));
        }
        let nn = grid.dim() * grid.dim();
        let mut data = Vec::with_capacity(grid.total_points() * nn);
        for _ in 0..grid.total_points() {
            data.extend_from_slice(form.entries());
        }
        Ok(FormField {
            grid,
            data,
            kind: FormKind::Constant,
            base: None,
            potential: None,
        })
    }

    /// Raw pointwise data with explicit closedness tag.
    pub fn surrogate(grid: PeriodicGrid, data: Vec<C64>, closed: bool) -> Result<Self> {
        let nn = grid.dim() * grid.dim();
        if data.len() != grid.total_points() * nn {
            return Err(Error::argument(format!(
                "form field length {} does not match {} points x {nn} entries",
                data.len(),
                grid.total_points()
            )));
        }
        Ok(FormField {
            grid,
            data,
            kind: FormKind::Surrogate { closed },
            base: None,
            potential: None,
        })
    }

    pub(crate) fn from_potential_parts(
        grid: PeriodicGrid,
        data: Vec<C64>,
        base: Vec<C64>,
        potential: ScalarField,
    ) -> Self {
        FormField {
            grid,
            data,
            kind: FormKind::FromPotential,
            base: Some(base),
            potential: Some(potential),
        }
    }

    pub fn grid(&self) -> PeriodicGrid {
        self.grid
    }

    pub fn dim(&self) -> usize {
        self.grid.dim()
    }

    pub fn kind(&self) -> &FormKind {
        &self.kind
    }

    /// Whether the field represents a closed form.
    pub fn closed(&self) -> bool {
        match self.kind {
            FormKind::Constant | FormKind::FromPotential => true,
            FormKind::Surrogate { closed } => closed,
        }
    }

    pub fn base(&self) -> Option<&[C64]> {
        self.base.as_deref()
    }

    pub fn potential(&self) -> Option<&ScalarField> {
        self.potential.as_ref()
    }

    pub fn data(&self) -> &[C64] {
        &self.data
    }

    /// The matrix at grid point `p` as a row-major slice of length dim².
    #[inline]
    pub fn at(&self, p: usize) -> &[C64] {
        let nn = self.grid.dim() * self.grid.dim();
        &self.data[p * nn..(p + 1) * nn]
    }

    /// Pointwise sum. Closedness composes; the from-potential structure is
    /// preserved when both sides carry one (base and potential add).
    pub fn add(&self, other: &FormField) -> Result<FormField> {
        if self.grid != other.grid {
            return Err(Error::argument("form field grids differ in add"));
        }
        let data: Vec<C64> = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| a + b)
            .collect();
        let closed = self.closed() && other.closed();
        // keep potential structure if both sides have it in compatible form
        let combined = match (&self.kind, &other.kind) {
            (FormKind::Constant, FormKind::Constant) => FormKind::Constant,
            (FormKind::FromPotential, FormKind::FromPotential) => FormKind::FromPotential,
            (FormKind::Constant, FormKind::FromPotential)
            | (FormKind::FromPotential, FormKind::Constant) => FormKind::FromPotential,
            _ => FormKind::Surrogate { closed },
        };
        if combined == FormKind::FromPotential {
            let nn = self.grid.dim() * self.grid.dim();
            let base_of = |f: &FormField| -> Vec<C64> {
                match f.kind {
                    FormKind::Constant => f.data[..nn].to_vec(),
                    FormKind::FromPotential => f.base.clone().unwrap(),
                    _ => unreachable!(),
                }
            };
            let pot_of = |f: &FormField| -> ScalarField {
                match f.kind {
                    FormKind::FromPotential => f.potential.clone().unwrap(),
                    _ => ScalarField::zeros(f.grid),
                }
            };
            let base: Vec<C64> = base_of(self)
                .iter()
                .zip(base_of(other))
                .map(|(&a, b)| a + b)
                .collect();
            let pot = pot_of(self).add_scaled(&pot_of(other), 1.0);
            Ok(FormField::from_potential_parts(self.grid, data, base, pot))
        } else {
            FormField::surrogate(self.grid, data, closed)
        }
    }

    pub fn scale(&self, s: f64) -> FormField {
        let data: Vec<C64> = self.data.iter().map(|&z| z * s).collect();
        match &self.kind {
            FormKind::FromPotential => FormField::from_potential_parts(
                self.grid,
                data,
                self.base.as_ref().unwrap().iter().map(|&z| z * s).collect(),
                ScalarField {
                    grid: self.grid,
                    data: self
                        .potential
                        .as_ref()
                        .unwrap()
                        .data()
                        .iter()
                        .map(|&v| v * s)
                        .collect(),
                },
            ),
            k => FormField {
                grid: self.grid,
                data,
                kind: k.clone(),
                base: None,
                potential: None,
            },
        }
    }

    /// True when every point carries exactly the identity matrix.
    pub fn is_identity(&self) -> bool {
        let n = self.grid.dim();
        let nn = n * n;
        self.data.chunks_exact(nn).all(|m| {
            (0..n).all(|i| {
                (0..n).all(|j| {
                    let want = if i == j { 1.0 } else { 0.0 };
                    m[idx(n, i, j)] == C64::new(want, 0.0)
                })
            })
        })
    }

    /// True when the field does not vary across points.
    pub fn is_constant(&self) -> bool {
        if matches!(self.kind, FormKind::Constant) {
            return true;
        }
        let nn = self.grid.dim() * self.grid.dim();
        let first = &self.data[..nn];
        self.data.chunks_exact(nn).all(|m| m == first)
    }
}

/// Numerical surrogate of the ample locus: grid points where the smallest
/// (χ̃, ω) generalized eigenvalue is at least `delta`.
#[derive(Debug, Clone)]
pub struct AmpMask {
    grid: PeriodicGrid,
    pub mask: Vec<bool>,
    pub delta: f64,
}

impl AmpMask {
    pub fn new(grid: PeriodicGrid, mask: Vec<bool>, delta: f64) -> Result<Self> {
        if mask.len() != grid.total_points() {
            return Err(Error::argument("mask length does not match grid"));
        }
        if delta <= 0.0 {
            return Err(Error::argument(format!(
                "mask delta must be positive, got {delta}"
            )));
        }
        Ok(AmpMask { grid, mask, delta })
    }

    pub fn all(grid: PeriodicGrid, delta: f64) -> Self {
        AmpMask {
            grid,
            mask: vec![true; grid.total_points()],
            delta,
        }
    }

    pub fn grid(&self) -> PeriodicGrid {
        self.grid
    }

    pub fn count_true(&self) -> usize {
        self.mask.iter().filter(|&&b| b).count()
    }

    /// Max of |f| over masked points; falls back to the global sup when the
    /// mask is empty (the χ̃ ≡ 0 classic-flow case, where convergence is
    /// global).
    pub fn masked_max_abs(&self, f: &ScalarField) -> f64 {
        if self.count_true() == 0 {
            return f.max_abs();
        }
        f.data()
            .iter()
            .zip(&self.mask)
            .filter(|&(_, &m)| m)
            .fold(0.0f64, |a, (&v, _)| a.max(v.abs()))
    }
}
