//! Differentiation of periodic potentials.
//!
//! The default differentiator is spectral (trigonometric interpolation):
//! derivatives are exact for trigonometric polynomials below the Nyquist
//! frequency, and the discrete Stokes identities behind the functional
//! conservation checks then hold to machine precision. A 4th-order centered
//! finite-difference fallback is available for robustness experiments.
//!
//! Under the torus-invariant reduction, i∂∂̄φ is one quarter of the real
//! Hessian of φ, so [`Differentiator::complex_hessian`] returns the field of
//! real symmetric matrices (1/4)·Hess(φ).
//!
//! Nyquist convention: the N/2 wavenumber is treated as zero in every
//! derivative multiplier, keeping the multiplier algebra (and with it the
//! discrete integration-by-parts identities) consistent across mixed and
//! pure second derivatives.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::grid::{FormField, PeriodicGrid, ScalarField};
use crate::smallmat::C64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DiffMethod {
    Spectral,
    Fd4,
}

pub struct Differentiator {
    grid: PeriodicGrid,
    method: DiffMethod,
    fft_fwd: Arc<dyn Fft<f64>>,
    fft_inv: Arc<dyn Fft<f64>>,
    /// 2π·k per spectral index along one axis, Nyquist zeroed.
    wavenumbers: Vec<f64>,
}

impl Differentiator {
    pub fn new(grid: PeriodicGrid, method: DiffMethod) -> Self {
        let nn = grid.points_per_axis();
        let mut planner = FftPlanner::new();
        let fft_fwd = planner.plan_fft_forward(nn);
        let fft_inv = planner.plan_fft_inverse(nn);
        let mut wavenumbers = vec![0.0f64; nn];
        for (i, w) in wavenumbers.iter_mut().enumerate() {
            let k = if i <= nn / 2 {
                i as isize
            } else {
                i as isize - nn as isize
            };
            *w = if i == nn / 2 {
                0.0
            } else {
                2.0 * std::f64::consts::PI * k as f64
            };
        }
        Differentiator {
            grid,
            method,
            fft_fwd,
            fft_inv,
            wavenumbers,
        }
    }

    pub fn grid(&self) -> PeriodicGrid {
        self.grid
    }

    pub fn method(&self) -> DiffMethod {
        self.method
    }

    /// Forward n-dimensional FFT of real data (unnormalized).
    pub fn forward(&self, data: &[f64]) -> Vec<Complex64> {
        let mut buf: Vec<Complex64> = data.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        for axis in 0..self.grid.dim() {
            self.fft_axis(&mut buf, axis, true);
        }
        buf
    }

    /// Inverse n-dimensional FFT, normalized by 1/N^n; returns real parts.
    pub fn inverse_real(&self, hat: &[Complex64]) -> Vec<f64> {
        let mut buf = hat.to_vec();
        for axis in 0..self.grid.dim() {
            self.fft_axis(&mut buf, axis, false);
        }
        let scale = 1.0 / self.grid.total_points() as f64;
        buf.iter().map(|z| z.re * scale).collect()
    }

    fn fft_axis(&self, buf: &mut [Complex64], axis: usize, forward: bool) {
        let n = self.grid.dim();
        let nn = self.grid.points_per_axis();
        let total = self.grid.total_points();
        let stride = nn.pow((n - 1 - axis) as u32);
        if stride == 1 {
            // lanes already contiguous
            if forward {
                self.fft_fwd.process(buf);
            } else {
                self.fft_inv.process(buf);
            }
            return;
        }
        let block = stride * nn;
        let mut scratch = vec![Complex64::new(0.0, 0.0); total];
        let mut lane = 0usize;
        for base in (0..total).step_by(block) {
            for off in 0..stride {
                let start = base + off;
                for t in 0..nn {
                    scratch[lane * nn + t] = buf[start + t * stride];
                }
                lane += 1;
            }
        }
        if forward {
            self.fft_fwd.process(&mut scratch);
        } else {
            self.fft_inv.process(&mut scratch);
        }
        let mut lane = 0usize;
        for base in (0..total).step_by(block) {
            for off in 0..stride {
                let start = base + off;
                for t in 0..nn {
                    buf[start + t * stride] = scratch[lane * nn + t];
                }
                lane += 1;
            }
        }
    }

    /// Apply the (−w_j·w_k) second-derivative multiplier to a spectrum,
    /// writing into `out`, and inverse-transform to real space.
    fn second_derivative_from_hat(&self, hat: &[Complex64], j: usize, k: usize) -> Vec<f64> {
        let n = self.grid.dim();
        let nn = self.grid.points_per_axis();
        let total = self.grid.total_points();
        let mut tmp = vec![Complex64::new(0.0, 0.0); total];
        // odometer over mode indices, axis 0 slowest
        let mut ix = [0usize; crate::grid::MAX_DIM];
        for p in 0..total {
            let wj = self.wavenumbers[ix[j]];
            let wk = self.wavenumbers[ix[k]];
            tmp[p] = hat[p] * (-wj * wk);
            // increment odometer
            for a in (0..n).rev() {
                ix[a] += 1;
                if ix[a] < nn {
                    break;
                }
                ix[a] = 0;
            }
        }
        self.inverse_real(&tmp)
    }

    /// All second derivatives ∂²φ/∂x_j∂x_k for j ≤ k, in triangular order
    /// (0,0), (0,1), …, (0,n−1), (1,1), …
    pub fn second_derivatives(&self, phi: &ScalarField) -> Vec<Vec<f64>> {
        let n = self.grid.dim();
        match self.method {
            DiffMethod::Spectral => {
                let hat = self.forward(phi.data());
                let mut out = Vec::with_capacity(n * (n + 1) / 2);
                for j in 0..n {
                    for k in j..n {
                        out.push(self.second_derivative_from_hat(&hat, j, k));
                    }
                }
                out
            }
            DiffMethod::Fd4 => {
                let mut out = Vec::with_capacity(n * (n + 1) / 2);
                for j in 0..n {
                    for k in j..n {
                        if j == k {
                            out.push(self.fd4_axis(phi.data(), j, FdKind::Second));
                        } else {
                            let dj = self.fd4_axis(phi.data(), j, FdKind::First);
                            out.push(self.fd4_axis(&dj, k, FdKind::First));
                        }
                    }
                }
                out
            }
        }
    }

    fn fd4_axis(&self, data: &[f64], axis: usize, kind: FdKind) -> Vec<f64> {
        let n = self.grid.dim();
        let nn = self.grid.points_per_axis();
        let total = self.grid.total_points();
        let stride = nn.pow((n - 1 - axis) as u32);
        let h = self.grid.spacing();
        let (coeff, scale): ([f64; 5], f64) = match kind {
            FdKind::First => ([1.0 / 12.0, -2.0 / 3.0, 0.0, 2.0 / 3.0, -1.0 / 12.0], 1.0 / h),
            FdKind::Second => (
                [-1.0 / 12.0, 4.0 / 3.0, -5.0 / 2.0, 4.0 / 3.0, -1.0 / 12.0],
                1.0 / (h * h),
            ),
        };
        let block = stride * nn;
        let mut out = vec![0.0f64; total];
        for base in (0..total).step_by(block) {
            for off in 0..stride {
                let start = base + off;
                for t in 0..nn {
                    let mut acc = 0.0;
                    for (s, &cf) in coeff.iter().enumerate() {
                        let shift = (t + nn + s) - 2; // t + (s - 2) mod nn
                        let ts = shift % nn;
                        acc += cf * data[start + ts * stride];
                    }
                    out[start + t * stride] = acc * scale;
                }
            }
        }
        out
    }

    /// The field (1/4)·Hess(φ): the complex Hessian i∂∂̄φ under the
    /// torus-invariant reduction. Tagged as potential-derived (closed).
    pub fn complex_hessian(&self, phi: &ScalarField) -> FormField {
        let n = self.grid.dim();
        let derivs = self.second_derivatives(phi);
        let total = self.grid.total_points();
        let nn = n * n;
        let mut data = vec![C64::new(0.0, 0.0); total * nn];
        let mut tri = 0usize;
        for j in 0..n {
            for k in j..n {
                let d = &derivs[tri];
                tri += 1;
                for p in 0..total {
                    let v = C64::new(0.25 * d[p], 0.0);
                    data[p * nn + j * n + k] = v;
                    if j != k {
                        data[p * nn + k * n + j] = v;
                    }
                }
            }
        }
        let base = vec![C64::new(0.0, 0.0); nn];
        FormField::from_potential_parts(self.grid, data, base, phi.clone())
    }
}

#[derive(Clone, Copy)]
enum FdKind {
    First,
    Second,
}

/// base + (1/4)·Hess(potential): the standard way scenarios realize closed,
/// position-dependent form fields.
pub fn kahler_from_potential(
    diff: &Differentiator,
    base: &crate::herm::HermForm,
    potential: &ScalarField,
) -> crate::error::Result<FormField> {
    let constant = FormField::constant(diff.grid(), base)?;
    let hess = diff.complex_hessian(potential);
    constant.add(&hess)
}
