//! Numerical laboratory for generalized J-flows on flat periodic model
//! geometries.
//!
//! The library discretizes torus-invariant potentials on the unit torus
//! T^n, evolves the gradient flow
//!
//! ```text
//!   dφ/dt = c − n (χ + χ̃ + i∂∂̄φ)^m ∧ ω^{n−m} / (χ + χ̃ + i∂∂̄φ)^n
//! ```
//!
//! with admissibility-guarded explicit stepping, checks every structural
//! identity of the flow at runtime (conservation, monotone dissipation,
//! maximum principles, C⁰ envelopes, second-order exponential bounds), and
//! cross-validates flow limits against a damped-Newton solver for the
//! stationary Monge–Ampère-type equation — including calibrated boundary
//! cases of the cone condition and degenerate semipositive classes.
//!
//! Module map:
//! - [`herm`]: pointwise Hermitian-form algebra (generalized eigenvalues,
//!   elementary symmetric polynomials, mixed discriminants, wedge
//!   coefficients, cone-form coefficients)
//! - [`grid`], [`spectral`]: periodic grids, fields, spectral/FD4 Hessians
//! - [`geometry`]: setups, admissibility, wedge quadrature, ample-locus masks
//! - [`functionals`]: the J-functional hierarchy and its identities
//! - [`cone`]: cone-condition classification and the scenario library
//! - [`flow`]: explicit time integration (Euler, RK4, RKC) with guards
//! - [`monitors`]: maximum-principle, C⁰ and second-order bound monitors
//! - [`stationary`]: damped Newton for the stationary equation
//! - [`snapshot`], [`ledger`], [`config`], [`cli`], [`verify`]: persistence,
//!   JSON-lines ledgers, flat config files and the batch interface

pub mod cli;
pub mod cone;
pub mod config;
pub mod error;
pub mod flow;
pub mod functionals;
pub mod geometry;
pub mod grid;
pub mod herm;
pub mod ledger;
pub mod monitors;
pub mod reduce;
pub mod smallmat;
pub mod snapshot;
pub mod spectral;
pub mod stationary;
pub mod verify;

pub use error::{Error, Result};
