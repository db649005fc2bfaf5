//! Numerical laboratory for the Calabi flow on the flat complex torus
//! `ℂⁿ/(ℤⁿ + iℤⁿ)` restricted to torus-invariant metrics.
//!
//! A torus-invariant metric is encoded by a symplectic potential
//! `u(x) = f(x) + ½|x|²` with `f` periodic on `[-1, 1)ⁿ`. The flow is
//! Abreu's fourth-order equation `∂u/∂t = -S(u)`,
//! `S = -Σ ∂ᵢ∂ⱼ u^{ij}`, which is the L² gradient flow of the Mabuchi
//! energy `-∫ log det D²u`.
//!
//! Modules:
//! - [`grid`]: periodic grids, spectral derivatives, quadrature, snapshots.
//! - [`potential`]: symplectic/Kähler potentials, Legendre duality, L² distance.
//! - [`geometry`]: Hessians, scalar curvature, curvature norm, energies.
//! - [`flow`]: time stepping, monitoring, blow-up rescaling.
//! - [`weak`]: mollification and smooth approximation of weak potentials.
//! - [`bounds`]: the explicit constants of the maximal-domain argument.

// `!(x > 0.0)` is used on purpose so that NaN fails the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bounds;
pub mod flow;
pub mod geometry;
pub mod grid;
pub(crate) mod linalg;
pub mod potential;
pub mod weak;

pub use flow::{FlowConfig, FlowState, FlowStatus, MonitorLog, Scheme};
pub use geometry::{CurvatureReport, HessianField};
pub use grid::{PeriodicGrid, ScalarField, Spectrum};
pub use potential::{KahlerPotential, SymplecticPotential, CONVEXITY_THRESHOLD};

/// Lossless CSV text for a real: 17 significant digits in scientific form.
pub fn csv_real(v: f64) -> String {
    format!("{v:.16e}")
}
