//! Symplectic and Kähler potentials, Legendre duality between them, and the
//! L² (Mabuchi) distance.
//!
//! Both sides are stored as a periodic part plus a fixed quadratic:
//! `u(x) = f(x) + ½|x|²` on the symplectic side and `ψ(ξ) = φ(ξ) + ½|ξ|²`
//! on the Kähler side. Potentials are defined modulo additive constants;
//! every transform returns a mean-zero periodic part.

mod legendre;

use std::io::{Read, Write};

use thiserror::Error;

use crate::grid::snapshot::{read_snapshot, write_snapshot, SnapshotError, SnapshotHeader};
use crate::grid::{GridError, PeriodicGrid, ScalarField};
use crate::linalg::{self, Sym};

pub use legendre::{conjugate_line, inverse_legendre_transform, legendre_transform};

/// Smallest Hessian eigenvalue accepted as strictly convex.
pub const CONVEXITY_THRESHOLD: f64 = 1e-10;

#[derive(Debug, Error, PartialEq)]
pub enum PotentialError {
    #[error("potential is not strictly convex at grid resolution (margin {margin:e})")]
    NotConvex { margin: f64 },
    #[error("potentials live on different grids or carry different quadratic parts")]
    Mismatch,
    #[error("legendre transform is only defined for the standard quadratic ½|x|²")]
    NonStandardQuadratic,
    #[error(transparent)]
    Grid(#[from] GridError),
}

/// Symplectic potential `u(x) = f(x) + (q/2)|x - c|²`.
///
/// On the fundamental torus `q = 1`, `c = 0`. Blow-up rescalings produce
/// other values of `q` and `c` on enlarged grids.
#[derive(Debug, Clone, PartialEq)]
pub struct SymplecticPotential {
    f: ScalarField,
    quad: f64,
    center: [f64; 2],
}

impl SymplecticPotential {
    pub fn new(f: ScalarField) -> Self {
        Self { f, quad: 1.0, center: [0.0; 2] }
    }

    /// `u = ½|x|²`, the flat metric.
    pub fn flat(grid: PeriodicGrid) -> Self {
        Self::new(ScalarField::zeros(grid))
    }

    pub fn with_quadratic(f: ScalarField, quad: f64, center: [f64; 2]) -> Self {
        Self { f, quad, center }
    }

    pub fn grid(&self) -> &PeriodicGrid {
        self.f.grid()
    }

    pub fn periodic_part(&self) -> &ScalarField {
        &self.f
    }

    pub fn into_periodic_part(self) -> ScalarField {
        self.f
    }

    pub fn quad(&self) -> f64 {
        self.quad
    }

    pub fn center(&self) -> [f64; 2] {
        self.center
    }

    pub(crate) fn same_shape(&self, other: &Self) -> bool {
        self.grid() == other.grid() && self.quad == other.quad && self.center == other.center
    }

    /// Same quadratic part, new periodic part.
    pub fn with_periodic_part(&self, f: ScalarField) -> Self {
        Self { f, quad: self.quad, center: self.center }
    }

    /// Total value `u` at node `idx`.
    pub fn value_at(&self, idx: usize) -> f64 {
        let p = self.grid().point(idx);
        let r2: f64 = (0..self.grid().dim()).map(|a| (p[a] - self.center[a]).powi(2)).sum();
        self.f.values()[idx] + 0.5 * self.quad * r2
    }

    /// Total Hessian `D²f + qI` at every node.
    pub fn hessians(&self) -> Vec<Sym> {
        total_hessians(&self.f, self.quad)
    }

    /// Minimum over nodes of the smallest eigenvalue of `D²u`.
    pub fn convexity_margin(&self) -> f64 {
        margin_of(&self.hessians(), self.grid().dim())
    }

    pub fn is_strictly_convex(&self) -> bool {
        self.convexity_margin() > CONVEXITY_THRESHOLD
    }

    /// Shift the periodic part to mean zero.
    pub fn normalized(mut self) -> Self {
        self.f.remove_mean();
        self
    }

    pub fn snapshot_header(&self) -> SnapshotHeader {
        let mut header = SnapshotHeader::for_grid(self.grid()).with_kind("symplectic");
        if self.quad != 1.0 {
            header.quad = Some(self.quad);
        }
        if self.center != [0.0; 2] {
            header.center = Some(self.center[..self.grid().dim()].to_vec());
        }
        header
    }

    pub fn write_to<W: Write>(&self, out: W) -> Result<(), SnapshotError> {
        write_snapshot(out, &self.snapshot_header(), &self.f)
    }

    /// Read a snapshot as a symplectic potential; an absent `kind` is accepted.
    pub fn read_from<R: Read>(input: R) -> Result<(Self, Option<String>), SnapshotError> {
        let (header, f) = read_snapshot(input)?;
        let mut center = [0.0; 2];
        if let Some(c) = &header.center {
            for (dst, src) in center.iter_mut().zip(c) {
                *dst = *src;
            }
        }
        let pot = Self::with_quadratic(f, header.quad.unwrap_or(1.0), center);
        Ok((pot, header.kind))
    }
}

/// Kähler potential `ψ(ξ) = φ(ξ) + ½|ξ|²` in the real coordinates `ξ`.
#[derive(Debug, Clone, PartialEq)]
pub struct KahlerPotential {
    phi: ScalarField,
}

impl KahlerPotential {
    pub fn new(phi: ScalarField) -> Self {
        Self { phi }
    }

    pub fn grid(&self) -> &PeriodicGrid {
        self.phi.grid()
    }

    pub fn periodic_part(&self) -> &ScalarField {
        &self.phi
    }

    pub fn convexity_margin(&self) -> f64 {
        margin_of(&total_hessians(&self.phi, 1.0), self.grid().dim())
    }

    pub fn write_to<W: Write>(&self, out: W) -> Result<(), SnapshotError> {
        let header = SnapshotHeader::for_grid(self.grid()).with_kind("kahler");
        write_snapshot(out, &header, &self.phi)
    }
}

pub(crate) fn total_hessians(f: &ScalarField, quad: f64) -> Vec<Sym> {
    let grid = f.grid();
    let dim = grid.dim();
    let spec = f.spectrum();
    let comps: Vec<Vec<f64>> =
        linalg::pairs(dim).iter().map(|&(i, j)| spec.derivative(&[i, j]).expect("valid axes").into_values()).collect();
    (0..grid.len())
        .map(|idx| {
            let mut m = [0.0; 3];
            for (c, &(i, j)) in linalg::pairs(dim).iter().enumerate() {
                m[linalg::slot(i, j)] = comps[c][idx] + if i == j { quad } else { 0.0 };
            }
            m
        })
        .collect()
}

pub(crate) fn margin_of(hessians: &[Sym], dim: usize) -> f64 {
    hessians.iter().map(|m| linalg::min_eigenvalue(m, dim)).fold(f64::INFINITY, f64::min)
}

/// `‖u_a - u_b‖_{L²(P)}`; both potentials must share grid and quadratic part.
pub fn mabuchi_distance(a: &SymplecticPotential, b: &SymplecticPotential) -> Result<f64, PotentialError> {
    if !a.same_shape(b) {
        return Err(PotentialError::Mismatch);
    }
    Ok(a.f.zip_map(&b.f, |x, y| x - y)?.l2_norm())
}
