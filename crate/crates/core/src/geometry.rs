//! Curvature of a toric metric from its symplectic potential.
//!
//! With `G = D²u` and `G⁻¹ = (u^{ij})`, the scalar curvature is Abreu's
//! `S = -Σ ∂ᵢ∂ⱼ u^{ij}`. The curvature tensor is taken as
//! `R^{ij}_{kl} = -½ ∂_k∂_l u^{ij}` with the metric norm
//!
//! ```text
//! |Rm|² = ¼ u_{ia} u_{jb} u^{kc} u^{ld} (∂_k∂_l u^{ij}) (∂_c∂_d u^{ab}).
//! ```
//!
//! In one dimension this reduces to `|Rm| = ½|S|`.

use thiserror::Error;

use crate::grid::{ScalarField, Spectrum};
use crate::linalg::{self, Sym};
use crate::potential::{SymplecticPotential, CONVEXITY_THRESHOLD};
use crate::{csv_real, PeriodicGrid};

#[derive(Debug, Error, PartialEq)]
pub enum GeometryError {
    /// The potential is weak (or has blown up) at grid resolution.
    #[error("Hessian is not positive definite at node {node:?} (min eigenvalue {min_eigenvalue:e})")]
    NotConvex { node: Vec<usize>, min_eigenvalue: f64 },
}

/// `D²u` and its inverse at every node.
#[derive(Debug, Clone)]
pub struct HessianField {
    grid: PeriodicGrid,
    hessian: Vec<Sym>,
    inverse: Vec<Sym>,
}

impl HessianField {
    pub fn grid(&self) -> &PeriodicGrid {
        &self.grid
    }

    /// Entry `(i, j)` of `D²u` at node `idx`.
    pub fn at(&self, idx: usize, i: usize, j: usize) -> f64 {
        linalg::entry(&self.hessian[idx], i, j)
    }

    /// Entry `(i, j)` of `(D²u)⁻¹` at node `idx`.
    pub fn inverse_at(&self, idx: usize, i: usize, j: usize) -> f64 {
        linalg::entry(&self.inverse[idx], i, j)
    }

    pub fn component(&self, i: usize, j: usize) -> ScalarField {
        let s = linalg::slot(i, j);
        ScalarField::from_raw(self.grid, self.hessian.iter().map(|m| m[s]).collect())
    }

    pub fn inverse_component(&self, i: usize, j: usize) -> ScalarField {
        let s = linalg::slot(i, j);
        ScalarField::from_raw(self.grid, self.inverse.iter().map(|m| m[s]).collect())
    }

    pub fn log_det(&self) -> ScalarField {
        let dim = self.grid.dim();
        ScalarField::from_raw(self.grid, self.hessian.iter().map(|m| linalg::det(m, dim).ln()).collect())
    }

    pub fn min_eigenvalue(&self) -> f64 {
        let dim = self.grid.dim();
        self.hessian.iter().map(|m| linalg::min_eigenvalue(m, dim)).fold(f64::INFINITY, f64::min)
    }

    /// Largest `λ_max(G⁻¹)²` over nodes: the stiffness of the linearized flow.
    pub fn max_inverse_eigenvalue_sq(&self) -> f64 {
        let dim = self.grid.dim();
        self.inverse.iter().map(|m| linalg::max_eigenvalue(m, dim).powi(2)).fold(0.0, f64::max)
    }

    pub(crate) fn inverse_matrices(&self) -> &[Sym] {
        &self.inverse
    }
}

pub(crate) fn hessian_from_matrices(grid: PeriodicGrid, hessian: Vec<Sym>) -> Result<HessianField, GeometryError> {
    let dim = grid.dim();
    let mut inverse = Vec::with_capacity(hessian.len());
    for (idx, m) in hessian.iter().enumerate() {
        let lo = linalg::min_eigenvalue(m, dim);
        if !(lo > CONVEXITY_THRESHOLD) {
            return Err(GeometryError::NotConvex { node: grid.multi_index(idx)[..dim].to_vec(), min_eigenvalue: lo });
        }
        inverse.push(linalg::inverse(m, dim));
    }
    Ok(HessianField { grid, hessian, inverse })
}

pub fn hessian(pot: &SymplecticPotential) -> Result<HessianField, GeometryError> {
    hessian_from_matrices(*pot.grid(), pot.hessians())
}

fn inverse_spectra(hess: &HessianField) -> Vec<((usize, usize), Spectrum)> {
    linalg::pairs(hess.grid.dim()).iter().map(|&(i, j)| ((i, j), hess.inverse_component(i, j).spectrum())).collect()
}

/// `Σᵢⱼ ∂ᵢ∂ⱼ Wᵢⱼ` for a symmetric field given by its upper-triangle slots.
pub(crate) fn double_divergence(grid: PeriodicGrid, comps: &[Sym]) -> ScalarField {
    let mut total: Option<Spectrum> = None;
    for &(i, j) in linalg::pairs(grid.dim()) {
        let s = linalg::slot(i, j);
        let spec = ScalarField::from_raw(grid, comps.iter().map(|m| m[s]).collect()).spectrum();
        // off-diagonal entries appear twice in the sum
        let weight = if i == j { 1.0 } else { 2.0 };
        let mut orders = [0u32; 2];
        orders[i] += 1;
        orders[j] += 1;
        let mult = spec.derivative_multiplier(orders);
        let term = spec.map_modes(|m| mult(m) * weight);
        total = Some(match total {
            None => term,
            Some(acc) => acc.add(&term),
        });
    }
    total.expect("at least one component").to_field()
}

/// `S = -Σᵢⱼ ∂ᵢ∂ⱼ u^{ij}` from a Hessian field.
pub fn scalar_curvature_of(hess: &HessianField) -> ScalarField {
    double_divergence(hess.grid, &hess.inverse).scaled(-1.0)
}

pub fn abreu_scalar_curvature(pot: &SymplecticPotential) -> Result<ScalarField, GeometryError> {
    Ok(scalar_curvature_of(&hessian(pot)?))
}

/// Pointwise `|Rm|` from a Hessian field.
pub fn riemann_norm_of(hess: &HessianField) -> ScalarField {
    let grid = hess.grid;
    let dim = grid.dim();
    // second derivatives ∂_k∂_l u^{ij}, indexed [pair(ij)][pair(kl)]
    let spectra = inverse_spectra(hess);
    let second: Vec<Vec<Vec<f64>>> = spectra
        .iter()
        .map(|(_, spec)| linalg::pairs(dim).iter().map(|&(k, l)| spec.derivative(&[k, l]).expect("valid axes").into_values()).collect())
        .collect();
    let pair_index = |i: usize, j: usize| -> usize {
        let (a, b) = if i <= j { (i, j) } else { (j, i) };
        linalg::pairs(dim).iter().position(|&p| p == (a, b)).expect("pair")
    };
    let values = (0..grid.len())
        .map(|idx| {
            let g = &hess.hessian[idx];
            let ginv = &hess.inverse[idx];
            let t = |i: usize, j: usize, k: usize, l: usize| second[pair_index(i, j)][pair_index(k, l)][idx];
            let mut sum = 0.0;
            for i in 0..dim {
                for j in 0..dim {
                    for a in 0..dim {
                        for b in 0..dim {
                            let lower = linalg::entry(g, i, a) * linalg::entry(g, j, b);
                            if lower == 0.0 {
                                continue;
                            }
                            for k in 0..dim {
                                for l in 0..dim {
                                    let tijkl = t(i, j, k, l);
                                    for c in 0..dim {
                                        for d in 0..dim {
                                            sum += lower * linalg::entry(ginv, k, c) * linalg::entry(ginv, l, d) * tijkl * t(a, b, c, d);
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
            }
            0.5 * sum.max(0.0).sqrt()
        })
        .collect();
    ScalarField::from_raw(grid, values)
}

pub fn riemann_norm(pot: &SymplecticPotential) -> Result<ScalarField, GeometryError> {
    Ok(riemann_norm_of(&hessian(pot)?))
}

/// Euclidean gradient `Du = Df + q(x - c)` at every node, one field per axis.
pub fn gradient(pot: &SymplecticPotential) -> Vec<ScalarField> {
    let grid = *pot.grid();
    let spec = pot.periodic_part().spectrum();
    (0..grid.dim())
        .map(|axis| {
            let df = spec.derivative(&[axis]).expect("valid axis");
            let values =
                df.values().iter().enumerate().map(|(idx, &d)| d + pot.quad() * (grid.point(idx)[axis] - pot.center()[axis])).collect();
            ScalarField::from_raw(grid, values)
        })
        .collect()
}

/// `sup |Du|` over the nodes of the grid.
pub fn max_gradient(pot: &SymplecticPotential) -> f64 {
    let grads = gradient(pot);
    (0..pot.grid().len()).map(|idx| grads.iter().map(|g| g.values()[idx].powi(2)).sum::<f64>().sqrt()).fold(0.0, f64::max)
}

/// Curvature fields and scalar energies of one potential.
#[derive(Debug, Clone)]
pub struct CurvatureReport {
    pub scalar_curvature: ScalarField,
    pub rm_norm: ScalarField,
    /// `∫_P S² dx`
    pub calabi_energy: f64,
    /// `-∫_P log det D²u dx`
    pub mabuchi_energy: f64,
    /// `(2ⁿ ∫_P |Rm|ⁿ dx)^{1/n}`; `2ⁿ` is the volume of the angular torus fiber.
    pub total_energy: f64,
    pub max_rm: f64,
    pub max_grad: f64,
}

pub const REPORT_CSV_HEADER: &str = "t,calabi_energy,mabuchi_energy,total_energy,max_rm,max_grad";

impl CurvatureReport {
    pub fn csv_row(&self, t: f64) -> String {
        [t, self.calabi_energy, self.mabuchi_energy, self.total_energy, self.max_rm, self.max_grad]
            .iter()
            .map(|&v| csv_real(v))
            .collect::<Vec<_>>()
            .join(",")
    }
}

pub fn energies_of(pot: &SymplecticPotential, hess: &HessianField) -> CurvatureReport {
    let grid = pot.grid();
    let n = grid.dim() as i32;
    let s = scalar_curvature_of(hess);
    let rm = riemann_norm_of(hess);
    let calabi_energy = s.map(|v| v * v).integrate();
    let mabuchi_energy = -hess.log_det().integrate();
    let fiber = 2f64.powi(n);
    let total_energy = (fiber * rm.map(|v| v.powi(n)).integrate()).powf(1.0 / n as f64);
    let max_rm = rm.max();
    CurvatureReport { scalar_curvature: s, rm_norm: rm, calabi_energy, mabuchi_energy, total_energy, max_rm, max_grad: max_gradient(pot) }
}

/// Energies of a strictly convex potential; weak potentials are rejected.
pub fn energies(pot: &SymplecticPotential) -> Result<CurvatureReport, GeometryError> {
    let hess = hessian(pot)?;
    Ok(energies_of(pot, &hess))
}
