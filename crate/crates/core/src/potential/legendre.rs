//! Separable discrete Legendre–Fenchel transform for periodic-plus-quadratic
//! potentials.
//!
//! For `ψ(ξ) = ½ξ² + φ(ξ)` with `φ` periodic, the conjugate
//! `u(x) = sup_ξ (xξ - ψ(ξ))` again splits as `½x² + f(x)` with `f` periodic
//! of the same period. Along one axis the supremum is located by the
//! linear-time transform (lower convex hull of the samples, merged against
//! the sorted slopes) and then polished by Newton's method on a local
//! six-point interpolant of `φ`. Two dimensions are handled by conjugating
//! axis 1 and then axis 0.

use std::sync::OnceLock;

use super::{KahlerPotential, PotentialError, SymplecticPotential, CONVEXITY_THRESHOLD};
use crate::grid::{PeriodicGrid, ScalarField};

const STENCIL: usize = 6;
/// Offset of the left-most stencil node relative to the cell's left node.
const STENCIL_OFFSET: isize = 2;

/// Monomial coefficients (in `s`) of the Lagrange basis on nodes `-2..=3`.
fn lagrange_basis() -> &'static [[f64; STENCIL]; STENCIL] {
    static BASIS: OnceLock<[[f64; STENCIL]; STENCIL]> = OnceLock::new();
    BASIS.get_or_init(|| {
        let nodes: Vec<f64> = (0..STENCIL).map(|a| a as f64 - STENCIL_OFFSET as f64).collect();
        let mut basis = [[0.0; STENCIL]; STENCIL];
        for a in 0..STENCIL {
            let mut poly = vec![1.0];
            let mut denom = 1.0;
            for b in 0..STENCIL {
                if a == b {
                    continue;
                }
                // poly *= (s - nodes[b])
                let mut next = vec![0.0; poly.len() + 1];
                for (p, &c) in poly.iter().enumerate() {
                    next[p + 1] += c;
                    next[p] -= c * nodes[b];
                }
                poly = next;
                denom *= nodes[a] - nodes[b];
            }
            for p in 0..STENCIL {
                basis[a][p] = poly[p] / denom;
            }
        }
        basis
    })
}

struct Line<'a> {
    phi: &'a [f64],
    h: f64,
    half_width: f64,
}

impl Line<'_> {
    fn node(&self, j: isize) -> f64 {
        -self.half_width + j as f64 * self.h
    }

    fn phi_at(&self, j: isize) -> f64 {
        let n = self.phi.len() as isize;
        self.phi[j.rem_euclid(n) as usize]
    }

    fn psi_at(&self, j: isize) -> f64 {
        let xi = self.node(j);
        0.5 * xi * xi + self.phi_at(j)
    }

    /// Polynomial coefficients of the interpolant of φ around cell `k`.
    fn local_poly(&self, k: isize) -> [f64; STENCIL] {
        let basis = lagrange_basis();
        let mut c = [0.0; STENCIL];
        for (a, row) in basis.iter().enumerate() {
            let v = self.phi_at(k - STENCIL_OFFSET + a as isize);
            for p in 0..STENCIL {
                c[p] += v * row[p];
            }
        }
        c
    }

    /// Maximize `xξ - ½ξ² - φ(ξ)` near node `j`, returning the maximum value.
    fn refine(&self, x: f64, j: isize) -> f64 {
        let discrete = x * self.node(j) - self.psi_at(j);
        let (mut k, mut s) = (j, 0.0);
        let mut coeffs = self.local_poly(k);
        for _ in 0..40 {
            let (_, dp, ddp) = poly_eval(&coeffs, s);
            let xi = self.node(k) + s * self.h;
            let grad = self.h * (x - xi) - dp;
            let curv = -self.h * self.h - ddp;
            if curv >= 0.0 {
                return discrete;
            }
            let step = -grad / curv;
            s += step;
            // recentre the stencil only once the iterate leaves [-½, 3/2)
            if !(-0.5..1.5).contains(&s) {
                let shift = s.floor();
                k += shift as isize;
                s -= shift;
                if (k - j).abs() > 2 {
                    return discrete;
                }
                coeffs = self.local_poly(k);
            }
            // quadratic convergence: the remaining error is far below rounding in s
            if step.abs() < 1e-11 {
                let xi = self.node(k) + s * self.h;
                let (p, _, _) = poly_eval(&coeffs, s);
                return x * xi - 0.5 * xi * xi - p;
            }
        }
        discrete
    }
}

fn poly_eval(c: &[f64; STENCIL], s: f64) -> (f64, f64, f64) {
    let (mut p, mut dp, mut ddp) = (0.0, 0.0, 0.0);
    for i in (0..STENCIL).rev() {
        ddp = ddp * s + 2.0 * dp;
        dp = dp * s + p;
        p = p * s + c[i];
    }
    (p, dp, ddp)
}

/// Periodic part of the conjugate of `½ξ² + φ(ξ)` at the given slopes.
///
/// `phi` holds one period of samples at `ξ_j = -L + jh`. The result at slope
/// `x` is `sup_ξ (xξ - ½ξ² - φ(ξ)) - ½x²`; targets may lie outside `[-L, L)`.
pub fn conjugate_line(phi: &[f64], h: f64, half_width: f64, targets: &[f64]) -> Vec<f64> {
    if targets.is_empty() {
        return Vec::new();
    }
    let line = Line { phi, h, half_width };
    let n = phi.len();
    let slope = (0..n).map(|j| (phi[(j + 1) % n] - phi[j]).abs() / h).fold(0.0, f64::max);
    let pad = 1.5 * slope + 4.0 * h;
    let xmin = targets.iter().copied().fold(f64::INFINITY, f64::min);
    let xmax = targets.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let jlo = ((xmin - pad + half_width) / h).floor() as isize - 3;
    let jhi = ((xmax + pad + half_width) / h).ceil() as isize + 3;

    // lower convex hull (monotone chain) of (ξ_j, ψ_j)
    let mut hull: Vec<isize> = Vec::with_capacity((jhi - jlo + 1) as usize);
    for j in jlo..=jhi {
        while hull.len() >= 2 {
            let (a, b) = (hull[hull.len() - 2], hull[hull.len() - 1]);
            let (xa, ya) = (line.node(a), line.psi_at(a));
            let (xb, yb) = (line.node(b), line.psi_at(b));
            let (xc, yc) = (line.node(j), line.psi_at(j));
            if (yb - ya) * (xc - xa) >= (yc - ya) * (xb - xa) {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(j);
    }

    let mut order: Vec<usize> = (0..targets.len()).collect();
    order.sort_by(|&a, &b| targets[a].total_cmp(&targets[b]));
    let mut out = vec![0.0; targets.len()];
    let mut v = 0usize;
    for &t in &order {
        let x = targets[t];
        while v + 1 < hull.len() {
            let (a, b) = (hull[v], hull[v + 1]);
            let chord = (line.psi_at(b) - line.psi_at(a)) / (line.node(b) - line.node(a));
            if chord < x {
                v += 1;
            } else {
                break;
            }
        }
        out[t] = line.refine(x, hull[v]) - 0.5 * x * x;
    }
    out
}

fn conjugate_periodic(field: &ScalarField) -> ScalarField {
    let grid = *field.grid();
    let n = grid.points_per_axis();
    let h = grid.spacing();
    let l = grid.half_width();
    let nodes: Vec<f64> = (0..n).map(|i| grid.coordinate(i)).collect();
    let values = field.values();
    let mut out = match grid.dim() {
        1 => conjugate_line(values, h, l, &nodes),
        _ => {
            // axis 1 (contiguous rows), then negate and conjugate along axis 0
            let mut partial = vec![0.0; grid.len()];
            for i in 0..n {
                let row = conjugate_line(&values[i * n..(i + 1) * n], h, l, &nodes);
                partial[i * n..(i + 1) * n].copy_from_slice(&row);
            }
            let mut result = vec![0.0; grid.len()];
            let mut column = vec![0.0; n];
            for j in 0..n {
                for i in 0..n {
                    column[i] = -partial[i * n + j];
                }
                let conj = conjugate_line(&column, h, l, &nodes);
                for i in 0..n {
                    result[i * n + j] = conj[i];
                }
            }
            result
        }
    };
    let mean = out.iter().sum::<f64>() / out.len() as f64;
    out.iter_mut().for_each(|v| *v -= mean);
    ScalarField::from_raw(grid, out)
}

fn check_standard(grid: &PeriodicGrid, margin: f64) -> Result<(), PotentialError> {
    if grid.half_width() != 1.0 {
        return Err(PotentialError::NonStandardQuadratic);
    }
    if !(margin > CONVEXITY_THRESHOLD) {
        return Err(PotentialError::NotConvex { margin });
    }
    Ok(())
}

/// Kähler potential → symplectic potential, `u = ψ*`.
pub fn legendre_transform(pot: &KahlerPotential) -> Result<SymplecticPotential, PotentialError> {
    check_standard(pot.grid(), pot.convexity_margin())?;
    Ok(SymplecticPotential::new(conjugate_periodic(pot.periodic_part())))
}

/// Symplectic potential → Kähler potential, `ψ = u*`.
pub fn inverse_legendre_transform(pot: &SymplecticPotential) -> Result<KahlerPotential, PotentialError> {
    if pot.quad() != 1.0 || pot.center() != [0.0; 2] {
        return Err(PotentialError::NonStandardQuadratic);
    }
    check_standard(pot.grid(), pot.convexity_margin())?;
    Ok(KahlerPotential::new(conjugate_periodic(pot.periodic_part())))
}
