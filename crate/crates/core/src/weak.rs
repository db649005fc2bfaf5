//! Weak potentials and their smooth approximations.
//!
//! A weak potential is a periodic `f` for which `u = f + ½|x|²` is convex but
//! not necessarily smooth or strictly convex. It is smoothed by mollification
//! with the standard bump `η(y) = exp(-1/(1 - |y|²))` on the unit ball,
//! normalized to unit mass. Because `f` is periodic and `h ≤ 0.5`, the
//! convolution `f_h = f * η_h` is circular and acts on Fourier modes as the
//! multiplier `η̂(h|k|)`; this is applied to the trigonometric interpolant of
//! the samples.
//!
//! The approximation sequence is
//! `u_m = (m/(m+1))·f_{1/r(m)} + ½|x|²` for a schedule `r(m) ≥ m`.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::sync::OnceLock;

use thiserror::Error;

use crate::grid::snapshot::{read_snapshot, write_snapshot, SnapshotError, SnapshotHeader};
use crate::grid::{GridError, PeriodicGrid, ScalarField};
use crate::linalg::{self, Sym};
use crate::potential::{total_hessians, SymplecticPotential};

/// Largest admissible mollification radius.
pub const MAX_RADIUS: f64 = 0.5;
/// Name of the built-in quartic weak potential.
pub const QUARTIC_EXAMPLE: &str = "quartic-example";
/// Search limit of [`choose_schedule`] is `SEARCH_FACTOR · m`.
pub const SEARCH_FACTOR: usize = 64;
/// Trapezoid intervals on `[-1, 1]` for the bump integrals. The integrands
/// vanish to all orders at the ends, so this is at rounding level.
const BUMP_INTERVALS: usize = 512;

#[derive(Debug, Error)]
pub enum WeakError {
    #[error("mollifier radius h = {0} is outside (0, 0.5]; the bump support must fit well inside the period")]
    Radius(f64),
    #[error("approximation index m must be at least 1")]
    ZeroIndex,
    #[error("schedule covers m ≤ {m_max}, requested m = {m}")]
    OutOfSchedule { m: usize, m_max: usize },
    #[error("schedule entry r({m}) = {r} is invalid: need r(m) ≥ m and r(m) ≥ 2")]
    BadEntry { m: usize, r: usize },
    #[error("schedule entry r({m}) is unresolved")]
    Unresolved { m: usize },
    #[error("snapshot kind is {found:?}, expected \"weak\"")]
    Kind { found: Option<String> },
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Snapshot(#[from] SnapshotError),
}

/// Unnormalized bump `exp(-1/(1 - |y|²))` on `|y| < 1`, zero outside.
pub fn bump(y: &[f64]) -> f64 {
    let r2: f64 = y.iter().map(|v| v * v).sum();
    if r2 < 1.0 {
        (-1.0 / (1.0 - r2)).exp()
    } else {
        0.0
    }
}

/// One-dimensional marginal of the bump along a coordinate axis, as
/// trapezoid nodes and weights on `(-1, 1)`.
struct BumpTable {
    nodes: Vec<f64>,
    weights: Vec<f64>,
    mass: f64,
}

impl BumpTable {
    fn build(dim: usize) -> Self {
        let dz = 2.0 / BUMP_INTERVALS as f64;
        let nodes: Vec<f64> = (1..BUMP_INTERVALS).map(|i| -1.0 + i as f64 * dz).collect();
        let weights: Vec<f64> = nodes
            .iter()
            .map(|&z| {
                let marginal = match dim {
                    1 => bump(&[z]),
                    _ => {
                        // ∫ η(z, w) dw over the chord, with w = s·τ
                        let s = (1.0 - z * z).sqrt();
                        let inner: f64 = (1..BUMP_INTERVALS)
                            .map(|i| {
                                let tau = -1.0 + i as f64 * dz;
                                (-1.0 / (s * s * (1.0 - tau * tau))).exp()
                            })
                            .sum();
                        s * inner * dz
                    }
                };
                marginal * dz
            })
            .collect();
        let mass = weights.iter().sum();
        Self { nodes, weights, mass }
    }

    fn get(dim: usize) -> &'static BumpTable {
        static TABLES: OnceLock<[BumpTable; 2]> = OnceLock::new();
        &TABLES.get_or_init(|| [BumpTable::build(1), BumpTable::build(2)])[dim - 1]
    }

    fn moment(&self, power: i32) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(z, w)| w * z.powi(power)).sum::<f64>() / self.mass
    }

    fn transform(&self, kappa: f64) -> f64 {
        if kappa == 0.0 {
            return 1.0;
        }
        self.nodes.iter().zip(&self.weights).map(|(z, w)| w * (kappa * z).cos()).sum::<f64>() / self.mass
    }
}

/// `∫ η` over the unit ball of dimension `dim`.
pub fn bump_mass(dim: usize) -> f64 {
    BumpTable::get(dim).mass
}

/// Fourier transform of the normalized bump at frequency magnitude `kappa`.
pub fn bump_multiplier(dim: usize, kappa: f64) -> f64 {
    BumpTable::get(dim).transform(kappa)
}

/// `∫ y₁² η(y) dy` for the normalized bump.
pub fn bump_second_moment(dim: usize) -> f64 {
    BumpTable::get(dim).moment(2)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MollifierSpec {
    h: f64,
}

impl MollifierSpec {
    pub fn new(h: f64) -> Result<Self, WeakError> {
        if !(h > 0.0 && h <= MAX_RADIUS) {
            return Err(WeakError::Radius(h));
        }
        Ok(Self { h })
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    /// Multiplier of the convolution on a mode of angular frequency `|k|`.
    pub fn multiplier(&self, dim: usize, k: f64) -> f64 {
        bump_multiplier(dim, self.h * k)
    }
}

/// Circular convolution `f * η_h`.
pub fn mollify(f: &ScalarField, spec: &MollifierSpec) -> ScalarField {
    let grid = *f.grid();
    let dim = grid.dim();
    let n = grid.points_per_axis() as i64;
    let signed = |i: usize| {
        let i = i as i64;
        if i <= n / 2 {
            i
        } else {
            i - n
        }
    };
    let radial_key = |m: [usize; 2]| -> i64 { (0..dim).map(|a| signed(m[a]).pow(2)).sum() };
    let unit = std::f64::consts::PI / grid.half_width();
    let mut table: HashMap<i64, f64> = HashMap::new();
    for idx in 0..grid.len() {
        let key = radial_key(grid.multi_index(idx));
        table.entry(key).or_insert_with(|| spec.multiplier(dim, unit * (key as f64).sqrt()));
    }
    f.spectrum().map_modes(|m| table[&radial_key(m)].into()).to_field()
}

/// Where the Hessian of a weak potential comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HessianSource {
    /// Exact `D²f` of the built-in quartic.
    ClosedForm,
    /// Periodic second differences of the samples; approximate where `f` is not C².
    SecondDifferences,
}

impl HessianSource {
    pub fn describe(self) -> &'static str {
        match self {
            HessianSource::ClosedForm => "closed form",
            HessianSource::SecondDifferences => "second differences (approximate at kinks)",
        }
    }
}

/// A periodic `f` with `f + ½|x|²` convex, possibly weakly.
#[derive(Debug, Clone, PartialEq)]
pub struct WeakPotential {
    f: ScalarField,
    source: HessianSource,
}

impl WeakPotential {
    /// `f = ¼Σxᵢ⁴ - ½Σxᵢ²`, i.e. `u = ¼Σxᵢ⁴`, on `[-1, 1)ⁿ`.
    ///
    /// `f` is C² periodic; `D²u` degenerates on the coordinate hyperplanes.
    pub fn quartic_example(dim: usize, points: usize) -> Result<Self, GridError> {
        let grid = PeriodicGrid::new(dim, points)?;
        let f = ScalarField::sample(grid, |x| x.iter().map(|v| 0.25 * v.powi(4) - 0.5 * v * v).sum())?;
        Ok(Self { f, source: HessianSource::ClosedForm })
    }

    pub fn from_samples(f: ScalarField) -> Self {
        Self { f, source: HessianSource::SecondDifferences }
    }

    pub fn periodic_part(&self) -> &ScalarField {
        &self.f
    }

    pub fn grid(&self) -> &PeriodicGrid {
        self.f.grid()
    }

    pub fn hessian_source(&self) -> HessianSource {
        self.source
    }

    /// `D²f` at every node.
    pub fn periodic_hessians(&self) -> Vec<Sym> {
        let grid = *self.grid();
        let dim = grid.dim();
        match self.source {
            HessianSource::ClosedForm => (0..grid.len())
                .map(|idx| {
                    let p = grid.point(idx);
                    let mut m = [0.0; 3];
                    for a in 0..dim {
                        m[linalg::slot(a, a)] = 3.0 * p[a] * p[a] - 1.0;
                    }
                    m
                })
                .collect(),
            HessianSource::SecondDifferences => {
                let n = grid.points_per_axis();
                let h2 = grid.spacing().powi(2);
                let v = self.f.values();
                let at = |i: usize, j: usize| v[grid.flat_index([i % n, j % n])];
                (0..grid.len())
                    .map(|idx| {
                        let [i, j] = grid.multi_index(idx);
                        let (ip, im) = (i + 1, i + n - 1);
                        match dim {
                            1 => [(v[ip % n] - 2.0 * v[i] + v[im % n]) / h2, 0.0, 0.0],
                            _ => {
                                let (jp, jm) = (j + 1, j + n - 1);
                                let c = at(i, j);
                                [
                                    (at(ip, j) - 2.0 * c + at(im, j)) / h2,
                                    (at(ip, jp) - at(ip, jm) - at(im, jp) + at(im, jm)) / (4.0 * h2),
                                    (at(i, jp) - 2.0 * c + at(i, jm)) / h2,
                                ]
                            }
                        }
                    })
                    .collect()
            }
        }
    }

    /// `log det(D²f + s·I)` at every node; `-∞` where the matrix is singular.
    pub fn log_det_shifted(&self, s: f64) -> Vec<f64> {
        let dim = self.grid().dim();
        self.periodic_hessians().iter().map(|m| shifted_log_det(m, s, dim)).collect()
    }

    pub fn write_to<W: Write>(&self, out: W) -> Result<(), SnapshotError> {
        let header = SnapshotHeader::for_grid(self.grid()).with_kind("weak");
        write_snapshot(out, &header, &self.f)
    }

    /// Load a snapshot whose header carries `"kind":"weak"`.
    pub fn read_from<R: Read>(input: R) -> Result<Self, WeakError> {
        let (header, f) = read_snapshot(input)?;
        if header.kind.as_deref() != Some("weak") {
            return Err(WeakError::Kind { found: header.kind });
        }
        Ok(Self::from_samples(f))
    }
}

fn shifted_log_det(m: &Sym, s: f64, dim: usize) -> f64 {
    let mut shifted = *m;
    for a in 0..dim {
        shifted[linalg::slot(a, a)] += s;
    }
    let d = linalg::det(&shifted, dim);
    if linalg::min_eigenvalue(&shifted, dim) > 0.0 {
        d.ln()
    } else {
        f64::NEG_INFINITY
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScheduleEntry {
    pub m: usize,
    /// `r(m)`, or `None` if the search was exhausted.
    pub r: Option<usize>,
    /// `∫_P |log det D²v_{r,m} - log det D²v_m| dx` at the chosen `r`, if measured.
    pub mismatch: Option<f64>,
}

/// Map `m ↦ r(m)` for `1 ≤ m ≤ m_max`.
#[derive(Debug, Clone, PartialEq)]
pub struct ApproxSchedule {
    entries: Vec<ScheduleEntry>,
}

impl ApproxSchedule {
    /// A prescribed schedule; every entry must satisfy `r(m) ≥ max(m, 2)`.
    pub fn from_fn(m_max: usize, r: impl Fn(usize) -> usize) -> Result<Self, WeakError> {
        let entries = (1..=m_max)
            .map(|m| {
                let rm = r(m);
                if rm < m || rm < 2 {
                    return Err(WeakError::BadEntry { m, r: rm });
                }
                Ok(ScheduleEntry { m, r: Some(rm), mismatch: None })
            })
            .collect::<Result<_, _>>()?;
        Ok(Self { entries })
    }

    pub fn m_max(&self) -> usize {
        self.entries.len()
    }

    pub fn entries(&self) -> &[ScheduleEntry] {
        &self.entries
    }

    pub fn r(&self, m: usize) -> Result<usize, WeakError> {
        if m == 0 {
            return Err(WeakError::ZeroIndex);
        }
        let entry = self.entries.get(m - 1).ok_or(WeakError::OutOfSchedule { m, m_max: self.m_max() })?;
        entry.r.ok_or(WeakError::Unresolved { m })
    }
}

/// Periodic part `(m/(m+1))·f_{1/r(m)}` of the `m`-th approximation.
pub fn approx_potential(f: &ScalarField, m: usize, schedule: &ApproxSchedule) -> Result<SymplecticPotential, WeakError> {
    let r = schedule.r(m)?;
    let spec = MollifierSpec::new(1.0 / r as f64)?;
    let factor = m as f64 / (m as f64 + 1.0);
    Ok(SymplecticPotential::new(mollify(f, &spec).scaled(factor)))
}

/// `log det D²v_{j,m}` at every node, with `v_{j,m} = f_{1/j} + ((m+1)/(2m))|x|²`.
pub fn mollified_log_det(f: &ScalarField, j: usize, m: usize) -> Result<Vec<f64>, WeakError> {
    let spec = MollifierSpec::new(1.0 / j as f64)?;
    let shift = (m as f64 + 1.0) / m as f64;
    let dim = f.grid().dim();
    let fh = mollify(f, &spec);
    Ok(total_hessians(&fh, 0.0).iter().map(|h| shifted_log_det(h, shift, dim)).collect())
}

/// First `j ≥ max(m, 2)` with `∫_P |log det D²v_{j,m} - log det D²v_m| < 1/m`,
/// for every `m ≤ m_max`.
///
/// `j = 1` would give `h = 1 > 0.5`, hence the floor of 2. The search stops
/// at `j = 64m` and leaves the entry unresolved.
pub fn choose_schedule(weak: &WeakPotential, m_max: usize) -> ApproxSchedule {
    let grid = *weak.grid();
    let cell = grid.cell_volume();
    let entries = std::thread::scope(|scope| {
        let handles: Vec<_> = (1..=m_max)
            .map(|m| {
                scope.spawn(move || {
                    let target = weak.log_det_shifted((m as f64 + 1.0) / m as f64);
                    for j in m.max(2)..=SEARCH_FACTOR * m {
                        let trial = mollified_log_det(weak.periodic_part(), j, m).expect("j ≥ 2");
                        let mismatch = cell * trial.iter().zip(&target).map(|(a, b)| (a - b).abs()).sum::<f64>();
                        if mismatch < 1.0 / m as f64 {
                            return ScheduleEntry { m, r: Some(j), mismatch: Some(mismatch) };
                        }
                    }
                    ScheduleEntry { m, r: None, mismatch: None }
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("schedule search panicked")).collect()
    });
    ApproxSchedule { entries }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn radius_rule() {
        assert!(MollifierSpec::new(0.5).is_ok());
        assert!(matches!(MollifierSpec::new(0.7), Err(WeakError::Radius(h)) if h == 0.7));
        assert!(MollifierSpec::new(0.0).is_err());
    }

    #[test]
    fn normalization_matches_reference_quadrature() {
        // independent references by adaptive quadrature
        assert!((bump_mass(1) - 0.443_993_816_168_079_3).abs() < 1e-10);
        assert!((bump_mass(2) - 0.466_512_393_178_33).abs() < 1e-10);
    }

    #[test]
    fn constant_is_unchanged() {
        let g = PeriodicGrid::new(2, 16).unwrap();
        let c = ScalarField::constant(g, 2.5);
        let out = mollify(&c, &MollifierSpec::new(0.3).unwrap());
        assert!(out.values().iter().all(|v| (v - 2.5).abs() < 1e-14));
    }

    #[test]
    fn sine_is_scaled_by_direct_quadrature_multiplier() {
        let h = 0.3;
        // 1D oracle: midpoint rule on a fine grid of the bump
        let m = 200_000;
        let (mut num, mut den) = (0.0, 0.0);
        for i in 0..m {
            let y = -1.0 + (i as f64 + 0.5) * 2.0 / m as f64;
            num += bump(&[y]) * (PI * h * y).cos();
            den += bump(&[y]);
        }
        let rho = num / den;
        assert!(rho > 0.0 && rho < 1.0);
        let g = PeriodicGrid::new(1, 32).unwrap();
        let f = ScalarField::sample(g, |x| (PI * x[0]).sin()).unwrap();
        let out = mollify(&f, &MollifierSpec::new(h).unwrap());
        for idx in 0..32 {
            assert!((out.values()[idx] - rho * f.values()[idx]).abs() < 1e-12);
        }
    }

    #[test]
    fn two_dimensional_multiplier_matches_tensor_quadrature() {
        let h = 0.4;
        let m = 1500;
        let (mut num, mut den) = (0.0, 0.0);
        for i in 0..m {
            for j in 0..m {
                let y = [-1.0 + (i as f64 + 0.5) * 2.0 / m as f64, -1.0 + (j as f64 + 0.5) * 2.0 / m as f64];
                let b = bump(&y);
                num += b * (PI * h * y[0]).cos();
                den += b;
            }
        }
        let rho = num / den;
        let g = PeriodicGrid::new(2, 16).unwrap();
        let f = ScalarField::sample(g, |x| (PI * x[0]).sin()).unwrap();
        let out = mollify(&f, &MollifierSpec::new(h).unwrap());
        for idx in 0..g.len() {
            assert!((out.values()[idx] - rho * f.values()[idx]).abs() < 1e-9);
        }
    }

    #[test]
    fn mollification_commutes_with_node_shifts() {
        let g = PeriodicGrid::new(1, 32).unwrap();
        let f = ScalarField::sample(g, |x| (x[0] * x[0] - 1.0).abs().sqrt()).unwrap();
        let spec = MollifierSpec::new(0.25).unwrap();
        let a = mollify(&f, &spec);
        let rolled: Vec<f64> = (0..32).map(|i| f.values()[(i + 5) % 32]).collect();
        let b = mollify(&ScalarField::from_values(g, rolled).unwrap(), &spec);
        for i in 0..32 {
            assert!((b.values()[i] - a.values()[(i + 5) % 32]).abs() < 1e-14);
        }
    }

    #[test]
    fn quartic_closed_form_hessian() {
        let w = WeakPotential::quartic_example(2, 8).unwrap();
        let hs = w.periodic_hessians();
        let idx = w.grid().flat_index([6, 2]);
        let p = w.grid().point(idx);
        assert_eq!(hs[idx], [3.0 * p[0] * p[0] - 1.0, 0.0, 3.0 * p[1] * p[1] - 1.0]);
        // second differences of the same samples agree away from the seams
        let sampled = WeakPotential::from_samples(w.periodic_part().clone()).periodic_hessians();
        assert!((sampled[idx][0] - hs[idx][0]).abs() < 0.1);
        assert!(sampled[idx][1].abs() < 1e-12);
    }

    #[test]
    fn weak_snapshot_requires_kind() {
        let w = WeakPotential::quartic_example(1, 8).unwrap();
        let mut buf = Vec::new();
        w.write_to(&mut buf).unwrap();
        let back = WeakPotential::read_from(&buf[..]).unwrap();
        assert_eq!(back.periodic_part(), w.periodic_part());
        assert_eq!(back.hessian_source(), HessianSource::SecondDifferences);
        let mut plain = Vec::new();
        SymplecticPotential::new(w.periodic_part().clone()).write_to(&mut plain).unwrap();
        assert!(matches!(WeakPotential::read_from(&plain[..]), Err(WeakError::Kind { .. })));
    }

    #[test]
    fn schedule_validation() {
        assert!(matches!(ApproxSchedule::from_fn(3, |m| m), Err(WeakError::BadEntry { m: 1, r: 1 })));
        let s = ApproxSchedule::from_fn(3, |m| m.max(2)).unwrap();
        assert_eq!(s.r(3).unwrap(), 3);
        assert!(matches!(s.r(0), Err(WeakError::ZeroIndex)));
        assert!(matches!(s.r(4), Err(WeakError::OutOfSchedule { m: 4, m_max: 3 })));
    }

    #[test]
    fn zero_weak_potential() {
        let g = PeriodicGrid::new(2, 16).unwrap();
        let zero = WeakPotential::from_samples(ScalarField::zeros(g));
        let schedule = choose_schedule(&zero, 4);
        let rs: Vec<usize> = (1..=4).map(|m| schedule.r(m).unwrap()).collect();
        assert_eq!(rs, vec![2, 2, 3, 4]);
        let u = approx_potential(zero.periodic_part(), 3, &schedule).unwrap();
        assert!(u.periodic_part().max_abs() < 1e-15);
    }
}
