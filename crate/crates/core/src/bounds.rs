//! Explicit constants for special convex functions and the numerical checks
//! that go with them.
//!
//! A special convex function of type `(M, C₀, C_E)` on `ℝⁿ` is smooth and
//! strictly convex with `u(0) = 0`, `Du(0) = 0`, `|Du| < M`, `u_r > C₀`
//! outside the unit ball and `(∫|u^{ij}_{ij}|ⁿ)^{1/n} < C_E`. Such a function
//! cannot live on a ball larger than `1 + R₀/C₀`, with `R₀` given by a
//! dyadic pigeonhole argument; [`constants`] evaluates the whole chain.
//!
//! Norm subscripts in the integral inequality are reciprocal exponents:
//! `‖g‖_{1/n}` is the `Lⁿ` norm and `‖f²‖_{(n-1)/n}` is the `L^{n/(n-1)}`
//! norm, which is the sup norm when `n = 1`.

use std::f64::consts::PI;

use thiserror::Error;

use crate::csv_real;
use crate::geometry::{self, GeometryError};
use crate::potential::{SymplecticPotential, CONVEXITY_THRESHOLD};

/// Radii and directions of the polar grid used by default in two dimensions.
pub const DEFAULT_POLAR_RESOLUTION: usize = 256;
/// Tolerance on `u(0)` and `|Du(0)|` for the gauge condition.
pub const GAUGE_TOLERANCE: f64 = 1e-8;

pub const LEDGER_CSV_HEADER: &str = "M,C0,CE,n,C1,C2,C3,R0,max_radius,lambda";

#[derive(Debug, Error, PartialEq)]
pub enum BoundsError {
    #[error("parameter {name} = {value} must be positive")]
    NonPositive { name: &'static str, value: f64 },
    #[error("dimension n = {0} is not supported (need n = 1 or 2)")]
    Dimension(usize),
    #[error("samples must start at x = 1, increase strictly and carry positive values: {0}")]
    Samples(&'static str),
    #[error("∫₁^∞ 1/f ≈ {integral} (tail {tail}) does not stay below M = {m}")]
    TailCheck { integral: f64, tail: f64, m: f64 },
    #[error("found x₀ = {x0} above the ceiling {ceiling}")]
    CeilingViolated { x0: f64, ceiling: f64 },
    #[error("sample data lacks {0}")]
    MissingData(&'static str),
    #[error("samples are {samples}-dimensional but parameters say n = {params}")]
    DimensionMismatch { samples: usize, params: usize },
    #[error("level set {{u < {0}}} is empty")]
    EmptyLevelSet(f64),
    #[error("level set {{u < {0}}} reaches the edge of the sampled ball")]
    LevelSetTruncated(f64),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

fn check_dim(n: usize) -> Result<(), BoundsError> {
    if n == 1 || n == 2 {
        Ok(())
    } else {
        Err(BoundsError::Dimension(n))
    }
}

fn positive(name: &'static str, value: f64) -> Result<(), BoundsError> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(BoundsError::NonPositive { name, value })
    }
}

/// `Vol(S^{n-1}) = 2π^{n/2}/Γ(n/2)`.
pub fn sphere_area(n: usize) -> f64 {
    // Γ(n/2) by the half-integer recurrence
    let mut gamma = if n.is_multiple_of(2) { 1.0 } else { PI.sqrt() };
    let mut s = if n.is_multiple_of(2) { 1.0 } else { 0.5 };
    while s + 0.5 < n as f64 / 2.0 {
        gamma *= s;
        s += 1.0;
    }
    2.0 * PI.powf(n as f64 / 2.0) / gamma
}

/// `ω_n = Vol(S^{n-1}) / n`.
pub fn unit_ball_volume(n: usize) -> f64 {
    sphere_area(n) / n as f64
}

/// The integer part `[M(n+1)²2^{n+1}C / (4(2^{(n+1)/2} - 1)²)]`.
pub fn dyadic_bracket(m: f64, c: f64, n: usize) -> f64 {
    let nf = n as f64;
    let gap = 2f64.powf((nf + 1.0) / 2.0) - 1.0;
    (m * (nf + 1.0).powi(2) * 2f64.powf(nf + 1.0) * c / (4.0 * gap * gap)).floor()
}

/// `exp(([·] + 1) ln 2)`, an exact power of two.
pub fn dyadic_ceiling(m: f64, c: f64, n: usize) -> f64 {
    (dyadic_bracket(m, c, n) + 1.0).exp2()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpecialConvexParams {
    pub m: f64,
    pub c0: f64,
    pub ce: f64,
    pub n: usize,
}

impl SpecialConvexParams {
    pub fn new(m: f64, c0: f64, ce: f64, n: usize) -> Result<Self, BoundsError> {
        positive("M", m)?;
        positive("C0", c0)?;
        positive("CE", ce)?;
        check_dim(n)?;
        Ok(Self { m, c0, ce, n })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstantsLedger {
    pub params: SpecialConvexParams,
    pub sphere_area: f64,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    /// The integer part inside the exponent of `R₀`.
    pub bracket: f64,
    pub r0: f64,
    pub max_radius: f64,
    pub lambda: f64,
}

impl ConstantsLedger {
    pub fn csv_row(&self) -> String {
        let p = &self.params;
        let mut cols = vec![csv_real(p.m), csv_real(p.c0), csv_real(p.ce), p.n.to_string()];
        cols.extend([self.c1, self.c2, self.c3, self.r0, self.max_radius, self.lambda].map(csv_real));
        cols.join(",")
    }

    /// Aligned `key = value` lines.
    pub fn to_text(&self) -> String {
        let p = &self.params;
        let rows: [(&str, String); 14] = [
            ("M", p.m.to_string()),
            ("C0", p.c0.to_string()),
            ("CE", p.ce.to_string()),
            ("n", p.n.to_string()),
            ("sphere_area", self.sphere_area.to_string()),
            ("C1", self.c1.to_string()),
            ("C2", self.c2.to_string()),
            ("C3", self.c3.to_string()),
            ("bracket", self.bracket.to_string()),
            ("R0", format!("{:e}", self.r0)),
            ("log2(R0/2M)", (self.bracket + 1.0).to_string()),
            ("max_radius", format!("{:e}", self.max_radius)),
            ("lambda", format!("{:e}", self.lambda)),
            ("lambda_case", "t0 >= 1 only".to_string()),
        ];
        rows.iter().map(|(k, v)| format!("{k:<12} = {v}\n")).collect()
    }
}

/// Evaluate `C₁, C₂, C₃, R₀`, the maximal radius and `λ`.
///
/// `C₁` comes from `B(0, R/M) ⊆ {u < R} ⊆ B(0, 1 + R/C₀)` for `R ≥ 1`;
/// `C₂ = ω_n(1 + 1/C₀)ⁿ(1 + C_E/4)` bounds `R³·Vol + (C_E/4)R⁴Vol^{(n-1)/n}`.
pub fn constants(params: &SpecialConvexParams) -> ConstantsLedger {
    let SpecialConvexParams { m, c0, ce, n } = *params;
    let nf = n as f64;
    let area = sphere_area(n);
    let omega = unit_ball_volume(n);
    let outer = (1.0 + 1.0 / c0).powi(n as i32);
    let c1 = omega * m.powi(n as i32).max(outer);
    // C₂/Vol(S^{n-1}) avoids a spurious π/π rounding in C₃
    let c2_over_area = outer * (1.0 + ce / 4.0) / nf;
    let c2 = area * c2_over_area;
    let c3 = 4.0 * c2_over_area * (2.0 * m).powi(n as i32 + 1) / (c0 * c0) + 1.0;
    let bracket = dyadic_bracket(m, c3, n);
    let r0 = 2.0 * m * (bracket + 1.0).exp2();
    ConstantsLedger { params: *params, sphere_area: area, c1, c2, c3, bracket, r0, max_radius: 1.0 + r0 / c0, lambda: 2.0 + r0 / c0 }
}

/// `count` log-spaced abscissae from 1 to `x_max`.
pub fn log_spaced(x_max: f64, count: usize) -> Vec<f64> {
    let top = x_max.ln();
    (0..count).map(|i| (top * i as f64 / (count - 1) as f64).exp()).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct DyadicSearchReport {
    /// Smallest sample with `∫₁^{x₀} f xⁿ⁻¹ > C x₀ⁿ⁺¹`.
    pub x0: Option<f64>,
    /// `exp(([·] + 1) ln 2)`.
    pub ceiling: f64,
    /// `∫₁^∞ 1/f`: trapezoid on the samples plus the tail estimate.
    pub reciprocal_integral: f64,
    /// Power-law tail beyond the last sample.
    pub tail: f64,
}

/// Search the samples `(x, f)` for the first `x₀` with
/// `∫₁^{x₀} f(x) xⁿ⁻¹ dx > C x₀ⁿ⁺¹` (composite trapezoid).
///
/// The precondition `∫₁^∞ 1/f < M` is checked with a power-law tail fitted
/// to the last two samples; a tail decaying no faster than `1/x` fails.
pub fn dyadic_search(x: &[f64], f: &[f64], m: f64, c: f64, n: usize) -> Result<DyadicSearchReport, BoundsError> {
    positive("M", m)?;
    positive("C", c)?;
    if n == 0 {
        return Err(BoundsError::Dimension(n));
    }
    if x.len() != f.len() || x.len() < 3 {
        return Err(BoundsError::Samples("need at least three (x, f) pairs"));
    }
    if x[0] != 1.0 || x.windows(2).any(|w| w[1] <= w[0]) {
        return Err(BoundsError::Samples("abscissae"));
    }
    if f.iter().any(|&v| !(v > 0.0)) {
        return Err(BoundsError::Samples("values"));
    }
    let k = x.len() - 1;
    let sampled: f64 = (0..k).map(|i| 0.5 * (x[i + 1] - x[i]) * (1.0 / f[i] + 1.0 / f[i + 1])).sum();
    let power = (f[k] / f[k - 1]).ln() / (x[k] / x[k - 1]).ln();
    let tail = if power > 1.0 { x[k] / (f[k] * (power - 1.0)) } else { f64::INFINITY };
    let integral = sampled + tail;
    if !(integral < m) {
        return Err(BoundsError::TailCheck { integral, tail, m });
    }
    let ceiling = dyadic_ceiling(m, c, n);
    let weight = |i: usize| f[i] * x[i].powi(n as i32 - 1);
    let mut acc = 0.0;
    let mut x0 = None;
    for i in 1..x.len() {
        acc += 0.5 * (x[i] - x[i - 1]) * (weight(i) + weight(i - 1));
        if acc > c * x[i].powi(n as i32 + 1) {
            x0 = Some(x[i]);
            break;
        }
    }
    if let Some(x0) = x0 {
        if x0 > ceiling {
            return Err(BoundsError::CeilingViolated { x0, ceiling });
        }
    }
    Ok(DyadicSearchReport { x0, ceiling, reciprocal_integral: integral, tail })
}

/// Value and derivatives of `u` at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointData {
    pub value: f64,
    pub gradient: [f64; 2],
    pub hessian: Option<[[f64; 2]; 2]>,
    /// `u^{ij}_{ij}` (minus the scalar curvature).
    pub curvature: Option<f64>,
}

/// Samples of `u` on a polar grid: midpoint radii on `(0, R_dom)` times
/// equally spaced directions, plus the origin.
///
/// In one dimension the directions are `±1`.
#[derive(Debug, Clone, PartialEq)]
pub struct PolarSamples {
    dim: usize,
    radius: f64,
    radii: Vec<f64>,
    directions: Vec<[f64; 2]>,
    origin: PointData,
    points: Vec<PointData>,
}

impl PolarSamples {
    /// The sample positions in storage order (radius-major), origin excluded.
    pub fn positions(dim: usize, radius: f64, n_radii: usize, n_dirs: usize) -> Vec<[f64; 2]> {
        let (radii, dirs) = Self::layout(dim, radius, n_radii, n_dirs);
        radii.iter().flat_map(|&r| dirs.iter().map(move |d| [r * d[0], r * d[1]])).collect()
    }

    fn layout(dim: usize, radius: f64, n_radii: usize, n_dirs: usize) -> (Vec<f64>, Vec<[f64; 2]>) {
        let dr = radius / n_radii as f64;
        let radii = (0..n_radii).map(|i| (i as f64 + 0.5) * dr).collect();
        let dirs = match dim {
            1 => vec![[1.0, 0.0], [-1.0, 0.0]],
            _ => (0..n_dirs)
                .map(|k| {
                    let th = 2.0 * PI * k as f64 / n_dirs as f64;
                    [th.cos(), th.sin()]
                })
                .collect(),
        };
        (radii, dirs)
    }

    pub fn from_fn(
        dim: usize,
        radius: f64,
        n_radii: usize,
        n_dirs: usize,
        func: impl Fn([f64; 2]) -> PointData,
    ) -> Result<Self, BoundsError> {
        check_dim(dim)?;
        positive("radius", radius)?;
        let (radii, directions) = Self::layout(dim, radius, n_radii, n_dirs);
        let points = Self::positions(dim, radius, n_radii, n_dirs).into_iter().map(&func).collect();
        Ok(Self { dim, radius, radii, directions, origin: func([0.0; 2]), points })
    }

    /// Sample a torus potential around `center`; position `y` carries
    /// `u(center + y)`. Spectral interpolation gives exact derivatives of
    /// the trigonometric interpolant.
    pub fn from_potential(
        pot: &SymplecticPotential,
        center: &[f64],
        radius: f64,
        n_radii: usize,
        n_dirs: usize,
    ) -> Result<Self, BoundsError> {
        let dim = pot.grid().dim();
        check_dim(dim)?;
        positive("radius", radius)?;
        let (radii, directions) = Self::layout(dim, radius, n_radii, n_dirs);
        let mut local = vec![[0.0; 2]];
        local.extend(Self::positions(dim, radius, n_radii, n_dirs));
        let at: Vec<[f64; 2]> = local.iter().map(|y| [center[0] + y[0], center.get(1).unwrap_or(&0.0) + y[1]]).collect();

        let spec = pot.periodic_part().spectrum();
        let curvature = geometry::abreu_scalar_curvature(pot)?.spectrum().evaluate_points(&at, &[]);
        let value = spec.evaluate_points(&at, &[]);
        let grads: Vec<Vec<f64>> = (0..dim).map(|a| spec.evaluate_points(&at, &[a])).collect();
        let hess: Vec<Vec<Vec<f64>>> =
            (0..dim).map(|a| (0..dim).map(|b| if b < a { Vec::new() } else { spec.evaluate_points(&at, &[a, b]) }).collect()).collect();
        let (q, c) = (pot.quad(), pot.center());
        let data: Vec<PointData> = (0..at.len())
            .map(|p| {
                let x = at[p];
                let mut gradient = [0.0; 2];
                let mut h = [[0.0; 2]; 2];
                let mut r2 = 0.0;
                for a in 0..dim {
                    r2 += (x[a] - c[a]).powi(2);
                    gradient[a] = grads[a][p] + q * (x[a] - c[a]);
                    for b in a..dim {
                        h[a][b] = hess[a][b][p] + if a == b { q } else { 0.0 };
                        h[b][a] = h[a][b];
                    }
                }
                PointData { value: value[p] + 0.5 * q * r2, gradient, hessian: Some(h), curvature: Some(-curvature[p]) }
            })
            .collect();
        Ok(Self { dim, radius, radii, directions, origin: data[0], points: data[1..].to_vec() })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn origin(&self) -> &PointData {
        &self.origin
    }

    /// Subtract the affine part `u(0) + Du(0)·y`.
    pub fn normalized(&self) -> Self {
        let o = self.origin;
        let mut out = self.clone();
        let positions = self.iter_positions().collect::<Vec<_>>();
        for (p, y) in out.points.iter_mut().zip(positions) {
            p.value -= o.value + (0..self.dim).map(|a| o.gradient[a] * y[a]).sum::<f64>();
            for a in 0..self.dim {
                p.gradient[a] -= o.gradient[a];
            }
        }
        out.origin.value = 0.0;
        out.origin.gradient = [0.0; 2];
        out
    }

    fn iter_positions(&self) -> impl Iterator<Item = [f64; 2]> + '_ {
        self.radii.iter().flat_map(move |&r| self.directions.iter().map(move |d| [r * d[0], r * d[1]]))
    }

    /// Polar quadrature weight `r^{n-1} Δr Δσ` of each stored point.
    fn weights(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        let dr = self.radius / self.radii.len() as f64;
        let dsigma = sphere_area(self.dim) / self.directions.len() as f64;
        let n = self.dim as i32;
        self.radii.iter().flat_map(move |&r| self.directions.iter().map(move |_| (r, r.powi(n - 1) * dr * dsigma)))
    }

    fn hessian(&self, p: &PointData) -> Result<[[f64; 2]; 2], BoundsError> {
        p.hessian.ok_or(BoundsError::MissingData("hessian"))
    }

    fn min_eigenvalue(&self, h: &[[f64; 2]; 2]) -> f64 {
        match self.dim {
            1 => h[0][0],
            _ => {
                let mean = 0.5 * (h[0][0] + h[1][1]);
                let dev = (0.25 * (h[0][0] - h[1][1]).powi(2) + h[0][1] * h[1][0]).sqrt();
                mean - dev
            }
        }
    }

    /// `u^{ij} v_i v_j`.
    fn inverse_form(&self, h: &[[f64; 2]; 2], v: [f64; 2]) -> f64 {
        match self.dim {
            1 => v[0] * v[0] / h[0][0],
            _ => {
                let det = h[0][0] * h[1][1] - h[0][1] * h[1][0];
                (h[1][1] * v[0] * v[0] - 2.0 * h[0][1] * v[0] * v[1] + h[0][0] * v[1] * v[1]) / det
            }
        }
    }
}

/// The five conditions at grid resolution, with the measured quantities.
#[derive(Debug, Clone, PartialEq)]
pub struct SpecialReport {
    pub strictly_convex: bool,
    /// Gauge condition on the data as given.
    pub gauge_as_given: bool,
    /// Gauge condition after subtracting the affine part at the origin.
    pub gauge: bool,
    pub gradient_bounded: bool,
    pub radial_floor: bool,
    pub energy_bounded: bool,
    pub min_eigenvalue: f64,
    pub max_gradient: f64,
    /// Smallest `u_r` over samples outside the unit ball, if any.
    pub min_radial_derivative: Option<f64>,
    /// `(∫|u^{ij}_{ij}|ⁿ)^{1/n}` over the sampled ball.
    pub curvature_energy: f64,
}

impl SpecialReport {
    pub fn certified(&self) -> bool {
        self.strictly_convex && self.gauge && self.gradient_bounded && self.radial_floor && self.energy_bounded
    }
}

fn gauge_holds(p: &PointData, dim: usize) -> bool {
    p.value.abs() <= GAUGE_TOLERANCE && (0..dim).map(|a| p.gradient[a].powi(2)).sum::<f64>().sqrt() <= GAUGE_TOLERANCE
}

/// Check the special-convexity conditions on sampled data.
pub fn special_check(samples: &PolarSamples, params: &SpecialConvexParams) -> Result<SpecialReport, BoundsError> {
    if samples.dim != params.n {
        return Err(BoundsError::DimensionMismatch { samples: samples.dim, params: params.n });
    }
    let dim = samples.dim;
    let gauge_as_given = gauge_holds(&samples.origin, dim);
    let s = samples.normalized();

    let mut min_eigenvalue = s.min_eigenvalue(&s.hessian(&s.origin)?);
    let mut max_gradient: f64 = 0.0;
    let mut min_radial: Option<f64> = None;
    let mut energy = 0.0;
    for ((p, y), (r, w)) in s.points.iter().zip(s.iter_positions()).zip(s.weights()) {
        min_eigenvalue = min_eigenvalue.min(s.min_eigenvalue(&s.hessian(p)?));
        max_gradient = max_gradient.max((0..dim).map(|a| p.gradient[a].powi(2)).sum::<f64>().sqrt());
        if r > 1.0 {
            let ur = (0..dim).map(|a| p.gradient[a] * y[a]).sum::<f64>() / r;
            min_radial = Some(min_radial.map_or(ur, |m| m.min(ur)));
        }
        let curvature = p.curvature.ok_or(BoundsError::MissingData("curvature"))?;
        energy += curvature.abs().powi(dim as i32) * w;
    }
    let curvature_energy = energy.powf(1.0 / dim as f64);
    Ok(SpecialReport {
        strictly_convex: min_eigenvalue > CONVEXITY_THRESHOLD,
        gauge_as_given,
        gauge: gauge_holds(&s.origin, dim),
        gradient_bounded: max_gradient < params.m,
        radial_floor: min_radial.is_none_or(|m| m > params.c0),
        energy_bounded: curvature_energy < params.ce,
        min_eigenvalue,
        max_gradient,
        min_radial_derivative: min_radial,
        curvature_energy,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InequalityReport {
    pub lhs: f64,
    pub rhs: f64,
    pub ok: bool,
}

/// Both sides of
/// `-∫ n(u - R)³ + (C_E/4)‖f²‖_{L^{n/(n-1)}} ≥ ∫ u^{ij}u_i u_j f`
/// over `{u < R}`, with `f = (u - R)²` there, after gauge normalization.
pub fn inequality_check(samples: &PolarSamples, level: f64, ce: f64) -> Result<InequalityReport, BoundsError> {
    let s = samples.normalized();
    let dim = s.dim;
    if !(level > 0.0) {
        return Err(BoundsError::EmptyLevelSet(level));
    }
    let n_dirs = s.directions.len();
    let outer = &s.points[s.points.len() - n_dirs..];
    if outer.iter().any(|p| p.value < level) {
        return Err(BoundsError::LevelSetTruncated(level));
    }
    let (mut cubic, mut rhs, mut norm_acc, mut sup) = (0.0, 0.0, 0.0, 0.0f64);
    let mut inside = 0usize;
    for (p, (_, w)) in s.points.iter().zip(s.weights()) {
        if p.value >= level {
            continue;
        }
        inside += 1;
        let f = (p.value - level).powi(2);
        cubic += (p.value - level).powi(3) * w;
        rhs += s.inverse_form(&s.hessian(p)?, p.gradient) * f * w;
        sup = sup.max(f * f);
        if dim > 1 {
            norm_acc += (f * f).powf(dim as f64 / (dim as f64 - 1.0)) * w;
        }
    }
    if inside == 0 {
        return Err(BoundsError::EmptyLevelSet(level));
    }
    let norm = if dim == 1 { sup } else { norm_acc.powf((dim as f64 - 1.0) / dim as f64) };
    let lhs = -(dim as f64) * cubic + 0.25 * ce * norm;
    Ok(InequalityReport { lhs, rhs, ok: lhs >= rhs })
}
