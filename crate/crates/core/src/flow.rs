//! Time integration of the Calabi flow `∂u/∂t = -S(u)`.
//!
//! Only the periodic part `f` evolves; the quadratic part is fixed. Two
//! schemes are provided:
//!
//! - [`Scheme::Implicit`] (default): backward Euler. Each step minimizes
//!   `Φ(g) = Σ -log det(D²g + qI) + Σ (g - f)²/(2Δt)` over nodes by Newton's
//!   method with a preconditioned conjugate-gradient inner solve. The discrete
//!   `S` is exactly the gradient of the discrete Mabuchi energy, so the scheme
//!   dissipates both the Mabuchi and the Calabi energy and is unconditionally
//!   stable. `Δt = σh²/10`.
//! - [`Scheme::Rk4`]: classical four-stage Runge–Kutta with
//!   `Δt = σ·Δt_stab`, where `Δt_stab = 2.785 h⁴ / (c n² π⁴)` is the linear
//!   stability limit and `c = max λ_max(D²u)⁻²` at the initial data.
//!
//! The mean-zero gauge is re-imposed after every step.

use std::io::{self, Write};

use thiserror::Error;

use crate::csv_real;
use crate::geometry::{self, double_divergence, energies_of, hessian_from_matrices, scalar_curvature_of};
use crate::geometry::{CurvatureReport, GeometryError, HessianField};
use crate::grid::{GridError, PeriodicGrid, ScalarField};
use crate::linalg::{self, Sym};
use crate::potential::{mabuchi_distance, total_hessians, SymplecticPotential};

/// Right end of the RK4 stability interval on the negative real axis.
const RK4_STABILITY: f64 = 2.785;
const MAX_HALVINGS: usize = 20;
const MAX_NEWTON: usize = 60;
const MAX_CG: usize = 400;
const MAX_BACKTRACK: usize = 40;
/// Newton stops when `‖g - f + Δt·S(g)‖_rms` is below this times `max(1, ‖f‖∞)`.
const NEWTON_TOL: f64 = 1e-13;
/// A Newton residual that stops shrinking below this multiple of the tolerance is accepted.
const ROUNDING_SLACK: f64 = 1e3;
const CALABI_SLACK: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Scheme {
    #[default]
    Implicit,
    Rk4,
}

impl Scheme {
    pub fn name(self) -> &'static str {
        match self {
            Scheme::Implicit => "implicit",
            Scheme::Rk4 => "rk4",
        }
    }
}

impl std::str::FromStr for Scheme {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "implicit" => Ok(Scheme::Implicit),
            "rk4" => Ok(Scheme::Rk4),
            other => Err(format!("unknown scheme `{other}` (expected `implicit` or `rk4`)")),
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum FlowError {
    #[error("invalid flow setting `{field}`: {reason}")]
    Config { field: &'static str, reason: String },
    #[error("rescaling factor must be at least 1, got {0}")]
    Lambda(f64),
    #[error("rescaling centre has {got} coordinates but the grid has dimension {dim}")]
    Center { got: usize, dim: usize },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Grid(#[from] GridError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowConfig {
    pub scheme: Scheme,
    /// Safety factor `σ ∈ (0, 1]` applied to the scheme's base step.
    pub sigma: f64,
    pub t_end: f64,
    pub monitor_every: usize,
    /// Threshold `λ` of the monitored curvature bounds.
    pub lambda: f64,
    /// Retry a step at half the size if the Calabi energy went up.
    pub adaptive: bool,
    /// Explicit time step; overrides the `σ`-scaled default.
    pub dt: Option<f64>,
}

impl Default for FlowConfig {
    fn default() -> Self {
        Self { scheme: Scheme::Implicit, sigma: 0.5, t_end: 0.02, monitor_every: 10, lambda: 1.0, adaptive: false, dt: None }
    }
}

impl FlowConfig {
    pub fn validate(&self) -> Result<(), FlowError> {
        let bad = |field, reason: &str| Err(FlowError::Config { field, reason: reason.to_string() });
        if !(self.sigma > 0.0 && self.sigma <= 1.0) {
            return bad("sigma", "must lie in (0, 1]");
        }
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            return bad("t_end", "must be positive and finite");
        }
        if self.monitor_every == 0 {
            return bad("monitor_every", "must be at least 1");
        }
        if !(self.lambda > 0.0) {
            return bad("lambda", "must be positive");
        }
        if let Some(dt) = self.dt {
            if !(dt > 0.0 && dt.is_finite()) {
                return bad("dt", "must be positive and finite");
            }
        }
        Ok(())
    }

    /// Step size used for `pot` under this configuration.
    pub fn time_step(&self, pot: &SymplecticPotential) -> Result<f64, FlowError> {
        if let Some(dt) = self.dt {
            return Ok(dt);
        }
        let h = pot.grid().spacing();
        Ok(match self.scheme {
            Scheme::Implicit => self.sigma * h * h / 10.0,
            Scheme::Rk4 => self.sigma * rk4_stability_limit(pot)?,
        })
    }
}

/// Linear stability limit of RK4 for the flow linearized at `pot`.
pub fn rk4_stability_limit(pot: &SymplecticPotential) -> Result<f64, GeometryError> {
    let hess = geometry::hessian(pot)?;
    let grid = pot.grid();
    let k2 = grid.dim() as f64 * grid.max_wavenumber().powi(2);
    Ok(RK4_STABILITY / (hess.max_inverse_eigenvalue_sq() * k2 * k2))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FlowStatus {
    Running,
    Completed,
    /// Convexity lost or curvature beyond grid resolution at time `t`.
    Blowup {
        t: f64,
    },
    /// Step halving exhausted at time `t`.
    Stiff {
        t: f64,
    },
}

impl FlowStatus {
    pub fn is_terminal(&self) -> bool {
        !matches!(self, FlowStatus::Running)
    }
}

impl std::fmt::Display for FlowStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            FlowStatus::Running => write!(f, "running"),
            FlowStatus::Completed => write!(f, "completed"),
            FlowStatus::Blowup { t } => write!(f, "blowup at t = {t}"),
            FlowStatus::Stiff { t } => write!(f, "stiff at t = {t}"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct FlowState {
    pub t: f64,
    pub pot: SymplecticPotential,
    pub dt: f64,
    pub step_count: usize,
    pub status: FlowStatus,
    /// Last accepted increment per unit time, used to predict the next step.
    trend: Option<ScalarField>,
    /// Step size chosen at start; halved steps grow back towards it.
    nominal_dt: f64,
}

impl FlowState {
    pub fn new(pot: SymplecticPotential, config: &FlowConfig) -> Result<Self, FlowError> {
        config.validate()?;
        geometry::hessian(&pot)?;
        let dt = config.time_step(&pot)?;
        Ok(Self { t: 0.0, pot: pot.normalized(), dt, step_count: 0, status: FlowStatus::Running, trend: None, nominal_dt: dt })
    }
}

fn curvature(f: &ScalarField, quad: f64) -> Result<(HessianField, ScalarField), GeometryError> {
    let hess = hessian_from_matrices(*f.grid(), total_hessians(f, quad))?;
    let s = scalar_curvature_of(&hess);
    Ok((hess, s))
}

/// `f ↦ f - Δt·S(u)`, one forward Euler substep.
pub fn explicit_euler_substep(pot: &SymplecticPotential, dt: f64) -> Result<SymplecticPotential, GeometryError> {
    let s = geometry::abreu_scalar_curvature(pot)?;
    let values = pot.periodic_part().values().iter().zip(s.values()).map(|(f, s)| f - dt * s).collect();
    Ok(pot.with_periodic_part(ScalarField::from_raw(*pot.grid(), values)))
}

fn axpy(x: &ScalarField, a: f64, y: &ScalarField) -> ScalarField {
    let values = x.values().iter().zip(y.values()).map(|(x, y)| x + a * y).collect();
    ScalarField::from_raw(*x.grid(), values)
}

fn rk4_step(f: &ScalarField, quad: f64, dt: f64) -> Result<ScalarField, GeometryError> {
    let (_, k1) = curvature(f, quad)?;
    let (_, k2) = curvature(&axpy(f, -0.5 * dt, &k1), quad)?;
    let (_, k3) = curvature(&axpy(f, -0.5 * dt, &k2), quad)?;
    let (_, k4) = curvature(&axpy(f, -dt, &k3), quad)?;
    let values = (0..f.values().len())
        .map(|i| {
            let incr = k1.values()[i] + 2.0 * k2.values()[i] + 2.0 * k3.values()[i] + k4.values()[i];
            f.values()[i] - dt / 6.0 * incr
        })
        .collect();
    let next = ScalarField::from_raw(*f.grid(), values);
    hessian_from_matrices(*f.grid(), total_hessians(&next, quad))?;
    Ok(next)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn rms(a: &[f64]) -> f64 {
    (dot(a, a) / a.len() as f64).sqrt()
}

/// Newton system of one backward Euler step, linearized at `hess`.
struct NewtonSystem<'a> {
    grid: PeriodicGrid,
    ginv: &'a [Sym],
    dt: f64,
    /// Mean of `(tr G⁻¹ / n)²`, the preconditioner's fourth-order weight.
    weight: f64,
}

impl<'a> NewtonSystem<'a> {
    fn new(hess: &'a HessianField, dt: f64) -> Self {
        let grid = *hess.grid();
        let dim = grid.dim();
        let ginv = hess.inverse_matrices();
        let weight = ginv
            .iter()
            .map(|m| {
                let tr: f64 = (0..dim).map(|i| linalg::entry(m, i, i)).sum();
                (tr / dim as f64).powi(2)
            })
            .sum::<f64>()
            / ginv.len() as f64;
        Self { grid, ginv, dt, weight }
    }

    /// `Σ ∂ₐ∂ᵦ(G⁻¹ D²v G⁻¹)ₐᵦ + v/Δt`
    fn apply(&self, v: &[f64]) -> Vec<f64> {
        let dim = self.grid.dim();
        let spec = ScalarField::from_raw(self.grid, v.to_vec()).spectrum();
        let second: Vec<Vec<f64>> =
            linalg::pairs(dim).iter().map(|&(i, j)| spec.derivative(&[i, j]).expect("valid axes").into_values()).collect();
        let sandwiched: Vec<Sym> = (0..v.len())
            .map(|idx| {
                let mut d2 = [0.0; 3];
                for (c, &(i, j)) in linalg::pairs(dim).iter().enumerate() {
                    d2[linalg::slot(i, j)] = second[c][idx];
                }
                linalg::sandwich(&self.ginv[idx], &d2, dim)
            })
            .collect();
        let div = double_divergence(self.grid, &sandwiched);
        div.values().iter().zip(v).map(|(d, v)| d + v / self.dt).collect()
    }

    /// Inverse of `1/Δt + c̄|k|⁴`.
    fn precondition(&self, r: &[f64]) -> Vec<f64> {
        let grid = self.grid;
        let spec = ScalarField::from_raw(grid, r.to_vec()).spectrum();
        spec.map_modes(|m| {
            let k2: f64 = (0..grid.dim()).map(|a| grid.wavenumber(m[a]).powi(2)).sum();
            (1.0 / (1.0 / self.dt + self.weight * k2 * k2)).into()
        })
        .to_field()
        .into_values()
    }

    /// Approximately solve `H x = b` by preconditioned conjugate gradients.
    fn solve(&self, b: &[f64], rtol: f64) -> Vec<f64> {
        let mut x = vec![0.0; b.len()];
        let mut r = b.to_vec();
        let mut z = self.precondition(&r);
        let mut p = z.clone();
        let mut rz = dot(&r, &z);
        let target = rtol * dot(b, b).sqrt();
        for _ in 0..MAX_CG {
            if dot(&r, &r).sqrt() <= target {
                break;
            }
            let hp = self.apply(&p);
            let curv = dot(&p, &hp);
            if !(curv > 0.0) {
                break;
            }
            let alpha = rz / curv;
            for i in 0..x.len() {
                x[i] += alpha * p[i];
                r[i] -= alpha * hp[i];
            }
            z = self.precondition(&r);
            let rz_next = dot(&r, &z);
            let beta = rz_next / rz;
            rz = rz_next;
            for i in 0..p.len() {
                p[i] = z[i] + beta * p[i];
            }
        }
        x
    }
}

/// State of one Newton iterate `g`.
struct Iterate {
    g: ScalarField,
    hess: HessianField,
    /// Gradient of `Φ`: `S(g) + (g - f)/Δt`.
    grad: Vec<f64>,
    objective: f64,
}

impl Iterate {
    fn at(g: ScalarField, f: &ScalarField, quad: f64, dt: f64) -> Option<Self> {
        let (hess, s) = curvature(&g, quad).ok()?;
        let grad = (0..g.values().len()).map(|i| s.values()[i] + (g.values()[i] - f.values()[i]) / dt).collect();
        let barrier = -hess.log_det().values().iter().sum::<f64>();
        let prox: f64 = g.values().iter().zip(f.values()).map(|(g, f)| (g - f).powi(2)).sum::<f64>() / (2.0 * dt);
        Some(Self { g, hess, grad, objective: barrier + prox })
    }
}

fn implicit_step(f: &ScalarField, quad: f64, dt: f64, trend: Option<&ScalarField>) -> Option<ScalarField> {
    let tol = NEWTON_TOL * f.max_abs().max(1.0);
    let predicted = trend.and_then(|v| Iterate::at(axpy(f, dt, v), f, quad, dt));
    let mut it = match predicted {
        Some(it) => it,
        None => Iterate::at(f.clone(), f, quad, dt)?,
    };
    let initial = rms(&it.grad);
    let mut previous = f64::INFINITY;
    for _ in 0..MAX_NEWTON {
        let gnorm = rms(&it.grad);
        // below ROUNDING_SLACK·tol a stalled residual is the rounding floor of S
        if gnorm * dt <= tol || (gnorm * dt <= ROUNDING_SLACK * tol && gnorm > 0.5 * previous) {
            return Some(it.g);
        }
        previous = gnorm;
        let system = NewtonSystem::new(&it.hess, dt);
        let forcing = (gnorm / initial).min(0.1);
        let rhs: Vec<f64> = it.grad.iter().map(|g| -g).collect();
        let dir = system.solve(&rhs, forcing);
        let slope = dot(&it.grad, &dir);
        let mut alpha = 1.0;
        let mut next = None;
        for _ in 0..MAX_BACKTRACK {
            if let Some(trial) = Iterate::at(axpy_slice(&it.g, alpha, &dir), f, quad, dt) {
                let armijo = trial.objective <= it.objective + 1e-4 * alpha * slope;
                // near the solution Φ stalls at rounding level; the gradient still shrinks
                if armijo || rms(&trial.grad) < 0.9 * gnorm {
                    next = Some(trial);
                    break;
                }
            }
            alpha *= 0.5;
        }
        it = next?;
    }
    None
}

fn axpy_slice(x: &ScalarField, a: f64, y: &[f64]) -> ScalarField {
    let values = x.values().iter().zip(y).map(|(x, y)| x + a * y).collect();
    ScalarField::from_raw(*x.grid(), values)
}

enum Attempt {
    Accepted(ScalarField),
    ConvexityLost,
    Retry,
}

fn attempt(pot: &SymplecticPotential, scheme: Scheme, dt: f64, trend: Option<&ScalarField>) -> Attempt {
    let f = pot.periodic_part();
    match scheme {
        Scheme::Rk4 => match rk4_step(f, pot.quad(), dt) {
            Ok(next) => Attempt::Accepted(next),
            Err(_) => Attempt::ConvexityLost,
        },
        Scheme::Implicit => match implicit_step(f, pot.quad(), dt, trend) {
            Some(next) => Attempt::Accepted(next),
            None => Attempt::Retry,
        },
    }
}

fn calabi_energy(f: &ScalarField, quad: f64) -> Option<f64> {
    curvature(f, quad).ok().map(|(_, s)| s.map(|v| v * v).integrate())
}

fn reached(t: f64, t_end: f64) -> bool {
    t >= t_end - 1e-12 * t_end.max(1.0)
}

/// Advance by one step of size `min(state.dt, t_end - t)`.
pub fn step(state: &FlowState, config: &FlowConfig) -> FlowState {
    if state.status.is_terminal() {
        return state.clone();
    }
    let remaining = config.t_end - state.t;
    let mut dt = if remaining > 0.0 { state.dt.min(remaining) } else { state.dt };
    let ca_before = if config.adaptive { calabi_energy(state.pot.periodic_part(), state.pot.quad()) } else { None };
    let mut halved = false;
    for _ in 0..=MAX_HALVINGS {
        match attempt(&state.pot, config.scheme, dt, state.trend.as_ref()) {
            Attempt::Accepted(mut next) => {
                if let Some(before) = ca_before {
                    let after = calabi_energy(&next, state.pot.quad()).unwrap_or(f64::INFINITY);
                    if after > before * (1.0 + CALABI_SLACK) + 1e-20 {
                        dt *= 0.5;
                        halved = true;
                        continue;
                    }
                }
                next.remove_mean();
                let trend = next.zip_map(state.pot.periodic_part(), |a, b| (a - b) / dt).ok();
                let t = state.t + dt;
                let status = if reached(t, config.t_end) { FlowStatus::Completed } else { FlowStatus::Running };
                return FlowState {
                    t,
                    pot: state.pot.with_periodic_part(next),
                    dt: if halved { dt } else { (2.0 * state.dt).min(state.nominal_dt) },
                    step_count: state.step_count + 1,
                    status,
                    trend,
                    nominal_dt: state.nominal_dt,
                };
            }
            Attempt::ConvexityLost => {
                return FlowState { status: FlowStatus::Blowup { t: state.t }, ..state.clone() };
            }
            Attempt::Retry => {
                dt *= 0.5;
                halved = true;
            }
        }
    }
    FlowState { status: FlowStatus::Stiff { t: state.t }, ..state.clone() }
}

#[derive(Debug, Clone)]
pub struct MonitorRow {
    pub t: f64,
    pub step: usize,
    pub report: CurvatureReport,
    /// `max|Rm| < max(λ, λ/t²)`
    pub bound_ok_t2: bool,
    /// `max|Rm| < max(λ, λ/√(2t))`
    pub bound_ok_sqrt: bool,
    pub distance_to_flat: f64,
}

pub const MONITOR_CSV_HEADER: &str = "t,calabi,mabuchi,total,max_rm,max_grad,bound_t2,bound_sqrt,dist_flat";

impl MonitorRow {
    pub fn new(state: &FlowState, lambda: f64) -> Result<Self, GeometryError> {
        let hess = geometry::hessian(&state.pot)?;
        let report = energies_of(&state.pot, &hess);
        let t = state.t;
        let flat = state.pot.with_periodic_part(ScalarField::zeros(*state.pot.grid()));
        let distance_to_flat = mabuchi_distance(&state.pot, &flat).expect("same shape");
        Ok(Self {
            t,
            step: state.step_count,
            bound_ok_t2: report.max_rm < lambda.max(lambda / (t * t)),
            bound_ok_sqrt: report.max_rm < lambda.max(lambda / (2.0 * t).sqrt()),
            report,
            distance_to_flat,
        })
    }

    pub fn csv_row(&self) -> String {
        let r = &self.report;
        let reals = [self.t, r.calabi_energy, r.mabuchi_energy, r.total_energy, r.max_rm, r.max_grad];
        let mut cols: Vec<String> = reals.iter().map(|&v| csv_real(v)).collect();
        cols.push(self.bound_ok_t2.to_string());
        cols.push(self.bound_ok_sqrt.to_string());
        cols.push(csv_real(self.distance_to_flat));
        cols.join(",")
    }
}

#[derive(Debug, Clone, Default)]
pub struct MonitorLog {
    pub rows: Vec<MonitorRow>,
}

impl MonitorLog {
    pub fn calabi(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.report.calabi_energy).collect()
    }

    pub fn times(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.t).collect()
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "{MONITOR_CSV_HEADER}")?;
        for row in &self.rows {
            writeln!(out, "{}", row.csv_row())?;
        }
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("ascii")
    }
}

/// Flow from `initial` until `t_end` or a terminal state.
pub fn run(initial: SymplecticPotential, config: &FlowConfig) -> Result<(FlowState, MonitorLog), FlowError> {
    run_observed(initial, config, |_, _| {})
}

/// As [`run`], calling `observe` on every logged state.
///
/// Rows are taken at `t = 0`, every `monitor_every` steps, and at the final
/// state. A row whose `max|Rm|` exceeds `1/h²` ends the run as a blowup.
pub fn run_observed(
    initial: SymplecticPotential,
    config: &FlowConfig,
    mut observe: impl FnMut(&FlowState, &MonitorRow),
) -> Result<(FlowState, MonitorLog), FlowError> {
    let mut state = FlowState::new(initial, config)?;
    let resolvable = state.pot.grid().spacing().powi(-2);
    let mut log = MonitorLog::default();
    let mut record = |state: &mut FlowState, log: &mut MonitorLog| {
        let row = MonitorRow::new(state, config.lambda).expect("committed states are convex");
        if row.report.max_rm > resolvable && !state.status.is_terminal() {
            state.status = FlowStatus::Blowup { t: state.t };
        }
        observe(state, &row);
        log.rows.push(row);
    };
    record(&mut state, &mut log);
    while !state.status.is_terminal() {
        let next = step(&state, config);
        let progressed = next.step_count > state.step_count;
        state = next;
        if !progressed {
            break;
        }
        if state.step_count % config.monitor_every == 0 || state.status.is_terminal() {
            record(&mut state, &mut log);
        }
    }
    if log.rows.last().map(|r| r.step) != Some(state.step_count) {
        record(&mut state, &mut log);
    }
    Ok((state, log))
}

/// Time-slice blow-up rescaling `ũ(x) = λ·u((x - x₀)/λ)`.
///
/// The result lives on a grid of the same resolution covering `[-λL, λL)ⁿ`,
/// with periodic part `λ·f((x - x₀)/λ)` (spectral interpolation) and
/// quadratic part `(q/λ)/2·|x - x₀ - λc|²`.
pub fn rescale(pot: &SymplecticPotential, lambda: f64, x0: &[f64]) -> Result<SymplecticPotential, FlowError> {
    if !(lambda >= 1.0 && lambda.is_finite()) {
        return Err(FlowError::Lambda(lambda));
    }
    let grid = pot.grid();
    let dim = grid.dim();
    if x0.len() != dim {
        return Err(FlowError::Center { got: x0.len(), dim });
    }
    let wide = PeriodicGrid::with_half_width(dim, grid.points_per_axis(), lambda * grid.half_width())?;
    let shift: Vec<f64> = x0.iter().map(|x| -x / lambda).collect();
    let moved = if shift.iter().all(|&s| s == 0.0) {
        pot.periodic_part().values().to_vec()
    } else {
        pot.periodic_part().spectrum().shifted(&shift).into_values()
    };
    let f = ScalarField::from_raw(wide, moved.into_iter().map(|v| lambda * v).collect());
    let mut center = [0.0; 2];
    for a in 0..dim {
        center[a] = x0[a] + lambda * pot.center()[a];
    }
    Ok(SymplecticPotential::with_quadratic(f, pot.quad() / lambda, center))
}

/// `sup |Du|` over the nodes of the periodic extension covering `[-2L, 2L]ⁿ`.
pub fn gradient_bound(pot: &SymplecticPotential) -> f64 {
    let grid = pot.grid();
    let dim = grid.dim();
    let period = 2.0 * grid.half_width();
    let reach = 2.0 * grid.half_width() * (1.0 + 1e-12);
    let df: Vec<ScalarField> = (0..dim).map(|a| pot.periodic_part().partial_derivative(&[a]).expect("valid axis")).collect();
    // per axis: (node, extended coordinate) pairs inside [-2L, 2L]
    let axis_nodes: Vec<(usize, f64)> = (0..grid.points_per_axis())
        .flat_map(|i| {
            let x = grid.coordinate(i);
            [-1.0, 0.0, 1.0].into_iter().map(move |s| (i, x + s * period))
        })
        .filter(|&(_, x)| x.abs() <= reach)
        .collect();
    let q = pot.quad();
    let c = pot.center();
    let mut best: f64 = 0.0;
    match dim {
        1 => {
            for &(i, x) in &axis_nodes {
                best = best.max((df[0].values()[i] + q * (x - c[0])).abs());
            }
        }
        _ => {
            for &(i, x) in &axis_nodes {
                for &(j, y) in &axis_nodes {
                    let idx = grid.flat_index([i, j]);
                    let gx = df[0].values()[idx] + q * (x - c[0]);
                    let gy = df[1].values()[idx] + q * (y - c[1]);
                    best = best.max(gx.hypot(gy));
                }
            }
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn cosine(n: usize, a: f64) -> SymplecticPotential {
        let g = PeriodicGrid::new(1, n).unwrap();
        SymplecticPotential::new(ScalarField::sample(g, |x| a * (PI * x[0]).cos()).unwrap())
    }

    fn cosine_s(a: f64, x: f64) -> f64 {
        let w = 1.0 - a * PI * PI * (PI * x).cos();
        let w1 = a * PI.powi(3) * (PI * x).sin();
        let w2 = a * PI.powi(4) * (PI * x).cos();
        -(2.0 * w1 * w1 / w.powi(3) - w2 / (w * w))
    }

    #[test]
    fn config_validation_names_field() {
        let bad = FlowConfig { sigma: 1.5, ..FlowConfig::default() };
        assert!(matches!(bad.validate(), Err(FlowError::Config { field: "sigma", .. })));
        let bad = FlowConfig { monitor_every: 0, ..FlowConfig::default() };
        assert!(matches!(bad.validate(), Err(FlowError::Config { field: "monitor_every", .. })));
        assert!(FlowConfig::default().validate().is_ok());
    }

    #[test]
    fn flat_is_a_fixed_point_of_both_schemes() {
        for scheme in [Scheme::Implicit, Scheme::Rk4] {
            let g = PeriodicGrid::new(2, 16).unwrap();
            let config = FlowConfig { scheme, dt: Some(1e-3), ..FlowConfig::default() };
            let state = FlowState::new(SymplecticPotential::flat(g), &config).unwrap();
            let next = step(&state, &config);
            assert_eq!(next.step_count, 1);
            assert!(next.pot.periodic_part().max_abs() < 1e-12);
        }
    }

    #[test]
    fn euler_substep_matches_oracle() {
        let pot = cosine(64, 0.05);
        let dt = 1e-6;
        let next = explicit_euler_substep(&pot, dt).unwrap();
        for idx in 0..64 {
            let x = pot.grid().point(idx)[0];
            let expect = 0.05 * (PI * x).cos() - dt * cosine_s(0.05, x);
            assert!((next.periodic_part().values()[idx] - expect).abs() < 1e-10);
        }
    }

    #[test]
    fn implicit_step_solves_backward_euler() {
        let pot = cosine(32, 0.05);
        let dt = 1e-4;
        let g = implicit_step(pot.periodic_part(), 1.0, dt, None).unwrap();
        let (_, s) = curvature(&g, 1.0).unwrap();
        for i in 0..32 {
            let resid = g.values()[i] - pot.periodic_part().values()[i] + dt * s.values()[i];
            assert!(resid.abs() < 1e-11, "{resid}");
        }
    }

    #[test]
    fn newton_operator_is_symmetric_positive() {
        let g = PeriodicGrid::new(2, 8).unwrap();
        let f = ScalarField::sample(g, |p| 0.04 * (PI * p[0]).cos() * (PI * p[1]).sin()).unwrap();
        let hess = geometry::hessian(&SymplecticPotential::new(f)).unwrap();
        let sys = NewtonSystem::new(&hess, 1e-3);
        let a: Vec<f64> = (0..64).map(|i| ((i * 7) % 11) as f64 - 5.0).collect();
        let b: Vec<f64> = (0..64).map(|i| ((i * 5) % 13) as f64 - 6.0).collect();
        let (ha, hb) = (sys.apply(&a), sys.apply(&b));
        assert!((dot(&a, &hb) - dot(&b, &ha)).abs() < 1e-9 * dot(&a, &ha).abs());
        assert!(dot(&a, &ha) > 0.0);
    }

    #[test]
    fn mean_is_zero_after_step() {
        let g = PeriodicGrid::new(2, 16).unwrap();
        let f = ScalarField::sample(g, |p| 0.03 * (PI * p[0]).sin() + 0.02 * (PI * (p[0] + p[1])).cos()).unwrap();
        let config = FlowConfig::default();
        let state = FlowState::new(SymplecticPotential::new(f), &config).unwrap();
        let next = step(&state, &config);
        assert!(next.pot.periodic_part().mean().abs() < 1e-16);
    }

    #[test]
    fn last_step_lands_on_t_end() {
        let config = FlowConfig { t_end: 1e-3, dt: Some(3e-4), ..FlowConfig::default() };
        let (state, log) = run(cosine(16, 0.05), &config).unwrap();
        assert_eq!(state.status, FlowStatus::Completed);
        assert_eq!(state.step_count, 4);
        assert!((state.t - 1e-3).abs() < 1e-15);
        assert_eq!(log.rows.len(), 2);
        assert!(log.times().windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn rk4_convexity_loss_is_blowup() {
        // a huge explicit step overshoots out of the convex cone
        let config = FlowConfig { scheme: Scheme::Rk4, dt: Some(1.0), t_end: 2.0, ..FlowConfig::default() };
        let state = FlowState::new(cosine(32, 0.09), &config).unwrap();
        let next = step(&state, &config);
        assert_eq!(next.status, FlowStatus::Blowup { t: 0.0 });
        assert_eq!(next.step_count, 0);
    }

    #[test]
    fn rescale_identity_and_flat() {
        let pot = cosine(32, 0.05);
        assert_eq!(rescale(&pot, 1.0, &[0.0]).unwrap(), pot);
        assert_eq!(rescale(&pot, 0.5, &[0.0]), Err(FlowError::Lambda(0.5)));
        let flat = SymplecticPotential::flat(PeriodicGrid::new(1, 16).unwrap());
        let r = rescale(&flat, 2.0, &[0.0]).unwrap();
        assert_eq!(r.quad(), 0.5);
        assert_eq!(r.grid().half_width(), 2.0);
        // ũ = x²/4 at every node
        for idx in 0..16 {
            let x = r.grid().point(idx)[0];
            assert!((r.value_at(idx) - x * x / 4.0).abs() < 1e-15);
        }
        let hess = geometry::hessian(&r).unwrap();
        assert_eq!(hess.at(3, 0, 0), 0.5);
        assert!(geometry::abreu_scalar_curvature(&r).unwrap().max_abs() < 1e-12);
    }

    #[test]
    fn gradient_bound_examples() {
        let flat = SymplecticPotential::flat(PeriodicGrid::new(2, 16).unwrap());
        assert!((gradient_bound(&flat) - 2.0 * 2f64.sqrt()).abs() < 1e-14);
        // x - 0.05π sin(πx) is increasing, so the sup sits at x = 2
        let b = gradient_bound(&cosine(64, 0.05));
        assert!((b - 2.0).abs() < 1e-12, "{b}");
    }

    #[test]
    fn monitor_csv_layout() {
        let config = FlowConfig { t_end: 1e-4, ..FlowConfig::default() };
        let (_, log) = run(SymplecticPotential::flat(PeriodicGrid::new(1, 8).unwrap()), &config).unwrap();
        let csv = log.to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some(MONITOR_CSV_HEADER));
        let first: Vec<&str> = lines.next().unwrap().split(',').collect();
        assert_eq!(first.len(), 9);
        assert_eq!(first[6], "true");
        assert_eq!(first[7], "true");
    }
}
