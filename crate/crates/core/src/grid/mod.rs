//! Uniform periodic grids on `[-L, L)ⁿ`, sampled scalar fields, Fourier
//! collocation derivatives and periodic trapezoid quadrature.
//!
//! The default half-width is `L = 1`, i.e. the fundamental domain of the
//! lattice `2ℤⁿ`. Other half-widths only appear for blow-up rescalings.
//! Storage is row-major: axis 0 is the slow index.

mod fft;
pub mod snapshot;

use std::fmt;

use rustfft::num_complex::Complex64;
use thiserror::Error;

pub use snapshot::{read_snapshot, write_snapshot, SnapshotHeader};

#[derive(Debug, Error, PartialEq)]
pub enum GridError {
    #[error("dimension must be 1 or 2, got {0}")]
    Dimension(usize),
    #[error("points per axis must be a power of two and at least 8, got {0}")]
    PointsPerAxis(usize),
    #[error("half-width must be positive and finite, got {0}")]
    HalfWidth(f64),
    #[error("expected {expected} values, got {got}")]
    Length { expected: usize, got: usize },
    #[error("non-finite value {value} at node {node:?}")]
    NonFinite { node: Vec<usize>, value: f64 },
    #[error("invalid derivative multi-index {0:?}")]
    MultiIndex(Vec<usize>),
    #[error("fields live on different grids")]
    Mismatch,
}

/// Uniform periodic grid with `N` points per axis on `[-L, L)ⁿ`, `n ∈ {1, 2}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeriodicGrid {
    dim: usize,
    points: usize,
    half_width: f64,
}

impl PeriodicGrid {
    /// Grid on the fundamental domain `[-1, 1)ⁿ`.
    pub fn new(dim: usize, points: usize) -> Result<Self, GridError> {
        Self::with_half_width(dim, points, 1.0)
    }

    pub fn with_half_width(dim: usize, points: usize, half_width: f64) -> Result<Self, GridError> {
        if !(1..=2).contains(&dim) {
            return Err(GridError::Dimension(dim));
        }
        if points < 8 || !points.is_power_of_two() {
            return Err(GridError::PointsPerAxis(points));
        }
        if !(half_width.is_finite() && half_width > 0.0) {
            return Err(GridError::HalfWidth(half_width));
        }
        Ok(Self { dim, points, half_width })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn points_per_axis(&self) -> usize {
        self.points
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    /// Grid spacing `h = 2L/N`.
    pub fn spacing(&self) -> f64 {
        2.0 * self.half_width / self.points as f64
    }

    /// Total number of nodes, `Nⁿ`.
    pub fn len(&self) -> usize {
        self.points.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Volume of one period cell, `(2L)ⁿ`.
    pub fn volume(&self) -> f64 {
        (2.0 * self.half_width).powi(self.dim as i32)
    }

    /// Quadrature weight of a single node, `hⁿ`.
    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(self.dim as i32)
    }

    pub fn coordinate(&self, i: usize) -> f64 {
        -self.half_width + i as f64 * self.spacing()
    }

    /// Per-axis indices of a flat index; unused axes are zero.
    pub fn multi_index(&self, idx: usize) -> [usize; 2] {
        match self.dim {
            1 => [idx, 0],
            _ => [idx / self.points, idx % self.points],
        }
    }

    pub fn flat_index(&self, multi: [usize; 2]) -> usize {
        match self.dim {
            1 => multi[0],
            _ => multi[0] * self.points + multi[1],
        }
    }

    /// Coordinates of node `idx`; only the first `dim` entries are meaningful.
    pub fn point(&self, idx: usize) -> [f64; 2] {
        let m = self.multi_index(idx);
        match self.dim {
            1 => [self.coordinate(m[0]), 0.0],
            _ => [self.coordinate(m[0]), self.coordinate(m[1])],
        }
    }

    /// Signed angular wavenumber `πk/L` of DFT index `i`.
    pub fn wavenumber(&self, i: usize) -> f64 {
        let n = self.points as isize;
        let k = if i as isize <= n / 2 { i as isize } else { i as isize - n };
        std::f64::consts::PI * k as f64 / self.half_width
    }

    /// Highest resolved angular wavenumber `π/h`.
    pub fn max_wavenumber(&self) -> f64 {
        std::f64::consts::PI / self.spacing()
    }

    pub(crate) fn is_nyquist(&self, i: usize) -> bool {
        i == self.points / 2
    }

    /// Locate the node with the given coordinates, if it is one.
    pub fn node_at(&self, x: &[f64]) -> Option<usize> {
        if x.len() != self.dim {
            return None;
        }
        let h = self.spacing();
        let mut multi = [0usize; 2];
        for (axis, &xa) in x.iter().enumerate() {
            let s = (xa + self.half_width) / h;
            let r = s.round();
            if (s - r).abs() > 1e-9 || r < 0.0 || r >= self.points as f64 {
                return None;
            }
            multi[axis] = r as usize;
        }
        Some(self.flat_index(multi))
    }
}

impl fmt::Display for PeriodicGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}^{} on [-{}, {})", self.points, self.dim, self.half_width, self.half_width)
    }
}

/// Real field sampled on the nodes of a [`PeriodicGrid`].
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    grid: PeriodicGrid,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn from_values(grid: PeriodicGrid, values: Vec<f64>) -> Result<Self, GridError> {
        if values.len() != grid.len() {
            return Err(GridError::Length { expected: grid.len(), got: values.len() });
        }
        if let Some((idx, &v)) = values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            let m = grid.multi_index(idx);
            return Err(GridError::NonFinite { node: m[..grid.dim()].to_vec(), value: v });
        }
        Ok(Self { grid, values })
    }

    /// Unchecked constructor for values produced internally from finite data.
    pub(crate) fn from_raw(grid: PeriodicGrid, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        Self { grid, values }
    }

    pub fn constant(grid: PeriodicGrid, value: f64) -> Self {
        Self { grid, values: vec![value; grid.len()] }
    }

    pub fn zeros(grid: PeriodicGrid) -> Self {
        Self::constant(grid, 0.0)
    }

    /// Evaluate `func` at every node. Rejects the first non-finite value.
    pub fn sample<F>(grid: PeriodicGrid, func: F) -> Result<Self, GridError>
    where
        F: Fn(&[f64]) -> f64,
    {
        let values = (0..grid.len())
            .map(|idx| {
                let p = grid.point(idx);
                func(&p[..grid.dim()])
            })
            .collect();
        Self::from_values(grid, values)
    }

    pub fn grid(&self) -> &PeriodicGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Periodic trapezoid rule, `hⁿ Σ values`.
    pub fn integrate(&self) -> f64 {
        self.grid.cell_volume() * self.values.iter().sum::<f64>()
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// `‖F‖_{L²}` with the trapezoid rule.
    pub fn l2_norm(&self) -> f64 {
        (self.grid.cell_volume() * self.values.iter().map(|v| v * v).sum::<f64>()).sqrt()
    }

    pub fn map(&self, func: impl Fn(f64) -> f64) -> Self {
        Self::from_raw(self.grid, self.values.iter().map(|&v| func(v)).collect())
    }

    pub fn zip_map(&self, other: &Self, func: impl Fn(f64, f64) -> f64) -> Result<Self, GridError> {
        if self.grid != other.grid {
            return Err(GridError::Mismatch);
        }
        let values = self.values.iter().zip(&other.values).map(|(&a, &b)| func(a, b)).collect();
        Ok(Self::from_raw(self.grid, values))
    }

    pub fn scaled(&self, factor: f64) -> Self {
        self.map(|v| factor * v)
    }

    /// Shift so the mean over the period cell is zero.
    pub fn remove_mean(&mut self) {
        let mean = self.mean();
        self.values.iter_mut().for_each(|v| *v -= mean);
    }

    pub fn spectrum(&self) -> Spectrum {
        Spectrum::of(self)
    }

    /// Fourier collocation derivative. `axes` lists the differentiated axis
    /// once per order, e.g. `[0, 0, 1, 1]` is `∂⁴/∂x²∂y²`.
    pub fn partial_derivative(&self, axes: &[usize]) -> Result<Self, GridError> {
        self.spectrum().derivative(axes)
    }

    /// Value of the trigonometric interpolant at an arbitrary point.
    pub fn interpolate(&self, x: &[f64]) -> f64 {
        self.spectrum().evaluate(x, &[])
    }
}

/// Per-axis derivative orders from an axis list.
pub(crate) fn derivative_orders(grid: &PeriodicGrid, axes: &[usize]) -> Result<[u32; 2], GridError> {
    if axes.is_empty() || axes.len() > 4 || axes.iter().any(|&a| a >= grid.dim()) {
        return Err(GridError::MultiIndex(axes.to_vec()));
    }
    let mut orders = [0u32; 2];
    for &a in axes {
        orders[a] += 1;
    }
    Ok(orders)
}

/// Relative size below which a DFT coefficient is treated as rounding noise.
pub const SPECTRAL_NOISE_FLOOR: f64 = 1e-15;

/// DFT coefficients of a field (unnormalized forward transform).
#[derive(Debug, Clone)]
pub struct Spectrum {
    grid: PeriodicGrid,
    coeffs: Vec<Complex64>,
}

impl Spectrum {
    /// Forward transform with coefficients below the rounding floor cleared.
    pub fn of(field: &ScalarField) -> Self {
        let mut coeffs: Vec<Complex64> = field.values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        fft::forward(&field.grid, &mut coeffs);
        // fourth-order operators multiply rounding noise by |k|⁴; clear it at the source
        let floor = SPECTRAL_NOISE_FLOOR * coeffs.iter().fold(0.0f64, |m, c| m.max(c.norm()));
        for c in coeffs.iter_mut() {
            if c.norm() < floor {
                *c = Complex64::new(0.0, 0.0);
            }
        }
        Self { grid: field.grid, coeffs }
    }

    pub fn grid(&self) -> &PeriodicGrid {
        &self.grid
    }

    /// Multiplier of `∂^orders` at DFT index `i` along one axis.
    fn axis_multiplier(&self, i: usize, order: u32) -> Complex64 {
        if order == 0 {
            return Complex64::new(1.0, 0.0);
        }
        if order % 2 == 1 && self.grid.is_nyquist(i) {
            return Complex64::new(0.0, 0.0);
        }
        Complex64::new(0.0, self.grid.wavenumber(i)).powu(order)
    }

    /// Apply a per-mode multiplier given the per-axis DFT indices.
    pub fn map_modes(&self, mult: impl Fn([usize; 2]) -> Complex64) -> Self {
        let coeffs = self.coeffs.iter().enumerate().map(|(idx, &c)| c * mult(self.grid.multi_index(idx))).collect();
        Self { grid: self.grid, coeffs }
    }

    /// Multiplier of a derivative with the given per-axis orders.
    pub fn derivative_multiplier(&self, orders: [u32; 2]) -> impl Fn([usize; 2]) -> Complex64 + '_ {
        move |m: [usize; 2]| self.axis_multiplier(m[0], orders[0]) * self.axis_multiplier(m[1], orders[1])
    }

    pub fn derivative(&self, axes: &[usize]) -> Result<ScalarField, GridError> {
        let orders = derivative_orders(&self.grid, axes)?;
        Ok(self.map_modes(self.derivative_multiplier(orders)).to_field())
    }

    /// Pointwise sum of two spectra.
    pub fn add(&self, other: &Self) -> Self {
        let coeffs = self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a + b).collect();
        Self { grid: self.grid, coeffs }
    }

    /// Inverse transform, keeping the real part.
    pub fn to_field(&self) -> ScalarField {
        let mut buf = self.coeffs.clone();
        fft::inverse(&self.grid, &mut buf);
        ScalarField::from_raw(self.grid, buf.into_iter().map(|c| c.re).collect())
    }

    /// Field whose node `x` carries the interpolant's value at `x + shift`.
    pub fn shifted(&self, shift: &[f64]) -> ScalarField {
        let grid = self.grid;
        self.map_modes(|m| {
            let mut factor = Complex64::new(1.0, 0.0);
            for (axis, &s) in shift.iter().enumerate().take(grid.dim()) {
                let k = grid.wavenumber(m[axis]);
                factor *= if grid.is_nyquist(m[axis]) { Complex64::new((k * s).cos(), 0.0) } else { Complex64::from_polar(1.0, k * s) };
            }
            factor
        })
        .to_field()
    }

    /// Evaluate the (differentiated) trigonometric interpolant at `x`.
    pub fn evaluate(&self, x: &[f64], axes: &[usize]) -> f64 {
        let mut p = [0.0; 2];
        p[..self.grid.dim()].copy_from_slice(&x[..self.grid.dim()]);
        self.evaluate_points(&[p], axes)[0]
    }

    /// [`Spectrum::evaluate`] at many points; `O(N^dim)` per point with no
    /// trigonometric calls in the inner loop.
    pub fn evaluate_points(&self, points: &[[f64; 2]], axes: &[usize]) -> Vec<f64> {
        let grid = self.grid;
        let n = grid.points_per_axis();
        let mut orders = [0u32; 2];
        for &a in axes {
            orders[a] += 1;
        }
        let scale = 1.0 / grid.len() as f64;
        let factors = |axis: usize, x: f64| -> Vec<Complex64> {
            let order = orders[axis];
            (0..n)
                .map(|i| {
                    let k = grid.wavenumber(i);
                    let phase = k * (x + grid.half_width());
                    if grid.is_nyquist(i) {
                        // real cosine mode
                        let d = match order % 4 {
                            0 => phase.cos(),
                            1 => -phase.sin(),
                            2 => -phase.cos(),
                            _ => phase.sin(),
                        };
                        Complex64::new(d * k.powi(order as i32), 0.0)
                    } else {
                        Complex64::new(0.0, k).powu(order) * Complex64::from_polar(1.0, phase)
                    }
                })
                .collect()
        };
        points
            .iter()
            .map(|p| {
                let e0 = factors(0, p[0]);
                let sum = match grid.dim() {
                    1 => self.coeffs.iter().zip(&e0).map(|(c, e)| (c * e).re).sum::<f64>(),
                    _ => {
                        let e1 = factors(1, p[1]);
                        (0..n)
                            .map(|i| {
                                let row = &self.coeffs[i * n..(i + 1) * n];
                                let inner: Complex64 = row.iter().zip(&e1).map(|(c, e)| c * e).sum();
                                (inner * e0[i]).re
                            })
                            .sum()
                    }
                };
                sum * scale
            })
            .collect()
    }
}
