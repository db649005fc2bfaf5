//! Closed-form 1×1 and 2×2 symmetric matrix helpers.
//!
//! A symmetric matrix is stored as `[xx, xy, yy]`; in dimension one only
//! `xx` is meaningful.

pub(crate) type Sym = [f64; 3];

/// Index into `[xx, xy, yy]` for entry `(i, j)`.
pub(crate) fn slot(i: usize, j: usize) -> usize {
    i + j
}

pub(crate) fn entry(m: &Sym, i: usize, j: usize) -> f64 {
    m[slot(i, j)]
}

pub(crate) fn eigenvalues(m: &Sym, dim: usize) -> (f64, f64) {
    if dim == 1 {
        return (m[0], m[0]);
    }
    let mean = 0.5 * (m[0] + m[2]);
    let half_diff = 0.5 * (m[0] - m[2]);
    let r = half_diff.hypot(m[1]);
    (mean - r, mean + r)
}

pub(crate) fn min_eigenvalue(m: &Sym, dim: usize) -> f64 {
    eigenvalues(m, dim).0
}

pub(crate) fn max_eigenvalue(m: &Sym, dim: usize) -> f64 {
    eigenvalues(m, dim).1
}

pub(crate) fn det(m: &Sym, dim: usize) -> f64 {
    match dim {
        1 => m[0],
        _ => m[0] * m[2] - m[1] * m[1],
    }
}

pub(crate) fn inverse(m: &Sym, dim: usize) -> Sym {
    match dim {
        1 => [1.0 / m[0], 0.0, 0.0],
        _ => {
            let d = det(m, dim);
            [m[2] / d, -m[1] / d, m[0] / d]
        }
    }
}

/// `A·B·A` for symmetric `A`, `B`.
pub(crate) fn sandwich(a: &Sym, b: &Sym, dim: usize) -> Sym {
    if dim == 1 {
        return [a[0] * b[0] * a[0], 0.0, 0.0];
    }
    // (AB)
    let ab00 = a[0] * b[0] + a[1] * b[1];
    let ab01 = a[0] * b[1] + a[1] * b[2];
    let ab10 = a[1] * b[0] + a[2] * b[1];
    let ab11 = a[1] * b[1] + a[2] * b[2];
    [ab00 * a[0] + ab01 * a[1], ab00 * a[1] + ab01 * a[2], ab10 * a[1] + ab11 * a[2]]
}

/// Upper-triangle index pairs `(i, j)`, `i ≤ j`.
pub(crate) fn pairs(dim: usize) -> &'static [(usize, usize)] {
    match dim {
        1 => &[(0, 0)],
        _ => &[(0, 0), (0, 1), (1, 1)],
    }
}
