use std::cell::RefCell;
use std::collections::HashMap;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use super::PeriodicGrid;

type Plans = (Arc<dyn Fft<f64>>, Arc<dyn Fft<f64>>);

thread_local! {
    static PLANS: RefCell<HashMap<usize, Plans>> = RefCell::new(HashMap::new());
}

fn plans(n: usize) -> Plans {
    PLANS.with(|cache| {
        cache
            .borrow_mut()
            .entry(n)
            .or_insert_with(|| {
                let mut planner = FftPlanner::new();
                (planner.plan_fft_forward(n), planner.plan_fft_inverse(n))
            })
            .clone()
    })
}

fn transpose(n: usize, buf: &mut [Complex64]) {
    for i in 0..n {
        for j in (i + 1)..n {
            buf.swap(i * n + j, j * n + i);
        }
    }
}

fn transform(grid: &PeriodicGrid, buf: &mut [Complex64], inverse: bool) {
    let n = grid.points_per_axis();
    let (fwd, inv) = plans(n);
    let plan = if inverse { inv } else { fwd };
    // rows are contiguous; rustfft processes the buffer in chunks of n
    plan.process(buf);
    if grid.dim() == 2 {
        transpose(n, buf);
        plan.process(buf);
        transpose(n, buf);
    }
}

pub(super) fn forward(grid: &PeriodicGrid, buf: &mut [Complex64]) {
    transform(grid, buf, false);
}

pub(super) fn inverse(grid: &PeriodicGrid, buf: &mut [Complex64]) {
    transform(grid, buf, true);
    let scale = 1.0 / grid.len() as f64;
    buf.iter_mut().for_each(|c| *c *= scale);
}
