use calabi_core::flow::*;
use calabi_core::geometry::abreu_scalar_curvature;
use calabi_core::potential::mabuchi_distance;
use calabi_core::{PeriodicGrid, ScalarField, SymplecticPotential};
use proptest::prelude::*;
use std::f64::consts::PI;

fn cosine(dim: usize, n: usize, a: f64) -> SymplecticPotential {
    let g = PeriodicGrid::new(dim, n).unwrap();
    SymplecticPotential::new(ScalarField::sample(g, |x| a * (PI * x[0]).cos()).unwrap())
}

fn final_potential(initial: SymplecticPotential, config: &FlowConfig) -> SymplecticPotential {
    let (state, _) = run(initial, config).unwrap();
    assert_eq!(state.status, FlowStatus::Completed);
    state.pot
}

#[test]
fn rk4_is_fourth_order() {
    let pot = cosine(1, 8, 0.05);
    let limit = rk4_stability_limit(&pot).unwrap();
    let t_end = 400.0 * limit;
    let solve = |dt: f64| {
        let config = FlowConfig { scheme: Scheme::Rk4, t_end, dt: Some(dt), monitor_every: 1_000_000, ..FlowConfig::default() };
        final_potential(pot.clone(), &config)
    };
    let coarse = solve(0.25 * limit);
    let mid = solve(0.125 * limit);
    let fine = solve(0.0625 * limit);
    let ratio = mabuchi_distance(&coarse, &mid).unwrap() / mabuchi_distance(&mid, &fine).unwrap();
    assert!((ratio - 16.0).abs() < 0.2 * 16.0, "ratio {ratio}");
}

#[test]
fn implicit_and_rk4_agree() {
    let pot = cosine(1, 16, 0.05);
    let t_end = 1e-3;
    let implicit = final_potential(pot.clone(), &FlowConfig { t_end, dt: Some(t_end / 256.0), ..FlowConfig::default() });
    let rk4 = final_potential(pot, &FlowConfig { scheme: Scheme::Rk4, t_end, ..FlowConfig::default() });
    // backward Euler is first order: error ≈ (Δt/2)·|∂²f/∂t²|·t
    let d = mabuchi_distance(&implicit, &rk4).unwrap();
    assert!(d < 1e-5, "{d}");
}

#[test]
fn calabi_energy_decreases_along_cosine_flow() {
    let config = FlowConfig { t_end: 0.05, ..FlowConfig::default() };
    let (state, log) = run(cosine(1, 64, 0.05), &config).unwrap();
    assert_eq!(state.status, FlowStatus::Completed);
    let ca = log.calabi();
    for w in ca.windows(2) {
        assert!(w[1] <= w[0] * (1.0 + 1e-8), "{} after {}", w[1], w[0]);
    }
    assert!(ca[ca.len() - 1] < 1e-2 * ca[0]);
}

#[test]
fn rescaled_curvature_scales_inversely() {
    let lambda = 4.0;
    for (dim, x0) in [(1, vec![0.0]), (1, vec![0.3]), (2, vec![0.0, 0.0]), (2, vec![-0.5, 1.25])] {
        let g = PeriodicGrid::new(dim, 64).unwrap();
        let pot = SymplecticPotential::new(
            ScalarField::sample(g, |x| 0.05 * (PI * x[0]).cos() + if dim == 2 { 0.03 * (PI * x[1]).sin() } else { 0.0 }).unwrap(),
        );
        let s = abreu_scalar_curvature(&pot).unwrap();
        let wide = rescale(&pot, lambda, &x0).unwrap();
        let s_wide = abreu_scalar_curvature(&wide).unwrap();
        let spec = s.spectrum();
        let mut worst: f64 = 0.0;
        for idx in 0..wide.grid().len() {
            let p = wide.grid().point(idx);
            let back: Vec<f64> = (0..dim).map(|a| (p[a] - x0[a]) / lambda).collect();
            worst = worst.max((s_wide.values()[idx] - spec.evaluate(&back, &[]) / lambda).abs());
        }
        assert!(worst < 1e-8, "dim {dim}, x0 {x0:?}: {worst}");
    }
}

#[test]
fn rescale_rejects_contraction() {
    assert_eq!(rescale(&cosine(1, 8, 0.05), 0.5, &[0.0]), Err(FlowError::Lambda(0.5)));
    assert_eq!(rescale(&cosine(1, 8, 0.05), 2.0, &[0.0, 0.0]), Err(FlowError::Center { got: 2, dim: 1 }));
}

#[test]
fn two_dimensional_flow_contracts_distance() {
    let g = PeriodicGrid::new(2, 16).unwrap();
    let a = SymplecticPotential::new(ScalarField::sample(g, |x| 0.03 * (PI * x[0]).cos() * (PI * x[1]).cos()).unwrap());
    let b = SymplecticPotential::new(ScalarField::sample(g, |x| 0.02 * (PI * (x[0] + x[1])).sin()).unwrap());
    let config = FlowConfig { t_end: 5e-3, monitor_every: 5, ..FlowConfig::default() };
    let d0 = mabuchi_distance(&a, &b).unwrap();
    let traj_a = trajectory(a, &config);
    let traj_b = trajectory(b, &config);
    assert_eq!(traj_a.len(), traj_b.len());
    for (pa, pb) in traj_a.iter().zip(&traj_b) {
        assert!(mabuchi_distance(pa, pb).unwrap() <= d0 + 1e-6);
    }
}

fn trajectory(initial: SymplecticPotential, config: &FlowConfig) -> Vec<SymplecticPotential> {
    let mut out = Vec::new();
    run_observed(initial, config, |state, _| out.push(state.pot.clone())).unwrap();
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn flows_do_not_separate(a in proptest::array::uniform3(-0.03f64..0.03), b in proptest::array::uniform3(-0.03f64..0.03)) {
        let g = PeriodicGrid::new(1, 32).unwrap();
        let make = |c: [f64; 3]| SymplecticPotential::new(ScalarField::sample(g, |x| {
            c[0] * (PI * x[0]).cos() + c[1] * (PI * x[0]).sin() + c[2] * (2.0 * PI * x[0]).cos() / 4.0
        }).unwrap());
        let (pa, pb) = (make(a), make(b));
        let d0 = mabuchi_distance(&pa, &pb).unwrap();
        let config = FlowConfig { t_end: 0.01, ..FlowConfig::default() };
        let ta = trajectory(pa, &config);
        let tb = trajectory(pb, &config);
        for (x, y) in ta.iter().zip(&tb) {
            prop_assert!(mabuchi_distance(x, y).unwrap() <= d0 + 1e-6);
        }
    }

    #[test]
    fn mean_stays_zero(c in proptest::array::uniform2(-0.04f64..0.04)) {
        let g = PeriodicGrid::new(1, 16).unwrap();
        let pot = SymplecticPotential::new(ScalarField::sample(g, |x| c[0] * (PI * x[0]).cos() + c[1] * (PI * x[0]).sin() + 0.7).unwrap());
        let (state, _) = run(pot, &FlowConfig { t_end: 1e-3, ..FlowConfig::default() }).unwrap();
        prop_assert!(state.pot.periodic_part().mean().abs() < 1e-14);
    }
}
