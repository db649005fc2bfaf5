//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any failure.

use std::f64::consts::PI;
use std::process::ExitCode;
use std::time::Instant;

use calabi_core::bounds::{
    constants, dyadic_bracket, dyadic_search, inequality_check, log_spaced, special_check, PolarSamples, SpecialConvexParams,
};
use calabi_core::flow::{rescale, run, run_observed, FlowConfig, FlowStatus};
use calabi_core::geometry::{abreu_scalar_curvature, energies};
use calabi_core::potential::{inverse_legendre_transform, legendre_transform, mabuchi_distance};
use calabi_core::weak::{approx_potential, choose_schedule, ApproxSchedule, WeakPotential};
use calabi_core::{KahlerPotential, PeriodicGrid, ScalarField, SymplecticPotential};
use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestRng, TestRunner};

type Outcome = (bool, String);
type Criterion = (&'static str, fn() -> Outcome);

fn runner(cases: u32) -> TestRunner {
    let config = Config { failure_persistence: None, ..Config::with_cases(cases) };
    TestRunner::new_with_rng(config, TestRng::deterministic_rng(RngAlgorithm::ChaCha))
}

fn property(cases: u32, strategy: impl Strategy<Value = [f64; 4]>, check: impl Fn([f64; 4]) -> Result<(), String>) -> Outcome {
    match runner(cases).run(&strategy, |c| check(c).map_err(TestCaseError::fail)) {
        Ok(()) => (true, format!("{cases} generated cases")),
        Err(e) => (false, e.to_string()),
    }
}

/// Mabuchi energy of `u_16` on the quartic at N = 128 against `16 - 8 ln 3`.
fn quartic_mabuchi() -> Outcome {
    let limit = 16.0 - 8.0 * 3f64.ln();
    let start = Instant::now();
    let weak = WeakPotential::quartic_example(2, 128).unwrap();
    let schedule = choose_schedule(&weak, 16);
    let u = approx_potential(weak.periodic_part(), 16, &schedule).unwrap();
    let e = energies(&u).unwrap().mabuchi_energy;
    let secs = start.elapsed().as_secs_f64();
    // leading-order elimination in m^{-1/2}, reported for context
    let at = |m: usize, n: usize| {
        let w = WeakPotential::quartic_example(2, n).unwrap();
        let s = ApproxSchedule::from_fn(m, |k| k.max(2)).unwrap();
        energies(&approx_potential(w.periodic_part(), m, &s).unwrap()).unwrap().mabuchi_energy
    };
    let (e64, e256) = (at(64, 256), at(256, 1024));
    let (d1, d2) = (e64 - e, e256 - e64);
    let c = (d1 - 2.0 * d2) / (-3.0 / 64.0 + 6.0 / 256.0);
    let b = -16.0 * (d2 + 3.0 * c / 256.0);
    let extrapolated = e256 - b / 16.0 - c / 256.0;
    (
        (e - limit).abs() < 1e-2 && secs < 60.0,
        format!(
            "E(u_16) = {e:.6}, target {limit:.6}, gap {:.3e} (tol 1e-2), {secs:.1}s; m^(-1/2) extrapolation from m = 16, 64, 256 gives {extrapolated:.5}",
            (e - limit).abs()
        ),
    )
}

fn flat_fixed_point() -> Outcome {
    let g = PeriodicGrid::new(2, 64).unwrap();
    let config = FlowConfig { t_end: 1.0, monitor_every: 1000, ..FlowConfig::default() };
    let (state, log) = run(SymplecticPotential::flat(g), &config).unwrap();
    let sup = state.pot.periodic_part().max_abs();
    let worst = log
        .rows
        .iter()
        .flat_map(|r| {
            let e = &r.report;
            [e.calabi_energy, e.mabuchi_energy, e.total_energy, e.max_rm].map(f64::abs)
        })
        .fold(0.0, f64::max);
    (
        state.status == FlowStatus::Completed && sup < 1e-10 && worst < 1e-10,
        format!("{:?} after {} steps, ‖f‖∞ = {sup:.2e}, largest energy entry {worst:.2e}", state.status, state.step_count),
    )
}

fn dissipation() -> Outcome {
    let calabi_monotone = |f: &dyn Fn(f64) -> f64| -> Result<(), String> {
        let g = PeriodicGrid::new(1, 64).unwrap();
        let pot = SymplecticPotential::new(ScalarField::sample(g, |x| f(x[0])).unwrap());
        let (state, log) = run(pot, &FlowConfig { t_end: 0.05, ..FlowConfig::default() }).map_err(|e| e.to_string())?;
        if state.status != FlowStatus::Completed {
            return Err(format!("{:?}", state.status));
        }
        for (i, w) in log.calabi().windows(2).enumerate() {
            if w[1] > w[0] * (1.0 + 1e-8) {
                return Err(format!("row {}: {} > {}", i + 1, w[1], w[0]));
            }
        }
        Ok(())
    };
    if let Err(e) = calabi_monotone(&|x| 0.05 * (PI * x).cos()) {
        return (false, format!("cosine: {e}"));
    }
    let (ok, detail) = property(6, proptest::array::uniform4(-0.02f64..0.02), |c| {
        calabi_monotone(&|x| {
            c[0] * (PI * x).cos() + c[1] * (PI * x).sin() + c[2] * (2.0 * PI * x).cos() / 4.0 + c[3] * (3.0 * PI * x).sin() / 9.0
        })
    });
    (ok, format!("0.05cos(πx) and {detail}"))
}

fn smoothing_rate() -> Outcome {
    let weak = WeakPotential::quartic_example(2, 64).unwrap();
    let schedule = ApproxSchedule::from_fn(8, |m| m.max(2)).unwrap();
    let results: Vec<(usize, Result<f64, String>)> = std::thread::scope(|scope| {
        let handles: Vec<_> = [1usize, 2, 4, 8]
            .into_iter()
            .map(|m| {
                let (weak, schedule) = (&weak, &schedule);
                scope.spawn(move || {
                    let u = approx_potential(weak.periodic_part(), m, schedule).map_err(|e| e.to_string())?;
                    let (state, log) = run(u, &FlowConfig::default()).map_err(|e| e.to_string())?;
                    if state.status != FlowStatus::Completed {
                        return Err(format!("{:?}", state.status));
                    }
                    let product: Vec<f64> = log.rows.iter().map(|r| r.t * r.report.calabi_energy).collect();
                    let fifth = product[4];
                    Ok(product.iter().fold(0.0f64, |a, &b| a.max(b)) / fifth)
                })
            })
            .collect();
        [1usize, 2, 4, 8].into_iter().zip(handles).map(|(m, h)| (m, h.join().unwrap())).collect()
    });
    let mut ok = true;
    let mut parts = Vec::new();
    for (m, r) in results {
        match r {
            Ok(ratio) => {
                ok &= ratio <= 3.0;
                parts.push(format!("m={m}: max/fifth = {ratio:.3}"));
            }
            Err(e) => {
                ok = false;
                parts.push(format!("m={m}: {e}"));
            }
        }
    }
    (ok, parts.join(", "))
}

fn legendre_involution() -> Outcome {
    let error = |n: usize| {
        let g = PeriodicGrid::new(1, n).unwrap();
        let phi = ScalarField::sample(g, |x| 0.05 * (PI * x[0]).cos()).unwrap();
        let u = legendre_transform(&KahlerPotential::new(phi.clone())).unwrap();
        let back = inverse_legendre_transform(&u).unwrap();
        back.periodic_part().zip_map(&phi, |a, b| a - b).unwrap().max_abs()
    };
    let (e128, e256) = (error(128), error(256));
    (e128 < 1e-6 && e256 < e128, format!("sup error {e128:.2e} at N=128, {e256:.2e} at N=256"))
}

fn scaling_covariance() -> Outcome {
    // S = u''''/u''² - 2u'''²/u''³ for u'' = 1 - aπ²cos(πx)
    let a = 0.05;
    let exact_s = |x: f64| {
        let d2 = 1.0 - a * PI * PI * (PI * x).cos();
        let d3 = a * PI.powi(3) * (PI * x).sin();
        let d4 = a * PI.powi(4) * (PI * x).cos();
        d4 / (d2 * d2) - 2.0 * d3 * d3 / d2.powi(3)
    };
    let lambda = 4.0;
    let g = PeriodicGrid::new(1, 64).unwrap();
    let pot = SymplecticPotential::new(ScalarField::sample(g, |x| a * (PI * x[0]).cos()).unwrap());
    let mut worst: f64 = 0.0;
    for x0 in [0.0, 0.3] {
        let wide = rescale(&pot, lambda, &[x0]).unwrap();
        let s = abreu_scalar_curvature(&wide).unwrap();
        for idx in 0..wide.grid().len() {
            let x = wide.grid().point(idx)[0];
            worst = worst.max((s.values()[idx] - exact_s((x - x0) / lambda) / lambda).abs());
        }
    }
    (worst < 1e-8, format!("sup |S(ũ) - ¼S(u)((x - x₀)/4)| = {worst:.2e} over x₀ ∈ {{0, 0.3}}"))
}

fn dyadic_search_bound() -> Outcome {
    let x = log_spaced(200.0, 20_000);
    let f: Vec<f64> = x.iter().map(|v| v * v).collect();
    let report = match dyadic_search(&x, &f, 1.1, 1.0, 2) {
        Ok(r) => r,
        Err(e) => return (false, e.to_string()),
    };
    // (x⁴ - 1)/4 = x³ at the root of x⁴ - 4x³ - 1
    let (mut lo, mut hi) = (4.0f64, 5.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid.powi(4) - 4.0 * mid.powi(3) - 1.0 > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let root = 0.5 * (lo + hi);
    let ceiling = (5.0f64 + 1.0).exp2();
    match report.x0 {
        Some(x0) => (
            x0 <= ceiling && report.ceiling == ceiling && (x0 - root).abs() < 2e-3,
            format!("x₀ = {x0:.5} (closed form {root:.5}), ceiling {}", report.ceiling),
        ),
        None => (false, "no x₀ found".to_string()),
    }
}

fn ledger() -> Outcome {
    let l = constants(&SpecialConvexParams::new(1.0, 1.0, 1.0, 2).unwrap());
    let (m, c0, ce) = (1.0f64, 1.0f64, 1.0f64);
    let area = 2.0 * PI;
    let c1 = PI * m.powi(2).max((1.0 + 1.0 / c0).powi(2));
    let c2 = PI * (1.0 + 1.0 / c0).powi(2) * (1.0 + ce / 4.0);
    let c3 = 4.0 * 5.0 * 8.0 / 2.0 + 1.0;
    let bracket = (m * 9.0 * 8.0 * c3 / (4.0 * (8f64.sqrt() - 1.0).powi(2))).floor();
    let r0 = 2.0 * m * (bracket + 1.0).exp2();
    let checks = [
        ("sphere_area", l.sphere_area == area),
        ("C1", l.c1 == c1),
        ("C2", l.c2 == c2),
        ("C3", l.c3 == c3),
        ("bracket", l.bracket == bracket && dyadic_bracket(m, c3, 2) == bracket),
        ("R0", l.r0 == r0),
        ("max_radius", l.max_radius == 1.0 + r0 / c0),
        ("lambda", l.lambda == 2.0 + r0 / c0),
        ("R0/2M power of two", (l.r0 / (2.0 * m)).log2().fract() == 0.0 && (l.r0 / (2.0 * m)).log2().exp2() == l.r0 / (2.0 * m)),
    ];
    let failed: Vec<&str> = checks.iter().filter(|c| !c.1).map(|c| c.0).collect();
    (
        failed.is_empty(),
        if failed.is_empty() {
            format!("C1 = 4π, C2 = 5π, C3 = {}, bracket = {}, R0 = 2^{}", l.c3, l.bracket, (l.r0).log2())
        } else {
            format!("mismatched: {failed:?}")
        },
    )
}

fn contraction() -> Outcome {
    let trajectory = |pot: SymplecticPotential| {
        let mut out = Vec::new();
        let config = FlowConfig { t_end: 0.01, monitor_every: 5, ..FlowConfig::default() };
        run_observed(pot, &config, |s, _| out.push(s.pot.clone())).unwrap();
        out
    };
    let g = PeriodicGrid::new(1, 32).unwrap();
    let make = |c: [f64; 2]| {
        SymplecticPotential::new(ScalarField::sample(g, |x| c[0] * (PI * x[0]).cos() + c[1] * (2.0 * PI * x[0]).sin() / 4.0).unwrap())
    };
    property(12, proptest::array::uniform4(-0.04f64..0.04), |c| {
        let (a, b) = (make([c[0], c[1]]), make([c[2], c[3]]));
        let d0 = mabuchi_distance(&a, &b).unwrap();
        for (i, (x, y)) in trajectory(a).iter().zip(&trajectory(b)).enumerate() {
            let d = mabuchi_distance(x, y).unwrap();
            if d > d0 + 1e-6 {
                return Err(format!("row {i}: {d} > {d0} + 1e-6"));
            }
        }
        Ok(())
    })
}

fn inequality() -> Outcome {
    let g = PeriodicGrid::new(2, 16).unwrap();
    property(8, proptest::array::uniform4(-0.015f64..0.015), |c| {
        let pot = SymplecticPotential::new(
            ScalarField::sample(g, |p| {
                c[0] * (PI * p[0]).cos()
                    + c[1] * (PI * p[1]).sin()
                    + c[2] * (PI * (p[0] - p[1])).cos()
                    + c[3] * (PI * p[0]).sin() * (PI * p[1]).cos()
            })
            .unwrap(),
        );
        for radii in [32, 64, 128] {
            let s = PolarSamples::from_potential(&pot, &[0.0, 0.0], 2.5, radii, 64).map_err(|e| e.to_string())?;
            let probe = special_check(&s, &SpecialConvexParams::new(100.0, 1e-3, 1e6, 2).unwrap()).map_err(|e| e.to_string())?;
            let params = SpecialConvexParams::new(
                probe.max_gradient * 1.01,
                probe.min_radial_derivative.unwrap_or(1.0) * 0.99,
                probe.curvature_energy * 1.01 + 1e-12,
                2,
            )
            .map_err(|e| e.to_string())?;
            if !special_check(&s, &params).map_err(|e| e.to_string())?.certified() {
                return Err("input not certified".into());
            }
            for level in [0.5, 1.0, 2.0] {
                let r = inequality_check(&s, level, params.ce).map_err(|e| e.to_string())?;
                if !r.ok {
                    return Err(format!("radii {radii}, R = {level}: lhs {} < rhs {}", r.lhs, r.rhs));
                }
            }
        }
        Ok(())
    })
}

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        ("quartic Mabuchi energy", quartic_mabuchi),
        ("flat fixed point", flat_fixed_point),
        ("Calabi energy dissipation", dissipation),
        ("smoothing rate t·Ca", smoothing_rate),
        ("Legendre involution", legendre_involution),
        ("scaling covariance", scaling_covariance),
        ("dyadic search verifier", dyadic_search_bound),
        ("constants ledger", ledger),
        ("distance contraction", contraction),
        ("integral inequality", inequality),
    ];
    let mut failures = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let (ok, detail) = check();
        if !ok {
            failures += 1;
        }
        println!(
            "criterion {:>2} {:<28} {} ({detail}) [{:.1}s]",
            i + 1,
            name,
            if ok { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64()
        );
    }
    println!("acceptance: {} passed, {failures} failed", criteria.len() - failures);
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
