//! Convergence orders and exactness of the solver steps.

mod common;

use bridgesolve_core::harness::{
    convergence_study, fine_reference_ode, fit_log_slope, post_sde_state, run_phase, strong_order_study, StudySetup,
};
use bridgesolve_core::noise::{NoiseStream, Purpose};
use bridgesolve_core::solvers::{
    final_euler_step, ode_step_k1, ode_step_k2, sample, sde_step_order1, RunRecord, SolverConfig, SolverKind, StepKind,
};
use bridgesolve_core::{make_grid, GridScheme};
use common::*;

const COUNTS: [usize; 5] = [8, 16, 32, 64, 128];

#[test]
fn global_slopes_on_gaussian_bridge() {
    for sched in [vp(), ve()] {
        let p = problem(sched);
        let den = gaussian();
        let setup = StudySetup::default();
        let x = post_sde_state(&p, setup.start_time, &den, 0).unwrap();
        let slope = |kind, order| {
            convergence_study(&p, kind, order, &den, &COUNTS, &x, &setup)
                .unwrap()
                .fitted_slope
        };
        let k2 = slope(SolverKind::DbmSolver, 2);
        let k1 = slope(SolverKind::DbmSolver, 1);
        let heun = slope(SolverKind::HybridHeun, 2);
        assert!((1.7..=2.4).contains(&k2), "{:?} k2 {k2}", sched.kind);
        assert!((0.9..=1.3).contains(&k1), "{:?} k1 {k1}", sched.kind);
        assert!((1.7..=2.4).contains(&heun), "{:?} heun {heun}", sched.kind);
    }
}

#[test]
fn constant_denoiser_study_is_flagged_exact() {
    let p = problem(vp());
    let den = constant();
    let setup = StudySetup::default();
    let x = [0.2, 0.9];
    for order in [1, 2] {
        let r = convergence_study(&p, SolverKind::DbmSolver, order, &den, &COUNTS, &x, &setup).unwrap();
        assert!(r.exact, "{:?}", r.errors);
        assert!(r.errors.iter().all(|e| *e <= 1e-8));
    }
}

#[test]
fn k2_local_error_is_third_order() {
    let p = problem(vp());
    let den = gaussian();
    let s = 0.5;
    let x = post_sde_state(&p, s, &den, 3).unwrap();
    let hs: Vec<f64> = (0..5).map(|k| 0.2 / 2f64.powi(k)).collect();
    let errs: Vec<f64> = hs
        .iter()
        .map(|h| {
            let fine = fine_reference_ode(&p, &x, s, s - h, &den, 4000).unwrap();
            l2(&ode_step_k2(&p, &x, s, s - h, 0.5, &den).unwrap(), &fine)
        })
        .collect();
    let inv: Vec<f64> = hs.iter().map(|h| 1.0 / h).collect();
    let (slope, _) = fit_log_slope(&inv, &errs);
    assert!((2.6..=3.4).contains(&slope), "{slope} {errs:?}");
}

#[test]
fn rk4_reference_richardson_ratio() {
    let p = problem(vp());
    let den = gaussian();
    let (s, t) = (0.9, 0.05);
    let x = post_sde_state(&p, s, &den, 1).unwrap();
    let truth = fine_reference_ode(&p, &x, s, t, &den, 20_000).unwrap();
    let e = |n| l2(&fine_reference_ode(&p, &x, s, t, &den, n).unwrap(), &truth);
    let ratio = e(20) / e(40);
    assert!((12.0..=20.0).contains(&ratio), "{ratio}");
}

#[test]
fn euler_maruyama_strong_order() {
    for sched in [vp(), ve()] {
        let p = problem(sched);
        let den = gaussian();
        let x = post_sde_state(&p, 0.9, &den, 0).unwrap();
        let r = strong_order_study(&p, &den, &x, 0.9, 0.1, &COUNTS, 128 * 32, 200, 0).unwrap();
        // Additive noise: strong order one.
        assert!(
            (0.75..=1.3).contains(&r.fitted_slope),
            "{:?} {}",
            sched.kind,
            r.fitted_slope
        );
    }
}

#[test]
fn exactness_with_constant_denoiser() {
    for sched in [vp(), ve()] {
        let p = problem(sched);
        let den = constant();
        let x = [0.4, -0.2];
        for (s, t) in [(0.9, 0.5), (0.6, 1e-3), (0.99, 0.2)] {
            let fine = fine_reference_ode(&p, &x, s, t, &den, 100_000).unwrap();
            assert!(l2(&ode_step_k1(&p, &x, s, t, &den).unwrap(), &fine) <= 1e-8);
            assert!(l2(&ode_step_k2(&p, &x, s, t, 0.5, &den).unwrap(), &fine) <= 1e-8);
        }
    }
}

#[test]
fn odes3_and_k1_converge_together_with_constant_denoiser() {
    for (sched, scheme) in [(ve(), GridScheme::UniformT), (vp(), GridScheme::UniformLambda)] {
        let p = problem(sched);
        let den = constant();
        let grid = make_grid(p.schedule(), 512, scheme).unwrap();
        let n = grid.n_steps();
        let x_start = post_sde_state(&p, grid.t(n - 1), &den, 5).unwrap();
        let ode_times: Vec<f64> = (1..n).rev().map(|i| grid.t(i)).collect();
        let run = |kind| {
            let x = run_phase(&p, kind, 1, 0.5, &x_start, &ode_times, &den).unwrap();
            final_euler_step(&p, &x, grid.t(1), &den).unwrap()
        };
        let gap = l2(&run(SolverKind::Odes3), &run(SolverKind::DbmSolver));
        assert!(gap <= 1e-4, "{:?} {gap}", sched.kind);
    }
}

#[test]
fn final_euler_error_scales_quadratically() {
    for sched in [vp(), ve()] {
        let mut sched = sched;
        sched.t_min = Some(1e-9);
        let p = problem(sched);
        let den = gaussian();
        let x0 = post_sde_state(&p, 0.9, &den, 2).unwrap();
        let errs: Vec<f64> = [1e-2, 1e-3, 1e-4]
            .iter()
            .map(|&t1| {
                let x1 = fine_reference_ode(&p, &x0, 0.9, t1, &den, 20_000).unwrap();
                let truth = fine_reference_ode(&p, &x1, t1, 1e-9, &den, 20_000).unwrap();
                l2(&final_euler_step(&p, &x1, t1, &den).unwrap(), &truth)
            })
            .collect();
        let ns = [1e2, 1e3, 1e4];
        let (slope, _) = fit_log_slope(&ns, &errs);
        assert!(slope >= 1.8, "{:?} {slope} {errs:?}", sched.kind);
    }
}

fn step_by_step(p: &bridgesolve_core::BridgeProblem, order: usize, seed: u64) -> Vec<Vec<f64>> {
    // Each step runs through fresh denoiser and grid instances.
    let grid = make_grid(p.schedule(), 8, GridScheme::UniformT).unwrap();
    let t = |i: usize| grid.t(i);
    let n = grid.n_steps();
    let mut z = vec![0.0; p.dim()];
    NoiseStream::new(seed, Purpose::Path, 0).step_normals(&mut z);
    let mut x = sde_step_order1(p, p.x_end(), t(n), t(n - 1), &gaussian(), &z).unwrap();
    let mut out = vec![x.clone()];
    for i in (2..n).rev() {
        x = match order {
            1 => ode_step_k1(p, &x, t(i), t(i - 1), &gaussian()).unwrap(),
            _ => ode_step_k2(p, &x, t(i), t(i - 1), 0.5, &gaussian()).unwrap(),
        };
        out.push(x.clone());
    }
    out.push(final_euler_step(p, &x, t(1), &gaussian()).unwrap());
    out
}

#[test]
fn steps_are_markov() {
    let p = problem(ve());
    for order in [1, 2] {
        let grid = make_grid(p.schedule(), 8, GridScheme::UniformT).unwrap();
        let cfg = SolverConfig::new(SolverKind::DbmSolver, grid)
            .with_order(order)
            .with_seed(4);
        let rec: RunRecord = sample(&p, &cfg, &gaussian(), &mut NoiseStream::new(4, Purpose::Path, 0), 0).unwrap();
        let manual = step_by_step(&p, order, 4);
        let recorded: Vec<Vec<f64>> = rec.steps.iter().map(|s| s.x_after.clone()).collect();
        assert_eq!(recorded, manual);
        assert_eq!(rec.steps[0].step_kind, StepKind::InitSde);
        assert_eq!(rec.steps.last().unwrap().step_kind, StepKind::FinalEuler);
    }
}
