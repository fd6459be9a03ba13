//! Monte-Carlo moment checks of the stochastic steps.

mod common;

use bridgesolve_core::harness::{brownian_path, fine_reference_sde};
use bridgesolve_core::models::bridge_marginal_coeffs;
use bridgesolve_core::noise::{NoiseStream, Purpose};
use bridgesolve_core::solvers::sde_step_order1;
use common::*;

/// Sample mean and variance per coordinate.
fn moments(rows: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
    let n = rows.len() as f64;
    let d = rows[0].len();
    let mean: Vec<f64> = (0..d).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n).collect();
    let var = (0..d)
        .map(|j| rows.iter().map(|r| (r[j] - mean[j]).powi(2)).sum::<f64>() / (n - 1.0))
        .collect();
    (mean, var)
}

fn within_3se(mean: &[f64], var: &[f64], n: usize, want_mean: &[f64], want_var: &[f64]) {
    for j in 0..mean.len() {
        let se_m = (want_var[j] / n as f64).sqrt();
        let se_v = want_var[j] * (2.0 / (n as f64 - 1.0)).sqrt();
        assert!(
            (mean[j] - want_mean[j]).abs() <= 3.0 * se_m,
            "mean {j}: {} vs {}",
            mean[j],
            want_mean[j]
        );
        assert!(
            (var[j] - want_var[j]).abs() <= 3.0 * se_v,
            "var {j}: {} vs {}",
            var[j],
            want_var[j]
        );
    }
}

#[test]
fn sde_step_moments_match_transition() {
    let p = problem(vp());
    let den = constant();
    let d = den.inner().value().to_vec();
    let (s, t) = (0.7, 0.3);
    let x_s = [0.5, -1.0];
    let cs = p.coeffs(s).unwrap();
    let ct = p.coeffs(t).unwrap();
    let ratio = (2.0 * (cs.lambda - ct.lambda)).exp();
    let want_mean: Vec<f64> = (0..2)
        .map(|j| ratio * ct.alpha / cs.alpha * x_s[j] + ct.alpha * (1.0 - ratio) * d[j])
        .collect();
    let want_var = vec![ct.sigma * ct.sigma * (1.0 - ratio); 2];
    let n = 100_000;
    let mut stream = NoiseStream::new(21, Purpose::Path, 0);
    let mut z = [0.0; 2];
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            stream.step_normals(&mut z);
            sde_step_order1(&p, &x_s, s, t, &den, &z).unwrap()
        })
        .collect();
    let (m, v) = moments(&rows);
    within_3se(&m, &v, n, &want_mean, &want_var);
}

#[test]
fn first_step_from_terminal_time_has_bridge_marginal_law() {
    for sched in [vp(), ve()] {
        let p = problem(sched);
        let den = constant();
        let d = den.inner().value().to_vec();
        let t = 0.4;
        let (a, b, c2) = bridge_marginal_coeffs(&p, t).unwrap();
        let want_mean: Vec<f64> = (0..2).map(|j| a * X_END[j] + b * d[j]).collect();
        let n = 100_000;
        let mut stream = NoiseStream::new(8, Purpose::Path, 0);
        let mut z = [0.0; 2];
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| {
                stream.step_normals(&mut z);
                sde_step_order1(&p, &X_END, 1.0, t, &den, &z).unwrap()
            })
            .collect();
        let (m, v) = moments(&rows);
        within_3se(&m, &v, n, &want_mean, &[c2, c2]);
    }
}

#[test]
fn fine_sde_endpoint_variance_matches_marginal() {
    // With a constant denoiser, the bridge SDE started at x_T has the
    // Gaussian marginal (a x_T + b D, c^2) at every t.
    let p = problem(ve());
    let den = constant();
    let d = den.inner().value().to_vec();
    let (s, t) = (p.terminal_time() - 1e-3, 0.3);
    let substeps = 1000;
    let dt = (s - t) / substeps as f64;
    let (a, b, c2) = bridge_marginal_coeffs(&p, t).unwrap();
    let (as_, bs, c2s) = bridge_marginal_coeffs(&p, s).unwrap();
    let n = 4000;
    let mut start = NoiseStream::new(3, Purpose::Prior, 0);
    let rows: Vec<Vec<f64>> = (0..n as u64)
        .map(|i| {
            let x_s: Vec<f64> = (0..2)
                .map(|j| as_ * X_END[j] + bs * d[j] + c2s.sqrt() * start.normal())
                .collect();
            let path = brownian_path(&mut NoiseStream::new(3, Purpose::Reference, i), substeps, dt, 2);
            fine_reference_sde(&p, &x_s, s, t, &den, substeps, &path).unwrap()
        })
        .collect();
    let (m, v) = moments(&rows);
    let want_mean: Vec<f64> = (0..2).map(|j| a * X_END[j] + b * d[j]).collect();
    within_3se(&m, &v, n, &want_mean, &[c2, c2]);
}
