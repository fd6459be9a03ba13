//! Fine-step reference integrators.

use crate::bridge::{pf_ode_rhs_at, BridgeProblem, CountedDenoiser, Denoiser, RhsCoeffs};
use crate::error::{domain, Error, Result};
use crate::noise::{NoiseStream, Purpose};
use crate::schedule::{make_grid, GridScheme};
use crate::solvers::drift_eval_time;

use super::metrics::SampleSet;

/// Classical RK4 on the probability-flow ODE, uniform in lambda with
/// `substeps` segments from `s` down to `t`. Evaluations are counted in the
/// denoiser's oracle tally.
pub fn fine_reference_ode<D: Denoiser + ?Sized>(
    problem: &BridgeProblem,
    x_s: &[f64],
    s: f64,
    t: f64,
    denoiser: &CountedDenoiser<D>,
    substeps: usize,
) -> Result<Vec<f64>> {
    if t > s {
        return Err(Error::Ordering {
            what: "fine_reference_ode",
            s,
            t,
        });
    }
    problem.check_dim(x_s)?;
    if s == t {
        return Ok(x_s.to_vec());
    }
    if substeps == 0 {
        return Err(domain("fine_reference_ode", "substeps must be positive"));
    }
    let sched = problem.schedule();
    let (lam_s, lam_t) = (sched.half_log_snr(s)?, sched.half_log_snr(t)?);
    let h = (lam_t - lam_s) / substeps as f64;
    let time_at = |k2: usize| -> Result<f64> {
        // k2 counts half-substeps
        if k2 == 0 {
            Ok(s)
        } else if k2 == 2 * substeps {
            Ok(t)
        } else {
            sched.t_of_lambda(lam_s + 0.5 * h * k2 as f64)
        }
    };
    let field = |x: &[f64], tau: f64| -> Result<Vec<f64>> {
        let c = problem.coeffs(tau)?;
        let d = denoiser.evaluate_oracle(x, &c, problem)?;
        let v = pf_ode_rhs_at(problem, x, &c, &d)?;
        let dlam_dt = -0.5 * c.diffusion_sq / (c.sigma * c.sigma);
        Ok(v.into_iter().map(|vi| vi / dlam_dt).collect())
    };
    let axpy = |x: &[f64], a: f64, k: &[f64]| -> Vec<f64> { x.iter().zip(k).map(|(xi, ki)| xi + a * ki).collect() };

    let mut x = x_s.to_vec();
    let mut t0 = s;
    for i in 0..substeps {
        let tm = time_at(2 * i + 1)?;
        let t1 = time_at(2 * i + 2)?;
        let k1 = field(&x, t0)?;
        let k2 = field(&axpy(&x, 0.5 * h, &k1), tm)?;
        let k3 = field(&axpy(&x, 0.5 * h, &k2), tm)?;
        let k4 = field(&axpy(&x, h, &k3), t1)?;
        for j in 0..x.len() {
            x[j] += h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
        }
        t0 = t1;
    }
    Ok(x)
}

/// Euler-Maruyama on the bridge SDE over `substeps` uniform-in-`t` segments,
/// driven by the given Brownian increments (`noise_path[k]` has variance equal
/// to the length of segment `k`). Evaluations count as oracle calls.
pub fn fine_reference_sde<D: Denoiser + ?Sized>(
    problem: &BridgeProblem,
    x_s: &[f64],
    s: f64,
    t: f64,
    denoiser: &CountedDenoiser<D>,
    substeps: usize,
    noise_path: &[Vec<f64>],
) -> Result<Vec<f64>> {
    if !(t < s) {
        return Err(Error::Ordering {
            what: "fine_reference_sde",
            s,
            t,
        });
    }
    if noise_path.len() != substeps || substeps == 0 {
        return Err(domain(
            "fine_reference_sde",
            format!("need {substeps} increments, got {}", noise_path.len()),
        ));
    }
    problem.check_dim(x_s)?;
    let dt = (t - s) / substeps as f64;
    let mut x = x_s.to_vec();
    let mut drift = vec![0.0; x.len()];
    for (k, dw) in noise_path.iter().enumerate() {
        problem.check_dim(dw)?;
        let tk = s + k as f64 * dt;
        let c = problem.coeffs(drift_eval_time(problem, tk))?;
        let d = denoiser.evaluate_oracle(&x, &c, problem)?;
        RhsCoeffs::new(&c, 1.0).apply(&x, problem.x_end(), &d, &mut drift);
        let g = c.diffusion_sq.sqrt();
        for j in 0..x.len() {
            x[j] += dt * drift[j] + g * dw[j];
        }
    }
    Ok(x)
}

/// Brownian increments for `substeps` segments of length `dt` each.
pub fn brownian_path(stream: &mut NoiseStream, substeps: usize, dt: f64, dim: usize) -> Vec<Vec<f64>> {
    let scale = dt.abs().sqrt();
    (0..substeps)
        .map(|_| {
            let mut z = vec![0.0; dim];
            stream.step_normals(&mut z);
            z.iter_mut().for_each(|v| *v *= scale);
            z
        })
        .collect()
}

/// Sums consecutive groups of `factor` increments.
pub fn coarsen_path(path: &[Vec<f64>], factor: usize) -> Result<Vec<Vec<f64>>> {
    if factor == 0 || !path.len().is_multiple_of(factor) {
        return Err(domain(
            "coarsen_path",
            format!("{} increments cannot be grouped by {factor}", path.len()),
        ));
    }
    Ok(path
        .chunks(factor)
        .map(|grp| {
            let mut sum = vec![0.0; grp[0].len()];
            for inc in grp {
                for (s, v) in sum.iter_mut().zip(inc) {
                    *s += v;
                }
            }
            sum
        })
        .collect())
}

/// Fine Euler-Maruyama sample set from `x_T` to 0, all trajectories advanced
/// in lockstep so per-time constants are computed once per step.
///
/// Trajectory `i` uses the stream `(seed, Reference, first_trajectory + i)`.
pub fn reference_em_samples<D: Denoiser + ?Sized>(
    problem: &BridgeProblem,
    denoiser: &CountedDenoiser<D>,
    n_steps: usize,
    n_samples: usize,
    seed: u64,
    first_trajectory: u64,
) -> Result<SampleSet> {
    let grid = make_grid(problem.schedule(), n_steps, GridScheme::UniformT)?;
    let d = problem.dim();
    let mut xs: Vec<f64> = problem.x_end().iter().copied().cycle().take(n_samples * d).collect();
    let mut ds = vec![0.0; xs.len()];
    let mut z = vec![0.0; d];
    let mut streams: Vec<NoiseStream> = (0..n_samples as u64)
        .map(|i| NoiseStream::new(seed, Purpose::Reference, first_trajectory + i))
        .collect();
    let x_end = problem.x_end();
    for w in grid.times().windows(2) {
        let (s, t) = (w[0], w[1]);
        let c = problem.coeffs(drift_eval_time(problem, s))?;
        denoiser.evaluate_oracle_batch(&xs, &c, problem, &mut ds)?;
        let rc = RhsCoeffs::new(&c, 1.0);
        let dt = t - s;
        let noise = (c.diffusion_sq * (s - t)).sqrt();
        for ((x, dd), stream) in xs.chunks_exact_mut(d).zip(ds.chunks_exact(d)).zip(streams.iter_mut()) {
            stream.step_normals(&mut z);
            for j in 0..d {
                let f = rc.lin * x[j] + rc.end * x_end[j] + rc.pred * dd[j];
                x[j] += dt * f + noise * z[j];
            }
        }
    }
    SampleSet::new(d, xs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::ConstantDenoiser;
    use crate::schedule::ScheduleParams;
    use crate::solvers::{em_step, ode_coeffs};

    fn vp(x_end: Vec<f64>) -> BridgeProblem {
        BridgeProblem::new(ScheduleParams::vp(0.1, 20.0, 1.0), x_end).unwrap()
    }

    #[test]
    fn ode_identity_and_closed_form() {
        let p = vp(vec![0.4]);
        let den = CountedDenoiser::new(ConstantDenoiser::new(vec![-0.7]));
        assert_eq!(fine_reference_ode(&p, &[0.2], 0.5, 0.5, &den, 10).unwrap(), vec![0.2]);
        let (s, t) = (0.8, 0.05);
        let k = ode_coeffs(&p, s, t).unwrap();
        let exact = k.c_s * 0.2 + k.c_end * 0.4 + k.c_int * k.integral(0).unwrap() * -0.7;
        let got = fine_reference_ode(&p, &[0.2], s, t, &den, 10_000).unwrap()[0];
        assert!((got - exact).abs() < 1e-9);
        assert_eq!(den.count(), 0);
        assert!(den.oracle_count() > 0);
    }

    #[test]
    fn zero_noise_is_deterministic_em() {
        let p = vp(vec![0.4]);
        let den = CountedDenoiser::new(ConstantDenoiser::new(vec![0.3]));
        let path = vec![vec![0.0]; 4];
        let fine = fine_reference_sde(&p, &[0.1], 0.8, 0.4, &den, 4, &path).unwrap();
        let mut x = vec![0.1];
        for k in 0..4 {
            let s = 0.8 - 0.1 * k as f64;
            x = em_step(&p, &x, s, s - 0.1, &den, &[0.0]).unwrap();
        }
        assert!((fine[0] - x[0]).abs() < 1e-12);
    }

    #[test]
    fn coarsening_sums() {
        let path = vec![vec![1.0], vec![2.0], vec![3.0], vec![4.0]];
        assert_eq!(coarsen_path(&path, 2).unwrap(), vec![vec![3.0], vec![7.0]]);
        assert!(coarsen_path(&path, 3).is_err());
    }

    #[test]
    fn batch_reference_matches_single_rows() {
        let p = vp(vec![0.4, 0.1]);
        let den = CountedDenoiser::new(ConstantDenoiser::new(vec![0.3, -0.2]));
        let set = reference_em_samples(&p, &den, 50, 3, 9, 0).unwrap();
        let grid = make_grid(p.schedule(), 50, GridScheme::UniformT).unwrap();
        for i in 0..3 {
            let mut stream = NoiseStream::new(9, Purpose::Reference, i as u64);
            let mut x = p.x_end().to_vec();
            for w in grid.times().windows(2) {
                let mut z = vec![0.0; 2];
                stream.step_normals(&mut z);
                x = em_step(&p, &x, w[0], w[1], &den, &z).unwrap();
            }
            for j in 0..2 {
                assert!((set.row(i)[j] - x[j]).abs() < 1e-12);
            }
        }
    }
}
