//! Empirical convergence orders.

use serde::{Deserialize, Serialize};

use super::reference::{brownian_path, coarsen_path, fine_reference_ode, fine_reference_sde};
use crate::bridge::{BridgeProblem, CountedDenoiser, Denoiser};
use crate::error::{Error, Result};
use crate::noise::{NoiseStream, Purpose};
use crate::schedule::GridScheme;
use crate::solvers::{heun_step, ode_step_k1, ode_step_k2, posterior_reparam_step, sde_step_order1, SolverKind};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub solver: String,
    pub step_counts: Vec<usize>,
    pub errors: Vec<f64>,
    /// Negated least-squares slope of `log error` against `log N`.
    pub fitted_slope: f64,
    pub r_squared: f64,
    /// Every error sits at rounding level, so the slope carries no information.
    pub exact: bool,
}

/// Deterministic phase measured by a convergence study.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StudySetup {
    /// Time of the frozen post-SDE state.
    pub start_time: f64,
    /// Where the phase ends; `t_min` when `None`.
    pub end_time: Option<f64>,
    pub scheme: GridScheme,
    pub reference_substeps: usize,
    pub midpoint_ratio: f64,
}

impl Default for StudySetup {
    fn default() -> Self {
        Self {
            start_time: 0.9,
            end_time: None,
            scheme: GridScheme::UniformT,
            reference_substeps: 20_000,
            midpoint_ratio: 0.5,
        }
    }
}

/// Least-squares fit of `log y = c - slope * log x`; returns `(slope, r^2)`.
pub fn fit_log_slope(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.max(f64::MIN_POSITIVE).ln()).collect();
    let n = lx.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / n, ly.iter().sum::<f64>() / n);
    let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ly.iter().map(|y| (y - my) * (y - my)).sum();
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    (-slope, r2)
}

/// `n` intervals from `s` down to `t`, uniform in `t` or in lambda.
pub fn phase_times(problem: &BridgeProblem, s: f64, t: f64, n: usize, scheme: GridScheme) -> Result<Vec<f64>> {
    let sched = problem.schedule();
    let mut times = Vec::with_capacity(n + 1);
    match scheme {
        GridScheme::UniformT => {
            for i in 0..=n {
                times.push(s + (t - s) * i as f64 / n as f64);
            }
        }
        GridScheme::UniformLambda => {
            let (ls, lt) = (sched.half_log_snr(s)?, sched.half_log_snr(t)?);
            for i in 0..=n {
                times.push(sched.t_of_lambda(ls + (lt - ls) * i as f64 / n as f64)?);
            }
        }
    }
    times[0] = s;
    times[n] = t;
    Ok(times)
}

/// Deterministic steps of `kind` along `times`.
pub fn run_phase<D: Denoiser + ?Sized>(
    problem: &BridgeProblem,
    kind: SolverKind,
    order: usize,
    midpoint_ratio: f64,
    x_start: &[f64],
    times: &[f64],
    denoiser: &CountedDenoiser<D>,
) -> Result<Vec<f64>> {
    let mut x = x_start.to_vec();
    for w in times.windows(2) {
        let (s, t) = (w[0], w[1]);
        x = match (kind, order) {
            (SolverKind::DbmSolver, 1) => ode_step_k1(problem, &x, s, t, denoiser)?,
            (SolverKind::DbmSolver, 2) => ode_step_k2(problem, &x, s, t, midpoint_ratio, denoiser)?,
            (SolverKind::DbmSolver, k) => {
                return Err(Error::UnsupportedOrder {
                    what: "run_phase",
                    order: k,
                })
            }
            (SolverKind::Dbim1, _) => posterior_reparam_step(problem, &x, s, t, denoiser)?,
            (SolverKind::HybridHeun | SolverKind::Odes3, _) => heun_step(problem, &x, s, t, denoiser)?,
            (SolverKind::EulerMaruyama, _) => {
                return Err(Error::Config(
                    "euler_maruyama has no deterministic phase; use strong_order_study".into(),
                ))
            }
        };
    }
    Ok(x)
}

/// State after the initial stochastic step from `T` to `s`, drawn from the
/// `(seed, Path, 0)` stream.
pub fn post_sde_state<D: Denoiser + ?Sized>(
    problem: &BridgeProblem,
    s: f64,
    denoiser: &CountedDenoiser<D>,
    seed: u64,
) -> Result<Vec<f64>> {
    let mut z = vec![0.0; problem.dim()];
    NoiseStream::new(seed, Purpose::Path, 0).step_normals(&mut z);
    sde_step_order1(problem, problem.x_end(), problem.terminal_time(), s, denoiser, &z)
}

fn l2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn finish(solver: String, step_counts: &[usize], errors: Vec<f64>, scale: f64) -> ConvergenceReport {
    let exact = errors.iter().all(|e| *e <= 1e-12 * scale.max(1.0));
    let ns: Vec<f64> = step_counts.iter().map(|&n| n as f64).collect();
    let (fitted_slope, r_squared) = fit_log_slope(&ns, &errors);
    ConvergenceReport {
        solver,
        step_counts: step_counts.to_vec(),
        errors,
        fitted_slope,
        r_squared,
        exact,
    }
}

fn check_counts(step_counts: &[usize]) -> Result<()> {
    if step_counts.len() < 4 {
        return Err(Error::Config(format!(
            "a convergence study needs at least 4 step counts, got {}",
            step_counts.len()
        )));
    }
    if step_counts.contains(&0) {
        return Err(Error::Config("step counts must be positive".into()));
    }
    Ok(())
}

/// Global error of a deterministic phase against the RK4 reference, from the
/// shared state `x_start` at `setup.start_time` to the end time.
pub fn convergence_study<D: Denoiser + ?Sized>(
    problem: &BridgeProblem,
    kind: SolverKind,
    order: usize,
    denoiser: &CountedDenoiser<D>,
    step_counts: &[usize],
    x_start: &[f64],
    setup: &StudySetup,
) -> Result<ConvergenceReport> {
    check_counts(step_counts)?;
    let (s, t) = (setup.start_time, setup.end_time.unwrap_or(problem.t_min()));
    let reference = fine_reference_ode(problem, x_start, s, t, denoiser, setup.reference_substeps)?;
    let mut errors = Vec::with_capacity(step_counts.len());
    for &n in step_counts {
        let times = phase_times(problem, s, t, n, setup.scheme)?;
        let x = run_phase(problem, kind, order, setup.midpoint_ratio, x_start, &times, denoiser)?;
        errors.push(l2(&x, &reference));
    }
    let scale = reference.iter().map(|v| v.abs()).fold(0.0, f64::max);
    let label = match kind {
        SolverKind::DbmSolver => format!("{kind}_k{order}"),
        _ => kind.name().to_string(),
    };
    Ok(finish(label, step_counts, errors, scale))
}

/// Strong (pathwise) error of Euler-Maruyama from `s` to `t`: root mean square
/// over `n_paths` Brownian paths of the distance to a fine EM solution driven
/// by the same path. `fine_substeps` must be a multiple of every step count.
#[allow(clippy::too_many_arguments)]
pub fn strong_order_study<D: Denoiser + ?Sized>(
    problem: &BridgeProblem,
    denoiser: &CountedDenoiser<D>,
    x_start: &[f64],
    s: f64,
    t: f64,
    step_counts: &[usize],
    fine_substeps: usize,
    n_paths: usize,
    seed: u64,
) -> Result<ConvergenceReport> {
    check_counts(step_counts)?;
    if let Some(&n) = step_counts.iter().find(|&&n| !fine_substeps.is_multiple_of(n)) {
        return Err(Error::Config(format!(
            "{fine_substeps} fine substeps are not divisible by {n}"
        )));
    }
    let dt = (s - t) / fine_substeps as f64;
    let mut sq = vec![0.0; step_counts.len()];
    let mut scale: f64 = 0.0;
    for p in 0..n_paths {
        let mut stream = NoiseStream::new(seed, Purpose::Reference, p as u64);
        let path = brownian_path(&mut stream, fine_substeps, dt, problem.dim());
        let fine = fine_reference_sde(problem, x_start, s, t, denoiser, fine_substeps, &path)?;
        scale = scale.max(fine.iter().map(|v| v.abs()).fold(0.0, f64::max));
        for (k, &n) in step_counts.iter().enumerate() {
            let coarse_path = coarsen_path(&path, fine_substeps / n)?;
            let x = fine_reference_sde(problem, x_start, s, t, denoiser, n, &coarse_path)?;
            let e = l2(&x, &fine);
            sq[k] += e * e;
        }
    }
    let errors = sq.iter().map(|v| (v / n_paths as f64).sqrt()).collect();
    Ok(finish("euler_maruyama".into(), step_counts, errors, scale))
}
