//! Full samplers: DBMSolver and the baselines it is compared against.

use std::time::Instant;

use super::config::{SolverConfig, SolverKind};
use super::records::{RunRecord, StepKind, StepRecord};
use super::steps::{
    em_step, final_euler_step, heun_step, ode_step_k1, ode_step_k2, posterior_reparam_step, sde_step_order1,
};
use crate::bridge::{BridgeProblem, CountedDenoiser, Denoiser};
use crate::error::{Error, Result};
use crate::noise::NoiseStream;

struct Tracker<'a, D: ?Sized> {
    denoiser: &'a CountedDenoiser<D>,
    steps: Vec<StepRecord>,
    x: Vec<f64>,
}

impl<'a, D: Denoiser + ?Sized> Tracker<'a, D> {
    fn new(problem: &BridgeProblem, denoiser: &'a CountedDenoiser<D>) -> Self {
        Self {
            denoiser,
            steps: Vec::new(),
            x: problem.x_end().to_vec(),
        }
    }

    fn step(
        &mut self,
        from_t: f64,
        to_t: f64,
        kind: StepKind,
        f: impl FnOnce(&[f64], &CountedDenoiser<D>) -> Result<Vec<f64>>,
    ) -> Result<()> {
        let before = self.denoiser.count();
        let x = f(&self.x, self.denoiser)?;
        let nfe_used = (self.denoiser.count() - before) as usize;
        if let Some(expected) = kind.nfe() {
            debug_assert_eq!(nfe_used, expected);
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Oracle(format!("non-finite state after step {from_t} -> {to_t}")));
        }
        self.steps.push(StepRecord {
            from_t,
            to_t,
            nfe_used,
            step_kind: kind,
            x_after: x.clone(),
        });
        self.x = x;
        Ok(())
    }
}

/// Runs the sampler selected by `config.kind` from the problem's endpoint.
///
/// `noise` supplies the trajectory's Brownian increments, one draw per
/// stochastic step.
pub fn sample<D: Denoiser + ?Sized>(
    problem: &BridgeProblem,
    config: &SolverConfig,
    denoiser: &CountedDenoiser<D>,
    noise: &mut NoiseStream,
    trajectory: u64,
) -> Result<RunRecord> {
    config.validate(problem.schedule())?;
    let start = Instant::now();
    let before = denoiser.count();
    let times = config.effective_times()?;
    let mut tr = Tracker::new(problem, denoiser);
    match config.kind {
        SolverKind::DbmSolver => run_dbm(problem, config, &times, &mut tr, noise)?,
        SolverKind::EulerMaruyama => run_em(problem, &times, &mut tr, noise)?,
        SolverKind::HybridHeun => run_hybrid_heun(problem, &times, &mut tr, noise)?,
        SolverKind::Odes3 => run_odes3(problem, &times, &mut tr, noise)?,
        SolverKind::Dbim1 => run_dbim1(problem, &times, &mut tr, noise)?,
    }
    let total_nfe = (denoiser.count() - before) as usize;
    let record = RunRecord {
        config: config.clone(),
        trajectory,
        x_end: problem.x_end().to_vec(),
        x_final: tr.x,
        steps: tr.steps,
        total_nfe,
        wall_time_ms: Some(start.elapsed().as_secs_f64() * 1e3),
    };
    debug_assert_eq!(record.nfe_sum(), total_nfe);
    Ok(record)
}

fn require_kind(config: &SolverConfig, kind: SolverKind) -> Result<()> {
    if config.kind != kind {
        return Err(Error::Config(format!("expected a {kind} config, got {}", config.kind)));
    }
    Ok(())
}

pub fn dbmsolver_sample<D: Denoiser + ?Sized>(
    problem: &BridgeProblem,
    config: &SolverConfig,
    denoiser: &CountedDenoiser<D>,
    noise: &mut NoiseStream,
) -> Result<RunRecord> {
    require_kind(config, SolverKind::DbmSolver)?;
    sample(problem, config, denoiser, noise, 0)
}

pub fn em_sde_sample<D: Denoiser + ?Sized>(
    problem: &BridgeProblem,
    config: &SolverConfig,
    denoiser: &CountedDenoiser<D>,
    noise: &mut NoiseStream,
) -> Result<RunRecord> {
    require_kind(config, SolverKind::EulerMaruyama)?;
    sample(problem, config, denoiser, noise, 0)
}

pub fn hybrid_heun_sample<D: Denoiser + ?Sized>(
    problem: &BridgeProblem,
    config: &SolverConfig,
    denoiser: &CountedDenoiser<D>,
    noise: &mut NoiseStream,
) -> Result<RunRecord> {
    require_kind(config, SolverKind::HybridHeun)?;
    sample(problem, config, denoiser, noise, 0)
}

pub fn odes3_sample<D: Denoiser + ?Sized>(
    problem: &BridgeProblem,
    config: &SolverConfig,
    denoiser: &CountedDenoiser<D>,
    noise: &mut NoiseStream,
) -> Result<RunRecord> {
    require_kind(config, SolverKind::Odes3)?;
    sample(problem, config, denoiser, noise, 0)
}

pub fn dbim1_sample<D: Denoiser + ?Sized>(
    problem: &BridgeProblem,
    config: &SolverConfig,
    denoiser: &CountedDenoiser<D>,
    noise: &mut NoiseStream,
) -> Result<RunRecord> {
    require_kind(config, SolverKind::Dbim1)?;
    sample(problem, config, denoiser, noise, 0)
}

fn draw(problem: &BridgeProblem, noise: &mut NoiseStream) -> Vec<f64> {
    let mut z = vec![0.0; problem.dim()];
    noise.step_normals(&mut z);
    z
}

fn init_sde<D: Denoiser + ?Sized>(
    problem: &BridgeProblem,
    times: &[f64],
    tr: &mut Tracker<'_, D>,
    noise: &mut NoiseStream,
) -> Result<()> {
    let z = draw(problem, noise);
    tr.step(times[0], times[1], StepKind::InitSde, |x, d| {
        sde_step_order1(problem, x, times[0], times[1], d, &z)
    })
}

fn final_euler<D: Denoiser + ?Sized>(problem: &BridgeProblem, times: &[f64], tr: &mut Tracker<'_, D>) -> Result<()> {
    let t1 = times[times.len() - 2];
    tr.step(t1, 0.0, StepKind::FinalEuler, |x, d| {
        final_euler_step(problem, x, t1, d)
    })
}

fn run_dbm<D: Denoiser + ?Sized>(
    problem: &BridgeProblem,
    config: &SolverConfig,
    times: &[f64],
    tr: &mut Tracker<'_, D>,
    noise: &mut NoiseStream,
) -> Result<()> {
    init_sde(problem, times, tr, noise)?;
    let n = times.len() - 1;
    for w in times[1..n].windows(2) {
        let (s, t) = (w[0], w[1]);
        if config.order == 1 {
            tr.step(s, t, StepKind::OdeK1, |x, d| ode_step_k1(problem, x, s, t, d))?;
        } else {
            tr.step(s, t, StepKind::OdeK2, |x, d| {
                ode_step_k2(problem, x, s, t, config.midpoint_ratio, d)
            })?;
        }
    }
    final_euler(problem, times, tr)
}

fn run_dbim1<D: Denoiser + ?Sized>(
    problem: &BridgeProblem,
    times: &[f64],
    tr: &mut Tracker<'_, D>,
    noise: &mut NoiseStream,
) -> Result<()> {
    init_sde(problem, times, tr, noise)?;
    let n = times.len() - 1;
    for w in times[1..n].windows(2) {
        let (s, t) = (w[0], w[1]);
        tr.step(s, t, StepKind::Baseline, |x, d| {
            posterior_reparam_step(problem, x, s, t, d)
        })?;
    }
    final_euler(problem, times, tr)
}

fn run_em<D: Denoiser + ?Sized>(
    problem: &BridgeProblem,
    times: &[f64],
    tr: &mut Tracker<'_, D>,
    noise: &mut NoiseStream,
) -> Result<()> {
    for w in times.windows(2) {
        let (s, t) = (w[0], w[1]);
        let z = draw(problem, noise);
        tr.step(s, t, StepKind::Baseline, |x, d| em_step(problem, x, s, t, d, &z))?;
    }
    Ok(())
}

fn run_hybrid_heun<D: Denoiser + ?Sized>(
    problem: &BridgeProblem,
    times: &[f64],
    tr: &mut Tracker<'_, D>,
    noise: &mut NoiseStream,
) -> Result<()> {
    let n = times.len() - 1;
    for (i, w) in times[..n].windows(2).enumerate() {
        let (s, t) = (w[0], w[1]);
        if i % 2 == 0 {
            let z = draw(problem, noise);
            tr.step(s, t, StepKind::Baseline, |x, d| em_step(problem, x, s, t, d, &z))?;
        } else {
            tr.step(s, t, StepKind::Baseline, |x, d| heun_step(problem, x, s, t, d))?;
        }
    }
    final_euler(problem, times, tr)
}

fn run_odes3<D: Denoiser + ?Sized>(
    problem: &BridgeProblem,
    times: &[f64],
    tr: &mut Tracker<'_, D>,
    noise: &mut NoiseStream,
) -> Result<()> {
    let z = draw(problem, noise);
    tr.step(times[0], times[1], StepKind::Baseline, |x, d| {
        em_step(problem, x, times[0], times[1], d, &z)
    })?;
    let n = times.len() - 1;
    for w in times[1..n].windows(2) {
        let (s, t) = (w[0], w[1]);
        tr.step(s, t, StepKind::Baseline, |x, d| heun_step(problem, x, s, t, d))?;
    }
    final_euler(problem, times, tr)
}
