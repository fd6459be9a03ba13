//! Bridge-specific quantities: conditional and transition scores, the
//! probability-flow ODE and bridge SDE right-hand sides, and the semi-linear
//! split of the ODE.

use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::schedule::{rho, ScheduleParams};

/// The conditioning endpoint `x_T` together with its schedule.
#[derive(Debug, Clone, PartialEq)]
pub struct BridgeProblem {
    schedule: ScheduleParams,
    x_end: Vec<f64>,
    lambda_end: f64,
    alpha_end: f64,
}

impl BridgeProblem {
    pub fn new(schedule: ScheduleParams, x_end: Vec<f64>) -> Result<Self> {
        schedule.validate()?;
        if x_end.is_empty() {
            return Err(Error::Config("endpoint must have dimension >= 1".into()));
        }
        if x_end.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("endpoint must be finite".into()));
        }
        let t_end = schedule.terminal_time;
        let lambda_end = schedule.half_log_snr(t_end)?;
        let alpha_end = schedule.alpha(t_end)?;
        Ok(Self {
            schedule,
            x_end,
            lambda_end,
            alpha_end,
        })
    }

    pub fn schedule(&self) -> &ScheduleParams {
        &self.schedule
    }

    pub fn x_end(&self) -> &[f64] {
        &self.x_end
    }

    pub fn dim(&self) -> usize {
        self.x_end.len()
    }

    pub fn terminal_time(&self) -> f64 {
        self.schedule.terminal_time
    }

    pub fn t_min(&self) -> f64 {
        self.schedule.t_min()
    }

    /// `lambda_T`.
    pub fn lambda_end(&self) -> f64 {
        self.lambda_end
    }

    pub fn alpha_end(&self) -> f64 {
        self.alpha_end
    }

    /// Every schedule and bridge coefficient at time `t`, computed once.
    pub fn coeffs(&self, t: f64) -> Result<BridgeCoeffs> {
        BridgeCoeffs::new(self, t)
    }

    pub(crate) fn check_dim(&self, v: &[f64]) -> Result<()> {
        if v.len() != self.dim() {
            return Err(Error::Dimension {
                expected: self.dim(),
                got: v.len(),
            });
        }
        Ok(())
    }
}

/// Schedule and bridge-marginal coefficients at one time `t` in `[t_min, T]`.
///
/// The bridge marginal is `x_t | x_0, x_T ~ N(a x_T + b x_0, c_sq I)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BridgeCoeffs {
    pub t: f64,
    pub alpha: f64,
    pub sigma: f64,
    pub lambda: f64,
    /// `SNR_T / SNR_t = e^{2(lambda_T - lambda_t)}`, in `(0, 1]`.
    pub snr_ratio: f64,
    /// `1 - SNR_T / SNR_t`, computed without cancellation.
    pub one_minus_ratio: f64,
    /// `rho(lambda_t, lambda_T) = SNR_t / SNR_T - 1`.
    pub rho: f64,
    pub a: f64,
    pub b: f64,
    pub c_sq: f64,
    pub drift: f64,
    pub diffusion_sq: f64,
    /// `alpha_t / alpha_T`.
    pub alpha_over_end: f64,
}

impl BridgeCoeffs {
    pub fn new(problem: &BridgeProblem, t: f64) -> Result<Self> {
        let sched = problem.schedule();
        let lambda = sched.half_log_snr(t)?;
        let alpha = sched.alpha(t)?;
        let sigma = sched.sigma(t)?;
        let gap = 2.0 * (problem.lambda_end - lambda);
        let snr_ratio = gap.exp();
        let one_minus_ratio = -gap.exp_m1();
        let alpha_over_end = alpha / problem.alpha_end;
        Ok(Self {
            t,
            alpha,
            sigma,
            lambda,
            snr_ratio,
            one_minus_ratio,
            rho: rho(lambda, problem.lambda_end)?,
            a: snr_ratio * alpha_over_end,
            b: alpha * one_minus_ratio,
            c_sq: sigma * sigma * one_minus_ratio,
            drift: sched.drift_factor(t)?,
            diffusion_sq: sched.diffusion_sq(t)?,
            alpha_over_end,
        })
    }

    /// True when the bridge variance vanishes, i.e. at `t = T`.
    pub fn is_pinned(&self) -> bool {
        self.c_sq == 0.0
    }

    fn require_open(&self, what: &'static str) -> Result<()> {
        if self.is_pinned() || self.rho == 0.0 {
            return Err(Error::Singularity { what, t: self.t });
        }
        Ok(())
    }
}

/// An `x_0`-predictor `D(x_t, t, x_T, T)`.
///
/// Implementations are pure; NFE accounting lives in [`CountedDenoiser`].
pub trait Denoiser: Send + Sync {
    /// Writes `D(x, t, x_T, T)` into `out`.
    fn denoise(&self, x: &[f64], at: &BridgeCoeffs, problem: &BridgeProblem, out: &mut [f64]) -> Result<()>;

    /// Row-major batch form: `xs` and `out` hold `xs.len() / dim` states.
    ///
    /// Override when per-time constants can be hoisted out of the row loop.
    fn denoise_batch(&self, xs: &[f64], at: &BridgeCoeffs, problem: &BridgeProblem, out: &mut [f64]) -> Result<()> {
        let d = problem.dim();
        for (x, o) in xs.chunks_exact(d).zip(out.chunks_exact_mut(d)) {
            self.denoise(x, at, problem, o)?;
        }
        Ok(())
    }
}

impl<D: Denoiser + ?Sized> Denoiser for Box<D> {
    fn denoise(&self, x: &[f64], at: &BridgeCoeffs, problem: &BridgeProblem, out: &mut [f64]) -> Result<()> {
        (**self).denoise(x, at, problem, out)
    }

    fn denoise_batch(&self, xs: &[f64], at: &BridgeCoeffs, problem: &BridgeProblem, out: &mut [f64]) -> Result<()> {
        (**self).denoise_batch(xs, at, problem, out)
    }
}

/// Wraps a denoiser with an atomic evaluation counter.
///
/// [`evaluate`](Self::evaluate) is what samplers call and is what NFE means.
/// Oracles call [`evaluate_oracle`](Self::evaluate_oracle), which is tallied
/// separately so reference computations never inflate a sampler's NFE.
#[derive(Debug, Default)]
pub struct CountedDenoiser<D: ?Sized> {
    nfe: AtomicU64,
    oracle_nfe: AtomicU64,
    inner: D,
}

impl<D> CountedDenoiser<D> {
    pub fn new(inner: D) -> Self {
        Self {
            nfe: AtomicU64::new(0),
            oracle_nfe: AtomicU64::new(0),
            inner,
        }
    }
}

impl<D: Denoiser + ?Sized> CountedDenoiser<D> {
    pub fn inner(&self) -> &D {
        &self.inner
    }

    /// Sampler evaluations so far.
    pub fn count(&self) -> u64 {
        self.nfe.load(Ordering::Relaxed)
    }

    /// Oracle-mode evaluations so far.
    pub fn oracle_count(&self) -> u64 {
        self.oracle_nfe.load(Ordering::Relaxed)
    }

    pub fn evaluate(&self, x: &[f64], at: &BridgeCoeffs, problem: &BridgeProblem) -> Result<Vec<f64>> {
        let mut out = vec![0.0; x.len()];
        self.evaluate_into(x, at, problem, &mut out)?;
        Ok(out)
    }

    pub fn evaluate_into(&self, x: &[f64], at: &BridgeCoeffs, problem: &BridgeProblem, out: &mut [f64]) -> Result<()> {
        problem.check_dim(x)?;
        self.nfe.fetch_add(1, Ordering::Relaxed);
        self.inner.denoise(x, at, problem, out)
    }

    /// One evaluation per row.
    pub fn evaluate_batch(
        &self,
        xs: &[f64],
        at: &BridgeCoeffs,
        problem: &BridgeProblem,
        out: &mut [f64],
    ) -> Result<()> {
        let rows = batch_rows(xs, problem)?;
        self.nfe.fetch_add(rows, Ordering::Relaxed);
        self.inner.denoise_batch(xs, at, problem, out)
    }

    pub fn evaluate_oracle(&self, x: &[f64], at: &BridgeCoeffs, problem: &BridgeProblem) -> Result<Vec<f64>> {
        problem.check_dim(x)?;
        self.oracle_nfe.fetch_add(1, Ordering::Relaxed);
        let mut out = vec![0.0; x.len()];
        self.inner.denoise(x, at, problem, &mut out)?;
        Ok(out)
    }

    pub fn evaluate_oracle_batch(
        &self,
        xs: &[f64],
        at: &BridgeCoeffs,
        problem: &BridgeProblem,
        out: &mut [f64],
    ) -> Result<()> {
        let rows = batch_rows(xs, problem)?;
        self.oracle_nfe.fetch_add(rows, Ordering::Relaxed);
        self.inner.denoise_batch(xs, at, problem, out)
    }
}

fn batch_rows(xs: &[f64], problem: &BridgeProblem) -> Result<u64> {
    let d = problem.dim();
    if !xs.len().is_multiple_of(d) {
        return Err(Error::Dimension {
            expected: d,
            got: xs.len() % d,
        });
    }
    Ok((xs.len() / d) as u64)
}

/// A point on a trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct State {
    pub x: Vec<f64>,
    pub t: f64,
}

fn open_coeffs(problem: &BridgeProblem, t: f64, what: &'static str) -> Result<BridgeCoeffs> {
    if t.is_nan() || t < problem.t_min() || t > problem.terminal_time() {
        return Err(domain(
            what,
            format!("t = {t} outside [{}, {})", problem.t_min(), problem.terminal_time()),
        ));
    }
    let c = problem.coeffs(t)?;
    c.require_open(what)?;
    Ok(c)
}

/// Score of `p_t(x_t | x_T)` recovered from an `x_0` prediction.
pub fn score_from_x0(problem: &BridgeProblem, x: &[f64], t: f64, d_out: &[f64]) -> Result<Vec<f64>> {
    let c = open_coeffs(problem, t, "score_from_x0")?;
    problem.check_dim(x)?;
    problem.check_dim(d_out)?;
    Ok(x.iter()
        .zip(d_out)
        .zip(problem.x_end())
        .map(|((&xi, &di), &ei)| (c.a * ei + c.b * di - xi) / c.c_sq)
        .collect())
}

/// Score of the transition density `p_t(x_T | x_t)` with respect to `x_t`.
pub fn transition_score(problem: &BridgeProblem, x: &[f64], t: f64) -> Result<Vec<f64>> {
    let c = open_coeffs(problem, t, "transition_score")?;
    problem.check_dim(x)?;
    let denom = c.sigma * c.sigma * c.rho;
    Ok(x.iter()
        .zip(problem.x_end())
        .map(|(&xi, &ei)| (c.alpha_over_end * ei - xi) / denom)
        .collect())
}

/// Right-hand side `f x - w g^2 s_theta + g^2 s_trans` collapsed to
/// `lin x + end x_T + pred D` at one time; `w` is 1/2 for the probability-flow
/// ODE and 1 for the SDE drift.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RhsCoeffs {
    pub lin: f64,
    pub end: f64,
    pub pred: f64,
}

impl RhsCoeffs {
    pub fn new(c: &BridgeCoeffs, score_weight: f64) -> Self {
        let g2 = c.diffusion_sq;
        let trans_denom = c.sigma * c.sigma * c.rho;
        Self {
            lin: c.drift + score_weight * g2 / c.c_sq - g2 / trans_denom,
            end: -score_weight * g2 * c.a / c.c_sq + g2 * c.alpha_over_end / trans_denom,
            pred: -score_weight * g2 * c.b / c.c_sq,
        }
    }

    /// Writes the right-hand side for one state into `out`.
    #[inline]
    pub fn apply(&self, x: &[f64], x_end: &[f64], d_out: &[f64], out: &mut [f64]) {
        for (((o, &xi), &di), &ei) in out.iter_mut().zip(x).zip(d_out).zip(x_end) {
            *o = self.lin * xi + self.end * ei + self.pred * di;
        }
    }
}

fn assemble_rhs(
    problem: &BridgeProblem,
    x: &[f64],
    c: &BridgeCoeffs,
    d_out: &[f64],
    score_weight: f64,
    out: &mut [f64],
) {
    RhsCoeffs::new(c, score_weight).apply(x, problem.x_end(), d_out, out);
}

/// Probability-flow ODE right-hand side at precomputed coefficients.
pub fn pf_ode_rhs_at(problem: &BridgeProblem, x: &[f64], c: &BridgeCoeffs, d_out: &[f64]) -> Result<Vec<f64>> {
    c.require_open("pf_ode_rhs")?;
    let mut out = vec![0.0; x.len()];
    assemble_rhs(problem, x, c, d_out, 0.5, &mut out);
    Ok(out)
}

/// Probability-flow ODE right-hand side for a given `x_0` prediction `d_out`.
pub fn pf_ode_rhs_from_x0(problem: &BridgeProblem, x: &[f64], t: f64, d_out: &[f64]) -> Result<Vec<f64>> {
    let c = open_coeffs(problem, t, "pf_ode_rhs")?;
    problem.check_dim(x)?;
    problem.check_dim(d_out)?;
    let mut out = vec![0.0; x.len()];
    assemble_rhs(problem, x, &c, d_out, 0.5, &mut out);
    Ok(out)
}

/// Bridge probability-flow ODE `dx/dt`; one denoiser evaluation.
pub fn pf_ode_rhs<D: Denoiser + ?Sized>(
    problem: &BridgeProblem,
    x: &[f64],
    t: f64,
    denoiser: &CountedDenoiser<D>,
) -> Result<Vec<f64>> {
    let c = open_coeffs(problem, t, "pf_ode_rhs")?;
    let d_out = denoiser.evaluate(x, &c, problem)?;
    let mut out = vec![0.0; x.len()];
    assemble_rhs(problem, x, &c, &d_out, 0.5, &mut out);
    Ok(out)
}

/// The `dt` part of the reverse bridge SDE plus the noise magnitude `g(t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SdeRhs {
    pub drift: Vec<f64>,
    pub diffusion: f64,
}

/// SDE drift for a given `x_0` prediction `d_out`.
pub fn sde_rhs_from_x0(problem: &BridgeProblem, x: &[f64], t: f64, d_out: &[f64]) -> Result<SdeRhs> {
    let c = open_coeffs(problem, t, "sde_rhs")?;
    problem.check_dim(x)?;
    problem.check_dim(d_out)?;
    let mut drift = vec![0.0; x.len()];
    assemble_rhs(problem, x, &c, d_out, 1.0, &mut drift);
    Ok(SdeRhs {
        drift,
        diffusion: c.diffusion_sq.sqrt(),
    })
}

/// Reverse bridge SDE drift; one denoiser evaluation.
pub fn sde_rhs_deterministic<D: Denoiser + ?Sized>(
    problem: &BridgeProblem,
    x: &[f64],
    t: f64,
    denoiser: &CountedDenoiser<D>,
) -> Result<SdeRhs> {
    let c = open_coeffs(problem, t, "sde_rhs")?;
    let d_out = denoiser.evaluate(x, &c, problem)?;
    let mut drift = vec![0.0; x.len()];
    assemble_rhs(problem, x, &c, &d_out, 1.0, &mut drift);
    Ok(SdeRhs {
        drift,
        diffusion: c.diffusion_sq.sqrt(),
    })
}

/// Probability-flow ODE written as `dx/dt = L(t) x + N(D(x), t, x_T)`.
///
/// Both score terms are isotropic in `x`, so `L(t)` is a scalar.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SemilinearSplit {
    pub t: f64,
    /// Linear coefficient `L(t)`.
    pub linear: f64,
    coeffs: BridgeCoeffs,
}

impl SemilinearSplit {
    /// `N(d_out, t, x_T)`: everything in the ODE that does not multiply `x`.
    pub fn nonlinear(&self, problem: &BridgeProblem, d_out: &[f64]) -> Vec<f64> {
        let c = &self.coeffs;
        let g2 = c.diffusion_sq;
        let trans_denom = c.sigma * c.sigma * c.rho;
        d_out
            .iter()
            .zip(problem.x_end())
            .map(|(&di, &ei)| -0.5 * g2 * (c.a * ei + c.b * di) / c.c_sq + g2 * c.alpha_over_end * ei / trans_denom)
            .collect()
    }

    /// `L(t) x + N(d_out, t, x_T)`.
    pub fn rhs(&self, problem: &BridgeProblem, x: &[f64], d_out: &[f64]) -> Vec<f64> {
        self.nonlinear(problem, d_out)
            .into_iter()
            .zip(x)
            .map(|(n, &xi)| self.linear * xi + n)
            .collect()
    }
}

pub fn semilinear_split(problem: &BridgeProblem, t: f64) -> Result<SemilinearSplit> {
    let c = open_coeffs(problem, t, "semilinear_split")?;
    let g2 = c.diffusion_sq;
    // -x/c_sq enters with weight -g^2/2; -x/(sigma^2 rho) enters with weight +g^2.
    let linear = c.drift + 0.5 * g2 / c.c_sq - g2 / (c.sigma * c.sigma * c.rho);
    Ok(SemilinearSplit { t, linear, coeffs: c })
}
