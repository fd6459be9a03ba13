//! Noise schedules and the half-log-SNR calculus.
//!
//! Both schedules describe a forward marginal `x_t ~ N(alpha_t x_0, sigma_t^2 I)`.
//! Everything the solvers need is expressed through `lambda_t = log(alpha_t / sigma_t)`,
//! which is strictly decreasing on `[t_min, T]` and diverges at `t = 0`; for that
//! reason no quantity involving `lambda` is evaluated below `t_min`.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScheduleKind {
    /// Variance exploding: `alpha = 1`, `sigma = scale * t`.
    Ve,
    /// Variance preserving with a linear `beta(t)`.
    Vp,
}

/// Parameters of a VE or VP schedule.
///
/// Fields irrelevant to `kind` are carried but ignored, which keeps the
/// serialized form flat.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScheduleParams {
    pub kind: ScheduleKind,
    #[serde(default = "default_terminal_time")]
    pub terminal_time: f64,
    #[serde(default = "default_scale")]
    pub ve_sigma_scale: f64,
    #[serde(default = "default_beta_min")]
    pub vp_beta_min: f64,
    #[serde(default = "default_beta_max")]
    pub vp_beta_max: f64,
    /// Smallest time at which schedule quantities are evaluated.
    /// Defaults to `1e-4 * terminal_time` when absent from a config.
    #[serde(default)]
    pub t_min: Option<f64>,
}

fn default_terminal_time() -> f64 {
    1.0
}
fn default_scale() -> f64 {
    1.0
}
fn default_beta_min() -> f64 {
    0.1
}
fn default_beta_max() -> f64 {
    20.0
}

/// Relative slack accepted when a lambda value sits on the edge of its range.
const LAMBDA_EDGE_SLACK: f64 = 1e-12;

impl ScheduleParams {
    pub fn ve(sigma_scale: f64, terminal_time: f64) -> Self {
        Self {
            kind: ScheduleKind::Ve,
            terminal_time,
            ve_sigma_scale: sigma_scale,
            vp_beta_min: default_beta_min(),
            vp_beta_max: default_beta_max(),
            t_min: None,
        }
    }

    pub fn vp(beta_min: f64, beta_max: f64, terminal_time: f64) -> Self {
        Self {
            kind: ScheduleKind::Vp,
            terminal_time,
            ve_sigma_scale: default_scale(),
            vp_beta_min: beta_min,
            vp_beta_max: beta_max,
            t_min: None,
        }
    }

    pub fn with_t_min(mut self, t_min: f64) -> Self {
        self.t_min = Some(t_min);
        self
    }

    /// Materializes the `t_min` default.
    pub fn resolved(mut self) -> Self {
        self.t_min = Some(self.t_min());
        self
    }

    pub fn t_min(&self) -> f64 {
        self.t_min.unwrap_or(1e-4 * self.terminal_time)
    }

    pub fn validate(&self) -> Result<()> {
        let t_end = self.terminal_time;
        if !(t_end.is_finite() && t_end > 0.0) {
            return Err(Error::Config(format!("terminal_time must be > 0, got {t_end}")));
        }
        let t_min = self.t_min();
        if !(t_min > 0.0 && t_min < t_end) {
            return Err(Error::Config(format!(
                "t_min must lie in (0, T) = (0, {t_end}), got {t_min}"
            )));
        }
        match self.kind {
            ScheduleKind::Ve => {
                if !(self.ve_sigma_scale.is_finite() && self.ve_sigma_scale > 0.0) {
                    return Err(Error::Config(format!(
                        "ve_sigma_scale must be > 0, got {}",
                        self.ve_sigma_scale
                    )));
                }
            }
            ScheduleKind::Vp => {
                let (lo, hi) = (self.vp_beta_min, self.vp_beta_max);
                if !(lo.is_finite() && hi.is_finite() && lo > 0.0 && hi > 0.0) {
                    return Err(Error::Config(format!(
                        "vp betas must be > 0, got beta_min = {lo}, beta_max = {hi}"
                    )));
                }
            }
        }
        Ok(())
    }

    fn check_closed(&self, what: &'static str, t: f64, lo: f64) -> Result<()> {
        if t.is_nan() || t < lo || t > self.terminal_time {
            return Err(domain(what, format!("t = {t} outside [{lo}, {}]", self.terminal_time)));
        }
        Ok(())
    }

    fn beta(&self, t: f64) -> f64 {
        self.vp_beta_min + t * (self.vp_beta_max - self.vp_beta_min)
    }

    /// `log(alpha_t)`; exact for both kinds and cheaper than `alpha(t).ln()`.
    pub fn log_alpha(&self, t: f64) -> Result<f64> {
        self.check_closed("log_alpha", t, 0.0)?;
        Ok(self.log_alpha_unchecked(t))
    }

    fn log_alpha_unchecked(&self, t: f64) -> f64 {
        match self.kind {
            ScheduleKind::Ve => 0.0,
            ScheduleKind::Vp => -0.25 * t * t * (self.vp_beta_max - self.vp_beta_min) - 0.5 * t * self.vp_beta_min,
        }
    }

    pub fn alpha(&self, t: f64) -> Result<f64> {
        Ok(self.log_alpha(t)?.exp())
    }

    pub fn sigma(&self, t: f64) -> Result<f64> {
        if t.is_nan() || t <= 0.0 || t > self.terminal_time {
            return Err(domain("sigma", format!("t = {t} outside (0, {}]", self.terminal_time)));
        }
        Ok(self.sigma_unchecked(t))
    }

    fn sigma_unchecked(&self, t: f64) -> f64 {
        match self.kind {
            ScheduleKind::Ve => self.ve_sigma_scale * t,
            // 1 - alpha^2 via expm1 keeps precision for small t.
            ScheduleKind::Vp => (-(2.0 * self.log_alpha_unchecked(t)).exp_m1()).sqrt(),
        }
    }

    /// `SNR_t = alpha_t^2 / sigma_t^2`.
    pub fn snr(&self, t: f64) -> Result<f64> {
        Ok((2.0 * self.half_log_snr(t)?).exp())
    }

    /// `lambda_t = log(alpha_t / sigma_t)`.
    pub fn half_log_snr(&self, t: f64) -> Result<f64> {
        self.check_closed("half_log_snr", t, self.t_min())?;
        Ok(self.half_log_snr_unchecked(t))
    }

    fn half_log_snr_unchecked(&self, t: f64) -> f64 {
        match self.kind {
            ScheduleKind::Ve => -(self.ve_sigma_scale * t).ln(),
            ScheduleKind::Vp => {
                let la = self.log_alpha_unchecked(t);
                la - 0.5 * (-(2.0 * la).exp_m1()).ln()
            }
        }
    }

    /// Range `[lambda(T), lambda(t_min)]` of the half log-SNR.
    pub fn lambda_range(&self) -> (f64, f64) {
        (
            self.half_log_snr_unchecked(self.terminal_time),
            self.half_log_snr_unchecked(self.t_min()),
        )
    }

    /// Inverse of [`half_log_snr`](Self::half_log_snr) on `[t_min, T]`.
    ///
    /// VE inverts in closed form; VP uses bisection, which cannot fail on a
    /// strictly monotone function.
    pub fn t_of_lambda(&self, lam: f64) -> Result<f64> {
        let (lam_end, lam_start) = self.lambda_range();
        let slack = LAMBDA_EDGE_SLACK * lam.abs().max(1.0);
        if lam.is_nan() || lam < lam_end - slack || lam > lam_start + slack {
            return Err(domain(
                "t_of_lambda",
                format!("lambda = {lam} outside [{lam_end}, {lam_start}]"),
            ));
        }
        let t_min = self.t_min();
        let t_end = self.terminal_time;
        if lam <= lam_end {
            return Ok(t_end);
        }
        if lam >= lam_start {
            return Ok(t_min);
        }
        let t = match self.kind {
            ScheduleKind::Ve => ((-lam).exp() / self.ve_sigma_scale).clamp(t_min, t_end),
            ScheduleKind::Vp => {
                let (mut lo, mut hi) = (t_min, t_end);
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    if mid <= lo || mid >= hi {
                        break;
                    }
                    if self.half_log_snr_unchecked(mid) > lam {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                let err_lo = (self.half_log_snr_unchecked(lo) - lam).abs();
                let err_hi = (self.half_log_snr_unchecked(hi) - lam).abs();
                if err_lo <= err_hi {
                    lo
                } else {
                    hi
                }
            }
        };
        Ok(t)
    }

    /// `f(t)` such that the forward drift is `f(t) x`; equals `d log(alpha_t) / dt`.
    pub fn drift_factor(&self, t: f64) -> Result<f64> {
        self.check_closed("drift_factor", t, self.t_min())?;
        Ok(match self.kind {
            ScheduleKind::Ve => 0.0,
            ScheduleKind::Vp => -0.5 * self.beta(t),
        })
    }

    /// `g(t)^2 = d sigma_t^2 / dt - 2 f(t) sigma_t^2`.
    pub fn diffusion_sq(&self, t: f64) -> Result<f64> {
        self.check_closed("diffusion_sq", t, self.t_min())?;
        Ok(match self.kind {
            ScheduleKind::Ve => 2.0 * self.ve_sigma_scale * self.ve_sigma_scale * t,
            // sigma^2 = 1 - alpha^2, so g^2 = -2 f (alpha^2 + sigma^2) = beta(t).
            ScheduleKind::Vp => self.beta(t),
        })
    }
}

/// `rho(a, b) = e^{2(a - b)} - 1`, evaluated with `expm1`.
pub fn rho(a: f64, b: f64) -> Result<f64> {
    if a.is_nan() || b.is_nan() || a < b {
        return Err(domain("rho", format!("requires a >= b, got a = {a}, b = {b}")));
    }
    Ok((2.0 * (a - b)).exp_m1())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridScheme {
    #[default]
    UniformT,
    UniformLambda,
}

/// Descending sampling times `T = t_N > ... > t_1 > t_0 = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    times: Vec<f64>,
    scheme: GridScheme,
}

impl TimeGrid {
    /// Builds a grid from explicit descending times and checks every invariant.
    pub fn from_times(params: &ScheduleParams, times: Vec<f64>, scheme: GridScheme) -> Result<Self> {
        let grid = Self { times, scheme };
        grid.validate(params)?;
        Ok(grid)
    }

    pub fn validate(&self, params: &ScheduleParams) -> Result<()> {
        let n = self.n_steps();
        if self.times.len() < 4 {
            return Err(Error::Config(format!(
                "a grid needs at least 3 steps, got {}",
                self.times.len().saturating_sub(1)
            )));
        }
        if self.times[0] != params.terminal_time {
            return Err(Error::Config(format!(
                "grid must start at T = {}, starts at {}",
                params.terminal_time, self.times[0]
            )));
        }
        if self.times[n] != 0.0 {
            return Err(Error::Config(format!("grid must end at 0, ends at {}", self.times[n])));
        }
        if self.t(1) < params.t_min() {
            return Err(Error::Config(format!(
                "t_1 = {} is below t_min = {}",
                self.t(1),
                params.t_min()
            )));
        }
        if let Some(w) = self.times.windows(2).find(|w| !(w[0] > w[1])) {
            return Err(Error::Config(format!(
                "grid must be strictly descending, found {} then {}",
                w[0], w[1]
            )));
        }
        Ok(())
    }

    /// Number of steps `N` (the grid holds `N + 1` times).
    pub fn n_steps(&self) -> usize {
        self.times.len() - 1
    }

    /// `t_i`, with `t_0 = 0` and `t_N = T`.
    pub fn t(&self, i: usize) -> f64 {
        self.times[self.n_steps() - i]
    }

    /// Times in descending order, `t_N` first.
    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn scheme(&self) -> GridScheme {
        self.scheme
    }
}

/// Builds an `n_steps`-step grid. `t_1 = t_min` and `t_0 = 0` in both schemes.
pub fn make_grid(params: &ScheduleParams, n_steps: usize, scheme: GridScheme) -> Result<TimeGrid> {
    if n_steps < 3 {
        return Err(Error::Config(format!("n_steps must be >= 3, got {n_steps}")));
    }
    params.validate()?;
    let t_min = params.t_min();
    let t_end = params.terminal_time;
    let last = (n_steps - 1) as f64;
    let mut times = Vec::with_capacity(n_steps + 1);
    match scheme {
        GridScheme::UniformT => {
            for i in (1..=n_steps).rev() {
                times.push(t_min + (i - 1) as f64 / last * (t_end - t_min));
            }
        }
        GridScheme::UniformLambda => {
            let (lam_end, lam_start) = params.lambda_range();
            for i in (1..=n_steps).rev() {
                let lam = lam_start + (i - 1) as f64 / last * (lam_end - lam_start);
                times.push(params.t_of_lambda(lam)?);
            }
        }
    }
    times[0] = t_end;
    times[n_steps - 1] = t_min;
    times.push(0.0);
    TimeGrid::from_times(params, times, scheme)
}
