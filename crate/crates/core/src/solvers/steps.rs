//! Single-step updates. Each function performs exactly the denoiser
//! evaluations its name implies and nothing else.

use crate::bridge::{pf_ode_rhs, sde_rhs_deterministic, BridgeCoeffs, BridgeProblem, CountedDenoiser, Denoiser};
use crate::error::{domain, Error, Result};
use crate::schedule::rho;

fn check_order(what: &'static str, s: f64, t: f64, allow_equal: bool) -> Result<()> {
    if t.is_nan() || s.is_nan() || t > s || (!allow_equal && t == s) {
        return Err(Error::Ordering { what, s, t });
    }
    Ok(())
}

fn check_time(problem: &BridgeProblem, what: &'static str, t: f64) -> Result<()> {
    if t < problem.t_min() || t > problem.terminal_time() {
        return Err(domain(
            what,
            format!("t = {t} outside [{}, {}]", problem.t_min(), problem.terminal_time()),
        ));
    }
    Ok(())
}

/// First-order stochastic step from `s` to `t <= s` driven by the standard
/// normal vector `z`. One denoiser evaluation at `s`; `s = T` is allowed.
pub fn sde_step_order1<D: Denoiser + ?Sized>(
    problem: &BridgeProblem,
    x_s: &[f64],
    s: f64,
    t: f64,
    denoiser: &CountedDenoiser<D>,
    z: &[f64],
) -> Result<Vec<f64>> {
    check_order("sde_step_order1", s, t, true)?;
    check_time(problem, "sde_step_order1", t)?;
    check_time(problem, "sde_step_order1", s)?;
    problem.check_dim(z)?;
    let cs = problem.coeffs(s)?;
    let ct = problem.coeffs(t)?;
    let d_s = denoiser.evaluate(x_s, &cs, problem)?;
    Ok(sde_step_from_x0(&cs, &ct, x_s, &d_s, z))
}

/// The update of [`sde_step_order1`] for a given `x_0` prediction.
pub fn sde_step_from_x0(cs: &BridgeCoeffs, ct: &BridgeCoeffs, x_s: &[f64], d_s: &[f64], z: &[f64]) -> Vec<f64> {
    let gap = 2.0 * (cs.lambda - ct.lambda);
    let keep = gap.exp() * ct.alpha / cs.alpha;
    let one_minus = -gap.exp_m1();
    let pull = ct.alpha * one_minus;
    let noise = ct.sigma * one_minus.sqrt();
    x_s.iter()
        .zip(d_s)
        .zip(z)
        .map(|((&x, &d), &zi)| keep * x + pull * d + noise * zi)
        .collect()
}

/// `q - atan(q)` without cancellation for small `q`.
fn q_minus_atan(q: f64) -> f64 {
    if q.abs() >= 0.1 {
        return q - q.atan();
    }
    // q^3/3 - q^5/5 + ...; 12 terms reach full precision for |q| < 0.1.
    let q2 = q * q;
    let mut term = q * q2;
    let mut sum = 0.0;
    for k in 0..12 {
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        sum += sign * term / (2 * k + 3) as f64;
        term *= q2;
    }
    sum
}

/// `sqrt(rho(lam_t, lam_T)) - sqrt(rho(lam_s, lam_T))` and both square roots.
fn sqrt_rho_gap(lam_s: f64, lam_t: f64, lam_end: f64) -> Result<(f64, f64, f64)> {
    let qs = rho(lam_s, lam_end)?.sqrt();
    let qt = rho(lam_t, lam_end)?.sqrt();
    if qs + qt == 0.0 {
        return Ok((0.0, qs, qt));
    }
    // rho_t - rho_s = e^{2(lam_s - lam_T)} expm1(2 (lam_t - lam_s))
    let diff = (2.0 * (lam_s - lam_end)).exp() * (2.0 * (lam_t - lam_s)).exp_m1();
    Ok((diff / (qs + qt), qs, qt))
}

/// `int_{lam_s}^{lam_t} e^{2 lam} (lam - lam_s)^n / (n! sqrt(rho(lam, lam_T))) d lam`
/// in closed form, for `n` in `{0, 1}`.
pub fn exp_integral(n: usize, lam_s: f64, lam_t: f64, lam_end: f64) -> Result<f64> {
    if n >= 2 {
        return Err(Error::UnsupportedOrder {
            what: "exp_integral",
            order: n,
        });
    }
    if !(lam_end.is_finite() && lam_s.is_finite() && lam_t.is_finite()) {
        return Err(domain("exp_integral", "non-finite lambda"));
    }
    if !(lam_end <= lam_s && lam_s <= lam_t) {
        return Err(domain(
            "exp_integral",
            format!("need lam_T <= lam_s <= lam_t, got {lam_end}, {lam_s}, {lam_t}"),
        ));
    }
    if lam_s == lam_t {
        return Ok(0.0);
    }
    let scale = (2.0 * lam_end).exp();
    let (dq, qs, qt) = sqrt_rho_gap(lam_s, lam_t, lam_end)?;
    if n == 0 {
        return Ok(scale * dq);
    }
    // g(q) = q - atan q;  g(qt) - g(qs) = dq - atan(u) with u = dq / (1 + qs qt)
    let u = dq / (1.0 + qs * qt);
    let g_gap = dq * qs * qt / (1.0 + qs * qt) + q_minus_atan(u);
    Ok(scale * ((lam_t - lam_s) * qt - g_gap))
}

/// Coefficients of the exact solution `x_t = C_s x_s + C_T x_T + C_int * integral`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OdeCoeffs {
    pub c_s: f64,
    pub c_end: f64,
    pub c_int: f64,
    pub lam_s: f64,
    pub lam_t: f64,
    pub lam_end: f64,
}

impl OdeCoeffs {
    pub fn integral(&self, n: usize) -> Result<f64> {
        exp_integral(n, self.lam_s, self.lam_t, self.lam_end)
    }
}

pub fn ode_coeffs(problem: &BridgeProblem, s: f64, t: f64) -> Result<OdeCoeffs> {
    check_order("ode_coeffs", s, t, true)?;
    check_time(problem, "ode_coeffs", t)?;
    check_time(problem, "ode_coeffs", s)?;
    let cs = problem.coeffs(s)?;
    let ct = problem.coeffs(t)?;
    ode_coeffs_from(problem, &cs, &ct)
}

pub(crate) fn ode_coeffs_from(problem: &BridgeProblem, cs: &BridgeCoeffs, ct: &BridgeCoeffs) -> Result<OdeCoeffs> {
    if cs.rho == 0.0 {
        return Err(Error::Singularity {
            what: "ode_coeffs",
            t: cs.t,
        });
    }
    let lam_end = problem.lambda_end();
    let (dq, qs, qt) = sqrt_rho_gap(cs.lambda, ct.lambda, lam_end)?;
    let q_ratio = qt / qs;
    // 1 - qt / qs without cancellation
    let one_minus_q = -dq / qs;
    Ok(OdeCoeffs {
        c_s: ct.alpha / cs.alpha * (2.0 * (cs.lambda - ct.lambda)).exp() * q_ratio,
        c_end: ct.alpha_over_end * ct.snr_ratio * one_minus_q,
        c_int: ct.alpha * (-2.0 * ct.lambda).exp() * qt,
        lam_s: cs.lambda,
        lam_t: ct.lambda,
        lam_end,
    })
}

fn combine(k: &OdeCoeffs, x_s: &[f64], x_end: &[f64], drive: impl Fn(usize) -> f64) -> Vec<f64> {
    x_s.iter()
        .zip(x_end)
        .enumerate()
        .map(|(j, (&x, &e))| k.c_s * x + k.c_end * e + k.c_int * drive(j))
        .collect()
}

fn k1_from_x0(
    problem: &BridgeProblem,
    cs: &BridgeCoeffs,
    ct: &BridgeCoeffs,
    x_s: &[f64],
    d_s: &[f64],
) -> Result<Vec<f64>> {
    let k = ode_coeffs_from(problem, cs, ct)?;
    let i0 = k.integral(0)?;
    Ok(combine(&k, x_s, problem.x_end(), |j| i0 * d_s[j]))
}

/// First-order exponential-integrator step of the probability-flow ODE.
pub fn ode_step_k1<D: Denoiser + ?Sized>(
    problem: &BridgeProblem,
    x_s: &[f64],
    s: f64,
    t: f64,
    denoiser: &CountedDenoiser<D>,
) -> Result<Vec<f64>> {
    check_order("ode_step_k1", s, t, false)?;
    check_time(problem, "ode_step_k1", t)?;
    let cs = problem.coeffs(s)?;
    if cs.rho == 0.0 {
        return Err(Error::Singularity {
            what: "ode_step_k1",
            t: s,
        });
    }
    let ct = problem.coeffs(t)?;
    let d_s = denoiser.evaluate(x_s, &cs, problem)?;
    k1_from_x0(problem, &cs, &ct, x_s, &d_s)
}

/// Second-order step: the denoiser's lambda-derivative is estimated by a
/// secant through the intermediate point `lambda_u = lambda_s + r (lambda_t - lambda_s)`.
pub fn ode_step_k2<D: Denoiser + ?Sized>(
    problem: &BridgeProblem,
    x_s: &[f64],
    s: f64,
    t: f64,
    midpoint_ratio: f64,
    denoiser: &CountedDenoiser<D>,
) -> Result<Vec<f64>> {
    if !(midpoint_ratio > 0.0 && midpoint_ratio < 1.0) {
        return Err(Error::Config(format!(
            "midpoint ratio must lie in (0, 1), got {midpoint_ratio}"
        )));
    }
    check_order("ode_step_k2", s, t, false)?;
    check_time(problem, "ode_step_k2", t)?;
    let cs = problem.coeffs(s)?;
    if cs.rho == 0.0 {
        return Err(Error::Singularity {
            what: "ode_step_k2",
            t: s,
        });
    }
    let ct = problem.coeffs(t)?;
    let lam_u = cs.lambda + midpoint_ratio * (ct.lambda - cs.lambda);
    let u = problem.schedule().t_of_lambda(lam_u)?.clamp(t, s);
    let cu = problem.coeffs(u)?;

    let d_s = denoiser.evaluate(x_s, &cs, problem)?;
    let x_u = k1_from_x0(problem, &cs, &cu, x_s, &d_s)?;
    let d_u = denoiser.evaluate(&x_u, &cu, problem)?;

    let h_u = cu.lambda - cs.lambda;
    let k = ode_coeffs_from(problem, &cs, &ct)?;
    let (i0, i1) = (k.integral(0)?, k.integral(1)?);
    Ok(combine(&k, x_s, problem.x_end(), |j| {
        let slope = if h_u > 0.0 { (d_u[j] - d_s[j]) / h_u } else { 0.0 };
        i0 * d_s[j] + i1 * slope
    }))
}

/// Explicit Euler step of the probability-flow ODE from `t_1` to 0.
pub fn final_euler_step<D: Denoiser + ?Sized>(
    problem: &BridgeProblem,
    x_1: &[f64],
    t_1: f64,
    denoiser: &CountedDenoiser<D>,
) -> Result<Vec<f64>> {
    euler_ode_step(problem, x_1, t_1, 0.0, denoiser)
}

/// Explicit Euler step of the probability-flow ODE from `s` to `t`.
pub fn euler_ode_step<D: Denoiser + ?Sized>(
    problem: &BridgeProblem,
    x_s: &[f64],
    s: f64,
    t: f64,
    denoiser: &CountedDenoiser<D>,
) -> Result<Vec<f64>> {
    check_order("euler_ode_step", s, t, true)?;
    let v = pf_ode_rhs(problem, x_s, s, denoiser)?;
    let dt = t - s;
    Ok(x_s.iter().zip(&v).map(|(x, vi)| x + dt * vi).collect())
}

/// Heun step of the probability-flow ODE; two evaluations, `t >= t_min`.
pub fn heun_step<D: Denoiser + ?Sized>(
    problem: &BridgeProblem,
    x_s: &[f64],
    s: f64,
    t: f64,
    denoiser: &CountedDenoiser<D>,
) -> Result<Vec<f64>> {
    check_order("heun_step", s, t, false)?;
    let dt = t - s;
    let v1 = pf_ode_rhs(problem, x_s, s, denoiser)?;
    let x_pred: Vec<f64> = x_s.iter().zip(&v1).map(|(x, v)| x + dt * v).collect();
    let v2 = pf_ode_rhs(problem, &x_pred, t, denoiser)?;
    Ok(x_s
        .iter()
        .zip(v1.iter().zip(&v2))
        .map(|(x, (a, b))| x + 0.5 * dt * (a + b))
        .collect())
}

/// Time at which baseline drifts are evaluated: the bridge scores diverge at
/// `T`, so a step leaving `T` uses `T - t_min`.
pub fn drift_eval_time(problem: &BridgeProblem, s: f64) -> f64 {
    if s >= problem.terminal_time() {
        problem.terminal_time() - problem.t_min()
    } else {
        s
    }
}

/// Euler-Maruyama step of the bridge SDE driven by the standard normal `z`.
pub fn em_step<D: Denoiser + ?Sized>(
    problem: &BridgeProblem,
    x_s: &[f64],
    s: f64,
    t: f64,
    denoiser: &CountedDenoiser<D>,
    z: &[f64],
) -> Result<Vec<f64>> {
    check_order("em_step", s, t, false)?;
    problem.check_dim(z)?;
    let s_eval = drift_eval_time(problem, s);
    let rhs = sde_rhs_deterministic(problem, x_s, s_eval, denoiser)?;
    let dt = t - s;
    let scale = rhs.diffusion * (s - t).sqrt();
    Ok(x_s
        .iter()
        .zip(&rhs.drift)
        .zip(z)
        .map(|((x, f), zi)| x + dt * f + scale * zi)
        .collect())
}

/// Posterior-reparameterization update
/// `x_t = a_t x_T + b_t D + (c_t / c_s)(x_s - a_s x_T - b_s D)`, one evaluation.
pub fn posterior_reparam_step<D: Denoiser + ?Sized>(
    problem: &BridgeProblem,
    x_s: &[f64],
    s: f64,
    t: f64,
    denoiser: &CountedDenoiser<D>,
) -> Result<Vec<f64>> {
    check_order("posterior_reparam_step", s, t, false)?;
    check_time(problem, "posterior_reparam_step", t)?;
    let cs = problem.coeffs(s)?;
    if cs.is_pinned() {
        return Err(Error::Singularity {
            what: "posterior_reparam_step",
            t: s,
        });
    }
    let ct = problem.coeffs(t)?;
    let d = denoiser.evaluate(x_s, &cs, problem)?;
    let shrink = (ct.c_sq / cs.c_sq).sqrt();
    Ok(x_s
        .iter()
        .zip(&d)
        .zip(problem.x_end())
        .map(|((&x, &di), &e)| ct.a * e + ct.b * di + shrink * (x - cs.a * e - cs.b * di))
        .collect())
}
