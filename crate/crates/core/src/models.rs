//! Analytic denoisers: exact posterior means for Gaussian and Gaussian-mixture
//! priors on `x_0`, plus constant and affine-in-lambda probes.
//!
//! The posterior formulas are written in terms of `alpha_t / sigma_t^2` and
//! `1 - SNR_T / SNR_t` instead of `b / c^2`. Both forms agree for `t < T`; the
//! former stays finite at `t = T`, where the bridge marginal collapses onto
//! `x_T` and the observation carries no information about `x_0`.

use serde::{Deserialize, Serialize};

use crate::bridge::{BridgeCoeffs, BridgeProblem, Denoiser};
use crate::error::{domain, Error, Result};
use crate::noise::NoiseStream;

/// `(a_t, b_t, c_t^2)` of the bridge marginal `N(a_t x_T + b_t x_0, c_t^2 I)`.
pub fn bridge_marginal_coeffs(problem: &BridgeProblem, t: f64) -> Result<(f64, f64, f64)> {
    if t.is_nan() || t < problem.t_min() || t > problem.terminal_time() {
        return Err(domain(
            "bridge_marginal_coeffs",
            format!("t = {t} outside [{}, {}]", problem.t_min(), problem.terminal_time()),
        ));
    }
    let c = problem.coeffs(t)?;
    Ok((c.a, c.b, c.c_sq))
}

/// Diagonal Gaussian prior on `x_0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianPrior {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

impl GaussianPrior {
    pub fn new(mean: Vec<f64>, var: Vec<f64>) -> Result<Self> {
        let p = Self { mean, var };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.mean.is_empty() || self.mean.len() != self.var.len() {
            return Err(Error::Config(
                "gaussian prior: mean and var must be non-empty and equal length".into(),
            ));
        }
        if self.mean.iter().any(|m| !m.is_finite()) || self.var.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::Config(
                "gaussian prior: entries must be finite with positive variances".into(),
            ));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn sample(&self, stream: &mut NoiseStream, out: &mut [f64]) {
        for ((o, m), v) in out.iter_mut().zip(&self.mean).zip(&self.var) {
            *o = m + v.sqrt() * stream.normal();
        }
    }
}

/// Diagonal Gaussian-mixture prior on `x_0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmmPrior {
    pub weights: Vec<f64>,
    pub means: Vec<Vec<f64>>,
    pub vars: Vec<Vec<f64>>,
}

impl GmmPrior {
    pub fn new(weights: Vec<f64>, means: Vec<Vec<f64>>, vars: Vec<Vec<f64>>) -> Result<Self> {
        let p = Self { weights, means, vars };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.weights.len();
        if k == 0 || self.means.len() != k || self.vars.len() != k {
            return Err(Error::Config("gmm prior: component counts disagree or are zero".into()));
        }
        if self.weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(Error::Config("gmm prior: weights must be positive".into()));
        }
        let total: f64 = self.weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::Config(format!("gmm prior: weights sum to {total}, not 1")));
        }
        let d = self.means[0].len();
        for (m, v) in self.means.iter().zip(&self.vars) {
            GaussianPrior {
                mean: m.clone(),
                var: v.clone(),
            }
            .validate()?;
            if m.len() != d {
                return Err(Error::Config("gmm prior: components differ in dimension".into()));
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.means[0].len()
    }

    pub fn n_components(&self) -> usize {
        self.weights.len()
    }

    pub fn sample(&self, stream: &mut NoiseStream, out: &mut [f64]) {
        let u = stream.uniform();
        let mut acc = 0.0;
        let mut k = self.n_components() - 1;
        for (i, w) in self.weights.iter().enumerate() {
            acc += w;
            if u < acc {
                k = i;
                break;
            }
        }
        for ((o, m), v) in out.iter_mut().zip(&self.means[k]).zip(&self.vars[k]) {
            *o = m + v.sqrt() * stream.normal();
        }
    }
}

/// Per-time constants of one Gaussian posterior: `mean = offset + gain * y`
/// with `y = x - a x_T`.
#[derive(Debug, Clone)]
struct PosteriorTable {
    offset: Vec<f64>,
    gain: Vec<f64>,
}

fn posterior_table(mean: &[f64], var: &[f64], at: &BridgeCoeffs) -> PosteriorTable {
    let s2 = at.sigma * at.sigma;
    let info = at.alpha * at.alpha * at.one_minus_ratio / s2;
    let obs = at.alpha / s2;
    let mut offset = Vec::with_capacity(mean.len());
    let mut gain = Vec::with_capacity(mean.len());
    for (m, v) in mean.iter().zip(var) {
        let p = 1.0 / v + info;
        offset.push(m / v / p);
        gain.push(obs / p);
    }
    PosteriorTable { offset, gain }
}

/// Exact `E[x_0 | x_t, x_T]` under a [`GaussianPrior`].
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPosteriorDenoiser {
    prior: GaussianPrior,
}

impl GaussianPosteriorDenoiser {
    pub fn new(prior: GaussianPrior) -> Self {
        Self { prior }
    }

    pub fn prior(&self) -> &GaussianPrior {
        &self.prior
    }
}

impl Denoiser for GaussianPosteriorDenoiser {
    fn denoise(&self, x: &[f64], at: &BridgeCoeffs, problem: &BridgeProblem, out: &mut [f64]) -> Result<()> {
        self.denoise_batch(x, at, problem, out)
    }

    fn denoise_batch(&self, xs: &[f64], at: &BridgeCoeffs, problem: &BridgeProblem, out: &mut [f64]) -> Result<()> {
        let d = problem.dim();
        if self.prior.dim() != d {
            return Err(Error::Dimension {
                expected: d,
                got: self.prior.dim(),
            });
        }
        let tab = posterior_table(&self.prior.mean, &self.prior.var, at);
        let x_end = problem.x_end();
        for (x, o) in xs.chunks_exact(d).zip(out.chunks_exact_mut(d)) {
            for j in 0..d {
                o[j] = tab.offset[j] + tab.gain[j] * (x[j] - at.a * x_end[j]);
            }
        }
        Ok(())
    }
}

/// Components whose responsibility falls below this are dropped.
const RESP_FLOOR: f64 = 1e-300;

/// Exact `E[x_0 | x_t, x_T]` under a [`GmmPrior`].
#[derive(Debug, Clone, PartialEq)]
pub struct GmmPosteriorDenoiser {
    prior: GmmPrior,
}

struct GmmTable {
    comps: Vec<PosteriorTable>,
    log_w: Vec<f64>,
    /// Per component: `b mu_k`, `1 / (b^2 v_k + c^2)` scaled by `1 - ratio`.
    centers: Vec<Vec<f64>>,
    inv_var: Vec<Vec<f64>>,
    pinned: bool,
}

impl GmmPosteriorDenoiser {
    pub fn new(prior: GmmPrior) -> Self {
        Self { prior }
    }

    pub fn prior(&self) -> &GmmPrior {
        &self.prior
    }

    fn table(&self, at: &BridgeCoeffs) -> GmmTable {
        let pinned = at.is_pinned();
        let mut comps = Vec::new();
        let mut log_w = Vec::new();
        let mut centers = Vec::new();
        let mut inv_var = Vec::new();
        for ((w, m), v) in self.prior.weights.iter().zip(&self.prior.means).zip(&self.prior.vars) {
            comps.push(posterior_table(m, v, at));
            let mut lw = w.ln();
            let mut ctr = Vec::with_capacity(m.len());
            let mut iv = Vec::with_capacity(m.len());
            for (mj, vj) in m.iter().zip(v) {
                // b^2 v + c^2 = (1 - ratio) (alpha^2 (1 - ratio) v + sigma^2); the
                // common (1 - ratio) factor cancels between components.
                let s = at.one_minus_ratio * (at.alpha * at.alpha * at.one_minus_ratio * vj + at.sigma * at.sigma);
                ctr.push(at.b * mj);
                iv.push(if pinned { 0.0 } else { 1.0 / s });
                if !pinned {
                    lw -= 0.5 * (at.alpha * at.alpha * at.one_minus_ratio * vj + at.sigma * at.sigma).ln();
                }
            }
            log_w.push(lw);
            centers.push(ctr);
            inv_var.push(iv);
        }
        GmmTable {
            comps,
            log_w,
            centers,
            inv_var,
            pinned,
        }
    }
}

impl Denoiser for GmmPosteriorDenoiser {
    fn denoise(&self, x: &[f64], at: &BridgeCoeffs, problem: &BridgeProblem, out: &mut [f64]) -> Result<()> {
        self.denoise_batch(x, at, problem, out)
    }

    fn denoise_batch(&self, xs: &[f64], at: &BridgeCoeffs, problem: &BridgeProblem, out: &mut [f64]) -> Result<()> {
        let d = problem.dim();
        if self.prior.dim() != d {
            return Err(Error::Dimension {
                expected: d,
                got: self.prior.dim(),
            });
        }
        let tab = self.table(at);
        let k = self.prior.n_components();
        let x_end = problem.x_end();
        let mut y = vec![0.0; d];
        let mut logr = vec![0.0; k];
        for (x, o) in xs.chunks_exact(d).zip(out.chunks_exact_mut(d)) {
            for j in 0..d {
                y[j] = x[j] - at.a * x_end[j];
            }
            let mut best = f64::NEG_INFINITY;
            for c in 0..k {
                let mut l = tab.log_w[c];
                if !tab.pinned {
                    for j in 0..d {
                        let r = y[j] - tab.centers[c][j];
                        l -= 0.5 * r * r * tab.inv_var[c][j];
                    }
                }
                logr[c] = l;
                best = best.max(l);
            }
            let mut total = 0.0;
            for l in logr.iter_mut() {
                *l = (*l - best).exp();
                total += *l;
            }
            let mut kept = 0.0;
            o.fill(0.0);
            for c in 0..k {
                let r = logr[c] / total;
                if r < RESP_FLOOR {
                    continue;
                }
                kept += r;
                let comp = &tab.comps[c];
                for j in 0..d {
                    o[j] += r * (comp.offset[j] + comp.gain[j] * y[j]);
                }
            }
            if kept != 1.0 {
                for v in o.iter_mut() {
                    *v /= kept;
                }
            }
        }
        Ok(())
    }
}

/// Returns a fixed vector regardless of the state.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstantDenoiser {
    value: Vec<f64>,
}

impl ConstantDenoiser {
    pub fn new(value: Vec<f64>) -> Self {
        Self { value }
    }

    pub fn value(&self) -> &[f64] {
        &self.value
    }
}

impl Denoiser for ConstantDenoiser {
    fn denoise(&self, _x: &[f64], _at: &BridgeCoeffs, problem: &BridgeProblem, out: &mut [f64]) -> Result<()> {
        if self.value.len() != problem.dim() {
            return Err(Error::Dimension {
                expected: problem.dim(),
                got: self.value.len(),
            });
        }
        out.copy_from_slice(&self.value);
        Ok(())
    }
}

/// Returns `c0 + c1 * lambda_t` regardless of the state.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineLambdaDenoiser {
    c0: Vec<f64>,
    c1: Vec<f64>,
}

impl AffineLambdaDenoiser {
    pub fn new(c0: Vec<f64>, c1: Vec<f64>) -> Result<Self> {
        if c0.len() != c1.len() {
            return Err(Error::Dimension {
                expected: c0.len(),
                got: c1.len(),
            });
        }
        Ok(Self { c0, c1 })
    }
}

impl Denoiser for AffineLambdaDenoiser {
    fn denoise(&self, _x: &[f64], at: &BridgeCoeffs, problem: &BridgeProblem, out: &mut [f64]) -> Result<()> {
        if self.c0.len() != problem.dim() {
            return Err(Error::Dimension {
                expected: problem.dim(),
                got: self.c0.len(),
            });
        }
        for ((o, a), b) in out.iter_mut().zip(&self.c0).zip(&self.c1) {
            *o = a + b * at.lambda;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bridge::CountedDenoiser;
    use crate::noise::Purpose;
    use crate::schedule::ScheduleParams;

    fn vp(x_end: Vec<f64>) -> BridgeProblem {
        BridgeProblem::new(ScheduleParams::vp(0.1, 20.0, 1.0), x_end).unwrap()
    }

    fn ve(x_end: Vec<f64>) -> BridgeProblem {
        BridgeProblem::new(ScheduleParams::ve(1.0, 1.0), x_end).unwrap()
    }

    /// Trapezoid posterior mean of `x_0` on a wide grid.
    fn quad_posterior_mean(prior_logpdf: impl Fn(f64) -> f64, a: f64, b: f64, c2: f64, x: f64, x_end: f64) -> f64 {
        let (lo, hi, n) = (-12.0, 12.0, 400_000);
        let h = (hi - lo) / n as f64;
        let logw = |x0: f64| {
            let r = x - a * x_end - b * x0;
            prior_logpdf(x0) - 0.5 * r * r / c2
        };
        let peak = (0..=n)
            .map(|i| logw(lo + i as f64 * h))
            .fold(f64::NEG_INFINITY, f64::max);
        let (mut num, mut den) = (0.0, 0.0);
        for i in 0..=n {
            let x0 = lo + i as f64 * h;
            let w = (logw(x0) - peak).exp() * if i == 0 || i == n { 0.5 } else { 1.0 };
            num += w * x0;
            den += w;
        }
        num / den
    }

    #[test]
    fn marginal_coeffs_endpoints() {
        let p = vp(vec![0.0]);
        let (a, b, c2) = bridge_marginal_coeffs(&p, 1.0).unwrap();
        assert_eq!((a, b, c2), (1.0, 0.0, 0.0));
        let (a, b, c2) = bridge_marginal_coeffs(&p, p.t_min()).unwrap();
        let alpha = p.schedule().alpha(p.t_min()).unwrap();
        assert!(a < 1e-5 && (b - alpha).abs() < 1e-5 && c2 < 1e-3);
        assert!(bridge_marginal_coeffs(&p, 0.0).is_err());
    }

    #[test]
    fn gaussian_matches_quadrature() {
        for p in [vp(vec![0.7]), ve(vec![0.7])] {
            let prior = GaussianPrior::new(vec![-0.3], vec![0.5]).unwrap();
            let den = GaussianPosteriorDenoiser::new(prior);
            for &t in &[0.05, 0.4, 0.9] {
                let at = p.coeffs(t).unwrap();
                for &x in &[-1.0, 0.2, 1.5] {
                    let mut out = [0.0];
                    den.denoise(&[x], &at, &p, &mut out).unwrap();
                    let q = quad_posterior_mean(|z| -0.5 * (z + 0.3) * (z + 0.3) / 0.5, at.a, at.b, at.c_sq, x, 0.7);
                    assert!((out[0] - q).abs() < 1e-8, "t={t} x={x}: {} vs {q}", out[0]);
                }
            }
        }
    }

    #[test]
    fn gaussian_limits() {
        let p = vp(vec![0.4]);
        let den = GaussianPosteriorDenoiser::new(GaussianPrior::new(vec![1.0], vec![2.0]).unwrap());
        let at = p.coeffs(p.t_min()).unwrap();
        let mut out = [0.0];
        den.denoise(&[0.3], &at, &p, &mut out).unwrap();
        assert!((out[0] - 0.3 / at.alpha).abs() < 1e-3);
        let at = p.coeffs(1.0).unwrap();
        den.denoise(&[0.4], &at, &p, &mut out).unwrap();
        assert_eq!(out[0], 1.0);
    }

    #[test]
    fn gmm_single_component_is_gaussian() {
        let p = vp(vec![0.2, -0.5]);
        let g = GaussianPosteriorDenoiser::new(GaussianPrior::new(vec![0.3, -1.0], vec![0.4, 1.3]).unwrap());
        let m =
            GmmPosteriorDenoiser::new(GmmPrior::new(vec![1.0], vec![vec![0.3, -1.0]], vec![vec![0.4, 1.3]]).unwrap());
        for &t in &[p.t_min(), 0.3, 0.999, 1.0] {
            let at = p.coeffs(t).unwrap();
            let x = [0.8, -0.1];
            let (mut a, mut b) = ([0.0; 2], [0.0; 2]);
            g.denoise(&x, &at, &p, &mut a).unwrap();
            m.denoise(&x, &at, &p, &mut b).unwrap();
            for j in 0..2 {
                assert!((a[j] - b[j]).abs() <= 1e-12 * a[j].abs().max(1.0));
            }
        }
    }

    #[test]
    fn gmm_symmetry_point() {
        let p = ve(vec![0.0]);
        let m = GmmPosteriorDenoiser::new(
            GmmPrior::new(vec![0.5, 0.5], vec![vec![-1.0], vec![1.0]], vec![vec![0.3], vec![0.3]]).unwrap(),
        );
        let at = p.coeffs(0.5).unwrap();
        let mut out = [1.0];
        m.denoise(&[0.0], &at, &p, &mut out).unwrap();
        assert!(out[0].abs() < 1e-15);
    }

    #[test]
    fn gmm_matches_quadrature() {
        let p = vp(vec![-0.6]);
        let (w, mu, v) = ([0.3, 0.7], [-1.5, 1.0], [0.2, 0.4]);
        let m = GmmPosteriorDenoiser::new(
            GmmPrior::new(
                w.to_vec(),
                mu.iter().map(|m| vec![*m]).collect(),
                v.iter().map(|v| vec![*v]).collect(),
            )
            .unwrap(),
        );
        let logpdf = |z: f64| {
            let dens: f64 = (0..2)
                .map(|k| w[k] * (-0.5 * (z - mu[k]).powi(2) / v[k]).exp() / (2.0 * std::f64::consts::PI * v[k]).sqrt())
                .sum();
            dens.ln()
        };
        for &t in &[0.02, 0.3, 0.8, 0.99] {
            let at = p.coeffs(t).unwrap();
            for &x in &[-1.0, 0.0, 0.9] {
                let mut out = [0.0];
                m.denoise(&[x], &at, &p, &mut out).unwrap();
                let q = quad_posterior_mean(logpdf, at.a, at.b, at.c_sq, x, -0.6);
                assert!((out[0] - q).abs() < 1e-7, "t={t} x={x}: {} vs {q}", out[0]);
            }
        }
    }

    #[test]
    fn gmm_at_terminal_time_uses_prior_weights() {
        let p = vp(vec![0.3]);
        let m = GmmPosteriorDenoiser::new(
            GmmPrior::new(
                vec![0.25, 0.75],
                vec![vec![-2.0], vec![2.0]],
                vec![vec![1.0], vec![1.0]],
            )
            .unwrap(),
        );
        let at = p.coeffs(1.0).unwrap();
        let mut out = [0.0];
        m.denoise(&[0.3], &at, &p, &mut out).unwrap();
        assert!((out[0] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn batch_equals_rows() {
        let p = vp(vec![0.1, 0.2]);
        let m = GmmPosteriorDenoiser::new(
            GmmPrior::new(
                vec![0.4, 0.6],
                vec![vec![-1.5, 0.0], vec![1.2, 0.8]],
                vec![vec![0.2, 0.3], vec![0.25, 0.15]],
            )
            .unwrap(),
        );
        let at = p.coeffs(0.37).unwrap();
        let xs = [0.1, -0.4, 2.0, 1.0, -3.0, 0.5];
        let mut batch = [0.0; 6];
        m.denoise_batch(&xs, &at, &p, &mut batch).unwrap();
        for r in 0..3 {
            let mut row = [0.0; 2];
            m.denoise(&xs[2 * r..2 * r + 2], &at, &p, &mut row).unwrap();
            assert_eq!(&batch[2 * r..2 * r + 2], &row);
        }
    }

    #[test]
    fn probes() {
        let p = vp(vec![0.0, 0.0]);
        let c = CountedDenoiser::new(ConstantDenoiser::new(vec![1.5, -2.0]));
        let a = CountedDenoiser::new(AffineLambdaDenoiser::new(vec![1.0, 0.0], vec![2.0, -1.0]).unwrap());
        let (t1, t2) = (0.2, 0.6);
        let (c1, c2) = (p.coeffs(t1).unwrap(), p.coeffs(t2).unwrap());
        assert_eq!(c.evaluate(&[9.0, 9.0], &c1, &p).unwrap(), vec![1.5, -2.0]);
        let d1 = a.evaluate(&[0.0, 0.0], &c1, &p).unwrap();
        let d2 = a.evaluate(&[5.0, 5.0], &c2, &p).unwrap();
        let slope = (d2[0] - d1[0]) / (c2.lambda - c1.lambda);
        assert!((slope - 2.0).abs() < 1e-12);
        assert!((d1[1] + c1.lambda).abs() < 1e-12);
        assert_eq!(a.count(), 2);
    }

    #[test]
    fn gmm_sampling_moments() {
        let prior = GmmPrior::new(vec![0.3, 0.7], vec![vec![-1.0], vec![2.0]], vec![vec![0.5], vec![0.25]]).unwrap();
        let mut s = NoiseStream::new(5, Purpose::Prior, 0);
        let n = 100_000;
        let mut sum = 0.0;
        let mut x = [0.0];
        for _ in 0..n {
            prior.sample(&mut s, &mut x);
            sum += x[0];
        }
        let mean = sum / n as f64;
        // E = 0.3 * -1 + 0.7 * 2 = 1.1; Var = 0.3*0.5 + 0.7*0.25 + 0.21*9 = 2.215
        assert!((mean - 1.1).abs() < 5.0 * (2.215 / n as f64).sqrt());
    }
}
