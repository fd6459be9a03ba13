use crate::error::{domain, Error, Result};

const MAX_DEPTH: u32 = 60;

fn integrand(n: usize, lam: f64, lam_s: f64, lam_end: f64, n_fact: f64) -> f64 {
    let r = (2.0 * (lam - lam_end)).exp_m1();
    (2.0 * lam).exp() * (lam - lam_s).powi(n as i32) / (n_fact * r.sqrt())
}

struct Simpson<F: Fn(f64) -> f64> {
    f: F,
    evals: usize,
}

impl<F: Fn(f64) -> f64> Simpson<F> {
    fn eval(&mut self, x: f64) -> f64 {
        self.evals += 1;
        (self.f)(x)
    }

    #[allow(clippy::too_many_arguments)]
    fn refine(
        &mut self,
        a: f64,
        fa: f64,
        m: f64,
        fm: f64,
        b: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> Result<f64> {
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (self.eval(lm), self.eval(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if delta.abs() <= 15.0 * tol {
            return Ok(left + right + delta / 15.0);
        }
        if depth >= MAX_DEPTH || m <= a || b <= m {
            return Err(Error::Oracle(format!(
                "adaptive Simpson did not reach tolerance {tol} on [{a}, {b}]"
            )));
        }
        Ok(self.refine(a, fa, lm, flm, m, fm, left, 0.5 * tol, depth + 1)?
            + self.refine(m, fm, rm, frm, b, fb, right, 0.5 * tol, depth + 1)?)
    }
}

/// Adaptive Simpson integration of `f` over `[a, b]` to absolute tolerance `tol`.
pub fn adaptive_simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> Result<f64> {
    if !(tol > 0.0) {
        return Err(domain(
            "adaptive_simpson",
            format!("tolerance must be positive, got {tol}"),
        ));
    }
    if a == b {
        return Ok(0.0);
    }
    let mut s = Simpson { f, evals: 0 };
    // Split into a few panels first so a narrow feature cannot be missed.
    let panels = 8;
    let h = (b - a) / panels as f64;
    let mut total = 0.0;
    for i in 0..panels {
        let lo = a + i as f64 * h;
        let hi = if i + 1 == panels { b } else { lo + h };
        let mid = 0.5 * (lo + hi);
        let (fl, fm, fh) = (s.eval(lo), s.eval(mid), s.eval(hi));
        let whole = (hi - lo) / 6.0 * (fl + 4.0 * fm + fh);
        total += s.refine(lo, fl, mid, fm, hi, fh, whole, tol / panels as f64, 0)?;
    }
    Ok(total)
}

/// Independent numerical evaluation of
/// `int_{lam_s}^{lam_t} e^{2 lam} (lam - lam_s)^n / (n! sqrt(rho(lam, lam_T))) d lam`
/// to absolute tolerance `tol`.
pub fn quadrature_oracle(n: usize, lam_s: f64, lam_t: f64, lam_end: f64, tol: f64) -> Result<f64> {
    if !(lam_end < lam_s && lam_s <= lam_t) {
        return Err(domain(
            "quadrature_oracle",
            format!("need lam_T < lam_s <= lam_t, got {lam_end}, {lam_s}, {lam_t}"),
        ));
    }
    let n_fact: f64 = (1..=n).map(|k| k as f64).product();
    adaptive_simpson(|l| integrand(n, l, lam_s, lam_end, n_fact), lam_s, lam_t, tol)
}

/// [`quadrature_oracle`] with a tolerance relative to the integral's magnitude,
/// estimated first by a coarse composite rule (the integrand is non-negative).
pub fn quadrature_oracle_relative(n: usize, lam_s: f64, lam_t: f64, lam_end: f64, rel_tol: f64) -> Result<f64> {
    if lam_s == lam_t {
        return quadrature_oracle(n, lam_s, lam_t, lam_end, 1.0);
    }
    let n_fact: f64 = (1..=n).map(|k| k as f64).product();
    let m = 64;
    let h = (lam_t - lam_s) / m as f64;
    let mut rough = 0.0;
    for i in 0..m {
        rough += integrand(n, lam_s + (i as f64 + 0.5) * h, lam_s, lam_end, n_fact) * h;
    }
    quadrature_oracle(n, lam_s, lam_t, lam_end, rel_tol * rough.abs().max(f64::MIN_POSITIVE))
}
