//! Shared numerical kernels: bracketed root finding, chi-square and normal
//! tail functions, and log-factorials.

use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

pub const DEFAULT_ROOT_TOLERANCE: f64 = 1e-9;
pub const DEFAULT_MAX_ITERATIONS: usize = 200;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RootError {
    #[error("no sign change on [{lo}, {hi}] (f(lo) = {f_lo}, f(hi) = {f_hi})")]
    NoSignChange { lo: f64, hi: f64, f_lo: f64, f_hi: f64 },
    #[error("root finder did not converge after {iterations} iterations (last x = {last_x})")]
    IterationLimit { iterations: usize, last_x: f64 },
    #[error("invalid bracket [{lo}, {hi}]")]
    InvalidBracket { lo: f64, hi: f64 },
}

/// An interval known to contain a root of some function.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RootBracket {
    pub lo: f64,
    pub hi: f64,
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl RootBracket {
    pub fn new(lo: f64, hi: f64) -> Self {
        Self {
            lo,
            hi,
            tolerance: DEFAULT_ROOT_TOLERANCE,
            max_iterations: DEFAULT_MAX_ITERATIONS,
        }
    }

    pub fn with_tolerance(mut self, tolerance: f64) -> Self {
        self.tolerance = tolerance;
        self
    }

    pub fn with_max_iterations(mut self, max_iterations: usize) -> Self {
        self.max_iterations = max_iterations;
        self
    }
}

/// Brent's method: inverse quadratic interpolation and secant steps, falling
/// back to bisection whenever an interpolated step is not trustworthy.
///
/// Returns as soon as `|f(x)|` or the bracket width drops below the tolerance.
/// A zero at either endpoint is returned directly.
pub fn find_root<F>(mut f: F, bracket: RootBracket) -> Result<f64, RootError>
where
    F: FnMut(f64) -> f64,
{
    let RootBracket {
        lo,
        hi,
        tolerance,
        max_iterations,
    } = bracket;
    if !(lo < hi) || lo.is_nan() || hi.is_nan() {
        return Err(RootError::InvalidBracket { lo, hi });
    }
    let (mut a, mut b) = (lo, hi);
    let (mut fa, mut fb) = (f(a), f(b));
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if fa.signum() == fb.signum() || fa.is_nan() || fb.is_nan() {
        // A root where f touches zero without crossing is still accepted.
        if let Some(x) = touching_root(&mut f, lo, hi, tolerance, max_iterations) {
            return Ok(x);
        }
        return Err(RootError::NoSignChange {
            lo,
            hi,
            f_lo: fa,
            f_hi: fb,
        });
    }

    // b is the best estimate, a the previous one, c the contrapoint.
    let (mut c, mut fc) = (a, fa);
    let mut d = b - a;
    let mut e = d;
    for _ in 0..max_iterations {
        if fb.signum() == fc.signum() {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
        if fc.abs() < fb.abs() {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        let tol = 2.0 * f64::EPSILON * b.abs() + 0.5 * tolerance;
        let m = 0.5 * (c - b);
        if m.abs() <= tol || fb == 0.0 || fb.abs() < tolerance * 1e-3 {
            return Ok(b);
        }
        if e.abs() >= tol && fa.abs() > fb.abs() && fa.is_finite() && fc.is_finite() {
            let s = fb / fa;
            let (mut p, mut q);
            if a == c {
                p = 2.0 * m * s;
                q = 1.0 - s;
            } else {
                let qa = fa / fc;
                let r = fb / fc;
                p = s * (2.0 * m * qa * (qa - r) - (b - a) * (r - 1.0));
                q = (qa - 1.0) * (r - 1.0) * (s - 1.0);
            }
            if p > 0.0 {
                q = -q;
            } else {
                p = -p;
            }
            if 2.0 * p < (3.0 * m * q - (tol * q).abs()).min((e * q).abs()) {
                e = d;
                d = p / q;
            } else {
                d = m;
                e = m;
            }
        } else {
            d = m;
            e = m;
        }
        a = b;
        fa = fb;
        b += if d.abs() > tol { d } else { tol.copysign(m) };
        fb = f(b);
        if fb.is_nan() {
            // Treat NaN as a failed interpolation and bisect instead.
            b = a + m;
            fb = f(b);
        }
    }
    Err(RootError::IterationLimit {
        iterations: max_iterations,
        last_x: b,
    })
}

/// Golden-section search for the minimum of `|f|`; returns it if it is a zero.
fn touching_root<F>(f: &mut F, lo: f64, hi: f64, tolerance: f64, max_iterations: usize) -> Option<f64>
where
    F: FnMut(f64) -> f64,
{
    let inv_phi = 0.5 * (5f64.sqrt() - 1.0);
    let (mut a, mut b) = (lo, hi);
    let mut x1 = b - inv_phi * (b - a);
    let mut x2 = a + inv_phi * (b - a);
    let (mut f1, mut f2) = (f(x1).abs(), f(x2).abs());
    for _ in 0..max_iterations {
        if b - a <= tolerance {
            break;
        }
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - inv_phi * (b - a);
            f1 = f(x1).abs();
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + inv_phi * (b - a);
            f2 = f(x2).abs();
        }
    }
    let (x, fx) = if f1 <= f2 { (x1, f1) } else { (x2, f2) };
    (fx <= tolerance).then_some(x)
}

/// Upper tail of the chi-square distribution with one degree of freedom.
pub fn chi2_sf_1dof(q: f64) -> f64 {
    assert!(q >= 0.0, "chi-square statistic must be non-negative, got {q}");
    libm::erfc((0.5 * q).sqrt()).clamp(0.0, 1.0)
}

/// Quantile of the chi-square distribution with one degree of freedom at
/// cumulative probability `cl`, so that `chi2_sf_1dof(q) == 1 - cl`.
pub fn chi2_quantile_1dof(cl: f64) -> f64 {
    assert!((0.0..1.0).contains(&cl), "confidence level must lie in [0, 1)");
    let z = normal_quantile(0.5 + 0.5 * cl);
    z * z
}

/// Inverse CDF of the standard normal distribution.
pub fn normal_quantile(p: f64) -> f64 {
    Normal::standard().inverse_cdf(p)
}

/// Two-sided critical value `z_{alpha/2}` for a confidence level `1 - alpha`.
pub fn two_sided_z(cl: f64) -> f64 {
    normal_quantile(0.5 + 0.5 * cl)
}

const EXACT_FACTORIAL_LIMIT: u64 = 20;

/// `log(n!)`, summed exactly for small `n` and via log-gamma beyond.
pub fn log_factorial(n: u64) -> f64 {
    if n <= EXACT_FACTORIAL_LIMIT {
        (2..=n).map(|k| (k as f64).ln()).sum()
    } else {
        statrs::function::gamma::ln_gamma(n as f64 + 1.0)
    }
}

/// `log C(n, k)`; `-inf` when `k > n`.
pub fn log_binomial(n: u64, k: u64) -> f64 {
    if k > n {
        return f64::NEG_INFINITY;
    }
    log_factorial(n) - log_factorial(k) - log_factorial(n - k)
}

/// `x log x` with the convention `0 log 0 = 0`.
pub fn xlogx(x: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x * x.ln()
    }
}

/// `x log y` with `0 log y = 0` for any `y`, including `y = 0`.
pub fn xlogy(x: f64, y: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x * y.ln()
    }
}

/// Numerically stable `log(sum(exp(terms)))`.
pub fn log_sum_exp(terms: &[f64]) -> f64 {
    let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln()
}
