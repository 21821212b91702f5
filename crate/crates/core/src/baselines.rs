//! Greenwood intervals and the conventional log-rank test.

use crate::kmcore::Counts;
use crate::numerics::{chi2_sf_1dof, two_sided_z};
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum GreenwoodMethod {
    Plain,
    Exponential,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GreenwoodPoint {
    pub s_hat: f64,
    /// `None` where the interval is undefined.
    pub bounds: Option<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GreenwoodBand {
    pub method: GreenwoodMethod,
    pub level: f64,
    pub points: Vec<GreenwoodPoint>,
}

/// Running `(S_hat, sum d / (r (r - d)))`; the sum is infinite once `r = d`.
fn accumulate(counts: &Counts) -> Vec<(f64, f64)> {
    let mut s = 1.0;
    let mut var = 0.0;
    counts
        .at_risk
        .iter()
        .zip(&counts.deaths)
        .map(|(&r, &d)| {
            if r > 0 && d > 0 {
                let (r, d) = (r as f64, d as f64);
                s *= 1.0 - d / r;
                var += if r > d { d / (r * (r - d)) } else { f64::INFINITY };
            }
            (s, var)
        })
        .collect()
}

/// `S_hat +- z sqrt(S_hat^2 sum d / (r (r - d)))`. Bounds may leave `[0, 1]`.
pub fn greenwood(counts: &Counts, level: f64) -> GreenwoodBand {
    let z = two_sided_z(level);
    let points = accumulate(counts)
        .into_iter()
        .map(|(s_hat, var)| GreenwoodPoint {
            s_hat,
            bounds: var.is_finite().then(|| {
                let half = z * (s_hat * s_hat * var).sqrt();
                (s_hat - half, s_hat + half)
            }),
        })
        .collect();
    GreenwoodBand {
        method: GreenwoodMethod::Plain,
        level,
        points,
    }
}

/// Interval on the `log(-log S)` scale, mapped back through `exp(-exp(v))`.
pub fn exponential_greenwood(counts: &Counts, level: f64) -> GreenwoodBand {
    let z = two_sided_z(level);
    let points = accumulate(counts)
        .into_iter()
        .map(|(s_hat, var)| {
            let defined = s_hat > 0.0 && s_hat < 1.0 && var.is_finite();
            GreenwoodPoint {
                s_hat,
                bounds: defined.then(|| {
                    let log_s = s_hat.ln();
                    let centre = (-log_s).ln();
                    let half = z * (var / (log_s * log_s)).sqrt();
                    // v+ gives the lower survival bound.
                    ((-(centre + half).exp()).exp(), (-(centre - half).exp()).exp())
                }),
            }
        })
        .collect();
    GreenwoodBand {
        method: GreenwoodMethod::Exponential,
        level,
        points,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LogRankResult {
    pub u: f64,
    pub var_u: f64,
    pub q: f64,
    pub p: f64,
    /// No informative event time: `p` is reported as 1.
    pub degenerate: bool,
}

/// A survival time and censoring flag.
pub type Observation = (f64, bool);

/// Log-rank test of curve 1 against curve 0 on the union of their event times.
///
/// `U = sum (d1 - d n1 / n)` with hypergeometric variance
/// `sum d n0 n1 (n - d) / (n^2 (n - 1))`.
pub fn conventional_logrank(curve0: &[Observation], curve1: &[Observation]) -> LogRankResult {
    let mut times: Vec<f64> = curve0
        .iter()
        .chain(curve1)
        .filter(|o| !o.1)
        .map(|o| o.0)
        .collect();
    times.sort_by(f64::total_cmp);
    times.dedup();

    let tally = |obs: &[Observation], t: f64| -> (f64, f64) {
        let at_risk = obs.iter().filter(|o| o.0 >= t).count() as f64;
        let deaths = obs.iter().filter(|o| o.0 == t && !o.1).count() as f64;
        (at_risk, deaths)
    };
    let (mut u, mut var) = (0.0, 0.0);
    for &t in &times {
        let (n0, d0) = tally(curve0, t);
        let (n1, d1) = tally(curve1, t);
        let (n, d) = (n0 + n1, d0 + d1);
        if n0 == 0.0 || n1 == 0.0 {
            continue;
        }
        u += d1 - d * n1 / n;
        if n > 1.0 {
            var += d * n0 * n1 * (n - d) / (n * n * (n - 1.0));
        }
    }
    if var <= 0.0 {
        return LogRankResult {
            u,
            var_u: var,
            q: 0.0,
            p: 1.0,
            degenerate: true,
        };
    }
    let q = u * u / var;
    LogRankResult {
        u,
        var_u: var,
        q,
        p: chi2_sf_1dof(q),
        degenerate: false,
    }
}
