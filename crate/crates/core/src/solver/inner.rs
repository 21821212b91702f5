//! Binomial NLL minimized over per-group survival probabilities subject to a
//! fixed product `prod p_i = S`.
//!
//! Stationarity of the Lagrangian gives the one-parameter family
//! `p_i(mu) = (r_i - d_i - mu) / (r_i - mu)`; `sum log p_i(mu)` decreases
//! monotonically in `mu`, so the multiplier is found by a scalar root solve.
//! Groups without deaths sit at `p = 1` until `mu` reaches their at-risk
//! count, after which the cheapest of them absorbs the remaining deficit
//! linearly. Groups with nobody at risk are unconstrained.

use super::SolverError;
use crate::likelihood::{LogTables, SurvivalVector};
use crate::numerics::{find_root, RootBracket};

#[derive(Debug, Clone, PartialEq)]
pub struct InnerSolution {
    pub p: SurvivalVector,
    pub nll: f64,
}

/// Constrained minimum of the binomial NLL over groups with at-risk counts
/// `r` and deaths `d`, subject to `prod p = s_target`. The endpoints
/// `s_target = 0` and `1` are evaluated as limits.
pub fn inner_solve(r: &[u32], d: &[u32], s_target: f64) -> Result<InnerSolution, SolverError> {
    let max = r.iter().copied().max().unwrap_or(0) as usize;
    solve_groups(r, d, s_target, &LogTables::new(max))
}

pub(crate) fn solve_groups(
    r: &[u32],
    d: &[u32],
    s_target: f64,
    tables: &LogTables,
) -> Result<InnerSolution, SolverError> {
    assert_eq!(r.len(), d.len());
    if !(0.0..=1.0).contains(&s_target) {
        return Err(SolverError::TargetOutOfRange(s_target));
    }
    let active: Vec<usize> = (0..r.len()).filter(|&i| r[i] > 0).collect();
    let mut p = vec![1.0; r.len()];

    if active.len() < r.len() {
        // A group nobody is at risk in can take any value, so the others
        // only need `prod p >= s_target`.
        let free = (0..r.len()).find(|&i| r[i] == 0).expect("some group is free");
        let mle: f64 = active.iter().map(|&i| 1.0 - d[i] as f64 / r[i] as f64).product();
        if mle >= s_target {
            let mut nll = 0.0;
            for &i in &active {
                p[i] = 1.0 - d[i] as f64 / r[i] as f64;
                nll += tables.binomial_minimum(r[i], d[i]);
            }
            p[free] = if mle > 0.0 { s_target / mle } else { 1.0 };
            return Ok(InnerSolution {
                p: SurvivalVector(p),
                nll,
            });
        }
    }

    let (r_act, d_act): (Vec<u32>, Vec<u32>) = active.iter().map(|&i| (r[i], d[i])).unzip();
    let (p_act, nll) = solve_equality(&r_act, &d_act, s_target, tables);
    for (&i, pi) in active.iter().zip(p_act) {
        p[i] = pi;
    }
    Ok(InnerSolution {
        p: SurvivalVector(p),
        nll,
    })
}

/// All groups have `r > 0`.
fn solve_equality(r: &[u32], d: &[u32], s: f64, tables: &LogTables) -> (Vec<f64>, f64) {
    let n = r.len();
    if n == 0 {
        // Empty product is 1.
        return (Vec::new(), if s == 1.0 { 0.0 } else { f64::INFINITY });
    }
    let mle: Vec<f64> = (0..n).map(|i| 1.0 - d[i] as f64 / r[i] as f64).collect();
    if s == 1.0 {
        let nll = (0..n).map(|i| tables.binomial_term(r[i], d[i], 1.0)).sum();
        return (vec![1.0; n], nll);
    }
    if s == 0.0 {
        // Some group must reach p = 0, which is free only where everyone died.
        let nll = (0..n).map(|i| tables.binomial_minimum(r[i], d[i])).sum();
        return match (0..n).find(|&i| d[i] == r[i]) {
            Some(_) => (mle, nll),
            None => {
                let mut p = mle;
                p[0] = 0.0;
                (p, f64::INFINITY)
            }
        };
    }
    let log_s = s.ln();

    let dying: Vec<usize> = (0..n).filter(|&i| d[i] > 0).collect();
    // Cheapest death-free group: the one with the smallest at-risk count.
    let spare = (0..n)
        .filter(|&i| d[i] == 0)
        .min_by_key(|&i| r[i]);
    let pole = dying
        .iter()
        .map(|&i| (r[i] - d[i]) as f64)
        .fold(f64::INFINITY, f64::min);

    let mut p = vec![1.0; n];
    let binomial = |p: &[f64]| -> f64 {
        dying
            .iter()
            .map(|&i| tables.binomial_term(r[i], d[i], p[i]))
            .sum::<f64>()
    };

    if let Some(k) = spare {
        let cap = r[k] as f64;
        if cap < pole {
            let at_cap = log_product(r, d, &dying, cap, 0.0);
            if at_cap > log_s {
                for &i in &dying {
                    p[i] = survival_at(r[i], d[i], cap, 0.0);
                }
                let deficit = log_s - at_cap;
                p[k] = deficit.exp();
                let nll = binomial(&p) - cap * deficit;
                return (p, nll);
            }
            let (w, hi) = solve_multiplier(r, d, &dying, cap, log_s);
            for &i in &dying {
                p[i] = survival_at(r[i], d[i], hi, w);
            }
            let nll = binomial(&p);
            return (p, nll);
        }
    }
    if dying.is_empty() {
        let k = spare.expect("every group is death-free");
        p[k] = s;
        return (p, -(r[k] as f64) * log_s);
    }
    let (w, hi) = solve_multiplier(r, d, &dying, pole, log_s);
    for &i in &dying {
        p[i] = survival_at(r[i], d[i], hi, w);
    }
    let nll = binomial(&p);
    (p, nll)
}

/// `p_i` at multiplier `mu = hi - w`, written so that the group defining the
/// pole keeps full relative precision as `w -> 0`.
fn survival_at(r: u32, d: u32, hi: f64, w: f64) -> f64 {
    let survivors = (r - d) as f64 - hi + w;
    let at_risk = r as f64 - hi + w;
    (survivors / at_risk).clamp(0.0, 1.0)
}

fn log_product(r: &[u32], d: &[u32], dying: &[usize], hi: f64, w: f64) -> f64 {
    dying
        .iter()
        .map(|&i| {
            let survivors = (r[i] - d[i]) as f64 - hi + w;
            let at_risk = r[i] as f64 - hi + w;
            let death_rate = d[i] as f64 / at_risk;
            if survivors <= 0.0 {
                f64::NEG_INFINITY
            } else if death_rate < 0.5 {
                (-death_rate).ln_1p()
            } else {
                survivors.ln() - at_risk.ln()
            }
        })
        .sum()
}

/// Solves `sum log p_i(hi - w) = log_s` for `w = exp(v) > 0`; returns `(w, hi)`.
fn solve_multiplier(r: &[u32], d: &[u32], dying: &[usize], hi: f64, log_s: f64) -> (f64, f64) {
    let f = |v: f64| log_product(r, d, dying, hi, v.exp()) - log_s;
    let mut v_hi = 0.0;
    while f(v_hi) < 0.0 {
        v_hi += 2.0;
        if v_hi > 700.0 {
            return (v_hi.exp(), hi);
        }
    }
    let mut v_lo = v_hi - 2.0;
    while f(v_lo) > 0.0 {
        v_lo -= 2.0;
        if v_lo < -740.0 {
            // The target sits at the cap itself.
            return (0.0, hi);
        }
    }
    let v = find_root(
        f,
        RootBracket::new(v_lo, v_hi)
            .with_tolerance(1e-13)
            .with_max_iterations(400),
    )
    .unwrap_or_else(|_| bisect_increasing(f, v_lo, v_hi));
    (v.exp(), hi)
}

fn bisect_increasing<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64) -> f64 {
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}
