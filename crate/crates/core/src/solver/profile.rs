//! Global fits, likelihood scans and band construction.

use super::inner::solve_groups;
use super::{
    BandInterval, BestFit, ConfidenceLevel, CurvePoint, ProfilePoint, SolverError, SurvivalProblem,
    UncertaintyMode,
};
use crate::kmcore::{empirical_survival, Counts, InclusionVector};
use crate::likelihood::SurvivalVector;
use crate::numerics::{find_root, RootBracket};
use rayon::prelude::*;
use std::ops::Range;

/// Closest approach to the `S = 0` and `S = 1` limits used when probing.
const PROBE_FLOOR: f64 = 1e-12;
/// Profile values above this are treated as "far beyond any threshold".
const DEVIANCE_CAP: f64 = 1e6;

impl SurvivalProblem {
    fn groups_for(&self, n: usize) -> Vec<Range<usize>> {
        if self.settings.collapse {
            self.table.groups_through(n)
        } else {
            (0..=n).map(|i| i..i + 1).collect()
        }
    }

    fn free_binomial(&self, counts: &Counts, from: usize) -> f64 {
        counts.at_risk[from..]
            .iter()
            .zip(&counts.deaths[from..])
            .map(|(&r, &d)| self.tables.binomial_minimum(r, d))
            .sum()
    }

    /// Binomial NLL for fixed counts with `prod_{i <= n} p_i = s`; times
    /// after `n` sit at their unconstrained optimum.
    fn constrained_binomial(
        &self,
        counts: &Counts,
        groups: &[Range<usize>],
        n: usize,
        s: f64,
    ) -> (f64, Option<SurvivalVector>) {
        let mut r = Vec::with_capacity(groups.len());
        let mut d = Vec::with_capacity(groups.len());
        let mut offset = 0.0;
        for g in groups {
            let members = &counts.deaths[g.clone()];
            r.push(counts.at_risk[g.start]);
            d.push(members.iter().sum());
            if g.len() > 1 {
                offset += self.tables.multinomial_offset(members);
            }
        }
        match solve_groups(&r, &d, s, &self.tables) {
            Ok(sol) if sol.nll.is_finite() => (
                sol.nll + offset + self.free_binomial(counts, n + 1),
                Some(sol.p),
            ),
            _ => (f64::INFINITY, None),
        }
    }

    fn search_vars(&self, mode: UncertaintyMode) -> &[usize] {
        match mode {
            UncertaintyMode::Full => &self.branch_vars,
            _ => &[],
        }
    }

    /// Unconstrained minimum of the total NLL. It does not depend on the time point.
    pub fn global_minimum(&self, mode: UncertaintyMode) -> BestFit {
        let (value, inclusion) = match mode {
            UncertaintyMode::PatientWiseOnly => {
                let a = self.cheapest_inclusion();
                (self.relative_patient_cost(&a), a)
            }
            _ => self.minimize_inclusions(self.search_vars(mode), self.settings.strategy, |c, _| {
                self.free_binomial(c, 0)
            }),
        };
        let counts = self.table.counts(&inclusion);
        BestFit {
            nll: value + self.patient_floor(),
            inclusion,
            counts,
        }
    }

    /// Each patient on its cheaper side.
    pub(crate) fn cheapest_inclusion(&self) -> InclusionVector {
        InclusionVector::new(
            (0..self.nominal.len())
                .map(|j| {
                    let [out, inc] = self.costs[j];
                    if out == inc {
                        self.nominal.get(j)
                    } else {
                        inc < out
                    }
                })
                .collect(),
        )
    }

    /// Minimum total NLL subject to `S(t_n) = s`.
    pub fn profile_scan(&self, s: f64, n: usize, mode: UncertaintyMode) -> Result<ProfilePoint, SolverError> {
        if mode == UncertaintyMode::PatientWiseOnly {
            return Err(SolverError::WrongMode(mode));
        }
        self.check_time(n)?;
        if !(0.0..=1.0).contains(&s) {
            return Err(SolverError::TargetOutOfRange(s));
        }
        let groups = self.groups_for(n);
        let (value, inclusion) = self.minimize_inclusions(self.search_vars(mode), self.settings.strategy, |c, _| {
            self.constrained_binomial(c, &groups, n, s).0
        });
        let counts = self.table.counts(&inclusion);
        let (_, p) = self.constrained_binomial(&counts, &groups, n, s);
        Ok(ProfilePoint {
            s,
            nll: value + self.patient_floor(),
            inclusion,
            survival: p.unwrap_or_else(|| SurvivalVector(vec![f64::NAN; groups.len()])),
        })
    }

    fn profile_value(&self, s: f64, n: usize, groups: &[Range<usize>], mode: UncertaintyMode) -> f64 {
        self.minimize_inclusions(self.search_vars(mode), self.settings.strategy, |c, _| {
            self.constrained_binomial(c, groups, n, s).0
        })
        .0
    }

    /// Event times at which a band is reported: somebody is nominally at risk.
    pub fn output_times(&self) -> Vec<usize> {
        let counts = self.table.counts(&self.nominal);
        (0..self.table.len()).filter(|&i| counts.at_risk[i] >= 1).collect()
    }

    /// Bands at every reported event time.
    pub fn confidence_band(&self, levels: &[ConfidenceLevel], mode: UncertaintyMode) -> Vec<CurvePoint> {
        let nominal = self.nominal_curve();
        let times = self.output_times();
        if mode == UncertaintyMode::PatientWiseOnly {
            let budget = levels.iter().map(|l| l.threshold()).fold(0.0, f64::max) / 2.0;
            return times
                .par_iter()
                .map(|&n| {
                    let profile = self.discrete_scan(n, budget);
                    let intervals = levels
                        .iter()
                        .map(|&level| {
                            let (lo, hi) = profile.bounds(level.threshold());
                            BandInterval { level, lo, hi }
                        })
                        .collect();
                    CurvePoint {
                        time: nominal[n].0,
                        time_index: n,
                        s_nominal: nominal[n].1,
                        s_best: profile.s_nominal(),
                        intervals,
                        error: profile
                            .is_truncated()
                            .then(|| "inclusion enumeration truncated".to_string()),
                    }
                })
                .collect();
        }
        let best = self.global_minimum(mode);
        let nll_min = best.nll - self.patient_floor();
        times
            .par_iter()
            .map(|&n| {
                let s_best = best.survival_at(n);
                let groups = self.groups_for(n);
                let deviance = |s: f64| 2.0 * (self.profile_value(s, n, &groups, mode) - nll_min);
                let mut errors = Vec::new();
                let upper = self.side_bounds(&deviance, s_best, true, levels, &mut errors);
                let lower = self.side_bounds(&deviance, s_best, false, levels, &mut errors);
                let intervals = levels
                    .iter()
                    .zip(lower.iter().zip(&upper))
                    .map(|(&level, (&lo, &hi))| BandInterval { level, lo, hi })
                    .collect();
                CurvePoint {
                    time: nominal[n].0,
                    time_index: n,
                    s_nominal: nominal[n].1,
                    s_best,
                    intervals,
                    error: (!errors.is_empty()).then(|| errors.join("; ")),
                }
            })
            .collect()
    }

    /// Threshold crossings on one side of `s_best`, one per level.
    fn side_bounds<F>(
        &self,
        deviance: &F,
        s_best: f64,
        upward: bool,
        levels: &[ConfidenceLevel],
        errors: &mut Vec<String>,
    ) -> Vec<f64>
    where
        F: Fn(f64) -> f64,
    {
        let limit = if upward { 1.0 } else { 0.0 };
        let span = if upward { 1.0 - s_best } else { s_best };
        if span <= 0.0 {
            return vec![limit; levels.len()];
        }
        // Log-spaced distances from the limit, shrinking towards it.
        let k = self.settings.probes.max(2);
        let floor = PROBE_FLOOR.min(span);
        let mut probes: Vec<f64> = (1..=k)
            .map(|i| {
                let dist = span * (floor / span).powf(i as f64 / k as f64);
                if upward {
                    1.0 - dist
                } else {
                    dist
                }
            })
            .collect();
        probes.push(limit);
        let values: Vec<f64> = probes.iter().map(|&s| deviance(s).min(DEVIANCE_CAP)).collect();

        levels
            .iter()
            .map(|level| {
                let threshold = level.threshold();
                let Some(idx) = values.iter().position(|&v| v >= threshold) else {
                    return limit;
                };
                let (inner, inner_value) = if idx == 0 {
                    (s_best, 0.0)
                } else {
                    (probes[idx - 1], values[idx - 1])
                };
                let outer = probes[idx];
                let (lo, hi) = if upward { (inner, outer) } else { (outer, inner) };
                let f = |s: f64| deviance(s).min(DEVIANCE_CAP) - threshold;
                if inner_value >= threshold {
                    return inner;
                }
                let bracket = RootBracket::new(lo, hi)
                    .with_tolerance(self.settings.root_tolerance)
                    .with_max_iterations(self.settings.max_iterations);
                match find_root(f, bracket) {
                    Ok(s) => s,
                    Err(e) => {
                        errors.push(format!("{} bound at CL {}: {e}", if upward { "upper" } else { "lower" }, level.label()));
                        0.5 * (lo + hi)
                    }
                }
            })
            .collect()
    }

    /// Survival at time `n` for a given inclusion with empirical per-time rates.
    pub(crate) fn empirical_at(&self, a: &InclusionVector, n: usize) -> f64 {
        empirical_survival(&self.table.counts(a), n)
    }
}
