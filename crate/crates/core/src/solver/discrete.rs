//! Patient-wise-only scans: survival probabilities are pinned to their
//! empirical values, so `S` only takes the discrete values reachable by
//! flipping inclusions.

use super::SurvivalProblem;
use crate::kmcore::InclusionVector;

/// Upper bound on enumerated inclusion vectors per time point.
const MAX_POINTS: usize = 1 << 21;

/// Achievable `(S, patient NLL)` pairs at one time, with monotone envelopes.
///
/// On each side of the nominal estimate, the profile at `S` is the cheapest
/// achievable point at least as far from the nominal value as `S`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteProfile {
    s_nominal: f64,
    /// Sorted by `S`; costs relative to the cheapest point.
    points: Vec<(f64, f64)>,
    /// Points with `S >= s_nominal`, sorted by `S`, cost replaced by the suffix minimum.
    upper: Vec<(f64, f64)>,
    /// Points with `S <= s_nominal`, sorted by `S`, cost replaced by the prefix minimum.
    lower: Vec<(f64, f64)>,
    truncated: bool,
}

impl DiscreteProfile {
    /// Builds the profile from raw achievable points.
    pub fn from_points(s_nominal: f64, mut points: Vec<(f64, f64)>, truncated: bool) -> Self {
        points.retain(|p| p.1.is_finite());
        points.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
        let floor = points.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
        for p in &mut points {
            p.1 -= floor;
        }

        let mut upper: Vec<(f64, f64)> = points.iter().copied().filter(|p| p.0 >= s_nominal).collect();
        for i in (0..upper.len().saturating_sub(1)).rev() {
            upper[i].1 = upper[i].1.min(upper[i + 1].1);
        }
        let mut lower: Vec<(f64, f64)> = points.iter().copied().filter(|p| p.0 <= s_nominal).collect();
        for i in 1..lower.len() {
            lower[i].1 = lower[i].1.min(lower[i - 1].1);
        }
        Self {
            s_nominal,
            points,
            upper,
            lower,
            truncated,
        }
    }

    pub fn s_nominal(&self) -> f64 {
        self.s_nominal
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    /// True if enumeration stopped early and the profile may be incomplete.
    pub fn is_truncated(&self) -> bool {
        self.truncated
    }

    /// Profile NLL (relative to its minimum) at `s`; infinite where no
    /// achievable point lies at least as far out.
    pub fn evaluate(&self, s: f64) -> f64 {
        if s >= self.s_nominal {
            let i = self.upper.partition_point(|p| p.0 < s);
            self.upper.get(i).map_or(f64::INFINITY, |p| p.1)
        } else {
            let i = self.lower.partition_point(|p| p.0 <= s);
            if i == 0 {
                f64::INFINITY
            } else {
                self.lower[i - 1].1
            }
        }
    }

    /// Extremes of `S` over achievable points with `2 * NLL <= threshold`.
    pub fn bounds(&self, threshold: f64) -> (f64, f64) {
        let mut lo = self.s_nominal;
        let mut hi = self.s_nominal;
        for &(s, cost) in &self.points {
            if 2.0 * cost <= threshold {
                lo = lo.min(s);
                hi = hi.max(s);
            }
        }
        (lo, hi)
    }
}

impl SurvivalProblem {
    /// Enumerates inclusion vectors whose patient NLL exceeds the cheapest
    /// assignment by at most `budget` and records `S(t_n)` for each.
    pub fn discrete_scan(&self, n: usize, budget: f64) -> DiscreteProfile {
        let s_nominal = crate::kmcore::empirical_survival(&self.table.counts(&self.nominal), n);
        let base = self.cheapest_inclusion();
        // Only patients at risk at the first event time can move S.
        let mut flips: Vec<(usize, f64)> = self
            .branch_vars
            .iter()
            .filter(|&&j| self.table.in_universe(j) && self.table.risk_len(j) > 0)
            .map(|&j| {
                let c = self.costs[j];
                (j, (c[0] - c[1]).abs())
            })
            .filter(|&(_, c)| c <= budget)
            .collect();
        flips.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));

        let mut enumerator = Enumerator {
            problem: self,
            flips: &flips,
            budget,
            n,
            a: base.clone(),
            points: Vec::new(),
            truncated: false,
        };
        if base != self.nominal {
            enumerator.points.push((s_nominal, self.relative_patient_cost(&self.nominal)));
        }
        enumerator.visit(0, self.relative_patient_cost(&base));
        DiscreteProfile::from_points(s_nominal, enumerator.points, enumerator.truncated)
    }
}

struct Enumerator<'a> {
    problem: &'a SurvivalProblem,
    flips: &'a [(usize, f64)],
    budget: f64,
    n: usize,
    a: InclusionVector,
    points: Vec<(f64, f64)>,
    truncated: bool,
}

impl Enumerator<'_> {
    fn visit(&mut self, k: usize, cost: f64) {
        if self.points.len() >= MAX_POINTS {
            self.truncated = true;
            return;
        }
        let s = self.problem.empirical_at(&self.a, self.n);
        self.points.push((s, cost));
        for next in k..self.flips.len() {
            let (j, c) = self.flips[next];
            // Flips are sorted by cost, so later ones are no cheaper.
            if cost + c > self.budget {
                break;
            }
            let was = self.a.get(j);
            self.a.set(j, !was);
            self.visit(next + 1, cost + c);
            self.a.set(j, was);
        }
    }
}
