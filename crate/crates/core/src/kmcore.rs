//! Event-time table and the nominal Kaplan-Meier curve.

use crate::datacard::PatientRecord;
use serde::Serialize;
use std::ops::Range;

/// Per-patient inclusion flags `a_j`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct InclusionVector(Vec<bool>);

impl InclusionVector {
    pub fn new(flags: Vec<bool>) -> Self {
        Self(flags)
    }

    pub fn all(len: usize) -> Self {
        Self(vec![true; len])
    }

    pub fn none(len: usize) -> Self {
        Self(vec![false; len])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, j: usize) -> bool {
        self.0[j]
    }

    pub fn set(&mut self, j: usize, included: bool) {
        self.0[j] = included;
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.0
    }

    pub fn count(&self) -> usize {
        self.0.iter().filter(|&&a| a).count()
    }
}

impl From<Vec<bool>> for InclusionVector {
    fn from(flags: Vec<bool>) -> Self {
        Self(flags)
    }
}

/// At-risk and death counts at each event time for one inclusion vector.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Counts {
    pub at_risk: Vec<u32>,
    pub deaths: Vec<u32>,
}

/// Distinct death times of a candidate cohort, with enough per-patient
/// structure to evaluate `r_i(a)` and `d_i(a)` for any inclusion vector.
#[derive(Debug, Clone)]
pub struct TimeTable {
    times: Vec<f64>,
    /// Number of event times `t_i <= t_j`, i.e. the prefix of times at which
    /// patient `j` is at risk.
    risk_len: Vec<usize>,
    death_index: Vec<Option<usize>>,
    censored_time: Vec<Option<f64>>,
    in_universe: Vec<bool>,
    groups: Vec<Range<usize>>,
}

impl TimeTable {
    /// Builds the table over the patients flagged in `universe`. Other
    /// patients are carried along but never counted.
    pub fn build(patients: &[PatientRecord], universe: &InclusionVector) -> Self {
        let pairs: Vec<(f64, bool)> = patients
            .iter()
            .map(|p| (p.survival_time, p.censored))
            .collect();
        Self::from_times(&pairs, universe)
    }

    /// Builds the table from `(survival_time, censored)` pairs.
    pub fn from_times(patients: &[(f64, bool)], universe: &InclusionVector) -> Self {
        assert_eq!(patients.len(), universe.len(), "universe length must match cohort");
        let mut times: Vec<f64> = patients
            .iter()
            .zip(universe.as_slice())
            .filter(|((_, censored), &u)| u && !censored)
            .map(|((t, _), _)| *t)
            .collect();
        times.sort_by(|a, b| a.partial_cmp(b).expect("survival times are finite"));
        times.dedup();

        let risk_len: Vec<usize> = patients
            .iter()
            .map(|(t, _)| times.partition_point(|ti| ti <= t))
            .collect();
        let death_index = patients
            .iter()
            .zip(universe.as_slice())
            .zip(&risk_len)
            .map(|(((_, censored), &u), &len)| (u && !censored).then(|| len - 1))
            .collect();
        let censored_time = patients
            .iter()
            .zip(universe.as_slice())
            .map(|(&(t, censored), &u)| (u && censored).then_some(t))
            .collect();

        // A censoring in [t_i, t_{i+1}) separates t_i from t_{i+1}.
        let mut breaks_after = vec![false; times.len()];
        for (j, &(_, censored)) in patients.iter().enumerate() {
            if censored && universe.get(j) && risk_len[j] > 0 {
                breaks_after[risk_len[j] - 1] = true;
            }
        }
        let mut groups = Vec::new();
        let mut start = 0;
        for (i, &brk) in breaks_after.iter().enumerate() {
            if brk || i + 1 == times.len() {
                groups.push(start..i + 1);
                start = i + 1;
            }
        }

        Self {
            times,
            risk_len,
            death_index,
            censored_time,
            in_universe: universe.as_slice().to_vec(),
            groups,
        }
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    /// No death events at all: the curve is flat at 1.
    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn cohort_size(&self) -> usize {
        self.risk_len.len()
    }

    pub fn in_universe(&self, j: usize) -> bool {
        self.in_universe[j]
    }

    pub(crate) fn risk_len(&self, j: usize) -> usize {
        self.risk_len[j]
    }

    pub(crate) fn death_index(&self, j: usize) -> Option<usize> {
        self.death_index[j]
    }

    /// Survival time of patient `j` if it is a censored candidate.
    pub fn censored_time(&self, j: usize) -> Option<f64> {
        self.censored_time[j]
    }

    /// `r_i(a)` and `d_i(a)` for every event time.
    pub fn counts(&self, a: &InclusionVector) -> Counts {
        assert_eq!(a.len(), self.cohort_size(), "inclusion vector length must match cohort");
        let m = self.times.len();
        let mut starts = vec![0i64; m + 1];
        let mut deaths = vec![0u32; m];
        for j in 0..a.len() {
            if !a.get(j) || !self.in_universe[j] {
                continue;
            }
            starts[0] += 1;
            starts[self.risk_len[j]] -= 1;
            if let Some(i) = self.death_index[j] {
                deaths[i] += 1;
            }
        }
        let mut at_risk = Vec::with_capacity(m);
        let mut running = 0i64;
        for delta in &starts[..m] {
            running += delta;
            at_risk.push(running as u32);
        }
        Counts { at_risk, deaths }
    }

    /// Partition of the event times into runs with no censoring in between.
    pub fn collapse_groups(&self) -> &[Range<usize>] {
        &self.groups
    }

    /// Collapse groups covering times `0..=last`, with the group containing
    /// `last` truncated so that it ends there.
    pub fn groups_through(&self, last: usize) -> Vec<Range<usize>> {
        let mut out = Vec::new();
        for g in &self.groups {
            if g.start > last {
                break;
            }
            out.push(g.start..g.end.min(last + 1));
        }
        out
    }
}

/// Nominal Kaplan-Meier estimate `prod (1 - d_i / r_i)` at each table time.
/// Times where nobody included is at risk contribute a factor of one.
pub fn nominal_curve(table: &TimeTable, nominal: &InclusionVector) -> Vec<(f64, f64)> {
    let counts = table.counts(nominal);
    let mut survival = 1.0;
    table
        .times()
        .iter()
        .enumerate()
        .map(|(i, &t)| {
            let (r, d) = (counts.at_risk[i], counts.deaths[i]);
            assert!(d <= r, "deaths exceed at-risk count at t = {t}");
            if r > 0 {
                survival *= 1.0 - d as f64 / r as f64;
            }
            (t, survival)
        })
        .collect()
}

/// Kaplan-Meier product over times `0..=last` for given counts.
pub fn empirical_survival(counts: &Counts, last: usize) -> f64 {
    counts.at_risk[..=last]
        .iter()
        .zip(&counts.deaths[..=last])
        .filter(|(&r, _)| r > 0)
        .map(|(&r, &d)| 1.0 - d as f64 / r as f64)
        .product()
}
