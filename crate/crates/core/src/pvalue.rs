//! Likelihood-based comparison of two survival curves.
//!
//! Patients are assigned to curve 0, curve 1 or neither. For a given
//! assignment the Cox partial likelihood with a constant hazard ratio `H`
//! (curve 1 relative to curve 0) is combined with the patient penalties of
//! the chosen regions. The null hypothesis pins `H = 1`.

use crate::datacard::PatientRecord;
use crate::kmcore::{Counts, InclusionVector, TimeTable};
use crate::numerics::{chi2_sf_1dof, find_root, log_binomial, log_sum_exp, RootBracket};
use crate::observables::{InclusionRange, ObservableModel};
use crate::solver::SearchStrategy;
use serde::Serialize;
use thiserror::Error;

/// Search interval for `log H`.
pub const LOG_HAZARD_LIMIT: f64 = 20.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PValueError {
    #[error("assignment length {got} does not match cohort size {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("curve ranges overlap: [{0}, {1}) and [{2}, {3})")]
    OverlappingRanges(f64, f64, f64, f64),
    #[error("patient {0} has no feasible region")]
    Infeasible(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Membership {
    Curve0,
    Curve1,
    Neither,
}

impl Membership {
    pub const ALL: [Membership; 3] = [Membership::Curve0, Membership::Curve1, Membership::Neither];

    fn index(self) -> usize {
        match self {
            Self::Curve0 => 0,
            Self::Curve1 => 1,
            Self::Neither => 2,
        }
    }
}

/// Per-patient membership; a patient is never in both curves.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct AssignmentVector(pub Vec<Membership>);

impl AssignmentVector {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Inclusion vector of one curve.
    pub fn curve(&self, k: Membership) -> InclusionVector {
        InclusionVector::new(self.0.iter().map(|&m| m == k).collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CoxMethod {
    Breslow,
    Exact,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PValueMethod {
    Breslow,
    Exact,
    CoxOnlyBreslow,
    CoxOnlyExact,
}

impl PValueMethod {
    pub fn name(self) -> &'static str {
        match self {
            Self::Breslow => "breslow",
            Self::Exact => "exact",
            Self::CoxOnlyBreslow => "cox_only_breslow",
            Self::CoxOnlyExact => "cox_only_exact",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PValueOptions {
    pub float_assignments: bool,
    pub use_exact: bool,
}

impl Default for PValueOptions {
    fn default() -> Self {
        Self {
            float_assignments: true,
            use_exact: false,
        }
    }
}

impl PValueOptions {
    pub fn cox(&self) -> CoxMethod {
        if self.use_exact {
            CoxMethod::Exact
        } else {
            CoxMethod::Breslow
        }
    }

    pub fn method(&self) -> PValueMethod {
        match (self.float_assignments, self.use_exact) {
            (true, false) => PValueMethod::Breslow,
            (true, true) => PValueMethod::Exact,
            (false, false) => PValueMethod::CoxOnlyBreslow,
            (false, true) => PValueMethod::CoxOnlyExact,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PValueReport {
    pub nll_null: f64,
    pub nll_alt: f64,
    pub h_hat: f64,
    pub statistic: f64,
    pub p: f64,
    pub method: PValueMethod,
    /// A curve is empty under every feasible assignment; `p` is set to 1.
    pub degenerate: bool,
}

/// Per-time counts for the two curves, restricted to times with deaths.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoxTime {
    pub r0: u32,
    pub r1: u32,
    pub d0: u32,
    pub d1: u32,
}

pub fn cox_times(c0: &Counts, c1: &Counts) -> Vec<CoxTime> {
    (0..c0.at_risk.len())
        .map(|i| CoxTime {
            r0: c0.at_risk[i],
            r1: c1.at_risk[i],
            d0: c0.deaths[i],
            d1: c1.deaths[i],
        })
        .filter(|t| t.d0 + t.d1 > 0)
        .collect()
}

/// `-sum [d1 log H - d log(r0 + H r1)]`.
pub fn cox_nll_breslow(times: &[CoxTime], log_h: f64) -> f64 {
    let h = log_h.exp();
    times
        .iter()
        .map(|t| {
            let d = (t.d0 + t.d1) as f64;
            let denom = t.r0 as f64 + h * t.r1 as f64;
            if denom <= 0.0 {
                return f64::INFINITY;
            }
            d * denom.ln() - t.d1 as f64 * log_h
        })
        .sum()
}

fn breslow_slope(times: &[CoxTime], log_h: f64) -> f64 {
    let h = log_h.exp();
    times
        .iter()
        .map(|t| {
            let d = (t.d0 + t.d1) as f64;
            let w1 = h * t.r1 as f64;
            let share = if w1 == 0.0 { 0.0 } else { w1 / (t.r0 as f64 + w1) };
            d * share - t.d1 as f64
        })
        .sum()
}

/// `log Z` terms `log C(r0, d - m) + log C(r1, m) + m log H` over feasible `m`.
fn normalization_terms(t: &CoxTime, log_h: f64) -> (Vec<f64>, Vec<f64>) {
    let d = t.d0 + t.d1;
    let lo = d.saturating_sub(t.r0);
    let hi = d.min(t.r1);
    (lo..=hi)
        .map(|m| {
            let term = log_binomial(t.r0 as u64, (d - m) as u64) + log_binomial(t.r1 as u64, m as u64);
            (term + m as f64 * log_h, m as f64)
        })
        .unzip()
}

/// Exact partial likelihood: the per-time probability of `d1` of the `d`
/// deaths falling in curve 1, a noncentral hypergeometric law in `H`.
pub fn cox_nll_exact(times: &[CoxTime], log_h: f64) -> f64 {
    times
        .iter()
        .map(|t| {
            let (terms, _) = normalization_terms(t, log_h);
            if terms.is_empty() {
                return f64::INFINITY;
            }
            let numerator = log_binomial(t.r0 as u64, t.d0 as u64)
                + log_binomial(t.r1 as u64, t.d1 as u64)
                + t.d1 as f64 * log_h;
            log_sum_exp(&terms) - numerator
        })
        .sum()
}

fn exact_slope(times: &[CoxTime], log_h: f64) -> f64 {
    times
        .iter()
        .map(|t| {
            let (terms, ms) = normalization_terms(t, log_h);
            let norm = log_sum_exp(&terms);
            let mean: f64 = terms.iter().zip(&ms).map(|(l, m)| m * (l - norm).exp()).sum();
            mean - t.d1 as f64
        })
        .sum()
}

pub fn cox_nll(times: &[CoxTime], log_h: f64, method: CoxMethod) -> f64 {
    match method {
        CoxMethod::Breslow => cox_nll_breslow(times, log_h),
        CoxMethod::Exact => cox_nll_exact(times, log_h),
    }
}

/// Minimizes the Cox NLL over `log H` in `[-20, 20]`; returns `(log H, nll)`.
///
/// The NLL is convex in `log H`, so the minimum is the root of its
/// increasing derivative, or an endpoint if the derivative does not change sign.
pub fn fit_log_hazard(times: &[CoxTime], method: CoxMethod) -> (f64, f64) {
    let slope = |b: f64| match method {
        CoxMethod::Breslow => breslow_slope(times, b),
        CoxMethod::Exact => exact_slope(times, b),
    };
    let (s_lo, s_hi) = (slope(-LOG_HAZARD_LIMIT), slope(LOG_HAZARD_LIMIT));
    let beta = if s_lo.abs() < 1e-12 && s_hi.abs() < 1e-12 {
        // No time with both curves at risk: H is not identified.
        0.0
    } else if s_lo >= 0.0 {
        -LOG_HAZARD_LIMIT
    } else if s_hi <= 0.0 {
        LOG_HAZARD_LIMIT
    } else {
        find_root(
            slope,
            RootBracket::new(-LOG_HAZARD_LIMIT, LOG_HAZARD_LIMIT)
                .with_tolerance(1e-12)
                .with_max_iterations(300),
        )
        .expect("slope changes sign on the bracket")
    };
    (beta, cox_nll(times, beta, method))
}

/// Two curves over disjoint observable ranges, with a per-patient penalty
/// for each region (curve 0, curve 1, neither).
#[derive(Debug, Clone)]
pub struct TwoCurveProblem {
    table: TimeTable,
    /// Region NLL relative to the patient's cheapest region.
    costs: Vec<[f64; 3]>,
    nominal: AssignmentVector,
    /// Patients with more than one region within `flip_cap`.
    free: Vec<usize>,
    flip_cap: f64,
}

impl TwoCurveProblem {
    /// Curve 0 collects patients with observables in `range0`, curve 1 those
    /// in `range1`.
    pub fn new(
        patients: &[PatientRecord],
        range0: &InclusionRange,
        range1: &InclusionRange,
        flip_cap: f64,
    ) -> Result<Self, PValueError> {
        if range0.lower().max(range1.lower()) < range0.upper().min(range1.upper()) {
            return Err(PValueError::OverlappingRanges(
                range0.lower(),
                range0.upper(),
                range1.lower(),
                range1.upper(),
            ));
        }
        let neither = uncovered(&[*range0, *range1]);
        let region_nll: Vec<[f64; 3]> = patients
            .iter()
            .map(|p| {
                let m: &ObservableModel = &p.observable;
                [m.min_nll_in(range0), m.min_nll_in(range1), m.min_nll_over(&neither)]
            })
            .collect();
        let nominal = patients
            .iter()
            .map(|p| {
                let x = p.observable.nominal_value();
                if range0.contains(x) {
                    Membership::Curve0
                } else if range1.contains(x) {
                    Membership::Curve1
                } else {
                    Membership::Neither
                }
            })
            .collect();
        let pairs: Vec<(f64, bool)> = patients.iter().map(|p| (p.survival_time, p.censored)).collect();
        Self::from_region_nll(&pairs, region_nll, AssignmentVector(nominal), flip_cap)
    }

    /// Builds the problem from explicit region NLLs `[curve0, curve1, neither]`.
    pub fn from_region_nll(
        patients: &[(f64, bool)],
        region_nll: Vec<[f64; 3]>,
        nominal: AssignmentVector,
        flip_cap: f64,
    ) -> Result<Self, PValueError> {
        if region_nll.len() != patients.len() || nominal.len() != patients.len() {
            return Err(PValueError::LengthMismatch {
                expected: patients.len(),
                got: region_nll.len().min(nominal.len()),
            });
        }
        let mut costs = Vec::with_capacity(region_nll.len());
        for (j, nll) in region_nll.iter().enumerate() {
            let floor = nll.iter().copied().fold(f64::INFINITY, f64::min);
            if !floor.is_finite() {
                return Err(PValueError::Infeasible(j));
            }
            costs.push(nll.map(|x| x - floor));
        }
        let universe = InclusionVector::new(
            costs.iter().map(|c| c[0].is_finite() || c[1].is_finite()).collect(),
        );
        let table = TimeTable::from_times(patients, &universe);
        let free = (0..costs.len())
            .filter(|&j| costs[j].iter().filter(|&&c| c <= flip_cap).count() > 1)
            .collect();
        Ok(Self {
            table,
            costs,
            nominal,
            free,
            flip_cap,
        })
    }

    pub fn nominal(&self) -> &AssignmentVector {
        &self.nominal
    }

    pub fn table(&self) -> &TimeTable {
        &self.table
    }

    /// Patients whose membership is searched over when assignments float.
    pub fn free_patients(&self) -> &[usize] {
        &self.free
    }

    pub fn counts(&self, assignment: &AssignmentVector) -> (Counts, Counts) {
        (
            self.table.counts(&assignment.curve(Membership::Curve0)),
            self.table.counts(&assignment.curve(Membership::Curve1)),
        )
    }

    /// Patient NLL of an assignment relative to every patient's cheapest region.
    pub fn patient_cost(&self, assignment: &AssignmentVector) -> f64 {
        assignment
            .0
            .iter()
            .enumerate()
            .map(|(j, m)| self.costs[j][m.index()])
            .sum()
    }

    /// Total NLL of one assignment, minimized over `H` unless `null` pins
    /// `H = 1`. Returns `(nll, log H)`.
    pub fn assignment_nll(&self, assignment: &AssignmentVector, method: CoxMethod, null: bool) -> (f64, f64) {
        let patient = self.patient_cost(assignment);
        if !patient.is_finite() {
            return (f64::INFINITY, 0.0);
        }
        let (c0, c1) = self.counts(assignment);
        let times = cox_times(&c0, &c1);
        if null {
            (cox_nll(&times, 0.0, method) + patient, 0.0)
        } else {
            let (beta, nll) = fit_log_hazard(&times, method);
            (nll + patient, beta)
        }
    }

    /// Minimum over assignments of the free patients.
    pub fn minimize_assignments(
        &self,
        method: CoxMethod,
        null: bool,
        strategy: SearchStrategy,
    ) -> (f64, f64, AssignmentVector) {
        let mut best = (f64::INFINITY, 0.0, self.nominal.clone());
        let mut current = self.nominal.clone();
        match strategy {
            SearchStrategy::Exhaustive => {
                let k = self.free.len();
                let total = 3usize.pow(k as u32);
                for code in 0..total {
                    let mut rest = code;
                    for &j in &self.free {
                        current.0[j] = Membership::ALL[rest % 3];
                        rest /= 3;
                    }
                    let (nll, beta) = self.assignment_nll(&current, method, null);
                    if nll < best.0 {
                        best = (nll, beta, current.clone());
                    }
                }
            }
            SearchStrategy::BranchAndBound => {
                let fixed: f64 = (0..self.costs.len())
                    .filter(|j| !self.free.contains(j))
                    .map(|j| self.costs[j][self.nominal.0[j].index()])
                    .sum();
                // Cheapest memberships are always 0, so the admissible bound
                // from undecided patients is zero; the Cox NLL is non-negative.
                self.descend(0, fixed, &mut current, method, null, &mut best);
            }
        }
        best
    }

    fn descend(
        &self,
        k: usize,
        cost: f64,
        current: &mut AssignmentVector,
        method: CoxMethod,
        null: bool,
        best: &mut (f64, f64, AssignmentVector),
    ) {
        if cost >= best.0 {
            return;
        }
        if k == self.free.len() {
            let (nll, beta) = self.assignment_nll(current, method, null);
            if nll < best.0 {
                *best = (nll, beta, current.clone());
            }
            return;
        }
        let j = self.free[k];
        let mut order = Membership::ALL;
        // Nominal first so that a good incumbent is found early.
        order.sort_by_key(|&m| (m != self.nominal.0[j]) as u8);
        for m in order {
            let c = self.costs[j][m.index()];
            if c > self.flip_cap {
                continue;
            }
            current.0[j] = m;
            self.descend(k + 1, cost + c, current, method, null, best);
        }
        current.0[j] = self.nominal.0[j];
    }

    /// True if some curve is empty under every feasible assignment.
    pub fn is_degenerate(&self, float_assignments: bool) -> bool {
        let reachable = |k: Membership| {
            (0..self.costs.len()).any(|j| {
                if float_assignments {
                    self.costs[j][k.index()] <= self.flip_cap && self.table.in_universe(j)
                } else {
                    self.nominal.0[j] == k
                }
            })
        };
        !reachable(Membership::Curve0) || !reachable(Membership::Curve1)
    }

    pub fn likelihood_pvalue(&self, options: PValueOptions) -> PValueReport {
        self.likelihood_pvalue_with(options, SearchStrategy::BranchAndBound)
    }

    pub fn likelihood_pvalue_with(&self, options: PValueOptions, strategy: SearchStrategy) -> PValueReport {
        let method = options.cox();
        if self.is_degenerate(options.float_assignments) {
            return PValueReport {
                nll_null: 0.0,
                nll_alt: 0.0,
                h_hat: 1.0,
                statistic: 0.0,
                p: 1.0,
                method: options.method(),
                degenerate: true,
            };
        }
        let ((nll_null, _), (nll_alt, beta)) = if options.float_assignments {
            let null = self.minimize_assignments(method, true, strategy);
            let alt = self.minimize_assignments(method, false, strategy);
            ((null.0, null.1), (alt.0, alt.1))
        } else {
            (
                self.assignment_nll(&self.nominal, method, true),
                self.assignment_nll(&self.nominal, method, false),
            )
        };
        let statistic = 2.0 * (nll_null - nll_alt);
        PValueReport {
            nll_null,
            nll_alt,
            h_hat: beta.exp(),
            statistic,
            p: chi2_sf_1dof(statistic.max(0.0)),
            method: options.method(),
            degenerate: false,
        }
    }
}

/// Parts of the real line covered by none of `ranges`.
fn uncovered(ranges: &[InclusionRange]) -> Vec<InclusionRange> {
    let mut sorted = ranges.to_vec();
    sorted.sort_by(|a, b| a.lower().total_cmp(&b.lower()));
    let mut out = Vec::new();
    let mut cursor = f64::NEG_INFINITY;
    for r in sorted {
        if r.lower() > cursor {
            out.push(InclusionRange::new(cursor, r.lower()).expect("non-empty gap"));
        }
        cursor = cursor.max(r.upper());
    }
    if cursor < f64::INFINITY {
        out.push(InclusionRange::at_least(cursor));
    }
    out
}
