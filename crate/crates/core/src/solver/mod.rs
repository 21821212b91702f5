//! Profile-likelihood confidence bands on the Kaplan-Meier curve.
//!
//! The total NLL is minimized jointly over the continuous survival
//! probabilities and the binary patient inclusions. Inclusions are searched
//! by branch and bound (with exhaustive enumeration available as a
//! fallback); for each inclusion vector the continuous part is solved
//! exactly by [`inner_solve`].

mod discrete;
mod inner;
mod profile;
mod search;

pub use discrete::DiscreteProfile;
pub use inner::{inner_solve, InnerSolution};

use crate::datacard::PatientRecord;
use crate::kmcore::{Counts, InclusionVector, TimeTable};
use crate::likelihood::{LogTables, SurvivalVector};
use crate::numerics::{chi2_quantile_1dof, RootError};
use crate::observables::{InclusionRange, PenaltyPair};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolverError {
    #[error("survival target {0} lies outside [0, 1]")]
    TargetOutOfRange(f64),
    #[error("time index {index} out of range for a table with {len} event times")]
    TimeIndex { index: usize, len: usize },
    #[error("operation is not available in {0:?} mode")]
    WrongMode(UncertaintyMode),
    #[error("patient {0}: nominal side has infinite penalty")]
    InconsistentNominal(usize),
    #[error("penalty and cohort lengths differ ({penalties} vs {patients})")]
    LengthMismatch { penalties: usize, patients: usize },
    #[error(transparent)]
    Root(#[from] RootError),
}

/// Which uncertainties enter a band.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UncertaintyMode {
    Full,
    BinomialOnly,
    PatientWiseOnly,
}

impl UncertaintyMode {
    pub fn name(self) -> &'static str {
        match self {
            Self::Full => "full",
            Self::BinomialOnly => "binomial_only",
            Self::PatientWiseOnly => "patient_wise_only",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SearchStrategy {
    BranchAndBound,
    Exhaustive,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverSettings {
    /// Patients whose inclusion penalty exceeds this many nats are frozen at
    /// their nominal inclusion.
    pub flip_cap: f64,
    pub collapse: bool,
    pub strategy: SearchStrategy,
    pub root_tolerance: f64,
    pub max_iterations: usize,
    /// Probes per side used to bracket threshold crossings.
    pub probes: usize,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            flip_cap: 25.0,
            collapse: true,
            strategy: SearchStrategy::BranchAndBound,
            root_tolerance: 1e-9,
            max_iterations: 200,
            probes: 64,
        }
    }
}

/// Confidence level of a two-sided band.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct ConfidenceLevel(f64);

impl ConfidenceLevel {
    pub const CL68: Self = Self(0.68);
    pub const CL95: Self = Self(0.95);

    pub fn new(level: f64) -> Option<Self> {
        (level > 0.0 && level < 1.0).then_some(Self(level))
    }

    pub fn value(self) -> f64 {
        self.0
    }

    /// Threshold on `2 (NLL - NLL_min)`. The conventional 68% and 95%
    /// levels use the rounded values 1.0 and 3.84; anything else uses the
    /// exact chi-square quantile.
    pub fn threshold(self) -> f64 {
        if (self.0 - 0.68).abs() < 1e-12 {
            1.0
        } else if (self.0 - 0.95).abs() < 1e-12 {
            3.84
        } else {
            chi2_quantile_1dof(self.0)
        }
    }

    /// Key used in serialized output, e.g. `"0.95"`.
    pub fn label(self) -> String {
        let s = format!("{:.6}", self.0);
        let s = s.trim_end_matches('0');
        s.strip_suffix('.').unwrap_or(s).to_string()
    }
}

/// One point of a likelihood scan.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProfilePoint {
    pub s: f64,
    pub nll: f64,
    pub inclusion: InclusionVector,
    pub survival: SurvivalVector,
}

/// Unconstrained maximum-likelihood fit.
#[derive(Debug, Clone, PartialEq)]
pub struct BestFit {
    pub nll: f64,
    pub inclusion: InclusionVector,
    pub counts: Counts,
}

impl BestFit {
    /// Best-fit survival at event time `n`.
    pub fn survival_at(&self, n: usize) -> f64 {
        crate::kmcore::empirical_survival(&self.counts, n)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BandInterval {
    pub level: ConfidenceLevel,
    pub lo: f64,
    pub hi: f64,
}

/// Band record at one event time.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurvePoint {
    pub time: f64,
    pub time_index: usize,
    pub s_nominal: f64,
    pub s_best: f64,
    pub intervals: Vec<BandInterval>,
    /// Set when a bound could not be refined; the bracket midpoint is reported.
    pub error: Option<String>,
}

impl CurvePoint {
    pub fn interval(&self, level: ConfidenceLevel) -> Option<&BandInterval> {
        self.intervals.iter().find(|b| b.level == level)
    }
}

/// A single Kaplan-Meier curve with per-patient inclusion penalties.
#[derive(Debug, Clone)]
pub struct SurvivalProblem {
    table: TimeTable,
    penalties: Vec<PenaltyPair>,
    /// Penalty of each branch relative to the cheaper one: `[excluded, included]`.
    costs: Vec<[f64; 2]>,
    nominal: InclusionVector,
    branch_vars: Vec<usize>,
    tables: LogTables,
    settings: SolverSettings,
}

impl SurvivalProblem {
    /// Patients whose nominal observable lies in `range` are nominally included.
    pub fn new(patients: &[PatientRecord], range: &InclusionRange, settings: SolverSettings) -> Self {
        let penalties: Vec<PenaltyPair> = patients.iter().map(|p| p.observable.penalty(range)).collect();
        let nominal: Vec<bool> = patients
            .iter()
            .map(|p| range.contains(p.observable.nominal_value()))
            .collect();
        let pairs: Vec<(f64, bool)> = patients.iter().map(|p| (p.survival_time, p.censored)).collect();
        Self::from_penalties(&pairs, penalties, InclusionVector::new(nominal), settings)
            .expect("penalties derived from observables are consistent with their nominal values")
    }

    /// Builds a problem from `(survival_time, censored)` pairs and explicit
    /// penalties.
    pub fn from_penalties(
        patients: &[(f64, bool)],
        penalties: Vec<PenaltyPair>,
        nominal: InclusionVector,
        settings: SolverSettings,
    ) -> Result<Self, SolverError> {
        if penalties.len() != patients.len() || nominal.len() != patients.len() {
            return Err(SolverError::LengthMismatch {
                penalties: penalties.len(),
                patients: patients.len(),
            });
        }
        for (j, p) in penalties.iter().enumerate() {
            if !p.branch(nominal.get(j)).is_finite() {
                return Err(SolverError::InconsistentNominal(j));
            }
        }
        let universe = InclusionVector::new(penalties.iter().map(|p| p.nll_in.is_finite()).collect());
        let table = TimeTable::from_times(patients, &universe);
        let costs = penalties
            .iter()
            .map(|p| {
                let floor = p.nll_in.min(p.nll_out);
                [p.nll_out - floor, p.nll_in - floor]
            })
            .collect();
        let mut branch_vars: Vec<usize> = penalties
            .iter()
            .enumerate()
            .filter(|(_, p)| {
                let delta = p.delta();
                delta.is_finite() && delta.abs() <= settings.flip_cap
            })
            .map(|(j, _)| j)
            .collect();
        // Expensive flips first so that their costly branch is pruned early.
        branch_vars.sort_by(|&a, &b| {
            let (da, db) = (penalties[a].delta().abs(), penalties[b].delta().abs());
            db.partial_cmp(&da).unwrap().then(a.cmp(&b))
        });
        let tables = LogTables::new(patients.len());
        Ok(Self {
            table,
            penalties,
            costs,
            nominal,
            branch_vars,
            tables,
            settings,
        })
    }

    pub fn table(&self) -> &TimeTable {
        &self.table
    }

    pub fn penalties(&self) -> &[PenaltyPair] {
        &self.penalties
    }

    pub fn nominal(&self) -> &InclusionVector {
        &self.nominal
    }

    pub fn settings(&self) -> &SolverSettings {
        &self.settings
    }

    pub fn with_settings(mut self, settings: SolverSettings) -> Self {
        self.settings = settings;
        self
    }

    /// Patients whose inclusion is free to vary in the full and patient-wise modes.
    pub fn branch_variables(&self) -> &[usize] {
        &self.branch_vars
    }

    pub fn nominal_curve(&self) -> Vec<(f64, f64)> {
        crate::kmcore::nominal_curve(&self.table, &self.nominal)
    }

    /// Patient NLL of `a` relative to the cheapest possible assignment.
    pub(crate) fn relative_patient_cost(&self, a: &InclusionVector) -> f64 {
        (0..a.len()).map(|j| self.cost(j, a.get(j))).sum()
    }

    fn cost(&self, j: usize, included: bool) -> f64 {
        self.costs[j][included as usize]
    }

    /// Offset between relative and raw patient NLL.
    fn patient_floor(&self) -> f64 {
        self.penalties.iter().map(|p| p.nll_in.min(p.nll_out)).sum()
    }

    fn check_time(&self, n: usize) -> Result<(), SolverError> {
        if n >= self.table.len() {
            return Err(SolverError::TimeIndex {
                index: n,
                len: self.table.len(),
            });
        }
        Ok(())
    }
}
