//! Kaplan-Meier survival curves with profile-likelihood confidence bands that
//! cover both the finite cohort size and per-patient observable uncertainties,
//! plus likelihood-based two-curve p-values.
//!
//! The Greenwood intervals and the conventional log-rank test are included
//! as baselines.

pub mod baselines;
pub mod cli;
pub mod datacard;
pub mod kmcore;
pub mod likelihood;
pub mod numerics;
pub mod observables;
pub mod plot;
pub mod pvalue;
pub mod report;
pub mod solver;

pub use datacard::{parse_datacard, Datacard, PatientRecord};
pub use kmcore::{InclusionVector, TimeTable};
pub use observables::{InclusionRange, ObservableModel, PenaltyPair};
pub use solver::{ConfidenceLevel, CurvePoint, SolverSettings, SurvivalProblem, UncertaintyMode};
