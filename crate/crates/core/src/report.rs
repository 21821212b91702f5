//! Machine-readable results.
//!
//! Maps are `BTreeMap`s, so keys serialize in a stable order and repeated
//! runs produce byte-identical JSON.

use crate::baselines::LogRankResult;
use crate::pvalue::PValueReport;
use crate::solver::{CurvePoint, SurvivalProblem, UncertaintyMode};
use serde::Serialize;
use std::collections::BTreeMap;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BandRecord {
    pub t: f64,
    pub s_nominal: f64,
    pub s_best: f64,
    /// Confidence level label to `[lo, hi]`.
    pub ci: BTreeMap<String, [f64; 2]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl From<&CurvePoint> for BandRecord {
    fn from(p: &CurvePoint) -> Self {
        Self {
            t: p.time,
            s_nominal: p.s_nominal,
            s_best: p.s_best,
            ci: p
                .intervals
                .iter()
                .map(|b| (b.level.label(), [b.lo, b.hi]))
                .collect(),
            error: p.error.clone(),
        }
    }
}

/// Bands of one curve in every computed mode.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurveReport {
    pub n_included: usize,
    /// `[t, S_hat]` at every event time of the curve.
    pub nominal: Vec<[f64; 2]>,
    pub censor_times: Vec<f64>,
    pub mode_bands: BTreeMap<String, Vec<BandRecord>>,
}

impl CurveReport {
    pub fn new(problem: &SurvivalProblem, bands: &[(UncertaintyMode, Vec<CurvePoint>)]) -> Self {
        let nominal = problem.nominal();
        let table = problem.table();
        let censor_times = (0..nominal.len())
            .filter(|&j| nominal.get(j))
            .filter_map(|j| table.censored_time(j))
            .collect();
        Self {
            n_included: nominal.count(),
            nominal: problem.nominal_curve().into_iter().map(|(t, s)| [t, s]).collect(),
            censor_times,
            mode_bands: bands
                .iter()
                .map(|(mode, points)| (mode.name().to_string(), points.iter().map(BandRecord::from).collect()))
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SingleCurveReport {
    pub version: u32,
    pub parameter_min: f64,
    #[serde(flatten)]
    pub curve: CurveReport,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum PValueEntry {
    Likelihood(PValueReport),
    LogRank(LogRankResult),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TwoGroupReport {
    pub version: u32,
    pub parameter_threshold: f64,
    /// `"low"` (below the threshold) and `"high"` (at least the threshold).
    pub curves: BTreeMap<String, CurveReport>,
    pub p_values: BTreeMap<String, PValueEntry>,
    pub warnings: Vec<String>,
}

pub fn to_json<T: Serialize>(report: &T) -> String {
    let mut s = serde_json::to_string_pretty(report).expect("report types always serialize");
    s.push('\n');
    s
}
