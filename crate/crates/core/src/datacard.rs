//! Column-aligned text datacards.
//!
//! ```text
//! # comment
//! observable_type poisson_ratio
//! ------------
//! survival_time 3   4   5
//! censored      0   0   1
//! num           10  20  30
//! denom         100 100 100
//! lognormal     stain 0.1 0.1 0.2
//! ```
//!
//! Lines starting with `#` and lines made only of hyphens are skipped. Rows
//! may appear in any order; patient columns are aligned by position.

use crate::observables::{Observable, ObservableError, ObservableModel};
use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::str::FromStr;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DatacardError {
    #[error("line {line}: unknown observable_type `{tag}`")]
    UnknownObservableType { line: usize, tag: String },
    #[error("missing `observable_type` header")]
    MissingHeader,
    #[error("missing required row `{label}`")]
    MissingRow { label: String },
    #[error("line {line}: duplicate row `{label}`")]
    DuplicateRow { line: usize, label: String },
    #[error("line {line}: row `{label}` is not valid for observable_type {observable_type}")]
    UnknownRow {
        line: usize,
        label: String,
        observable_type: ObservableType,
    },
    #[error("line {line}: mismatched row lengths: `{label}` has {found} values, expected {expected}")]
    MismatchedLength {
        line: usize,
        label: String,
        expected: usize,
        found: usize,
    },
    #[error("line {line}: empty cohort (row `{label}` has no values)")]
    EmptyCohort { line: usize, label: String },
    #[error("line {line}: non-numeric token `{token}` in row `{label}`")]
    NonNumeric {
        line: usize,
        label: String,
        token: String,
    },
    #[error("line {line}: invalid value in row `{label}`: {reason}")]
    InvalidValue {
        line: usize,
        label: String,
        reason: String,
    },
    #[error("line {line}: patient {patient}: {source}")]
    Observable {
        line: usize,
        patient: usize,
        source: ObservableError,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ObservableType {
    Fixed,
    Poisson,
    PoissonDensity,
    PoissonRatio,
}

impl ObservableType {
    pub fn tag(self) -> &'static str {
        match self {
            Self::Fixed => "fixed",
            Self::Poisson => "poisson",
            Self::PoissonDensity => "poisson_density",
            Self::PoissonRatio => "poisson_ratio",
        }
    }

    fn value_rows(self) -> &'static [&'static str] {
        match self {
            Self::Fixed => &["observable"],
            Self::Poisson => &["count"],
            Self::PoissonDensity => &["count", "area"],
            Self::PoissonRatio => &["num", "denom"],
        }
    }
}

impl fmt::Display for ObservableType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for ObservableType {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        match s {
            "fixed" => Ok(Self::Fixed),
            "poisson" => Ok(Self::Poisson),
            "poisson_density" => Ok(Self::PoissonDensity),
            "poisson_ratio" => Ok(Self::PoissonRatio),
            _ => Err(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PatientRecord {
    pub survival_time: f64,
    pub censored: bool,
    pub observable: ObservableModel,
}

/// A named log-normal systematic with one width per patient.
#[derive(Debug, Clone, PartialEq)]
pub struct SystematicRow {
    pub name: String,
    pub sigma: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Datacard {
    pub observable_type: ObservableType,
    pub patients: Vec<PatientRecord>,
    pub systematics: Vec<SystematicRow>,
}

struct Row {
    line: usize,
    tokens: Vec<String>,
}

impl Row {
    fn numbers(&self, label: &str) -> Result<Vec<f64>, DatacardError> {
        self.tokens
            .iter()
            .map(|t| {
                t.parse::<f64>().map_err(|_| DatacardError::NonNumeric {
                    line: self.line,
                    label: label.to_string(),
                    token: t.clone(),
                })
            })
            .collect()
    }

    fn counts(&self, label: &str) -> Result<Vec<u64>, DatacardError> {
        self.tokens
            .iter()
            .map(|t| {
                t.parse::<u64>().map_err(|_| {
                    if t.parse::<f64>().is_ok() {
                        DatacardError::InvalidValue {
                            line: self.line,
                            label: label.to_string(),
                            reason: format!("`{t}` is not a non-negative integer count"),
                        }
                    } else {
                        DatacardError::NonNumeric {
                            line: self.line,
                            label: label.to_string(),
                            token: t.clone(),
                        }
                    }
                })
            })
            .collect()
    }

    fn invalid(&self, label: &str, reason: String) -> DatacardError {
        DatacardError::InvalidValue {
            line: self.line,
            label: label.to_string(),
            reason,
        }
    }
}

fn is_divider(line: &str) -> bool {
    !line.is_empty() && line.chars().all(|c| c == '-')
}

pub fn parse_datacard(text: &str) -> Result<Datacard, DatacardError> {
    let mut header: Option<(usize, ObservableType)> = None;
    let mut rows: BTreeMap<String, Row> = BTreeMap::new();
    let mut systematic_rows: Vec<(String, Row)> = Vec::new();

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') || is_divider(trimmed) {
            continue;
        }
        let mut tokens = trimmed.split_whitespace().map(str::to_string);
        let label = tokens.next().expect("non-empty line has a token");
        let rest: Vec<String> = tokens.collect();
        match label.as_str() {
            "observable_type" => {
                if header.is_some() {
                    return Err(DatacardError::DuplicateRow { line, label });
                }
                let tag = rest.join(" ");
                let kind = tag
                    .parse::<ObservableType>()
                    .map_err(|_| DatacardError::UnknownObservableType { line, tag })?;
                header = Some((line, kind));
            }
            "lognormal" => {
                let mut it = rest.into_iter();
                let name = it.next().ok_or_else(|| DatacardError::InvalidValue {
                    line,
                    label: label.clone(),
                    reason: "missing systematic name".to_string(),
                })?;
                if systematic_rows.iter().any(|(n, _)| *n == name) {
                    return Err(DatacardError::DuplicateRow {
                        line,
                        label: format!("lognormal {name}"),
                    });
                }
                systematic_rows.push((
                    name,
                    Row {
                        line,
                        tokens: it.collect(),
                    },
                ));
            }
            _ => {
                if rows.contains_key(&label) {
                    return Err(DatacardError::DuplicateRow { line, label });
                }
                rows.insert(label, Row { line, tokens: rest });
            }
        }
    }

    let (_, observable_type) = header.ok_or(DatacardError::MissingHeader)?;
    let allowed: Vec<&str> = ["survival_time", "censored"]
        .into_iter()
        .chain(observable_type.value_rows().iter().copied())
        .collect();
    for (label, row) in &rows {
        if !allowed.contains(&label.as_str()) {
            return Err(DatacardError::UnknownRow {
                line: row.line,
                label: label.clone(),
                observable_type,
            });
        }
    }
    for label in &allowed {
        if !rows.contains_key(*label) {
            return Err(DatacardError::MissingRow {
                label: label.to_string(),
            });
        }
    }

    // Row lengths are checked in file order so the reported line is the
    // first one that disagrees.
    let mut ordered: Vec<(&str, &Row)> = rows.iter().map(|(l, r)| (l.as_str(), r)).collect();
    ordered.extend(systematic_rows.iter().map(|(_, r)| ("lognormal", r)));
    ordered.sort_by_key(|(_, r)| r.line);
    let (first_label, first_row) = ordered[0];
    let expected = first_row.tokens.len();
    if expected == 0 {
        return Err(DatacardError::EmptyCohort {
            line: first_row.line,
            label: first_label.to_string(),
        });
    }
    for (label, row) in &ordered[1..] {
        if row.tokens.len() != expected {
            return Err(DatacardError::MismatchedLength {
                line: row.line,
                label: label.to_string(),
                expected,
                found: row.tokens.len(),
            });
        }
    }

    let time_row = &rows["survival_time"];
    let times = time_row.numbers("survival_time")?;
    if let Some(bad) = times.iter().find(|t| !(t.is_finite() && **t > 0.0)) {
        return Err(time_row.invalid(
            "survival_time",
            format!("survival times must be positive and finite, got {bad}"),
        ));
    }
    let censor_row = &rows["censored"];
    let censored = censor_row
        .numbers("censored")?
        .into_iter()
        .map(|c| {
            if c == 0.0 {
                Ok(false)
            } else if c == 1.0 {
                Ok(true)
            } else {
                Err(censor_row.invalid("censored", format!("expected 0 or 1, got {c}")))
            }
        })
        .collect::<Result<Vec<bool>, _>>()?;

    let mut systematics = Vec::with_capacity(systematic_rows.len());
    for (name, row) in &systematic_rows {
        let sigma = row.numbers("lognormal")?;
        if let Some(bad) = sigma.iter().find(|s| !(s.is_finite() && **s >= 0.0)) {
            return Err(row.invalid("lognormal", format!("widths must be non-negative, got {bad}")));
        }
        systematics.push(SystematicRow {
            name: name.clone(),
            sigma,
        });
    }

    let observables: Vec<(Observable, usize)> = match observable_type {
        ObservableType::Fixed => {
            let row = &rows["observable"];
            row.numbers("observable")?
                .into_iter()
                .map(|value| (Observable::Fixed { value }, row.line))
                .collect()
        }
        ObservableType::Poisson => {
            let row = &rows["count"];
            row.counts("count")?
                .into_iter()
                .map(|count| (Observable::Poisson { count }, row.line))
                .collect()
        }
        ObservableType::PoissonDensity => {
            let counts = rows["count"].counts("count")?;
            let area_row = &rows["area"];
            let areas = area_row.numbers("area")?;
            counts
                .into_iter()
                .zip(areas)
                .map(|(count, area)| (Observable::PoissonDensity { count, area }, area_row.line))
                .collect()
        }
        ObservableType::PoissonRatio => {
            let nums = rows["num"].counts("num")?;
            let denom_row = &rows["denom"];
            let denoms = denom_row.counts("denom")?;
            nums.into_iter()
                .zip(denoms)
                .map(|(num, denom)| (Observable::PoissonRatio { num, denom }, denom_row.line))
                .collect()
        }
    };

    let patients = observables
        .into_iter()
        .enumerate()
        .map(|(j, (observable, line))| {
            let sigmas = systematics.iter().map(|s| s.sigma[j]).collect();
            let model = ObservableModel::new(observable, sigmas).map_err(|source| {
                DatacardError::Observable {
                    line,
                    patient: j + 1,
                    source,
                }
            })?;
            Ok(PatientRecord {
                survival_time: times[j],
                censored: censored[j],
                observable: model,
            })
        })
        .collect::<Result<Vec<_>, DatacardError>>()?;

    Ok(Datacard {
        observable_type,
        patients,
        systematics,
    })
}

impl FromStr for Datacard {
    type Err = DatacardError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_datacard(s)
    }
}

impl Datacard {
    /// Renders the datacard back to text; `parse_datacard` of the result
    /// reproduces `self`.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        writeln!(out, "observable_type {}", self.observable_type).unwrap();
        out.push_str("------------\n");
        let mut row = |label: &str, values: Vec<String>| {
            writeln!(out, "{label} {}", values.join(" ")).unwrap();
        };
        row(
            "survival_time",
            self.patients.iter().map(|p| p.survival_time.to_string()).collect(),
        );
        row(
            "censored",
            self.patients
                .iter()
                .map(|p| if p.censored { "1" } else { "0" }.to_string())
                .collect(),
        );
        let column = |f: &dyn Fn(&Observable) -> String| -> Vec<String> {
            self.patients.iter().map(|p| f(&p.observable.observable)).collect()
        };
        match self.observable_type {
            ObservableType::Fixed => row(
                "observable",
                column(&|o| match o {
                    Observable::Fixed { value } => value.to_string(),
                    _ => unreachable!(),
                }),
            ),
            ObservableType::Poisson => row(
                "count",
                column(&|o| match o {
                    Observable::Poisson { count } => count.to_string(),
                    _ => unreachable!(),
                }),
            ),
            ObservableType::PoissonDensity => {
                row(
                    "count",
                    column(&|o| match o {
                        Observable::PoissonDensity { count, .. } => count.to_string(),
                        _ => unreachable!(),
                    }),
                );
                row(
                    "area",
                    column(&|o| match o {
                        Observable::PoissonDensity { area, .. } => area.to_string(),
                        _ => unreachable!(),
                    }),
                );
            }
            ObservableType::PoissonRatio => {
                row(
                    "num",
                    column(&|o| match o {
                        Observable::PoissonRatio { num, .. } => num.to_string(),
                        _ => unreachable!(),
                    }),
                );
                row(
                    "denom",
                    column(&|o| match o {
                        Observable::PoissonRatio { denom, .. } => denom.to_string(),
                        _ => unreachable!(),
                    }),
                );
            }
        }
        for syst in &self.systematics {
            let values: Vec<String> = syst.sigma.iter().map(f64::to_string).collect();
            row("lognormal", std::iter::once(syst.name.clone()).chain(values).collect());
        }
        out
    }
}
