//! Shared implementation of the `kombine` and `kombine_twogroups` commands.

use crate::baselines::conventional_logrank;
use crate::datacard::{parse_datacard, Datacard, DatacardError, PatientRecord};
use crate::observables::InclusionRange;
use crate::plot::{render_svg, PlotBand, PlotCurve, PALETTE};
use crate::pvalue::{PValueError, PValueOptions, TwoCurveProblem};
use crate::report::{to_json, CurveReport, PValueEntry, SingleCurveReport, TwoGroupReport, SCHEMA_VERSION};
use crate::solver::{ConfidenceLevel, CurvePoint, SolverSettings, SurvivalProblem, UncertaintyMode};
use clap::{Args, Parser, ValueEnum};
use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Parse { path: PathBuf, source: DatacardError },
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    PValue(#[from] PValueError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Parse { .. } | Self::Usage(_) => 2,
            Self::PValue(_) => 3,
            Self::Io { .. } => 4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PValueMethodArg {
    Breslow,
    Exact,
}

/// Band options shared by both commands.
#[derive(Debug, Clone, Args)]
pub struct BandArgs {
    /// Also draw bands with only the binomial (finite cohort) uncertainty.
    #[arg(long)]
    pub include_binomial_only: bool,
    /// Also draw bands with only the patient-wise (observable) uncertainty.
    #[arg(long)]
    pub include_patient_wise_only: bool,
    /// Do not compute the band combining both uncertainties.
    #[arg(long)]
    pub exclude_full_nll: bool,
    /// Confidence level of a band; repeat for several. Defaults to 0.68 and 0.95.
    #[arg(long = "confidence-level", value_name = "P")]
    pub confidence_levels: Vec<f64>,
    /// Inclusion flips costing more than this many nats are never considered.
    #[arg(long, default_value_t = 25.0, value_name = "NATS")]
    pub flip_cap: f64,
}

impl BandArgs {
    pub fn modes(&self) -> Result<Vec<UncertaintyMode>, CliError> {
        let mut modes = Vec::new();
        if !self.exclude_full_nll {
            modes.push(UncertaintyMode::Full);
        }
        if self.include_binomial_only {
            modes.push(UncertaintyMode::BinomialOnly);
        }
        if self.include_patient_wise_only {
            modes.push(UncertaintyMode::PatientWiseOnly);
        }
        if modes.is_empty() {
            return Err(CliError::Usage(
                "--exclude-full-nll needs --include-binomial-only or --include-patient-wise-only".into(),
            ));
        }
        Ok(modes)
    }

    pub fn levels(&self) -> Result<Vec<ConfidenceLevel>, CliError> {
        if self.confidence_levels.is_empty() {
            return Ok(vec![ConfidenceLevel::CL68, ConfidenceLevel::CL95]);
        }
        let mut levels = self
            .confidence_levels
            .iter()
            .map(|&p| {
                ConfidenceLevel::new(p)
                    .ok_or_else(|| CliError::Usage(format!("confidence level must lie in (0, 1), got {p}")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        levels.sort_by(|a, b| a.value().total_cmp(&b.value()));
        levels.dedup();
        Ok(levels)
    }

    fn settings(&self) -> SolverSettings {
        SolverSettings {
            flip_cap: self.flip_cap,
            ..SolverSettings::default()
        }
    }
}

/// Kaplan-Meier curve with likelihood confidence bands.
#[derive(Debug, Clone, Parser)]
#[command(name = "kombine", version)]
pub struct SingleArgs {
    /// Input datacard.
    pub datacard: PathBuf,
    /// Output plot. A `.pdf` name is written as `.svg`; JSON goes next to it.
    pub output: PathBuf,
    /// Include patients whose observable is at least this value (default: everyone).
    #[arg(long, allow_negative_numbers = true)]
    pub parameter_min: Option<f64>,
    #[command(flatten)]
    pub bands: BandArgs,
}

/// Two Kaplan-Meier curves split at an observable threshold, with p-values.
#[derive(Debug, Clone, Parser)]
#[command(name = "kombine_twogroups", version)]
pub struct TwoGroupArgs {
    /// Input datacard.
    pub datacard: PathBuf,
    /// Output plot (default: `<datacard stem>_twogroups.svg` in the working directory).
    pub output: Option<PathBuf>,
    /// Patients below the threshold form the low curve, the rest the high curve.
    #[arg(long, allow_negative_numbers = true)]
    pub parameter_threshold: f64,
    /// Cox partial likelihood used for the likelihood p-value.
    #[arg(long, value_enum, default_value_t = PValueMethodArg::Breslow)]
    pub p_value_method: PValueMethodArg,
    /// Only report the p-value with assignments fixed at their nominal values.
    #[arg(long)]
    pub fix_assignments: bool,
    #[command(flatten)]
    pub bands: BandArgs,
}

fn read_datacard(path: &Path) -> Result<Datacard, CliError> {
    let text = fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_datacard(&text).map_err(|source| CliError::Parse {
        path: path.to_path_buf(),
        source,
    })
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Plot path actually written (`.pdf` becomes `.svg`) and its JSON sibling.
pub fn output_paths(requested: &Path) -> (PathBuf, PathBuf, Option<String>) {
    let is_pdf = requested
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("pdf"));
    let svg = if is_pdf {
        requested.with_extension("svg")
    } else {
        requested.to_path_buf()
    };
    let warning = is_pdf.then(|| {
        format!(
            "PDF output is not supported; writing SVG to {} instead",
            svg.display()
        )
    });
    (svg.clone(), svg.with_extension("json"), warning)
}

/// One curve's problem and its bands.
struct CurveRun {
    problem: SurvivalProblem,
    bands: Vec<(UncertaintyMode, Vec<CurvePoint>)>,
}

fn run_curve(
    patients: &[PatientRecord],
    range: &InclusionRange,
    modes: &[UncertaintyMode],
    levels: &[ConfidenceLevel],
    settings: SolverSettings,
) -> CurveRun {
    let problem = SurvivalProblem::new(patients, range, settings);
    let bands = modes
        .iter()
        .map(|&mode| (mode, problem.confidence_band(levels, mode)))
        .collect();
    CurveRun { problem, bands }
}

fn plot_curve(run: &CurveRun, label: &str, color: &str, levels: &[ConfidenceLevel]) -> PlotCurve {
    let report = CurveReport::new(&run.problem, &run.bands);
    let combined = run.bands.iter().any(|(m, _)| *m == UncertaintyMode::Full);
    let mut bands = Vec::new();
    for (mode, points) in &run.bands {
        let hatched = combined && *mode != UncertaintyMode::Full;
        // Widest level first so that narrower ones are drawn on top.
        for (rank, level) in levels.iter().rev().enumerate() {
            let opacity = if hatched { 0.6 } else { 0.15 + 0.15 * rank as f64 };
            bands.push(PlotBand {
                label: format!("{} {}%", mode.name().replace('_', " "), level.value() * 100.0),
                hatched,
                opacity,
                steps: points
                    .iter()
                    .filter_map(|p| p.interval(*level).map(|b| (p.time, b.lo, b.hi)))
                    .collect(),
            });
        }
    }
    PlotCurve {
        label: label.to_string(),
        color: color.to_string(),
        nominal: report.nominal.iter().map(|p| (p[0], p[1])).collect(),
        censor_times: report.censor_times,
        bands,
    }
}

pub fn run_single(args: &SingleArgs) -> Result<Vec<String>, CliError> {
    let modes = args.bands.modes()?;
    let levels = args.bands.levels()?;
    let card = read_datacard(&args.datacard)?;
    let min = args.parameter_min.unwrap_or(f64::NEG_INFINITY);
    let range = if min == f64::NEG_INFINITY {
        InclusionRange::everything()
    } else {
        InclusionRange::at_least(min)
    };
    let mut warnings = Vec::new();
    let (svg_path, json_path, warning) = output_paths(&args.output);
    warnings.extend(warning);

    let run = run_curve(&card.patients, &range, &modes, &levels, args.bands.settings());
    let report = SingleCurveReport {
        version: SCHEMA_VERSION,
        parameter_min: min,
        curve: CurveReport::new(&run.problem, &run.bands),
    };
    let label = match args.parameter_min {
        Some(m) => format!("observable >= {m}"),
        None => "all patients".to_string(),
    };
    let svg = render_svg(&[plot_curve(&run, &label, PALETTE[0], &levels)], "Kaplan-Meier");
    write_file(&svg_path, &svg)?;
    write_file(&json_path, &to_json(&report))?;
    Ok(warnings)
}

pub fn run_twogroups(args: &TwoGroupArgs) -> Result<Vec<String>, CliError> {
    let modes = args.bands.modes()?;
    let levels = args.bands.levels()?;
    let card = read_datacard(&args.datacard)?;
    let threshold = args.parameter_threshold;
    let mut warnings = Vec::new();
    let requested = args.output.clone().unwrap_or_else(|| {
        let stem = args
            .datacard
            .file_stem()
            .map_or_else(|| "kombine".into(), |s| s.to_string_lossy().into_owned());
        PathBuf::from(format!("{stem}_twogroups.svg"))
    });
    let (svg_path, json_path, warning) = output_paths(&requested);
    warnings.extend(warning);

    let settings = args.bands.settings();
    let low = InclusionRange::below(threshold);
    let high = InclusionRange::at_least(threshold);
    let groups = [("low", low, PALETTE[0]), ("high", high, PALETTE[1])];

    let mut curves = BTreeMap::new();
    let mut plots = Vec::new();
    let mut empty = false;
    for (name, range, color) in groups {
        let n = card
            .patients
            .iter()
            .filter(|p| range.contains(p.observable.nominal_value()))
            .count();
        if n == 0 {
            warnings.push(format!("the {name} group is empty at threshold {threshold}"));
            empty = true;
            continue;
        }
        let run = run_curve(&card.patients, &range, &modes, &levels, settings);
        let label = if name == "low" {
            format!("observable < {threshold}")
        } else {
            format!("observable >= {threshold}")
        };
        plots.push(plot_curve(&run, &label, color, &levels));
        curves.insert(name.to_string(), CurveReport::new(&run.problem, &run.bands));
    }

    let mut p_values = BTreeMap::new();
    if empty {
        warnings.push("p-values omitted because a group is empty".to_string());
    } else {
        let problem = TwoCurveProblem::new(&card.patients, &low, &high, settings.flip_cap)?;
        let use_exact = args.p_value_method == PValueMethodArg::Exact;
        let floats: &[bool] = if args.fix_assignments { &[false] } else { &[true, false] };
        for &float_assignments in floats {
            let options = PValueOptions {
                float_assignments,
                use_exact,
            };
            let report = problem.likelihood_pvalue(options);
            p_values.insert(
                format!("likelihood_{}", report.method.name()),
                PValueEntry::Likelihood(report),
            );
        }
        let observations = |range: &InclusionRange| -> Vec<(f64, bool)> {
            card.patients
                .iter()
                .filter(|p| range.contains(p.observable.nominal_value()))
                .map(|p| (p.survival_time, p.censored))
                .collect()
        };
        p_values.insert(
            "conventional_logrank".to_string(),
            PValueEntry::LogRank(conventional_logrank(&observations(&low), &observations(&high))),
        );
    }

    let report = TwoGroupReport {
        version: SCHEMA_VERSION,
        parameter_threshold: threshold,
        curves,
        p_values,
        warnings: warnings.clone(),
    };
    let svg = render_svg(&plots, "Kaplan-Meier, two groups");
    write_file(&svg_path, &svg)?;
    write_file(&json_path, &to_json(&report))?;
    Ok(warnings)
}

/// Runs a command and converts the outcome to a process exit code.
pub fn exit_code<F>(run: F) -> i32
where
    F: FnOnce() -> Result<Vec<String>, CliError>,
{
    match run() {
        Ok(warnings) => {
            for w in warnings {
                eprintln!("warning: {w}");
            }
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
