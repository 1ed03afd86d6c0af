//! Running several filters on one simulated trajectory and comparing their
//! posterior covariance traces against the two-step UKF.

use std::path::Path;

use crate::error::{Error, Result};
use crate::filters::{run_filter_with, FilterKind, FilterOptions, Posterior};
use crate::harness::config::ExperimentConfig;
use crate::models::simulate_truth;
use crate::sigma::Vector;

/// `(trace_s - trace_ref) / trace_ref`.
pub fn relative_error(trace_s: f64, trace_ref: f64) -> Result<f64> {
    if !(trace_ref.is_finite() && trace_ref > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "reference trace must be positive, got {trace_ref}"
        )));
    }
    Ok((trace_s - trace_ref) / trace_ref)
}

/// Number of trailing steps treated as steady state: the final 10%.
pub fn steady_state_window(steps: usize) -> usize {
    steps.div_ceil(10).max(1).min(steps.max(1))
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterStepRecord {
    pub trace: f64,
    pub mean: Vector,
    pub predicted_output: Vector,
    pub innovation_norm: f64,
}

/// Everything logged at one step: truth, measurement and one entry per filter
/// in the order the filters were requested.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    pub truth: Vector,
    pub measurement: Vector,
    pub filters: Vec<FilterStepRecord>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorSummary {
    /// Mean relative error over the steady-state window.
    pub steady_state_mean: f64,
    /// Largest absolute relative error over the steady-state window.
    pub steady_state_max_abs: f64,
    /// Largest absolute relative error over the whole run.
    pub max_abs: f64,
}

impl ErrorSummary {
    fn from_series(series: &[f64], window: usize) -> Option<Self> {
        if series.is_empty() {
            return None;
        }
        let tail = &series[series.len() - window.min(series.len())..];
        Some(ErrorSummary {
            steady_state_mean: tail.iter().sum::<f64>() / tail.len() as f64,
            steady_state_max_abs: tail.iter().fold(0.0, |m, v| m.max(v.abs())),
            max_abs: series.iter().fold(0.0, |m, v| m.max(v.abs())),
        })
    }
}

/// Per-step relative trace errors of the one-step filters against the
/// two-step UKF. A series is present only when both filters ran.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ComparisonReport {
    pub window: usize,
    pub ukf1: Option<Vec<f64>>,
    pub mukf: Option<Vec<f64>>,
    pub ukf1_summary: Option<ErrorSummary>,
    pub mukf_summary: Option<ErrorSummary>,
}

/// Output of [`run_experiment`].
#[derive(Debug, Clone, PartialEq)]
pub struct Experiment {
    pub filters: Vec<FilterKind>,
    pub state_dim: usize,
    pub output_dim: usize,
    pub records: Vec<StepRecord>,
    pub report: ComparisonReport,
}

/// Simulates one trajectory and runs every configured filter on it from the
/// same initial posterior.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Experiment> {
    config.validate()?;
    let kinds = config.filter_kinds()?;
    let built = config.build_model()?;
    let model = built.as_system();
    let x0 = config.initial_state();
    let initial = Posterior::new(x0.clone(), config.initial_covariance()?, 0)
        .map_err(|e| Error::Config(format!("initial posterior: {e}")))?;
    let trajectory = simulate_truth(model, &x0, config.steps, config.seed, None)?;
    let options = FilterOptions {
        jitter: config.jitter,
    };

    let runs = kinds
        .iter()
        .map(|kind| run_filter_with(*kind, model, &initial, &trajectory, &options))
        .collect::<Result<Vec<_>>>()?;

    let records = (0..trajectory.len())
        .map(|i| StepRecord {
            step: i + 1,
            truth: trajectory.states[i + 1].clone(),
            measurement: trajectory.outputs[i].clone(),
            filters: runs
                .iter()
                .map(|run| {
                    let (post, diag) = &run[i];
                    FilterStepRecord {
                        trace: post.trace(),
                        mean: post.mean.clone(),
                        predicted_output: diag.predicted_output.clone(),
                        innovation_norm: diag.innovation.norm(),
                    }
                })
                .collect(),
        })
        .collect::<Vec<_>>();

    let report = compare(&kinds, &records)?;
    Ok(Experiment {
        filters: kinds,
        state_dim: model.state_dim(),
        output_dim: model.output_dim(),
        records,
        report,
    })
}

fn position(kinds: &[FilterKind], name: &str) -> Option<usize> {
    kinds.iter().position(|k| k.name() == name)
}

fn compare(kinds: &[FilterKind], records: &[StepRecord]) -> Result<ComparisonReport> {
    let window = steady_state_window(records.len());
    let Some(reference) = position(kinds, "ukf2") else {
        return Ok(ComparisonReport {
            window,
            ..Default::default()
        });
    };
    let series = |name: &str| -> Result<Option<Vec<f64>>> {
        position(kinds, name)
            .map(|idx| {
                records
                    .iter()
                    .map(|r| {
                        relative_error(r.filters[idx].trace, r.filters[reference].trace)
                            .map_err(|e| e.at_step(r.step))
                    })
                    .collect()
            })
            .transpose()
    };
    let ukf1 = series("ukf1")?;
    let mukf = series("mukf")?;
    Ok(ComparisonReport {
        window,
        ukf1_summary: ukf1
            .as_deref()
            .and_then(|s| ErrorSummary::from_series(s, window)),
        mukf_summary: mukf
            .as_deref()
            .and_then(|s| ErrorSummary::from_series(s, window)),
        ukf1,
        mukf,
    })
}

/// Formats a float with 17 significant digits.
pub fn format_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Column names of the CSV written by [`write_csv`].
pub fn csv_header(experiment: &Experiment) -> Vec<String> {
    let n = experiment.state_dim;
    let p = experiment.output_dim;
    let mut h = vec!["step".to_string()];
    h.extend((1..=n).map(|i| format!("truth_{i}")));
    h.extend((1..=p).map(|i| format!("y_{i}")));
    for kind in &experiment.filters {
        let f = kind.name();
        h.push(format!("{f}_trace_P"));
        h.extend((1..=n).map(|i| format!("{f}_xhat_{i}")));
        h.push(format!("{f}_innov_norm"));
    }
    if experiment.report.ukf1.is_some() {
        h.push("relerr_ukf1".into());
    }
    if experiment.report.mukf.is_some() {
        h.push("relerr_mukf".into());
    }
    h
}

/// Writes one row per step. Output is byte-identical for identical input.
pub fn write_csv(experiment: &Experiment, path: &Path) -> Result<()> {
    let io_err = |e: csv::Error| Error::Io {
        path: path.to_path_buf(),
        source: e.into(),
    };
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(path)
        .map_err(io_err)?;
    w.write_record(csv_header(experiment)).map_err(io_err)?;
    let report = &experiment.report;
    for (i, r) in experiment.records.iter().enumerate() {
        let mut row = vec![r.step.to_string()];
        row.extend(r.truth.iter().map(|v| format_f64(*v)));
        row.extend(r.measurement.iter().map(|v| format_f64(*v)));
        for f in &r.filters {
            row.push(format_f64(f.trace));
            row.extend(f.mean.iter().map(|v| format_f64(*v)));
            row.push(format_f64(f.innovation_norm));
        }
        for series in [&report.ukf1, &report.mukf].into_iter().flatten() {
            row.push(format_f64(series[i]));
        }
        w.write_record(&row).map_err(io_err)?;
    }
    w.flush().map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}
