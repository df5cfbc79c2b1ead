//! CSV time series, structured summaries and sweep tables.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::config::{ExperimentConfig, Scenario};
use super::experiment::{FrameRecord, RunRecord, RunStatus};
use super::sweep::{LogLogFit, SweepAxis, SweepMetric, SweepResult};
use crate::decomposition::DecompositionResult;
use crate::effective::EffectiveState;
use crate::error::{Error, Result};
use crate::field::SolitonParams;

pub const TIMESERIES_HEADER: [&str; 12] = [
    "t", "a1", "v1", "gamma1", "mu1", "a2", "v2", "gamma2", "mu2", "w_l2", "residual", "iterations",
];

/// One line of the parameter time series.
#[derive(Clone, Debug, PartialEq)]
pub struct TimeSeriesRow {
    pub t: f64,
    pub sigmas: Vec<SolitonParams>,
    pub w_l2: f64,
    pub residual: f64,
    pub iterations: usize,
}

impl From<&FrameRecord> for TimeSeriesRow {
    fn from(f: &FrameRecord) -> Self {
        Self {
            t: f.t,
            sigmas: f.sigmas.clone(),
            w_l2: f.w_l2,
            residual: f.residual,
            iterations: f.iterations,
        }
    }
}

impl From<&DecompositionResult> for TimeSeriesRow {
    fn from(d: &DecompositionResult) -> Self {
        Self {
            t: d.time(),
            sigmas: d.sigmas.clone(),
            w_l2: d.w_l2,
            residual: d.residual_norm,
            iterations: d.iterations,
        }
    }
}

impl From<&EffectiveState> for TimeSeriesRow {
    fn from(s: &EffectiveState) -> Self {
        Self {
            t: s.t,
            sigmas: s.sigmas.clone(),
            w_l2: 0.0,
            residual: 0.0,
            iterations: 0,
        }
    }
}

/// 17 significant digits.
pub fn fmt_float(x: f64) -> String {
    format!("{x:.16e}")
}

fn csv_writer<W: Write>(out: W) -> csv::Writer<W> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out)
}

/// Writes the header and one record per row; a missing second soliton
/// leaves its four fields empty.
pub fn write_timeseries<W: Write, I>(out: W, rows: I) -> Result<()>
where
    I: IntoIterator<Item = TimeSeriesRow>,
{
    let mut w = csv_writer(out);
    w.write_record(TIMESERIES_HEADER)?;
    for row in rows {
        if row.sigmas.is_empty() || row.sigmas.len() > 2 {
            return Err(Error::Format(format!("time series rows carry 1 or 2 solitons, got {}", row.sigmas.len())));
        }
        let mut rec = Vec::with_capacity(TIMESERIES_HEADER.len());
        rec.push(fmt_float(row.t));
        for i in 0..2 {
            match row.sigmas.get(i) {
                Some(s) => rec.extend(s.to_array().iter().map(|&x| fmt_float(x))),
                None => rec.extend(std::iter::repeat_n(String::new(), 4)),
            }
        }
        rec.push(fmt_float(row.w_l2));
        rec.push(fmt_float(row.residual));
        rec.push(row.iterations.to_string());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Per-frame conservation diagnostics.
pub fn write_diagnostics<W: Write>(out: W, frames: &[FrameRecord]) -> Result<()> {
    let mut w = csv_writer(out);
    w.write_record(["t", "charge", "energy", "power", "charge_identity"])?;
    for f in frames {
        w.write_record([f.t, f.charge, f.energy, f.power, f.charge_identity].map(fmt_float))?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct RunSummary<'a> {
    config_hash: &'a str,
    scenario: Scenario,
    alpha: f64,
    tau_constant: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    tau_alpha: Option<f64>,
    window: f64,
    end_time: f64,
    sup_w: f64,
    w_at_window: f64,
    max_charge_drift: f64,
    steps: usize,
    frames: usize,
    status: &'a RunStatus,
    max_deviation: Vec<DeviationRow>,
    config: &'a ExperimentConfig,
}

#[derive(Serialize)]
struct DeviationRow {
    a: f64,
    v: f64,
    gamma: f64,
    mu: f64,
}

impl From<&[f64; 4]> for DeviationRow {
    fn from(d: &[f64; 4]) -> Self {
        Self {
            a: d[0],
            v: d[1],
            gamma: d[2],
            mu: d[3],
        }
    }
}

pub fn run_summary_toml(record: &RunRecord, config: &ExperimentConfig) -> Result<String> {
    let summary = RunSummary {
        config_hash: &record.config_hash,
        scenario: record.scenario,
        alpha: config.experiment.alpha,
        tau_constant: config.experiment.tau_constant,
        tau_alpha: record.tau_alpha,
        window: record.window,
        end_time: record.end_time,
        sup_w: record.sup_w,
        w_at_window: record.w_at_window,
        max_charge_drift: record.max_charge_drift,
        steps: record.steps,
        frames: record.frames.len(),
        status: &record.status,
        max_deviation: record.max_deviation.iter().map(DeviationRow::from).collect(),
        config,
    };
    toml::to_string(&summary).map_err(|e| Error::Format(e.to_string()))
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

/// `timeseries.csv`, `effective.csv`, `diagnostics.csv` and `summary.toml`
/// under `dir`. Returns the written paths.
pub fn emit_run(record: &RunRecord, config: &ExperimentConfig, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    write_timeseries(create(dir, "timeseries.csv")?, record.frames.iter().map(TimeSeriesRow::from))?;
    write_timeseries(
        create(dir, "effective.csv")?,
        record.frames.iter().map(|f| TimeSeriesRow {
            t: f.t,
            sigmas: f.effective.clone(),
            w_l2: 0.0,
            residual: 0.0,
            iterations: 0,
        }),
    )?;
    write_diagnostics(create(dir, "diagnostics.csv")?, &record.frames)?;
    let mut s = create(dir, "summary.toml")?;
    s.write_all(run_summary_toml(record, config)?.as_bytes())?;
    s.flush()?;
    Ok(["timeseries.csv", "effective.csv", "diagnostics.csv", "summary.toml"]
        .iter()
        .map(|n| dir.join(n))
        .collect())
}

#[derive(Serialize)]
struct SweepSummary<'a> {
    axis: SweepAxis,
    metric: SweepMetric,
    partial: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    fit: Option<LogLogFit>,
    values: Vec<f64>,
    metrics: Vec<f64>,
    base: &'a ExperimentConfig,
}

pub fn sweep_summary_toml(result: &SweepResult, base: &ExperimentConfig) -> Result<String> {
    let s = SweepSummary {
        axis: result.axis,
        metric: result.metric,
        partial: result.partial,
        fit: result.fit,
        values: result.samples.iter().map(|s| s.value).collect(),
        metrics: result.samples.iter().map(|s| s.metric).collect(),
        base,
    };
    toml::to_string(&s).map_err(|e| Error::Format(e.to_string()))
}

pub fn write_sweep_table<W: Write>(out: W, result: &SweepResult) -> Result<()> {
    let mut w = csv_writer(out);
    w.write_record([
        "value", "metric", "sup_w", "w_at_window", "dev_a", "dev_v", "dev_gamma", "dev_mu", "status",
    ])?;
    for s in &result.samples {
        let r = &s.record;
        let dev = r
            .max_deviation
            .iter()
            .fold([0.0f64; 4], |acc, d| std::array::from_fn(|c| acc[c].max(d[c])));
        let mut rec: Vec<String> = [s.value, s.metric, r.sup_w, r.w_at_window]
            .into_iter()
            .chain(dev)
            .map(fmt_float)
            .collect();
        rec.push(match &r.status {
            RunStatus::Completed => "completed".into(),
            RunStatus::Failed { .. } => "failed".into(),
        });
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// `sweep.csv`, `sweep_summary.toml` and one sub-directory per point.
pub fn emit_sweep(result: &SweepResult, base: &ExperimentConfig, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    write_sweep_table(create(dir, "sweep.csv")?, result)?;
    let mut s = create(dir, "sweep_summary.toml")?;
    s.write_all(sweep_summary_toml(result, base)?.as_bytes())?;
    s.flush()?;
    let mut paths = vec![dir.join("sweep.csv"), dir.join("sweep_summary.toml")];
    for (k, sample) in result.samples.iter().enumerate() {
        let point = super::sweep::configure_point(base, result.axis, sample.value)?;
        let sub = dir.join(format!("point_{k:02}"));
        paths.extend(emit_run(&sample.record, &point, &sub)?);
    }
    Ok(paths)
}
