//! Scaling sweeps over the relative speed, the adiabatic scale or the
//! separation, with a least-squares log-log fit.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, Scenario};
use super::experiment::{run_experiment, RunRecord};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    /// Relative speed `‖v0‖`; the solitons get `±v0/2` (a single soliton gets `v0`).
    V0,
    /// Adiabatic scale `h` of the potential.
    H,
    /// Separation `d`; the solitons are placed at `∓d/2`.
    D,
}

impl std::str::FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "v0" => Ok(Self::V0),
            "h" => Ok(Self::H),
            "d" => Ok(Self::D),
            other => Err(Error::Config(format!("unknown sweep axis {other:?} (v0, h, d)"))),
        }
    }
}

/// Quantity fitted against the axis value.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepMetric {
    SupW,
    WAtWindow,
    /// `max_t |a_tracked - a_effective|` of the first soliton.
    DeviationA,
}

impl SweepMetric {
    /// `sup_w` for speed and separation sweeps, the centre deviation for `h`.
    pub fn default_for(axis: SweepAxis) -> Self {
        match axis {
            SweepAxis::H => Self::DeviationA,
            _ => Self::SupW,
        }
    }

    pub fn of(&self, r: &RunRecord) -> f64 {
        match self {
            Self::SupW => r.sup_w,
            Self::WAtWindow => r.w_at_window,
            Self::DeviationA => r.max_deviation.first().map(|d| d[0]).unwrap_or(f64::NAN),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepSample {
    pub value: f64,
    pub metric: f64,
    pub record: RunRecord,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogLogFit {
    pub slope: f64,
    /// Standard error of the slope (`NaN` with only two points).
    pub slope_error: f64,
    pub intercept: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub axis: SweepAxis,
    pub metric: SweepMetric,
    pub samples: Vec<SweepSample>,
    /// Fit over the completed samples; absent with fewer than three.
    pub fit: Option<LogLogFit>,
    /// Some run failed.
    pub partial: bool,
}

impl SweepResult {
    pub fn slope(&self) -> Option<f64> {
        self.fit.map(|f| f.slope)
    }
}

/// Least squares for `log y = slope log x + intercept`.
pub fn fit_log_log(x: &[f64], y: &[f64]) -> Result<LogLogFit> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::Domain("log-log fit needs matching inputs of length >= 2".into()));
    }
    if x.iter().chain(y).any(|v| !(*v > 0.0 && v.is_finite())) {
        return Err(Error::Domain("log-log fit needs positive finite data".into()));
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::Domain("log-log fit needs distinct abscissae".into()));
    }
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let slope_error = if lx.len() > 2 {
        let ssr: f64 = lx
            .iter()
            .zip(&ly)
            .map(|(a, b)| (b - intercept - slope * a).powi(2))
            .sum();
        (ssr / (n - 2.0) / sxx).sqrt()
    } else {
        f64::NAN
    };
    Ok(LogLogFit {
        slope,
        slope_error,
        intercept,
    })
}

/// The base configuration with one axis set to `value`.
pub fn configure_point(base: &ExperimentConfig, axis: SweepAxis, value: f64) -> Result<ExperimentConfig> {
    let mut c = base.clone();
    match axis {
        SweepAxis::V0 => {
            if c.experiment.scenario == Scenario::Single {
                c.initial.soliton1.v = value;
            } else {
                let s2 = c
                    .initial
                    .soliton2
                    .as_mut()
                    .ok_or_else(|| Error::Config("speed sweep needs two solitons".into()))?;
                let sign = if c.initial.soliton1.v >= s2.v { 1.0 } else { -1.0 };
                c.initial.soliton1.v = 0.5 * sign * value;
                s2.v = -0.5 * sign * value;
            }
        }
        SweepAxis::H => c.potential.h = value,
        SweepAxis::D => {
            let s2 = c
                .initial
                .soliton2
                .as_mut()
                .ok_or_else(|| Error::Config("separation sweep needs two solitons".into()))?;
            let sign = if c.initial.soliton1.a <= s2.a { 1.0 } else { -1.0 };
            c.initial.soliton1.a = -0.5 * sign * value;
            s2.a = 0.5 * sign * value;
        }
    }
    c.validate()?;
    Ok(c)
}

/// One run per axis value on a pool of `jobs` workers (0 = all cores).
pub fn run_scaling_sweep(
    base: &ExperimentConfig,
    axis: SweepAxis,
    values: &[f64],
    metric: SweepMetric,
    jobs: usize,
) -> Result<SweepResult> {
    if values.len() < 3 {
        return Err(Error::Config(format!("a sweep needs at least 3 values, got {}", values.len())));
    }
    let configs: Vec<ExperimentConfig> = values
        .iter()
        .map(|&v| configure_point(base, axis, v))
        .collect::<Result<_>>()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::Config(e.to_string()))?;
    let records: Vec<RunRecord> = pool.install(|| {
        configs
            .par_iter()
            .map(run_experiment)
            .collect::<Result<Vec<_>>>()
    })?;
    let samples: Vec<SweepSample> = values
        .iter()
        .zip(records)
        .map(|(&value, record)| SweepSample {
            value,
            metric: metric.of(&record),
            record,
        })
        .collect();
    let partial = samples.iter().any(|s| !s.record.is_completed());
    let (x, y): (Vec<f64>, Vec<f64>) = samples
        .iter()
        .filter(|s| s.record.is_completed() && s.metric > 0.0 && s.metric.is_finite())
        .map(|s| (s.value, s.metric))
        .unzip();
    let fit = if x.len() >= 3 { Some(fit_log_log(&x, &y)?) } else { None };
    Ok(SweepResult {
        axis,
        metric,
        samples,
        fit,
        partial,
    })
}
