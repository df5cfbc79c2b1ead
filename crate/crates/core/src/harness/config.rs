//! Experiment configuration: a TOML file plus `key=value` overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::decomposition::MuInterval;
use crate::error::{Error, Result};
use crate::field::{Grid, SolitonParams};
use crate::nonlinearity::{NonlinearityConfig, NonlinearitySpec};
use crate::solver::{PotentialBase, PotentialSpec, SolverConfig};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    #[default]
    Collision,
    Escape,
    Separated,
    Single,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PotentialConfig {
    /// `zero`, `gaussian` or `cosine`.
    #[serde(default = "default_kind")]
    pub kind: String,
    #[serde(default)]
    pub amplitude: f64,
    #[serde(default = "one")]
    pub width: f64,
    #[serde(default = "one")]
    pub wavenumber: f64,
    /// Non-zero turns `V` into `V(y) cos(Ω t)`.
    #[serde(default)]
    pub modulation_frequency: f64,
    #[serde(default)]
    pub h: f64,
}

fn default_kind() -> String {
    "zero".into()
}

fn one() -> f64 {
    1.0
}

impl Default for PotentialConfig {
    fn default() -> Self {
        Self {
            kind: default_kind(),
            amplitude: 0.0,
            width: 1.0,
            wavenumber: 1.0,
            modulation_frequency: 0.0,
            h: 0.0,
        }
    }
}

impl PotentialConfig {
    pub fn to_spec(&self) -> Result<PotentialSpec> {
        let base = match self.kind.as_str() {
            "zero" => PotentialBase::Zero,
            "gaussian" => PotentialBase::Gaussian {
                amplitude: self.amplitude,
                width: self.width,
            },
            "cosine" => PotentialBase::Cosine {
                amplitude: self.amplitude,
                wavenumber: self.wavenumber,
            },
            other => {
                return Err(Error::Config(format!(
                    "potential.kind must be zero, gaussian or cosine (got {other:?})"
                )))
            }
        };
        let base = if self.modulation_frequency != 0.0 {
            PotentialBase::TimeModulated {
                base: Box::new(base),
                frequency: self.modulation_frequency,
            }
        } else {
            base
        };
        PotentialSpec::new(base, self.h)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    #[serde(default = "default_length")]
    pub length: f64,
    #[serde(default = "default_points")]
    pub points: usize,
}

fn default_length() -> f64 {
    256.0
}
fn default_points() -> usize {
    8192
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            length: default_length(),
            points: default_points(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    #[serde(default = "default_dt")]
    pub dt: f64,
    /// Steps between tracked frames.
    #[serde(default = "default_stride")]
    pub checkpoint_stride: usize,
    #[serde(default = "default_max_steps")]
    pub max_steps: usize,
    /// Steps between full-field checkpoint files (0 disables them).
    #[serde(default)]
    pub field_checkpoint_stride: usize,
}

fn default_dt() -> f64 {
    1e-3
}
fn default_stride() -> usize {
    10
}
fn default_max_steps() -> usize {
    50_000_000
}

impl Default for SolverSection {
    fn default() -> Self {
        Self {
            dt: default_dt(),
            checkpoint_stride: default_stride(),
            max_steps: default_max_steps(),
            field_checkpoint_stride: 0,
        }
    }
}

impl SolverSection {
    pub fn solver_config(&self) -> SolverConfig {
        SolverConfig {
            dt: self.dt,
            checkpoint_stride: self.checkpoint_stride,
            max_steps: self.max_steps,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialConfig {
    #[serde(default = "default_soliton1")]
    pub soliton1: SolitonParams,
    #[serde(default)]
    pub soliton2: Option<SolitonParams>,
    /// `‖w̃‖₂` before the decay factor; 0 means no fluctuation.
    #[serde(default)]
    pub fluctuation_norm: f64,
    /// `χ` in the extra factor `exp(-χ s)`, with `s` the relative speed
    /// (collision, escape) or the separation (separated).
    #[serde(default)]
    pub fluctuation_decay: f64,
    /// `C` in the smallness condition `‖w̃‖₂² < C / ‖v₀‖`.
    #[serde(default = "one")]
    pub fluctuation_smallness: f64,
}

fn default_soliton1() -> SolitonParams {
    SolitonParams::new(-12.0, 8.0, 0.0, 1.0)
}

impl Default for InitialConfig {
    fn default() -> Self {
        Self {
            soliton1: default_soliton1(),
            soliton2: Some(SolitonParams::new(12.0, -8.0, 0.0, 1.0)),
            fluctuation_norm: 0.0,
            fluctuation_decay: 0.0,
            fluctuation_smallness: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    #[serde(default)]
    pub scenario: Scenario,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "one")]
    pub tau_constant: f64,
    /// Evolution runs to `max(window, horizon)`.
    #[serde(default)]
    pub horizon: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output")]
    pub output: PathBuf,
    #[serde(default)]
    pub mu_interval: MuInterval,
    /// Exponent of the escape / separation windows `‖v₀‖^ε`, `d^ε`.
    #[serde(default = "default_alpha")]
    pub epsilon: f64,
}

fn default_alpha() -> f64 {
    0.5
}
fn default_output() -> PathBuf {
    PathBuf::from("out")
}

impl Default for ExperimentSection {
    fn default() -> Self {
        Self {
            scenario: Scenario::Collision,
            alpha: 0.5,
            tau_constant: 1.0,
            horizon: 0.0,
            seed: 0,
            output: default_output(),
            mu_interval: MuInterval::default(),
            epsilon: 0.5,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub nonlinearity: NonlinearityConfig,
    #[serde(default)]
    pub potential: PotentialConfig,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub initial: InitialConfig,
    #[serde(default)]
    pub experiment: ExperimentSection,
}

/// Parses the right-hand side of an override as a TOML value, falling back
/// to a bare string.
fn parse_override_value(raw: &str) -> toml::Value {
    let wrapped = format!("v = {raw}");
    match wrapped.parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| toml::Value::String(raw.into())),
        Err(_) => toml::Value::String(raw.into()),
    }
}

fn set_path(table: &mut toml::Table, key: &str, value: toml::Value) -> Result<()> {
    let mut parts: Vec<&str> = key.split('.').collect();
    let last = parts
        .pop()
        .filter(|s| !s.is_empty())
        .ok_or_else(|| Error::Config(format!("empty override key {key:?}")))?;
    let mut cur = table;
    for p in parts {
        let entry = cur
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("override {key:?}: {p:?} is not a table")))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        Self::from_toml_with_overrides::<&str>(text, &[])
    }

    /// Applies `key.path=value` overrides on the parsed document before
    /// deserializing, so overrides go through the same validation.
    pub fn from_toml_with_overrides<S: AsRef<str>>(text: &str, overrides: &[S]) -> Result<Self> {
        let mut table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        for o in overrides {
            let o = o.as_ref();
            let (k, v) = o
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override {o:?} is not key=value")))?;
            set_path(&mut table, k.trim(), parse_override_value(v.trim()))?;
        }
        let config: Self = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load<S: AsRef<str>>(path: &Path, overrides: &[S]) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_with_overrides(&text, overrides)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// SHA-256 of the canonical serialization.
    pub fn hash(&self) -> Result<String> {
        Ok(hex::encode(Sha256::digest(self.to_toml()?.as_bytes())))
    }

    pub fn nonlinearity_spec(&self) -> Result<NonlinearitySpec> {
        NonlinearitySpec::try_from(&self.nonlinearity)
    }

    pub fn potential_spec(&self) -> Result<PotentialSpec> {
        self.potential.to_spec()
    }

    pub fn grid(&self) -> Result<Grid> {
        Grid::new(self.grid.length, self.grid.points)
    }

    pub fn solitons(&self) -> Vec<SolitonParams> {
        let mut s = vec![self.initial.soliton1];
        if self.experiment.scenario != Scenario::Single {
            if let Some(s2) = self.initial.soliton2 {
                s.push(s2);
            }
        }
        s
    }

    /// `‖v₀‖ = |ṽ₁ - ṽ₂|`, or `|ṽ₁|` for a single soliton.
    pub fn relative_speed(&self) -> f64 {
        let s = self.solitons();
        match s.as_slice() {
            [a, b] => (a.v - b.v).abs(),
            [a] => a.v.abs(),
            _ => 0.0,
        }
    }

    pub fn separation(&self) -> f64 {
        let s = self.solitons();
        match s.as_slice() {
            [a, b] => (a.a - b.a).abs(),
            _ => 0.0,
        }
    }

    /// Norm of the seeded fluctuation after the decay factor.
    pub fn fluctuation_budget(&self) -> f64 {
        let i = &self.initial;
        if i.fluctuation_norm == 0.0 {
            return 0.0;
        }
        let s = match self.experiment.scenario {
            Scenario::Separated => self.separation(),
            _ => self.relative_speed(),
        };
        i.fluctuation_norm * (-i.fluctuation_decay * s).exp()
    }

    pub fn validate(&self) -> Result<()> {
        self.nonlinearity_spec()?;
        self.potential_spec()?;
        self.grid()?;
        let e = &self.experiment;
        if !(e.alpha > 0.0 && e.alpha < 1.0) {
            return Err(Error::Config(format!("alpha = {} must lie in (0, 1)", e.alpha)));
        }
        if !(e.tau_constant > 0.0) {
            return Err(Error::Config("tau_constant must be positive".into()));
        }
        if !(e.epsilon > 0.0 && e.epsilon < 1.0) {
            return Err(Error::Config(format!("epsilon = {} must lie in (0, 1)", e.epsilon)));
        }
        if !(self.solver.dt > 0.0) || self.solver.checkpoint_stride == 0 {
            return Err(Error::Config("solver.dt must be positive and checkpoint_stride >= 1".into()));
        }
        let solitons = self.solitons();
        for s in &solitons {
            if !s.is_finite() {
                return Err(Error::Config(format!("non-finite soliton parameters {s:?}")));
            }
            if !e.mu_interval.contains(s.mu) {
                return Err(Error::Config(format!(
                    "mu = {} outside [{}, {}]",
                    s.mu, e.mu_interval.lo, e.mu_interval.hi
                )));
            }
        }
        if e.scenario != Scenario::Single && solitons.len() != 2 {
            return Err(Error::Config(format!("scenario {:?} needs initial.soliton2", e.scenario)));
        }
        if e.scenario == Scenario::Escape {
            let (a, b) = (solitons[0], solitons[1]);
            if (a.a - b.a) * (a.v - b.v) < 0.0 {
                return Err(Error::Config(
                    "escape scenario needs (a1 - a2)(v1 - v2) >= 0".into(),
                ));
            }
        }
        let i = &self.initial;
        if i.fluctuation_norm < 0.0 || i.fluctuation_decay < 0.0 {
            return Err(Error::Config("fluctuation norm and decay must be >= 0".into()));
        }
        let budget = self.fluctuation_budget();
        if budget > 0.0 && matches!(e.scenario, Scenario::Collision | Scenario::Escape) {
            let v0 = self.relative_speed();
            if v0 > 0.0 && budget * budget >= i.fluctuation_smallness / v0 {
                return Err(Error::Config(format!(
                    "fluctuation norm {budget:e} violates ‖w‖² < {} / ‖v0‖ = {:e}",
                    i.fluctuation_smallness,
                    i.fluctuation_smallness / v0
                )));
            }
        }
        Ok(())
    }
}
