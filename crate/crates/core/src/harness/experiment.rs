//! Initial data, observation windows and the evolve / track / compare
//! pipeline behind a single run.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, Scenario};
use crate::decomposition::{ProfileCache, Tracker};
use crate::effective::{integrate_sampled, EffectiveState};
use crate::error::{Error, Result};
use crate::field::{charge, energy, inner, symplectic, synthesize, write_checkpoint, SolitonParams, WaveField};
use crate::manifold::{tangent_frame, TangentFrame};
use crate::solver::{evolve, PotentialSpec};
use crate::spectral::Spectral;

pub fn profile_cache(config: &ExperimentConfig) -> Result<ProfileCache> {
    Ok(ProfileCache::with_interval(
        config.nonlinearity_spec()?,
        config.grid()?,
        config.experiment.mu_interval,
    ))
}

fn frames(config: &ExperimentConfig, cache: &ProfileCache) -> Result<Vec<TangentFrame>> {
    let grid = config.grid()?;
    config
        .solitons()
        .iter()
        .map(|s| tangent_frame(&*cache.get(s.mu)?, s, &grid))
        .collect()
}

/// Seeded noise with Fourier support `|m| <= n/8`, unit L² norm.
pub fn band_limited_noise(grid: &crate::field::Grid, seed: u64) -> Result<WaveField> {
    let n = grid.points();
    let band = (n / 8) as i64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut hat = vec![Complex64::new(0.0, 0.0); n];
    for m in -band..=band {
        let idx = m.rem_euclid(n as i64) as usize;
        hat[idx] = Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
    }
    Spectral::for_grid(grid).inverse(&mut hat);
    let w = WaveField::new(*grid, hat, 0.0)?;
    let norm = w.l2_norm();
    Ok(w.scale(Complex64::new(1.0 / norm, 0.0)))
}

/// Removes from `w` its component along the tangent vectors so that
/// `ω(w, X) = 0` for every `X` in `frames`.
pub fn project_skew_orthogonal(w: &WaveField, frames: &[TangentFrame]) -> Result<WaveField> {
    let vectors: Vec<&WaveField> = frames.iter().flat_map(|f| f.vectors.iter()).collect();
    let k = vectors.len();
    let mut m = DMatrix::zeros(k, k);
    let mut rhs = DVector::zeros(k);
    for (l, xl) in vectors.iter().enumerate() {
        rhs[l] = symplectic(w, xl)?;
        for (j, xj) in vectors.iter().enumerate() {
            m[(l, j)] = symplectic(xj, xl)?;
        }
    }
    let c = m
        .lu()
        .solve(&rhs)
        .ok_or(Error::DegenerateFrame { condition: f64::INFINITY })?;
    let mut out = w.clone();
    for (j, xj) in vectors.iter().enumerate() {
        out = out.axpy(Complex64::new(-c[j], 0.0), xj)?;
    }
    Ok(out)
}

/// Seeded fluctuation `w̃`: skew-orthogonal to every soliton frame and
/// rescaled to the configured budget (zero when the budget is zero).
pub fn build_fluctuation(config: &ExperimentConfig, cache: &ProfileCache) -> Result<WaveField> {
    let grid = config.grid()?;
    let budget = config.fluctuation_budget();
    if budget == 0.0 {
        return Ok(WaveField::zeros(grid));
    }
    let noise = band_limited_noise(&grid, config.experiment.seed)?;
    let w = project_skew_orthogonal(&noise, &frames(config, cache)?)?;
    let norm = w.l2_norm();
    if !(norm > 0.0) {
        return Err(Error::Config("projected fluctuation vanished".into()));
    }
    Ok(w.scale(Complex64::new(budget / norm, 0.0)))
}

/// `φ = Σ u_σ̃ᵢ + w̃` at `t = 0`.
pub fn build_initial(config: &ExperimentConfig, cache: &ProfileCache) -> Result<WaveField> {
    config.validate()?;
    let grid = config.grid()?;
    let mut psi = build_fluctuation(config, cache)?;
    for s in config.solitons() {
        psi = psi.add(&synthesize(&*cache.get(s.mu)?, &s, &grid)?)?;
    }
    psi.time = 0.0;
    Ok(psi)
}

/// `τ_α = C_τ α min(log v0, 2 |log h|)`; `h = 0` drops the second branch.
pub fn tau_alpha(alpha: f64, tau_constant: f64, h: f64, v0: f64) -> Result<f64> {
    if !(v0 > 1.0) {
        return Err(Error::Domain(format!("relative speed {v0} must exceed 1")));
    }
    let h_branch = if h > 0.0 { 2.0 * h.ln().abs() } else { f64::INFINITY };
    Ok(tau_constant * alpha * v0.ln().min(h_branch))
}

pub fn compute_tau_alpha(config: &ExperimentConfig, v0: f64) -> Result<f64> {
    tau_alpha(config.experiment.alpha, config.experiment.tau_constant, config.potential.h, v0)
}

/// Interval `[0, window]` on which the fluctuation is measured:
/// `τ_α` for collisions, `‖v0‖^ε` for escapes, `d^ε` for separated pairs,
/// and `2 C_τ α |log h|` (or the horizon when `h = 0`) for a single soliton.
pub fn observation_window(config: &ExperimentConfig) -> Result<f64> {
    let e = &config.experiment;
    let window = match e.scenario {
        Scenario::Collision => compute_tau_alpha(config, config.relative_speed())?,
        Scenario::Escape => config.relative_speed().powf(e.epsilon),
        Scenario::Separated => config.separation().powf(e.epsilon),
        Scenario::Single => {
            let h = config.potential.h;
            if h > 0.0 && e.horizon <= 0.0 {
                2.0 * e.tau_constant * e.alpha * h.ln().abs()
            } else {
                e.horizon
            }
        }
    };
    if !(window > 0.0 && window.is_finite()) {
        return Err(Error::Config(format!(
            "observation window {window} is not positive; set experiment.horizon"
        )));
    }
    Ok(window)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameRecord {
    pub t: f64,
    pub sigmas: Vec<SolitonParams>,
    pub effective: Vec<SolitonParams>,
    pub w_l2: f64,
    pub residual: f64,
    pub iterations: usize,
    pub charge: f64,
    pub energy: f64,
    /// `½ ∫ ∂_t V_h |psi|²`, the exact rate of change of the energy.
    pub power: f64,
    /// Relative defect of `‖psi‖² = ‖w‖² + Σ 2m(μᵢ) + 2 Σ_{i<j} Re<u_i, u_j>`.
    pub charge_identity: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum RunStatus {
    Completed,
    Failed { message: String },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub config_hash: String,
    pub scenario: Scenario,
    /// `τ_α` from the relative speed, when it is defined.
    pub tau_alpha: Option<f64>,
    pub window: f64,
    pub end_time: f64,
    pub frames: Vec<FrameRecord>,
    /// `sup ‖w‖₂` over the frames in `[0, window]`.
    pub sup_w: f64,
    /// `‖w‖₂` at the window end.
    pub w_at_window: f64,
    /// Per soliton, `max_t |σ_tracked - σ_effective|` for `(a, v, γ, μ)`.
    pub max_deviation: Vec<[f64; 4]>,
    pub max_charge_drift: f64,
    pub steps: usize,
    pub status: RunStatus,
}

impl RunRecord {
    pub fn is_completed(&self) -> bool {
        self.status == RunStatus::Completed
    }
}

fn power(psi: &WaveField, potential: &PotentialSpec) -> f64 {
    if !potential.is_time_dependent() {
        return 0.0;
    }
    let dx = psi.grid.spacing();
    0.5 * dx
        * psi
            .samples
            .iter()
            .enumerate()
            .map(|(j, z)| potential.time_derivative(psi.grid.x(j), psi.time) * z.norm_sqr())
            .sum::<f64>()
}

fn charge_identity(psi: &WaveField, w: &WaveField, sigmas: &[SolitonParams], cache: &ProfileCache) -> Result<f64> {
    let total = psi.l2_norm().powi(2);
    let mut solitons = Vec::with_capacity(sigmas.len());
    let mut rhs = w.l2_norm().powi(2);
    for s in sigmas {
        let p = cache.get(s.mu)?;
        rhs += 2.0 * p.mass;
        solitons.push(synthesize(&p, s, &psi.grid)?);
    }
    for i in 0..solitons.len() {
        for j in i + 1..solitons.len() {
            rhs += 2.0 * inner(&solitons[i], &solitons[j])?;
        }
    }
    Ok((total - rhs).abs() / total)
}

pub fn run_experiment(config: &ExperimentConfig) -> Result<RunRecord> {
    run_experiment_with(config, None)
}

/// Runs the full pipeline. Configuration problems are returned as errors;
/// failures during evolution or tracking give a record with
/// [`RunStatus::Failed`] and the frames gathered so far. Full-field
/// checkpoints go to `checkpoint_dir` when `solver.field_checkpoint_stride`
/// is non-zero.
pub fn run_experiment_with(config: &ExperimentConfig, checkpoint_dir: Option<&Path>) -> Result<RunRecord> {
    config.validate()?;
    let hash = config.hash()?;
    let cache = profile_cache(config)?;
    let potential = config.potential_spec()?;
    let nl = config.nonlinearity_spec()?;
    let solver = config.solver.solver_config();
    let window = observation_window(config)?;
    let end_time = window.max(config.experiment.horizon);
    let tau = if config.relative_speed() > 1.0 {
        Some(compute_tau_alpha(config, config.relative_speed())?)
    } else {
        None
    };
    let initial = config.solitons();
    let psi0 = build_initial(config, &cache)?;

    let field_every = match config.solver.field_checkpoint_stride {
        0 => None,
        k => Some(k.div_ceil(config.solver.checkpoint_stride).max(1)),
    };
    if let (Some(_), Some(dir)) = (field_every, checkpoint_dir) {
        std::fs::create_dir_all(dir)?;
    }

    let mut tracker = Tracker::new(&cache, &initial);
    let mut frames: Vec<FrameRecord> = Vec::new();
    let mut observed = 0usize;
    let mut observe = |psi: &WaveField| -> Result<()> {
        let fit = tracker.push(psi)?;
        let identity = charge_identity(psi, &fit.fluctuation, &fit.sigmas, &cache)?;
        frames.push(FrameRecord {
            t: psi.time,
            sigmas: fit.sigmas.clone(),
            effective: Vec::new(),
            w_l2: fit.w_l2,
            residual: fit.residual_norm,
            iterations: fit.iterations,
            charge: charge(psi),
            energy: energy(psi, &potential, &nl, psi.time)?,
            power: power(psi, &potential),
            charge_identity: identity,
        });
        if let (Some(every), Some(dir)) = (field_every, checkpoint_dir) {
            if observed.is_multiple_of(every) {
                let path = dir.join(format!("field_{observed:06}.bin"));
                let mut out = BufWriter::new(File::create(path)?);
                write_checkpoint(&mut out, psi, &hash)?;
            }
        }
        observed += 1;
        Ok(())
    };

    // two legs so that a frame falls exactly on the window end
    let mut steps = 0;
    let mut status = RunStatus::Completed;
    match evolve(&psi0, &potential, &nl, 0.0, window, &solver, &mut observe) {
        Ok(first) => {
            steps += first.steps;
            if end_time > window {
                let mut skip_first = true;
                let second = evolve(&first.field, &potential, &nl, window, end_time, &solver, |psi| {
                    if std::mem::take(&mut skip_first) {
                        return Ok(());
                    }
                    observe(psi)
                });
                match second {
                    Ok(o) => steps += o.steps,
                    Err(e) => status = RunStatus::Failed { message: e.to_string() },
                }
            }
        }
        Err(e) => status = RunStatus::Failed { message: e.to_string() },
    }

    // effective flow sampled at the tracked times
    let times: Vec<f64> = frames.iter().map(|f| f.t).collect();
    let effective = integrate_sampled(&EffectiveState::new(initial.clone(), 0.0), &potential, &times, solver.dt)?;
    let mut max_deviation = vec![[0.0f64; 4]; initial.len()];
    for (f, e) in frames.iter_mut().zip(effective) {
        for (i, (s, se)) in f.sigmas.iter().zip(&e.sigmas).enumerate() {
            let (x, y) = (s.to_array(), se.to_array());
            for c in 0..4 {
                max_deviation[i][c] = max_deviation[i][c].max((x[c] - y[c]).abs());
            }
        }
        f.effective = e.sigmas;
    }

    let q0 = frames.first().map(|f| f.charge).unwrap_or(0.0);
    let max_charge_drift = frames
        .iter()
        .map(|f| if q0 > 0.0 { (f.charge - q0).abs() / q0 } else { 0.0 })
        .fold(0.0, f64::max);
    let in_window = |f: &&FrameRecord| f.t <= window * (1.0 + 1e-12);
    let sup_w = frames.iter().filter(in_window).map(|f| f.w_l2).fold(0.0, f64::max);
    let w_at_window = frames
        .iter()
        .rfind(in_window)
        .filter(|f| (f.t - window).abs() <= 1e-9 * window.max(1.0))
        .map(|f| f.w_l2)
        .unwrap_or(f64::NAN);

    Ok(RunRecord {
        config_hash: hash,
        scenario: config.experiment.scenario,
        tau_alpha: tau,
        window,
        end_time,
        frames,
        sup_w,
        w_at_window,
        max_deviation,
        max_charge_drift,
        steps,
        status,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(scenario: &str, extra: &[&str]) -> ExperimentConfig {
        let mut o = vec![
            "grid.length=96.0".to_string(),
            "grid.points=1024".to_string(),
            format!("experiment.scenario={scenario}"),
            "initial.soliton1={a=-8.0, v=4.0, gamma=0.0, mu=1.0}".to_string(),
            "initial.soliton2={a=8.0, v=-4.0, gamma=0.5, mu=1.0}".to_string(),
        ];
        o.extend(extra.iter().map(|s| s.to_string()));
        ExperimentConfig::from_toml_with_overrides("", &o).unwrap()
    }

    #[test]
    fn tau_examples() {
        let e4 = 4f64.exp();
        assert!((tau_alpha(0.5, 1.0, 0.0, e4).unwrap() - 2.0).abs() < 1e-14);
        assert!((tau_alpha(0.5, 1.0, (-1f64).exp(), e4).unwrap() - 1.0).abs() < 1e-14);
        assert!(matches!(tau_alpha(0.5, 1.0, 0.0, 1.0), Err(Error::Domain(_))));
        let mut last = 0.0;
        for v0 in [1.5, 2.0, 8.0, 100.0, 1e6] {
            let t = tau_alpha(0.5, 1.0, 0.1, v0).unwrap();
            assert!(t >= last);
            last = t;
        }
    }

    #[test]
    fn noise_is_band_limited_and_seeded() {
        let g = crate::field::Grid::new(32.0, 256).unwrap();
        let a = band_limited_noise(&g, 7).unwrap();
        assert_eq!(a, band_limited_noise(&g, 7).unwrap());
        assert_ne!(a, band_limited_noise(&g, 8).unwrap());
        assert!((a.l2_norm() - 1.0).abs() < 1e-12);
        let mut hat = a.samples.clone();
        Spectral::for_grid(&g).forward(&mut hat);
        for (m, z) in hat.iter().enumerate() {
            let m = if m > 128 { 256 - m } else { m };
            if m > 32 {
                assert!(z.norm() < 1e-10, "mode {m}");
            }
        }
    }

    #[test]
    fn zero_budget_gives_exact_sum() {
        let c = small("collision", &[]);
        let cache = profile_cache(&c).unwrap();
        let psi = build_initial(&c, &cache).unwrap();
        let g = c.grid().unwrap();
        let mut sum = WaveField::zeros(g);
        for s in c.solitons() {
            sum = sum.add(&synthesize(&cache.get(s.mu).unwrap(), &s, &g).unwrap()).unwrap();
        }
        assert_eq!(psi.samples, sum.samples);
    }

    #[test]
    fn seeded_fluctuation_is_skew_orthogonal_and_charge_splits() {
        let c = small("collision", &["initial.fluctuation_norm=0.05"]);
        let cache = profile_cache(&c).unwrap();
        let w = build_fluctuation(&c, &cache).unwrap();
        assert!((w.l2_norm() - 0.05).abs() < 1e-14);
        for f in frames(&c, &cache).unwrap() {
            for x in &f.vectors {
                assert!(symplectic(&w, x).unwrap().abs() < 1e-13);
            }
        }
        let psi = build_initial(&c, &cache).unwrap();
        let s = c.solitons();
        let g = c.grid().unwrap();
        let (p1, p2) = (cache.get(s[0].mu).unwrap(), cache.get(s[1].mu).unwrap());
        let u1 = synthesize(&p1, &s[0], &g).unwrap();
        let u2 = synthesize(&p2, &s[1], &g).unwrap();
        let expected = p1.mass + p2.mass + 0.5 * 0.05f64.powi(2) + inner(&u1, &u2).unwrap();
        assert!((charge(&psi) - expected).abs() <= 1e-10 * expected);
        let fit = crate::decomposition::decompose(&psi, &s[0], &s[1], &cache).unwrap();
        for (a, b) in fit.sigmas.iter().zip(&s) {
            for (x, y) in a.to_array().iter().zip(b.to_array()) {
                assert!((x - y).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn windows_by_scenario() {
        let c = small("collision", &[]);
        assert!((observation_window(&c).unwrap() - 0.5 * 8f64.ln()).abs() < 1e-14);
        let c = small("escape", &["initial.soliton1.v=-4.0", "initial.soliton2.v=4.0"]);
        assert!((observation_window(&c).unwrap() - 8f64.sqrt()).abs() < 1e-14);
        let c = small("separated", &[]);
        assert!((observation_window(&c).unwrap() - 4.0).abs() < 1e-14);
        let c = small("single", &[]);
        assert!(observation_window(&c).is_err());
        let c = small("single", &["experiment.horizon=2.0"]);
        assert_eq!(observation_window(&c).unwrap(), 2.0);
    }

    #[test]
    fn single_free_soliton_run() {
        // the splitting error leaves an O(dt²) shape defect in w; dt = 5e-4
        // keeps it below 1e-6
        let c = small(
            "single",
            &[
                "experiment.horizon=5.0",
                "initial.soliton1={a=-5.0, v=3.0, gamma=0.2, mu=1.0}",
                "solver.dt=5e-4",
                "solver.checkpoint_stride=200",
            ],
        );
        let r = run_experiment(&c).unwrap();
        assert!(r.is_completed(), "{:?}", r.status);
        assert_eq!(r.frames.len(), 51);
        assert_eq!(r.frames.last().unwrap().t, 5.0);
        assert!(r.sup_w <= 1e-6, "{}", r.sup_w);
        for d in &r.max_deviation[0] {
            assert!(*d <= 1e-6, "{:?}", r.max_deviation);
        }
        assert!(r.max_charge_drift <= 1e-9);
        assert!(r.frames.iter().all(|f| f.charge_identity <= 1e-8));
    }

    #[test]
    fn failures_keep_partial_series() {
        // too few steps allowed for the second leg
        let c = small(
            "single",
            &[
                "experiment.horizon=1.0",
                "potential.kind=gaussian",
                "potential.amplitude=0.1",
                "potential.h=0.9",
                "initial.soliton1={a=-5.0, v=3.0, gamma=0.2, mu=1.0}",
                "solver.checkpoint_stride=100",
                "solver.max_steps=500",
            ],
        );
        let r = run_experiment(&c).unwrap();
        assert!(!r.is_completed());
        assert!(r.frames.is_empty() || r.frames.len() < 11);
    }
}
