//! Ground-state profiles `eta_mu` solving `-eta'' + mu eta - f(eta) = 0`.
//!
//! Power laws are seeded with their closed-form sech profile; Hartree and
//! mixed nonlinearities are seeded by spectral renormalization. Either way
//! the result is polished by a Newton–Krylov iteration restricted to even
//! functions (where the linearization has no kernel).

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::field::{Grid, WaveField};
use crate::krylov::gmres;
use crate::nonlinearity::NonlinearitySpec;
use crate::spectral::Spectral;

/// Relative step for μ-derivatives.
pub const DMU_RELATIVE_STEP: f64 = 1e-4;
/// Residual accepted from the eigenvalue solver, relative to `‖eta‖₂`.
pub const PROFILE_TOLERANCE: f64 = 1e-10;
const PROFILE_TARGET: f64 = 1e-12;
const MAX_NEWTON: usize = 50;

#[derive(Clone, Debug)]
pub struct SolitonProfile {
    pub spec: NonlinearitySpec,
    pub mu: f64,
    pub grid: Grid,
    pub samples: Vec<f64>,
    pub deriv_samples: Vec<f64>,
    pub dmu_samples: Vec<f64>,
    pub mass: f64,
    pub mass_slope: f64,
    /// `‖(-Δ + mu) eta - f(eta)‖₂ / ‖eta‖₂`.
    pub residual: f64,
    tail_rate: f64,
    tail_amplitude: f64,
}

/// Bare solution of the eigenvalue problem, before derived quantities.
#[derive(Clone, Debug)]
pub struct RawProfile {
    pub mu: f64,
    pub samples: Vec<f64>,
    pub residual: f64,
    pub iterations: usize,
}

fn l2(grid: &Grid, u: &[f64]) -> f64 {
    (grid.spacing() * u.iter().map(|x| x * x).sum::<f64>()).sqrt()
}

fn symmetrize(grid: &Grid, u: &mut [f64]) {
    let n = u.len();
    for j in 1..n / 2 {
        let m = grid.mirror_index(j);
        let avg = 0.5 * (u[j] + u[m]);
        u[j] = avg;
        u[m] = avg;
    }
}

fn to_field(grid: &Grid, u: &[f64]) -> WaveField {
    WaveField::from_fn(*grid, |_| Complex64::new(0.0, 0.0))
        .with_samples(u.iter().map(|&x| Complex64::new(x, 0.0)).collect())
}

/// `(-Δ + mu) eta - f(eta)`.
fn eigen_residual(spec: &NonlinearitySpec, mu: f64, grid: &Grid, eta: &[f64]) -> Vec<f64> {
    let sp = Spectral::for_grid(grid);
    let lap = sp.real_laplacian(eta);
    let density: Vec<f64> = eta.iter().map(|x| x * x).collect();
    let phase = spec.phase_potential_from_density(grid, &density);
    eta.iter()
        .zip(&lap)
        .zip(&phase)
        .map(|((e, l), p)| -l + mu * e - p * e)
        .collect()
}

/// Exact profile `[(s+2) mu / 2]^{1/s} sech^{2/s}(s √mu x / 2)` of the pure power law.
pub fn power_law_profile(s: f64, mu: f64, x: f64) -> f64 {
    let amp = (0.5 * (s + 2.0) * mu).powf(1.0 / s);
    amp * (1.0 / (0.5 * s * mu.sqrt() * x).cosh()).powf(2.0 / s)
}

fn renormalization_seed(spec: &NonlinearitySpec, mu: f64, grid: &Grid) -> Vec<f64> {
    let sp = Spectral::for_grid(grid);
    let p = spec.renormalization_degree();
    let exponent = p / (p - 1.0);
    let mut eta: Vec<f64> = grid
        .coordinates()
        .iter()
        .map(|&x| power_law_profile(2.0, mu, x))
        .collect();
    for _ in 0..2000 {
        let density: Vec<f64> = eta.iter().map(|x| x * x).collect();
        let phase = spec.phase_potential_from_density(grid, &density);
        let nonlinear: Vec<f64> = eta.iter().zip(&phase).map(|(e, q)| e * q).collect();
        let mut eta_hat: Vec<Complex64> = eta.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        let mut n_hat: Vec<Complex64> = nonlinear.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        sp.forward(&mut eta_hat);
        sp.forward(&mut n_hat);
        let (mut num, mut den) = (0.0, 0.0);
        for ((e, q), k) in eta_hat.iter().zip(&n_hat).zip(sp.wavenumbers()) {
            num += (k * k + mu) * e.norm_sqr();
            den += (e.conj() * q).re;
        }
        if den <= 0.0 {
            break;
        }
        let factor = (num / den).powf(exponent);
        for (q, k) in n_hat.iter_mut().zip(sp.wavenumbers()) {
            *q *= factor / (k * k + mu);
        }
        sp.inverse(&mut n_hat);
        let next: Vec<f64> = n_hat.iter().map(|z| z.re).collect();
        let change = l2(grid, &next.iter().zip(&eta).map(|(a, b)| a - b).collect::<Vec<_>>());
        eta = next;
        symmetrize(grid, &mut eta);
        if change <= 1e-9 * l2(grid, &eta) {
            break;
        }
    }
    eta
}

/// Newton–Krylov polish of `eta` for `(-Δ + mu) eta = f(eta)`.
pub fn newton_polish(
    spec: &NonlinearitySpec,
    mu: f64,
    grid: &Grid,
    mut eta: Vec<f64>,
) -> Result<RawProfile> {
    let sp = Spectral::for_grid(grid);
    symmetrize(grid, &mut eta);
    let mut res = eigen_residual(spec, mu, grid, &eta);
    let mut res_norm = l2(grid, &res);
    let mut stalled = 0;
    for iteration in 0..=MAX_NEWTON {
        let scale = l2(grid, &eta);
        if !(scale > 0.0) || !res_norm.is_finite() {
            break;
        }
        if res_norm <= PROFILE_TARGET * scale || (stalled >= 2 && res_norm <= PROFILE_TOLERANCE * scale) {
            return Ok(RawProfile {
                mu,
                samples: eta,
                residual: res_norm / scale,
                iterations: iteration,
            });
        }
        if iteration == MAX_NEWTON {
            break;
        }
        let base = to_field(grid, &eta);
        // J (-Δ + mu)^{-1} y = -R
        let jacobian_precond = |y: &[f64]| -> Vec<f64> {
            let z = sp.real_helmholtz_solve(y, mu);
            // a non-finite direction poisons the step, which the line search rejects
            match spec.linearize(&base, &to_field(grid, &z)) {
                Ok(fz) => y.iter().zip(&fz.samples).map(|(a, b)| a - b.re).collect(),
                Err(_) => vec![f64::NAN; y.len()],
            }
        };
        let rhs: Vec<f64> = res.iter().map(|r| -r).collect();
        // inexact Newton: the quadratic term dominates long before 1e-8
        let lin = gmres(jacobian_precond, |v| symmetrize(grid, v), &rhs, 1e-8, 200);
        let mut delta = sp.real_helmholtz_solve(&lin.solution, mu);
        symmetrize(grid, &mut delta);

        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..20 {
            let trial: Vec<f64> = eta.iter().zip(&delta).map(|(e, d)| e + step * d).collect();
            let trial_res = eigen_residual(spec, mu, grid, &trial);
            let trial_norm = l2(grid, &trial_res);
            if trial_norm.is_finite() && trial_norm < res_norm {
                stalled = if trial_norm > 0.5 * res_norm { stalled + 1 } else { 0 };
                eta = trial;
                res = trial_res;
                res_norm = trial_norm;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            // no descent possible: we are at the roundoff floor
            stalled = usize::MAX / 2;
            if res_norm > PROFILE_TOLERANCE * scale {
                break;
            }
        }
    }
    Err(Error::NoConvergence {
        what: "profile solver",
        iterations: MAX_NEWTON,
        residual: res_norm / l2(grid, &eta).max(f64::MIN_POSITIVE),
    })
}

fn initial_guess(spec: &NonlinearitySpec, mu: f64, grid: &Grid) -> Vec<f64> {
    match spec {
        NonlinearitySpec::Power(p) => grid
            .coordinates()
            .iter()
            .map(|&x| power_law_profile(p.s, mu, x))
            .collect(),
        _ => renormalization_seed(spec, mu, grid),
    }
}

fn check_mu(mu: f64) -> Result<()> {
    if !(mu > 0.0 && mu.is_finite()) {
        return Err(Error::Domain(format!("frequency mu must be positive, got {mu}")));
    }
    Ok(())
}

fn check_grid(mu: f64, grid: &Grid) -> Result<()> {
    let tail = (-mu.sqrt() * 0.5 * grid.length()).exp();
    if tail >= 1e-12 {
        return Err(Error::Domain(format!(
            "grid of length {} too short for mu = {mu}: exp(-sqrt(mu) L/2) = {tail:e}",
            grid.length()
        )));
    }
    Ok(())
}

/// Solves for the bare profile, optionally warm-started.
pub fn solve_raw(
    spec: &NonlinearitySpec,
    mu: f64,
    grid: &Grid,
    seed: Option<Vec<f64>>,
) -> Result<RawProfile> {
    check_mu(mu)?;
    let guess = match seed {
        Some(s) if s.len() == grid.points() => s,
        _ => initial_guess(spec, mu, grid),
    };
    let raw = match newton_polish(spec, mu, grid, guess) {
        Ok(raw) => raw,
        // a poor warm start: retry from scratch
        Err(_) => newton_polish(spec, mu, grid, initial_guess(spec, mu, grid))?,
    };
    validate_shape(grid, &raw.samples)?;
    Ok(raw)
}

fn validate_shape(grid: &Grid, eta: &[f64]) -> Result<()> {
    let peak = eta.iter().cloned().fold(0.0, f64::max);
    let centre = eta[grid.points() / 2];
    if !(centre > 0.0 && centre >= 0.999 * peak) {
        return Err(Error::NoConvergence {
            what: "profile solver (non-ground-state branch)",
            iterations: 0,
            residual: f64::NAN,
        });
    }
    if let Some(j) = eta.iter().position(|&e| e < -1e-12 * peak) {
        return Err(Error::Domain(format!(
            "profile is not positive: eta({}) = {:e}",
            grid.x(j),
            eta[j]
        )));
    }
    Ok(())
}

pub fn raw_mass(grid: &Grid, eta: &[f64]) -> f64 {
    0.5 * grid.spacing() * eta.iter().map(|e| e * e).sum::<f64>()
}

/// `eta_mu` together with `∂_x eta`, `∂_mu eta`, `m(mu)` and `m'(mu)`.
pub fn solve_profile(spec: &NonlinearitySpec, mu: f64, grid: &Grid) -> Result<SolitonProfile> {
    solve_profile_seeded(spec, mu, grid, None)
}

/// As [`solve_profile`], warm-starting from a nearby profile on the same grid
/// with the first-order prediction `eta_seed + (mu - mu_seed) ∂_mu eta_seed`.
pub fn solve_profile_seeded(
    spec: &NonlinearitySpec,
    mu: f64,
    grid: &Grid,
    near: Option<&SolitonProfile>,
) -> Result<SolitonProfile> {
    check_mu(mu)?;
    check_grid(mu, grid)?;
    let predict = |target: f64| -> Option<Vec<f64>> {
        let p = near.filter(|p| p.grid == *grid)?;
        Some(
            p.samples
                .iter()
                .zip(&p.dmu_samples)
                .map(|(e, d)| e + (target - p.mu) * d)
                .collect(),
        )
    };
    let centre = solve_raw(spec, mu, grid, predict(mu))?;
    let dmu = DMU_RELATIVE_STEP * mu;
    let plus = solve_raw(spec, mu + dmu, grid, predict(mu + dmu))?;
    let minus = solve_raw(spec, mu - dmu, grid, predict(mu - dmu))?;
    let mut dmu_samples: Vec<f64> = plus
        .samples
        .iter()
        .zip(&minus.samples)
        .map(|(p, m)| (p - m) / (2.0 * dmu))
        .collect();
    symmetrize(grid, &mut dmu_samples);
    let mass = raw_mass(grid, &centre.samples);
    let mass_slope = (raw_mass(grid, &plus.samples) - raw_mass(grid, &minus.samples)) / (2.0 * dmu);
    if !(mass_slope > 0.0) {
        return Err(Error::OrbitalStability {
            mu,
            slope: mass_slope,
        });
    }
    let deriv_samples = Spectral::for_grid(grid).real_derivative(&centre.samples);
    let (tail_rate, tail_amplitude) = fit_tail(grid, mu, &centre.samples);
    Ok(SolitonProfile {
        spec: *spec,
        mu,
        grid: *grid,
        samples: centre.samples,
        deriv_samples,
        dmu_samples,
        mass,
        mass_slope,
        residual: centre.residual,
        tail_rate,
        tail_amplitude,
    })
}

/// `m(mu) = ½ ∫ eta_mu²`.
pub fn soliton_mass(profile: &SolitonProfile) -> f64 {
    raw_mass(&profile.grid, &profile.samples)
}

/// Central difference `(m(mu + Δ) - m(mu - Δ)) / 2Δ` with `Δ = step · mu`.
pub fn mass_slope_with_step(
    spec: &NonlinearitySpec,
    mu: f64,
    grid: &Grid,
    step: f64,
) -> Result<f64> {
    check_mu(mu)?;
    check_grid(mu, grid)?;
    let d = step * mu;
    let plus = solve_raw(spec, mu + d, grid, None)?;
    let minus = solve_raw(spec, mu - d, grid, None)?;
    let slope = (raw_mass(grid, &plus.samples) - raw_mass(grid, &minus.samples)) / (2.0 * d);
    if !(slope > 0.0) {
        return Err(Error::OrbitalStability { mu, slope });
    }
    Ok(slope)
}

pub fn mass_slope(spec: &NonlinearitySpec, mu: f64, grid: &Grid) -> Result<f64> {
    mass_slope_with_step(spec, mu, grid, DMU_RELATIVE_STEP)
}

pub fn dmu_profile(spec: &NonlinearitySpec, mu: f64, grid: &Grid) -> Result<Vec<f64>> {
    Ok(solve_profile(spec, mu, grid)?.dmu_samples)
}

/// Least-squares decay rate and envelope amplitude of the tail, over
/// `|x| ≥ 5/√mu` where the profile is above the roundoff floor.
fn fit_tail(grid: &Grid, mu: f64, eta: &[f64]) -> (f64, f64) {
    let peak = eta.iter().cloned().fold(0.0, f64::max);
    let start = 5.0 / mu.sqrt();
    let pts: Vec<(f64, f64)> = grid
        .coordinates()
        .iter()
        .zip(eta)
        .filter(|(x, e)| **x >= start && **e > 1e-9 * peak)
        .map(|(x, e)| (*x, e.ln()))
        .collect();
    if pts.len() < 4 {
        return (mu.sqrt(), peak * (start * mu.sqrt()).exp());
    }
    let n = pts.len() as f64;
    let (sx, sy) = pts.iter().fold((0.0, 0.0), |(a, b), (x, y)| (a + x, b + y));
    let (mx, my) = (sx / n, sy / n);
    let (sxy, sxx) = pts
        .iter()
        .fold((0.0, 0.0), |(a, b), (x, y)| (a + (x - mx) * (y - my), b + (x - mx).powi(2)));
    let rate = -sxy / sxx;
    let amplitude = pts
        .iter()
        .map(|(x, y)| (y + rate * x).exp())
        .fold(0.0, f64::max);
    (rate, amplitude)
}

/// Band-limited (trigonometric) interpolation of grid data onto another grid.
/// Points outside the source torus get zero, which is appropriate for the
/// exponentially localized data resampled here.
pub fn resample(values: &[f64], from: &Grid, to: &Grid) -> Vec<f64> {
    if from == to {
        return values.to_vec();
    }
    let sp = Spectral::for_grid(from);
    let mut hat: Vec<Complex64> = values.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    sp.forward(&mut hat);
    let n = from.points();
    if from.length().to_bits() == to.length().to_bits() {
        let m = to.points();
        let mut out = vec![Complex64::new(0.0, 0.0); m];
        let keep = n.min(m) / 2;
        for j in 0..keep {
            out[j] = hat[j];
            out[m - 1 - j] = hat[n - 1 - j];
        }
        // split or fold the Nyquist mode so real data stays real
        if m > n {
            out[keep] = 0.5 * hat[n / 2];
            out[m - keep] = 0.5 * hat[n / 2];
        } else {
            out[m / 2] = hat[m / 2] + hat[n - m / 2];
            out[m / 2] = Complex64::new(out[m / 2].re, 0.0);
        }
        Spectral::for_grid(to).inverse(&mut out);
        let scale = m as f64 / n as f64;
        return out.iter().map(|z| z.re * scale).collect();
    }
    // general case: evaluate the interpolant pointwise
    let half = 0.5 * from.length();
    let base = 2.0 * std::f64::consts::PI / from.length();
    to.coordinates()
        .iter()
        .map(|&x| {
            if x.abs() >= half {
                return 0.0;
            }
            let phase = base * (x + half);
            let mut acc = hat[0].re;
            for j in 1..n / 2 {
                acc += 2.0 * (hat[j] * Complex64::from_polar(1.0, j as f64 * phase)).re;
            }
            acc += (hat[n / 2] * (n as f64 / 2.0 * phase).cos()).re;
            acc / n as f64
        })
        .collect()
}

impl SolitonProfile {
    /// Profile samples on another grid.
    pub fn resampled(&self, grid: &Grid) -> Vec<f64> {
        resample(&self.samples, &self.grid, grid)
    }

    /// Copy of the profile carried over to `grid`.
    pub fn on_grid(&self, grid: &Grid) -> SolitonProfile {
        if *grid == self.grid {
            return self.clone();
        }
        SolitonProfile {
            grid: *grid,
            samples: resample(&self.samples, &self.grid, grid),
            deriv_samples: resample(&self.deriv_samples, &self.grid, grid),
            dmu_samples: resample(&self.dmu_samples, &self.grid, grid),
            ..self.clone()
        }
    }

    /// Upper envelope of `eta` at distance `r` from the centre.
    pub fn tail_at(&self, r: f64) -> f64 {
        let r = r.abs();
        if r < 5.0 / self.mu.sqrt() {
            return self
                .grid
                .coordinates()
                .iter()
                .zip(&self.samples)
                .filter(|(x, _)| x.abs() >= r)
                .map(|(_, e)| e.abs())
                .fold(0.0, f64::max);
        }
        self.tail_amplitude * (-self.tail_rate * r).exp()
    }

    /// Fitted exponential decay rate of the tail.
    pub fn tail_rate(&self) -> f64 {
        self.tail_rate
    }

    pub fn field(&self) -> WaveField {
        to_field(&self.grid, &self.samples)
    }

    pub fn deriv_field(&self) -> WaveField {
        to_field(&self.grid, &self.deriv_samples)
    }

    pub fn dmu_field(&self) -> WaveField {
        to_field(&self.grid, &self.dmu_samples)
    }
}
