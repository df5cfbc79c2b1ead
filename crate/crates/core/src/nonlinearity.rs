//! Focusing nonlinearities `f`, their potential functionals `F` (with
//! `F' = f`) and real-linear derivatives `f'(u)`.
//!
//! Every supported nonlinearity has the gauge-covariant form
//! `f(psi) = P[psi] psi` with a real "phase potential" `P`, which the split-step
//! solver uses directly.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{Grid, WaveField};
use crate::spectral::Spectral;

/// Local power law `|psi|^s psi chi_{theta,s}(|psi|)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PowerLaw {
    pub s: f64,
    pub theta: f64,
}

/// Hartree term `(W * |psi|²) psi` with `W(x) = g0 exp(-lambda |x|)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Hartree {
    pub lambda: f64,
    pub g0: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum NonlinearitySpec {
    Power(PowerLaw),
    Hartree(Hartree),
    Sum(PowerLaw, Hartree),
}

pub const DEFAULT_THETA: f64 = 1e6;

impl NonlinearitySpec {
    pub fn power(s: f64) -> Result<Self> {
        Self::Power(PowerLaw {
            s,
            theta: DEFAULT_THETA,
        })
        .validated()
    }

    pub fn cubic() -> Self {
        Self::Power(PowerLaw {
            s: 2.0,
            theta: DEFAULT_THETA,
        })
    }

    pub fn hartree(lambda: f64, g0: f64) -> Result<Self> {
        Self::Hartree(Hartree { lambda, g0 }).validated()
    }

    pub fn validated(self) -> Result<Self> {
        let check_power = |p: &PowerLaw| {
            // s ∈ (0, 4/N) with N = 1
            if !(p.s > 0.0 && p.s < 4.0) {
                return Err(Error::InvalidNonlinearity(format!(
                    "power-law exponent s = {} outside (0, 4)",
                    p.s
                )));
            }
            if !(p.theta > 2.0 && p.theta.is_finite()) {
                return Err(Error::InvalidNonlinearity(format!(
                    "cutoff theta = {} must be finite and > 2",
                    p.theta
                )));
            }
            Ok(())
        };
        let check_hartree = |h: &Hartree| {
            if !(h.lambda > 0.0 && h.lambda.is_finite()) {
                return Err(Error::InvalidNonlinearity(format!(
                    "Hartree decay rate lambda = {} must be positive",
                    h.lambda
                )));
            }
            if !(h.g0 > 0.0 && h.g0.is_finite()) {
                return Err(Error::InvalidNonlinearity(format!(
                    "Hartree coupling g0 = {} must be positive",
                    h.g0
                )));
            }
            Ok(())
        };
        match &self {
            Self::Power(p) => check_power(p)?,
            Self::Hartree(h) => check_hartree(h)?,
            Self::Sum(p, h) => {
                check_power(p)?;
                check_hartree(h)?;
            }
        }
        Ok(self)
    }

    fn power_part(&self) -> Option<&PowerLaw> {
        match self {
            Self::Power(p) | Self::Sum(p, _) => Some(p),
            Self::Hartree(_) => None,
        }
    }

    fn hartree_part(&self) -> Option<&Hartree> {
        match self {
            Self::Hartree(h) | Self::Sum(_, h) => Some(h),
            Self::Power(_) => None,
        }
    }

    /// Degree of homogeneity used by the spectral renormalization iteration.
    pub(crate) fn renormalization_degree(&self) -> f64 {
        match self {
            Self::Power(p) => p.s + 1.0,
            Self::Hartree(_) => 3.0,
            Self::Sum(p, _) => (p.s + 1.0).max(3.0),
        }
    }

    /// Real phase potential `P` with `f(psi) = P psi`, from the density `|psi|²`.
    pub fn phase_potential_from_density(&self, grid: &Grid, density: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; density.len()];
        if let Some(p) = self.power_part() {
            for (o, &d) in out.iter_mut().zip(density) {
                *o += p.g(d.sqrt());
            }
        }
        if let Some(h) = self.hartree_part() {
            let conv = h.convolve(grid, density);
            for (o, c) in out.iter_mut().zip(conv) {
                *o += c;
            }
        }
        out
    }

    pub fn phase_potential(&self, psi: &WaveField) -> Vec<f64> {
        let density: Vec<f64> = psi.samples.iter().map(|z| z.norm_sqr()).collect();
        self.phase_potential_from_density(&psi.grid, &density)
    }

    /// `f(psi)`.
    pub fn apply(&self, psi: &WaveField) -> Result<WaveField> {
        psi.ensure_finite()?;
        let p = self.phase_potential(psi);
        Ok(psi.with_samples(psi.samples.iter().zip(&p).map(|(z, &q)| z * q).collect()))
    }

    /// Real-linear Fréchet derivative `f'(eta) w` at a real base point.
    pub fn apply_fprime(&self, eta: &WaveField, w: &WaveField) -> Result<WaveField> {
        let scale = eta.max_abs().max(1.0);
        let max_imag = eta.max_abs_imag();
        if max_imag > 1e-14 * scale {
            return Err(Error::ComplexBasePoint { max_imag });
        }
        self.linearize(eta, w)
    }

    /// Real-linear Fréchet derivative `f'(u) w` at an arbitrary base point.
    pub fn linearize(&self, u: &WaveField, w: &WaveField) -> Result<WaveField> {
        u.grid.ensure_same(&w.grid)?;
        u.ensure_finite()?;
        w.ensure_finite()?;
        let n = u.samples.len();
        let mut out = vec![Complex64::new(0.0, 0.0); n];
        if let Some(p) = self.power_part() {
            for j in 0..n {
                let (uj, wj) = (u.samples[j], w.samples[j]);
                let rho = uj.norm();
                out[j] += p.g(rho) * wj;
                // rho² underflows for subnormal tails
                if rho * rho > 0.0 {
                    let coupling = p.rho_dg(rho) / (rho * rho) * (uj.conj() * wj).re;
                    out[j] += coupling * uj;
                }
            }
        }
        if let Some(h) = self.hartree_part() {
            let density: Vec<f64> = u.samples.iter().map(|z| z.norm_sqr()).collect();
            let cross: Vec<f64> = u
                .samples
                .iter()
                .zip(&w.samples)
                .map(|(a, b)| (a.conj() * b).re)
                .collect();
            let pot = h.convolve(&u.grid, &density);
            let cross_pot = h.convolve(&u.grid, &cross);
            for j in 0..n {
                out[j] += pot[j] * w.samples[j] + 2.0 * cross_pot[j] * u.samples[j];
            }
        }
        Ok(w.with_samples(out))
    }

    /// Potential functional `F(psi)`.
    pub fn potential(&self, psi: &WaveField) -> Result<f64> {
        psi.ensure_finite()?;
        let dx = psi.grid.spacing();
        let mut total = 0.0;
        if let Some(p) = self.power_part() {
            total += dx * psi.samples.iter().map(|z| p.antiderivative(z.norm())).sum::<f64>();
        }
        if let Some(h) = self.hartree_part() {
            let density: Vec<f64> = psi.samples.iter().map(|z| z.norm_sqr()).collect();
            let pot = h.convolve(&psi.grid, &density);
            total += 0.25 * dx * pot.iter().zip(&density).map(|(a, b)| a * b).sum::<f64>();
        }
        Ok(total)
    }
}

/// Quintic smoothstep `10t³ - 15t⁴ + 6t⁵` and its derivative.
fn smoothstep(t: f64) -> (f64, f64) {
    let t = t.clamp(0.0, 1.0);
    let s = t * t * t * (10.0 - 15.0 * t + 6.0 * t * t);
    let ds = 30.0 * t * t * (1.0 - t) * (1.0 - t);
    (s, ds)
}

impl PowerLaw {
    /// Exponent `sgn(s - 1)` of the variable on which the cutoff acts.
    fn cutoff_sign(&self) -> i32 {
        if self.s > 1.0 {
            1
        } else if self.s < 1.0 {
            -1
        } else {
            0
        }
    }

    /// Range of `|psi|` over which the cutoff blends between the branches.
    fn blend_band(&self) -> Option<(f64, f64)> {
        match self.cutoff_sign() {
            1 => Some((0.5 * self.theta, self.theta)),
            -1 => Some((1.0 / self.theta, 2.0 / self.theta)),
            _ => None,
        }
    }

    /// `chi(rho)` and `d chi / d rho`.
    fn chi(&self, rho: f64) -> (f64, f64) {
        let sign = self.cutoff_sign();
        if sign == 0 {
            return (1.0, 0.0);
        }
        let z = rho.powi(sign);
        let half = 0.5 * self.theta;
        let t = (z - half) / half;
        if t <= 0.0 {
            return (1.0, 0.0);
        }
        let branch = rho.powf(1.0 - self.s);
        let dbranch = (1.0 - self.s) * rho.powf(-self.s);
        if t >= 1.0 {
            return (branch, dbranch);
        }
        let (sm, dsm) = smoothstep(t);
        let dz = sign as f64 * rho.powi(sign - 1);
        let chi = 1.0 + sm * (branch - 1.0);
        let dchi = dsm * dz / half * (branch - 1.0) + sm * dbranch;
        (chi, dchi)
    }

    /// `g(rho) = rho^s chi(rho)`, so that `f(psi) = g(|psi|) psi`.
    pub fn g(&self, rho: f64) -> f64 {
        if rho == 0.0 {
            return 0.0;
        }
        let (chi, _) = self.chi(rho);
        rho.powf(self.s) * chi
    }

    /// `rho g'(rho)`.
    pub fn rho_dg(&self, rho: f64) -> f64 {
        if rho == 0.0 {
            return 0.0;
        }
        let (chi, dchi) = self.chi(rho);
        let rs = rho.powf(self.s);
        self.s * rs * chi + rs * rho * dchi
    }

    /// `G(rho) = ∫_0^rho g(r) r dr`, the local density of `F`.
    pub fn antiderivative(&self, rho: f64) -> f64 {
        let pure = |r: f64| r.powf(self.s + 2.0) / (self.s + 2.0);
        let Some((lo, hi)) = self.blend_band() else {
            return pure(rho);
        };
        let blend = |a: f64, b: f64| gauss_legendre(|r| self.g(r) * r, a, b);
        if self.cutoff_sign() > 0 {
            // r^(s+1) below the band, r above it
            if rho <= lo {
                pure(rho)
            } else if rho <= hi {
                pure(lo) + blend(lo, rho)
            } else {
                pure(lo) + blend(lo, hi) + (rho.powi(3) - hi.powi(3)) / 3.0
            }
        } else if rho <= lo {
            rho.powi(3) / 3.0
        } else if rho <= hi {
            lo.powi(3) / 3.0 + blend(lo, rho)
        } else {
            lo.powi(3) / 3.0 + blend(lo, hi) + pure(rho) - pure(hi)
        }
    }
}

fn gauss_legendre<F: Fn(f64) -> f64>(f: F, a: f64, b: f64) -> f64 {
    static RULE: OnceLock<Vec<(f64, f64)>> = OnceLock::new();
    let rule = RULE.get_or_init(|| legendre_rule(24));
    let (mid, half) = (0.5 * (a + b), 0.5 * (b - a));
    half * rule.iter().map(|&(x, w)| w * f(mid + half * x)).sum::<f64>()
}

/// Gauss–Legendre nodes and weights on `[-1, 1]` by Newton iteration on `P_n`.
fn legendre_rule(n: usize) -> Vec<(f64, f64)> {
    (0..n)
        .map(|i| {
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (mut p0, mut p1) = (1.0, x);
                for k in 2..=n {
                    let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                    p0 = p1;
                    p1 = p2;
                }
                dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
                let step = p1 / dp;
                x -= step;
                if step.abs() < 1e-16 {
                    break;
                }
            }
            (x, 2.0 / ((1.0 - x * x) * dp * dp))
        })
        .collect()
}

type KernelKey = (usize, u64, u64, u64);

fn kernel_cache() -> &'static Mutex<HashMap<KernelKey, Arc<Vec<f64>>>> {
    static CACHE: OnceLock<Mutex<HashMap<KernelKey, Arc<Vec<f64>>>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

impl Hartree {
    /// Lattice sum `Σ_m g0 exp(-lambda |x + m L|)` for `|x| <= L/2`, i.e.
    /// `g0 cosh(lambda (L/2 - |x|)) / sinh(lambda L / 2)`, in overflow-free form.
    pub fn periodized_kernel(&self, x: f64, length: f64) -> f64 {
        let r = x.abs();
        let num = (-self.lambda * r).exp() + (-self.lambda * (length - r)).exp();
        self.g0 * num / (1.0 - (-self.lambda * length).exp())
    }

    /// Transform of the sampled periodized kernel times `dx`, so that the
    /// spectral product reproduces the discrete circular convolution
    /// `Σ_j W(x_i - x_j) u_j dx` exactly.
    pub fn kernel_spectrum(&self, grid: &Grid) -> Arc<Vec<f64>> {
        let key = (
            grid.points(),
            grid.length().to_bits(),
            self.lambda.to_bits(),
            self.g0.to_bits(),
        );
        let mut cache = kernel_cache().lock().expect("kernel cache poisoned");
        cache
            .entry(key)
            .or_insert_with(|| {
                let n = grid.points();
                let dx = grid.spacing();
                let mut buf: Vec<Complex64> = (0..n)
                    .map(|m| {
                        let offset = if m <= n / 2 { m as f64 } else { m as f64 - n as f64 };
                        Complex64::new(self.periodized_kernel(offset * dx, grid.length()) * dx, 0.0)
                    })
                    .collect();
                Spectral::for_grid(grid).forward(&mut buf);
                Arc::new(buf.into_iter().map(|z| z.re).collect())
            })
            .clone()
    }

    pub fn convolve(&self, grid: &Grid, density: &[f64]) -> Vec<f64> {
        let hat = self.kernel_spectrum(grid);
        Spectral::for_grid(grid).real_convolve(density, &hat)
    }
}

/// Flat form used in configuration files (`nonlinearity.kind`, `s`, ...).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NonlinearityConfig {
    pub kind: String,
    #[serde(default = "default_s")]
    pub s: f64,
    #[serde(default = "default_theta")]
    pub theta: f64,
    #[serde(default = "default_one")]
    pub lambda: f64,
    #[serde(default = "default_one")]
    pub g0: f64,
}

fn default_s() -> f64 {
    2.0
}
fn default_theta() -> f64 {
    DEFAULT_THETA
}
fn default_one() -> f64 {
    1.0
}

impl Default for NonlinearityConfig {
    fn default() -> Self {
        Self {
            kind: "power".into(),
            s: default_s(),
            theta: default_theta(),
            lambda: 1.0,
            g0: 1.0,
        }
    }
}

impl TryFrom<&NonlinearityConfig> for NonlinearitySpec {
    type Error = Error;

    fn try_from(c: &NonlinearityConfig) -> Result<Self> {
        let power = PowerLaw {
            s: c.s,
            theta: c.theta,
        };
        let hartree = Hartree {
            lambda: c.lambda,
            g0: c.g0,
        };
        let spec = match c.kind.as_str() {
            "power" => Self::Power(power),
            "hartree" => Self::Hartree(hartree),
            "sum" => Self::Sum(power, hartree),
            other => {
                return Err(Error::Config(format!(
                    "nonlinearity.kind must be one of power, hartree, sum (got {other:?})"
                )))
            }
        };
        spec.validated()
    }
}

impl From<&NonlinearitySpec> for NonlinearityConfig {
    fn from(spec: &NonlinearitySpec) -> Self {
        let mut c = NonlinearityConfig::default();
        match spec {
            NonlinearitySpec::Power(p) => {
                c.kind = "power".into();
                c.s = p.s;
                c.theta = p.theta;
            }
            NonlinearitySpec::Hartree(h) => {
                c.kind = "hartree".into();
                c.lambda = h.lambda;
                c.g0 = h.g0;
            }
            NonlinearitySpec::Sum(p, h) => {
                c.kind = "sum".into();
                c.s = p.s;
                c.theta = p.theta;
                c.lambda = h.lambda;
                c.g0 = h.g0;
            }
        }
        c
    }
}
