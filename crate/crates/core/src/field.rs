//! Wavefields on the periodic grid, the symmetry group acting on them, and
//! the Hamiltonian-structure functionals.
//!
//! The real line is replaced by a torus of length `L` sampled at
//! `x_j = -L/2 + j L/n`. Integrals are periodic trapezoid sums, which are
//! spectrally accurate for the exponentially localized fields used here.

use std::f64::consts::PI;
use std::io::{BufRead, Write};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nonlinearity::NonlinearitySpec;
use crate::profiles::SolitonProfile;
use crate::solver::PotentialSpec;
use crate::spectral::Spectral;

/// Largest soliton tail tolerated where the torus is cut open.
pub const PLACEMENT_TAIL_TOLERANCE: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    dim: usize,
    length: f64,
    points: usize,
}

impl Grid {
    pub fn new(length: f64, points: usize) -> Result<Self> {
        if !(length.is_finite() && length > 0.0) {
            return Err(Error::InvalidGrid(format!("length must be positive, got {length}")));
        }
        if points < 16 || !points.is_power_of_two() {
            return Err(Error::InvalidGrid(format!(
                "points must be a power of two >= 16, got {points}"
            )));
        }
        Ok(Self {
            dim: 1,
            length,
            points,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn points(&self) -> usize {
        self.points
    }

    pub fn spacing(&self) -> f64 {
        self.length / self.points as f64
    }

    pub fn x(&self, j: usize) -> f64 {
        -0.5 * self.length + j as f64 * self.spacing()
    }

    pub fn coordinates(&self) -> Vec<f64> {
        (0..self.points).map(|j| self.x(j)).collect()
    }

    /// Index of the sample at `-x_j`.
    pub fn mirror_index(&self, j: usize) -> usize {
        (self.points - j) % self.points
    }

    /// Wavenumber `2π m / L` of Fourier mode `m`.
    pub fn lattice_wavenumber(&self, m: i64) -> f64 {
        2.0 * PI * m as f64 / self.length
    }

    pub fn ensure_same(&self, other: &Grid) -> Result<()> {
        if self.points != other.points || self.length.to_bits() != other.length.to_bits() {
            return Err(Error::GridMismatch(format!(
                "(L = {}, n = {}) vs (L = {}, n = {})",
                self.length, self.points, other.length, other.points
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct WaveField {
    pub grid: Grid,
    pub samples: Vec<Complex64>,
    pub time: f64,
}

impl WaveField {
    pub fn new(grid: Grid, samples: Vec<Complex64>, time: f64) -> Result<Self> {
        if samples.len() != grid.points() {
            return Err(Error::GridMismatch(format!(
                "{} samples for a grid of {} points",
                samples.len(),
                grid.points()
            )));
        }
        let field = Self {
            grid,
            samples,
            time,
        };
        field.ensure_finite()?;
        Ok(field)
    }

    pub fn zeros(grid: Grid) -> Self {
        Self {
            grid,
            samples: vec![Complex64::new(0.0, 0.0); grid.points()],
            time: 0.0,
        }
    }

    pub fn from_real(grid: Grid, values: &[f64]) -> Result<Self> {
        Self::new(
            grid,
            values.iter().map(|&x| Complex64::new(x, 0.0)).collect(),
            0.0,
        )
    }

    pub fn from_fn<F: Fn(f64) -> Complex64>(grid: Grid, f: F) -> Self {
        Self {
            grid,
            samples: grid.coordinates().into_iter().map(f).collect(),
            time: 0.0,
        }
    }

    pub(crate) fn with_samples(&self, samples: Vec<Complex64>) -> Self {
        Self {
            grid: self.grid,
            samples,
            time: self.time,
        }
    }

    pub fn ensure_finite(&self) -> Result<()> {
        match self
            .samples
            .iter()
            .position(|z| !(z.re.is_finite() && z.im.is_finite()))
        {
            Some(index) => Err(Error::NonFinite { index }),
            None => Ok(()),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.samples.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn max_abs_imag(&self) -> f64 {
        self.samples.iter().map(|z| z.im.abs()).fold(0.0, f64::max)
    }

    pub fn scale(&self, c: Complex64) -> Self {
        self.with_samples(self.samples.iter().map(|z| z * c).collect())
    }

    pub fn conj(&self) -> Self {
        self.with_samples(self.samples.iter().map(|z| z.conj()).collect())
    }

    pub fn add(&self, other: &WaveField) -> Result<Self> {
        self.grid.ensure_same(&other.grid)?;
        Ok(self.with_samples(
            self.samples
                .iter()
                .zip(&other.samples)
                .map(|(a, b)| a + b)
                .collect(),
        ))
    }

    pub fn sub(&self, other: &WaveField) -> Result<Self> {
        self.grid.ensure_same(&other.grid)?;
        Ok(self.with_samples(
            self.samples
                .iter()
                .zip(&other.samples)
                .map(|(a, b)| a - b)
                .collect(),
        ))
    }

    /// `self + c * other`.
    pub fn axpy(&self, c: Complex64, other: &WaveField) -> Result<Self> {
        self.grid.ensure_same(&other.grid)?;
        Ok(self.with_samples(
            self.samples
                .iter()
                .zip(&other.samples)
                .map(|(a, b)| a + c * b)
                .collect(),
        ))
    }

    pub fn l2_norm(&self) -> f64 {
        (self.grid.spacing() * self.samples.iter().map(|z| z.norm_sqr()).sum::<f64>()).sqrt()
    }

    pub fn derivative(&self) -> Self {
        self.with_samples(Spectral::for_grid(&self.grid).derivative(&self.samples))
    }

    pub fn laplacian(&self) -> Self {
        self.with_samples(Spectral::for_grid(&self.grid).laplacian(&self.samples))
    }
}

/// Modulation coordinates `(a, v, gamma, mu)` of one soliton. `gamma` is kept
/// unwrapped so that it can be tracked continuously.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolitonParams {
    pub a: f64,
    pub v: f64,
    pub gamma: f64,
    pub mu: f64,
}

impl SolitonParams {
    pub fn new(a: f64, v: f64, gamma: f64, mu: f64) -> Self {
        Self { a, v, gamma, mu }
    }

    pub fn at_rest(mu: f64) -> Self {
        Self::new(0.0, 0.0, 0.0, mu)
    }

    pub fn group(&self) -> GroupElement {
        GroupElement::new(self.a, self.v, self.gamma)
    }

    /// Phase reduced to `[0, 2π)`.
    pub fn canonical_gamma(&self) -> f64 {
        self.gamma.rem_euclid(2.0 * PI)
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.a, self.v, self.gamma, self.mu]
    }

    pub fn from_array(x: [f64; 4]) -> Self {
        Self::new(x[0], x[1], x[2], x[3])
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|x| x.is_finite())
    }
}

/// Element `(a, v, gamma)` of the Heisenberg group generated by translations,
/// boosts and gauge transformations.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupElement {
    pub a: f64,
    pub v: f64,
    pub gamma: f64,
}

impl GroupElement {
    pub const IDENTITY: GroupElement = GroupElement {
        a: 0.0,
        v: 0.0,
        gamma: 0.0,
    };

    pub fn new(a: f64, v: f64, gamma: f64) -> Self {
        Self { a, v, gamma }
    }

    pub fn inverse(&self) -> Self {
        Self::new(-self.a, -self.v, -self.gamma + 0.5 * self.v * self.a)
    }
}

/// Heisenberg group law: `T_{g1} T_{g2} = T_{compose_group(g1, g2)}`.
pub fn compose_group(g1: GroupElement, g2: GroupElement) -> GroupElement {
    GroupElement::new(
        g1.a + g2.a,
        g1.v + g2.v,
        g1.gamma + g2.gamma + 0.5 * g1.v * g2.a,
    )
}

/// `T_{a v gamma} psi = exp(i (v (x - a) / 2 + gamma)) psi(x - a)`.
pub fn apply_transform(g: GroupElement, psi: &WaveField) -> WaveField {
    let shifted = Spectral::for_grid(&psi.grid).shift(&psi.samples, g.a);
    let grid = psi.grid;
    let samples = shifted
        .into_iter()
        .enumerate()
        .map(|(j, z)| {
            if g.v == 0.0 && g.gamma == 0.0 {
                z
            } else {
                z * Complex64::from_polar(1.0, 0.5 * g.v * (grid.x(j) - g.a) + g.gamma)
            }
        })
        .collect();
    psi.with_samples(samples)
}

/// Generators of the symmetry group acting on fields.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Generator {
    /// `-d/dx`
    Translation,
    /// multiplication by `i x`
    Boost,
    /// multiplication by `i`
    Gauge,
}

pub fn apply_generator(generator: Generator, psi: &WaveField) -> WaveField {
    match generator {
        Generator::Translation => psi.derivative().scale(Complex64::new(-1.0, 0.0)),
        Generator::Boost => psi.with_samples(
            psi.samples
                .iter()
                .enumerate()
                .map(|(j, z)| Complex64::new(0.0, psi.grid.x(j)) * z)
                .collect(),
        ),
        Generator::Gauge => psi.scale(Complex64::i()),
    }
}

/// Real inner product `Re ∫ u conj(v)`.
pub fn inner(u: &WaveField, v: &WaveField) -> Result<f64> {
    u.grid.ensure_same(&v.grid)?;
    let s: f64 = u
        .samples
        .iter()
        .zip(&v.samples)
        .map(|(a, b)| a.re * b.re + a.im * b.im)
        .sum();
    Ok(s * u.grid.spacing())
}

/// Symplectic form `Im ∫ u conj(v) = <u, i v>`.
pub fn symplectic(u: &WaveField, v: &WaveField) -> Result<f64> {
    u.grid.ensure_same(&v.grid)?;
    let s: f64 = u
        .samples
        .iter()
        .zip(&v.samples)
        .map(|(a, b)| a.im * b.re - a.re * b.im)
        .sum();
    Ok(s * u.grid.spacing())
}

/// `N(psi) = ½ ∫ |psi|²`.
pub fn charge(psi: &WaveField) -> f64 {
    0.5 * psi.grid.spacing() * psi.samples.iter().map(|z| z.norm_sqr()).sum::<f64>()
}

/// Charge evaluated on the Fourier side (Parseval).
pub fn charge_fourier(psi: &WaveField) -> f64 {
    let mut buf = psi.samples.clone();
    Spectral::for_grid(&psi.grid).forward(&mut buf);
    let n = psi.grid.points() as f64;
    0.5 * psi.grid.spacing() / n * buf.iter().map(|z| z.norm_sqr()).sum::<f64>()
}

/// `½ ∫ |psi'|²` computed spectrally.
pub fn kinetic_energy(psi: &WaveField) -> f64 {
    let sp = Spectral::for_grid(&psi.grid);
    let mut buf = psi.samples.clone();
    sp.forward(&mut buf);
    let n = psi.grid.points() as f64;
    let s: f64 = buf
        .iter()
        .zip(sp.wavenumbers())
        .map(|(z, k)| k * k * z.norm_sqr())
        .sum();
    0.5 * psi.grid.spacing() / n * s
}

/// `H_V(psi) = ½∫|psi'|² + ½∫V|psi|² - F(psi)` at time `t`.
pub fn energy(
    psi: &WaveField,
    potential: &PotentialSpec,
    nl: &NonlinearitySpec,
    t: f64,
) -> Result<f64> {
    psi.ensure_finite()?;
    let dx = psi.grid.spacing();
    let potential_term: f64 = psi
        .samples
        .iter()
        .enumerate()
        .map(|(j, z)| potential.value(psi.grid.x(j), t) * z.norm_sqr())
        .sum::<f64>()
        * 0.5
        * dx;
    Ok(kinetic_energy(psi) + potential_term - nl.potential(psi)?)
}

/// Builds the soliton `T_{a v gamma} eta_mu` on `grid`.
pub fn synthesize(profile: &SolitonProfile, sigma: &SolitonParams, grid: &Grid) -> Result<WaveField> {
    if !sigma.is_finite() {
        return Err(Error::Domain(format!("non-finite soliton parameters {sigma:?}")));
    }
    let half = 0.5 * grid.length();
    let tail = if sigma.a.abs() >= half {
        f64::INFINITY
    } else {
        profile.tail_at(half - sigma.a.abs())
    };
    if !(tail < PLACEMENT_TAIL_TOLERANCE) {
        return Err(Error::Placement { a: sigma.a, tail });
    }
    let base = WaveField::from_real(*grid, &profile.resampled(grid))?;
    Ok(apply_transform(sigma.group(), &base))
}

/// Header of a field checkpoint file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub dim: usize,
    #[serde(rename = "L")]
    pub length: f64,
    pub n: usize,
    pub t: f64,
    pub spec_hash: String,
}

/// Writes one JSON header line followed by `n` little-endian `(re, im)`
/// pairs of IEEE-754 doubles in grid order.
pub fn write_checkpoint<W: Write>(mut out: W, psi: &WaveField, spec_hash: &str) -> Result<()> {
    let header = CheckpointHeader {
        dim: psi.grid.dim(),
        length: psi.grid.length(),
        n: psi.grid.points(),
        t: psi.time,
        spec_hash: spec_hash.to_owned(),
    };
    let line = serde_json::to_string(&header).map_err(|e| Error::Format(e.to_string()))?;
    out.write_all(line.as_bytes())?;
    out.write_all(b"\n")?;
    let mut bytes = Vec::with_capacity(16 * psi.samples.len());
    for z in &psi.samples {
        bytes.extend_from_slice(&z.re.to_le_bytes());
        bytes.extend_from_slice(&z.im.to_le_bytes());
    }
    out.write_all(&bytes)?;
    Ok(())
}

pub fn read_checkpoint<R: BufRead>(mut input: R) -> Result<(CheckpointHeader, WaveField)> {
    let mut line = String::new();
    input.read_line(&mut line)?;
    let header: CheckpointHeader =
        serde_json::from_str(line.trim_end_matches('\n')).map_err(|e| Error::Format(e.to_string()))?;
    if header.dim != 1 {
        return Err(Error::Format(format!("unsupported dimension {}", header.dim)));
    }
    let grid = Grid::new(header.length, header.n)?;
    let mut bytes = vec![0u8; 16 * header.n];
    input.read_exact(&mut bytes)?;
    let samples = bytes
        .chunks_exact(16)
        .map(|c| {
            let re = f64::from_le_bytes(c[..8].try_into().expect("8 bytes"));
            let im = f64::from_le_bytes(c[8..].try_into().expect("8 bytes"));
            Complex64::new(re, im)
        })
        .collect();
    let field = WaveField::new(grid, samples, header.t)?;
    Ok((header, field))
}
