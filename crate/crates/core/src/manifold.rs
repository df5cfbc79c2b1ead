//! Tangent frames of the soliton manifold, the symplectic matrix `Ω_σ`, the
//! Hessian `ℒ_mu = -Δ + mu - f'(eta_mu)` and cross-soliton pairings.

use std::io::Write;

use nalgebra::Matrix4;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::field::{apply_generator, apply_transform, symplectic, synthesize, Generator, Grid, SolitonParams, WaveField};
use crate::nonlinearity::NonlinearitySpec;
use crate::profiles::SolitonProfile;

/// Number of frame vectors per soliton in one dimension (`2N + 2`).
pub const FRAME_SIZE: usize = 4;

/// Tangent vectors at `u_σ`, ordered translation `-∂_x`, boost `i x`,
/// gauge `i`, scaling `∂_mu`.
#[derive(Clone, Debug)]
pub struct TangentFrame {
    pub sigma: SolitonParams,
    pub soliton: WaveField,
    pub vectors: [WaveField; FRAME_SIZE],
}

pub fn tangent_frame(profile: &SolitonProfile, sigma: &SolitonParams, grid: &Grid) -> Result<TangentFrame> {
    let soliton = synthesize(profile, sigma, grid)?;
    let scaling = {
        let profile = profile.on_grid(grid);
        apply_transform(sigma.group(), &profile.dmu_field())
    };
    let vectors = [
        apply_generator(Generator::Translation, &soliton),
        apply_generator(Generator::Boost, &soliton),
        apply_generator(Generator::Gauge, &soliton),
        scaling,
    ];
    Ok(TangentFrame {
        sigma: *sigma,
        soliton,
        vectors,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Provenance {
    ClosedForm,
    Numeric,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SymplecticMatrix {
    pub entries: Matrix4<f64>,
    pub provenance: Provenance,
}

impl SymplecticMatrix {
    pub fn antisymmetry_error(&self) -> f64 {
        (self.entries + self.entries.transpose()).abs().max()
    }

    pub fn smallest_singular_value(&self) -> f64 {
        self.entries.singular_values().min()
    }

    pub fn determinant(&self) -> f64 {
        self.entries.determinant()
    }

    pub fn max_abs_difference(&self, other: &SymplecticMatrix) -> f64 {
        (self.entries - other.entries).abs().max()
    }

    /// Row-major CSV with 17 significant digits.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        write_matrix_csv(out, &self.entries)
    }
}

pub fn write_matrix_csv<W: Write>(out: W, m: &Matrix4<f64>) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    for i in 0..FRAME_SIZE {
        w.write_record((0..FRAME_SIZE).map(|j| format!("{:.16e}", m[(i, j)])))?;
    }
    w.flush()?;
    Ok(())
}

/// `Ω_σ` from the mass `m` and its slope `m'`.
pub fn omega_matrix_closed(sigma: &SolitonParams, m: f64, m_slope: f64) -> Result<SymplecticMatrix> {
    if !(m_slope > 0.0) {
        return Err(Error::OrbitalStability {
            mu: sigma.mu,
            slope: m_slope,
        });
    }
    let (a, v) = (sigma.a, sigma.v);
    let entries = Matrix4::new(
        0.0, -m, 0.0, -0.5 * v * m_slope,
        m, 0.0, 0.0, a * m_slope,
        0.0, 0.0, 0.0, m_slope,
        0.5 * v * m_slope, -a * m_slope, -m_slope, 0.0,
    );
    Ok(SymplecticMatrix {
        entries,
        provenance: Provenance::ClosedForm,
    })
}

/// `ω(e_α u_σ1, e_β u_σ2)` for two frames on the same grid.
pub fn frame_pairing(f1: &TangentFrame, f2: &TangentFrame) -> Result<Matrix4<f64>> {
    let mut m = Matrix4::zeros();
    for i in 0..FRAME_SIZE {
        for j in 0..FRAME_SIZE {
            m[(i, j)] = symplectic(&f1.vectors[i], &f2.vectors[j])?;
        }
    }
    Ok(m)
}

pub fn omega_matrix_numeric(frame: &TangentFrame) -> Result<SymplecticMatrix> {
    Ok(SymplecticMatrix {
        entries: frame_pairing(frame, frame)?,
        provenance: Provenance::Numeric,
    })
}

/// `ℒ_mu w = -Δw + mu w - f'(eta_mu) w`.
pub fn hessian_apply(profile: &SolitonProfile, nl: &NonlinearitySpec, w: &WaveField) -> Result<WaveField> {
    profile.grid.ensure_same(&w.grid)?;
    let eta = profile.field();
    let lin = nl.apply_fprime(&eta, w)?;
    let lap = w.laplacian();
    Ok(w.with_samples(
        w.samples
            .iter()
            .zip(&lap.samples)
            .zip(&lin.samples)
            .map(|((wj, lj), fj)| -lj + profile.mu * wj - fj)
            .collect(),
    ))
}

/// `i ℒ_mu w`.
pub fn i_hessian_apply(profile: &SolitonProfile, nl: &NonlinearitySpec, w: &WaveField) -> Result<WaveField> {
    Ok(hessian_apply(profile, nl, w)?.scale(Complex64::i()))
}

pub fn cross_pairing(
    profile1: &SolitonProfile,
    sigma1: &SolitonParams,
    profile2: &SolitonProfile,
    sigma2: &SolitonParams,
    grid: &Grid,
) -> Result<Matrix4<f64>> {
    let f1 = tangent_frame(profile1, sigma1, grid)?;
    let f2 = tangent_frame(profile2, sigma2, grid)?;
    frame_pairing(&f1, &f2)
}
