//! FFT plumbing shared by every module that works on the periodic grid.
//!
//! Plans are cached per grid, so calling [`Spectral::for_grid`] in a hot loop
//! is cheap.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::field::Grid;

pub struct Spectral {
    n: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    wavenumbers: Vec<f64>,
}

type PlanKey = (usize, u64);

fn plan_cache() -> &'static Mutex<HashMap<PlanKey, Arc<Spectral>>> {
    static CACHE: OnceLock<Mutex<HashMap<PlanKey, Arc<Spectral>>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

impl Spectral {
    pub fn for_grid(grid: &Grid) -> Arc<Spectral> {
        let key = (grid.points(), grid.length().to_bits());
        let mut cache = plan_cache().lock().expect("FFT plan cache poisoned");
        cache
            .entry(key)
            .or_insert_with(|| Arc::new(Spectral::new(grid.points(), grid.length())))
            .clone()
    }

    fn new(n: usize, length: f64) -> Self {
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(n);
        let inverse = planner.plan_fft_inverse(n);
        let base = 2.0 * PI / length;
        let wavenumbers = (0..n)
            .map(|j| {
                let m = if j < n / 2 { j as f64 } else { j as f64 - n as f64 };
                base * m
            })
            .collect();
        Self {
            n,
            forward,
            inverse,
            wavenumbers,
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Angular wavenumbers in FFT order (the Nyquist mode is negative).
    pub fn wavenumbers(&self) -> &[f64] {
        &self.wavenumbers
    }

    pub fn forward(&self, buf: &mut [Complex64]) {
        self.forward.process(buf);
    }

    /// Inverse transform including the `1/n` normalization.
    pub fn inverse(&self, buf: &mut [Complex64]) {
        self.inverse.process(buf);
        let scale = 1.0 / self.n as f64;
        for z in buf.iter_mut() {
            *z *= scale;
        }
    }

    /// Applies a Fourier multiplier `m(k)` to `u`.
    pub fn apply_multiplier<F>(&self, u: &[Complex64], multiplier: F) -> Vec<Complex64>
    where
        F: Fn(usize, f64) -> Complex64,
    {
        let mut buf = u.to_vec();
        self.forward(&mut buf);
        for (j, z) in buf.iter_mut().enumerate() {
            *z *= multiplier(j, self.wavenumbers[j]);
        }
        self.inverse(&mut buf);
        buf
    }

    /// Spectral first derivative. The Nyquist mode is dropped, as usual for
    /// odd-order derivatives.
    pub fn derivative(&self, u: &[Complex64]) -> Vec<Complex64> {
        let nyquist = self.n / 2;
        self.apply_multiplier(u, |j, k| {
            if j == nyquist {
                Complex64::new(0.0, 0.0)
            } else {
                Complex64::new(0.0, k)
            }
        })
    }

    /// Spectral Laplacian `d²/dx²`.
    pub fn laplacian(&self, u: &[Complex64]) -> Vec<Complex64> {
        self.apply_multiplier(u, |_, k| Complex64::new(-k * k, 0.0))
    }

    /// Returns `u(x - a)` by the Fourier shift theorem.
    pub fn shift(&self, u: &[Complex64], a: f64) -> Vec<Complex64> {
        if a == 0.0 {
            return u.to_vec();
        }
        self.apply_multiplier(u, |_, k| Complex64::from_polar(1.0, -k * a))
    }

    /// Real-valued helpers for the profile solver.
    pub fn real_laplacian(&self, u: &[f64]) -> Vec<f64> {
        let buf: Vec<Complex64> = u.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        self.laplacian(&buf).into_iter().map(|z| z.re).collect()
    }

    pub fn real_derivative(&self, u: &[f64]) -> Vec<f64> {
        let buf: Vec<Complex64> = u.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        self.derivative(&buf).into_iter().map(|z| z.re).collect()
    }

    /// Solves `(-Δ + mu) x = u` for real `u`.
    pub fn real_helmholtz_solve(&self, u: &[f64], mu: f64) -> Vec<f64> {
        let buf: Vec<Complex64> = u.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        self.apply_multiplier(&buf, |_, k| Complex64::new(1.0 / (k * k + mu), 0.0))
            .into_iter()
            .map(|z| z.re)
            .collect()
    }

    /// Circular convolution of real data with a real, even kernel whose
    /// transform is `kernel_hat`.
    pub fn real_convolve(&self, u: &[f64], kernel_hat: &[f64]) -> Vec<f64> {
        let buf: Vec<Complex64> = u.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        self.apply_multiplier(&buf, |j, _| Complex64::new(kernel_hat[j], 0.0))
            .into_iter()
            .map(|z| z.re)
            .collect()
    }
}
