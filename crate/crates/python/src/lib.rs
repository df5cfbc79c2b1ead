//! Python bindings for the `nlsolitons` core: grids, profiles, soliton
//! synthesis, the symplectic matrices, decomposition, time stepping, the
//! modulation ODEs and full experiment runs.

use num_complex::Complex64;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use nlsolitons::decomposition::{self, ProfileCache};
use nlsolitons::effective::{self, EffectiveState};
use nlsolitons::field::{self, Grid, SolitonParams, WaveField};
use nlsolitons::harness::{self, ExperimentConfig, RunRecord};
use nlsolitons::manifold::{self, SymplecticMatrix};
use nlsolitons::nonlinearity::NonlinearitySpec;
use nlsolitons::profiles::{self, SolitonProfile};
use nlsolitons::solver::{self, PotentialBase, PotentialSpec, SolverConfig};
use nlsolitons::Error;

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Domain(_)
        | Error::Config(_)
        | Error::InvalidGrid(_)
        | Error::InvalidNonlinearity(_)
        | Error::GridMismatch(_)
        | Error::Placement { .. } => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

#[pyclass(name = "Grid", frozen, from_py_object)]
#[derive(Clone)]
struct PyGrid(Grid);

#[pymethods]
impl PyGrid {
    #[new]
    fn new(length: f64, points: usize) -> PyResult<Self> {
        Grid::new(length, points).map(Self).map_err(to_py)
    }

    #[getter]
    fn length(&self) -> f64 {
        self.0.length()
    }

    #[getter]
    fn points(&self) -> usize {
        self.0.points()
    }

    #[getter]
    fn spacing(&self) -> f64 {
        self.0.spacing()
    }

    fn coordinates(&self) -> Vec<f64> {
        self.0.coordinates()
    }

    fn __repr__(&self) -> String {
        format!("Grid(length={}, points={})", self.0.length(), self.0.points())
    }
}

/// Soliton parameters `(a, v, gamma, mu)`.
#[pyclass(name = "SolitonParams", from_py_object)]
#[derive(Clone)]
struct PySoliton(SolitonParams);

#[pymethods]
impl PySoliton {
    #[new]
    #[pyo3(signature = (a, v, gamma, mu))]
    fn new(a: f64, v: f64, gamma: f64, mu: f64) -> Self {
        Self(SolitonParams::new(a, v, gamma, mu))
    }

    #[getter]
    fn a(&self) -> f64 {
        self.0.a
    }

    #[getter]
    fn v(&self) -> f64 {
        self.0.v
    }

    #[getter]
    fn gamma(&self) -> f64 {
        self.0.gamma
    }

    #[getter]
    fn mu(&self) -> f64 {
        self.0.mu
    }

    fn to_tuple(&self) -> (f64, f64, f64, f64) {
        let [a, v, g, m] = self.0.to_array();
        (a, v, g, m)
    }

    fn __repr__(&self) -> String {
        format!(
            "SolitonParams(a={}, v={}, gamma={}, mu={})",
            self.0.a, self.0.v, self.0.gamma, self.0.mu
        )
    }
}

#[pyclass(name = "Nonlinearity", frozen, from_py_object)]
#[derive(Clone)]
struct PyNonlinearity(NonlinearitySpec);

#[pymethods]
impl PyNonlinearity {
    /// `f(ψ) = 2|ψ|²ψ`.
    #[staticmethod]
    fn cubic() -> Self {
        Self(NonlinearitySpec::cubic())
    }

    /// Power law with exponent `s`.
    #[staticmethod]
    fn power(s: f64) -> PyResult<Self> {
        NonlinearitySpec::power(s).map(Self).map_err(to_py)
    }

    /// Hartree term with kernel decay `lam` and strength `g0`.
    #[staticmethod]
    fn hartree(lam: f64, g0: f64) -> PyResult<Self> {
        NonlinearitySpec::hartree(lam, g0).map(Self).map_err(to_py)
    }

    fn __repr__(&self) -> String {
        format!("Nonlinearity({:?})", self.0)
    }
}

#[pyclass(name = "Potential", frozen, from_py_object)]
#[derive(Clone)]
struct PyPotential(PotentialSpec);

#[pymethods]
impl PyPotential {
    #[staticmethod]
    fn zero() -> Self {
        Self(PotentialSpec::zero())
    }

    /// `amplitude · exp(-(h x)² / 2 width²)`, optionally times `cos(frequency t)`.
    #[staticmethod]
    #[pyo3(signature = (amplitude, width, h, frequency = 0.0))]
    fn gaussian(amplitude: f64, width: f64, h: f64, frequency: f64) -> PyResult<Self> {
        Self::build(PotentialBase::Gaussian { amplitude, width }, h, frequency)
    }

    #[staticmethod]
    #[pyo3(signature = (amplitude, wavenumber, h, frequency = 0.0))]
    fn cosine(amplitude: f64, wavenumber: f64, h: f64, frequency: f64) -> PyResult<Self> {
        Self::build(PotentialBase::Cosine { amplitude, wavenumber }, h, frequency)
    }

    fn value(&self, x: f64, t: f64) -> f64 {
        self.0.value(x, t)
    }

    fn gradient(&self, x: f64, t: f64) -> f64 {
        self.0.gradient(x, t)
    }
}

impl PyPotential {
    fn build(base: PotentialBase, h: f64, frequency: f64) -> PyResult<Self> {
        let base = if frequency != 0.0 {
            PotentialBase::TimeModulated {
                base: Box::new(base),
                frequency,
            }
        } else {
            base
        };
        PotentialSpec::new(base, h).map(Self).map_err(to_py)
    }
}

#[pyclass(name = "Profile", frozen)]
struct PyProfile(SolitonProfile);

#[pymethods]
impl PyProfile {
    #[getter]
    fn mu(&self) -> f64 {
        self.0.mu
    }

    /// `m(mu) = ½‖eta‖²`.
    #[getter]
    fn mass(&self) -> f64 {
        self.0.mass
    }

    #[getter]
    fn mass_slope(&self) -> f64 {
        self.0.mass_slope
    }

    #[getter]
    fn residual(&self) -> f64 {
        self.0.residual
    }

    #[getter]
    fn grid(&self) -> PyGrid {
        PyGrid(self.0.grid)
    }

    fn samples(&self) -> Vec<f64> {
        self.0.samples.clone()
    }

    fn deriv_samples(&self) -> Vec<f64> {
        self.0.deriv_samples.clone()
    }

    fn dmu_samples(&self) -> Vec<f64> {
        self.0.dmu_samples.clone()
    }
}

#[pyclass(name = "WaveField", frozen)]
struct PyWaveField(WaveField);

#[pymethods]
impl PyWaveField {
    #[new]
    #[pyo3(signature = (grid, samples, time = 0.0))]
    fn new(grid: PyGrid, samples: Vec<Complex64>, time: f64) -> PyResult<Self> {
        WaveField::new(grid.0, samples, time).map(Self).map_err(to_py)
    }

    #[getter]
    fn time(&self) -> f64 {
        self.0.time
    }

    #[getter]
    fn grid(&self) -> PyGrid {
        PyGrid(self.0.grid)
    }

    fn samples(&self) -> Vec<Complex64> {
        self.0.samples.clone()
    }

    fn l2_norm(&self) -> f64 {
        self.0.l2_norm()
    }

    /// `½‖ψ‖²`.
    fn charge(&self) -> f64 {
        field::charge(&self.0)
    }

    fn energy(&self, potential: &PyPotential, nonlinearity: &PyNonlinearity) -> PyResult<f64> {
        field::energy(&self.0, &potential.0, &nonlinearity.0, self.0.time).map_err(to_py)
    }

    fn __add__(&self, other: &PyWaveField) -> PyResult<Self> {
        self.0.add(&other.0).map(Self).map_err(to_py)
    }

    fn __sub__(&self, other: &PyWaveField) -> PyResult<Self> {
        self.0.sub(&other.0).map(Self).map_err(to_py)
    }
}

/// Memoized profiles on one grid, shared by decomposition calls.
#[pyclass(name = "ProfileCache", frozen)]
struct PyProfileCache(ProfileCache);

#[pymethods]
impl PyProfileCache {
    #[new]
    fn new(nonlinearity: PyNonlinearity, grid: PyGrid) -> Self {
        Self(ProfileCache::new(nonlinearity.0, grid.0))
    }

    fn get(&self, mu: f64) -> PyResult<PyProfile> {
        self.0.get(mu).map(|p| PyProfile((*p).clone())).map_err(to_py)
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }
}

#[pyclass(name = "Decomposition", frozen)]
struct PyDecomposition {
    sigmas: Vec<SolitonParams>,
    fluctuation: WaveField,
    #[pyo3(get)]
    residual: f64,
    #[pyo3(get)]
    iterations: usize,
    #[pyo3(get)]
    w_l2: f64,
}

#[pymethods]
impl PyDecomposition {
    #[getter]
    fn sigmas(&self) -> Vec<PySoliton> {
        self.sigmas.iter().copied().map(PySoliton).collect()
    }

    #[getter]
    fn fluctuation(&self) -> PyWaveField {
        PyWaveField(self.fluctuation.clone())
    }
}

fn matrix_rows(m: &SymplecticMatrix) -> Vec<Vec<f64>> {
    (0..4).map(|i| (0..4).map(|j| m.entries[(i, j)]).collect()).collect()
}

#[pyfunction]
fn solve_profile(nonlinearity: &PyNonlinearity, mu: f64, grid: &PyGrid) -> PyResult<PyProfile> {
    profiles::solve_profile(&nonlinearity.0, mu, &grid.0)
        .map(PyProfile)
        .map_err(to_py)
}

/// Samples of the soliton `T_σ eta_mu` on `grid`.
#[pyfunction]
fn synthesize(profile: &PyProfile, sigma: &PySoliton, grid: &PyGrid) -> PyResult<PyWaveField> {
    field::synthesize(&profile.0, &sigma.0, &grid.0)
        .map(PyWaveField)
        .map_err(to_py)
}

/// Closed-form 4×4 symplectic matrix at `sigma` from `m` and `m'`.
#[pyfunction]
fn omega_closed(sigma: &PySoliton, mass: f64, mass_slope: f64) -> PyResult<Vec<Vec<f64>>> {
    manifold::omega_matrix_closed(&sigma.0, mass, mass_slope)
        .map(|m| matrix_rows(&m))
        .map_err(to_py)
}

/// The same matrix by quadrature over the tangent frame.
#[pyfunction]
fn omega_numeric(profile: &PyProfile, sigma: &PySoliton, grid: &PyGrid) -> PyResult<Vec<Vec<f64>>> {
    let frame = manifold::tangent_frame(&profile.0, &sigma.0, &grid.0).map_err(to_py)?;
    manifold::omega_matrix_numeric(&frame)
        .map(|m| matrix_rows(&m))
        .map_err(to_py)
}

#[pyfunction]
fn cross_pairing(
    profile1: &PyProfile,
    sigma1: &PySoliton,
    profile2: &PyProfile,
    sigma2: &PySoliton,
    grid: &PyGrid,
) -> PyResult<Vec<Vec<f64>>> {
    let m = manifold::cross_pairing(&profile1.0, &sigma1.0, &profile2.0, &sigma2.0, &grid.0).map_err(to_py)?;
    Ok((0..4).map(|i| (0..4).map(|j| m[(i, j)]).collect()).collect())
}

/// Fits `psi = Σ solitons + w` with `w` skew-orthogonal to every frame,
/// starting from one or two guesses.
#[pyfunction]
fn decompose(psi: &PyWaveField, guesses: Vec<PySoliton>, cache: &PyProfileCache) -> PyResult<PyDecomposition> {
    let guesses: Vec<SolitonParams> = guesses.into_iter().map(|s| s.0).collect();
    let out = decomposition::decompose_n(&psi.0, &guesses, &cache.0).map_err(to_py)?;
    Ok(PyDecomposition {
        sigmas: out.sigmas,
        fluctuation: out.fluctuation,
        residual: out.residual_norm,
        iterations: out.iterations,
        w_l2: out.w_l2,
    })
}

/// Strang split-step evolution to `t1`; returns the final field and the
/// recorded frames (every `stride` steps).
#[pyfunction]
#[pyo3(signature = (psi, potential, nonlinearity, t1, dt, stride = 0))]
fn evolve(
    py: Python<'_>,
    psi: &PyWaveField,
    potential: &PyPotential,
    nonlinearity: &PyNonlinearity,
    t1: f64,
    dt: f64,
    stride: usize,
) -> PyResult<(PyWaveField, Vec<PyWaveField>)> {
    let config = SolverConfig {
        dt,
        checkpoint_stride: stride.max(1),
        ..SolverConfig::default()
    };
    let t0 = psi.0.time;
    let (outcome, frames) = py
        .detach(|| {
            let mut frames = Vec::new();
            solver::evolve(&psi.0, &potential.0, &nonlinearity.0, t0, t1, &config, |f| {
                if stride > 0 {
                    frames.push(f.clone());
                }
                Ok(())
            })
            .map(|o| (o, frames))
        })
        .map_err(to_py)?;
    Ok((PyWaveField(outcome.field), frames.into_iter().map(PyWaveField).collect()))
}

/// RK4 trajectory of the modulation equations: `[(t, [SolitonParams, ...]), ...]`.
#[pyfunction]
fn integrate_effective(
    sigmas: Vec<PySoliton>,
    potential: &PyPotential,
    t1: f64,
    dt: f64,
) -> PyResult<Vec<(f64, Vec<PySoliton>)>> {
    let start = EffectiveState::new(sigmas.into_iter().map(|s| s.0).collect(), 0.0);
    let traj = effective::integrate(&start, &potential.0, t1, dt).map_err(to_py)?;
    Ok(traj
        .into_iter()
        .map(|s| (s.t, s.sigmas.into_iter().map(PySoliton).collect()))
        .collect())
}

#[pyclass(name = "RunRecord", frozen)]
struct PyRunRecord(RunRecord);

#[pymethods]
impl PyRunRecord {
    #[getter]
    fn completed(&self) -> bool {
        self.0.is_completed()
    }

    #[getter]
    fn sup_w(&self) -> f64 {
        self.0.sup_w
    }

    #[getter]
    fn w_at_window(&self) -> f64 {
        self.0.w_at_window
    }

    #[getter]
    fn window(&self) -> f64 {
        self.0.window
    }

    #[getter]
    fn tau_alpha(&self) -> Option<f64> {
        self.0.tau_alpha
    }

    #[getter]
    fn max_charge_drift(&self) -> f64 {
        self.0.max_charge_drift
    }

    #[getter]
    fn max_deviation(&self) -> Vec<[f64; 4]> {
        self.0.max_deviation.clone()
    }

    #[getter]
    fn config_hash(&self) -> String {
        self.0.config_hash.clone()
    }

    /// `(t, ‖w‖₂, charge identity defect)` per tracked frame.
    fn frames(&self) -> Vec<(f64, f64, f64)> {
        self.0
            .frames
            .iter()
            .map(|f| (f.t, f.w_l2, f.charge_identity))
            .collect()
    }

    fn tracked(&self) -> Vec<(f64, Vec<PySoliton>)> {
        self.0
            .frames
            .iter()
            .map(|f| (f.t, f.sigmas.iter().copied().map(PySoliton).collect()))
            .collect()
    }

    fn effective(&self) -> Vec<(f64, Vec<PySoliton>)> {
        self.0
            .frames
            .iter()
            .map(|f| (f.t, f.effective.iter().copied().map(PySoliton).collect()))
            .collect()
    }
}

/// Runs an experiment described by TOML text plus `key=value` overrides.
#[pyfunction]
#[pyo3(signature = (config = "", overrides = Vec::new()))]
fn run_experiment(py: Python<'_>, config: &str, overrides: Vec<String>) -> PyResult<PyRunRecord> {
    let config = ExperimentConfig::from_toml_with_overrides(config, &overrides).map_err(to_py)?;
    py.detach(|| harness::run_experiment(&config))
        .map(PyRunRecord)
        .map_err(to_py)
}

#[pymodule]
fn nlsolitons_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyGrid>()?;
    m.add_class::<PySoliton>()?;
    m.add_class::<PyNonlinearity>()?;
    m.add_class::<PyPotential>()?;
    m.add_class::<PyProfile>()?;
    m.add_class::<PyWaveField>()?;
    m.add_class::<PyProfileCache>()?;
    m.add_class::<PyDecomposition>()?;
    m.add_class::<PyRunRecord>()?;
    m.add_function(wrap_pyfunction!(solve_profile, m)?)?;
    m.add_function(wrap_pyfunction!(synthesize, m)?)?;
    m.add_function(wrap_pyfunction!(omega_closed, m)?)?;
    m.add_function(wrap_pyfunction!(omega_numeric, m)?)?;
    m.add_function(wrap_pyfunction!(cross_pairing, m)?)?;
    m.add_function(wrap_pyfunction!(decompose, m)?)?;
    m.add_function(wrap_pyfunction!(evolve, m)?)?;
    m.add_function(wrap_pyfunction!(integrate_effective, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    Ok(())
}
