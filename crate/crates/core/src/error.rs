use thiserror::Error;

use crate::decomposition::DecompositionResult;

#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite sample at index {index}")]
    NonFinite { index: usize },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid nonlinearity: {0}")]
    InvalidNonlinearity(String),

    #[error("base point of the linearization must be real-valued (max |Im| = {max_imag:e})")]
    ComplexBasePoint { max_imag: f64 },

    #[error("{what} did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence {
        what: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("orbital stability violated: m'({mu}) = {slope:e} is not positive")]
    OrbitalStability { mu: f64, slope: f64 },

    #[error("soliton centred at a = {a} does not fit the torus (tail {tail:e} at the cut)")]
    Placement { a: f64, tail: f64 },

    #[error("blow-up at t = {t}: max |psi| = {max_amplitude:e}")]
    BlowUp { t: f64, max_amplitude: f64 },

    #[error("relative charge drift {drift:e} at t = {t} exceeds the integrity guard")]
    ChargeDrift { t: f64, drift: f64 },

    #[error("decomposition did not converge after {iterations} iterations (residual {residual:e})")]
    DecompositionDiverged {
        iterations: usize,
        residual: f64,
        best: Box<DecompositionResult>,
    },

    #[error("near-degenerate tangent frame: Jacobian condition number {condition:e}")]
    DegenerateFrame { condition: f64 },

    #[error("tracking failed at frame {index}: {source}")]
    Tracking {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("checkpoint format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
