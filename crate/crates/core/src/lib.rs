//! Numerical laboratory for fast two-soliton collisions in the nonlinear
//! Schrödinger equation `i psi_t = (-Δ + V_h) psi - f(psi)` on a periodic grid.
//!
//! Module map:
//! - [`nonlinearity`]: `f`, `F` and `f'` for power-law and Hartree terms
//! - [`profiles`]: ground states `eta_mu`, mass `m(mu)` and `m'(mu)`
//! - [`field`]: grids, fields, the symmetry group and conserved functionals
//! - [`solver`]: Strang split-step time stepping
//! - [`manifold`]: tangent frames, `Ω_σ`, the Hessian and cross pairings
//! - [`decomposition`]: skew-orthogonal fitting of two solitons plus `w`
//! - [`effective`]: the reduced modulation ODEs
//! - [`harness`]: experiment configs, runs, sweeps and output files

pub mod decomposition;
pub mod effective;
pub mod error;
pub mod field;
pub mod harness;
pub mod krylov;
pub mod manifold;
pub mod nonlinearity;
pub mod profiles;
pub mod solver;
pub mod spectral;

pub use error::{Error, Result};
