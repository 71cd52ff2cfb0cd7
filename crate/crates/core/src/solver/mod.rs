//! Frequency-domain solver for the TM-polarized `H_y` field.
//!
//! The scalar equation `∇·(ε_r⁻¹ ∇H_y) + k₀² H_y = 0` is discretized on a
//! cell-centred Yee grid with coordinate-stretched PML on all four sides.
//! The resulting sparse system is factored with a banded LU and reused for
//! every port excitation of the same device.
//!
//! Grid convention: `x` runs along rows (`M` cells), `z` along columns
//! (`N` cells); flat index is `i * N + j`. Forward propagation is `e^{+jβz}`.

mod banded;
mod domain;
mod mode;
mod operator;
mod pml;
mod power;
mod simulation;
mod source;

pub use banded::BandedLu;
pub use domain::{FieldMap, PermittivityMap, SimDomain};
pub use mode::{mode_profile, SlabMode};
pub use operator::{assemble_operator, SparseComplexMatrix};
pub use pml::StretchProfile;
pub use power::{modal_amplitudes, port_power, port_power_rows};
pub use simulation::{solve, solve_calls, Simulation, Solution};
pub use source::{PortMode, Side, SourceSpec};

use thiserror::Error;

/// Speed of light in vacuum (m/s).
pub const C0: f64 = 299_792_458.0;
/// Vacuum permeability (H/m).
pub const MU0: f64 = 1.256_637_062_12e-6;
/// Vacuum permittivity (F/m).
pub const EPS0: f64 = 8.854_187_812_8e-12;

/// Relative residual every accepted solve must reach.
pub const RESIDUAL_TOL: f64 = 1e-6;

/// Supported source wavelength band (meters).
pub const WAVELENGTH_BAND: (f64, f64) = (1.49e-6, 1.61e-6);

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("invalid domain: {0}")]
    InvalidDomain(String),
    #[error("dimension mismatch: expected {expected} cells, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("wavelength must be positive, got {0}")]
    NonPositiveWavelength(f64),
    #[error("wavelength {0:.4e} m outside supported band")]
    WavelengthOutOfBand(f64),
    #[error("invalid permittivity at cell ({row}, {col}): {reason}")]
    InvalidPermittivity {
        row: usize,
        col: usize,
        reason: &'static str,
    },
    #[error("no guided mode found: {0}")]
    NoGuidedMode(String),
    #[error("source invalid: {0}")]
    InvalidSource(String),
    #[error("singular operator: zero pivot at row {0}")]
    Singular(usize),
    #[error("linear solve did not converge after {iterations} refinement steps (residual {residual:.3e})")]
    NonConvergence { iterations: usize, residual: f64 },
}

pub type Result<T> = std::result::Result<T, SolverError>;

/// Vacuum wavenumber `k₀ = ω/c = 2π/λ` (1/m).
pub fn wavenumber(wavelength: f64) -> f64 {
    2.0 * std::f64::consts::PI / wavelength
}
