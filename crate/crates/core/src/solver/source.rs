use std::ops::Range;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{mode_profile, PermittivityMap, Result, SimDomain, SlabMode, SolverError, WAVELENGTH_BAND};

/// Edge of the solving region a port is attached to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    #[default]
    Left,
}

/// Port excitation launching the fundamental mode of one input waveguide.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceSpec {
    pub port_index: usize,
    /// Port centre along `x` (m).
    pub center_x: f64,
    /// Port waveguide width (m).
    pub width: f64,
    /// Transverse window `[lo, hi)` (m) on which the port mode is solved.
    pub lane: (f64, f64),
    /// Vacuum wavelength (m).
    pub wavelength: f64,
    pub amplitude: Complex64,
    #[serde(default)]
    pub side: Side,
}

impl SourceSpec {
    pub fn validate(&self, domain: &SimDomain) -> Result<()> {
        let (lo, hi) = WAVELENGTH_BAND;
        if !(self.wavelength >= lo && self.wavelength <= hi) {
            return Err(SolverError::WavelengthOutOfBand(self.wavelength));
        }
        let x_lo = domain.pml_x as f64 * domain.dl_x;
        let x_hi = domain.l_x - x_lo;
        let (p_lo, p_hi) = (self.center_x - self.width / 2.0, self.center_x + self.width / 2.0);
        if !(self.width > 0.0) || p_lo < x_lo || p_hi > x_hi {
            return Err(SolverError::InvalidSource(format!(
                "port {} spans [{p_lo:.3e}, {p_hi:.3e}] outside non-PML region [{x_lo:.3e}, {x_hi:.3e}]",
                self.port_index
            )));
        }
        if self.lane.0 > p_lo || self.lane.1 < p_hi {
            return Err(SolverError::InvalidSource(format!("lane of port {} does not contain the port", self.port_index)));
        }
        Ok(())
    }

    /// Column on which the mode is injected: one cell inside the port, past the PML.
    pub fn source_column(domain: &SimDomain) -> usize {
        domain.pml_z + 1
    }

    pub fn with_amplitude(&self, amplitude: Complex64) -> Self {
        Self { amplitude, ..self.clone() }
    }
}

/// Port mode embedded in the grid: profile on `rows`, unit power, phase `e^{jβ j Δz}`.
#[derive(Debug, Clone, PartialEq)]
pub struct PortMode {
    pub rows: Range<usize>,
    pub mode: SlabMode,
    pub dl_z: f64,
}

impl PortMode {
    /// Solves the port mode on the lane cross-section at `column`.
    pub fn solve(eps: &PermittivityMap, src: &SourceSpec, column: usize) -> Result<Self> {
        let d = eps.domain;
        src.validate(&d)?;
        let rows = lane_rows(&d, src.lane);
        if rows.len() < 3 {
            return Err(SolverError::InvalidSource(format!("lane of port {} narrower than 3 cells", src.port_index)));
        }
        let slice: Vec<f64> = rows.clone().map(|r| eps.at(r, column).re).collect();
        let mode = mode_profile(&slice, d.dl_x, d.dl_z, src.wavelength)?;
        Ok(Self { rows, mode, dl_z: d.dl_z })
    }

    /// Unit-amplitude forward mode value at `(row, col)`.
    #[inline]
    pub fn incident(&self, row: usize, col: usize) -> Complex64 {
        if !self.rows.contains(&row) {
            return Complex64::new(0.0, 0.0);
        }
        let phi = self.mode.profile[row - self.rows.start];
        Complex64::from_polar(phi, self.mode.beta * col as f64 * self.dl_z)
    }
}

/// Grid rows whose centres fall inside `lane`, clipped to the non-PML band.
pub(crate) fn lane_rows(d: &SimDomain, lane: (f64, f64)) -> Range<usize> {
    let first = (0..d.rows).find(|&r| d.x_center(r) >= lane.0).unwrap_or(d.rows);
    let end = (0..d.rows).rev().find(|&r| d.x_center(r) < lane.1).map_or(0, |r| r + 1);
    first.max(d.pml_x)..end.min(d.rows - d.pml_x).max(first.max(d.pml_x))
}
