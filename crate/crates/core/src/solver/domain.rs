use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{Result, SolverError};

/// Discretized solving region: an `M × N` grid with per-axis steps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimDomain {
    /// Cells along `x` (`M`).
    pub rows: usize,
    /// Cells along `z` (`N`).
    pub cols: usize,
    /// Grid step along `x` (m).
    pub dl_x: f64,
    /// Grid step along `z` (m).
    pub dl_z: f64,
    /// Physical extent along `x` (m).
    pub l_x: f64,
    /// Physical extent along `z` (m).
    pub l_z: f64,
    /// PML thickness in cells on each `x` side.
    pub pml_x: usize,
    /// PML thickness in cells on each `z` side.
    pub pml_z: usize,
}

impl SimDomain {
    /// Builds a domain of fixed shape covering `l_x × l_z`; grid steps follow from the extents.
    pub fn new(rows: usize, cols: usize, l_x: f64, l_z: f64, pml_x: usize, pml_z: usize) -> Result<Self> {
        let domain = Self {
            rows,
            cols,
            dl_x: l_x / rows as f64,
            dl_z: l_z / cols as f64,
            l_x,
            l_z,
            pml_x,
            pml_z,
        };
        domain.validate()?;
        Ok(domain)
    }

    /// Builds a domain from grid steps instead of extents.
    pub fn from_steps(rows: usize, cols: usize, dl_x: f64, dl_z: f64, pml_x: usize, pml_z: usize) -> Result<Self> {
        Self::new(rows, cols, dl_x * rows as f64, dl_z * cols as f64, pml_x, pml_z)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(SolverError::InvalidDomain(msg));
        if self.rows < 8 || self.cols < 8 {
            return bad(format!("grid {}x{} smaller than 8x8", self.rows, self.cols));
        }
        if !(self.dl_x > 0.0 && self.dl_z > 0.0) || !self.dl_x.is_finite() || !self.dl_z.is_finite() {
            return bad("grid steps must be positive and finite".into());
        }
        let tol = 0.5 * self.dl_x.min(self.dl_z);
        if (self.rows as f64 * self.dl_x - self.l_x).abs() > tol || (self.cols as f64 * self.dl_z - self.l_z).abs() > tol {
            return bad("grid steps do not close the physical extent".into());
        }
        let limit = self.rows.min(self.cols) as f64 / 4.0;
        for (name, pml) in [("pml_x", self.pml_x), ("pml_z", self.pml_z)] {
            if pml < 4 || pml as f64 >= limit {
                return bad(format!("{name} = {pml} must be >= 4 and < {limit}"));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, row: usize, col: usize) -> usize {
        row * self.cols + col
    }

    /// True for cells outside every PML slab.
    pub fn is_interior(&self, row: usize, col: usize) -> bool {
        row >= self.pml_x && row < self.rows - self.pml_x && col >= self.pml_z && col < self.cols - self.pml_z
    }

    /// Centre of cell `row` along `x` (m).
    pub fn x_center(&self, row: usize) -> f64 {
        (row as f64 + 0.5) * self.dl_x
    }

    /// Centre of cell `col` along `z` (m).
    pub fn z_center(&self, col: usize) -> f64 {
        (col as f64 + 0.5) * self.dl_z
    }
}

/// Relative permittivity sampled at every grid cell.
#[derive(Debug, Clone, PartialEq)]
pub struct PermittivityMap {
    pub domain: SimDomain,
    pub eps: Vec<Complex64>,
}

impl PermittivityMap {
    pub fn new(domain: SimDomain, eps: Vec<Complex64>) -> Result<Self> {
        if eps.len() != domain.len() {
            return Err(SolverError::DimensionMismatch { expected: domain.len(), got: eps.len() });
        }
        for row in 0..domain.rows {
            for col in 0..domain.cols {
                let e = eps[domain.index(row, col)];
                if !e.re.is_finite() || !e.im.is_finite() {
                    return Err(SolverError::InvalidPermittivity { row, col, reason: "non-finite value" });
                }
                if domain.is_interior(row, col) {
                    if e.re < 1.0 {
                        return Err(SolverError::InvalidPermittivity { row, col, reason: "real part below 1" });
                    }
                    if e.im != 0.0 {
                        return Err(SolverError::InvalidPermittivity { row, col, reason: "lossy material outside PML" });
                    }
                }
            }
        }
        Ok(Self { domain, eps })
    }

    /// Uniform real permittivity over the whole grid.
    pub fn uniform(domain: SimDomain, eps_r: f64) -> Result<Self> {
        Self::new(domain, vec![Complex64::new(eps_r, 0.0); domain.len()])
    }

    #[inline]
    pub fn at(&self, row: usize, col: usize) -> Complex64 {
        self.eps[self.domain.index(row, col)]
    }

    /// Real permittivity along one grid column (a cross-section at fixed `z`).
    pub fn column(&self, col: usize) -> Vec<f64> {
        (0..self.domain.rows).map(|row| self.at(row, col).re).collect()
    }
}

/// Complex scalar field on the grid (`H_y`, or a masked source plane).
#[derive(Debug, Clone, PartialEq)]
pub struct FieldMap {
    pub domain: SimDomain,
    pub values: Vec<Complex64>,
}

impl FieldMap {
    pub fn zeros(domain: SimDomain) -> Self {
        Self { domain, values: vec![Complex64::new(0.0, 0.0); domain.len()] }
    }

    pub fn new(domain: SimDomain, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != domain.len() {
            return Err(SolverError::DimensionMismatch { expected: domain.len(), got: values.len() });
        }
        Ok(Self { domain, values })
    }

    #[inline]
    pub fn at(&self, row: usize, col: usize) -> Complex64 {
        self.values[self.domain.index(row, col)]
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.re.is_finite() && v.im.is_finite())
    }

    pub fn scaled(&self, factor: Complex64) -> Self {
        Self { domain: self.domain, values: self.values.iter().map(|v| v * factor).collect() }
    }

    /// `self += factor · other`.
    pub fn add_scaled(&mut self, other: &FieldMap, factor: Complex64) {
        debug_assert_eq!(self.values.len(), other.values.len());
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += b * factor;
        }
    }

    /// Linear combination `Σ γ_i F_i` of fields sharing one domain.
    pub fn superpose(fields: &[&FieldMap], coeffs: &[Complex64]) -> Self {
        assert_eq!(fields.len(), coeffs.len());
        assert!(!fields.is_empty());
        let mut out = FieldMap::zeros(fields[0].domain);
        for (f, &c) in fields.iter().zip(coeffs) {
            out.add_scaled(f, c);
        }
        out
    }

    pub fn norm_l2(&self) -> f64 {
        self.values.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }
}
