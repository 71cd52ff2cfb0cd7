use std::sync::atomic::{AtomicUsize, Ordering};

use num_complex::Complex64;

use super::{
    assemble_operator, BandedLu, FieldMap, PermittivityMap, PortMode, Result, SolverError, SourceSpec, SparseComplexMatrix,
    StretchProfile, RESIDUAL_TOL,
};

const MAX_REFINEMENT: usize = 3;

static SOLVE_CALLS: AtomicUsize = AtomicUsize::new(0);

/// Right-hand sides solved by this process so far.
pub fn solve_calls() -> usize {
    SOLVE_CALLS.load(Ordering::Relaxed)
}

/// Solved field together with its relative residual `‖Ax − b‖₂ / ‖b‖₂`.
#[derive(Debug, Clone)]
pub struct Solution {
    pub field: FieldMap,
    pub residual: f64,
}

/// Assembled and factored system for one device at one wavelength.
///
/// Immutable after construction; every port excitation reuses the factorization.
#[derive(Debug, Clone)]
pub struct Simulation {
    eps: PermittivityMap,
    wavelength: f64,
    pml: StretchProfile,
    operator: SparseComplexMatrix,
    lu: BandedLu,
}

impl Simulation {
    pub fn new(eps: &PermittivityMap, wavelength: f64) -> Result<Self> {
        if wavelength <= 0.0 {
            return Err(SolverError::NonPositiveWavelength(wavelength));
        }
        eps.domain.validate()?;
        let pml = StretchProfile::new(&eps.domain, wavelength)?;
        Self::with_profile(eps, wavelength, pml)
    }

    pub fn with_profile(eps: &PermittivityMap, wavelength: f64, pml: StretchProfile) -> Result<Self> {
        let operator = assemble_operator(eps, wavelength, &pml)?;
        let lu = BandedLu::factor_grid(&operator, eps.domain.rows, eps.domain.cols)?;
        Ok(Self { eps: eps.clone(), wavelength, pml, operator, lu })
    }

    pub fn operator(&self) -> &SparseComplexMatrix {
        &self.operator
    }

    pub fn permittivity(&self) -> &PermittivityMap {
        &self.eps
    }

    pub fn wavelength(&self) -> f64 {
        self.wavelength
    }

    pub fn stretch(&self) -> &StretchProfile {
        &self.pml
    }

    /// Mode of `src` on the injection column.
    pub fn port_mode(&self, src: &SourceSpec) -> Result<PortMode> {
        PortMode::solve(&self.eps, src, SourceSpec::source_column(&self.eps.domain))
    }

    /// Right-hand side launching each source's mode toward `+z` only.
    ///
    /// With `Q` the indicator of columns `≥ z_s` and `H_inc` the incident mode,
    /// `b = A Q H_inc − Q A H_inc`, which is supported on columns `z_s − 1` and `z_s`.
    pub fn source_vector(&self, sources: &[SourceSpec]) -> Result<Vec<Complex64>> {
        let d = self.eps.domain;
        let zs = SourceSpec::source_column(&d);
        let mut b = vec![Complex64::new(0.0, 0.0); d.len()];
        for src in sources {
            if (src.wavelength - self.wavelength).abs() > 1e-12 * self.wavelength {
                return Err(SolverError::InvalidSource(format!(
                    "port {} wavelength {:.5e} differs from simulation wavelength {:.5e}",
                    src.port_index, src.wavelength, self.wavelength
                )));
            }
            let port = self.port_mode(src)?;
            if src.amplitude == Complex64::new(0.0, 0.0) {
                continue;
            }
            for row in port.rows.clone() {
                let before = d.index(row, zs - 1);
                let after = d.index(row, zs);
                // row on the scattered side couples to the first total-field column
                b[before] += src.amplitude * self.operator.get(before, after) * port.incident(row, zs);
                b[after] -= src.amplitude * self.operator.get(after, before) * port.incident(row, zs - 1);
            }
        }
        Ok(b)
    }

    pub fn solve(&self, sources: &[SourceSpec]) -> Result<Solution> {
        let b = self.source_vector(sources)?;
        self.solve_rhs(&b)
    }

    pub fn solve_rhs(&self, b: &[Complex64]) -> Result<Solution> {
        SOLVE_CALLS.fetch_add(1, Ordering::Relaxed);
        let d = self.eps.domain;
        let b_norm = norm(b);
        if b_norm == 0.0 {
            return Ok(Solution { field: FieldMap::zeros(d), residual: 0.0 });
        }
        let mut x = self.lu.solve(b);
        let mut residual = self.residual(&x, b) / b_norm;
        let mut steps = 0;
        while residual > RESIDUAL_TOL * 1e-4 && steps < MAX_REFINEMENT {
            let ax = self.operator.mul_vec(&x);
            let r: Vec<Complex64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
            let dx = self.lu.solve(&r);
            for (xi, di) in x.iter_mut().zip(&dx) {
                *xi += di;
            }
            residual = self.residual(&x, b) / b_norm;
            steps += 1;
        }
        if !(residual < RESIDUAL_TOL) {
            return Err(SolverError::NonConvergence { iterations: steps, residual });
        }
        let field = FieldMap::new(d, x)?;
        if !field.is_finite() {
            return Err(SolverError::NonConvergence { iterations: steps, residual: f64::NAN });
        }
        Ok(Solution { field, residual })
    }

    fn residual(&self, x: &[Complex64], b: &[Complex64]) -> f64 {
        let ax = self.operator.mul_vec(x);
        ax.iter().zip(b).map(|(a, bi)| (bi - a).norm_sqr()).sum::<f64>().sqrt()
    }
}

fn norm(v: &[Complex64]) -> f64 {
    v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

/// One-shot solve of `sources` on `eps` at `wavelength`.
pub fn solve(eps: &PermittivityMap, sources: &[SourceSpec], wavelength: f64) -> Result<Solution> {
    Simulation::new(eps, wavelength)?.solve(sources)
}
