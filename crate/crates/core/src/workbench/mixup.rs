use num_complex::Complex64;
use rand::seq::index::sample;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{PreparedRecord, Result, WorkbenchError};
use crate::encoding::MaskedSource;
use crate::solver::FieldMap;

const ROW_TOL: f64 = 1e-9;

/// Square complex mixing matrix with unit-norm rows whose first entry is real
/// and nonnegative.
#[derive(Debug, Clone, PartialEq)]
pub struct MixupMatrix {
    ports: usize,
    gamma: Vec<Complex64>,
}

impl MixupMatrix {
    /// Checks the row invariants.
    pub fn new(ports: usize, gamma: Vec<Complex64>) -> Result<Self> {
        if ports == 0 || gamma.len() != ports * ports {
            return Err(WorkbenchError::InvalidMixup(format!("{} entries for {ports} ports", gamma.len())));
        }
        for (j, row) in gamma.chunks_exact(ports).enumerate() {
            let norm = row.iter().map(Complex64::norm_sqr).sum::<f64>().sqrt();
            if (norm - 1.0).abs() > ROW_TOL {
                return Err(WorkbenchError::InvalidMixup(format!("row {j} has norm {norm}")));
            }
            if row[0].im.abs() > ROW_TOL || row[0].re < -ROW_TOL {
                return Err(WorkbenchError::InvalidMixup(format!("row {j} starts with {}", row[0])));
            }
        }
        Ok(Self { ports, gamma })
    }

    pub fn identity(ports: usize) -> Self {
        let gamma = (0..ports * ports).map(|k| Complex64::new(if k / ports == k % ports { 1.0 } else { 0.0 }, 0.0)).collect();
        Self { ports, gamma }
    }

    /// Every row mixes all ports.
    pub fn sample(ports: usize, rng: &mut impl Rng) -> Self {
        Self::sample_sparse(ports, ports, rng)
    }

    /// Each row mixes `per_row` randomly chosen ports. Entries are independent
    /// complex Gaussians, normalized per row and rotated so the first entry is
    /// real and nonnegative.
    pub fn sample_sparse(ports: usize, per_row: usize, rng: &mut impl Rng) -> Self {
        assert!(ports > 0, "mixup needs at least one port");
        let per_row = per_row.clamp(1, ports);
        let mut gamma = vec![Complex64::new(0.0, 0.0); ports * ports];
        for row in gamma.chunks_exact_mut(ports) {
            loop {
                for idx in sample(rng, ports, per_row).into_iter() {
                    let (re, im): (f64, f64) = (StandardNormal.sample(rng), StandardNormal.sample(rng));
                    row[idx] = Complex64::new(re, im);
                }
                let norm = row.iter().map(Complex64::norm_sqr).sum::<f64>().sqrt();
                if norm > 1e-12 {
                    let phase = if row[0].norm() > 0.0 { row[0].conj() / row[0].norm() } else { Complex64::new(1.0, 0.0) };
                    for g in row.iter_mut() {
                        *g *= phase / norm;
                    }
                    row[0] = Complex64::new(row[0].norm(), 0.0);
                    break;
                }
                row.fill(Complex64::new(0.0, 0.0));
            }
        }
        Self { ports, gamma }
    }

    pub fn ports(&self) -> usize {
        self.ports
    }

    pub fn row(&self, j: usize) -> &[Complex64] {
        &self.gamma[j * self.ports..(j + 1) * self.ports]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[Complex64]> {
        self.gamma.chunks_exact(self.ports)
    }
}

/// Row `j` of `gamma` yields the source `Σ_i γ_ji H^{J_i}` and target
/// `Σ_i γ_ji H_i`, without any new solve.
pub fn apply_mixup(record: &PreparedRecord, gamma: &MixupMatrix) -> Result<Vec<(MaskedSource, FieldMap)>> {
    if gamma.ports() != record.ports() {
        return Err(WorkbenchError::InvalidMixup(format!("{} ports in the matrix, {} in the record", gamma.ports(), record.ports())));
    }
    Ok(gamma.rows().map(|row| (record.source(row), record.target(row))).collect())
}
