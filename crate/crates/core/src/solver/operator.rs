use num_complex::Complex64;

use super::{wavenumber, PermittivityMap, Result, SolverError, StretchProfile};

/// Compressed sparse row matrix over `Complex64`.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseComplexMatrix {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
    pub values: Vec<Complex64>,
}

impl SparseComplexMatrix {
    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, Complex64)> + '_ {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        self.col_idx[span.clone()].iter().copied().zip(self.values[span].iter().copied())
    }

    pub fn get(&self, r: usize, c: usize) -> Complex64 {
        self.row(r).find(|&(col, _)| col == c).map_or(Complex64::new(0.0, 0.0), |(_, v)| v)
    }

    pub fn mul_vec(&self, x: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(x.len(), self.n);
        (0..self.n).map(|r| self.row(r).map(|(c, v)| v * x[c]).sum()).collect()
    }

    /// Largest `|r - c|` over stored entries after relabelling rows and columns by `perm`.
    pub fn bandwidth_under(&self, perm: &[usize]) -> usize {
        (0..self.n)
            .flat_map(|r| self.row(r).map(move |(c, _)| perm[r].abs_diff(perm[c])))
            .max()
            .unwrap_or(0)
    }
}

/// Assembles `A = ∇×(ε_r⁻¹∇×) − k₀²` acting on `H_y`, with stretched derivatives
/// `(1/s) ∂` and harmonic-mean permittivity at cell faces. Dirichlet `H_y = 0`
/// just outside the grid.
pub fn assemble_operator(eps: &PermittivityMap, wavelength: f64, pml: &StretchProfile) -> Result<SparseComplexMatrix> {
    if wavelength <= 0.0 {
        return Err(SolverError::NonPositiveWavelength(wavelength));
    }
    let d = eps.domain;
    if !pml.matches(&d) {
        return Err(SolverError::DimensionMismatch { expected: d.rows + d.cols, got: pml.s_x.len() + pml.s_z.len() });
    }
    if eps.eps.len() != d.len() {
        return Err(SolverError::DimensionMismatch { expected: d.len(), got: eps.eps.len() });
    }
    let k0sq = wavenumber(wavelength).powi(2);
    let (m, n) = (d.rows, d.cols);
    let inv_dx2 = 1.0 / (d.dl_x * d.dl_x);
    let inv_dz2 = 1.0 / (d.dl_z * d.dl_z);
    let inv = |i: usize, j: usize| eps.at(i, j).inv();
    // Inverse of the harmonic mean is the mean of inverses.
    let face = |a: Complex64, b: Complex64| 0.5 * (a + b);

    let mut row_ptr = Vec::with_capacity(d.len() + 1);
    let mut col_idx = Vec::with_capacity(5 * d.len());
    let mut values = Vec::with_capacity(5 * d.len());
    row_ptr.push(0);
    for i in 0..m {
        for j in 0..n {
            let here = inv(i, j);
            let ie_xm = if i > 0 { face(inv(i - 1, j), here) } else { here };
            let ie_xp = if i + 1 < m { face(here, inv(i + 1, j)) } else { here };
            let ie_zm = if j > 0 { face(inv(i, j - 1), here) } else { here };
            let ie_zp = if j + 1 < n { face(here, inv(i, j + 1)) } else { here };
            let cxm = ie_xm / (pml.s_x[i] * pml.s_x_face[i]) * inv_dx2;
            let cxp = ie_xp / (pml.s_x[i] * pml.s_x_face[i + 1]) * inv_dx2;
            let czm = ie_zm / (pml.s_z[j] * pml.s_z_face[j]) * inv_dz2;
            let czp = ie_zp / (pml.s_z[j] * pml.s_z_face[j + 1]) * inv_dz2;
            let diag = cxm + cxp + czm + czp - k0sq;
            // Columns in ascending order.
            if i > 0 {
                col_idx.push(d.index(i - 1, j));
                values.push(-cxm);
            }
            if j > 0 {
                col_idx.push(d.index(i, j - 1));
                values.push(-czm);
            }
            col_idx.push(d.index(i, j));
            values.push(diag);
            if j + 1 < n {
                col_idx.push(d.index(i, j + 1));
                values.push(-czp);
            }
            if i + 1 < m {
                col_idx.push(d.index(i + 1, j));
                values.push(-cxp);
            }
            row_ptr.push(col_idx.len());
        }
    }
    Ok(SparseComplexMatrix { n: d.len(), row_ptr, col_idx, values })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::SimDomain;

    fn domain(m: usize, n: usize) -> SimDomain {
        SimDomain::from_steps(m, n, 60e-9, 50e-9, 4, 4).unwrap_or(SimDomain {
            rows: m,
            cols: n,
            dl_x: 60e-9,
            dl_z: 50e-9,
            l_x: m as f64 * 60e-9,
            l_z: n as f64 * 50e-9,
            pml_x: 0,
            pml_z: 0,
        })
    }

    #[test]
    fn vacuum_interior_stencil() {
        let d = domain(20, 24);
        let eps = PermittivityMap::uniform(d, 1.0).unwrap();
        let a = assemble_operator(&eps, 1.55e-6, &StretchProfile::identity(&d)).unwrap();
        let r = d.index(10, 12);
        let k0sq = wavenumber(1.55e-6).powi(2);
        let idx2 = 1.0 / (d.dl_x * d.dl_x);
        let idz2 = 1.0 / (d.dl_z * d.dl_z);
        let center = 2.0 * (idx2 + idz2) - k0sq;
        assert!((a.get(r, r).re - center).abs() < 1e-9 * center.abs());
        assert!((a.get(r, d.index(9, 12)).re + idx2).abs() < 1e-9 * idx2);
        assert!((a.get(r, d.index(11, 12)).re + idx2).abs() < 1e-9 * idx2);
        assert!((a.get(r, d.index(10, 11)).re + idz2).abs() < 1e-9 * idz2);
        assert!((a.get(r, d.index(10, 13)).re + idz2).abs() < 1e-9 * idz2);
        assert_eq!(a.row(r).count(), 5);
        for row in 0..a.n {
            assert!(a.row(row).count() <= 5);
        }
    }

    #[test]
    fn plane_wave_matches_discrete_dispersion() {
        let d = domain(16, 40);
        let eps_r = 12.11;
        let eps = PermittivityMap::uniform(d, eps_r).unwrap();
        let lambda = 1.55e-6;
        let a = assemble_operator(&eps, lambda, &StretchProfile::identity(&d)).unwrap();
        let k = 2.0 * std::f64::consts::PI * eps_r.sqrt() / lambda;
        let h: Vec<Complex64> = (0..d.len())
            .map(|idx| Complex64::from_polar(1.0, k * (idx % d.cols) as f64 * d.dl_z))
            .collect();
        let ah = a.mul_vec(&h);
        let expected = (2.0 - 2.0 * (k * d.dl_z).cos()) / (eps_r * d.dl_z * d.dl_z) - wavenumber(lambda).powi(2);
        let r = d.index(8, 20);
        let ratio = ah[r] / h[r];
        assert!((ratio.re - expected).abs() < 1e-8 * expected.abs(), "{ratio} vs {expected}");
        assert!(ratio.im.abs() < 1e-8 * expected.abs());
        assert!(expected.abs() > 0.0);
    }

    /// Applies `-∇·(ε⁻¹∇H) - k₀²H` by explicit face fluxes, independent of the CSR layout.
    fn apply_dense(eps: &PermittivityMap, lambda: f64, h: &[Complex64]) -> Vec<Complex64> {
        let d = eps.domain;
        let get = |i: isize, j: isize| -> Complex64 {
            if i < 0 || j < 0 || i >= d.rows as isize || j >= d.cols as isize {
                Complex64::new(0.0, 0.0)
            } else {
                h[d.index(i as usize, j as usize)]
            }
        };
        let e = |i: isize, j: isize| -> Option<Complex64> {
            if i < 0 || j < 0 || i >= d.rows as isize || j >= d.cols as isize {
                None
            } else {
                Some(eps.at(i as usize, j as usize))
            }
        };
        let face_eps = |a: Complex64, b: Option<Complex64>| match b {
            Some(b) => 2.0 / (1.0 / a + 1.0 / b),
            None => a,
        };
        let k0sq = wavenumber(lambda).powi(2);
        let mut out = vec![Complex64::new(0.0, 0.0); d.len()];
        for i in 0..d.rows as isize {
            for j in 0..d.cols as isize {
                let c = e(i, j).unwrap();
                let fxp = (get(i + 1, j) - get(i, j)) / face_eps(c, e(i + 1, j)) / d.dl_x;
                let fxm = (get(i, j) - get(i - 1, j)) / face_eps(c, e(i - 1, j)) / d.dl_x;
                let fzp = (get(i, j + 1) - get(i, j)) / face_eps(c, e(i, j + 1)) / d.dl_z;
                let fzm = (get(i, j) - get(i, j - 1)) / face_eps(c, e(i, j - 1)) / d.dl_z;
                let div = (fxp - fxm) / d.dl_x + (fzp - fzm) / d.dl_z;
                out[d.index(i as usize, j as usize)] = -div - k0sq * get(i, j);
            }
        }
        out
    }

    #[test]
    fn nonuniform_matches_dense_assembly() {
        let d = domain(8, 8);
        let eps_vals: Vec<Complex64> = (0..64)
            .map(|k| Complex64::new(if (k * 7 + 3) % 5 < 2 { 12.11 } else { 2.07 }, 0.0))
            .collect();
        let eps = PermittivityMap { domain: d, eps: eps_vals };
        let lambda = 1.55e-6;
        let a = assemble_operator(&eps, lambda, &StretchProfile::identity(&d)).unwrap();
        for col in 0..d.len() {
            let mut unit = vec![Complex64::new(0.0, 0.0); d.len()];
            unit[col] = Complex64::new(1.0, 0.0);
            let dense_col = apply_dense(&eps, lambda, &unit);
            for row in 0..d.len() {
                let diff = (a.get(row, col) - dense_col[row]).norm();
                assert!(diff <= 1e-9 * dense_col[row].norm().max(1e10), "({row},{col}) {diff}");
            }
        }
    }

    #[test]
    fn rejects_mismatch_and_bad_wavelength() {
        let d = domain(16, 16);
        let eps = PermittivityMap::uniform(d, 1.0).unwrap();
        let other = domain(16, 20);
        assert!(matches!(
            assemble_operator(&eps, 1.55e-6, &StretchProfile::identity(&other)),
            Err(SolverError::DimensionMismatch { .. })
        ));
        assert!(matches!(
            assemble_operator(&eps, -1.0, &StretchProfile::identity(&d)),
            Err(SolverError::NonPositiveWavelength(_))
        ));
    }
}
