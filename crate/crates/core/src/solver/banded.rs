//! Banded LU with partial pivoting for complex sparse systems.
//!
//! Grid operators have all their nonzeros within `bw` of the diagonal once
//! the unknowns are ordered along the shorter grid axis. Partial pivoting can
//! grow the upper band to `2·bw`, so each row keeps a window of `3·bw + 1`
//! entries.

use num_complex::Complex64;

use super::{Result, SolverError, SparseComplexMatrix};

#[derive(Debug, Clone)]
pub struct BandedLu {
    n: usize,
    kl: usize,
    ku: usize,
    width: usize,
    /// Row `i` stores columns `i - kl ..= i + ku + kl`.
    data: Vec<Complex64>,
    pivots: Vec<usize>,
    /// New position of original unknown `r`.
    perm: Vec<usize>,
}

impl BandedLu {
    /// Factors `a` after relabelling unknowns by `perm` (`perm[r]` is the new index of `r`).
    pub fn factor(a: &SparseComplexMatrix, perm: Vec<usize>) -> Result<Self> {
        let n = a.n;
        assert_eq!(perm.len(), n);
        let bw = a.bandwidth_under(&perm);
        let (kl, ku) = (bw, bw);
        let width = 2 * kl + ku + 1;
        let mut lu = Self { n, kl, ku, width, data: vec![Complex64::new(0.0, 0.0); n * width], pivots: vec![0; n], perm };
        for r in 0..n {
            let pr = lu.perm[r];
            for (c, v) in a.row(r) {
                let slot = lu.slot(pr, lu.perm[c]);
                lu.data[slot] += v;
            }
        }
        lu.eliminate()?;
        Ok(lu)
    }

    /// Factors with the ordering that minimizes bandwidth for an `rows × cols` grid.
    pub fn factor_grid(a: &SparseComplexMatrix, rows: usize, cols: usize) -> Result<Self> {
        assert_eq!(rows * cols, a.n);
        let perm: Vec<usize> = if rows <= cols {
            // column-major: neighbours along x are adjacent, along z are `rows` apart
            (0..a.n).map(|idx| (idx % cols) * rows + idx / cols).collect()
        } else {
            (0..a.n).collect()
        };
        Self::factor(a, perm)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn bandwidth(&self) -> usize {
        self.kl
    }

    #[inline]
    fn slot(&self, row: usize, col: usize) -> usize {
        debug_assert!(col + self.kl >= row && col <= row + self.ku + self.kl);
        row * self.width + (col + self.kl - row)
    }

    fn eliminate(&mut self) -> Result<()> {
        let n = self.n;
        let (kl, ku) = (self.kl, self.ku);
        for k in 0..n {
            let last_row = (k + kl).min(n - 1);
            let mut piv = k;
            let mut best = self.data[self.slot(k, k)].norm();
            for i in k + 1..=last_row {
                let v = self.data[self.slot(i, k)].norm();
                if v > best {
                    best = v;
                    piv = i;
                }
            }
            if best == 0.0 {
                return Err(SolverError::Singular(k));
            }
            self.pivots[k] = piv;
            let last_col = (k + ku + kl).min(n - 1);
            if piv != k {
                for c in k..=last_col {
                    let (s1, s2) = (self.slot(k, c), self.slot(piv, c));
                    self.data.swap(s1, s2);
                }
            }
            let pivot_inv = self.data[self.slot(k, k)].inv();
            let krow = self.slot(k, k);
            for i in k + 1..=last_row {
                let s = self.slot(i, k);
                if self.data[s] == Complex64::new(0.0, 0.0) {
                    continue;
                }
                let l = self.data[s] * pivot_inv;
                self.data[s] = l;
                let irow = self.slot(i, k);
                for off in 1..=(last_col - k) {
                    let u = self.data[krow + off];
                    self.data[irow + off] -= l * u;
                }
            }
        }
        Ok(())
    }

    /// Solves `A x = b` in the original unknown ordering.
    pub fn solve(&self, b: &[Complex64]) -> Vec<Complex64> {
        let n = self.n;
        assert_eq!(b.len(), n);
        let mut y = vec![Complex64::new(0.0, 0.0); n];
        for (r, &v) in b.iter().enumerate() {
            y[self.perm[r]] = v;
        }
        for k in 0..n {
            let p = self.pivots[k];
            if p != k {
                y.swap(k, p);
            }
            let yk = y[k];
            if yk == Complex64::new(0.0, 0.0) {
                continue;
            }
            for i in k + 1..=(k + self.kl).min(n - 1) {
                y[i] -= self.data[self.slot(i, k)] * yk;
            }
        }
        for k in (0..n).rev() {
            let last_col = (k + self.ku + self.kl).min(n - 1);
            let row = self.slot(k, k);
            let mut acc = y[k];
            for off in 1..=(last_col - k) {
                acc -= self.data[row + off] * y[k + off];
            }
            y[k] = acc / self.data[row];
        }
        let mut x = vec![Complex64::new(0.0, 0.0); n];
        for (r, xr) in x.iter_mut().enumerate() {
            *xr = y[self.perm[r]];
        }
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};

    fn random_banded(n: usize, bw: usize, seed: u64) -> SparseComplexMatrix {
        // tiny LCG keeps the test independent of rand
        let mut state = seed;
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        };
        let mut row_ptr = vec![0];
        let mut col_idx = vec![];
        let mut values = vec![];
        for r in 0..n {
            for c in r.saturating_sub(bw)..=(r + bw).min(n - 1) {
                if c == r || next() > -0.1 {
                    col_idx.push(c);
                    // small diagonal forces pivoting
                    let scale = if c == r { 0.05 } else { 1.0 };
                    values.push(Complex64::new(next() * scale, next() * scale));
                }
            }
            row_ptr.push(col_idx.len());
        }
        SparseComplexMatrix { n, row_ptr, col_idx, values }
    }

    #[test]
    fn matches_dense_lu() {
        for (n, bw, seed) in [(30, 3, 1), (57, 5, 2), (40, 1, 3)] {
            let a = random_banded(n, bw, seed);
            let b: Vec<Complex64> = (0..n).map(|k| Complex64::new(k as f64 * 0.1 - 1.0, 0.3)).collect();
            let lu = BandedLu::factor(&a, (0..n).collect()).unwrap();
            let x = lu.solve(&b);
            let dense = DMatrix::from_fn(n, n, |r, c| a.get(r, c));
            let xd = dense.clone().lu().solve(&DVector::from_vec(b.clone())).unwrap();
            for k in 0..n {
                assert!((x[k] - xd[k]).norm() < 1e-9 * (1.0 + xd[k].norm()), "n={n} k={k}");
            }
        }
    }

    #[test]
    fn permuted_ordering_solves_same_system() {
        let n = 24;
        let a = random_banded(n, 2, 9);
        let b: Vec<Complex64> = (0..n).map(|k| Complex64::new(1.0, k as f64)).collect();
        let x0 = BandedLu::factor(&a, (0..n).collect()).unwrap().solve(&b);
        let rev: Vec<usize> = (0..n).rev().collect();
        let x1 = BandedLu::factor(&a, rev).unwrap().solve(&b);
        for k in 0..n {
            assert!((x0[k] - x1[k]).norm() < 1e-9 * (1.0 + x0[k].norm()));
        }
    }

    #[test]
    fn singular_is_reported() {
        let a = SparseComplexMatrix {
            n: 2,
            row_ptr: vec![0, 1, 1],
            col_idx: vec![0],
            values: vec![Complex64::new(1.0, 0.0)],
        };
        assert!(matches!(BandedLu::factor(&a, vec![0, 1]), Err(SolverError::Singular(1))));
    }
}
