//! Fundamental TM slab mode of a 1-D permittivity cross-section.
//!
//! For `H_y = φ(x) e^{jβz}` in a guide that is uniform along `z`, the
//! discrete operator reduces to `ε_i [D ε⁻¹ D φ]_i + k₀² ε_i φ_i = q φ_i` with
//! `q = (2 − 2cos βΔz)/Δz²`. The substitution `φ = ε^{1/2} ψ` makes the
//! matrix symmetric tridiagonal; the fundamental mode is its largest
//! eigenpair, found by Sturm bisection followed by inverse iteration.

use super::power::mode_power;
use super::{wavenumber, Result, SolverError};

#[derive(Debug, Clone, PartialEq)]
pub struct SlabMode {
    /// Real profile over the cross-section, normalized to unit power.
    pub profile: Vec<f64>,
    /// Effective index `β / k₀`.
    pub n_eff: f64,
    /// Discrete propagation constant (1/m).
    pub beta: f64,
}

/// Symmetric tridiagonal form of the slab eigenproblem: `(diagonal, off_diagonal)`.
pub fn slab_operator(eps_column: &[f64], dl_x: f64, wavelength: f64) -> (Vec<f64>, Vec<f64>) {
    let n = eps_column.len();
    let k0sq = wavenumber(wavelength).powi(2);
    let inv_dx2 = 1.0 / (dl_x * dl_x);
    let face = |a: f64, b: f64| 0.5 * (1.0 / a + 1.0 / b);
    let mut diag = Vec::with_capacity(n);
    let mut off = Vec::with_capacity(n.saturating_sub(1));
    for i in 0..n {
        let e = eps_column[i];
        let ie_m = if i > 0 { face(eps_column[i - 1], e) } else { 1.0 / e };
        let ie_p = if i + 1 < n { face(e, eps_column[i + 1]) } else { 1.0 / e };
        diag.push(-e * (ie_m + ie_p) * inv_dx2 + k0sq * e);
        if i + 1 < n {
            off.push((e * eps_column[i + 1]).sqrt() * ie_p * inv_dx2);
        }
    }
    (diag, off)
}

/// Solves for the fundamental guided mode of `eps_column` (cells of width `dl_x`),
/// propagating along an axis discretized with step `dl_z`.
pub fn mode_profile(eps_column: &[f64], dl_x: f64, dl_z: f64, wavelength: f64) -> Result<SlabMode> {
    if wavelength <= 0.0 {
        return Err(SolverError::NonPositiveWavelength(wavelength));
    }
    if eps_column.len() < 3 {
        return Err(SolverError::NoGuidedMode("cross-section shorter than 3 cells".into()));
    }
    if let Some(bad) = eps_column.iter().find(|e| !(**e >= 1.0)) {
        return Err(SolverError::NoGuidedMode(format!("permittivity {bad} below 1")));
    }
    let boundary = eps_column[0].max(eps_column[eps_column.len() - 1]);
    let peak = eps_column.iter().copied().fold(f64::MIN, f64::max);
    if peak <= boundary {
        return Err(SolverError::NoGuidedMode("no index contrast above the boundary".into()));
    }

    let (diag, off) = slab_operator(eps_column, dl_x, wavelength);
    let q = largest_eigenvalue(&diag, &off);
    let k0 = wavenumber(wavelength);
    let sin_half = q.max(0.0).sqrt() * dl_z / 2.0;
    if q <= 0.0 || sin_half >= 1.0 {
        return Err(SolverError::NoGuidedMode(format!("eigenvalue {q:.3e} has no real propagation constant")));
    }
    let beta = 2.0 / dl_z * sin_half.asin();
    let n_eff = beta / k0;
    if n_eff <= boundary.sqrt() {
        return Err(SolverError::NoGuidedMode(format!("n_eff {n_eff:.4} below cutoff {:.4}", boundary.sqrt())));
    }

    let psi = eigenvector(&diag, &off, q);
    let mut profile: Vec<f64> = psi.iter().zip(eps_column).map(|(p, e)| p * e.sqrt()).collect();
    let peak_idx = profile
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
        .map(|(i, _)| i)
        .unwrap_or(0);
    let sign = profile[peak_idx].signum();
    let power = mode_power(&profile, eps_column, beta, k0, dl_x, dl_z);
    let scale = sign / power.sqrt();
    for v in &mut profile {
        *v *= scale;
    }
    Ok(SlabMode { profile, n_eff, beta })
}

/// Number of eigenvalues strictly below `x` (Sturm sequence count).
fn count_below(diag: &[f64], off: &[f64], x: f64) -> usize {
    let mut count = 0;
    let mut d = 1.0;
    for i in 0..diag.len() {
        let b2 = if i > 0 { off[i - 1] * off[i - 1] } else { 0.0 };
        d = diag[i] - x - if i > 0 { b2 / d } else { 0.0 };
        if d == 0.0 {
            d = f64::EPSILON * (diag[i].abs() + x.abs()).max(f64::MIN_POSITIVE);
        }
        if d < 0.0 {
            count += 1;
        }
    }
    count
}

fn largest_eigenvalue(diag: &[f64], off: &[f64]) -> f64 {
    let n = diag.len();
    // Gershgorin bounds
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for i in 0..n {
        let r = if i > 0 { off[i - 1].abs() } else { 0.0 } + if i + 1 < n { off[i].abs() } else { 0.0 };
        lo = lo.min(diag[i] - r);
        hi = hi.max(diag[i] + r);
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if count_below(diag, off, mid) >= n {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Inverse iteration on `T − σI` with a pivoted tridiagonal factorization.
fn eigenvector(diag: &[f64], off: &[f64], eigenvalue: f64) -> Vec<f64> {
    let n = diag.len();
    let scale = diag.iter().map(|d| d.abs()).fold(0.0, f64::max).max(1.0);
    let shift = eigenvalue + scale * 1e-13;
    let mut v = vec![1.0 / (n as f64).sqrt(); n];
    for _ in 0..4 {
        v = solve_tridiagonal_pivoted(diag, off, shift, &v);
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        for x in &mut v {
            *x /= norm;
        }
    }
    v
}

/// Solves `(T − σI) x = b` for symmetric tridiagonal `T` with partial pivoting.
fn solve_tridiagonal_pivoted(diag: &[f64], off: &[f64], shift: f64, b: &[f64]) -> Vec<f64> {
    let n = diag.len();
    // Row k of the upper factor holds (u0, u1, u2) at columns k, k+1, k+2.
    let mut u0: Vec<f64> = diag.iter().map(|d| d - shift).collect();
    let mut u1: Vec<f64> = (0..n).map(|k| if k + 1 < n { off[k] } else { 0.0 }).collect();
    let mut u2 = vec![0.0; n];
    let mut rhs = b.to_vec();
    let tiny = f64::EPSILON * u0.iter().map(|x| x.abs()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    for k in 0..n.saturating_sub(1) {
        // row k+1 before elimination: sub = off[k], diag' = u0[k+1], sup = u1[k+1]
        let sub = off[k];
        if sub.abs() > u0[k].abs() {
            // swap rows k and k+1
            let (a0, a1, a2) = (u0[k], u1[k], u2[k]);
            let (b1, b2) = (u0[k + 1], u1[k + 1]);
            u0[k] = sub;
            u1[k] = b1;
            u2[k] = b2;
            rhs.swap(k, k + 1);
            let l = a0 / sub;
            u0[k + 1] = a1 - l * b1;
            u1[k + 1] = a2 - l * b2;
            rhs[k + 1] -= l * rhs[k];
        } else {
            let piv = if u0[k].abs() < tiny { tiny } else { u0[k] };
            u0[k] = piv;
            let l = sub / piv;
            u0[k + 1] -= l * u1[k];
            u1[k + 1] -= l * u2[k];
            rhs[k + 1] -= l * rhs[k];
        }
    }
    if u0[n - 1].abs() < tiny {
        u0[n - 1] = tiny;
    }
    let mut x = vec![0.0; n];
    for k in (0..n).rev() {
        let mut acc = rhs[k];
        if k + 1 < n {
            acc -= u1[k] * x[k + 1];
        }
        if k + 2 < n {
            acc -= u2[k] * x[k + 2];
        }
        x[k] = acc / u0[k];
    }
    x
}
