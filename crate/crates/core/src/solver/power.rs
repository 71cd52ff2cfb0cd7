//! Time-averaged power flux along `z`.
//!
//! Power is reported per unit length along `y` in normalized units
//! (`η₀ = 1`, transverse lengths in µm). Across the face between columns
//! `c` and `c+1` the discrete flux is
//! `P = ½ Σ_i Im(H̄_{i,c} H_{i,c+1}) · ε⁻¹_face / (k₀ Δz) · Δx`,
//! which is conserved exactly by the discrete operator in lossless regions.

use num_complex::Complex64;

use super::{wavenumber, FieldMap, PermittivityMap, PortMode};

/// Transverse length unit of the normalized power (µm).
pub const POWER_LENGTH_UNIT: f64 = 1e-6;

/// Power carried by a forward mode `φ e^{jβz}` under the discrete flux definition.
pub(crate) fn mode_power(profile: &[f64], eps: &[f64], beta: f64, k0: f64, dl_x: f64, dl_z: f64) -> f64 {
    let kernel = (beta * dl_z).sin() / (k0 * dl_z) * dl_x / POWER_LENGTH_UNIT;
    0.5 * profile.iter().zip(eps).map(|(p, e)| p * p / e).sum::<f64>() * kernel
}

/// Power through the face between `column` and `column + 1`, summed over all rows.
pub fn port_power(field: &FieldMap, eps: &PermittivityMap, column: usize, wavelength: f64) -> f64 {
    port_power_rows(field, eps, column, wavelength, 0..field.domain.rows)
}

/// Power through the face between `column` and `column + 1`, restricted to `rows`.
pub fn port_power_rows(
    field: &FieldMap,
    eps: &PermittivityMap,
    column: usize,
    wavelength: f64,
    rows: std::ops::Range<usize>,
) -> f64 {
    let d = field.domain;
    assert!(column + 1 < d.cols, "cross-section must leave room for the next column");
    let k0 = wavenumber(wavelength);
    let scale = 0.5 / (k0 * d.dl_z) * d.dl_x / POWER_LENGTH_UNIT;
    rows.map(|i| {
        let a = field.at(i, column);
        let b = field.at(i, column + 1);
        let ie = 0.5 * (eps.at(i, column).inv() + eps.at(i, column + 1).inv());
        (a.conj() * b).im * ie.re
    })
    .sum::<f64>()
        * scale
}

/// Forward and backward amplitudes `(a⁺, a⁻)` of `mode` in `field`, from the
/// projections at `column` and `column + 1`. `|a⁺|²` is the forward modal power.
pub fn modal_amplitudes(field: &FieldMap, eps: &PermittivityMap, mode: &PortMode, column: usize) -> (Complex64, Complex64) {
    let d = field.domain;
    let project = |col: usize| -> Complex64 {
        let mut num = Complex64::new(0.0, 0.0);
        let mut den = 0.0;
        for (k, row) in mode.rows.clone().enumerate() {
            let phi = mode.mode.profile[k];
            let w = phi / eps.at(row, col).re;
            num += field.at(row, col) * w;
            den += phi * w;
        }
        num / den
    };
    let (p0, p1) = (project(column), project(column + 1));
    let bdl = mode.mode.beta * d.dl_z;
    let e = |k: f64| Complex64::from_polar(1.0, k);
    let c = column as f64;
    // [e^{jβc} e^{-jβc}; e^{jβ(c+1)} e^{-jβ(c+1)}] [a+; a-] = [p0; p1]
    let (m00, m01, m10, m11) = (e(bdl * c), e(-bdl * c), e(bdl * (c + 1.0)), e(-bdl * (c + 1.0)));
    let det = m00 * m11 - m01 * m10;
    let a_plus = (p0 * m11 - m01 * p1) / det;
    let a_minus = (m00 * p1 - m10 * p0) / det;
    (a_plus, a_minus)
}
