use num_complex::Complex64;

use super::{wavenumber, Result, SimDomain, SolverError};

/// Polynomial grading order of the PML conductivity.
pub const PML_ORDER: f64 = 3.0;
/// Target normal-incidence reflection of the PML slab.
pub const PML_REFLECTION: f64 = 1e-4;

/// Complex coordinate-stretch factors `s_x`, `s_z`.
///
/// Values are sampled at cell centres (outer derivative) and at cell faces
/// (inner derivative); face `k` sits between cells `k-1` and `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct StretchProfile {
    pub s_x: Vec<Complex64>,
    pub s_z: Vec<Complex64>,
    pub s_x_face: Vec<Complex64>,
    pub s_z_face: Vec<Complex64>,
}

impl StretchProfile {
    pub fn new(domain: &SimDomain, wavelength: f64) -> Result<Self> {
        if wavelength <= 0.0 {
            return Err(SolverError::NonPositiveWavelength(wavelength));
        }
        let k0 = wavenumber(wavelength);
        let (s_x, s_x_face) = axis_profile(domain.rows, domain.pml_x, domain.dl_x, k0);
        let (s_z, s_z_face) = axis_profile(domain.cols, domain.pml_z, domain.dl_z, k0);
        Ok(Self { s_x, s_z, s_x_face, s_z_face })
    }

    /// Unit stretching everywhere (no absorption), for tests and closed cavities.
    pub fn identity(domain: &SimDomain) -> Self {
        let one = Complex64::new(1.0, 0.0);
        Self {
            s_x: vec![one; domain.rows],
            s_z: vec![one; domain.cols],
            s_x_face: vec![one; domain.rows + 1],
            s_z_face: vec![one; domain.cols + 1],
        }
    }

    pub fn matches(&self, domain: &SimDomain) -> bool {
        self.s_x.len() == domain.rows
            && self.s_z.len() == domain.cols
            && self.s_x_face.len() == domain.rows + 1
            && self.s_z_face.len() == domain.cols + 1
    }
}

/// Centre and face stretch factors along one axis of `n` cells.
fn axis_profile(n: usize, pml: usize, dl: f64, k0: f64) -> (Vec<Complex64>, Vec<Complex64>) {
    let thickness = pml as f64 * dl;
    // s = 1 + j σ/(ω ε₀) with σ_max = -(m+1) ln R / (2 η₀ d)
    let a_max = (PML_ORDER + 1.0) * (-PML_REFLECTION.ln()) / (2.0 * k0 * thickness);
    let stretch = |u: f64| {
        let lo = pml as f64;
        let hi = (n - pml) as f64;
        let depth = if u < lo {
            lo - u
        } else if u > hi {
            u - hi
        } else {
            0.0
        };
        Complex64::new(1.0, a_max * (depth / pml as f64).powf(PML_ORDER))
    };
    let centers = (0..n).map(|i| stretch(i as f64 + 0.5)).collect();
    let faces = (0..=n).map(|i| stretch(i as f64)).collect();
    (centers, faces)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_inside_and_monotone_toward_edges() {
        let domain = SimDomain::from_steps(32, 64, 0.1e-6, 0.1e-6, 5, 6).unwrap();
        let p = StretchProfile::new(&domain, 1.55e-6).unwrap();
        for (s, pml) in [(&p.s_x, domain.pml_x), (&p.s_z, domain.pml_z)] {
            let n = s.len();
            for v in &s[pml..n - pml] {
                assert_eq!(*v, Complex64::new(1.0, 0.0));
            }
            for i in 0..pml {
                assert!(s[i].im >= s[i + 1].im);
                assert!(s[n - 1 - i].im >= s[n - 2 - i].im);
                assert!(s[i].im > 0.0);
            }
        }
    }

    #[test]
    fn rejects_bad_wavelength() {
        let domain = SimDomain::from_steps(32, 64, 0.1e-6, 0.1e-6, 5, 6).unwrap();
        assert!(StretchProfile::new(&domain, 0.0).is_err());
    }
}
