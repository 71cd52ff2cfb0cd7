//! Random parametric MMI devices, rasterization, and dataset persistence.

mod dataset;
mod raster;
mod sample;

pub use dataset::{
    generate_dataset, record_seed, split_dataset, Dataset, DatasetConfig, DatasetManifest, DatasetRecord, RecordEntry, SkippedRecord,
    SCHEMA_VERSION,
};
pub use raster::{rasterize, stamp_cells};
pub use sample::{sample_device, sample_device_with, GeometryRanges, WavelengthLaw};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::nold::NoldError;
use crate::solver::{SolverError, SourceSpec};

/// Cladding relative permittivity (SiO₂).
pub const CLADDING_EPS: f64 = 2.07;
/// Device body relative permittivity (Si).
pub const SILICON_EPS: f64 = 12.11;

#[derive(Debug, Error)]
pub enum DeviceError {
    #[error("unsupported port count {0}, expected 2..=5")]
    UnsupportedPorts(usize),
    #[error("device invariant violated: {0}")]
    Invariant(String),
    #[error("invalid split fractions {0:?}")]
    InvalidFractions([f64; 3]),
    #[error("dataset manifest: {0}")]
    Manifest(String),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Container(#[from] NoldError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeviceKind {
    TunableMmi,
    EtchedMmi,
}

/// Axis-aligned rectangle in device coordinates (m): `x` across, `z` along propagation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub center_x: f64,
    pub center_z: f64,
    /// Extent along `x`.
    pub width: f64,
    /// Extent along `z`.
    pub length: f64,
}

impl Rect {
    pub fn x_range(&self) -> (f64, f64) {
        (self.center_x - self.width / 2.0, self.center_x + self.width / 2.0)
    }

    pub fn z_range(&self) -> (f64, f64) {
        (self.center_z - self.length / 2.0, self.center_z + self.length / 2.0)
    }

    pub fn area(&self) -> f64 {
        self.width * self.length
    }

    pub fn contains(&self, other: &Rect, tol: f64) -> bool {
        let (ax, bx) = (self.x_range(), other.x_range());
        let (az, bz) = (self.z_range(), other.z_range());
        bx.0 >= ax.0 - tol && bx.1 <= ax.1 + tol && bz.0 >= az.0 - tol && bz.1 <= az.1 + tol
    }

    pub fn overlaps(&self, other: &Rect) -> bool {
        let (ax, bx) = (self.x_range(), other.x_range());
        let (az, bz) = (self.z_range(), other.z_range());
        ax.0 < bx.1 && bx.0 < ax.1 && az.0 < bz.1 && bz.0 < az.1
    }
}

/// Rectangular feature with its own permittivity (control pad or etched cavity).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Feature {
    pub rect: Rect,
    pub eps_r: f64,
}

/// Parametric |J|×|J| MMI. All lengths in meters.
///
/// The solving region spans `2·pml + 2·border + width` across and
/// `2·pml + 2·port_length + length` along `z`; input and output waveguides run
/// from the body through the PML to the domain edge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceSpec {
    pub kind: DeviceKind,
    pub n_ports: usize,
    pub length: f64,
    pub width: f64,
    pub port_length: f64,
    pub port_width: f64,
    pub border_width: f64,
    pub pml_width: f64,
    /// Port centres along `x`, shared by inputs and outputs.
    pub port_centers: Vec<f64>,
    pub pads: Vec<Feature>,
    pub cavities: Vec<Feature>,
    pub cavity_ratio: Option<f64>,
    pub body_eps: f64,
    pub wavelength: f64,
    pub seed: u64,
    /// Factor every length was multiplied by after sampling.
    #[serde(default = "unit_scale")]
    pub scale: f64,
}

fn unit_scale() -> f64 {
    1.0
}

impl DeviceSpec {
    pub fn extent_x(&self) -> f64 {
        2.0 * (self.pml_width + self.border_width) + self.width
    }

    pub fn extent_z(&self) -> f64 {
        2.0 * (self.pml_width + self.port_length) + self.length
    }

    pub fn body(&self) -> Rect {
        Rect {
            center_x: self.extent_x() / 2.0,
            center_z: self.extent_z() / 2.0,
            width: self.width,
            length: self.length,
        }
    }

    /// Transverse band `[lo, hi)` of port `k`'s lane inside the body.
    pub fn lane(&self, k: usize) -> (f64, f64) {
        let x0 = self.pml_width + self.border_width;
        let pitch = self.width / self.n_ports as f64;
        (x0 + k as f64 * pitch, x0 + (k + 1) as f64 * pitch)
    }

    /// Unit-power source on input port `k`.
    pub fn source(&self, k: usize) -> SourceSpec {
        SourceSpec {
            port_index: k,
            center_x: self.port_centers[k],
            width: self.port_width,
            lane: self.lane(k),
            wavelength: self.wavelength,
            amplitude: num_complex::Complex64::new(1.0, 0.0),
            side: Default::default(),
        }
    }

    pub fn sources(&self) -> Vec<SourceSpec> {
        (0..self.n_ports).map(|k| self.source(k)).collect()
    }

    /// Copy with every length and position multiplied by `factor`.
    pub fn rescaled(&self, factor: f64) -> Self {
        let rect = |r: Rect| Rect {
            center_x: r.center_x * factor,
            center_z: r.center_z * factor,
            width: r.width * factor,
            length: r.length * factor,
        };
        let feature = |f: &Feature| Feature { rect: rect(f.rect), eps_r: f.eps_r };
        Self {
            length: self.length * factor,
            width: self.width * factor,
            port_length: self.port_length * factor,
            port_width: self.port_width * factor,
            border_width: self.border_width * factor,
            pml_width: self.pml_width * factor,
            port_centers: self.port_centers.iter().map(|c| c * factor).collect(),
            pads: self.pads.iter().map(feature).collect(),
            cavities: self.cavities.iter().map(feature).collect(),
            scale: self.scale * factor,
            ..self.clone()
        }
    }

    /// Checks the sampling invariants against `ranges`.
    pub fn check(&self, ranges: &GeometryRanges) -> Result<(), DeviceError> {
        if self.scale == 1.0 {
            return self.check_unscaled(ranges);
        }
        let (lo, hi) = ranges.scale;
        if !(self.scale >= lo * (1.0 - 1e-12) && self.scale <= hi * (1.0 + 1e-12)) {
            return Err(DeviceError::Invariant(format!("scale {} outside range", self.scale)));
        }
        self.rescaled(1.0 / self.scale).check_unscaled(ranges)
    }

    fn check_unscaled(&self, ranges: &GeometryRanges) -> Result<(), DeviceError> {
        let fail = |msg: String| Err(DeviceError::Invariant(msg));
        let within = |v: f64, (lo, hi): (f64, f64)| v >= lo * (1.0 - 1e-12) && v <= hi * (1.0 + 1e-12);
        let same = |a: f64, b: f64| (a - b).abs() <= 1e-12 * b.abs();
        if !(2..=5).contains(&self.n_ports) {
            return Err(DeviceError::UnsupportedPorts(self.n_ports));
        }
        if !within(self.length, ranges.length) || !within(self.width, ranges.width) {
            return fail(format!("body {}×{} outside ranges", self.length, self.width));
        }
        if !within(self.port_width, ranges.port_width) {
            return fail(format!("port width {} outside range", self.port_width));
        }
        if !same(self.port_length, ranges.port_length) || !same(self.border_width, ranges.border) || !same(self.pml_width, ranges.pml) {
            return fail("fixed geometry values differ from the ranges".into());
        }
        if !ranges.wavelength.admits(self.wavelength) {
            return fail(format!("wavelength {} outside law", self.wavelength));
        }
        let body = self.body();
        let tol = 1e-12;
        let pitch = self.width / self.n_ports as f64;
        if self.port_centers.len() != self.n_ports {
            return fail("port count mismatch".into());
        }
        for (k, c) in self.port_centers.iter().enumerate() {
            let expected = body.x_range().0 + (k as f64 + 0.5) * pitch;
            if (c - expected).abs() > 1e-12 {
                return fail(format!("port {k} centre not equally spaced"));
            }
        }
        if self.port_width > pitch * (1.0 + 1e-12) {
            return fail("ports overlap".into());
        }
        match self.kind {
            DeviceKind::TunableMmi => {
                if self.pads.len() != self.n_ports || !self.cavities.is_empty() || self.cavity_ratio.is_some() {
                    return fail("tunable MMI needs one pad per port and no cavities".into());
                }
                for (k, pad) in self.pads.iter().enumerate() {
                    let r = pad.rect;
                    if !within(r.length / self.length, ranges.pad_length_ratio)
                        || !within(r.width / pitch, ranges.pad_width_ratio)
                        || !within(pad.eps_r, ranges.pad_eps)
                    {
                        return fail(format!("pad {k} outside ranges"));
                    }
                    if !body.contains(&r, tol) {
                        return fail(format!("pad {k} leaves the body"));
                    }
                }
                for (a, pa) in self.pads.iter().enumerate() {
                    for pb in &self.pads[a + 1..] {
                        if pa.rect.overlaps(&pb.rect) {
                            return fail("pads overlap".into());
                        }
                    }
                }
            }
            DeviceKind::EtchedMmi => {
                let Some(ratio) = self.cavity_ratio else { return fail("etched MMI without cavity ratio".into()) };
                if !within(ratio, ranges.cavity_ratio) || !self.pads.is_empty() {
                    return fail("cavity ratio outside range or pads present".into());
                }
                let (fz, fx) = ranges.cavity_size;
                for (k, cav) in self.cavities.iter().enumerate() {
                    let r = cav.rect;
                    if !same(r.length, fz * self.length) || !same(r.width, fx * self.width) {
                        return fail(format!("cavity {k} has the wrong size"));
                    }
                    if !ranges.cavity_eps.contains(&cav.eps_r) {
                        return fail(format!("cavity {k} permittivity {}", cav.eps_r));
                    }
                    if !body.contains(&r, tol) {
                        return fail(format!("cavity {k} leaves the body"));
                    }
                }
            }
        }
        Ok(())
    }
}
