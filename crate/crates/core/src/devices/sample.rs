use log::warn;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{DeviceError, DeviceKind, DeviceSpec, Feature, Rect, SILICON_EPS};

const UM: f64 = 1e-6;
const PLACEMENT_ATTEMPTS: usize = 10_000;

/// How source wavelengths are drawn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case")]
pub enum WavelengthLaw {
    Uniform { lo: f64, hi: f64 },
    /// `count` evenly spaced values over `[lo, hi]`, endpoints included.
    Grid { lo: f64, hi: f64, count: usize },
}

impl WavelengthLaw {
    pub fn bounds(&self) -> (f64, f64) {
        match *self {
            Self::Uniform { lo, hi } | Self::Grid { lo, hi, .. } => (lo, hi),
        }
    }

    pub fn values(&self) -> Option<Vec<f64>> {
        match *self {
            Self::Uniform { .. } => None,
            Self::Grid { lo, hi, count } if count <= 1 => Some(vec![0.5 * (lo + hi)]),
            Self::Grid { lo, hi, count } => Some((0..count).map(|k| lo + (hi - lo) * k as f64 / (count - 1) as f64).collect()),
        }
    }

    pub fn sample(&self, rng: &mut impl Rng) -> f64 {
        match (self, self.values()) {
            (Self::Uniform { lo, hi }, _) => rng.random_range(*lo..*hi),
            (_, Some(v)) => v[rng.random_range(0..v.len())],
            _ => unreachable!(),
        }
    }

    pub fn admits(&self, wavelength: f64) -> bool {
        let (lo, hi) = self.bounds();
        let inside = wavelength >= lo && wavelength <= hi;
        match self.values() {
            None => inside,
            Some(v) => v.iter().any(|g| (g - wavelength).abs() < 1e-15),
        }
    }
}

/// Sampling ranges for the device design variables (lengths in m).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeometryRanges {
    pub length: (f64, f64),
    pub width: (f64, f64),
    pub port_length: f64,
    pub port_width: (f64, f64),
    pub border: f64,
    pub pml: f64,
    /// Pad length as a fraction of body length.
    pub pad_length_ratio: (f64, f64),
    /// Pad width as a fraction of `width / n_ports`.
    pub pad_width_ratio: (f64, f64),
    pub pad_eps: (f64, f64),
    pub wavelength: WavelengthLaw,
    pub cavity_ratio: (f64, f64),
    /// Cavity `(length, width)` as fractions of body `(length, width)`.
    pub cavity_size: (f64, f64),
    /// Permittivities a cavity may take; one is drawn per cavity.
    pub cavity_eps: Vec<f64>,
    /// Common factor applied to every length after sampling; `(1, 1)` keeps
    /// the sampled sizes.
    #[serde(default = "unit_scale")]
    pub scale: (f64, f64),
}

fn unit_scale() -> (f64, f64) {
    (1.0, 1.0)
}

impl GeometryRanges {
    /// Full-size design space of the reference MMI datasets.
    pub fn reference() -> Self {
        Self {
            length: (20.0 * UM, 30.0 * UM),
            width: (5.5 * UM, 7.0 * UM),
            port_length: 3.0 * UM,
            port_width: (0.8 * UM, 1.1 * UM),
            border: 0.25 * UM,
            pml: 1.5 * UM,
            pad_length_ratio: (0.7, 0.9),
            pad_width_ratio: (0.4, 0.65),
            pad_eps: (11.9, 12.3),
            wavelength: WavelengthLaw::Uniform { lo: 1.53 * UM, hi: 1.565 * UM },
            cavity_ratio: (0.05, 0.1),
            cavity_size: (0.027, 0.114),
            cavity_eps: vec![2.07],
            scale: unit_scale(),
        }
    }

    /// Geometry shrunk so a 32×64 grid resolves about eight cells per
    /// silicon wavelength along `z`; wavelengths on a five-point grid.
    pub fn desk() -> Self {
        Self {
            length: (1.6 * UM, 2.0 * UM),
            width: (2.0 * UM, 2.4 * UM),
            port_length: 0.45 * UM,
            port_width: (0.3 * UM, 0.4 * UM),
            border: 0.1 * UM,
            pml: 0.35 * UM,
            wavelength: WavelengthLaw::Grid { lo: 1.53 * UM, hi: 1.565 * UM, count: 5 },
            ..Self::reference()
        }
    }
}

impl Default for GeometryRanges {
    fn default() -> Self {
        Self::reference()
    }
}

/// Samples a device from the reference ranges.
pub fn sample_device(kind: DeviceKind, n_ports: usize, seed: u64) -> Result<DeviceSpec, DeviceError> {
    sample_device_with(&GeometryRanges::reference(), kind, n_ports, seed)
}

pub fn sample_device_with(
    ranges: &GeometryRanges,
    kind: DeviceKind,
    n_ports: usize,
    seed: u64,
) -> Result<DeviceSpec, DeviceError> {
    if !(2..=5).contains(&n_ports) {
        return Err(DeviceError::UnsupportedPorts(n_ports));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let uniform = |rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)| if hi > lo { rng.random_range(lo..hi) } else { lo };
    let length = uniform(&mut rng, ranges.length);
    let width = uniform(&mut rng, ranges.width);
    let port_width = uniform(&mut rng, ranges.port_width);
    let wavelength = ranges.wavelength.sample(&mut rng);
    let mut spec = DeviceSpec {
        kind,
        n_ports,
        length,
        width,
        port_length: ranges.port_length,
        port_width,
        border_width: ranges.border,
        pml_width: ranges.pml,
        port_centers: Vec::new(),
        pads: Vec::new(),
        cavities: Vec::new(),
        cavity_ratio: None,
        body_eps: SILICON_EPS,
        wavelength,
        seed,
        scale: 1.0,
    };
    let body = spec.body();
    let pitch = width / n_ports as f64;
    spec.port_centers = (0..n_ports).map(|k| body.x_range().0 + (k as f64 + 0.5) * pitch).collect();
    match kind {
        DeviceKind::TunableMmi => {
            for k in 0..n_ports {
                let pad_length = uniform(&mut rng, ranges.pad_length_ratio) * length;
                let pad_width = uniform(&mut rng, ranges.pad_width_ratio) * pitch;
                let eps_r = uniform(&mut rng, ranges.pad_eps);
                let rect = Rect { center_x: spec.port_centers[k], center_z: body.center_z, width: pad_width, length: pad_length };
                spec.pads.push(Feature { rect, eps_r });
            }
        }
        DeviceKind::EtchedMmi => {
            let ratio = uniform(&mut rng, ranges.cavity_ratio);
            let (fz, fx) = ranges.cavity_size;
            let (cl, cw) = (fz * length, fx * width);
            let target = (ratio / (fz * fx)).round() as usize;
            let (bx, bz) = (body.x_range(), body.z_range());
            let mut attempts = 0;
            while spec.cavities.len() < target && attempts < PLACEMENT_ATTEMPTS {
                attempts += 1;
                let rect = Rect {
                    center_x: rng.random_range(bx.0 + cw / 2.0..bx.1 - cw / 2.0),
                    center_z: rng.random_range(bz.0 + cl / 2.0..bz.1 - cl / 2.0),
                    width: cw,
                    length: cl,
                };
                if spec.cavities.iter().any(|c| c.rect.overlaps(&rect)) {
                    continue;
                }
                let eps_r = ranges.cavity_eps[rng.random_range(0..ranges.cavity_eps.len())];
                spec.cavities.push(Feature { rect, eps_r });
            }
            if spec.cavities.len() < target {
                warn!("seed {seed}: placed {} of {target} cavities", spec.cavities.len());
            }
            spec.cavity_ratio = Some(ratio);
        }
    }
    let scale = uniform(&mut rng, ranges.scale);
    if scale != 1.0 {
        spec = spec.rescaled(scale);
    }
    Ok(spec)
}
