//! Joint PDE representation: permittivity, masked source, and wave priors
//! packed into real input channels.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::devices::{stamp_cells, DeviceSpec};
use crate::solver::{FieldMap, PermittivityMap, PortMode, SimDomain, SolverError, SourceSpec};
use crate::tensor::Tensor;

#[derive(Debug, Error)]
pub enum EncodingError {
    #[error("negative permittivity {value} at ({row}, {col})")]
    NegativePermittivity { row: usize, col: usize, value: f64 },
    #[error("wavelength and grid steps must be positive")]
    NonPositiveScale,
    #[error("shape mismatch: expected {expected:?}, got {got:?}")]
    ShapeMismatch { expected: Vec<usize>, got: Vec<usize> },
    #[error("standardization statistics cover {stats} channels, observation has {channels}")]
    StatsMismatch { stats: usize, channels: usize },
    #[error(transparent)]
    Solver(#[from] SolverError),
}

pub type Result<T> = std::result::Result<T, EncodingError>;

/// Unit-modulus phase patterns `P_x`, `P_z` with the local material wavelength.
#[derive(Debug, Clone, PartialEq)]
pub struct WavePrior {
    pub rows: usize,
    pub cols: usize,
    pub p_x: Vec<Complex64>,
    pub p_z: Vec<Complex64>,
}

/// `P_z[x,z] = exp(j·2π√ε[x,z]/λ · z·Δz)`, `P_x[x,z] = exp(j·2π√ε[x,z]/λ · x·Δx)`,
/// with pointwise `√ε` taken on the real part.
pub fn wave_prior(eps: &PermittivityMap, wavelength: f64) -> Result<WavePrior> {
    let d = eps.domain;
    if !(wavelength > 0.0 && d.dl_x > 0.0 && d.dl_z > 0.0) {
        return Err(EncodingError::NonPositiveScale);
    }
    let mut p_x = Vec::with_capacity(d.len());
    let mut p_z = Vec::with_capacity(d.len());
    for row in 0..d.rows {
        for col in 0..d.cols {
            let e = eps.at(row, col).re;
            if e < 0.0 {
                return Err(EncodingError::NegativePermittivity { row, col, value: e });
            }
            let k = 2.0 * std::f64::consts::PI * e.sqrt() / wavelength;
            p_x.push(Complex64::cis(k * row as f64 * d.dl_x));
            p_z.push(Complex64::cis(k * col as f64 * d.dl_z));
        }
    }
    Ok(WavePrior { rows: d.rows, cols: d.cols, p_x, p_z })
}

/// Analytic source field inside the input waveguides, zero elsewhere.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskedSource {
    pub field: FieldMap,
    /// `true` on cells of an excited input-waveguide region.
    pub mask: Vec<bool>,
}

/// First column of the device body, where input waveguides end.
pub fn body_start_column(spec: &DeviceSpec, domain: &SimDomain) -> usize {
    let (z0, z1) = spec.body().z_range();
    stamp_cells(z0, z1, domain.dl_z, domain.cols).start
}

/// Builds `H^J = Σ amplitude · φ(x) · e^{jβ z Δz}` over each source's lane,
/// from the injection column up to the body.
pub fn masked_source(spec: &DeviceSpec, eps: &PermittivityMap, sources: &[SourceSpec]) -> Result<MaskedSource> {
    let d = eps.domain;
    let zs = SourceSpec::source_column(&d);
    let z_end = body_start_column(spec, &d).max(zs);
    let mut field = FieldMap::zeros(d);
    let mut mask = vec![false; d.len()];
    for src in sources {
        let port = PortMode::solve(eps, src, zs)?;
        for row in port.rows.clone() {
            for col in zs..z_end {
                let at = d.index(row, col);
                mask[at] = true;
                if src.amplitude != Complex64::new(0.0, 0.0) {
                    field.values[at] += src.amplitude * port.incident(row, col);
                }
            }
        }
    }
    Ok(MaskedSource { field, mask })
}

/// Which input planes the encoder emits. Every set starts with
/// `(Re, Im)` of `ε` then of the masked source.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ChannelSet {
    /// Permittivity and source only.
    EpsOnly,
    /// Plus constant planes of `λ`, `Δx`, `Δz`.
    EpsScalars,
    /// Plus both wave priors.
    #[default]
    Full,
    /// Wave priors and the constant planes.
    FullScalars,
}

impl ChannelSet {
    pub const ALL: [ChannelSet; 4] = [Self::EpsOnly, Self::EpsScalars, Self::Full, Self::FullScalars];

    pub fn channels(self) -> usize {
        match self {
            Self::EpsOnly => 4,
            Self::EpsScalars => 7,
            Self::Full => 8,
            Self::FullScalars => 11,
        }
    }

    /// Channels that carry the light source; standardized by scale only so
    /// the input stays linear in the source.
    pub fn source_channels(self) -> std::ops::Range<usize> {
        2..4
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationMeta {
    pub wavelength: f64,
    pub dl_x: f64,
    pub dl_z: f64,
    pub device_id: usize,
}

/// Encoded model input `[channels, rows, cols]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PdeObservation {
    pub channels: Tensor<f32>,
    pub set: ChannelSet,
    pub meta: ObservationMeta,
}

fn push_complex(out: &mut Vec<f32>, plane: &[Complex64]) {
    let start = out.len();
    out.resize(start + 2 * plane.len(), 0.0);
    let (re, im) = out[start..].split_at_mut(plane.len());
    for (k, v) in plane.iter().enumerate() {
        re[k] = v.re as f32;
        im[k] = v.im as f32;
    }
}

/// Full eight-channel encoding: `(Re, Im)` of `ε`, `H^J`, `P_x`, `P_z` in that order.
pub fn encode(eps: &PermittivityMap, wavelength: f64, source: &MaskedSource, device_id: usize) -> Result<PdeObservation> {
    encode_with(ChannelSet::Full, eps, wavelength, source, device_id)
}

pub fn encode_with(
    set: ChannelSet,
    eps: &PermittivityMap,
    wavelength: f64,
    source: &MaskedSource,
    device_id: usize,
) -> Result<PdeObservation> {
    let d = eps.domain;
    if source.field.domain.rows != d.rows || source.field.domain.cols != d.cols {
        return Err(EncodingError::ShapeMismatch {
            expected: vec![d.rows, d.cols],
            got: vec![source.field.domain.rows, source.field.domain.cols],
        });
    }
    let plane = d.len();
    let mut data = Vec::with_capacity(set.channels() * plane);
    push_complex(&mut data, &eps.eps);
    push_complex(&mut data, &source.field.values);
    if matches!(set, ChannelSet::Full | ChannelSet::FullScalars) {
        let prior = wave_prior(eps, wavelength)?;
        push_complex(&mut data, &prior.p_x);
        push_complex(&mut data, &prior.p_z);
    }
    if matches!(set, ChannelSet::EpsScalars | ChannelSet::FullScalars) {
        for v in [wavelength, d.dl_x, d.dl_z] {
            data.extend(std::iter::repeat_n(v as f32, plane));
        }
    }
    let channels = Tensor::new(&[set.channels(), d.rows, d.cols], data).expect("channel count matches the set");
    Ok(PdeObservation {
        channels,
        set,
        meta: ObservationMeta { wavelength, dl_x: d.dl_x, dl_z: d.dl_z, device_id },
    })
}

/// Complex planes recovered from a full, unstandardized observation.
#[derive(Debug, Clone, PartialEq)]
pub struct DecodedPlanes {
    pub eps: Vec<Complex64>,
    pub source: Vec<Complex64>,
    pub p_x: Vec<Complex64>,
    pub p_z: Vec<Complex64>,
}

pub fn decode(obs: &PdeObservation) -> Result<DecodedPlanes> {
    if obs.set != ChannelSet::Full {
        return Err(EncodingError::ShapeMismatch { expected: vec![8], got: vec![obs.set.channels()] });
    }
    let s = obs.channels.shape();
    let plane = s[1] * s[2];
    let data = obs.channels.data();
    let complex = |k: usize| -> Vec<Complex64> {
        let (re, im) = (&data[2 * k * plane..(2 * k + 1) * plane], &data[(2 * k + 1) * plane..(2 * k + 2) * plane]);
        re.iter().zip(im).map(|(a, b)| Complex64::new(*a as f64, *b as f64)).collect()
    };
    Ok(DecodedPlanes { eps: complex(0), source: complex(1), p_x: complex(2), p_z: complex(3) })
}

/// Per-channel standardization frozen from a training set, plus the global
/// scale applied to target fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelStats {
    pub set: ChannelSet,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub target_scale: f64,
}

impl ChannelStats {
    pub fn identity(set: ChannelSet) -> Self {
        Self { set, mean: vec![0.0; set.channels()], std: vec![1.0; set.channels()], target_scale: 1.0 }
    }

    /// Fits statistics over `observations`; `targets` are the matching
    /// `[2, rows, cols]` field tensors.
    pub fn fit<'a>(
        set: ChannelSet,
        observations: impl IntoIterator<Item = &'a PdeObservation>,
        targets: impl IntoIterator<Item = &'a Tensor<f32>>,
    ) -> Self {
        let c = set.channels();
        let mut sum = vec![0.0f64; c];
        let mut sq = vec![0.0f64; c];
        let mut count = 0usize;
        for obs in observations {
            let plane = obs.channels.len() / c;
            for (k, chunk) in obs.channels.data().chunks_exact(plane).enumerate() {
                for v in chunk {
                    sum[k] += *v as f64;
                    sq[k] += (*v as f64) * (*v as f64);
                }
            }
            count += plane;
        }
        let n = count.max(1) as f64;
        let src = set.source_channels();
        let mut mean = vec![0.0; c];
        let mut std = vec![1.0; c];
        for k in 0..c {
            let m = sum[k] / n;
            if src.contains(&k) {
                let rms = (sq[k] / n).sqrt();
                std[k] = if rms > 1e-12 { rms } else { 1.0 };
            } else {
                let var = (sq[k] / n - m * m).max(0.0);
                mean[k] = m;
                std[k] = if var.sqrt() > 1e-12 * m.abs().max(1e-30) { var.sqrt() } else { 1.0 };
            }
        }
        let (mut tsq, mut tn) = (0.0f64, 0usize);
        for t in targets {
            tsq += t.data().iter().map(|v| (*v as f64) * (*v as f64)).sum::<f64>();
            tn += t.len();
        }
        let target_scale = if tn > 0 && tsq > 0.0 { (tsq / tn as f64).sqrt() } else { 1.0 };
        Self { set, mean, std, target_scale }
    }

    pub fn apply(&self, obs: &PdeObservation) -> Result<Tensor<f32>> {
        let c = obs.set.channels();
        if obs.set != self.set || self.mean.len() != c {
            return Err(EncodingError::StatsMismatch { stats: self.mean.len(), channels: c });
        }
        let mut out = obs.channels.clone();
        let plane = out.len() / c;
        for (k, chunk) in out.data_mut().chunks_exact_mut(plane).enumerate() {
            let (m, s) = (self.mean[k] as f32, self.std[k] as f32);
            for v in chunk {
                *v = (*v - m) / s;
            }
        }
        Ok(out)
    }
}

/// `[2, rows, cols]` real tensor of `(Re, Im)` of a field.
pub fn field_tensor(field: &FieldMap) -> Tensor<f32> {
    let mut data = Vec::with_capacity(2 * field.values.len());
    push_complex(&mut data, &field.values);
    Tensor::new(&[2, field.domain.rows, field.domain.cols], data).expect("two planes")
}

/// Inverse of [`field_tensor`] onto `domain`.
pub fn tensor_field(t: &[f32], domain: SimDomain) -> FieldMap {
    let plane = domain.len();
    let values = (0..plane).map(|k| Complex64::new(t[k] as f64, t[plane + k] as f64)).collect();
    FieldMap { domain, values }
}
