use std::time::Instant;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{field_nmae, Result, WorkbenchError};
use crate::devices::{rasterize, stamp_cells, DeviceSpec};
use crate::encoding::{encode_with, masked_source, tensor_field, ChannelSet, ChannelStats};
use crate::model::NeurOLight;
use crate::solver::{port_power_rows, FieldMap, PermittivityMap, Simulation, SourceSpec};
use crate::tensor::Tensor;

/// `lo, lo + step, …` up to and including `hi` (with a small tolerance).
pub fn sweep_wavelengths(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    if !(step > 0.0) || hi < lo {
        return vec![];
    }
    let n = ((hi - lo) / step + 1e-9).floor() as usize + 1;
    (0..n).map(|k| lo + k as f64 * step).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub wavelength: f64,
    /// Predicted power fraction leaving through each output lane.
    pub transmissions: Vec<f64>,
    /// Solver transmissions and prediction N-MAE where cross-checked.
    pub solver_transmissions: Option<Vec<f64>>,
    pub nmae: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
    pub fields: Vec<FieldMap>,
    /// Forward passes issued for the whole sweep.
    pub inference_calls: usize,
    pub seconds: f64,
}

impl SweepReport {
    pub fn to_csv(&self) -> String {
        let ports = self.rows.first().map_or(0, |r| r.transmissions.len());
        let mut out = String::from("wavelength_um");
        for o in 0..ports {
            out += &format!(",t{o}");
        }
        for o in 0..ports {
            out += &format!(",solver_t{o}");
        }
        out += ",nmae\n";
        for r in &self.rows {
            out += &format!("{:.6}", r.wavelength * 1e6);
            for t in &r.transmissions {
                out += &format!(",{t:.6}");
            }
            for o in 0..ports {
                match &r.solver_transmissions {
                    Some(s) => out += &format!(",{:.6}", s[o]),
                    None => out.push(','),
                }
            }
            match r.nmae {
                Some(e) => out += &format!(",{e}\n"),
                None => out += ",\n",
            }
        }
        out
    }
}

/// Power through each output lane near the right PML, over `injected`.
pub fn lane_transmissions(field: &FieldMap, eps: &PermittivityMap, spec: &DeviceSpec, wavelength: f64, injected: f64) -> Vec<f64> {
    let d = field.domain;
    let col = d.cols - d.pml_z - 2;
    (0..spec.n_ports)
        .map(|o| {
            let (lo, hi) = spec.lane(o);
            port_power_rows(field, eps, col, wavelength, stamp_cells(lo, hi, d.dl_x, d.rows)) / injected
        })
        .collect()
}

fn sources_at(spec: &DeviceSpec, coeffs: &[Complex64]) -> Vec<SourceSpec> {
    spec.sources().into_iter().zip(coeffs).filter(|(_, g)| g.norm() > 0.0).map(|(s, g)| s.with_amplitude(*g)).collect()
}

/// Predicts `spec` at every wavelength in one batched forward pass and reads
/// the output-lane transmissions. Rows listed in `cross_check` are also
/// solved and compared.
#[allow(clippy::too_many_arguments)]
pub fn spectrum_sweep(
    model: &NeurOLight<f32>,
    stats: &ChannelStats,
    set: ChannelSet,
    spec: &DeviceSpec,
    grid: (usize, usize),
    coeffs: &[Complex64],
    wavelengths: &[f64],
    cross_check: &[usize],
) -> Result<SweepReport> {
    if wavelengths.is_empty() {
        return Err(WorkbenchError::InvalidConfig("empty wavelength sweep".into()));
    }
    if coeffs.len() != spec.n_ports {
        return Err(WorkbenchError::InvalidConfig(format!("{} coefficients for {} ports", coeffs.len(), spec.n_ports)));
    }
    let injected: f64 = coeffs.iter().map(Complex64::norm_sqr).sum();
    let mut specs = Vec::with_capacity(wavelengths.len());
    let mut inputs = Vec::with_capacity(wavelengths.len());
    for &wl in wavelengths {
        let at = DeviceSpec { wavelength: wl, ..spec.clone() };
        let (_, eps) = rasterize(&at, grid.0, grid.1)?;
        let src = masked_source(&at, &eps, &sources_at(&at, coeffs))?;
        inputs.push(stats.apply(&encode_with(set, &eps, wl, &src, 0)?)?);
        specs.push((at, eps));
    }
    let started = Instant::now();
    let mut shape = vec![inputs.len()];
    shape.extend_from_slice(inputs[0].shape());
    let batch = Tensor::new(&shape, inputs.iter().flat_map(|t| t.data().iter().copied()).collect())?;
    let out = model.predict(&batch)?;
    let seconds = started.elapsed().as_secs_f64();

    let per = out.len() / wavelengths.len();
    let scale = stats.target_scale as f32;
    let mut rows = Vec::with_capacity(wavelengths.len());
    let mut fields = Vec::with_capacity(wavelengths.len());
    for (k, ((at, eps), chunk)) in specs.iter().zip(out.data().chunks_exact(per)).enumerate() {
        let scaled: Vec<f32> = chunk.iter().map(|v| v * scale).collect();
        let field = tensor_field(&scaled, eps.domain);
        let transmissions = lane_transmissions(&field, eps, at, at.wavelength, injected);
        let (solver_transmissions, nmae) = if cross_check.contains(&k) {
            let truth = Simulation::new(eps, at.wavelength)?.solve(&sources_at(at, coeffs))?.field;
            (Some(lane_transmissions(&truth, eps, at, at.wavelength, injected)), Some(field_nmae(&field, &truth)))
        } else {
            (None, None)
        };
        rows.push(SweepRow { wavelength: at.wavelength, transmissions, solver_transmissions, nmae });
        fields.push(field);
    }
    Ok(SweepReport { rows, fields, inference_calls: 1, seconds })
}
