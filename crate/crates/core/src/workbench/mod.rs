//! Training with superposition mixup, single- and multi-source inference,
//! spectrum sweeps, device adaptation and field rendering.

mod adapt;
pub mod config;
mod eval;
mod mixup;
mod optim;
mod plot;
mod sweep;
mod train;

pub use adapt::{adapt, AdaptOutcome};
pub use config::WorkbenchConfig;
pub use eval::{
    evaluate, field_nmae, infer, multi_source_coefficients, single_port_report, EvalReport, Inference, InferenceMode, RecordEval,
};
pub use mixup::{apply_mixup, MixupMatrix};
pub use optim::{AdamW, Schedule};
pub use plot::{plot_comparison, plot_field, render_comparison, render_field, FieldView};
pub use sweep::{lane_transmissions, spectrum_sweep, sweep_wavelengths, SweepReport, SweepRow};
pub use train::{fit_stats, train, validation_nmae, EpochLog, Freeze, TrainConfig, TrainOutcome};

use std::path::PathBuf;

use num_complex::Complex64;
use thiserror::Error;

use crate::devices::{split_dataset, Dataset, DatasetRecord, DeviceError};
use crate::encoding::{encode_with, field_tensor, masked_source, ChannelSet, ChannelStats, EncodingError, MaskedSource};
use crate::model::ModelError;
use crate::nold::NoldError;
use crate::solver::{FieldMap, SolverError};
use crate::tensor::{Tensor, TensorError};

#[derive(Debug, Error)]
pub enum WorkbenchError {
    #[error("invalid mixup matrix: {0}")]
    InvalidMixup(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("{0} set is empty")]
    EmptyDataset(&'static str),
    #[error("non-finite loss at epoch {epoch}, step {step}; batch dumped to {dump:?}")]
    NonFiniteLoss { epoch: usize, step: usize, dump: Option<PathBuf> },
    #[error(transparent)]
    Device(#[from] DeviceError),
    #[error(transparent)]
    Encoding(#[from] EncodingError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Container(#[from] NoldError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Toml(#[from] toml::de::Error),
    #[error(transparent)]
    Image(#[from] image::ImageError),
}

pub type Result<T> = std::result::Result<T, WorkbenchError>;

/// A dataset record with the unit masked source of every port precomputed.
#[derive(Debug, Clone)]
pub struct PreparedRecord {
    pub record: DatasetRecord,
    pub singles: Vec<MaskedSource>,
}

impl PreparedRecord {
    pub fn new(record: DatasetRecord) -> Result<Self> {
        let singles = record
            .fields
            .iter()
            .map(|(src, _)| masked_source(&record.spec, &record.eps, std::slice::from_ref(src)))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        Ok(Self { record, singles })
    }

    pub fn ports(&self) -> usize {
        self.singles.len()
    }

    pub fn wavelength(&self) -> f64 {
        self.record.spec.wavelength
    }

    /// `Σ γ_i H^{J_i}`; the mask covers every port with a nonzero weight.
    pub fn source(&self, coeffs: &[Complex64]) -> MaskedSource {
        let d = self.record.domain;
        let mut field = FieldMap::zeros(d);
        let mut mask = vec![false; d.len()];
        for (single, g) in self.singles.iter().zip(coeffs) {
            if *g == Complex64::new(0.0, 0.0) {
                continue;
            }
            field.add_scaled(&single.field, *g);
            for (m, s) in mask.iter_mut().zip(&single.mask) {
                *m |= *s;
            }
        }
        MaskedSource { field, mask }
    }

    /// `Σ γ_i H_i` from the stored single-source fields.
    pub fn target(&self, coeffs: &[Complex64]) -> FieldMap {
        let fields: Vec<&FieldMap> = self.record.fields.iter().map(|(_, f)| f).collect();
        FieldMap::superpose(&fields, coeffs)
    }

    /// Standardized model input `[C, rows, cols]` for `source`.
    pub fn input(&self, set: ChannelSet, stats: &ChannelStats, source: &MaskedSource) -> Result<Tensor<f32>> {
        let obs = encode_with(set, &self.record.eps, self.wavelength(), source, self.record.id)?;
        Ok(stats.apply(&obs)?)
    }
}

pub fn prepare(records: Vec<DatasetRecord>) -> Result<Vec<PreparedRecord>> {
    records.into_iter().map(PreparedRecord::new).collect()
}

/// Train, validation and test records of one dataset, split by device.
#[derive(Debug, Clone)]
pub struct Splits {
    pub train: Vec<PreparedRecord>,
    pub val: Vec<PreparedRecord>,
    pub test: Vec<PreparedRecord>,
}

impl Splits {
    pub fn load(dataset: &Dataset, fractions: [f64; 3], seed: u64) -> Result<Self> {
        let ids: Vec<usize> = dataset.manifest.records.iter().map(|r| r.id).collect();
        let (train, val, test) = split_dataset(&ids, fractions, seed)?;
        let mut records = prepare(dataset.load_all()?)?;
        let mut take = |wanted: &[usize]| -> Vec<PreparedRecord> {
            let (picked, rest): (Vec<_>, Vec<_>) = records.drain(..).partition(|r| wanted.contains(&r.record.id));
            records = rest;
            picked
        };
        Ok(Self { train: take(&train), val: take(&val), test: take(&test) })
    }
}

/// Unit vector selecting port `k` of `n`.
pub fn unit_coeffs(n: usize, k: usize) -> Vec<Complex64> {
    (0..n).map(|i| Complex64::new(if i == k { 1.0 } else { 0.0 }, 0.0)).collect()
}

/// Target tensor `[2, rows, cols]` divided by the stored scale.
pub(crate) fn scaled_target(field: &FieldMap, stats: &ChannelStats) -> Tensor<f32> {
    let inv = (1.0 / stats.target_scale) as f32;
    field_tensor(field).map(|v| v * inv)
}

/// Stacks equally shaped tensors along a new leading axis.
pub(crate) fn stack(items: &[Tensor<f32>]) -> Tensor<f32> {
    let mut shape = vec![items.len()];
    shape.extend_from_slice(items[0].shape());
    let mut data = Vec::with_capacity(items.len() * items[0].len());
    for t in items {
        data.extend_from_slice(t.data());
    }
    Tensor::new(&shape, data).expect("stacked items share a shape")
}
