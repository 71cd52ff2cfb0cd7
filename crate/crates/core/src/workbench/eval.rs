use std::fs;
use std::path::Path;
use std::time::Instant;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::mixup::MixupMatrix;
use super::{stack, unit_coeffs, PreparedRecord, Result, WorkbenchError};
use crate::devices::record_seed;
use crate::encoding::{tensor_field, ChannelSet, ChannelStats};
use crate::model::NeurOLight;
use crate::solver::FieldMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum InferenceMode {
    /// One forward pass per excited port, outputs superposed.
    Single,
    /// One forward pass on the superposed source.
    #[default]
    Multi,
}

impl std::str::FromStr for InferenceMode {
    type Err = WorkbenchError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "single" => Ok(Self::Single),
            "multi" => Ok(Self::Multi),
            other => Err(WorkbenchError::InvalidConfig(format!("unknown inference mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Inference {
    pub field: FieldMap,
    /// Against the superposed stored fields.
    pub nmae: f64,
    pub seconds: f64,
}

/// `Σ|Re δ| + |Im δ|` over `Σ|Re t| + |Im t|`.
pub fn field_nmae(pred: &FieldMap, truth: &FieldMap) -> f64 {
    let l1 = |z: Complex64| z.re.abs() + z.im.abs();
    let err: f64 = pred.values.iter().zip(&truth.values).map(|(p, t)| l1(p - t)).sum();
    let norm: f64 = truth.values.iter().map(|t| l1(*t)).sum();
    if norm > 0.0 {
        err / norm
    } else {
        f64::INFINITY
    }
}

fn predict_fields(model: &NeurOLight<f32>, stats: &ChannelStats, record: &PreparedRecord, inputs: Vec<crate::tensor::Tensor<f32>>) -> Result<Vec<FieldMap>> {
    let n = inputs.len();
    let out = model.predict(&stack(&inputs))?;
    let per = out.len() / n;
    let scale = stats.target_scale as f32;
    Ok(out
        .data()
        .chunks_exact(per)
        .map(|chunk| {
            let scaled: Vec<f32> = chunk.iter().map(|v| v * scale).collect();
            tensor_field(&scaled, record.record.domain)
        })
        .collect())
}

/// Predicts the field for the excitation `Σ coeffs_i J_i`.
pub fn infer(
    model: &NeurOLight<f32>,
    stats: &ChannelStats,
    set: ChannelSet,
    record: &PreparedRecord,
    coeffs: &[Complex64],
    mode: InferenceMode,
) -> Result<Inference> {
    if coeffs.len() != record.ports() {
        return Err(WorkbenchError::InvalidConfig(format!("{} coefficients for {} ports", coeffs.len(), record.ports())));
    }
    let started = Instant::now();
    let field = match mode {
        InferenceMode::Multi => {
            let input = record.input(set, stats, &record.source(coeffs))?;
            predict_fields(model, stats, record, vec![input])?.remove(0)
        }
        InferenceMode::Single => {
            let mut field = FieldMap::zeros(record.record.domain);
            for (k, g) in coeffs.iter().enumerate() {
                if *g == Complex64::new(0.0, 0.0) {
                    continue;
                }
                let input = record.input(set, stats, &record.source(&unit_coeffs(record.ports(), k)))?;
                field.add_scaled(&predict_fields(model, stats, record, vec![input])?[0], *g);
            }
            field
        }
    };
    let seconds = started.elapsed().as_secs_f64();
    let nmae = field_nmae(&field, &record.target(coeffs));
    Ok(Inference { field, nmae, seconds })
}

/// One all-ports row of a fresh mixup matrix per record.
pub fn multi_source_coefficients(records: &[PreparedRecord], seed: u64) -> Vec<Vec<Complex64>> {
    records
        .iter()
        .map(|rec| {
            let mut rng = ChaCha8Rng::seed_from_u64(record_seed(seed, rec.record.id));
            MixupMatrix::sample(rec.ports(), &mut rng).row(0).to_vec()
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordEval {
    pub id: usize,
    pub nmae: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub mode: InferenceMode,
    pub records: Vec<RecordEval>,
    pub mean: f64,
    pub std: f64,
    pub mean_seconds: f64,
}

impl EvalReport {
    fn from_records(mode: InferenceMode, records: Vec<RecordEval>) -> Self {
        let n = records.len().max(1) as f64;
        let mean = records.iter().map(|r| r.nmae).sum::<f64>() / n;
        let std = (records.iter().map(|r| (r.nmae - mean).powi(2)).sum::<f64>() / n).sqrt();
        let mean_seconds = records.iter().map(|r| r.seconds).sum::<f64>() / n;
        Self { mode, records, mean, std, mean_seconds }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("id,nmae,seconds\n");
        for r in &self.records {
            out += &format!("{},{},{:.6}\n", r.id, r.nmae, r.seconds);
        }
        out
    }

    /// Writes `<stem>.csv` (per record) and `<stem>.json` (full report).
    pub fn write(&self, dir: &Path, stem: &str) -> Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join(format!("{stem}.csv")), self.to_csv())?;
        fs::write(dir.join(format!("{stem}.json")), serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}

/// Evaluates every record under its coefficient row, splitting records across
/// worker threads.
pub fn evaluate(
    model: &NeurOLight<f32>,
    stats: &ChannelStats,
    set: ChannelSet,
    records: &[PreparedRecord],
    coeffs: &[Vec<Complex64>],
    mode: InferenceMode,
) -> Result<EvalReport> {
    if records.is_empty() {
        return Err(WorkbenchError::EmptyDataset("evaluation"));
    }
    if coeffs.len() != records.len() {
        return Err(WorkbenchError::InvalidConfig(format!("{} coefficient rows for {} records", coeffs.len(), records.len())));
    }
    let threads = crate::worker_threads().min(records.len());
    let chunk = records.len().div_ceil(threads);
    let results: Vec<Result<Vec<RecordEval>>> = std::thread::scope(|s| {
        let handles: Vec<_> = records
            .chunks(chunk)
            .zip(coeffs.chunks(chunk))
            .map(|(recs, cs)| {
                s.spawn(move || {
                    recs.iter()
                        .zip(cs)
                        .map(|(rec, c)| {
                            let inf = infer(model, stats, set, rec, c, mode)?;
                            Ok(RecordEval { id: rec.record.id, nmae: inf.nmae, seconds: inf.seconds })
                        })
                        .collect()
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("evaluation worker panicked")).collect()
    });
    let mut all = Vec::with_capacity(records.len());
    for r in results {
        all.extend(r?);
    }
    Ok(EvalReport::from_records(mode, all))
}

/// Mean single-port N-MAE: every port of every record excited alone.
pub fn single_port_report(model: &NeurOLight<f32>, stats: &ChannelStats, set: ChannelSet, records: &[PreparedRecord]) -> Result<EvalReport> {
    let mut expanded = Vec::new();
    let mut coeffs = Vec::new();
    for rec in records {
        for k in 0..rec.ports() {
            expanded.push(rec.clone());
            coeffs.push(unit_coeffs(rec.ports(), k));
        }
    }
    evaluate(model, stats, set, &expanded, &coeffs, InferenceMode::Multi)
}
