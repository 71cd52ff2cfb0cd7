use std::fs;
use std::path::{Path, PathBuf};
use std::sync::mpsc::sync_channel;
use std::time::Instant;

use log::{info, warn};
use num_complex::Complex64;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::mixup::MixupMatrix;
use super::optim::{AdamW, Schedule};
use super::{scaled_target, stack, unit_coeffs, PreparedRecord, Result, WorkbenchError};
use crate::devices::record_seed;
use crate::encoding::{encode_with, field_tensor, ChannelSet, ChannelStats};
use crate::model::{save_checkpoint, NeurOLight, ParamInfo};
use crate::nold::{self, NoldHeader};
use crate::tensor::{Mode, Tape, Tensor};

/// Which parameters receive updates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Freeze {
    #[default]
    None,
    /// Linear probing: only the projection head trains.
    AllButHead,
}

impl Freeze {
    pub fn trains(self, p: &ParamInfo) -> bool {
        match self {
            Self::None => true,
            Self::AllButHead => p.is_head(),
        }
    }
}

fn default_epochs() -> usize {
    50
}
fn default_lr() -> f64 {
    0.002
}
fn default_weight_decay() -> f64 {
    1e-5
}
fn default_batch() -> usize {
    8
}
fn default_true() -> bool {
    true
}
fn default_queue() -> usize {
    4
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    /// Initial learning rate.
    #[serde(default = "default_lr")]
    pub lr: f64,
    /// Decoupled weight decay on weight matrices and kernels.
    #[serde(default = "default_weight_decay")]
    pub weight_decay: f64,
    #[serde(default)]
    pub schedule: Schedule,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default)]
    pub seed: u64,
    /// Superposition mixup of the single-source samples.
    #[serde(default = "default_true")]
    pub mixup: bool,
    /// Ports mixed per row; all ports when unset.
    #[serde(default)]
    pub sources_per_row: Option<usize>,
    #[serde(default)]
    pub encoding: ChannelSet,
    #[serde(default)]
    pub freeze: Freeze,
    /// Prepared batches buffered ahead of the optimizer.
    #[serde(default = "default_queue")]
    pub queue_depth: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: default_epochs(),
            lr: default_lr(),
            weight_decay: default_weight_decay(),
            schedule: Schedule::Cosine,
            batch_size: default_batch(),
            seed: 0,
            mixup: true,
            sources_per_row: None,
            encoding: ChannelSet::Full,
            freeze: Freeze::None,
            queue_depth: default_queue(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0) || self.batch_size == 0 || !(self.weight_decay >= 0.0) || self.queue_depth == 0 {
            return Err(WorkbenchError::InvalidConfig("lr must be positive, batch_size and queue_depth at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub lr: f64,
    pub train_nmae: f64,
    pub val_nmae: f64,
    pub best_val_nmae: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters of the epoch with the lowest validation N-MAE.
    pub model: NeurOLight<f32>,
    pub stats: ChannelStats,
    pub curve: Vec<EpochLog>,
    pub best_epoch: usize,
    pub best_val_nmae: f64,
}

impl TrainOutcome {
    pub fn curve_csv(&self) -> String {
        let mut out = String::from("epoch,lr,train_nmae,val_nmae,best_val_nmae,seconds\n");
        for e in &self.curve {
            out += &format!("{},{:e},{},{},{},{:.3}\n", e.epoch, e.lr, e.train_nmae, e.val_nmae, e.best_val_nmae, e.seconds);
        }
        out
    }
}

/// Standardization statistics over the single-source observations of `records`.
pub fn fit_stats(set: ChannelSet, records: &[PreparedRecord]) -> Result<ChannelStats> {
    let mut obs = Vec::new();
    let mut targets = Vec::new();
    for rec in records {
        for (k, single) in rec.singles.iter().enumerate() {
            obs.push(encode_with(set, &rec.record.eps, rec.wavelength(), single, rec.record.id)?);
            targets.push(field_tensor(&rec.record.fields[k].1));
        }
    }
    Ok(ChannelStats::fit(set, &obs, &targets))
}

struct Batch {
    epoch: usize,
    input: Tensor<f32>,
    target: Tensor<f32>,
    items: Vec<(usize, Vec<Complex64>)>,
}

/// One epoch's worth of `(record, coefficient row)` pairs: every port of every
/// record once, mixed by a fresh random matrix when mixup is on.
fn epoch_items(records: &[PreparedRecord], cfg: &TrainConfig, epoch: usize) -> Vec<(usize, Vec<Complex64>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(record_seed(cfg.seed, epoch));
    let mut items = Vec::new();
    for (r, rec) in records.iter().enumerate() {
        let n = rec.ports();
        let gamma = if cfg.mixup {
            MixupMatrix::sample_sparse(n, cfg.sources_per_row.unwrap_or(n), &mut rng)
        } else {
            MixupMatrix::identity(n)
        };
        items.extend(gamma.rows().map(|row| (r, row.to_vec())));
    }
    items.shuffle(&mut rng);
    items
}

fn build_batch(records: &[PreparedRecord], stats: &ChannelStats, set: ChannelSet, epoch: usize, items: &[(usize, Vec<Complex64>)]) -> Result<Batch> {
    let mut inputs = Vec::with_capacity(items.len());
    let mut targets = Vec::with_capacity(items.len());
    for (r, coeffs) in items {
        let rec = &records[*r];
        inputs.push(rec.input(set, stats, &rec.source(coeffs))?);
        targets.push(scaled_target(&rec.target(coeffs), stats));
    }
    Ok(Batch { epoch, input: stack(&inputs), target: stack(&targets), items: items.to_vec() })
}

/// Mean single-source N-MAE over every port of `records`, in eval mode.
pub fn validation_nmae(model: &NeurOLight<f32>, stats: &ChannelStats, set: ChannelSet, records: &[PreparedRecord], batch: usize) -> Result<f64> {
    let items: Vec<(usize, Vec<Complex64>)> =
        records.iter().enumerate().flat_map(|(r, rec)| (0..rec.ports()).map(move |k| (r, unit_coeffs(rec.ports(), k)))).collect();
    if items.is_empty() {
        return Err(WorkbenchError::EmptyDataset("validation"));
    }
    let mut total = 0.0;
    for chunk in items.chunks(batch.max(1)) {
        let b = build_batch(records, stats, set, 0, chunk)?;
        let pred = model.predict(&b.input)?;
        let mut tape = Tape::<f32>::new();
        let p = tape.constant(pred);
        let loss = tape.nmae(p, &b.target)?;
        total += tape.value(loss).data()[0] as f64 * chunk.len() as f64;
    }
    Ok(total / items.len() as f64)
}

fn dump_batch(dir: &Path, batch: &Batch, step: usize) -> Result<PathBuf> {
    let path = dir.join(format!("nonfinite_epoch{}_step{step}", batch.epoch));
    fs::create_dir_all(&path)?;
    for (name, t) in [("input.nold", &batch.input), ("target.nold", &batch.target)] {
        let s = t.shape();
        let header = NoldHeader { complex: false, channels: (s[0] * s[1]) as u32, rows: s[2] as u32, cols: s[3] as u32 };
        nold::write(&path.join(name), &header, t.data())?;
    }
    let items: Vec<_> = batch.items.iter().map(|(r, c)| (r, c.iter().map(|g| (g.re, g.im)).collect::<Vec<_>>())).collect();
    fs::write(path.join("batch.json"), serde_json::to_string_pretty(&serde_json::json!({ "epoch": batch.epoch, "step": step, "items": items }))?)?;
    Ok(path)
}

/// Trains `model` on `train`, keeping the parameters with the best validation
/// N-MAE. Batches are assembled on a loader thread feeding a bounded queue;
/// the order and every random draw depend only on `cfg.seed`.
///
/// With `out_dir`, the best checkpoint goes to `out_dir/best` and the learning
/// curve to `out_dir/curve.csv`.
pub fn train(
    model: NeurOLight<f32>,
    stats: &ChannelStats,
    train: &[PreparedRecord],
    val: &[PreparedRecord],
    cfg: &TrainConfig,
    out_dir: Option<&Path>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(WorkbenchError::EmptyDataset("training"));
    }
    if val.is_empty() {
        return Err(WorkbenchError::EmptyDataset("validation"));
    }
    if model.config().in_channels != cfg.encoding.channels() || stats.set != cfg.encoding {
        return Err(WorkbenchError::InvalidConfig(format!(
            "model takes {} channels, encoding {:?} gives {}",
            model.config().in_channels,
            cfg.encoding,
            cfg.encoding.channels()
        )));
    }
    let set = cfg.encoding;
    let per_epoch = epoch_items(train, cfg, 0).len();
    let steps_per_epoch = per_epoch.div_ceil(cfg.batch_size);
    let total_steps = steps_per_epoch * cfg.epochs;

    let mut model = model;
    let trainable: Vec<bool> = model.info().iter().map(|p| cfg.freeze.trains(p)).collect();
    let decay: Vec<bool> = model.info().iter().map(|p| p.shape.len() >= 2).collect();
    let mut opt = AdamW::new(model.params().iter().map(Tensor::len), cfg.weight_decay);
    let mut best = (model.clone(), f64::INFINITY, 0usize);
    let mut curve = Vec::with_capacity(cfg.epochs);
    let dump_dir = out_dir.map(Path::to_path_buf).unwrap_or_else(std::env::temp_dir);

    std::thread::scope(|scope| -> Result<()> {
        let (tx, rx) = sync_channel::<Result<Batch>>(cfg.queue_depth);
        scope.spawn(move || {
            for epoch in 0..cfg.epochs {
                let items = epoch_items(train, cfg, epoch);
                for chunk in items.chunks(cfg.batch_size) {
                    if tx.send(build_batch(train, stats, set, epoch, chunk)).is_err() {
                        return;
                    }
                }
            }
        });

        let mut step = 0usize;
        for epoch in 0..cfg.epochs {
            let started = Instant::now();
            let mut rng = ChaCha8Rng::seed_from_u64(record_seed(cfg.seed ^ 0xD40F_7A11, epoch));
            let (mut loss_sum, mut seen) = (0.0f64, 0usize);
            let mut lr = cfg.lr;
            for _ in 0..steps_per_epoch {
                let batch = rx.recv().expect("loader ends only after the last batch")?;
                let mut tape = Tape::new();
                let params = model.bind(&mut tape, |p| cfg.freeze.trains(p));
                let x = tape.constant(batch.input.clone());
                let pred = model.forward(&mut tape, &params, x, Mode::Train, &mut rng)?;
                let loss = tape.nmae(pred, &batch.target)?;
                let value = tape.value(loss).data()[0];
                if !value.is_finite() {
                    let dump = dump_batch(&dump_dir, &batch, step).map_err(|e| warn!("batch dump failed: {e}")).ok();
                    return Err(WorkbenchError::NonFiniteLoss { epoch, step, dump });
                }
                let mut grads = tape.backward(loss);
                let grads: Vec<Option<Tensor<f32>>> =
                    params.vars().iter().zip(&trainable).map(|(v, t)| if *t { grads.take(*v) } else { None }).collect();
                lr = cfg.schedule.rate(cfg.lr, step, total_steps);
                opt.update(model.params_mut(), &grads, &decay, lr);
                loss_sum += value as f64 * batch.items.len() as f64;
                seen += batch.items.len();
                step += 1;
            }
            let val_nmae = validation_nmae(&model, stats, set, val, cfg.batch_size)?;
            if val_nmae < best.1 {
                best = (model.clone(), val_nmae, epoch);
                if let Some(dir) = out_dir {
                    let meta = serde_json::json!({ "epoch": epoch, "val_nmae": val_nmae, "seed": cfg.seed });
                    save_checkpoint(&dir.join("best"), &model, stats, meta)?;
                }
            }
            let log = EpochLog {
                epoch,
                lr,
                train_nmae: loss_sum / seen.max(1) as f64,
                val_nmae,
                best_val_nmae: best.1,
                seconds: started.elapsed().as_secs_f64(),
            };
            info!("epoch {epoch}: train {:.4} val {:.4} best {:.4} ({:.1}s)", log.train_nmae, log.val_nmae, log.best_val_nmae, log.seconds);
            curve.push(log);
        }
        Ok(())
    })?;

    let outcome = TrainOutcome { model: best.0, stats: stats.clone(), curve, best_epoch: best.2, best_val_nmae: best.1 };
    if let Some(dir) = out_dir {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("curve.csv"), outcome.curve_csv())?;
    }
    Ok(outcome)
}
