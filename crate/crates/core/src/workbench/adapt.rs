use std::path::Path;

use log::info;

use super::{train, validation_nmae, EpochLog, Freeze, PreparedRecord, Result, Schedule, TrainConfig};
use crate::encoding::ChannelStats;
use crate::model::NeurOLight;

pub const PROBE_LR: f64 = 0.002;
pub const TUNE_LR: f64 = 0.0002;

#[derive(Debug, Clone)]
pub struct AdaptOutcome {
    pub model: NeurOLight<f32>,
    /// Validation N-MAE of the incoming model on the new data.
    pub before: f64,
    pub after_probe: f64,
    pub after: f64,
    pub probe_curve: Vec<EpochLog>,
    pub tune_curve: Vec<EpochLog>,
    /// Every non-head parameter left bitwise intact by the probe phase.
    pub probe_kept_body: bool,
}

/// Linear probing of the head then full fine-tuning on new data. `base`
/// supplies batch size, seed, mixup and encoding; learning rates, schedule and
/// freezing are fixed per phase. The result is whichever phase validated best.
pub fn adapt(
    model: NeurOLight<f32>,
    stats: &ChannelStats,
    train_set: &[PreparedRecord],
    val_set: &[PreparedRecord],
    base: &TrainConfig,
    probe_epochs: usize,
    tune_epochs: usize,
    out_dir: Option<&Path>,
) -> Result<AdaptOutcome> {
    let set = base.encoding;
    let before = validation_nmae(&model, stats, set, val_set, base.batch_size)?;
    info!("adaptation start: val {before:.4}");

    let probe_cfg =
        TrainConfig { epochs: probe_epochs, lr: PROBE_LR, schedule: Schedule::Cosine, freeze: Freeze::AllButHead, ..base.clone() };
    let (probed, probe_curve, after_probe) = if probe_epochs > 0 {
        let o = train(model.clone(), stats, train_set, val_set, &probe_cfg, out_dir.map(|d| d.join("probe")).as_deref())?;
        (o.model, o.curve, o.best_val_nmae)
    } else {
        (model.clone(), vec![], before)
    };
    let probe_kept_body = model
        .info()
        .iter()
        .zip(model.params().iter().zip(probed.params()))
        .filter(|(p, _)| !p.is_head())
        .all(|(_, (a, b))| a.data().iter().zip(b.data()).all(|(x, y)| x.to_bits() == y.to_bits()));

    let tune_cfg = TrainConfig { epochs: tune_epochs, lr: TUNE_LR, schedule: Schedule::Cosine, freeze: Freeze::None, ..base.clone() };
    let (tuned, tune_curve, after) = if tune_epochs > 0 {
        let o = train(probed.clone(), stats, train_set, val_set, &tune_cfg, out_dir.map(|d| d.join("tune")).as_deref())?;
        if o.best_val_nmae <= after_probe {
            (o.model, o.curve, o.best_val_nmae)
        } else {
            (probed, o.curve, after_probe)
        }
    } else {
        (probed, vec![], after_probe)
    };
    info!("adaptation done: val {before:.4} -> {after_probe:.4} (probe) -> {after:.4}");
    Ok(AdaptOutcome { model: tuned, before, after_probe, after, probe_curve, tune_curve, probe_kept_body })
}
