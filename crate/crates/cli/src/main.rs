use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use log::info;

use neurolight::devices::{generate_dataset, sample_device_with, Dataset, DatasetRecord};
use neurolight::model::{load_checkpoint, NeurOLight};
use neurolight::workbench::{
    adapt, evaluate, fit_stats, infer, lane_transmissions, multi_source_coefficients, plot_comparison, plot_field,
    single_port_report, spectrum_sweep, sweep_wavelengths, train, unit_coeffs, FieldView, InferenceMode, PreparedRecord,
    Splits, WorkbenchConfig,
};

#[derive(Parser)]
#[command(name = "neurolight", version, about = "FDFD datasets and neural operator surrogates for MMI devices")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// TOML configuration; missing sections use the desk preset.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the seed of the command's main random stream.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Inference mode for evaluation.
    #[arg(long, value_parser = ["single", "multi"])]
    mode: Option<String>,
}

#[derive(Args, Clone)]
struct Trained {
    /// Checkpoint directory written by `train` or `adapt`.
    #[arg(long)]
    checkpoint: PathBuf,
    /// Dataset directory; defaults to `device.dataset` in the config.
    #[arg(long)]
    data: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Sample one device, solve every port and render the fields.
    Simulate(Common),
    /// Generate a dataset of solved devices.
    GenDataset(Common),
    /// Train a model on a dataset.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Evaluate a checkpoint on the test split.
    Eval {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        trained: Trained,
    },
    /// Batched wavelength sweep of one test device.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        trained: Trained,
        /// Position of the device in the test split.
        #[arg(long, default_value_t = 0)]
        record: usize,
        #[arg(long, default_value_t = 0)]
        port: usize,
    },
    /// Probe then fine-tune a checkpoint on a new dataset.
    Adapt {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        trained: Trained,
    },
    /// Render prediction, target and error for one test device.
    Plot {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        trained: Trained,
        #[arg(long, default_value_t = 0)]
        record: usize,
        #[arg(long, default_value_t = 0)]
        port: usize,
    },
}

fn load_config(common: &Common) -> Result<WorkbenchConfig> {
    let cfg = match &common.config {
        Some(path) => WorkbenchConfig::load(path).with_context(|| format!("reading {}", path.display()))?,
        None => WorkbenchConfig::desk(),
    };
    Ok(cfg)
}

fn mode(common: &Common, cfg: &WorkbenchConfig) -> Result<InferenceMode> {
    Ok(match &common.mode {
        Some(m) => m.parse()?,
        None => cfg.eval.mode,
    })
}

fn data_dir(explicit: &Option<PathBuf>, cfg: &WorkbenchConfig) -> Result<PathBuf> {
    match explicit.clone().or_else(|| cfg.device.dataset.clone()) {
        Some(d) => Ok(d),
        None => bail!("no dataset: pass --data or set device.dataset"),
    }
}

fn splits(dir: &Path, cfg: &WorkbenchConfig) -> Result<Splits> {
    let ds = Dataset::open(dir).with_context(|| format!("opening dataset {}", dir.display()))?;
    Ok(Splits::load(&ds, cfg.device.split, cfg.device.seed)?)
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)?)?;
    Ok(())
}

fn pick(recs: &[PreparedRecord], pos: usize, port: usize) -> Result<&PreparedRecord> {
    let Some(rec) = recs.get(pos) else { bail!("test split has {} records", recs.len()) };
    if port >= rec.ports() {
        bail!("device has {} ports", rec.ports());
    }
    Ok(rec)
}

fn simulate(common: &Common) -> Result<()> {
    let cfg = load_config(common)?;
    let seed = common.seed.unwrap_or(cfg.device.seed);
    let spec = sample_device_with(&cfg.device.ranges, cfg.device.kind, cfg.device.n_ports, seed)?;
    let (rec, residuals) = DatasetRecord::simulate(0, spec, cfg.domain.rows, cfg.domain.cols)?;
    fs::create_dir_all(&common.out)?;
    let mut transmissions = Vec::new();
    for (k, (src, field)) in rec.fields.iter().enumerate() {
        plot_field(&common.out.join(format!("port{k}_real.png")), field, FieldView::Real)?;
        plot_field(&common.out.join(format!("port{k}_abs.png")), field, FieldView::Magnitude)?;
        transmissions.push(lane_transmissions(field, &rec.eps, &rec.spec, src.wavelength, 1.0));
    }
    write_json(
        &common.out.join("simulation.json"),
        &serde_json::json!({ "spec": rec.spec, "residuals": residuals, "transmissions": transmissions }),
    )?;
    info!("solved {} ports, max residual {:.2e}", residuals.len(), residuals.iter().cloned().fold(0.0, f64::max));
    Ok(())
}

fn gen_dataset(common: &Common) -> Result<()> {
    let cfg = load_config(common)?;
    let mut ds = cfg.dataset_config();
    if let Some(seed) = common.seed {
        ds.seed = seed;
    }
    let manifest = generate_dataset(&ds, &common.out)?;
    info!("{} records written, {} skipped", manifest.records.len(), manifest.skipped.len());
    Ok(())
}

fn run_train(common: &Common, data: &Option<PathBuf>) -> Result<()> {
    let mut cfg = load_config(common)?;
    if let Some(seed) = common.seed {
        cfg.train.seed = seed;
    }
    let s = splits(&data_dir(data, &cfg)?, &cfg)?;
    let set = cfg.train.encoding;
    let stats = fit_stats(set, &s.train)?;
    let model = NeurOLight::new(cfg.model.clone(), cfg.train.seed)?;
    let outcome = train(model, &stats, &s.train, &s.val, &cfg.train, Some(&common.out))?;
    fs::write(common.out.join("config.toml"), cfg.to_toml_string()?)?;
    info!("best validation N-MAE {:.4} at epoch {}", outcome.best_val_nmae, outcome.best_epoch);
    Ok(())
}

fn run_eval(common: &Common, trained: &Trained) -> Result<()> {
    let cfg = load_config(common)?;
    let (model, ckpt) = load_checkpoint(&trained.checkpoint)?;
    let set = ckpt.stats.set;
    let s = splits(&data_dir(&trained.data, &cfg)?, &cfg)?;
    let mode = mode(common, &cfg)?;
    let coeffs = multi_source_coefficients(&s.test, common.seed.unwrap_or(cfg.eval.seed));
    let report = evaluate(&model, &ckpt.stats, set, &s.test, &coeffs, mode)?;
    report.write(&common.out, &format!("eval_{}", if mode == InferenceMode::Multi { "multi" } else { "single" }))?;
    let single = single_port_report(&model, &ckpt.stats, set, &s.test)?;
    single.write(&common.out, "eval_single_port")?;
    info!("superposed test N-MAE {:.4} ± {:.4}; single-port {:.4}", report.mean, report.std, single.mean);
    Ok(())
}

fn run_sweep(common: &Common, trained: &Trained, record: usize, port: usize) -> Result<()> {
    let cfg = load_config(common)?;
    let (model, ckpt) = load_checkpoint(&trained.checkpoint)?;
    let s = splits(&data_dir(&trained.data, &cfg)?, &cfg)?;
    let rec = pick(&s.test, record, port)?;
    let wavelengths = sweep_wavelengths(cfg.eval.sweep_lo, cfg.eval.sweep_hi, cfg.eval.sweep_step);
    let report = spectrum_sweep(
        &model,
        &ckpt.stats,
        ckpt.stats.set,
        &rec.record.spec,
        (cfg.domain.rows, cfg.domain.cols),
        &unit_coeffs(rec.ports(), port),
        &wavelengths,
        &cfg.eval.cross_check,
    )?;
    fs::create_dir_all(&common.out)?;
    fs::write(common.out.join("sweep.csv"), report.to_csv())?;
    write_json(&common.out.join("sweep.json"), &report.rows)?;
    for (row, field) in report.rows.iter().zip(&report.fields) {
        plot_field(&common.out.join(format!("sweep_{:.0}nm.png", row.wavelength * 1e9)), field, FieldView::Real)?;
    }
    info!("{} wavelengths in {:.3}s", report.rows.len(), report.seconds);
    Ok(())
}

fn run_adapt(common: &Common, trained: &Trained) -> Result<()> {
    let mut cfg = load_config(common)?;
    if let Some(seed) = common.seed {
        cfg.train.seed = seed;
    }
    let (model, ckpt) = load_checkpoint(&trained.checkpoint)?;
    let s = splits(&data_dir(&trained.data, &cfg)?, &cfg)?;
    let base = neurolight::workbench::TrainConfig { encoding: ckpt.stats.set, ..cfg.train.clone() };
    let out = adapt(model, &ckpt.stats, &s.train, &s.val, &base, cfg.adapt.probe_epochs, cfg.adapt.tune_epochs, Some(&common.out))?;
    neurolight::model::save_checkpoint(
        &common.out.join("adapted"),
        &out.model,
        &ckpt.stats,
        serde_json::json!({ "before": out.before, "after_probe": out.after_probe, "after": out.after }),
    )?;
    info!("validation N-MAE {:.4} -> {:.4}", out.before, out.after);
    Ok(())
}

fn run_plot(common: &Common, trained: &Trained, record: usize, port: usize) -> Result<()> {
    let cfg = load_config(common)?;
    let (model, ckpt) = load_checkpoint(&trained.checkpoint)?;
    let s = splits(&data_dir(&trained.data, &cfg)?, &cfg)?;
    let rec = pick(&s.test, record, port)?;
    let coeffs = unit_coeffs(rec.ports(), port);
    let inf = infer(&model, &ckpt.stats, ckpt.stats.set, rec, &coeffs, InferenceMode::Multi)?;
    fs::create_dir_all(&common.out)?;
    let path = common.out.join(format!("device{}_port{port}.png", rec.record.id));
    plot_comparison(&path, &inf.field, &rec.target(&coeffs))?;
    info!("N-MAE {:.4}; wrote {}", inf.nmae, path.display());
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().command {
        Command::Simulate(c) => simulate(&c),
        Command::GenDataset(c) => gen_dataset(&c),
        Command::Train { common, data } => run_train(&common, &data),
        Command::Eval { common, trained } => run_eval(&common, &trained),
        Command::Sweep { common, trained, record, port } => run_sweep(&common, &trained, record, port),
        Command::Adapt { common, trained } => run_adapt(&common, &trained),
        Command::Plot { common, trained, record, port } => run_plot(&common, &trained, record, port),
    }
}
