use std::sync::{Mutex, MutexGuard, OnceLock};

use neurolight::devices::{sample_device_with, DatasetRecord, DeviceKind, GeometryRanges};
use neurolight::encoding::{masked_source, ChannelSet};
use neurolight::model::{ModelConfig, NeurOLight};
use neurolight::solver::{port_power_rows, solve_calls, Simulation, SourceSpec};
use neurolight::workbench::{
    adapt, apply_mixup, evaluate, field_nmae, fit_stats, infer, multi_source_coefficients, render_comparison, render_field,
    spectrum_sweep, sweep_wavelengths, train, unit_coeffs, FieldView, Freeze, InferenceMode, MixupMatrix, PreparedRecord,
    TrainConfig, WorkbenchConfig, WorkbenchError,
};
use num_complex::Complex64;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const UM: f64 = 1e-6;

// Solver-call counting and training timings need the process to themselves.
fn serial() -> MutexGuard<'static, ()> {
    static LOCK: Mutex<()> = Mutex::new(());
    LOCK.lock().unwrap_or_else(|e| e.into_inner())
}

fn records() -> &'static [PreparedRecord] {
    static RECORDS: OnceLock<Vec<PreparedRecord>> = OnceLock::new();
    RECORDS.get_or_init(|| {
        let ranges = GeometryRanges::desk();
        (0..6)
            .map(|id| {
                let spec = sample_device_with(&ranges, DeviceKind::TunableMmi, 3, 100 + id as u64).unwrap();
                PreparedRecord::new(DatasetRecord::simulate(id, spec, 32, 64).unwrap().0).unwrap()
            })
            .collect()
    })
}

fn tiny_model(set: ChannelSet, seed: u64) -> NeurOLight<f32> {
    let cfg = ModelConfig { in_channels: set.channels(), channels: 8, blocks: 2, head_channels: 16, ..ModelConfig::desk() };
    NeurOLight::new(cfg, seed).unwrap()
}

fn tiny_train(epochs: usize) -> TrainConfig {
    TrainConfig { epochs, batch_size: 4, seed: 5, ..TrainConfig::default() }
}

proptest! {
    #[test]
    fn sampled_mixup_rows_are_normalized(seed in any::<u64>(), ports in 1usize..=6, per_row in 1usize..=6) {
        let m = MixupMatrix::sample_sparse(ports, per_row, &mut ChaCha8Rng::seed_from_u64(seed));
        for row in m.rows() {
            let norm: f64 = row.iter().map(|g| g.norm_sqr()).sum::<f64>().sqrt();
            prop_assert!((norm - 1.0).abs() < 1e-6);
            prop_assert!(row[0].im == 0.0 && row[0].re >= 0.0);
        }
    }
}

#[test]
fn mixup_energy_is_spread_evenly() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let mut sums = [0.0f64; 9];
    let n = 10_000;
    for _ in 0..n {
        let m = MixupMatrix::sample(3, &mut rng);
        for (j, row) in m.rows().enumerate() {
            for (i, g) in row.iter().enumerate() {
                sums[3 * j + i] += g.norm_sqr();
            }
        }
    }
    for s in sums {
        assert!((s / n as f64 - 1.0 / 3.0).abs() < 0.02, "{}", s / n as f64);
    }
}

#[test]
fn identity_mixup_returns_single_source_pairs() {
    let rec = &records()[0];
    let pairs = apply_mixup(rec, &MixupMatrix::identity(3)).unwrap();
    for (k, (src, target)) in pairs.iter().enumerate() {
        assert_eq!(src, &rec.singles[k]);
        assert_eq!(target, &rec.record.fields[k].1);
    }
    assert!(matches!(apply_mixup(rec, &MixupMatrix::identity(2)), Err(WorkbenchError::InvalidMixup(_))));
}

#[test]
fn superposed_target_matches_a_fresh_solve() {
    let _guard = serial();
    let rec = &records()[5];
    let gamma = MixupMatrix::sample(3, &mut ChaCha8Rng::seed_from_u64(9));
    let before = solve_calls();
    let pairs = apply_mixup(rec, &gamma).unwrap();
    assert_eq!(solve_calls(), before, "mixup must not solve");
    let sim = Simulation::new(&rec.record.eps, rec.wavelength()).unwrap();
    for (row, (_, target)) in gamma.rows().zip(&pairs) {
        let sources: Vec<SourceSpec> = rec.record.spec.sources().iter().zip(row).map(|(s, g)| s.with_amplitude(*g)).collect();
        let truth = sim.solve(&sources).unwrap().field;
        let mut diff = truth.clone();
        diff.add_scaled(target, Complex64::new(-1.0, 0.0));
        assert!(diff.max_abs() / truth.max_abs() < 1e-6, "{}", diff.max_abs() / truth.max_abs());
    }
}

#[test]
fn superposed_source_carries_unit_power() {
    let rec = &records()[1];
    let d = rec.record.domain;
    let col = SourceSpec::source_column(&d) + 1;
    let gamma = MixupMatrix::sample(3, &mut ChaCha8Rng::seed_from_u64(3));
    for row in gamma.rows() {
        let src = rec.source(row);
        let power = port_power_rows(&src.field, &rec.record.eps, col, rec.wavelength(), 0..d.rows);
        assert!((power - 1.0).abs() < 0.05, "power {power}");
        // the unioned mask matches a direct multi-port build
        let sources: Vec<SourceSpec> = rec.record.spec.sources().iter().zip(row).map(|(s, g)| s.with_amplitude(*g)).collect();
        let direct = masked_source(&rec.record.spec, &rec.record.eps, &sources).unwrap();
        assert_eq!(direct.mask, src.mask);
        let mut diff = direct.field.clone();
        diff.add_scaled(&src.field, Complex64::new(-1.0, 0.0));
        assert!(diff.max_abs() < 1e-12);
    }
}

#[test]
fn training_is_deterministic_and_never_solves() {
    let _guard = serial();
    let recs = records();
    let set = ChannelSet::Full;
    let stats = fit_stats(set, &recs[..4]).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let before = solve_calls();
    let a = train(tiny_model(set, 1), &stats, &recs[..4], &recs[4..], &tiny_train(3), Some(dir.path())).unwrap();
    let b = train(tiny_model(set, 1), &stats, &recs[..4], &recs[4..], &tiny_train(3), None).unwrap();
    assert_eq!(solve_calls(), before);
    assert_eq!(a.curve.len(), 3);
    for (x, y) in a.curve.iter().zip(&b.curve) {
        assert_eq!(x.train_nmae.to_bits(), y.train_nmae.to_bits());
        assert_eq!(x.val_nmae.to_bits(), y.val_nmae.to_bits());
    }
    for (p, q) in a.model.params().iter().zip(b.model.params()) {
        assert_eq!(p.data(), q.data());
    }
    for w in a.curve.windows(2) {
        assert!(w[1].best_val_nmae <= w[0].best_val_nmae);
    }
    assert!(a.curve.iter().all(|e| e.train_nmae.is_finite() && e.val_nmae.is_finite()));
    assert_eq!(a.best_val_nmae, a.curve.iter().map(|e| e.val_nmae).fold(f64::INFINITY, f64::min));
    assert!(dir.path().join("best").join("manifest.json").exists());
    let curve = std::fs::read_to_string(dir.path().join("curve.csv")).unwrap();
    assert_eq!(curve.lines().count(), 4);
}

#[test]
fn head_only_training_keeps_the_body() {
    let recs = records();
    let set = ChannelSet::Full;
    let stats = fit_stats(set, &recs[..4]).unwrap();
    let start = tiny_model(set, 2);
    let cfg = TrainConfig { freeze: Freeze::AllButHead, ..tiny_train(1) };
    let out = train(start.clone(), &stats, &recs[..4], &recs[4..], &cfg, None).unwrap();
    let mut head_moved = false;
    for ((info, a), b) in start.info().iter().zip(start.params()).zip(out.model.params()) {
        if info.is_head() {
            head_moved |= a.data() != b.data();
        } else {
            assert!(a.data().iter().zip(b.data()).all(|(x, y)| x.to_bits() == y.to_bits()), "{} moved", info.name);
        }
    }
    assert!(head_moved);
}

#[test]
fn nonfinite_loss_aborts_with_a_dump() {
    let recs = records();
    let set = ChannelSet::Full;
    let stats = fit_stats(set, &recs[..4]).unwrap();
    let mut model = tiny_model(set, 3);
    let k = model.find("head.1.weight").unwrap();
    model.params_mut()[k].data_mut()[0] = f32::NAN;
    let dir = tempfile::tempdir().unwrap();
    match train(model, &stats, &recs[..4], &recs[4..], &tiny_train(2), Some(dir.path())) {
        Err(WorkbenchError::NonFiniteLoss { epoch: 0, step: 0, dump: Some(path) }) => {
            for file in ["input.nold", "target.nold", "batch.json"] {
                assert!(path.join(file).exists(), "{file}");
            }
        }
        other => panic!("expected a non-finite abort, got {:?}", other.map(|o| o.best_val_nmae)),
    }
}

#[test]
fn train_rejects_bad_configs() {
    let recs = records();
    let stats = fit_stats(ChannelSet::Full, &recs[..2]).unwrap();
    let bad_lr = TrainConfig { lr: 0.0, ..tiny_train(1) };
    assert!(matches!(train(tiny_model(ChannelSet::Full, 0), &stats, &recs[..2], &recs[2..3], &bad_lr, None), Err(WorkbenchError::InvalidConfig(_))));
    let bad_batch = TrainConfig { batch_size: 0, ..tiny_train(1) };
    assert!(train(tiny_model(ChannelSet::Full, 0), &stats, &recs[..2], &recs[2..3], &bad_batch, None).is_err());
    assert!(matches!(
        train(tiny_model(ChannelSet::Full, 0), &stats, &[], &recs[2..3], &tiny_train(1), None),
        Err(WorkbenchError::EmptyDataset(_))
    ));
    let wrong = tiny_model(ChannelSet::EpsOnly, 0);
    assert!(train(wrong, &stats, &recs[..2], &recs[2..3], &tiny_train(1), None).is_err());
}

#[test]
fn inference_modes_agree_on_one_source() {
    let recs = records();
    let set = ChannelSet::Full;
    let stats = fit_stats(set, recs).unwrap();
    let model = tiny_model(set, 4);
    for k in 0..3 {
        let coeffs = unit_coeffs(3, k);
        let multi = infer(&model, &stats, set, &recs[0], &coeffs, InferenceMode::Multi).unwrap();
        let single = infer(&model, &stats, set, &recs[0], &coeffs, InferenceMode::Single).unwrap();
        assert_eq!(multi.field, single.field);
        assert_eq!(multi.nmae, single.nmae);
        assert!((field_nmae(&multi.field, &recs[0].record.fields[k].1) - multi.nmae).abs() < 1e-15);
    }
}

#[test]
fn evaluation_report_is_complete() {
    let recs = records();
    let set = ChannelSet::Full;
    let stats = fit_stats(set, recs).unwrap();
    let model = tiny_model(set, 4);
    let coeffs = multi_source_coefficients(recs, 1);
    assert_eq!(coeffs, multi_source_coefficients(recs, 1));
    for row in &coeffs {
        assert!(row.iter().all(|g| g.norm() > 0.0));
    }
    let report = evaluate(&model, &stats, set, recs, &coeffs, InferenceMode::Single).unwrap();
    assert_eq!(report.records.len(), recs.len());
    assert_eq!(report.mode, InferenceMode::Single);
    let mean = report.records.iter().map(|r| r.nmae).sum::<f64>() / recs.len() as f64;
    assert!((report.mean - mean).abs() < 1e-12);
    assert!(report.std >= 0.0 && report.mean_seconds > 0.0);
    let dir = tempfile::tempdir().unwrap();
    report.write(dir.path(), "test").unwrap();
    assert_eq!(std::fs::read_to_string(dir.path().join("test.csv")).unwrap().lines().count(), recs.len() + 1);
    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("test.json")).unwrap()).unwrap();
    assert_eq!(json["mode"], "single");
}

#[test]
fn sweep_covers_eight_wavelengths_in_one_call() {
    let _guard = serial();
    let recs = records();
    let set = ChannelSet::Full;
    let stats = fit_stats(set, recs).unwrap();
    let model = tiny_model(set, 6);
    let wavelengths = sweep_wavelengths(1.550 * UM, 1.565 * UM, 0.002 * UM);
    assert_eq!(wavelengths.len(), 8);
    assert!((wavelengths[7] - 1.564 * UM).abs() < 1e-15);
    let before = solve_calls();
    let report = spectrum_sweep(&model, &stats, set, &recs[0].record.spec, (32, 64), &unit_coeffs(3, 1), &wavelengths, &[0, 4]).unwrap();
    assert_eq!(solve_calls() - before, 2);
    assert_eq!(report.inference_calls, 1);
    assert_eq!(report.rows.len(), 8);
    assert_eq!(report.fields.len(), 8);
    for (k, row) in report.rows.iter().enumerate() {
        assert_eq!(row.transmissions.len(), 3);
        assert_eq!(row.nmae.is_some(), k == 0 || k == 4);
    }
    let solver = report.rows[0].solver_transmissions.as_ref().unwrap();
    let total: f64 = solver.iter().sum();
    assert!(total > 0.5 && total < 1.05, "solver transmission {total}");
    assert_eq!(report.to_csv().lines().count(), 9);
}

#[test]
fn rendering_is_deterministic() {
    let rec = &records()[0];
    let truth = &rec.record.fields[0].1;
    let pred = truth.scaled(Complex64::new(0.9, 0.1));
    let a = render_comparison(&pred, truth);
    assert_eq!(a, render_comparison(&pred, truth));
    assert_eq!(a.width(), 4 * 64 * 4 + 12);
    assert_eq!(a.height(), 32 * 4);
    let re = render_field(truth, FieldView::Real);
    assert_eq!(re.dimensions(), (256, 128));
    // a symmetric scale maps the largest |Re| to a saturated end
    let (i, j) = (0..32 * 64).map(|k| (k / 64, k % 64)).max_by(|a, b| truth.at(a.0, a.1).re.abs().total_cmp(&truth.at(b.0, b.1).re.abs())).unwrap();
    let px = re.get_pixel(j as u32 * 4, i as u32 * 4).0;
    assert!(px == [181, 5, 38] || px == [59, 77, 191], "{px:?}");
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("f.png");
    neurolight::workbench::plot_field(&path, truth, FieldView::Magnitude).unwrap();
    let first = std::fs::read(&path).unwrap();
    neurolight::workbench::plot_field(&path, truth, FieldView::Magnitude).unwrap();
    assert_eq!(first, std::fs::read(&path).unwrap());
}

#[test]
fn adaptation_probe_leaves_body_alone() {
    let recs = records();
    let set = ChannelSet::Full;
    let stats = fit_stats(set, &recs[..4]).unwrap();
    let out = adapt(tiny_model(set, 8), &stats, &recs[..4], &recs[4..], &tiny_train(1), 1, 1, None).unwrap();
    assert!(out.probe_kept_body);
    assert_eq!(out.probe_curve.len(), 1);
    assert_eq!(out.tune_curve.len(), 1);
    assert!(out.after <= out.after_probe);
}

#[test]
fn config_fills_defaults_and_rejects_unknown_keys() {
    let desk = WorkbenchConfig::from_toml_str("").unwrap();
    assert_eq!(desk, WorkbenchConfig::desk());
    assert_eq!((desk.domain.rows, desk.domain.cols), (32, 64));
    assert_eq!(desk.model, ModelConfig::desk());
    assert_eq!((desk.train.epochs, desk.train.batch_size, desk.train.lr), (50, 8, 0.005));
    let ids: Vec<usize> = (0..desk.device.count).collect();
    let (train, _, _) = neurolight::devices::split_dataset(&ids, desk.device.split, desk.device.seed).unwrap();
    assert_eq!(train.len(), 256);

    let partial = WorkbenchConfig::from_toml_str("[train]\nepochs = 3\nencoding = \"eps_only\"\n[model]\nblocks = 2\n").unwrap();
    assert_eq!(partial.train.epochs, 3);
    assert_eq!(partial.model.blocks, 2);
    assert_eq!(partial.model.channels, 16);
    assert_eq!(partial.model.in_channels, 4);

    for bad in ["[train]\nepoch = 3\n", "[bogus]\nx = 1\n", "[model]\nmodes_z = 100\n", "[train]\nlr = -1.0\n", "[eval]\nmode = \"both\"\n"] {
        assert!(WorkbenchConfig::from_toml_str(bad).is_err(), "{bad}");
    }
    let mismatch = "[model]\nin_channels = 8\n[train]\nencoding = \"eps_only\"\n";
    assert!(WorkbenchConfig::from_toml_str(mismatch).is_err());

    let text = desk.to_toml_string().unwrap();
    assert_eq!(WorkbenchConfig::from_toml_str(&text).unwrap(), desk);
}
