use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use log::{info, warn};
use num_complex::Complex64;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{rasterize, sample_device_with, DeviceError, DeviceKind, DeviceSpec, GeometryRanges};
use crate::nold::{self, NoldHeader};
use crate::solver::{FieldMap, PermittivityMap, SimDomain, Simulation, SourceSpec};

pub const SCHEMA_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetConfig {
    pub kind: DeviceKind,
    pub n_ports: usize,
    pub count: usize,
    pub rows: usize,
    pub cols: usize,
    pub seed: u64,
    pub ranges: GeometryRanges,
    /// Worker threads; 0 picks the process default.
    #[serde(default)]
    pub threads: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordEntry {
    pub id: usize,
    pub seed: u64,
    pub file: String,
    pub spec: DeviceSpec,
    pub domain: SimDomain,
    /// Relative solver residual of each port's solve.
    pub residuals: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedRecord {
    pub id: usize,
    pub seed: u64,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub schema_version: u32,
    pub kind: DeviceKind,
    pub n_ports: usize,
    pub grid: (usize, usize),
    pub seed: u64,
    pub requested: usize,
    pub ranges: GeometryRanges,
    pub records: Vec<RecordEntry>,
    pub skipped: Vec<SkippedRecord>,
}

/// One device with a single-source ground-truth field per input port.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetRecord {
    pub id: usize,
    pub spec: DeviceSpec,
    pub domain: SimDomain,
    pub eps: PermittivityMap,
    pub fields: Vec<(SourceSpec, FieldMap)>,
}

impl DatasetRecord {
    /// Samples, rasterizes and solves one device.
    pub fn simulate(id: usize, spec: DeviceSpec, rows: usize, cols: usize) -> Result<(Self, Vec<f64>), DeviceError> {
        let (domain, eps) = rasterize(&spec, rows, cols)?;
        let sim = Simulation::new(&eps, spec.wavelength)?;
        let mut fields = Vec::with_capacity(spec.n_ports);
        let mut residuals = Vec::with_capacity(spec.n_ports);
        for src in spec.sources() {
            let sol = sim.solve(std::slice::from_ref(&src))?;
            residuals.push(sol.residual);
            fields.push((src, sol.field));
        }
        Ok((Self { id, spec, domain, eps, fields }, residuals))
    }

    fn to_blob(&self) -> (NoldHeader, Vec<f32>) {
        let d = self.domain;
        let header = NoldHeader { complex: true, channels: 1 + self.fields.len() as u32, rows: d.rows as u32, cols: d.cols as u32 };
        let mut data = Vec::with_capacity(header.samples());
        let planes = std::iter::once(&self.eps.eps).chain(self.fields.iter().map(|(_, f)| &f.values));
        for plane in planes {
            for v in plane {
                data.push(v.re as f32);
                data.push(v.im as f32);
            }
        }
        (header, data)
    }
}

/// Deterministic per-record seed (SplitMix64 of the base seed and index).
pub fn record_seed(base: u64, index: usize) -> u64 {
    let mut z = base ^ (index as u64).wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Generates `config.count` devices into `out_dir`, one NOLD blob per record
/// plus `manifest.json`. Failed samples are logged and listed as skipped.
pub fn generate_dataset(config: &DatasetConfig, out_dir: &Path) -> Result<DatasetManifest, DeviceError> {
    fs::create_dir_all(out_dir)?;
    let threads = if config.threads == 0 { crate::worker_threads() } else { config.threads }.max(1);
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<Result<RecordEntry, SkippedRecord>>>> = Mutex::new(vec![None; config.count]);
    let work = || -> Result<(), DeviceError> {
        loop {
            let id = next.fetch_add(1, Ordering::SeqCst);
            if id >= config.count {
                return Ok(());
            }
            let seed = record_seed(config.seed, id);
            let outcome = sample_device_with(&config.ranges, config.kind, config.n_ports, seed)
                .and_then(|spec| DatasetRecord::simulate(id, spec, config.rows, config.cols));
            let entry = match outcome {
                Ok((record, residuals)) => {
                    let file = format!("record_{id:05}.nold");
                    let (header, data) = record.to_blob();
                    nold::write(&out_dir.join(&file), &header, &data)?;
                    Ok(RecordEntry { id, seed, file, spec: record.spec, domain: record.domain, residuals })
                }
                Err(e) => {
                    warn!("record {id} (seed {seed}) skipped: {e}");
                    Err(SkippedRecord { id, seed, error: e.to_string() })
                }
            };
            slots.lock().expect("dataset worker panicked")[id] = Some(entry);
        }
    };
    std::thread::scope(|s| {
        let handles: Vec<_> = (0..threads).map(|_| s.spawn(work)).collect();
        handles.into_iter().try_for_each(|h| h.join().expect("dataset worker panicked"))
    })?;
    let mut records = Vec::new();
    let mut skipped = Vec::new();
    for slot in slots.into_inner().expect("dataset worker panicked") {
        match slot.expect("every index is visited") {
            Ok(r) => records.push(r),
            Err(s) => skipped.push(s),
        }
    }
    info!("generated {} records ({} skipped) into {}", records.len(), skipped.len(), out_dir.display());
    let manifest = DatasetManifest {
        schema_version: SCHEMA_VERSION,
        kind: config.kind,
        n_ports: config.n_ports,
        grid: (config.rows, config.cols),
        seed: config.seed,
        requested: config.count,
        ranges: config.ranges.clone(),
        records,
        skipped,
    };
    fs::write(out_dir.join(MANIFEST_FILE), serde_json::to_string_pretty(&manifest)?)?;
    Ok(manifest)
}

/// A generated dataset on disk.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub dir: PathBuf,
    pub manifest: DatasetManifest,
}

impl Dataset {
    pub fn open(dir: &Path) -> Result<Self, DeviceError> {
        let manifest: DatasetManifest = serde_json::from_str(&fs::read_to_string(dir.join(MANIFEST_FILE))?)?;
        if manifest.schema_version != SCHEMA_VERSION {
            return Err(DeviceError::Manifest(format!("schema version {}", manifest.schema_version)));
        }
        Ok(Self { dir: dir.to_path_buf(), manifest })
    }

    pub fn len(&self) -> usize {
        self.manifest.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.manifest.records.is_empty()
    }

    /// Loads the record at manifest position `pos`. Permittivity is
    /// re-rasterized from the spec in double precision; fields come from the blob.
    pub fn load(&self, pos: usize) -> Result<DatasetRecord, DeviceError> {
        let entry = &self.manifest.records[pos];
        let (header, data) = nold::read(&self.dir.join(&entry.file))?;
        let (rows, cols) = self.manifest.grid;
        let planes = 1 + entry.spec.n_ports;
        if !header.complex || header.channels as usize != planes || header.rows as usize != rows || header.cols as usize != cols {
            return Err(DeviceError::Manifest(format!("blob {} has header {header:?}", entry.file)));
        }
        let (domain, eps) = rasterize(&entry.spec, rows, cols)?;
        let plane = rows * cols;
        let fields = entry
            .spec
            .sources()
            .into_iter()
            .enumerate()
            .map(|(k, src)| {
                let raw = &data[2 * plane * (k + 1)..2 * plane * (k + 2)];
                let values = raw.chunks_exact(2).map(|c| Complex64::new(c[0] as f64, c[1] as f64)).collect();
                Ok((src, FieldMap::new(domain, values)?))
            })
            .collect::<Result<Vec<_>, DeviceError>>()?;
        Ok(DatasetRecord { id: entry.id, spec: entry.spec.clone(), domain, eps, fields })
    }

    pub fn load_all(&self) -> Result<Vec<DatasetRecord>, DeviceError> {
        (0..self.len()).map(|p| self.load(p)).collect()
    }
}

/// Disjoint, seeded split of `ids` into train / validation / test by device.
pub fn split_dataset(ids: &[usize], fractions: [f64; 3], seed: u64) -> Result<(Vec<usize>, Vec<usize>, Vec<usize>), DeviceError> {
    if fractions.iter().any(|f| !(*f >= 0.0)) || (fractions.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(DeviceError::InvalidFractions(fractions));
    }
    let mut order = ids.to_vec();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n = order.len();
    let n_train = ((fractions[0] * n as f64).round() as usize).min(n);
    let n_val = ((fractions[1] * n as f64).round() as usize).min(n - n_train);
    let mut train = order[..n_train].to_vec();
    let mut val = order[n_train..n_train + n_val].to_vec();
    let mut test = order[n_train + n_val..].to_vec();
    train.sort_unstable();
    val.sort_unstable();
    test.sort_unstable();
    Ok((train, val, test))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn paper_split_counts() {
        let ids: Vec<usize> = (0..100).collect();
        let (a, b, c) = split_dataset(&ids, [0.72, 0.08, 0.20], 3).unwrap();
        assert_eq!((a.len(), b.len(), c.len()), (72, 8, 20));
        let mut all: Vec<usize> = a.iter().chain(&b).chain(&c).copied().collect();
        all.sort_unstable();
        assert_eq!(all, ids);
        let (a, b, c) = split_dataset(&ids, [1.0, 0.0, 0.0], 3).unwrap();
        assert_eq!((a.len(), b.len(), c.len()), (100, 0, 0));
        assert_eq!(split_dataset(&ids, [0.72, 0.08, 0.20], 3).unwrap(), split_dataset(&ids, [0.72, 0.08, 0.20], 3).unwrap());
        assert!(split_dataset(&ids, [0.5, 0.2, 0.2], 0).is_err());
    }

    #[test]
    fn record_seeds_differ() {
        let seeds: std::collections::HashSet<u64> = (0..1000).map(|i| record_seed(42, i)).collect();
        assert_eq!(seeds.len(), 1000);
    }
}
