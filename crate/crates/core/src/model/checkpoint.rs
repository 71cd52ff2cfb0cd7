use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ModelConfig, ModelError, NeurOLight, ParamInfo, Result};
use crate::encoding::ChannelStats;
use crate::nold::{self, NoldHeader};
use crate::tensor::Tensor;

pub const CHECKPOINT_MANIFEST: &str = "manifest.json";
pub const CHECKPOINT_PARAMS: &str = "params.nold";
const FORMAT_VERSION: u32 = 1;

/// Everything stored next to the parameter blob.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub config: ModelConfig,
    pub dtype: String,
    pub params: Vec<ParamInfo>,
    pub stats: ChannelStats,
    /// Free-form training metadata (epoch, metrics, seed).
    #[serde(default)]
    pub meta: serde_json::Value,
}

/// Writes `dir/manifest.json` and `dir/params.nold` (all arrays concatenated).
pub fn save_checkpoint(dir: &Path, model: &NeurOLight<f32>, stats: &ChannelStats, meta: serde_json::Value) -> Result<()> {
    fs::create_dir_all(dir)?;
    let data: Vec<f32> = model.params().iter().flat_map(|p| p.data().iter().copied()).collect();
    let header = NoldHeader { complex: false, channels: 1, rows: 1, cols: data.len() as u32 };
    nold::write(&dir.join(CHECKPOINT_PARAMS), &header, &data)?;
    let manifest = Checkpoint {
        format_version: FORMAT_VERSION,
        config: model.config().clone(),
        dtype: "f32".into(),
        params: model.info().to_vec(),
        stats: stats.clone(),
        meta,
    };
    fs::write(dir.join(CHECKPOINT_MANIFEST), serde_json::to_string_pretty(&manifest)?)?;
    Ok(())
}

pub fn load_checkpoint(dir: &Path) -> Result<(NeurOLight<f32>, Checkpoint)> {
    let manifest: Checkpoint = serde_json::from_str(&fs::read_to_string(dir.join(CHECKPOINT_MANIFEST))?)?;
    if manifest.format_version != FORMAT_VERSION || manifest.dtype != "f32" {
        return Err(ModelError::Checkpoint(format!("unsupported format {} / {}", manifest.format_version, manifest.dtype)));
    }
    let (_, data) = nold::read(&dir.join(CHECKPOINT_PARAMS))?;
    let total: usize = manifest.params.iter().map(ParamInfo::len).sum();
    if data.len() != total {
        return Err(ModelError::Checkpoint(format!("blob holds {} values, manifest needs {total}", data.len())));
    }
    let mut offset = 0;
    let mut params = Vec::with_capacity(manifest.params.len());
    for info in &manifest.params {
        params.push(Tensor::new(&info.shape, data[offset..offset + info.len()].to_vec())?);
        offset += info.len();
    }
    let model = NeurOLight::from_params(manifest.config.clone(), params)?;
    if model.info() != manifest.params.as_slice() {
        return Err(ModelError::Checkpoint("parameter names differ from the rebuilt layout".into()));
    }
    Ok((model, manifest))
}
