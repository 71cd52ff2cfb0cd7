//! Cross-shaped Fourier neural operator: convolution stem, `K` blocks of
//! bisected 1-D spectral convolutions with a convolutional FFN, and a
//! pointwise projection head.

mod checkpoint;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_MANIFEST, CHECKPOINT_PARAMS};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::nold::NoldError;
use crate::tensor::{Mode, Real, Tape, Tensor, TensorError, Var};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid model config: {0}")]
    InvalidConfig(String),
    #[error("{modes} modes requested along axis {axis} of length {len}")]
    ModesExceedAxis { axis: usize, modes: usize, len: usize },
    #[error("input has shape {got:?}, expected [B, {expected}, rows, cols]")]
    InputShape { expected: usize, got: Vec<usize> },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Container(#[from] NoldError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, ModelError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum StemKind {
    /// Stacked blueprint 3×3 convolutions with norm and ReLU.
    #[default]
    Blueprint,
    /// One pointwise projection to `channels`.
    Lifting,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum FfnKind {
    /// Pointwise expand, depthwise 3×3, GELU, pointwise project.
    #[default]
    Conv,
    /// Channel norm followed by GELU.
    NormGelu,
}

fn default_in_channels() -> usize {
    8
}
fn default_channels() -> usize {
    64
}
fn default_blocks() -> usize {
    12
}
fn default_modes_z() -> usize {
    70
}
fn default_modes_x() -> usize {
    40
}
fn default_ffn_ratio() -> usize {
    2
}
fn default_head_channels() -> usize {
    256
}
fn default_dropout() -> f64 {
    0.1
}
fn default_droppath() -> f64 {
    0.1
}
fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    /// Input planes produced by the encoder.
    #[serde(default = "default_in_channels")]
    pub in_channels: usize,
    /// Base width `C`; must be even.
    #[serde(default = "default_channels")]
    pub channels: usize,
    #[serde(default = "default_blocks")]
    pub blocks: usize,
    /// Fourier modes kept along `z` (columns).
    #[serde(default = "default_modes_z")]
    pub modes_z: usize,
    /// Fourier modes kept along `x` (rows).
    #[serde(default = "default_modes_x")]
    pub modes_x: usize,
    /// FFN expansion ratio `s`.
    #[serde(default = "default_ffn_ratio")]
    pub ffn_ratio: usize,
    #[serde(default = "default_head_channels")]
    pub head_channels: usize,
    /// Dropout rate inside the head.
    #[serde(default = "default_dropout")]
    pub dropout: f64,
    /// Drop-path rate of the last block; earlier blocks scale linearly from 0.
    #[serde(default = "default_droppath")]
    pub droppath: f64,
    /// Output widths of the blueprint stem layers; defaults to `[C/2, C]`.
    #[serde(default)]
    pub stem_channels: Option<Vec<usize>>,
    #[serde(default)]
    pub stem: StemKind,
    #[serde(default)]
    pub ffn: FfnKind,
    /// Depthwise 3×3 inside the conv FFN.
    #[serde(default = "default_true")]
    pub ffn_dwconv: bool,
    /// Extra depthwise 3×3 path added to the spectral output.
    #[serde(default)]
    pub parallel_conv: bool,
    /// GELU between the spectral op and the FFN.
    #[serde(default)]
    pub extra_gelu: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            in_channels: default_in_channels(),
            channels: default_channels(),
            blocks: default_blocks(),
            modes_z: default_modes_z(),
            modes_x: default_modes_x(),
            ffn_ratio: default_ffn_ratio(),
            head_channels: default_head_channels(),
            dropout: default_dropout(),
            droppath: default_droppath(),
            stem_channels: None,
            stem: StemKind::Blueprint,
            ffn: FfnKind::Conv,
            ffn_dwconv: true,
            parallel_conv: false,
            extra_gelu: false,
        }
    }
}

impl ModelConfig {
    /// Laptop-sized preset: `C = 16`, `K = 4`, modes `(16, 8)`.
    pub fn desk() -> Self {
        Self { channels: 16, blocks: 4, modes_z: 16, modes_x: 8, ..Self::default() }
    }

    pub fn stem_widths(&self) -> Vec<usize> {
        self.stem_channels.clone().unwrap_or_else(|| vec![self.channels / 2, self.channels])
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(ModelError::InvalidConfig(m));
        if self.channels < 2 || !self.channels.is_multiple_of(2) {
            return bad(format!("channels = {} must be even and at least 2", self.channels));
        }
        if self.blocks == 0 || self.in_channels == 0 || self.ffn_ratio == 0 || self.head_channels == 0 {
            return bad("blocks, in_channels, ffn_ratio and head_channels must be positive".into());
        }
        if self.modes_z == 0 || self.modes_x == 0 {
            return bad("mode counts must be positive".into());
        }
        for (name, p) in [("dropout", self.dropout), ("droppath", self.droppath)] {
            if !(0.0..1.0).contains(&p) {
                return bad(format!("{name} = {p} outside [0, 1)"));
            }
        }
        if self.stem == StemKind::Blueprint {
            let widths = self.stem_widths();
            if widths.is_empty() || widths.contains(&0) || widths.last() != Some(&self.channels) {
                return bad(format!("stem widths {widths:?} must be positive and end at {}", self.channels));
            }
        }
        Ok(())
    }

    /// Checks the kept modes against a `rows × cols` grid.
    pub fn check_grid(&self, rows: usize, cols: usize) -> Result<()> {
        if self.modes_z > cols {
            return Err(ModelError::ModesExceedAxis { axis: 3, modes: self.modes_z, len: cols });
        }
        if self.modes_x > rows {
            return Err(ModelError::ModesExceedAxis { axis: 2, modes: self.modes_x, len: rows });
        }
        Ok(())
    }

    /// Drop-path rate of block `k`.
    pub fn droppath_at(&self, k: usize) -> f64 {
        if self.blocks <= 1 {
            0.0
        } else {
            self.droppath * k as f64 / (self.blocks - 1) as f64
        }
    }

    /// `(k_z + k_x + 8s)·C²/4`.
    pub fn block_formula(&self) -> usize {
        (self.modes_z + self.modes_x + 8 * self.ffn_ratio) * self.channels * self.channels / 4
    }
}

/// Name, shape and kind of one parameter array.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamInfo {
    pub name: String,
    pub shape: Vec<usize>,
    /// Trailing axis of length 2 holds `(Re, Im)`.
    pub complex: bool,
}

impl ParamInfo {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Entries with a complex number counted once.
    pub fn entries(&self) -> usize {
        if self.complex {
            self.len() / 2
        } else {
            self.len()
        }
    }

    pub fn is_head(&self) -> bool {
        self.name.starts_with("head.")
    }
}

/// Parameter totals under both counting conventions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamCount {
    pub complex_as_one: usize,
    pub real: usize,
}

#[derive(Debug, Clone)]
struct BlueprintLayer {
    pw: usize,
    dw: usize,
    dw_bias: usize,
    gamma: usize,
    beta: usize,
}

#[derive(Debug, Clone)]
enum StemLayout {
    Blueprint(Vec<BlueprintLayer>),
    Lifting { w: usize, b: usize },
}

#[derive(Debug, Clone)]
enum FfnLayout {
    Conv { w_in: usize, b_in: usize, dw: Option<(usize, usize)>, w_out: usize, b_out: usize },
    NormGelu { gamma: usize, beta: usize },
}

#[derive(Debug, Clone)]
struct BlockLayout {
    r_z: usize,
    r_x: usize,
    parallel: Option<(usize, usize)>,
    ffn: FfnLayout,
}

#[derive(Debug, Clone)]
struct Layout {
    stem: StemLayout,
    blocks: Vec<BlockLayout>,
    head: [usize; 4],
}

/// Tape handles for every parameter, in parameter order.
#[derive(Debug, Clone)]
pub struct Bound(Vec<Var>);

impl Bound {
    pub fn new(vars: Vec<Var>) -> Self {
        Self(vars)
    }

    pub fn vars(&self) -> &[Var] {
        &self.0
    }
}

#[derive(Debug, Clone)]
pub struct NeurOLight<T> {
    config: ModelConfig,
    info: Vec<ParamInfo>,
    params: Vec<Tensor<T>>,
    layout: Layout,
}

struct Builder<'a, T> {
    info: Vec<ParamInfo>,
    params: Vec<Tensor<T>>,
    rng: &'a mut ChaCha8Rng,
}

impl<T: Real> Builder<'_, T> {
    fn push(&mut self, name: String, value: Tensor<T>, complex: bool) -> usize {
        self.info.push(ParamInfo { name, shape: value.shape().to_vec(), complex });
        self.params.push(value);
        self.params.len() - 1
    }

    fn uniform(&mut self, name: String, shape: &[usize], bound: f64) -> usize {
        let t = Tensor::from_fn(shape, |_| T::of(self.rng.random_range(-bound..bound)));
        self.push(name, t, false)
    }

    fn constant(&mut self, name: String, shape: &[usize], value: f64) -> usize {
        self.push(name, Tensor::full(shape, T::of(value)), false)
    }

    fn pointwise(&mut self, name: &str, out: usize, inp: usize, bias: bool) -> (usize, Option<usize>) {
        let bound = 1.0 / (inp as f64).sqrt();
        let w = self.uniform(format!("{name}.weight"), &[out, inp], bound);
        let b = bias.then(|| self.uniform(format!("{name}.bias"), &[out], bound));
        (w, b)
    }

    fn depthwise(&mut self, name: &str, c: usize) -> (usize, usize) {
        let bound = 1.0 / 3.0;
        let w = self.uniform(format!("{name}.weight"), &[c, 3, 3], bound);
        let b = self.uniform(format!("{name}.bias"), &[c], bound);
        (w, b)
    }

    fn norm(&mut self, name: &str, c: usize) -> (usize, usize) {
        (self.constant(format!("{name}.gamma"), &[c], 1.0), self.constant(format!("{name}.beta"), &[c], 0.0))
    }

    fn spectral(&mut self, name: String, modes: usize, half: usize) -> usize {
        let scale = 1.0 / half as f64;
        let t = Tensor::from_fn(&[modes, half, half, 2], |_| T::of(self.rng.random::<f64>() * scale));
        self.push(name, t, true)
    }
}

impl<T: Real> NeurOLight<T> {
    /// Builds a freshly initialized model.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut b = Builder::<T> { info: Vec::new(), params: Vec::new(), rng: &mut rng };
        let c = config.channels;
        let half = c / 2;

        let stem = match config.stem {
            StemKind::Blueprint => {
                let mut layers = Vec::new();
                let mut inp = config.in_channels;
                for (k, out) in config.stem_widths().into_iter().enumerate() {
                    let (pw, _) = b.pointwise(&format!("stem.{k}.pw"), out, inp, false);
                    let (dw, dw_bias) = b.depthwise(&format!("stem.{k}.dw"), out);
                    let (gamma, beta) = b.norm(&format!("stem.{k}.norm"), out);
                    layers.push(BlueprintLayer { pw, dw, dw_bias, gamma, beta });
                    inp = out;
                }
                StemLayout::Blueprint(layers)
            }
            StemKind::Lifting => {
                let (w, bias) = b.pointwise("stem.lift", c, config.in_channels, true);
                StemLayout::Lifting { w, b: bias.expect("bias requested") }
            }
        };

        let mut blocks = Vec::with_capacity(config.blocks);
        for k in 0..config.blocks {
            let r_z = b.spectral(format!("block.{k}.spectral_z"), config.modes_z, half);
            let r_x = b.spectral(format!("block.{k}.spectral_x"), config.modes_x, half);
            let parallel = config.parallel_conv.then(|| b.depthwise(&format!("block.{k}.parallel"), c));
            let ffn = match config.ffn {
                FfnKind::Conv => {
                    let wide = config.ffn_ratio * c;
                    let (w_in, b_in) = b.pointwise(&format!("block.{k}.ffn.expand"), wide, c, true);
                    let dw = config.ffn_dwconv.then(|| b.depthwise(&format!("block.{k}.ffn.dw"), wide));
                    let (w_out, b_out) = b.pointwise(&format!("block.{k}.ffn.project"), c, wide, true);
                    FfnLayout::Conv { w_in, b_in: b_in.expect("bias"), dw, w_out, b_out: b_out.expect("bias") }
                }
                FfnKind::NormGelu => {
                    let (gamma, beta) = b.norm(&format!("block.{k}.ffn.norm"), c);
                    FfnLayout::NormGelu { gamma, beta }
                }
            };
            blocks.push(BlockLayout { r_z, r_x, parallel, ffn });
        }

        let (w1, b1) = b.pointwise("head.0", config.head_channels, c, true);
        let (w2, b2) = b.pointwise("head.1", 2, config.head_channels, true);
        let head = [w1, b1.expect("bias"), w2, b2.expect("bias")];

        let Builder { info, params, .. } = b;
        Ok(Self { config, info, params, layout: Layout { stem, blocks, head } })
    }

    /// Rebuilds the layout for `config` and installs `params` in place of the
    /// initialized values. Shapes must match exactly.
    pub fn from_params(config: ModelConfig, params: Vec<Tensor<T>>) -> Result<Self> {
        let mut model = Self::new(config, 0)?;
        if params.len() != model.params.len() {
            return Err(ModelError::Checkpoint(format!("{} arrays for {} parameters", params.len(), model.params.len())));
        }
        for (info, p) in model.info.iter().zip(&params) {
            if info.shape != p.shape() {
                return Err(ModelError::Checkpoint(format!("{} has shape {:?}, expected {:?}", info.name, p.shape(), info.shape)));
            }
        }
        model.params = params;
        Ok(model)
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn info(&self) -> &[ParamInfo] {
        &self.info
    }

    pub fn params(&self) -> &[Tensor<T>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Tensor<T>] {
        &mut self.params
    }

    /// Index of the parameter called `name`.
    pub fn find(&self, name: &str) -> Option<usize> {
        self.info.iter().position(|p| p.name == name)
    }

    pub fn cast<U: Real>(&self) -> NeurOLight<U> {
        NeurOLight {
            config: self.config.clone(),
            info: self.info.clone(),
            params: self.params.iter().map(Tensor::cast).collect(),
            layout: self.layout.clone(),
        }
    }

    pub fn param_count(&self) -> ParamCount {
        ParamCount {
            complex_as_one: self.info.iter().map(ParamInfo::entries).sum(),
            real: self.info.iter().map(ParamInfo::len).sum(),
        }
    }

    /// Parameters of block `k`, complex entries counted once.
    pub fn block_count(&self, k: usize) -> usize {
        let prefix = format!("block.{k}.");
        self.info.iter().filter(|p| p.name.starts_with(&prefix)).map(ParamInfo::entries).sum()
    }

    /// Spectral kernels and FFN pointwise weights of block `k`: the part the
    /// closed-form count covers exactly.
    pub fn block_core_count(&self, k: usize) -> usize {
        let prefix = format!("block.{k}.");
        self.info
            .iter()
            .filter(|p| p.name.starts_with(&prefix))
            .filter(|p| p.complex || (p.shape.len() == 2 && p.name.ends_with(".weight")))
            .map(ParamInfo::entries)
            .sum()
    }

    /// Copy with different mode counts: kernels are truncated, or padded with zeros.
    pub fn with_modes(&self, modes_z: usize, modes_x: usize) -> Result<Self> {
        let config = ModelConfig { modes_z, modes_x, ..self.config.clone() };
        let mut out = Self::new(config, 0)?;
        for (k, p) in self.params.iter().enumerate() {
            out.params[k] = if out.info[k].complex && out.info[k].shape != p.shape() {
                let shape = &out.info[k].shape;
                let per = shape[1..].iter().product::<usize>();
                let keep = shape[0].min(p.shape()[0]) * per;
                let mut data = vec![T::zero(); shape.iter().product()];
                data[..keep].copy_from_slice(&p.data()[..keep]);
                Tensor::new(shape, data)?
            } else {
                p.clone()
            };
        }
        Ok(out)
    }

    /// Records every parameter on `tape`; those for which `trainable` returns
    /// false become constants.
    pub fn bind(&self, tape: &mut Tape<T>, trainable: impl Fn(&ParamInfo) -> bool) -> Bound {
        Bound(self.info.iter().zip(&self.params).map(|(i, p)| tape.leaf(p.clone(), trainable(i))).collect())
    }

    fn check_input(&self, shape: &[usize]) -> Result<()> {
        if shape.len() != 4 || shape[1] != self.config.in_channels {
            return Err(ModelError::InputShape { expected: self.config.in_channels, got: shape.to_vec() });
        }
        self.config.check_grid(shape[2], shape[3])
    }

    /// Stem features `[B, C, rows, cols]`.
    pub fn stem(&self, tape: &mut Tape<T>, p: &Bound, x: Var) -> Result<Var> {
        self.check_input(tape.value(x).shape())?;
        let v = &p.0;
        Ok(match &self.layout.stem {
            StemLayout::Blueprint(layers) => {
                let mut h = x;
                for l in layers {
                    h = tape.conv_blueprint3x3(h, v[l.pw], v[l.dw], Some(v[l.dw_bias]));
                    h = tape.layer_norm(h, v[l.gamma], v[l.beta]);
                    h = tape.relu(h);
                }
                h
            }
            StemLayout::Lifting { w, b } => tape.conv_pointwise(x, v[*w], Some(v[*b])),
        })
    }

    fn spectral_1d(tape: &mut Tape<T>, x: Var, r: Var, axis: usize, modes: usize) -> Var {
        let n = tape.value(x).shape()[axis];
        let c = tape.to_complex(x);
        let f = tape.fft_1d(c, axis);
        let low = tape.mode_truncate(f, axis, modes);
        let mixed = tape.complex_mode_mix(low, r, axis);
        let full = tape.mode_pad(mixed, axis, n);
        let back = tape.ifft_1d(full, axis);
        tape.real_part(back)
    }

    /// Cross-shaped spectral operator of block `k`: the first channel half
    /// is mixed along `z`, the second along `x`.
    pub fn cross_spectral(&self, tape: &mut Tape<T>, p: &Bound, k: usize, x: Var) -> Var {
        let b = &self.layout.blocks[k];
        let half = self.config.channels / 2;
        let h = tape.slice_channels(x, 0, half);
        let w = tape.slice_channels(x, half, half);
        let hz = Self::spectral_1d(tape, h, p.0[b.r_z], 3, self.config.modes_z);
        let wx = Self::spectral_1d(tape, w, p.0[b.r_x], 2, self.config.modes_x);
        tape.concat_channels(&[hz, wx])
    }

    /// One residual block.
    pub fn block(&self, tape: &mut Tape<T>, p: &Bound, k: usize, x: Var, mode: Mode, rng: &mut impl Rng) -> Var {
        let b = &self.layout.blocks[k];
        let v = &p.0;
        let mut h = self.cross_spectral(tape, p, k, x);
        if let Some((w, bias)) = b.parallel {
            let local = tape.conv_depthwise3x3(x, v[w], Some(v[bias]));
            h = tape.add(h, local);
        }
        if self.config.extra_gelu {
            h = tape.gelu(h);
        }
        let f = match &b.ffn {
            FfnLayout::Conv { w_in, b_in, dw, w_out, b_out } => {
                let mut f = tape.conv_pointwise(h, v[*w_in], Some(v[*b_in]));
                if let Some((dw, dwb)) = dw {
                    f = tape.conv_depthwise3x3(f, v[*dw], Some(v[*dwb]));
                }
                f = tape.gelu(f);
                tape.conv_pointwise(f, v[*w_out], Some(v[*b_out]))
            }
            FfnLayout::NormGelu { gamma, beta } => {
                let n = tape.layer_norm(h, v[*gamma], v[*beta]);
                tape.gelu(n)
            }
        };
        let f = tape.droppath(f, self.config.droppath_at(k), mode, rng);
        tape.add(f, x)
    }

    pub fn head(&self, tape: &mut Tape<T>, p: &Bound, x: Var, mode: Mode, rng: &mut impl Rng) -> Var {
        let [w1, b1, w2, b2] = self.layout.head.map(|i| p.0[i]);
        let h = tape.conv_pointwise(x, w1, Some(b1));
        let h = tape.gelu(h);
        let h = tape.dropout(h, self.config.dropout, mode, rng);
        tape.conv_pointwise(h, w2, Some(b2))
    }

    /// Full forward pass: `[B, in_channels, rows, cols] → [B, 2, rows, cols]`.
    pub fn forward(&self, tape: &mut Tape<T>, p: &Bound, x: Var, mode: Mode, rng: &mut impl Rng) -> Result<Var> {
        let mut h = self.stem(tape, p, x)?;
        for k in 0..self.config.blocks {
            h = self.block(tape, p, k, h, mode, rng);
        }
        Ok(self.head(tape, p, h, mode, rng))
    }

    /// Eval-mode prediction on a fresh tape.
    pub fn predict(&self, input: &Tensor<T>) -> Result<Tensor<T>> {
        let mut tape = Tape::new();
        let p = self.bind(&mut tape, |_| false);
        let x = tape.constant(input.clone());
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let out = self.forward(&mut tape, &p, x, Mode::Eval, &mut rng)?;
        Ok(tape.value(out).clone())
    }
}
