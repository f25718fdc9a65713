//! 3D U-Net assembled from the layers in [`crate::tensor`].
//!
//! Each encoder level runs `convs_per_block` units of conv 3×3×3 →
//! batch norm → ReLU and then a 2×2×1 max pool, so the slice count never
//! changes. The bottleneck runs one more block followed by dropout. Each
//! decoder level upsamples with a 2×2×1 transposed convolution,
//! concatenates the matching encoder output and runs a block. A 1×1×1
//! convolution and a channel softmax produce the two class probabilities.
//!
//! Parameters are named by path:
//!
//! ```text
//! down{l}/conv{i}/{kernel,bias,gamma,beta}
//! bottom/conv{i}/...
//! up{l}/upconv/{kernel,bias}
//! up{l}/conv{i}/...
//! head/conv/{kernel,bias}
//! ```

use indexmap::IndexMap;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{
    batchnorm_backward, batchnorm_forward, concat_channels, conv1x1_backward, conv1x1_forward,
    conv3d_backward, conv3d_forward, dropout, dropout_backward, maxpool_2x2x1_backward,
    maxpool_2x2x1_forward, relu, relu_backward, softmax_backward, softmax_channels,
    split_channels, upconv_2x2x1_backward, upconv_2x2x1_forward, BatchNormCache,
    BatchNormConfig, BatchNormState, DenseTensor, Mode, PoolRecord, Real,
};
use crate::training::RmspropState;
use crate::volume::{from_tensor_plane, to_tensor, MaskVolume, StudyVolume, Volume};

/// Probability above which a voxel is labelled aorta. Exactly 0.5 is
/// background.
pub const MASK_THRESHOLD: f64 = 0.5;

/// Index of the aorta class in the network output.
pub const AORTA_CHANNEL: usize = 1;

/// How clamped intensities are mapped onto [0, 1].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntensityScaling {
    /// Min-max over the clamped volume itself. On CT with air and bone in
    /// the field of view this coincides with `Window`.
    #[default]
    VolumeRange,
    /// The clamp window's end points map to 0 and 1.
    Window,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UNetConfig {
    pub levels: usize,
    pub init_features: usize,
    pub convs_per_block: usize,
    pub growth_factor: usize,
    pub classes: usize,
    pub bottleneck_dropout: f64,
    pub batch_norm: BatchNormConfig,
    /// Intensities are clamped to this window and rescaled to [0, 1].
    pub intensity_window: [f32; 2],
    #[serde(default)]
    pub intensity_scaling: IntensityScaling,
}

impl Default for UNetConfig {
    fn default() -> Self {
        Self {
            levels: 4,
            init_features: 32,
            convs_per_block: 2,
            growth_factor: 2,
            classes: 2,
            bottleneck_dropout: 0.2,
            batch_norm: BatchNormConfig::default(),
            intensity_window: [-200.0, 500.0],
            intensity_scaling: IntensityScaling::VolumeRange,
        }
    }
}

impl UNetConfig {
    /// Desk-scale variant with the given depth and width.
    pub fn small(levels: usize, init_features: usize) -> Self {
        Self {
            levels,
            init_features,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if self.levels < 1 {
            return bad("network needs at least one level".into());
        }
        if self.init_features < 1 || self.convs_per_block < 1 || self.growth_factor < 1 {
            return bad(format!(
                "features, convs per block and growth must be positive: {self:?}"
            ));
        }
        if self.classes != 2 {
            return bad(format!("expected 2 classes, got {}", self.classes));
        }
        if !(0.0..1.0).contains(&self.bottleneck_dropout) {
            return bad(format!("dropout rate {} outside [0, 1)", self.bottleneck_dropout));
        }
        let [lo, hi] = self.intensity_window;
        if !(hi > lo) {
            return bad(format!("empty intensity window {lo}..{hi}"));
        }
        Ok(())
    }

    /// Channels at `level`; the bottleneck is `level == levels`.
    pub fn features(&self, level: usize) -> usize {
        self.init_features * self.growth_factor.pow(level as u32)
    }

    /// x and y extents must be multiples of this.
    pub fn grid(&self) -> usize {
        1 << self.levels
    }

    /// Every parameter the architecture needs, in construction order.
    pub fn parameter_shapes(&self) -> Vec<(String, Vec<usize>)> {
        let mut out = Vec::new();
        let block = |out: &mut Vec<(String, Vec<usize>)>, prefix: &str, cin: usize, cout: usize| {
            for i in 1..=self.convs_per_block {
                let c_in = if i == 1 { cin } else { cout };
                let name = format!("{prefix}/conv{i}");
                out.push((format!("{name}/kernel"), vec![cout, c_in, 3, 3, 3]));
                out.push((format!("{name}/bias"), vec![cout]));
                out.push((format!("{name}/gamma"), vec![cout]));
                out.push((format!("{name}/beta"), vec![cout]));
            }
        };
        let mut cin = 1;
        for l in 0..self.levels {
            block(&mut out, &format!("down{l}"), cin, self.features(l));
            cin = self.features(l);
        }
        block(&mut out, "bottom", cin, self.features(self.levels));
        for l in (0..self.levels).rev() {
            let (below, here) = (self.features(l + 1), self.features(l));
            out.push((format!("up{l}/upconv/kernel"), vec![below, here, 2, 2, 1]));
            out.push((format!("up{l}/upconv/bias"), vec![here]));
            block(&mut out, &format!("up{l}"), 2 * here, here);
        }
        out.push(("head/conv/kernel".into(), vec![self.classes, self.features(0), 1, 1, 1]));
        out.push(("head/conv/bias".into(), vec![self.classes]));
        out
    }

    /// Names of the conv units followed by batch norm.
    pub fn batch_norm_units(&self) -> Vec<String> {
        let mut prefixes: Vec<String> = (0..self.levels).map(|l| format!("down{l}")).collect();
        prefixes.push("bottom".into());
        prefixes.extend((0..self.levels).rev().map(|l| format!("up{l}")));
        prefixes
            .iter()
            .flat_map(|p| (1..=self.convs_per_block).map(move |i| format!("{p}/conv{i}")))
            .collect()
    }

    /// Clamp to the window, then rescale to [0, 1] as `intensity_scaling`
    /// says. A constant volume maps to 0.
    pub fn normalize_intensities(&self, data: &[f32]) -> Vec<f32> {
        let [lo, hi] = self.intensity_window;
        let clamped = data.iter().map(|&v| v.clamp(lo, hi));
        let (lo, hi) = match self.intensity_scaling {
            IntensityScaling::Window => (lo, hi),
            IntensityScaling::VolumeRange => clamped
                .clone()
                .fold((f32::INFINITY, f32::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v))),
        };
        if !(hi > lo) {
            return vec![0.0; data.len()];
        }
        clamped.map(|v| (v - lo) / (hi - lo)).collect()
    }
}

/// Trainable parameters plus batch-norm running statistics and optimizer
/// state.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightStore<T = f32> {
    pub params: IndexMap<String, DenseTensor<T>>,
    pub batch_norm: IndexMap<String, BatchNormState<T>>,
    pub optimizer: Option<RmspropState<T>>,
}

pub type ParamMap<T = f32> = IndexMap<String, DenseTensor<T>>;

impl<T: Real> WeightStore<T> {
    pub fn param(&self, name: &str) -> Result<&DenseTensor<T>> {
        self.params
            .get(name)
            .ok_or_else(|| Error::InvalidArgument(format!("weight store has no parameter `{name}`")))
    }

    pub fn parameter_count(&self) -> usize {
        self.params.values().map(|t| t.len()).sum()
    }

    /// Check that every parameter and batch-norm unit the config demands is
    /// present with the expected shape, and nothing else.
    pub fn validate(&self, config: &UNetConfig) -> Result<()> {
        let expected = config.parameter_shapes();
        if expected.len() != self.params.len() {
            return Err(Error::InvalidArgument(format!(
                "expected {} parameters, store has {}",
                expected.len(),
                self.params.len()
            )));
        }
        for (name, shape) in &expected {
            let t = self.param(name)?;
            if t.shape() != shape.as_slice() {
                return Err(Error::shape("weight store", t.shape(), shape));
            }
        }
        for unit in config.batch_norm_units() {
            if !self.batch_norm.contains_key(&unit) {
                return Err(Error::InvalidArgument(format!(
                    "weight store has no batch norm state for `{unit}`"
                )));
            }
        }
        Ok(())
    }

    pub fn cast<U: Real>(&self) -> WeightStore<U> {
        WeightStore {
            params: self.params.iter().map(|(k, v)| (k.clone(), v.cast())).collect(),
            batch_norm: self
                .batch_norm
                .iter()
                .map(|(k, s)| {
                    (
                        k.clone(),
                        BatchNormState {
                            running_mean: s.running_mean.iter().map(|v| U::of(v.as_f64())).collect(),
                            running_var: s.running_var.iter().map(|v| U::of(v.as_f64())).collect(),
                        },
                    )
                })
                .collect(),
            optimizer: self.optimizer.as_ref().map(|o| o.cast()),
        }
    }
}

/// Fresh weights: He-normal conv kernels (std `√(2/fan_in)`), zero biases,
/// unit gamma, zero beta and running statistics (0, 1).
pub fn build<T: Real>(config: &UNetConfig, seed: u64) -> Result<WeightStore<T>> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = IndexMap::new();
    for (name, shape) in config.parameter_shapes() {
        let t = if name.ends_with("/kernel") {
            let fan_in: usize = if name.contains("upconv") {
                shape[0] * shape[2] * shape[3] * shape[4]
            } else {
                shape[1..].iter().product()
            };
            let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt())
                .map_err(|e| Error::Numeric(e.to_string()))?;
            DenseTensor::from_fn(&shape, |_| T::of(normal.sample(&mut rng)))
        } else if name.ends_with("/gamma") {
            DenseTensor::filled(&shape, T::one())
        } else {
            DenseTensor::zeros(&shape)
        };
        params.insert(name, t);
    }
    let batch_norm = config
        .batch_norm_units()
        .into_iter()
        .map(|unit| {
            let c = params[&format!("{unit}/gamma")].len();
            (unit, BatchNormState::new(c))
        })
        .collect();
    Ok(WeightStore {
        params,
        batch_norm,
        optimizer: None,
    })
}

struct ConvUnitTape<T> {
    name: String,
    input: DenseTensor<T>,
    bn: BatchNormCache<T>,
    pre_relu: DenseTensor<T>,
}

struct LevelTape<T> {
    units: Vec<ConvUnitTape<T>>,
    pool: Option<PoolRecord>,
    upconv_input: Option<DenseTensor<T>>,
}

/// Intermediate values kept by a forward pass for [`backward`].
pub struct Tape<T> {
    encoder: Vec<LevelTape<T>>,
    bottom: LevelTape<T>,
    decoder: Vec<LevelTape<T>>,
    dropout_seed: u64,
    mode: Mode,
    head_input: DenseTensor<T>,
}

pub struct ForwardPass<T = f32> {
    /// `[n, 2, x, y, z]` class probabilities.
    pub prob: DenseTensor<T>,
    /// Batch-norm states after this pass (moved in training mode).
    pub batch_norm: IndexMap<String, BatchNormState<T>>,
    pub tape: Option<Tape<T>>,
}

struct Runner<'a, T: Real> {
    weights: &'a WeightStore<T>,
    config: &'a UNetConfig,
    mode: Mode,
    keep: bool,
    states: IndexMap<String, BatchNormState<T>>,
}

impl<T: Real> Runner<'_, T> {
    fn unit(&mut self, name: String, x: DenseTensor<T>) -> Result<(DenseTensor<T>, Option<ConvUnitTape<T>>)> {
        let w = self.weights;
        let kernel = w.param(&format!("{name}/kernel"))?;
        let bias = w.param(&format!("{name}/bias"))?;
        let gamma = w.param(&format!("{name}/gamma"))?;
        let beta = w.param(&format!("{name}/beta"))?;
        let state = w
            .batch_norm
            .get(&name)
            .ok_or_else(|| Error::InvalidArgument(format!("no batch norm state for `{name}`")))?;
        let conv = conv3d_forward(&x, kernel, bias.data())?;
        let bn = batchnorm_forward(
            &conv,
            gamma.data(),
            beta.data(),
            state,
            self.mode,
            &self.config.batch_norm,
        )?;
        drop(conv);
        let out = relu(&bn.output);
        self.states.insert(name.clone(), bn.state);
        let tape = self.keep.then(|| ConvUnitTape {
            name,
            input: x,
            bn: bn.cache,
            pre_relu: bn.output,
        });
        Ok((out, tape))
    }

    fn block(&mut self, prefix: &str, mut x: DenseTensor<T>) -> Result<(DenseTensor<T>, Vec<ConvUnitTape<T>>)> {
        let mut units = Vec::new();
        for i in 1..=self.config.convs_per_block {
            let (out, tape) = self.unit(format!("{prefix}/conv{i}"), x)?;
            units.extend(tape);
            x = out;
        }
        Ok((x, units))
    }
}

/// Forward pass returning probabilities, updated batch-norm states and,
/// when `keep_tape` is set, everything [`backward`] needs.
///
/// `input` is `[n, 1, x, y, z]` with x and y multiples of `2^levels`; z is
/// unconstrained. `seed` drives the bottleneck dropout in training mode.
pub fn forward_pass<T: Real>(
    weights: &WeightStore<T>,
    config: &UNetConfig,
    input: &DenseTensor<T>,
    mode: Mode,
    seed: u64,
    keep_tape: bool,
) -> Result<ForwardPass<T>> {
    config.validate()?;
    let [_, c, x, y, _] = input.dims5("unet forward")?;
    if c != 1 {
        return Err(Error::InvalidArgument(format!(
            "network input must have 1 channel, got {c}"
        )));
    }
    let grid = config.grid();
    if x % grid != 0 || y % grid != 0 {
        return Err(Error::InvalidArgument(format!(
            "in-plane size {x}×{y} is not a multiple of {grid}; pad the volume with pad_to_grid first"
        )));
    }
    let mut run = Runner {
        weights,
        config,
        mode,
        keep: keep_tape,
        states: IndexMap::new(),
    };

    let mut skips = Vec::with_capacity(config.levels);
    let mut encoder = Vec::new();
    let mut h = input.clone();
    for l in 0..config.levels {
        let (out, units) = run.block(&format!("down{l}"), h)?;
        let (pooled, rec) = maxpool_2x2x1_forward(&out)?;
        skips.push(out);
        encoder.push(LevelTape {
            units,
            pool: keep_tape.then_some(rec),
            upconv_input: None,
        });
        h = pooled;
    }
    let (out, units) = run.block("bottom", h)?;
    let dropout_seed = seed;
    h = dropout(&out, config.bottleneck_dropout, dropout_seed, mode)?;
    let bottom = LevelTape {
        units,
        pool: None,
        upconv_input: None,
    };

    let mut decoder = Vec::new();
    for l in (0..config.levels).rev() {
        let kernel = weights.param(&format!("up{l}/upconv/kernel"))?;
        let bias = weights.param(&format!("up{l}/upconv/bias"))?;
        let up = upconv_2x2x1_forward(&h, kernel, bias.data())?;
        let skip = skips.pop().expect("one skip per level");
        let merged = concat_channels(&skip, &up)?;
        drop((skip, up));
        let upconv_input = keep_tape.then(|| h.clone());
        let (out, units) = run.block(&format!("up{l}"), merged)?;
        decoder.push(LevelTape {
            units,
            pool: None,
            upconv_input,
        });
        h = out;
    }

    let logits = conv1x1_forward(
        &h,
        weights.param("head/conv/kernel")?,
        weights.param("head/conv/bias")?.data(),
    )?;
    let prob = softmax_channels(&logits)?;
    let tape = keep_tape.then(|| Tape {
        encoder,
        bottom,
        decoder,
        dropout_seed,
        mode,
        head_input: h,
    });
    Ok(ForwardPass {
        prob,
        batch_norm: run.states,
        tape,
    })
}

/// Probability map `[n, 2, x, y, z]` for `input`.
pub fn forward<T: Real>(
    weights: &WeightStore<T>,
    config: &UNetConfig,
    input: &DenseTensor<T>,
    mode: Mode,
    seed: u64,
) -> Result<DenseTensor<T>> {
    Ok(forward_pass(weights, config, input, mode, seed, false)?.prob)
}

fn unit_backward<T: Real>(
    weights: &WeightStore<T>,
    unit: &ConvUnitTape<T>,
    grad: DenseTensor<T>,
    grads: &mut ParamMap<T>,
) -> Result<DenseTensor<T>> {
    let name = &unit.name;
    let g = relu_backward(&unit.pre_relu, &grad)?;
    let gamma = weights.param(&format!("{name}/gamma"))?;
    let bn = batchnorm_backward(&unit.bn, gamma.data(), &g)?;
    let conv = conv3d_backward(&unit.input, weights.param(&format!("{name}/kernel"))?, &bn.grad_input)?;
    for (key, t) in bn.grad_params.into_iter().chain(conv.grad_params) {
        grads.insert(format!("{name}/{key}"), t);
    }
    Ok(conv.grad_input)
}

fn block_backward<T: Real>(
    weights: &WeightStore<T>,
    units: &[ConvUnitTape<T>],
    mut grad: DenseTensor<T>,
    grads: &mut ParamMap<T>,
) -> Result<DenseTensor<T>> {
    for unit in units.iter().rev() {
        grad = unit_backward(weights, unit, grad, grads)?;
    }
    Ok(grad)
}

/// Parameter gradients of `Σ grad_prob · prob` for the pass that produced
/// `pass`, returned in the store's parameter order.
pub fn backward<T: Real>(
    weights: &WeightStore<T>,
    config: &UNetConfig,
    pass: &ForwardPass<T>,
    grad_prob: &DenseTensor<T>,
) -> Result<ParamMap<T>> {
    let tape = pass
        .tape
        .as_ref()
        .ok_or_else(|| Error::InvalidArgument("backward needs a forward pass with a tape".into()))?;
    if grad_prob.shape() != pass.prob.shape() {
        return Err(Error::shape("unet backward", grad_prob.shape(), pass.prob.shape()));
    }
    let mut grads = ParamMap::new();

    let g_logits = softmax_backward(&pass.prob, grad_prob)?;
    let head = conv1x1_backward(&tape.head_input, weights.param("head/conv/kernel")?, &g_logits)?;
    for (key, t) in head.grad_params {
        grads.insert(format!("head/conv/{key}"), t);
    }
    let mut g = head.grad_input;

    let mut skip_grads = Vec::with_capacity(config.levels);
    // the decoder tape runs deepest first; undo it from the shallowest level
    for (level_tape, l) in tape.decoder.iter().rev().zip(0..config.levels) {
        g = block_backward(weights, &level_tape.units, g, &mut grads)?;
        let (g_skip, g_up) = split_channels(&g, config.features(l))?;
        skip_grads.push(g_skip);
        let up_input = level_tape.upconv_input.as_ref().expect("decoder tape keeps upconv input");
        let up = upconv_2x2x1_backward(up_input, weights.param(&format!("up{l}/upconv/kernel"))?, &g_up)?;
        for (key, t) in up.grad_params {
            grads.insert(format!("up{l}/upconv/{key}"), t);
        }
        g = up.grad_input;
    }

    g = dropout_backward(&g, config.bottleneck_dropout, tape.dropout_seed, tape.mode)?;
    g = block_backward(weights, &tape.bottom.units, g, &mut grads)?;

    for (l, level_tape) in tape.encoder.iter().enumerate().rev() {
        let rec = level_tape.pool.as_ref().expect("encoder tape keeps pool record");
        let mut g_out = maxpool_2x2x1_backward(rec, &g)?;
        let g_skip = skip_grads.pop().expect("one skip gradient per level");
        debug_assert_eq!(l, skip_grads.len());
        g_out.add_assign(&g_skip)?;
        g = block_backward(weights, &level_tape.units, g_out, &mut grads)?;
    }

    // reorder to match the store
    let mut ordered = ParamMap::with_capacity(weights.params.len());
    for name in weights.params.keys() {
        let t = grads
            .swap_remove(name)
            .ok_or_else(|| Error::InvalidArgument(format!("no gradient produced for `{name}`")))?;
        ordered.insert(name.clone(), t);
    }
    Ok(ordered)
}

/// Aorta mask from a probability map: voxel is 1 iff its aorta probability
/// is strictly greater than `threshold`. Uses batch item 0.
pub fn binarize<T: Real>(prob: &DenseTensor<T>, threshold: f64, spacing_mm: [f64; 3]) -> Result<MaskVolume> {
    let [_, c, ..] = prob.dims5("binarize")?;
    if c != 2 {
        return Err(Error::InvalidArgument(format!(
            "binarize expects 2 class channels, got {c}"
        )));
    }
    from_tensor_plane(prob, 0, AORTA_CHANNEL, spacing_mm, |p| u8::from(p.as_f64() > threshold))
}

/// Symmetric in-plane padding added by [`pad_to_grid`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CropRecord {
    pub x_before: usize,
    pub x_after: usize,
    pub y_before: usize,
    pub y_after: usize,
}

impl CropRecord {
    pub fn is_empty(&self) -> bool {
        *self == CropRecord::default()
    }
}

/// Zero-pad x and y up to the next multiple of `2^levels`; the smaller
/// half goes before. z is untouched.
pub fn pad_to_grid<T: Copy + Default>(volume: &Volume<T>, levels: usize) -> Result<(Volume<T>, CropRecord)> {
    let grid = 1usize << levels;
    let [x, y, z] = volume.dims();
    let (px, py) = (x.div_ceil(grid) * grid - x, y.div_ceil(grid) * grid - y);
    let rec = CropRecord {
        x_before: px / 2,
        x_after: px - px / 2,
        y_before: py / 2,
        y_after: py - py / 2,
    };
    if rec.is_empty() {
        return Ok((volume.clone(), rec));
    }
    let (nx, ny) = (x + px, y + py);
    let mut data = vec![T::default(); nx * ny * z];
    for k in 0..z {
        for j in 0..y {
            let src = volume.index(0, j, k);
            let dst = rec.x_before + nx * (j + rec.y_before + ny * k);
            data[dst..dst + x].copy_from_slice(&volume.data()[src..src + x]);
        }
    }
    Ok((Volume::new([nx, ny, z], volume.spacing_mm(), data)?, rec))
}

/// Inverse of [`pad_to_grid`].
pub fn unpad<T: Copy + Default>(volume: &Volume<T>, rec: &CropRecord) -> Result<Volume<T>> {
    if rec.is_empty() {
        return Ok(volume.clone());
    }
    let [nx, ny, z] = volume.dims();
    let (x, y) = (
        nx.checked_sub(rec.x_before + rec.x_after),
        ny.checked_sub(rec.y_before + rec.y_after),
    );
    let (Some(x), Some(y)) = (x, y) else {
        return Err(Error::InvalidArgument(format!(
            "crop record {rec:?} larger than volume {nx}×{ny}"
        )));
    };
    let mut data = Vec::with_capacity(x * y * z);
    for k in 0..z {
        for j in 0..y {
            let src = volume.index(rec.x_before, j + rec.y_before, k);
            data.extend_from_slice(&volume.data()[src..src + x]);
        }
    }
    Volume::new([x, y, z], volume.spacing_mm(), data)
}

/// Clamp-and-rescale the intensities, pad in-plane, and lay the study out
/// as a `[1, 1, x, y, z]` network input.
pub fn prepare_input<T: Real>(config: &UNetConfig, volume: &StudyVolume) -> Result<(DenseTensor<T>, CropRecord)> {
    let normalized = Volume::new(
        volume.dims(),
        volume.spacing_mm(),
        config.normalize_intensities(volume.data()),
    )?;
    let (padded, rec) = pad_to_grid(&normalized, config.levels)?;
    Ok((to_tensor(&padded, |v| T::of(v as f64)), rec))
}

/// Inference on one study: normalize, pad, forward in inference mode,
/// threshold at [`MASK_THRESHOLD`] and crop back to the study grid.
pub fn segment(weights: &WeightStore<f32>, config: &UNetConfig, volume: &StudyVolume) -> Result<MaskVolume> {
    let (input, rec) = prepare_input::<f32>(config, volume)?;
    let prob = forward(weights, config, &input, Mode::Infer, 0)?;
    let mask = binarize(&prob, MASK_THRESHOLD, volume.spacing_mm())?;
    unpad(&mask, &rec)
}
