//! The layout estimation network family: a shared convolutional context
//! encoder, per-view multi-channel decoders, and optional patch
//! discriminators, together with the SGD training loop for all four
//! variants (single-view and dual-view, each with or without adversarial
//! refinement).
//!
//! Architecture at the default configuration (128x128 input, R=4, D=64):
//!
//! ```text
//! encoder    3 -> 16 -> 32 -> 64 -> 64   (stride 2,2,2,1; output H/8)
//! decoder    refine 64, then per doubling step: upsample 2x + conv,
//!            head conv to R*3 channels, reshaped to [R,3,D,D]
//! discr      R*3 -> 16 -> 32 -> 64 -> 1  (stride 2 each; output D/16)
//! ```
//!
//! All convolutions are 3x3 with padding 1, followed by leaky ReLU except
//! the decoder head and the discriminator output. Parameters are named
//! (`enc.0.w`, `dec.top.head.b`, `disc.front.2.w`, ...) and initialized
//! from per-name RNG substreams, so a tensor's initial values depend only
//! on the seed and its own name, never on which other tensors exist.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::gtlayout::{LabelMap, View, NUM_CLASSES};
use crate::render::Image;
use crate::rng::SplitMix64;
use crate::tensornet::{Gradients, NodeId, SgdState, Tape, Tensor, TensorError};

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

/// Encoder channel widths; the first three stages have stride 2.
const ENC_WIDTHS: [usize; 4] = [16, 32, 64, 64];
const ENC_STRIDES: [usize; 4] = [2, 2, 2, 1];
/// Total encoder downsampling factor.
pub const ENCODER_DOWNSAMPLE: usize = 8;
/// Discriminator channel widths; every stage has stride 2.
const DISC_WIDTHS: [usize; 4] = [16, 32, 64, 1];
/// Total discriminator downsampling factor.
pub const DISC_DOWNSAMPLE: usize = 16;

/// Structural configuration of the network.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct ModelConfig {
    /// Shelf channels per view (R).
    pub num_channels: usize,
    /// Side length of the square layout grid (D).
    pub grid: usize,
    pub image_width: usize,
    pub image_height: usize,
    pub lrelu_slope: f32,
    /// Cross-entropy weights for background, unoccupied, occupied.
    pub class_weights: [f32; 3],
}

impl Default for ModelConfig {
    fn default() -> ModelConfig {
        ModelConfig {
            num_channels: 4,
            grid: 64,
            image_width: 128,
            image_height: 128,
            lrelu_slope: 0.1,
            class_weights: [0.2, 1.0, 1.0],
        }
    }
}

impl ModelConfig {
    /// Side length of the encoder output.
    pub fn context_side(&self) -> usize {
        self.image_width / ENCODER_DOWNSAMPLE
    }

    /// Number of upsample-conv steps the decoder needs.
    pub fn up_steps(&self) -> usize {
        let mut q = self.grid / self.context_side();
        let mut steps = 0;
        while q > 1 {
            q /= 2;
            steps += 1;
        }
        steps
    }

    pub fn validate(&self, variant: Variant) -> Result<(), ModelError> {
        let fail = |msg: String| Err(ModelError::InvalidConfig(msg));
        if self.num_channels == 0 {
            return fail("num_channels must be positive".to_string());
        }
        if self.image_width != self.image_height {
            return fail(format!(
                "image must be square, got {}x{}",
                self.image_width, self.image_height
            ));
        }
        if self.image_width == 0 || self.image_width % ENCODER_DOWNSAMPLE != 0 {
            return fail(format!(
                "image side {} must be a positive multiple of {ENCODER_DOWNSAMPLE}",
                self.image_width
            ));
        }
        let ctx = self.context_side();
        if self.grid < ctx || self.grid % ctx != 0 || !(self.grid / ctx).is_power_of_two() {
            return fail(format!(
                "grid {} must be a power-of-two multiple of the context side {ctx}",
                self.grid
            ));
        }
        if variant.adversarial() && self.grid % DISC_DOWNSAMPLE != 0 {
            return fail(format!(
                "grid {} must be a multiple of {DISC_DOWNSAMPLE} for adversarial variants",
                self.grid
            ));
        }
        if !self.lrelu_slope.is_finite() || self.lrelu_slope < 0.0 {
            return fail(format!("lrelu_slope {} must be finite and >= 0", self.lrelu_slope));
        }
        if self.class_weights.iter().any(|w| !w.is_finite() || *w <= 0.0) {
            return fail(format!("class_weights {:?} must be positive", self.class_weights));
        }
        Ok(())
    }
}

/// Which decoders and discriminators exist.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub enum Variant {
    /// Single view, supervised only.
    S { view: View },
    /// Single view with a discriminator.
    SDisc { view: View },
    /// Both views, supervised only.
    D,
    /// Both views with per-view discriminators.
    DDisc,
}

impl Variant {
    pub fn has_view(self, view: View) -> bool {
        match self {
            Variant::S { view: v } | Variant::SDisc { view: v } => v == view,
            Variant::D | Variant::DDisc => true,
        }
    }

    pub fn adversarial(self) -> bool {
        matches!(self, Variant::SDisc { .. } | Variant::DDisc)
    }

    /// Views with decoders, in fixed (top, front) order.
    pub fn views(self) -> Vec<View> {
        [View::Top, View::Front]
            .into_iter()
            .filter(|v| self.has_view(*v))
            .collect()
    }

    /// Family name used in evaluation tables.
    pub fn family_label(self) -> &'static str {
        match self {
            Variant::S { .. } => "racklay-s",
            Variant::SDisc { .. } => "racklay-s-disc",
            Variant::D => "racklay-d",
            Variant::DDisc => "racklay-d-disc",
        }
    }
}

/// Errors from configuration, parameter plumbing, and training.
#[derive(Clone, Debug, PartialEq)]
pub enum ModelError {
    InvalidConfig(String),
    /// The input tensor does not match the configured image size.
    SizeMismatch { expected: Vec<usize>, got: Vec<usize> },
    /// A training sample lacks ground truth for an active view.
    MissingLabels { view: View },
    /// Checkpoint contents disagree with the architecture.
    ParamMismatch(String),
    Tensor(TensorError),
}

impl fmt::Display for ModelError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelError::InvalidConfig(msg) => write!(f, "invalid model config: {msg}"),
            ModelError::SizeMismatch { expected, got } => {
                write!(f, "input shape {got:?} does not match configured {expected:?}")
            }
            ModelError::MissingLabels { view } => {
                write!(f, "sample lacks {} ground truth required by the variant", view.name())
            }
            ModelError::ParamMismatch(msg) => write!(f, "parameter mismatch: {msg}"),
            ModelError::Tensor(e) => write!(f, "{e}"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for ModelError {}

impl From<TensorError> for ModelError {
    fn from(e: TensorError) -> ModelError {
        ModelError::Tensor(e)
    }
}

/// One convolution layer: 3x3 kernel, padding 1.
#[derive(Clone, Debug)]
struct ConvSpec {
    name: String,
    cin: usize,
    cout: usize,
}

/// Every tensor of the architecture in checkpoint order.
fn spec_list(config: &ModelConfig, variant: Variant) -> Vec<ConvSpec> {
    let mut specs = Vec::new();
    let mut cin = 3;
    for (i, &cout) in ENC_WIDTHS.iter().enumerate() {
        specs.push(ConvSpec { name: format!("enc.{i}"), cin, cout });
        cin = cout;
    }
    for view in variant.views() {
        let v = view.name();
        let mut width = ENC_WIDTHS[3];
        specs.push(ConvSpec { name: format!("dec.{v}.0"), cin: width, cout: width });
        for step in 0..config.up_steps() {
            let cout = (width / 2).max(16);
            specs.push(ConvSpec { name: format!("dec.{v}.{}", step + 1), cin: width, cout });
            width = cout;
        }
        specs.push(ConvSpec {
            name: format!("dec.{v}.head"),
            cin: width,
            cout: config.num_channels * NUM_CLASSES,
        });
    }
    if variant.adversarial() {
        for view in variant.views() {
            let v = view.name();
            let mut cin = config.num_channels * NUM_CLASSES;
            for (i, &cout) in DISC_WIDTHS.iter().enumerate() {
                specs.push(ConvSpec { name: format!("disc.{v}.{i}"), cin, cout });
                cin = cout;
            }
        }
    }
    specs
}

fn fnv1a(s: &str) -> u64 {
    let mut hash = 0xcbf2_9ce4_8422_2325u64;
    for b in s.as_bytes() {
        hash ^= u64::from(*b);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

/// All parameters of one model instance.
#[derive(Clone, Debug)]
pub struct NetworkParams {
    pub config: ModelConfig,
    pub variant: Variant,
    names: Vec<String>,
    tensors: Vec<Tensor<f32>>,
}

impl NetworkParams {
    /// He-normal initialization. Each tensor draws from its own RNG
    /// substream keyed by the parameter name, so shared tensors (the
    /// encoder, a decoder) start identically across variants for a given
    /// seed.
    pub fn init(config: ModelConfig, variant: Variant, seed: u64) -> Result<NetworkParams, ModelError> {
        config.validate(variant)?;
        let mut names = Vec::new();
        let mut tensors = Vec::new();
        for spec in spec_list(&config, variant) {
            let wname = format!("{}.w", spec.name);
            let mut rng = SplitMix64::substream(seed, fnv1a(&wname));
            let std = libm::sqrt(2.0 / (spec.cin * 9) as f64);
            let n = spec.cout * spec.cin * 9;
            let data: Vec<f32> = (0..n)
                .map(|_| {
                    let u1 = 1.0 - rng.next_f64();
                    let u2 = rng.next_f64();
                    let z = libm::sqrt(-2.0 * libm::log(u1))
                        * libm::cos(2.0 * core::f64::consts::PI * u2);
                    (std * z) as f32
                })
                .collect();
            names.push(wname);
            tensors.push(Tensor::from_vec(&[spec.cout, spec.cin, 3, 3], data).unwrap());
            names.push(format!("{}.b", spec.name));
            tensors.push(Tensor::zeros(&[spec.cout]));
        }
        Ok(NetworkParams { config, variant, names, tensors })
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    fn index(&self, name: &str) -> usize {
        self.names
            .iter()
            .position(|n| n == name)
            .unwrap_or_else(|| panic!("unknown parameter {name}"))
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<f32>> {
        self.names.iter().position(|n| n == name).map(|i| &self.tensors[i])
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor<f32>> {
        let i = self.names.iter().position(|n| n == name)?;
        Some(&mut self.tensors[i])
    }

    /// Named tensors in checkpoint order.
    pub fn to_named_vec(&self) -> Vec<(String, Tensor<f32>)> {
        self.names.iter().cloned().zip(self.tensors.iter().cloned()).collect()
    }

    /// Rebuilds parameters from checkpoint contents; the name list and all
    /// shapes must match the architecture exactly.
    pub fn from_named_vec(
        config: ModelConfig,
        variant: Variant,
        stored: Vec<(String, Tensor<f32>)>,
    ) -> Result<NetworkParams, ModelError> {
        let fresh = NetworkParams::init(config, variant, 0)?;
        if stored.len() != fresh.names.len() {
            return Err(ModelError::ParamMismatch(format!(
                "expected {} tensors, checkpoint has {}",
                fresh.names.len(),
                stored.len()
            )));
        }
        let mut tensors = Vec::with_capacity(stored.len());
        for ((name, tensor), want) in stored.into_iter().zip(&fresh.names) {
            if &name != want {
                return Err(ModelError::ParamMismatch(format!(
                    "expected tensor {want}, checkpoint has {name}"
                )));
            }
            let expect_dims = fresh.get(want).unwrap().dims();
            if tensor.dims() != expect_dims {
                return Err(ModelError::ParamMismatch(format!(
                    "{name}: expected shape {:?}, checkpoint has {:?}",
                    expect_dims,
                    tensor.dims()
                )));
            }
            tensors.push(tensor);
        }
        Ok(NetworkParams { config, variant, names: fresh.names, tensors })
    }

    /// Indices of encoder plus active decoder tensors (the generator).
    fn generator_indices(&self) -> Vec<usize> {
        (0..self.names.len())
            .filter(|&i| self.names[i].starts_with("enc.") || self.names[i].starts_with("dec."))
            .collect()
    }

    /// Indices of one view's discriminator tensors.
    fn disc_indices(&self, view: View) -> Vec<usize> {
        let prefix = format!("disc.{}.", view.name());
        (0..self.names.len()).filter(|&i| self.names[i].starts_with(&prefix)).collect()
    }
}

/// Converts an RGB render to a `[3,H,W]` tensor in `[-1, 1]`.
pub fn image_to_input(image: &Image) -> Tensor<f32> {
    let (w, h) = (image.width, image.height);
    let mut data = vec![0.0f32; 3 * h * w];
    for y in 0..h {
        for x in 0..w {
            let px = image.get(x, y);
            for c in 0..3 {
                data[c * h * w + y * w + x] = (f32::from(px[c]) / 255.0 - 0.5) * 2.0;
            }
        }
    }
    Tensor::from_vec(&[3, h, w], data).unwrap()
}

/// Binds every parameter tensor onto a tape, as leaves where
/// `differentiable` says so and constants otherwise. Returns node ids
/// aligned with the parameter indices.
fn bind_params(
    tape: &mut Tape<f32>,
    params: &NetworkParams,
    differentiable: &dyn Fn(usize) -> bool,
) -> Vec<NodeId> {
    params
        .tensors
        .iter()
        .enumerate()
        .map(|(i, t)| {
            if differentiable(i) {
                tape.leaf(t.clone())
            } else {
                tape.constant(t.clone())
            }
        })
        .collect()
}

fn conv_layer(
    tape: &mut Tape<f32>,
    params: &NetworkParams,
    bound: &[NodeId],
    layer: &str,
    x: NodeId,
    stride: usize,
    activate: bool,
) -> Result<NodeId, ModelError> {
    let w = bound[params.index(&format!("{layer}.w"))];
    let b = bound[params.index(&format!("{layer}.b"))];
    let y = tape.conv2d(x, w, b, stride, 1)?;
    Ok(if activate { tape.leaky_relu(y, params.config.lrelu_slope) } else { y })
}

fn forward_encoder(
    tape: &mut Tape<f32>,
    params: &NetworkParams,
    bound: &[NodeId],
    input: NodeId,
) -> Result<NodeId, ModelError> {
    let expected = vec![
        3,
        params.config.image_height,
        params.config.image_width,
    ];
    if tape.value(input).dims() != expected.as_slice() {
        return Err(ModelError::SizeMismatch {
            expected,
            got: tape.value(input).dims().to_vec(),
        });
    }
    let mut h = input;
    for (i, &stride) in ENC_STRIDES.iter().enumerate() {
        h = conv_layer(tape, params, bound, &format!("enc.{i}"), h, stride, true)?;
    }
    Ok(h)
}

/// Decoder forward pass to logits `[R,3,D,D]`.
fn forward_decoder(
    tape: &mut Tape<f32>,
    params: &NetworkParams,
    bound: &[NodeId],
    ctx: NodeId,
    view: View,
) -> Result<NodeId, ModelError> {
    let v = view.name();
    let mut h = conv_layer(tape, params, bound, &format!("dec.{v}.0"), ctx, 1, true)?;
    for step in 0..params.config.up_steps() {
        h = tape.upsample_nearest(h, 2);
        h = conv_layer(tape, params, bound, &format!("dec.{v}.{}", step + 1), h, 1, true)?;
    }
    let logits = conv_layer(tape, params, bound, &format!("dec.{v}.head"), h, 1, false)?;
    let d = params.config.grid;
    Ok(tape.reshape(logits, &[params.config.num_channels, NUM_CLASSES, d, d])?)
}

/// Discriminator forward pass from `[R*3,D,D]` to the patch score map.
fn forward_discriminator(
    tape: &mut Tape<f32>,
    params: &NetworkParams,
    bound: &[NodeId],
    layout: NodeId,
    view: View,
) -> Result<NodeId, ModelError> {
    let v = view.name();
    let mut h = layout;
    for i in 0..DISC_WIDTHS.len() {
        let last = i == DISC_WIDTHS.len() - 1;
        h = conv_layer(tape, params, bound, &format!("disc.{v}.{i}"), h, 2, !last)?;
    }
    Ok(h)
}

/// Context features for one image tensor; exposed for tests and tooling.
pub fn encode_features(params: &NetworkParams, input: &Tensor<f32>) -> Result<Tensor<f32>, ModelError> {
    let mut tape = Tape::new();
    let bound = bind_params(&mut tape, params, &|_| false);
    let x = tape.constant(input.clone());
    let ctx = forward_encoder(&mut tape, params, &bound, x)?;
    Ok(tape.value(ctx).clone())
}

/// Logits `[R,3,D,D]` for one view from precomputed context features.
pub fn decode_view(
    params: &NetworkParams,
    ctx: &Tensor<f32>,
    view: View,
) -> Result<Tensor<f32>, ModelError> {
    let mut tape = Tape::new();
    let bound = bind_params(&mut tape, params, &|_| false);
    let c = tape.constant(ctx.clone());
    let logits = forward_decoder(&mut tape, params, &bound, c, view)?;
    Ok(tape.value(logits).clone())
}

/// Patch scores for a layout encoding `[R,3,D,D]`.
pub fn discriminate(
    params: &NetworkParams,
    layout: &Tensor<f32>,
    view: View,
) -> Result<Tensor<f32>, ModelError> {
    let mut tape = Tape::new();
    let bound = bind_params(&mut tape, params, &|_| false);
    let d = params.config.grid;
    let flat = layout.reshaped(&[params.config.num_channels * NUM_CLASSES, d, d])?;
    let l = tape.constant(flat);
    let scores = forward_discriminator(&mut tape, params, &bound, l, view)?;
    Ok(tape.value(scores).clone())
}

/// Per-cell softmax of decoder logits.
pub fn logits_to_probs(logits: &Tensor<f32>) -> Result<Tensor<f32>, ModelError> {
    let mut tape = Tape::new();
    let l = tape.constant(logits.clone());
    let p = tape.softmax_groups(l)?;
    Ok(tape.value(p).clone())
}

/// Argmax labels per cell; ties break to the lowest class index.
pub fn probs_to_labels(probs: &Tensor<f32>) -> LabelMap {
    let dims = probs.dims();
    let (r, k, d) = (dims[0], dims[1], dims[2]);
    let dd = d * d;
    let mut map = LabelMap::new(r, d);
    let data = probs.data();
    for ch in 0..r {
        for cell in 0..dd {
            let mut best = 0u8;
            let mut best_p = data[ch * k * dd + cell];
            for ki in 1..k {
                let p = data[(ch * k + ki) * dd + cell];
                if p > best_p {
                    best_p = p;
                    best = ki as u8;
                }
            }
            map.cells[ch * dd + cell] = best;
        }
    }
    map
}

/// Full inference output for one image.
#[derive(Clone, Debug)]
pub struct Prediction {
    pub top: Option<(LabelMap, Tensor<f32>)>,
    pub front: Option<(LabelMap, Tensor<f32>)>,
}

impl Prediction {
    pub fn view(&self, view: View) -> Option<&(LabelMap, Tensor<f32>)> {
        match view {
            View::Top => self.top.as_ref(),
            View::Front => self.front.as_ref(),
        }
    }
}

/// Runs the network on one image: a single encode, then every active
/// decoder.
pub fn predict(params: &NetworkParams, input: &Tensor<f32>) -> Result<Prediction, ModelError> {
    let mut tape = Tape::new();
    let bound = bind_params(&mut tape, params, &|_| false);
    let x = tape.constant(input.clone());
    let ctx = forward_encoder(&mut tape, params, &bound, x)?;
    let mut out = Prediction { top: None, front: None };
    for view in params.variant.views() {
        let logits = forward_decoder(&mut tape, params, &bound, ctx, view)?;
        let probs_id = tape.softmax_groups(logits)?;
        let probs = tape.value(probs_id).clone();
        let labels = probs_to_labels(&probs);
        match view {
            View::Top => out.top = Some((labels, probs)),
            View::Front => out.front = Some((labels, probs)),
        }
    }
    Ok(out)
}

/// Optimizer settings.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct TrainHyper {
    pub lr: f32,
    pub momentum: f32,
    pub lambda_adv: f32,
}

impl Default for TrainHyper {
    fn default() -> TrainHyper {
        TrainHyper { lr: 0.005, momentum: 0.9, lambda_adv: 0.01 }
    }
}

/// One training example: image tensor plus per-view labels laid out as
/// `[R,D,D]` row-major. Views the variant does not use may be `None`.
#[derive(Clone, Debug)]
pub struct TrainSample {
    pub input: Tensor<f32>,
    pub top_labels: Option<Vec<u8>>,
    pub front_labels: Option<Vec<u8>>,
}

impl TrainSample {
    fn labels(&self, view: View) -> Option<&Vec<u8>> {
        match view {
            View::Top => self.top_labels.as_ref(),
            View::Front => self.front_labels.as_ref(),
        }
    }
}

/// Loss values from one training step. Supervised terms are summed over
/// the batch (and over shelf channels inside the cross entropy);
/// adversarial and discriminator terms are means over patch scores.
/// Inactive terms stay zero.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct LossReport {
    pub sup_top: f64,
    pub sup_front: f64,
    pub adv_top: f64,
    pub adv_front: f64,
    pub disc_top: f64,
    pub disc_front: f64,
}

impl LossReport {
    pub fn supervised_total(&self) -> f64 {
        self.sup_top + self.sup_front
    }

    pub fn is_finite(&self) -> bool {
        [
            self.sup_top,
            self.sup_front,
            self.adv_top,
            self.adv_front,
            self.disc_top,
            self.disc_front,
        ]
        .iter()
        .all(|v| v.is_finite())
    }
}

fn one_hot_labels(labels: &[u8], r: usize, d: usize) -> Tensor<f32> {
    let dd = d * d;
    let mut t = Tensor::zeros(&[r * NUM_CLASSES, d, d]);
    for ch in 0..r {
        for cell in 0..dd {
            let k = labels[ch * dd + cell] as usize;
            t.data_mut()[(ch * NUM_CLASSES + k) * dd + cell] = 1.0;
        }
    }
    t
}

fn view_slot<T>(top: &mut T, front: &mut T, view: View) -> *mut T {
    match view {
        View::Top => top as *mut T,
        View::Front => front as *mut T,
    }
}

/// Owns parameters and optimizer state for one training run.
pub struct Trainer {
    pub params: NetworkParams,
    pub hyper: TrainHyper,
    gen_state: SgdState<f32>,
    disc_top_state: Option<SgdState<f32>>,
    disc_front_state: Option<SgdState<f32>>,
}

impl Trainer {
    pub fn new(params: NetworkParams, hyper: TrainHyper) -> Trainer {
        let gen: Vec<Tensor<f32>> = params
            .generator_indices()
            .iter()
            .map(|&i| params.tensors[i].clone())
            .collect();
        let gen_state = SgdState::zeros_like(&gen);
        let disc_state = |view: View| {
            if params.variant.adversarial() && params.variant.has_view(view) {
                let t: Vec<Tensor<f32>> = params
                    .disc_indices(view)
                    .iter()
                    .map(|&i| params.tensors[i].clone())
                    .collect();
                Some(SgdState::zeros_like(&t))
            } else {
                None
            }
        };
        let disc_top_state = disc_state(View::Top);
        let disc_front_state = disc_state(View::Front);
        Trainer { params, hyper, gen_state, disc_top_state, disc_front_state }
    }

    /// One optimization step on a batch: generator update (supervised plus
    /// weighted adversarial loss), then one discriminator update per
    /// active view against the pre-update generator outputs.
    pub fn train_step(&mut self, batch: &[TrainSample]) -> Result<LossReport, ModelError> {
        assert!(!batch.is_empty(), "train_step needs at least one sample");
        let views = self.params.variant.views();
        let adversarial = self.params.variant.adversarial();
        let lambda = self.hyper.lambda_adv;
        let use_adv = adversarial && lambda != 0.0;
        let gen_idx = self.params.generator_indices();
        let r = self.params.config.num_channels;
        let d = self.params.config.grid;
        let weights: Vec<f32> = self.params.config.class_weights.to_vec();
        let inv_batch = 1.0 / batch.len() as f32;

        let mut report = LossReport::default();

        // Generator pass: decoder/encoder tensors are leaves, everything
        // else (notably discriminator weights) is constant.
        let mut tape: Tape<f32> = Tape::new();
        let is_gen = {
            let set: alloc::collections::BTreeSet<usize> = gen_idx.iter().copied().collect();
            move |i: usize| set.contains(&i)
        };
        let bound = bind_params(&mut tape, &self.params, &is_gen);

        let mut sup_nodes: Vec<(View, NodeId)> = Vec::new();
        let mut adv_nodes: Vec<(View, Vec<NodeId>)> =
            views.iter().map(|v| (*v, Vec::new())).collect();
        // Pre-update probabilities kept for the discriminator update.
        let mut fake_probs: Vec<(View, Vec<Tensor<f32>>)> =
            views.iter().map(|v| (*v, Vec::new())).collect();

        for sample in batch {
            let input = tape.constant(sample.input.clone());
            let ctx = forward_encoder(&mut tape, &self.params, &bound, input)?;
            for (vi, &view) in views.iter().enumerate() {
                let labels = sample
                    .labels(view)
                    .ok_or(ModelError::MissingLabels { view })?;
                let logits = forward_decoder(&mut tape, &self.params, &bound, ctx, view)?;
                let probs = tape.softmax_groups(logits)?;
                let ce = tape.cross_entropy(probs, labels.clone(), weights.clone())?;
                match sup_nodes.iter_mut().find(|(v, _)| *v == view) {
                    Some((_, node)) => *node = tape.add(*node, ce)?,
                    None => sup_nodes.push((view, ce)),
                }
                if adversarial {
                    fake_probs[vi].1.push(tape.value(probs).clone());
                }
                if use_adv {
                    let flat = tape.reshape(probs, &[r * NUM_CLASSES, d, d])?;
                    let scores =
                        forward_discriminator(&mut tape, &self.params, &bound, flat, view)?;
                    adv_nodes[vi].1.push(tape.lsgan_generator(scores));
                }
            }
        }

        let mut total: Option<NodeId> = None;
        let mut attach = |tape: &mut Tape<f32>, node: NodeId| -> Result<(), ModelError> {
            total = Some(match total {
                Some(t) => tape.add(t, node)?,
                None => node,
            });
            Ok(())
        };
        for (view, node) in &sup_nodes {
            let value = f64::from(tape.value_scalar(*node));
            unsafe { *view_slot(&mut report.sup_top, &mut report.sup_front, *view) = value };
            attach(&mut tape, *node)?;
        }
        for (view, nodes) in &adv_nodes {
            if nodes.is_empty() {
                continue;
            }
            let mut acc = nodes[0];
            for node in &nodes[1..] {
                acc = tape.add(acc, *node)?;
            }
            let mean = tape.scale(acc, inv_batch);
            let value = f64::from(tape.value_scalar(mean));
            unsafe { *view_slot(&mut report.adv_top, &mut report.adv_front, *view) = value };
            let weighted = tape.scale(mean, lambda);
            attach(&mut tape, weighted)?;
        }
        let total = total.expect("at least one view is active");
        if !report.is_finite() || !tape.value_scalar(total).is_finite() {
            return Err(ModelError::Tensor(TensorError::NonFiniteLoss {
                which: "generator objective",
            }));
        }

        let grads = tape.backward(total)?;
        self.apply_sgd(&gen_idx, &bound, &grads, GenOrDisc::Gen);

        // Discriminator updates, one per active view, on fresh tapes. The
        // fakes are detached pre-update generator outputs.
        if adversarial {
            for (vi, &view) in views.iter().enumerate() {
                let disc_idx = self.params.disc_indices(view);
                let mut tape: Tape<f32> = Tape::new();
                let is_disc = {
                    let set: alloc::collections::BTreeSet<usize> =
                        disc_idx.iter().copied().collect();
                    move |i: usize| set.contains(&i)
                };
                let bound = bind_params(&mut tape, &self.params, &is_disc);
                let mut loss_nodes = Vec::new();
                for (sample, probs) in batch.iter().zip(&fake_probs[vi].1) {
                    let labels = sample
                        .labels(view)
                        .ok_or(ModelError::MissingLabels { view })?;
                    let real = tape.constant(one_hot_labels(labels, r, d));
                    let fake =
                        tape.constant(probs.reshaped(&[r * NUM_CLASSES, d, d])?);
                    let s_real =
                        forward_discriminator(&mut tape, &self.params, &bound, real, view)?;
                    let s_fake =
                        forward_discriminator(&mut tape, &self.params, &bound, fake, view)?;
                    loss_nodes.push(tape.lsgan_discriminator(s_real, s_fake));
                }
                let mut acc = loss_nodes[0];
                for node in &loss_nodes[1..] {
                    acc = tape.add(acc, *node)?;
                }
                let mean = tape.scale(acc, inv_batch);
                let value = f64::from(tape.value_scalar(mean));
                if !value.is_finite() {
                    return Err(ModelError::Tensor(TensorError::NonFiniteLoss {
                        which: "discriminator objective",
                    }));
                }
                unsafe { *view_slot(&mut report.disc_top, &mut report.disc_front, view) = value };
                let grads = tape.backward(mean)?;
                self.apply_sgd(&disc_idx, &bound, &grads, GenOrDisc::Disc(view));
            }
        }

        Ok(report)
    }

    fn apply_sgd(
        &mut self,
        indices: &[usize],
        bound: &[NodeId],
        grads: &Gradients<f32>,
        which: GenOrDisc,
    ) {
        let mut subset: Vec<Tensor<f32>> =
            indices.iter().map(|&i| self.params.tensors[i].clone()).collect();
        let grad_refs: Vec<Option<&Tensor<f32>>> =
            indices.iter().map(|&i| grads.get(bound[i])).collect();
        let state = match which {
            GenOrDisc::Gen => &mut self.gen_state,
            GenOrDisc::Disc(View::Top) => self.disc_top_state.as_mut().unwrap(),
            GenOrDisc::Disc(View::Front) => self.disc_front_state.as_mut().unwrap(),
        };
        state.step(&mut subset, &grad_refs, self.hyper.lr, self.hyper.momentum);
        for (slot, tensor) in indices.iter().zip(subset) {
            self.params.tensors[*slot] = tensor;
        }
    }
}

enum GenOrDisc {
    Gen,
    Disc(View),
}
