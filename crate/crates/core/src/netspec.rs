//! Declarative network descriptions, the builders for the 2- to 5-convolution
//! architectures, shape inference, and parameter storage.

use std::collections::BTreeSet;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layers::{conv_output_size, pool_output_size};
use crate::tensor::Tensor;

/// Default standard deviation of the Gaussian weight initializer.
pub const DEFAULT_INIT_SCALE: f64 = 0.01;
pub const DEFAULT_DROPOUT: f64 = 0.5;
pub const FC1_WIDTH: usize = 4096;
pub const INPUT_CHANNELS: usize = 3;

/// Supported `(input, crop)` resolution pairs.
pub const RESOLUTIONS: [(usize, usize); 4] = [(32, 28), (64, 56), (128, 116), (256, 227)];

/// Crop side paired with an input resolution.
pub fn crop_for(resolution: usize) -> Result<usize> {
    RESOLUTIONS
        .iter()
        .find(|(r, _)| *r == resolution)
        .map(|&(_, c)| c)
        .ok_or_else(|| Error::config(format!("unsupported input resolution {resolution}")))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    Conv {
        kernels: usize,
        width: usize,
        stride: usize,
        pad: usize,
    },
    #[serde(rename = "maxpool")]
    MaxPool { size: usize, stride: usize },
    Relu,
    Fc { width: usize },
    Dropout { rate: f64 },
}

impl LayerSpec {
    pub fn conv(kernels: usize, width: usize, stride: usize, pad: usize) -> Self {
        LayerSpec::Conv {
            kernels,
            width,
            stride,
            pad,
        }
    }

    pub fn pool2() -> Self {
        LayerSpec::MaxPool { size: 2, stride: 2 }
    }

    pub fn is_learnable(&self) -> bool {
        matches!(self, LayerSpec::Conv { .. } | LayerSpec::Fc { .. })
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            LayerSpec::Conv {
                kernels,
                width,
                stride,
                ..
            } => kernels > 0 && width > 0 && stride > 0,
            LayerSpec::MaxPool { size, stride } => size > 0 && stride > 0,
            LayerSpec::Relu => true,
            LayerSpec::Fc { width } => width > 0,
            LayerSpec::Dropout { rate } => (0.0..1.0).contains(&rate),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::config(format!("invalid layer {self:?}")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelMode {
    /// One class per sample, softmax cross-entropy.
    Single,
    /// Any number of classes per sample, per-class logistic loss.
    Multi,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HeadSpec {
    pub name: String,
    pub class_count: usize,
    pub label_mode: LabelMode,
}

impl HeadSpec {
    pub fn new(name: impl Into<String>, class_count: usize, label_mode: LabelMode) -> Self {
        Self {
            name: name.into(),
            class_count,
            label_mode,
        }
    }

    pub fn single(name: impl Into<String>, class_count: usize) -> Self {
        Self::new(name, class_count, LabelMode::Single)
    }

    pub fn multi(name: impl Into<String>, class_count: usize) -> Self {
        Self::new(name, class_count, LabelMode::Multi)
    }

    fn validate(&self) -> Result<()> {
        let min = match self.label_mode {
            LabelMode::Single => 2,
            LabelMode::Multi => 1,
        };
        if self.class_count < min {
            return Err(Error::config(format!(
                "head {} needs at least {min} classes, got {}",
                self.name, self.class_count
            )));
        }
        if self.name.is_empty() {
            return Err(Error::config("head name must not be empty"));
        }
        Ok(())
    }
}

/// A validated network: input geometry, the shared trunk, and the output heads
/// attached to the trunk's last layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub input_resolution: usize,
    pub crop_resolution: usize,
    pub input_channels: usize,
    pub trunk: Vec<LayerSpec>,
    pub heads: Vec<HeadSpec>,
    /// Per-channel value subtracted from every input pixel before the trunk.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input_mean: Option<Vec<f64>>,
}

/// Knobs of the architecture builder. [`ArchitectureConfig::new`] gives the reference
/// widths; the divisors shrink the network for CPU-scale experiments.
#[derive(Debug, Clone, PartialEq)]
pub struct ArchitectureConfig {
    pub depth: usize,
    pub resolution: usize,
    pub fc1_width: usize,
    pub fc2_width: usize,
    /// Every convolution's kernel count is divided by this (minimum 1 kernel).
    pub kernel_divisor: usize,
    pub dropout: f64,
}

impl ArchitectureConfig {
    pub fn new(depth: usize, resolution: usize, fc2_width: usize) -> Self {
        Self {
            depth,
            resolution,
            fc1_width: FC1_WIDTH,
            fc2_width,
            kernel_divisor: 1,
            dropout: DEFAULT_DROPOUT,
        }
    }
}

/// Build one of the reference architectures at full width.
pub fn build_architecture(
    depth: usize,
    resolution: usize,
    heads: Vec<HeadSpec>,
    fc2_width: usize,
) -> Result<NetworkSpec> {
    build_with(&ArchitectureConfig::new(depth, resolution, fc2_width), heads)
}

/// Every `(depth, resolution)` combination the builder accepts.
pub fn supported_architectures() -> Vec<(usize, usize)> {
    let mut v = Vec::new();
    for d in [2, 3] {
        for (r, _) in RESOLUTIONS {
            v.push((d, r));
        }
    }
    v.push((4, 256));
    v.push((5, 256));
    v
}

/// `(kernels, width, stride, pad, pool_after)` for each convolution layer.
fn conv_plan(depth: usize, resolution: usize) -> Result<Vec<(usize, usize, usize, usize, bool)>> {
    // Stride-1 layers keep their spatial size: pad = (N_W - 1) / 2.
    let same = |k: usize, w: usize, pool: bool| (k, w, 1, (w - 1) / 2, pool);
    let plan = match (depth, resolution) {
        (2, 128 | 256) => vec![(64, 11, 4, 0, true), same(128, 5, true)],
        (2, 64) => vec![same(32, 5, true), same(64, 5, true)],
        (2, 32) => vec![same(64, 5, true), same(128, 5, true)],
        (3, 128 | 256) => vec![(64, 7, 3, 0, true), same(128, 5, true), same(320, 3, false)],
        (3, 64) => vec![same(32, 5, true), same(64, 5, true), same(120, 3, false)],
        (3, 32) => vec![same(32, 5, true), same(64, 5, false), same(120, 3, false)],
        (4, 256) => vec![
            (64, 11, 4, 0, true),
            same(128, 5, true),
            same(192, 3, true),
            same(192, 3, true),
        ],
        (5, 256) => vec![
            (96, 11, 4, 0, true),
            same(256, 5, true),
            same(384, 3, false),
            same(384, 3, false),
            same(256, 3, true),
        ],
        _ => {
            return Err(Error::config(format!(
                "no {depth}-convolution architecture for {resolution}x{resolution} input"
            )))
        }
    };
    Ok(plan)
}

pub fn build_with(cfg: &ArchitectureConfig, heads: Vec<HeadSpec>) -> Result<NetworkSpec> {
    if cfg.kernel_divisor == 0 {
        return Err(Error::config("kernel divisor must be at least 1"));
    }
    let mut trunk = Vec::new();
    for (kernels, width, stride, pad, pool) in conv_plan(cfg.depth, cfg.resolution)? {
        trunk.push(LayerSpec::conv(
            (kernels / cfg.kernel_divisor).max(1),
            width,
            stride,
            pad,
        ));
        trunk.push(LayerSpec::Relu);
        if pool {
            trunk.push(LayerSpec::pool2());
        }
    }
    for width in [cfg.fc1_width, cfg.fc2_width] {
        trunk.push(LayerSpec::Fc { width });
        trunk.push(LayerSpec::Relu);
        trunk.push(LayerSpec::Dropout { rate: cfg.dropout });
    }
    NetworkSpec::new(cfg.resolution, INPUT_CHANNELS, trunk, heads)
}

/// Role of a learnable layer in the parameter store.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamKind {
    Conv,
    Fc,
    Head,
}

/// Shape of one learnable layer's weight and bias.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamShape {
    pub name: String,
    pub kind: ParamKind,
    pub weight: Vec<usize>,
    pub bias: Vec<usize>,
}

impl ParamShape {
    pub fn count(&self) -> usize {
        self.weight.iter().product::<usize>() + self.bias.iter().product::<usize>()
    }
}

impl NetworkSpec {
    pub fn new(
        input_resolution: usize,
        input_channels: usize,
        trunk: Vec<LayerSpec>,
        heads: Vec<HeadSpec>,
    ) -> Result<Self> {
        let spec = Self {
            input_resolution,
            crop_resolution: crop_for(input_resolution)?,
            input_channels,
            trunk,
            heads,
            input_mean: None,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.crop_resolution != crop_for(self.input_resolution)? {
            return Err(Error::config(format!(
                "crop {} does not pair with input resolution {}",
                self.crop_resolution, self.input_resolution
            )));
        }
        if self.input_channels == 0 {
            return Err(Error::config("input needs at least one channel"));
        }
        if let Some(m) = &self.input_mean {
            if m.len() != self.input_channels || m.iter().any(|v| !v.is_finite()) {
                return Err(Error::config(format!(
                    "input mean needs {} finite entries, got {m:?}",
                    self.input_channels
                )));
            }
        }
        if self.heads.is_empty() {
            return Err(Error::config("network needs at least one head"));
        }
        let mut names = BTreeSet::new();
        for h in &self.heads {
            h.validate()?;
            if !names.insert(&h.name) {
                return Err(Error::config(format!("duplicate head {}", h.name)));
            }
        }
        for l in &self.trunk {
            l.validate()?;
        }
        self.infer_shapes()?;
        Ok(())
    }

    pub fn input_shape(&self) -> [usize; 3] {
        [self.input_channels, self.crop_resolution, self.crop_resolution]
    }

    /// Conventional name of trunk layer `index` (`conv1`, `pool2`, `fc1`, ...).
    pub fn layer_name(&self, index: usize) -> String {
        let kind = &self.trunk[index];
        let ordinal = self.trunk[..=index]
            .iter()
            .filter(|l| std::mem::discriminant(*l) == std::mem::discriminant(kind))
            .count();
        let prefix = match kind {
            LayerSpec::Conv { .. } => "conv",
            LayerSpec::MaxPool { .. } => "pool",
            LayerSpec::Relu => "relu",
            LayerSpec::Fc { .. } => "fc",
            LayerSpec::Dropout { .. } => "drop",
        };
        format!("{prefix}{ordinal}")
    }

    /// Output shape after every trunk layer, in order. Fully connected layers
    /// flatten their input.
    pub fn infer_shapes(&self) -> Result<Vec<Vec<usize>>> {
        let mut shape: Vec<usize> = self.input_shape().to_vec();
        let mut out = Vec::with_capacity(self.trunk.len());
        for (i, layer) in self.trunk.iter().enumerate() {
            let infeasible = |reason: String| Error::Infeasible {
                layer: i,
                name: self.layer_name(i),
                reason,
            };
            shape = match *layer {
                LayerSpec::Conv {
                    kernels,
                    width,
                    stride,
                    pad,
                } => {
                    let &[_, h, w] = shape.as_slice() else {
                        return Err(infeasible(format!("conv needs a [C, H, W] input, got {shape:?}")));
                    };
                    match (
                        conv_output_size(h, width, stride, pad),
                        conv_output_size(w, width, stride, pad),
                    ) {
                        (Some(oh), Some(ow)) => vec![kernels, oh, ow],
                        _ => {
                            return Err(infeasible(format!(
                                "{width}x{width} kernel does not fit {h}x{w} map with pad {pad}"
                            )))
                        }
                    }
                }
                LayerSpec::MaxPool { size, stride } => {
                    let &[k, h, w] = shape.as_slice() else {
                        return Err(infeasible(format!("pool needs a [K, H, W] input, got {shape:?}")));
                    };
                    match (pool_output_size(h, size, stride), pool_output_size(w, size, stride)) {
                        (Some(oh), Some(ow)) => vec![k, oh, ow],
                        _ => {
                            return Err(infeasible(format!(
                                "{size}x{size} pool does not fit {h}x{w} map"
                            )))
                        }
                    }
                }
                LayerSpec::Fc { width } => vec![width],
                LayerSpec::Relu | LayerSpec::Dropout { .. } => shape,
            };
            out.push(shape.clone());
        }
        Ok(out)
    }

    /// Length of the feature vector the heads read.
    pub fn feature_len(&self) -> Result<usize> {
        Ok(self
            .infer_shapes()?
            .last()
            .map(|s| s.iter().product())
            .unwrap_or_else(|| self.input_shape().iter().product()))
    }

    pub fn head_index(&self, name: &str) -> Option<usize> {
        self.heads.iter().position(|h| h.name == name)
    }

    /// Learnable layers in storage order: trunk convs and fcs, then the heads.
    pub fn param_shapes(&self) -> Result<Vec<ParamShape>> {
        let shapes = self.infer_shapes()?;
        let mut prev: Vec<usize> = self.input_shape().to_vec();
        let mut out = Vec::new();
        for (i, layer) in self.trunk.iter().enumerate() {
            match *layer {
                LayerSpec::Conv { kernels, width, .. } => out.push(ParamShape {
                    name: self.layer_name(i),
                    kind: ParamKind::Conv,
                    weight: vec![kernels, prev[0], width, width],
                    bias: vec![kernels],
                }),
                LayerSpec::Fc { width } => out.push(ParamShape {
                    name: self.layer_name(i),
                    kind: ParamKind::Fc,
                    weight: vec![width, prev.iter().product()],
                    bias: vec![width],
                }),
                _ => {}
            }
            prev.clone_from(&shapes[i]);
        }
        let features: usize = prev.iter().product();
        for h in &self.heads {
            out.push(ParamShape {
                name: format!("head:{}", h.name),
                kind: ParamKind::Head,
                weight: vec![h.class_count, features],
                bias: vec![h.class_count],
            });
        }
        Ok(out)
    }

    pub fn parameter_count(&self) -> Result<usize> {
        Ok(self.param_shapes()?.iter().map(ParamShape::count).sum())
    }

    /// Same trunk with a different set of heads.
    pub fn with_heads(&self, heads: Vec<HeadSpec>) -> Result<Self> {
        let mut s = self.clone();
        s.heads = heads;
        s.validate()?;
        Ok(s)
    }
}

/// Parameters, momentum buffers, and freeze flag of one learnable layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub name: String,
    pub kind: ParamKind,
    pub weight: Tensor,
    pub bias: Tensor,
    pub weight_velocity: Tensor,
    pub bias_velocity: Tensor,
    pub frozen: bool,
}

impl LayerParams {
    pub fn zeroed(shape: &ParamShape) -> Result<Self> {
        Ok(Self {
            name: shape.name.clone(),
            kind: shape.kind,
            weight: Tensor::zeros(&shape.weight)?,
            bias: Tensor::zeros(&shape.bias)?,
            weight_velocity: Tensor::zeros(&shape.weight)?,
            bias_velocity: Tensor::zeros(&shape.bias)?,
            frozen: false,
        })
    }

    pub fn reset_velocity(&mut self) {
        self.weight_velocity = self.weight.zeros_like();
        self.bias_velocity = self.bias.zeros_like();
    }
}

/// Every learnable tensor of a network, in [`NetworkSpec::param_shapes`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamStore {
    pub layers: Vec<LayerParams>,
}

impl ParamStore {
    pub fn get(&self, name: &str) -> Option<&LayerParams> {
        self.layers.iter().find(|l| l.name == name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut LayerParams> {
        self.layers.iter_mut().find(|l| l.name == name)
    }

    /// Shape check against a spec.
    pub fn matches(&self, spec: &NetworkSpec) -> Result<()> {
        let shapes = spec.param_shapes()?;
        if shapes.len() != self.layers.len() {
            return Err(Error::shape(format!(
                "spec has {} learnable layers, store has {}",
                shapes.len(),
                self.layers.len()
            )));
        }
        for (s, l) in shapes.iter().zip(&self.layers) {
            if s.name != l.name
                || s.weight != l.weight.shape()
                || s.bias != l.bias.shape()
                || l.weight_velocity.shape() != l.weight.shape()
                || l.bias_velocity.shape() != l.bias.shape()
            {
                return Err(Error::shape(format!(
                    "layer {} has weight {:?}, spec expects {} with {:?}",
                    l.name,
                    l.weight.shape(),
                    s.name,
                    s.weight
                )));
            }
        }
        Ok(())
    }
}

/// Fresh Gaussian initialization of a single layer.
pub fn init_layer(shape: &ParamShape, rng: &mut impl Rng, scale: f64) -> Result<LayerParams> {
    let mut l = LayerParams::zeroed(shape)?;
    if scale > 0.0 {
        let normal = Normal::new(0.0, scale).map_err(|e| Error::param(e.to_string()))?;
        for w in l.weight.data_mut() {
            *w = normal.sample(rng);
        }
    } else if scale < 0.0 || !scale.is_finite() {
        return Err(Error::param(format!("init scale {scale} must be finite and >= 0")));
    }
    Ok(l)
}

/// Weights drawn from `N(0, scale^2)`, biases and velocities zero, nothing frozen.
pub fn init_params(spec: &NetworkSpec, rng: &mut impl Rng, scale: f64) -> Result<ParamStore> {
    init_params_with(spec, rng, Init::Gaussian(scale))
}

/// Weight initialization scheme. Text form: `gaussian:<std>` (or a bare
/// number) and `he:<gain>`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Init {
    /// Fixed standard deviation for every layer.
    Gaussian(f64),
    /// Standard deviation `gain * sqrt(2 / fan_in)` per layer.
    He(f64),
}

impl Default for Init {
    fn default() -> Self {
        Init::Gaussian(DEFAULT_INIT_SCALE)
    }
}

impl Init {
    pub fn std_for(&self, shape: &ParamShape) -> f64 {
        match *self {
            Init::Gaussian(s) => s,
            Init::He(gain) => {
                let fan_in: usize = shape.weight[1..].iter().product();
                gain * (2.0 / fan_in.max(1) as f64).sqrt()
            }
        }
    }

    pub fn layer(&self, shape: &ParamShape, rng: &mut impl Rng) -> Result<LayerParams> {
        init_layer(shape, rng, self.std_for(shape))
    }
}

impl std::fmt::Display for Init {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Init::Gaussian(s) => write!(f, "gaussian:{s}"),
            Init::He(g) => write!(f, "he:{g}"),
        }
    }
}

impl std::str::FromStr for Init {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::config(format!("bad init {s:?} (gaussian:<std> or he:<gain>)"));
        let (kind, value) = s.split_once(':').unwrap_or(("gaussian", s));
        let v: f64 = value.trim().parse().map_err(|_| bad())?;
        if !(v.is_finite() && v >= 0.0) {
            return Err(bad());
        }
        match kind.trim() {
            "gaussian" => Ok(Init::Gaussian(v)),
            "he" => Ok(Init::He(v)),
            _ => Err(bad()),
        }
    }
}

impl TryFrom<String> for Init {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Init> for String {
    fn from(i: Init) -> String {
        i.to_string()
    }
}

pub fn init_params_with(spec: &NetworkSpec, rng: &mut impl Rng, init: Init) -> Result<ParamStore> {
    let layers = spec
        .param_shapes()?
        .iter()
        .map(|s| init.layer(s, rng))
        .collect::<Result<_>>()?;
    Ok(ParamStore { layers })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn heads() -> Vec<HeadSpec> {
        vec![HeadSpec::single("image", 10)]
    }

    #[test]
    fn two_conv_256_layers() {
        let s = build_architecture(2, 256, heads(), 1024).unwrap();
        assert_eq!(
            s.trunk,
            vec![
                LayerSpec::conv(64, 11, 4, 0),
                LayerSpec::Relu,
                LayerSpec::pool2(),
                LayerSpec::conv(128, 5, 1, 2),
                LayerSpec::Relu,
                LayerSpec::pool2(),
                LayerSpec::Fc { width: 4096 },
                LayerSpec::Relu,
                LayerSpec::Dropout { rate: 0.5 },
                LayerSpec::Fc { width: 1024 },
                LayerSpec::Relu,
                LayerSpec::Dropout { rate: 0.5 },
            ]
        );
        assert_eq!(s.crop_resolution, 227);
    }

    #[test]
    fn three_conv_256_has_no_pool_after_third() {
        let s = build_architecture(3, 256, heads(), 2048).unwrap();
        assert_eq!(s.trunk[0], LayerSpec::conv(64, 7, 3, 0));
        let third = s
            .trunk
            .iter()
            .position(|l| *l == LayerSpec::conv(320, 3, 1, 1))
            .unwrap();
        assert_eq!(s.trunk[third + 1], LayerSpec::Relu);
        assert_eq!(s.trunk[third + 2], LayerSpec::Fc { width: 4096 });
    }

    #[test]
    fn two_conv_64_kernel_counts() {
        let s = build_architecture(2, 64, heads(), 1024).unwrap();
        assert_eq!(s.trunk[0], LayerSpec::conv(32, 5, 1, 2));
        assert_eq!(s.trunk[3], LayerSpec::conv(64, 5, 1, 2));
    }

    #[test]
    fn three_conv_32_pools_once() {
        let s = build_architecture(3, 32, heads(), 1024).unwrap();
        let pools = s
            .trunk
            .iter()
            .filter(|l| matches!(l, LayerSpec::MaxPool { .. }))
            .count();
        assert_eq!(pools, 1);
        assert_eq!(s.infer_shapes().unwrap()[6], vec![120, 14, 14]);
    }

    #[test]
    fn deep_nets_need_256() {
        for d in [4, 5] {
            for r in [32, 64, 128] {
                assert!(matches!(
                    build_architecture(d, r, heads(), 1024),
                    Err(Error::Config(_))
                ));
            }
            assert!(build_architecture(d, 256, heads(), 1024).is_ok());
        }
        assert!(build_architecture(6, 256, heads(), 1024).is_err());
        assert!(build_architecture(2, 100, heads(), 1024).is_err());
    }

    #[test]
    fn shapes_two_conv_32() {
        let s = build_architecture(2, 32, heads(), 1024).unwrap();
        let shapes = s.infer_shapes().unwrap();
        assert_eq!(shapes[0], vec![64, 28, 28]);
        assert_eq!(shapes[2], vec![64, 14, 14]);
        assert_eq!(shapes[3], vec![128, 14, 14]);
        assert_eq!(shapes[5], vec![128, 7, 7]);
        assert_eq!(shapes[6], vec![4096]);
        assert_eq!(shapes[9], vec![1024]);
    }

    #[test]
    fn infeasible_pool_chain_names_layer() {
        let trunk = vec![
            LayerSpec::conv(4, 5, 4, 0),
            LayerSpec::pool2(),
            LayerSpec::pool2(),
            LayerSpec::pool2(),
        ];
        let err = NetworkSpec::new(32, 3, trunk, heads()).unwrap_err();
        match err {
            Error::Infeasible { layer, name, .. } => {
                assert_eq!(layer, 3);
                assert_eq!(name, "pool3");
            }
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn head_validation() {
        assert!(build_architecture(2, 32, vec![HeadSpec::single("a", 1)], 16).is_err());
        assert!(build_architecture(2, 32, vec![HeadSpec::multi("a", 1)], 16).is_ok());
        assert!(build_architecture(2, 32, vec![], 16).is_err());
        let dup = vec![HeadSpec::single("a", 2), HeadSpec::multi("a", 3)];
        assert!(build_architecture(2, 32, dup, 16).is_err());
    }

    #[test]
    fn parameter_count_two_conv_32_closed_form() {
        let s = build_architecture(2, 32, heads(), 1024).unwrap();
        let conv1 = 64 * 3 * 25 + 64;
        let conv2 = 128 * 64 * 25 + 128;
        let fc1 = 4096 * (128 * 7 * 7) + 4096;
        let fc2 = 1024 * 4096 + 1024;
        let head = 10 * 1024 + 10;
        assert_eq!(s.parameter_count().unwrap(), conv1 + conv2 + fc1 + fc2 + head);
    }

    #[test]
    fn init_is_seeded_and_scaled() {
        let cfg = ArchitectureConfig {
            fc1_width: 32,
            fc2_width: 16,
            kernel_divisor: 8,
            ..ArchitectureConfig::new(2, 32, 16)
        };
        let s = build_with(&cfg, heads()).unwrap();
        let a = init_params(&s, &mut ChaCha8Rng::seed_from_u64(5), 0.01).unwrap();
        let b = init_params(&s, &mut ChaCha8Rng::seed_from_u64(5), 0.01).unwrap();
        assert_eq!(a, b);
        a.matches(&s).unwrap();
        let z = init_params(&s, &mut ChaCha8Rng::seed_from_u64(5), 0.0).unwrap();
        assert!(z.layers.iter().all(|l| l.weight.data().iter().all(|&w| w == 0.0)));
        assert!(a.layers.iter().all(|l| !l.frozen && l.bias.data().iter().all(|&b| b == 0.0)));
    }

    #[test]
    fn init_variance_matches_scale() {
        let shape = ParamShape {
            name: "fc1".into(),
            kind: ParamKind::Fc,
            weight: vec![100, 1000],
            bias: vec![100],
        };
        let l = init_layer(&shape, &mut ChaCha8Rng::seed_from_u64(11), 0.01).unwrap();
        let n = l.weight.len() as f64;
        let mean = l.weight.data().iter().sum::<f64>() / n;
        let var = l.weight.data().iter().map(|w| (w - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!((var / 1e-4 - 1.0).abs() < 0.05, "variance {var}");
    }
}
