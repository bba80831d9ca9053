//! Layer stacks with cached forward passes and reverse-mode backward.

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};

use rand::RngCore;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dropout::{self, DropoutConvention, DropoutMask, RetainGroup, RetainGroupConfig};
use crate::error::{Error, Result};
use crate::nn::ops::{self, Padding};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum LayerKind {
    Affine {
        inputs: usize,
        outputs: usize,
    },
    Conv2d {
        in_channels: usize,
        out_channels: usize,
        kernel_h: usize,
        kernel_w: usize,
        padding: Padding,
    },
    MaxPool2x2,
    Relu,
    Dropout,
    SoftmaxXent,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub kind: LayerKind,
    pub retain_group: RetainGroup,
}

impl LayerSpec {
    pub fn affine(inputs: usize, outputs: usize) -> Self {
        Self::plain(LayerKind::Affine { inputs, outputs })
    }

    pub fn conv(in_channels: usize, out_channels: usize, kernel: usize, padding: Padding) -> Self {
        Self::plain(LayerKind::Conv2d {
            in_channels,
            out_channels,
            kernel_h: kernel,
            kernel_w: kernel,
            padding,
        })
    }

    pub fn relu() -> Self {
        Self::plain(LayerKind::Relu)
    }

    pub fn maxpool() -> Self {
        Self::plain(LayerKind::MaxPool2x2)
    }

    pub fn dropout(group: RetainGroup) -> Self {
        Self {
            kind: LayerKind::Dropout,
            retain_group: group,
        }
    }

    pub fn softmax_xent() -> Self {
        Self::plain(LayerKind::SoftmaxXent)
    }

    fn plain(kind: LayerKind) -> Self {
        Self {
            kind,
            retain_group: RetainGroup::None,
        }
    }

    /// Per-sample output shape for a per-sample input shape.
    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        match self.kind {
            LayerKind::Affine { inputs, outputs } => {
                let n: usize = input.iter().product();
                if n != inputs {
                    return Err(Error::Dimension(format!(
                        "affine layer expects {inputs} inputs, previous layer yields {input:?} = {n}"
                    )));
                }
                Ok(vec![outputs])
            }
            LayerKind::Conv2d {
                in_channels,
                out_channels,
                kernel_h,
                kernel_w,
                padding,
            } => {
                if input.len() != 3 || input[0] != in_channels {
                    return Err(Error::Dimension(format!(
                        "conv layer expects [{in_channels}, h, w], previous layer yields {input:?}"
                    )));
                }
                let (h, w) = (input[1], input[2]);
                match padding {
                    Padding::Same => Ok(vec![out_channels, h, w]),
                    Padding::Valid if kernel_h <= h && kernel_w <= w => {
                        Ok(vec![out_channels, h - kernel_h + 1, w - kernel_w + 1])
                    }
                    Padding::Valid => Err(Error::Dimension(format!(
                        "conv kernel {kernel_h}x{kernel_w} larger than input {h}x{w}"
                    ))),
                }
            }
            LayerKind::MaxPool2x2 => {
                if input.len() != 3 {
                    return Err(Error::Dimension(format!("maxpool expects [c, h, w], got {input:?}")));
                }
                Ok(vec![input[0], input[1].div_ceil(2), input[2].div_ceil(2)])
            }
            LayerKind::Relu | LayerKind::Dropout | LayerKind::SoftmaxXent => Ok(input.to_vec()),
        }
    }

    fn param_shapes(&self) -> Option<(Vec<usize>, Vec<usize>)> {
        match self.kind {
            LayerKind::Affine { inputs, outputs } => Some((vec![inputs, outputs], vec![outputs])),
            LayerKind::Conv2d {
                in_channels,
                out_channels,
                kernel_h,
                kernel_w,
                ..
            } => Some((vec![out_channels, in_channels, kernel_h, kernel_w], vec![out_channels])),
            _ => None,
        }
    }
}

/// Whether hidden widths are used as given or enlarged by `1 / theta_bar`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerSizeMode {
    #[default]
    N,
    NOverTheta,
}

impl LayerSizeMode {
    /// Width of a droppable layer whose nominal width is `base`.
    pub fn width(self, base: usize, theta_bar: f64) -> usize {
        match self {
            LayerSizeMode::N => base,
            // Guard against 256 / 0.5 landing a hair above 512.
            LayerSizeMode::NOverTheta => ((base as f64 / theta_bar) - 1e-9).ceil() as usize,
        }
    }
}

impl std::str::FromStr for LayerSizeMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "n" => Ok(Self::N),
            "n_over_theta" => Ok(Self::NOverTheta),
            other => Err(Error::Input(format!("unknown layer size mode '{other}'"))),
        }
    }
}

/// Dense MLP: input dropout, then `affine-relu-dropout` per hidden layer,
/// then an output affine layer and the softmax cross-entropy head.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub input_shape: Vec<usize>,
    pub hidden: Vec<usize>,
    pub classes: usize,
}

/// Convolutional net: input dropout, `conv-relu-maxpool-dropout` per conv
/// stage, `affine-relu-dropout` per hidden fc layer, output affine layer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CnnSpec {
    pub input_shape: Vec<usize>,
    pub channels: Vec<usize>,
    pub kernel: usize,
    pub padding: Padding,
    pub fc: Vec<usize>,
    pub classes: usize,
}

impl CnnSpec {
    /// LeNet-style: conv(5x5, 32)-pool-conv(5x5, 64)-pool-fc(512).
    pub fn cnn1(input_shape: &[usize], classes: usize) -> Self {
        Self {
            input_shape: input_shape.to_vec(),
            channels: vec![32, 64],
            kernel: 5,
            padding: Padding::Valid,
            fc: vec![512],
            classes,
        }
    }

    /// Three conv stages with same padding, then two fc layers.
    pub fn cnn2(input_shape: &[usize], classes: usize) -> Self {
        Self {
            input_shape: input_shape.to_vec(),
            channels: vec![32, 64, 128],
            kernel: 5,
            padding: Padding::Same,
            fc: vec![512, 512],
            classes,
        }
    }
}

impl MlpSpec {
    pub fn layers(&self, mode: LayerSizeMode, floors: &RetainGroupConfig) -> Vec<LayerSpec> {
        let mut layers = vec![LayerSpec::dropout(RetainGroup::Input)];
        let mut width: usize = self.input_shape.iter().product();
        for &h in &self.hidden {
            let h = mode.width(h, floors.hidden);
            layers.push(LayerSpec::affine(width, h));
            layers.push(LayerSpec::relu());
            layers.push(LayerSpec::dropout(RetainGroup::Hidden));
            width = h;
        }
        layers.push(LayerSpec::affine(width, self.classes));
        layers.push(LayerSpec::softmax_xent());
        layers
    }
}

impl CnnSpec {
    pub fn layers(&self, mode: LayerSizeMode, floors: &RetainGroupConfig) -> Result<Vec<LayerSpec>> {
        let mut layers = vec![LayerSpec::dropout(RetainGroup::Input)];
        let mut shape = self.input_shape.clone();
        for &c in &self.channels {
            let c = mode.width(c, floors.conv);
            for spec in [
                LayerSpec::conv(shape[0], c, self.kernel, self.padding),
                LayerSpec::relu(),
                LayerSpec::maxpool(),
                LayerSpec::dropout(RetainGroup::Conv),
            ] {
                shape = spec.output_shape(&shape)?;
                layers.push(spec);
            }
        }
        let mut width: usize = shape.iter().product();
        for &h in &self.fc {
            let h = mode.width(h, floors.fc);
            layers.push(LayerSpec::affine(width, h));
            layers.push(LayerSpec::relu());
            layers.push(LayerSpec::dropout(RetainGroup::Fc));
            width = h;
        }
        layers.push(LayerSpec::affine(width, self.classes));
        layers.push(LayerSpec::softmax_xent());
        Ok(layers)
    }
}

/// How dropout layers behave during one forward pass.
pub enum DropoutPass<'a> {
    /// No suppression (scaled by the floors under the classic convention).
    Eval,
    /// Fresh masks for every dropout layer, retain probabilities per group.
    Sample {
        thetas: RetainGroupConfig,
        rng: &'a mut dyn RngCore,
    },
    /// Reuse the given masks, one per dropout layer in layer order.
    Frozen(&'a [DropoutMask]),
}

#[derive(Clone, Debug)]
enum LayerCache {
    Input(Tensor),
    Affine { input: Tensor, in_shape: Vec<usize> },
    Pool { argmax: Vec<usize>, input_shape: Vec<usize> },
    Mask(DropoutMask),
    Nothing,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Layer {
    spec: LayerSpec,
    weight: Option<Tensor>,
    bias: Option<Tensor>,
}

/// An ordered stack of layers ending in a softmax cross-entropy head.
///
/// Parameters are only changed through [`Network::params_mut`]; forward and
/// backward leave them untouched.
#[derive(Clone, Debug)]
pub struct Network {
    layers: Vec<Layer>,
    input_shape: Vec<usize>,
    layer_size_mode: LayerSizeMode,
    convention: DropoutConvention,
    floors: RetainGroupConfig,
    cache: Option<Vec<LayerCache>>,
    next_serial: u64,
    last_backward_serials: Vec<u64>,
}

impl Network {
    /// Validates the dimension chain and draws weights from
    /// `N(0, 2 / fan_in)` in layer order (row-major within a tensor);
    /// biases start at zero.
    pub fn new(
        input_shape: &[usize],
        specs: Vec<LayerSpec>,
        layer_size_mode: LayerSizeMode,
        rng: &mut dyn RngCore,
    ) -> Result<Self> {
        if specs.last().map(|s| s.kind) != Some(LayerKind::SoftmaxXent) {
            return Err(Error::Input("network must end with a softmax cross-entropy head".into()));
        }
        if specs[..specs.len() - 1].iter().any(|s| s.kind == LayerKind::SoftmaxXent) {
            return Err(Error::Input("softmax cross-entropy may only appear as the last layer".into()));
        }
        let mut shape = input_shape.to_vec();
        let mut layers = Vec::with_capacity(specs.len());
        for spec in specs {
            shape = spec.output_shape(&shape)?;
            let (weight, bias) = match spec.param_shapes() {
                Some((ws, bs)) => {
                    let fan_in: usize = ws.iter().product::<usize>() / ws[if ws.len() == 2 { 1 } else { 0 }];
                    let std = (2.0 / fan_in as f64).sqrt();
                    let len: usize = ws.iter().product();
                    let data = (0..len)
                        .map(|_| {
                            let z: f64 = StandardNormal.sample(rng);
                            z * std
                        })
                        .collect();
                    (Some(Tensor::from_parts(ws, data)), Some(Tensor::zeros(&bs)))
                }
                None => (None, None),
            };
            layers.push(Layer { spec, weight, bias });
        }
        if shape.len() != 1 {
            return Err(Error::Dimension(format!("network output must be a vector, got {shape:?}")));
        }
        Ok(Self {
            layers,
            input_shape: input_shape.to_vec(),
            layer_size_mode,
            convention: DropoutConvention::Inverted,
            floors: RetainGroupConfig::uniform(1.0),
            cache: None,
            next_serial: 0,
            last_backward_serials: Vec::new(),
        })
    }

    pub fn mlp(spec: &MlpSpec, mode: LayerSizeMode, floors: &RetainGroupConfig, rng: &mut dyn RngCore) -> Result<Self> {
        let mut net = Self::new(&spec.input_shape, spec.layers(mode, floors), mode, rng)?;
        net.floors = *floors;
        Ok(net)
    }

    pub fn cnn(spec: &CnnSpec, mode: LayerSizeMode, floors: &RetainGroupConfig, rng: &mut dyn RngCore) -> Result<Self> {
        let mut net = Self::new(&spec.input_shape, spec.layers(mode, floors)?, mode, rng)?;
        net.floors = *floors;
        Ok(net)
    }

    /// Sets the dropout convention and the floor retain probabilities used
    /// for classic-convention evaluation.
    pub fn set_dropout_convention(&mut self, convention: DropoutConvention, floors: RetainGroupConfig) {
        self.convention = convention;
        self.floors = floors;
    }

    pub fn convention(&self) -> DropoutConvention {
        self.convention
    }

    pub fn layer_size_mode(&self) -> LayerSizeMode {
        self.layer_size_mode
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn specs(&self) -> Vec<LayerSpec> {
        self.layers.iter().map(|l| l.spec).collect()
    }

    pub fn num_classes(&self) -> usize {
        self.layers
            .iter()
            .rev()
            .find_map(|l| match l.spec.kind {
                LayerKind::Affine { outputs, .. } => Some(outputs),
                LayerKind::Conv2d { out_channels, .. } => Some(out_channels),
                _ => None,
            })
            .unwrap_or(0)
    }

    /// Retain groups of the dropout layers, in layer order.
    pub fn dropout_groups(&self) -> Vec<RetainGroup> {
        self.layers
            .iter()
            .filter(|l| l.spec.kind == LayerKind::Dropout)
            .map(|l| l.spec.retain_group)
            .collect()
    }

    /// Parameters in a fixed order: per parameterized layer, weight then bias.
    pub fn params(&self) -> Vec<&Tensor> {
        self.layers
            .iter()
            .flat_map(|l| [l.weight.as_ref(), l.bias.as_ref()])
            .flatten()
            .collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        self.layers
            .iter_mut()
            .flat_map(|l| [l.weight.as_mut(), l.bias.as_mut()])
            .flatten()
            .collect()
    }

    pub fn num_params(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    fn check_input(&self, x: &Tensor) -> Result<()> {
        if x.ndim() != self.input_shape.len() + 1 || x.shape()[1..] != self.input_shape[..] {
            return Err(Error::Dimension(format!(
                "network expects [batch, {:?}], got {:?}",
                self.input_shape,
                x.shape()
            )));
        }
        Ok(())
    }

    /// Training forward pass. Caches what backward needs and returns logits.
    pub fn forward(&mut self, x: &Tensor, mut pass: DropoutPass<'_>) -> Result<Tensor> {
        self.check_input(x)?;
        self.cache = None;
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut h = x.clone();
        let mut dropout_idx = 0;
        for layer in &self.layers {
            let cache = match layer.spec.kind {
                LayerKind::Affine { .. } => {
                    let in_shape = h.shape().to_vec();
                    let flat = flatten(h)?;
                    h = ops::affine_forward(&flat, layer.weight.as_ref().unwrap(), layer.bias.as_ref().unwrap())?;
                    LayerCache::Affine { input: flat, in_shape }
                }
                LayerKind::Conv2d { padding, .. } => {
                    let out = ops::conv2d_forward(&h, layer.weight.as_ref().unwrap(), layer.bias.as_ref().unwrap(), padding)?;
                    LayerCache::Input(std::mem::replace(&mut h, out))
                }
                LayerKind::Relu => {
                    let out = ops::relu_forward(&h);
                    LayerCache::Input(std::mem::replace(&mut h, out))
                }
                LayerKind::MaxPool2x2 => {
                    let pooled = ops::maxpool2x2_forward(&h)?;
                    let input_shape = h.shape().to_vec();
                    h = pooled.output;
                    LayerCache::Pool {
                        argmax: pooled.argmax,
                        input_shape,
                    }
                }
                LayerKind::Dropout => {
                    let mask = match &mut pass {
                        DropoutPass::Eval => DropoutMask::ones(h.shape()),
                        DropoutPass::Sample { thetas, rng } => {
                            let theta = thetas.get(layer.spec.retain_group);
                            let mut m = dropout::sample_mask(h.shape(), theta, *rng)?;
                            m.serial = self.next_serial;
                            self.next_serial += 1;
                            m
                        }
                        DropoutPass::Frozen(masks) => masks
                            .get(dropout_idx)
                            .cloned()
                            .ok_or_else(|| Error::Input(format!("no frozen mask for dropout layer {dropout_idx}")))?,
                    };
                    dropout_idx += 1;
                    h = match pass {
                        DropoutPass::Eval => {
                            dropout::apply_eval(&h, self.floors.get(layer.spec.retain_group), self.convention)
                        }
                        _ => dropout::apply_train(&h, &mask, self.convention)?,
                    };
                    LayerCache::Mask(mask)
                }
                LayerKind::SoftmaxXent => LayerCache::Nothing,
            };
            caches.push(cache);
        }
        if let DropoutPass::Frozen(masks) = pass {
            if masks.len() != dropout_idx {
                return Err(Error::Input(format!(
                    "{} frozen masks given for {dropout_idx} dropout layers",
                    masks.len()
                )));
            }
        }
        if !h.all_finite() {
            return Err(Error::NonFinite("forward pass".into()));
        }
        self.cache = Some(caches);
        Ok(h)
    }

    /// Inference pass: no masks, no caching, parameters untouched.
    pub fn forward_eval(&self, x: &Tensor) -> Result<Tensor> {
        self.check_input(x)?;
        let mut h = x.clone();
        for layer in &self.layers {
            h = match layer.spec.kind {
                LayerKind::Affine { .. } => {
                    ops::affine_forward(&flatten(h)?, layer.weight.as_ref().unwrap(), layer.bias.as_ref().unwrap())?
                }
                LayerKind::Conv2d { padding, .. } => {
                    ops::conv2d_forward(&h, layer.weight.as_ref().unwrap(), layer.bias.as_ref().unwrap(), padding)?
                }
                LayerKind::Relu => ops::relu_forward(&h),
                LayerKind::MaxPool2x2 => ops::maxpool2x2_forward(&h)?.output,
                LayerKind::Dropout => {
                    dropout::apply_eval(&h, self.floors.get(layer.spec.retain_group), self.convention)
                }
                LayerKind::SoftmaxXent => h,
            };
        }
        if !h.all_finite() {
            return Err(Error::NonFinite("evaluation pass".into()));
        }
        Ok(h)
    }

    /// One layer of a frozen-mask pass without caching. ReLU signs and
    /// max-pool winners are fed to `pattern`.
    fn frozen_step(&self, idx: usize, h: Tensor, mask: Option<&DropoutMask>, pattern: &mut DefaultHasher) -> Result<Tensor> {
        let layer = &self.layers[idx];
        Ok(match layer.spec.kind {
            LayerKind::Affine { .. } => {
                ops::affine_forward(&flatten(h)?, layer.weight.as_ref().unwrap(), layer.bias.as_ref().unwrap())?
            }
            LayerKind::Conv2d { padding, .. } => {
                ops::conv2d_forward(&h, layer.weight.as_ref().unwrap(), layer.bias.as_ref().unwrap(), padding)?
            }
            LayerKind::Relu => {
                for chunk in h.data().chunks(64) {
                    let bits = chunk.iter().enumerate().fold(0u64, |acc, (i, &v)| acc | (u64::from(v > 0.0) << i));
                    pattern.write_u64(bits);
                }
                ops::relu_forward(&h)
            }
            LayerKind::MaxPool2x2 => {
                let pooled = ops::maxpool2x2_forward(&h)?;
                pooled.argmax.hash(pattern);
                pooled.output
            }
            LayerKind::Dropout => {
                let mask = mask.ok_or_else(|| Error::Input(format!("no frozen mask for layer {idx}")))?;
                dropout::apply_train(&h, mask, self.convention)?
            }
            LayerKind::SoftmaxXent => h,
        })
    }

    /// Inputs to every layer under frozen masks; the last entry is the logits.
    pub(crate) fn frozen_activations(&self, x: &Tensor, masks: &[DropoutMask]) -> Result<Vec<Tensor>> {
        self.check_input(x)?;
        if masks.len() != self.dropout_groups().len() {
            return Err(Error::Input(format!(
                "{} frozen masks given for {} dropout layers",
                masks.len(),
                self.dropout_groups().len()
            )));
        }
        let mut acts = vec![x.clone()];
        let mut next_mask = masks.iter();
        for idx in 0..self.layers.len() {
            let mask = (self.layers[idx].spec.kind == LayerKind::Dropout).then(|| next_mask.next()).flatten();
            let h = self.frozen_step(idx, acts[idx].clone(), mask, &mut DefaultHasher::new())?;
            acts.push(h);
        }
        Ok(acts)
    }

    /// Logits from feeding `h` into layer `from` onward under frozen masks,
    /// with a fingerprint of the ReLU and max-pool decisions taken.
    pub(crate) fn frozen_tail(&self, from: usize, mut h: Tensor, masks: &[DropoutMask]) -> Result<(Tensor, u64)> {
        let mut pattern = DefaultHasher::new();
        let mut next_mask = masks.iter().skip(self.layers[..from].iter().filter(|l| l.spec.kind == LayerKind::Dropout).count());
        for idx in from..self.layers.len() {
            let mask = (self.layers[idx].spec.kind == LayerKind::Dropout).then(|| next_mask.next()).flatten();
            h = self.frozen_step(idx, h, mask, &mut pattern)?;
        }
        if !h.all_finite() {
            return Err(Error::NonFinite("forward pass".into()));
        }
        Ok((h, pattern.finish()))
    }

    /// Layer index owning each entry of [`Network::params`].
    pub(crate) fn param_layers(&self) -> Vec<usize> {
        self.layers
            .iter()
            .enumerate()
            .flat_map(|(i, l)| [l.weight.as_ref().map(|_| i), l.bias.as_ref().map(|_| i)])
            .flatten()
            .collect()
    }

    /// Masks drawn (or reused) by the most recent cached forward pass.
    pub fn last_masks(&self) -> Vec<DropoutMask> {
        self.cache
            .iter()
            .flatten()
            .filter_map(|c| match c {
                LayerCache::Mask(m) => Some(m.clone()),
                _ => None,
            })
            .collect()
    }

    /// Serials of the masks consumed by the most recent backward pass.
    pub fn last_backward_serials(&self) -> &[u64] {
        &self.last_backward_serials
    }

    /// Gradients of the loss for every parameter, in [`Network::params`]
    /// order, given `d loss / d logits`. Consumes the forward cache.
    pub fn backward(&mut self, dlogits: &Tensor) -> Result<Vec<Tensor>> {
        let caches = self
            .cache
            .take()
            .ok_or_else(|| Error::State("backward called without a preceding forward pass".into()))?;
        let mut grads: Vec<Option<(Tensor, Tensor)>> = vec![None; self.layers.len()];
        let mut serials = Vec::new();
        let mut g = dlogits.clone();
        for (idx, (layer, cache)) in self.layers.iter().zip(&caches).enumerate().rev() {
            g = match (layer.spec.kind, cache) {
                (LayerKind::SoftmaxXent, _) => g,
                (LayerKind::Affine { .. }, LayerCache::Affine { input, in_shape }) => {
                    let (dx, dw, db) = ops::affine_backward(input, layer.weight.as_ref().unwrap(), &g)?;
                    grads[idx] = Some((dw, db));
                    dx.reshape(in_shape)?
                }
                (LayerKind::Conv2d { padding, .. }, LayerCache::Input(input)) => {
                    let (dx, dk, db) = ops::conv2d_backward(input, layer.weight.as_ref().unwrap(), &g, padding)?;
                    grads[idx] = Some((dk, db));
                    dx
                }
                (LayerKind::Relu, LayerCache::Input(input)) => ops::relu_backward(&g, input)?,
                (LayerKind::MaxPool2x2, LayerCache::Pool { argmax, input_shape }) => {
                    ops::maxpool2x2_backward(&g, argmax, input_shape)?
                }
                (LayerKind::Dropout, LayerCache::Mask(mask)) => {
                    serials.push(mask.serial);
                    dropout::backward(&g, mask, self.convention)?
                }
                _ => return Err(Error::State(format!("cache of layer {idx} does not match its kind"))),
            };
        }
        serials.reverse();
        self.last_backward_serials = serials;
        let out: Vec<Tensor> = grads.into_iter().flatten().flat_map(|(w, b)| [w, b]).collect();
        if out.iter().any(|t| !t.all_finite()) {
            return Err(Error::NonFinite("backward pass".into()));
        }
        Ok(out)
    }

    /// Forward, cross-entropy and backward in one call.
    pub fn loss_and_gradients(
        &mut self,
        x: &Tensor,
        labels: &[usize],
        pass: DropoutPass<'_>,
    ) -> Result<(f64, Tensor, Vec<Tensor>)> {
        let logits = self.forward(x, pass)?;
        let (loss, dlogits) = ops::softmax_cross_entropy(&logits, labels)?;
        let grads = self.backward(&dlogits)?;
        Ok((loss, logits, grads))
    }

    /// Predicted classes, evaluated in chunks of `chunk` samples.
    pub fn predict(&self, x: &Tensor, chunk: usize) -> Result<Vec<usize>> {
        let n = x.batch();
        let chunk = chunk.max(1);
        let mut out = Vec::with_capacity(n);
        let mut start = 0;
        while start < n {
            let end = (start + chunk).min(n);
            let idx: Vec<usize> = (start..end).collect();
            let logits = self.forward_eval(&x.gather_rows(&idx))?;
            out.extend(argmax_rows(&logits));
            start = end;
        }
        Ok(out)
    }

    pub fn accuracy(&self, x: &Tensor, labels: &[usize]) -> Result<f64> {
        let pred = self.predict(x, 500)?;
        Ok(accuracy(&pred, labels))
    }
}

fn flatten(h: Tensor) -> Result<Tensor> {
    if h.ndim() == 2 {
        return Ok(h);
    }
    let shape = [h.batch(), h.row_len()];
    h.reshape(&shape)
}

pub fn argmax_rows(logits: &Tensor) -> Vec<usize> {
    let k = logits.row_len();
    logits
        .data()
        .chunks_exact(k)
        .map(|row| {
            let mut best = 0;
            for (j, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = j;
                }
            }
            best
        })
        .collect()
}

pub fn accuracy(pred: &[usize], labels: &[usize]) -> f64 {
    if labels.is_empty() {
        return 0.0;
    }
    pred.iter().zip(labels).filter(|(p, l)| p == l).count() as f64 / labels.len() as f64
}
