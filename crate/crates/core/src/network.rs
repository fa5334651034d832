//! Forward and backward passes of a whole network: shared trunk plus one head.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::layers::{
    self, conv2d_forward_ctx, dropout, fc_forward_ctx, maxpool_forward, relu_ctx, sigmoid,
    sigmoid_bce, softmax, softmax_xent, ConvParams, FcParams, LayerContext, LayerRef, Mode,
    ParamGrads,
};
use crate::netspec::{HeadSpec, LabelMode, LayerSpec, NetworkSpec, ParamStore};
use crate::tensor::Tensor;

/// Gradient buffers aligned with [`ParamStore::layers`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<ParamGrads>,
}

impl Gradients {
    pub fn zeros_for(params: &ParamStore) -> Self {
        Self {
            layers: params
                .layers
                .iter()
                .map(|l| ParamGrads {
                    weight: l.weight.zeros_like(),
                    bias: l.bias.zeros_like(),
                })
                .collect(),
        }
    }

    fn accumulate(&mut self, index: usize, g: &ParamGrads, scale: f64) -> Result<()> {
        let dst = &mut self.layers[index];
        dst.weight.axpy(scale, &g.weight)?;
        dst.bias.axpy(scale, &g.bias)
    }

    pub fn scale(&mut self, factor: f64) {
        for g in &mut self.layers {
            for v in g.weight.data_mut().iter_mut().chain(g.bias.data_mut()) {
                *v *= factor;
            }
        }
    }

    /// Elementwise sum with another gradient set of the same layout.
    pub fn add(&mut self, other: &Gradients) -> Result<()> {
        if self.layers.len() != other.layers.len() {
            return Err(Error::shape("gradient sets of different layouts"));
        }
        for (i, g) in other.layers.iter().enumerate() {
            self.accumulate(i, g, 1.0)?;
        }
        Ok(())
    }
}

/// Loss of one head given its logits and the sample's label set.
pub fn head_loss(head: &HeadSpec, logits: &Tensor, labels: &[usize]) -> Result<(f64, Tensor)> {
    match head.label_mode {
        LabelMode::Single => {
            let &[label] = labels else {
                return Err(Error::config(format!(
                    "single-label head {} got labels {labels:?}",
                    head.name
                )));
            };
            softmax_xent(logits, label)
        }
        LabelMode::Multi => {
            let mut t = vec![0.0; head.class_count];
            for &l in labels {
                *t.get_mut(l).ok_or_else(|| {
                    Error::param(format!("label {l} outside head {} classes", head.name))
                })? = 1.0;
            }
            sigmoid_bce(logits, &Tensor::from_vec(&[head.class_count], t)?)
        }
    }
}

/// Post-activation scores: softmax for single-label heads, per-class sigmoid
/// for multi-label heads.
pub fn head_scores(head: &HeadSpec, logits: &[f64]) -> Vec<f64> {
    match head.label_mode {
        LabelMode::Single => softmax(logits),
        LabelMode::Multi => logits.iter().map(|&z| sigmoid(z)).collect(),
    }
}

/// Forward trace of one sample through the trunk.
pub struct TrunkTrace {
    pub features: Tensor,
    contexts: Vec<LayerContext>,
}

/// A spec bound to a compatible parameter store.
#[derive(Debug, Clone, Copy)]
pub struct Network<'a> {
    pub spec: &'a NetworkSpec,
    pub params: &'a ParamStore,
}

impl<'a> Network<'a> {
    pub fn new(spec: &'a NetworkSpec, params: &'a ParamStore) -> Result<Self> {
        params.matches(spec)?;
        Ok(Self { spec, params })
    }

    fn head_param_index(&self, head: usize) -> usize {
        self.params.layers.len() - self.spec.heads.len() + head
    }

    pub fn head_index(&self, name: &str) -> Result<usize> {
        self.spec
            .head_index(name)
            .ok_or_else(|| Error::config(format!("unknown head {name}")))
    }

    fn layer_ref(&self, layer: &LayerSpec, param: usize) -> Result<LayerRef<'a>> {
        let p = &self.params.layers[param];
        Ok(match *layer {
            LayerSpec::Conv { stride, pad, .. } => {
                LayerRef::Conv(ConvParams::new(&p.weight, &p.bias, stride, pad)?)
            }
            LayerSpec::Fc { .. } => LayerRef::Fc(FcParams::new(&p.weight, &p.bias)?),
            _ => unreachable!("only learnable layers carry parameters"),
        })
    }

    pub fn trunk_forward(&self, input: &Tensor, mode: Mode, rng: &mut impl Rng) -> Result<TrunkTrace> {
        if input.shape() != self.spec.input_shape() {
            return Err(Error::shape(format!(
                "network expects input {:?}, got {:?}",
                self.spec.input_shape(),
                input.shape()
            )));
        }
        let mut x = input.clone();
        if let Some(mean) = &self.spec.input_mean {
            let plane = x.len() / mean.len();
            for (v, i) in x.data_mut().iter_mut().zip(0..) {
                *v -= mean[i / plane];
            }
        }
        let mut contexts = Vec::with_capacity(self.spec.trunk.len());
        let mut param = 0;
        for layer in &self.spec.trunk {
            let (y, ctx) = match *layer {
                LayerSpec::Conv { .. } => {
                    let LayerRef::Conv(p) = self.layer_ref(layer, param)? else { unreachable!() };
                    param += 1;
                    let (y, c) = conv2d_forward_ctx(&x, p)?;
                    (y, LayerContext::Conv(c))
                }
                LayerSpec::Fc { .. } => {
                    let LayerRef::Fc(p) = self.layer_ref(layer, param)? else { unreachable!() };
                    param += 1;
                    let (y, c) = fc_forward_ctx(&x, p)?;
                    (y, LayerContext::Fc(c))
                }
                LayerSpec::MaxPool { size, stride } => {
                    let (y, c) = maxpool_forward(&x, size, stride)?;
                    (y, LayerContext::Pool(c))
                }
                LayerSpec::Relu => {
                    let (y, c) = relu_ctx(&x);
                    (y, LayerContext::Relu(c))
                }
                LayerSpec::Dropout { rate } => {
                    let (y, c) = dropout(&x, rate, mode, rng)?;
                    (y, LayerContext::Dropout(c))
                }
            };
            contexts.push(ctx);
            x = y;
        }
        Ok(TrunkTrace {
            features: x,
            contexts,
        })
    }

    fn head_params(&self, head: usize) -> Result<FcParams<'a>> {
        let p = &self.params.layers[self.head_param_index(head)];
        FcParams::new(&p.weight, &p.bias)
    }

    /// Head logits for an input in eval mode.
    pub fn logits(&self, head: usize, input: &Tensor) -> Result<Tensor> {
        // Eval-mode dropout draws nothing from the generator.
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let trace = self.trunk_forward(input, Mode::Eval, &mut rng)?;
        layers::fc_forward(&trace.features, self.head_params(head)?)
    }

    /// Eval-mode post-activation scores of one head.
    pub fn predict(&self, head: usize, input: &Tensor) -> Result<Vec<f64>> {
        let z = self.logits(head, input)?;
        Ok(head_scores(&self.spec.heads[head], z.data()))
    }

    /// Trunk index of the lowest learnable layer that is not frozen; backward
    /// does not need to go below it.
    fn backward_floor(&self) -> Option<usize> {
        let mut param = 0;
        for (i, l) in self.spec.trunk.iter().enumerate() {
            if l.is_learnable() {
                if !self.params.layers[param].frozen {
                    return Some(i);
                }
                param += 1;
            }
        }
        None
    }

    /// Forward and backward for one sample, adding `scale * dL/dtheta` into
    /// `grads`. Returns the unscaled loss.
    pub fn accumulate_sample(
        &self,
        input: &Tensor,
        head: usize,
        labels: &[usize],
        mode: Mode,
        rng: &mut impl Rng,
        scale: f64,
        grads: &mut Gradients,
    ) -> Result<f64> {
        let trace = self.trunk_forward(input, mode, rng)?;
        let hp = self.head_params(head)?;
        let (logits, hctx) = fc_forward_ctx(&trace.features, hp)?;
        let (loss, dlogits) = head_loss(&self.spec.heads[head], &logits, labels)?;

        let floor = self.backward_floor();
        let (dfeat, hg) = layers::fc_backward(hctx, hp, &dlogits, floor.is_some())?;
        grads.accumulate(self.head_param_index(head), &hg, scale)?;
        let (Some(floor), Some(mut upstream)) = (floor, dfeat) else {
            return Ok(loss);
        };

        let mut param = self
            .spec
            .trunk
            .iter()
            .filter(|l| l.is_learnable())
            .count();
        for (i, ctx) in trace.contexts.into_iter().enumerate().rev() {
            if i < floor {
                break;
            }
            let layer = &self.spec.trunk[i];
            let lref = if layer.is_learnable() {
                param -= 1;
                self.layer_ref(layer, param)?
            } else {
                match layer {
                    LayerSpec::MaxPool { .. } => LayerRef::MaxPool,
                    LayerSpec::Relu => LayerRef::Relu,
                    _ => LayerRef::Dropout,
                }
            };
            let (dx, pg) = layers::backward(lref, ctx, &upstream, i > floor)?;
            if let Some(pg) = pg {
                grads.accumulate(param, &pg, scale)?;
            }
            match dx {
                Some(dx) => upstream = dx,
                None => break,
            }
        }
        Ok(loss)
    }
}
