//! Forward and reverse-mode computation for every layer type used by the
//! networks: convolution, max pooling, ReLU, fully connected, dropout, and
//! the two classification losses.

pub mod activation;
pub mod conv;
pub mod dropout;
pub mod fc;
pub mod gradcheck;
pub mod loss;
pub mod pool;

pub use activation::{relu, relu_backward, relu_ctx, ReluContext};
pub use conv::{
    conv2d_as_dense, conv2d_backward, conv2d_forward, conv2d_forward_ctx, conv_output_size,
    ConvContext, ConvParams, DenseConv,
};
pub use dropout::{dropout, dropout_backward, dropout_with_mask, DropoutContext, Mode};
pub use fc::{fc_backward, fc_forward, fc_forward_ctx, FcContext, FcParams};
pub use loss::{sigmoid, sigmoid_bce, softmax, softmax_xent};
pub use pool::{maxpool_backward, maxpool_forward, pool_output_size, PoolContext};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Gradients of one learnable layer's weight and bias.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGrads {
    pub weight: Tensor,
    pub bias: Tensor,
}

/// Whatever a forward pass must remember for its backward pass. Backward
/// takes the context by value, so each one is used exactly once.
#[derive(Debug)]
pub enum LayerContext {
    Conv(ConvContext),
    Pool(PoolContext),
    Relu(ReluContext),
    Fc(FcContext),
    Dropout(DropoutContext),
}

impl LayerContext {
    fn kind(&self) -> &'static str {
        match self {
            LayerContext::Conv(_) => "conv",
            LayerContext::Pool(_) => "maxpool",
            LayerContext::Relu(_) => "relu",
            LayerContext::Fc(_) => "fc",
            LayerContext::Dropout(_) => "dropout",
        }
    }
}

/// A layer together with the parameters it needs for backward.
#[derive(Debug, Clone, Copy)]
pub enum LayerRef<'a> {
    Conv(ConvParams<'a>),
    Fc(FcParams<'a>),
    MaxPool,
    Relu,
    Dropout,
}

impl LayerRef<'_> {
    fn kind(&self) -> &'static str {
        match self {
            LayerRef::Conv(_) => "conv",
            LayerRef::Fc(_) => "fc",
            LayerRef::MaxPool => "maxpool",
            LayerRef::Relu => "relu",
            LayerRef::Dropout => "dropout",
        }
    }
}

/// Reverse-mode step through one layer. Returns the gradient with respect to
/// the layer input (unless `need_input_grad` is false) and, for learnable
/// layers, the parameter gradients.
pub fn backward(
    layer: LayerRef<'_>,
    context: LayerContext,
    upstream: &Tensor,
    need_input_grad: bool,
) -> Result<(Option<Tensor>, Option<ParamGrads>)> {
    match (layer, context) {
        (LayerRef::Conv(p), LayerContext::Conv(ctx)) => {
            let (dx, g) = conv2d_backward(ctx, p, upstream, need_input_grad)?;
            Ok((dx, Some(g)))
        }
        (LayerRef::Fc(p), LayerContext::Fc(ctx)) => {
            let (dx, g) = fc_backward(ctx, p, upstream, need_input_grad)?;
            Ok((dx, Some(g)))
        }
        (LayerRef::MaxPool, LayerContext::Pool(ctx)) => {
            Ok((Some(maxpool_backward(ctx, upstream)?), None))
        }
        (LayerRef::Relu, LayerContext::Relu(ctx)) => Ok((Some(relu_backward(ctx, upstream)?), None)),
        (LayerRef::Dropout, LayerContext::Dropout(ctx)) => {
            Ok((Some(dropout_backward(ctx, upstream)?), None))
        }
        (l, c) => Err(Error::shape(format!(
            "{} context passed to {} backward",
            c.kind(),
            l.kind()
        ))),
    }
}
