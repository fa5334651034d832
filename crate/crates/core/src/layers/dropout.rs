use rand::Rng;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Per-element multipliers applied in the forward pass: `0` for dropped
/// units and `1 / (1 - rate)` for survivors. Empty in eval mode.
#[derive(Debug, Clone)]
pub struct DropoutContext {
    mask: Option<Vec<f64>>,
}

impl DropoutContext {
    pub fn mask(&self) -> Option<&[f64]> {
        self.mask.as_deref()
    }
}

fn check_rate(rate: f64) -> Result<()> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::param(format!("dropout rate {rate} outside [0, 1)")));
    }
    Ok(())
}

/// Inverted dropout: identity in eval mode and for `rate == 0`.
pub fn dropout(
    input: &Tensor,
    rate: f64,
    mode: Mode,
    rng: &mut impl Rng,
) -> Result<(Tensor, DropoutContext)> {
    check_rate(rate)?;
    if mode == Mode::Eval || rate == 0.0 {
        return Ok((input.clone(), DropoutContext { mask: None }));
    }
    let scale = 1.0 / (1.0 - rate);
    let mask: Vec<f64> = (0..input.len())
        .map(|_| if rng.random::<f64>() < rate { 0.0 } else { scale })
        .collect();
    dropout_with_mask(input, mask)
}

/// Apply a caller-supplied multiplier mask.
pub fn dropout_with_mask(input: &Tensor, mask: Vec<f64>) -> Result<(Tensor, DropoutContext)> {
    if mask.len() != input.len() {
        return Err(Error::shape("dropout mask size mismatch"));
    }
    let mut out = input.clone();
    for (v, &m) in out.data_mut().iter_mut().zip(&mask) {
        *v *= m;
    }
    Ok((out, DropoutContext { mask: Some(mask) }))
}

pub fn dropout_backward(ctx: DropoutContext, upstream: &Tensor) -> Result<Tensor> {
    match ctx.mask {
        None => Ok(upstream.clone()),
        Some(mask) => Ok(dropout_with_mask(upstream, mask)?.0),
    }
}
