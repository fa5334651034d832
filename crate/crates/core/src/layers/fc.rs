use crate::error::{Error, Result};
use crate::tensor::{gemm_tn, Tensor};

use super::ParamGrads;

/// Borrowed view of a fully connected layer: `weight` is `[out, in]`, `bias` is `[out]`.
#[derive(Debug, Clone, Copy)]
pub struct FcParams<'a> {
    pub weight: &'a Tensor,
    pub bias: &'a Tensor,
}

impl<'a> FcParams<'a> {
    pub fn new(weight: &'a Tensor, bias: &'a Tensor) -> Result<Self> {
        let &[out, _] = weight.shape() else {
            return Err(Error::shape(format!(
                "fc weight must be [out, in], got {:?}",
                weight.shape()
            )));
        };
        if bias.shape() != [out] {
            return Err(Error::shape(format!(
                "fc bias must be [{out}], got {:?}",
                bias.shape()
            )));
        }
        Ok(Self { weight, bias })
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.weight.shape()[0], self.weight.shape()[1])
    }
}

#[derive(Debug)]
pub struct FcContext {
    input: Tensor,
}

/// `weight * input + bias`. Inputs of any rank are flattened first.
pub fn fc_forward(input: &Tensor, p: FcParams<'_>) -> Result<Tensor> {
    let (out, inp) = p.dims();
    if input.len() != inp {
        return Err(Error::shape(format!(
            "fc expects {inp} inputs, got {}",
            input.len()
        )));
    }
    let w = p.weight.data();
    let x = input.data();
    let y: Vec<f64> = p
        .bias
        .data()
        .iter()
        .enumerate()
        .map(|(o, &b)| b + w[o * inp..(o + 1) * inp].iter().zip(x).map(|(a, b)| a * b).sum::<f64>())
        .collect();
    Tensor::from_vec(&[out], y)
}

pub fn fc_forward_ctx(input: &Tensor, p: FcParams<'_>) -> Result<(Tensor, FcContext)> {
    let y = fc_forward(input, p)?;
    Ok((
        y,
        FcContext {
            input: input.clone(),
        },
    ))
}

pub fn fc_backward(
    ctx: FcContext,
    p: FcParams<'_>,
    upstream: &Tensor,
    need_input_grad: bool,
) -> Result<(Option<Tensor>, ParamGrads)> {
    let (out, inp) = p.dims();
    if upstream.len() != out {
        return Err(Error::shape(format!(
            "fc upstream has {} elements, expected {out}",
            upstream.len()
        )));
    }
    let g = upstream.data();
    let x = ctx.input.data();
    let mut dw = Vec::with_capacity(out * inp);
    for &go in g {
        dw.extend(x.iter().map(|&xi| go * xi));
    }
    let dx = if need_input_grad {
        let mut dx = vec![0.0; inp];
        gemm_tn(inp, out, 1, p.weight.data(), g, &mut dx);
        Some(Tensor::from_vec(ctx.input.shape(), dx)?)
    } else {
        None
    };
    Ok((
        dx,
        ParamGrads {
            weight: Tensor::from_vec(&[out, inp], dw)?,
            bias: Tensor::from_vec(&[out], g.to_vec())?,
        },
    ))
}
