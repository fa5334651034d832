use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Argmax positions recorded by [`maxpool_forward`].
#[derive(Debug)]
pub struct PoolContext {
    input_shape: Vec<usize>,
    argmax: Vec<usize>,
}

/// Output side `floor((n - size) / stride) + 1`; `None` if the window does not fit.
pub fn pool_output_size(n: usize, size: usize, stride: usize) -> Option<usize> {
    if size == 0 || stride == 0 || size > n {
        return None;
    }
    Some((n - size) / stride + 1)
}

/// Max pooling over `size x size` windows. Rows and columns not covered by a
/// full window are dropped; ties go to the first position in row-major order.
pub fn maxpool_forward(input: &Tensor, size: usize, stride: usize) -> Result<(Tensor, PoolContext)> {
    let &[k, h, w] = input.shape() else {
        return Err(Error::shape(format!(
            "pool input must be [K, H, W], got {:?}",
            input.shape()
        )));
    };
    let (Some(oh), Some(ow)) = (pool_output_size(h, size, stride), pool_output_size(w, size, stride))
    else {
        return Err(Error::shape(format!(
            "pool window {size} (stride {stride}) does not fit {h}x{w}"
        )));
    };
    let x = input.data();
    let mut out = Vec::with_capacity(k * oh * ow);
    let mut argmax = Vec::with_capacity(k * oh * ow);
    for c in 0..k {
        for i in 0..oh {
            for j in 0..ow {
                let mut best = (c * h + i * stride) * w + j * stride;
                for r in 0..size {
                    let row = (c * h + i * stride + r) * w + j * stride;
                    for idx in row..row + size {
                        if x[idx] > x[best] {
                            best = idx;
                        }
                    }
                }
                out.push(x[best]);
                argmax.push(best);
            }
        }
    }
    Ok((
        Tensor::from_vec(&[k, oh, ow], out)?,
        PoolContext {
            input_shape: input.shape().to_vec(),
            argmax,
        },
    ))
}

/// Route each upstream element to the input position that won its window.
pub fn maxpool_backward(ctx: PoolContext, upstream: &Tensor) -> Result<Tensor> {
    if upstream.len() != ctx.argmax.len() {
        return Err(Error::shape(format!(
            "pool upstream has {} elements, forward produced {}",
            upstream.len(),
            ctx.argmax.len()
        )));
    }
    let mut dx = Tensor::zeros(&ctx.input_shape)?;
    let d = dx.data_mut();
    for (&idx, &g) in ctx.argmax.iter().zip(upstream.data()) {
        d[idx] += g;
    }
    Ok(dx)
}
