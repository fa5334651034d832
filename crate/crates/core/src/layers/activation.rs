use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug)]
pub struct ReluContext {
    active: Vec<bool>,
}

/// `f(x) = x * 1[x > 0]`
pub fn relu(input: &Tensor) -> Tensor {
    input.map(|x| if x > 0.0 { x } else { 0.0 })
}

pub fn relu_ctx(input: &Tensor) -> (Tensor, ReluContext) {
    let active = input.data().iter().map(|&x| x > 0.0).collect();
    (relu(input), ReluContext { active })
}

pub fn relu_backward(ctx: ReluContext, upstream: &Tensor) -> Result<Tensor> {
    if upstream.len() != ctx.active.len() {
        return Err(Error::shape("relu upstream gradient size mismatch"));
    }
    let mut g = upstream.clone();
    for (v, &a) in g.data_mut().iter_mut().zip(&ctx.active) {
        if !a {
            *v = 0.0;
        }
    }
    Ok(g)
}
