//! Central finite-difference checks for every layer and loss.
//!
//! Each layer check builds a scalar objective `L = sum(R * layer(x))` for a
//! fixed random `R`, feeds `R` to the layer's backward pass as the upstream
//! gradient, and compares every analytic partial derivative against
//! `(L(x + h) - L(x - h)) / 2h`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::tensor::Tensor;

use super::{
    conv2d_backward, conv2d_forward_ctx, dropout_backward, dropout_with_mask, fc_backward,
    fc_forward_ctx, maxpool_backward, maxpool_forward, relu_backward, relu_ctx, sigmoid_bce,
    softmax_xent, ConvContext, ConvParams, FcParams, ParamGrads,
};

pub const STEP: f64 = 1e-5;
pub const TOLERANCE: f64 = 1e-4;
/// Denominator floor for the relative error, so that partials which are
/// exactly zero analytically do not divide by zero.
pub const ERROR_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: String,
    pub max_rel_error: f64,
    pub checked: usize,
}

impl CheckResult {
    pub fn passed(&self) -> bool {
        self.max_rel_error < TOLERANCE
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(ERROR_FLOOR)
}

/// Central differences of `f` at `x`, one coordinate at a time.
pub fn numeric_gradient(mut f: impl FnMut(&[f64]) -> f64, x: &[f64], step: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = probe[i];
            probe[i] = orig + step;
            let up = f(&probe);
            probe[i] = orig - step;
            let down = f(&probe);
            probe[i] = orig;
            (up - down) / (2.0 * step)
        })
        .collect()
}

fn max_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &n)| relative_error(a, n))
        .fold(0.0, f64::max)
}

fn random_tensor(rng: &mut impl Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| rng.random_range(lo..hi)).collect()).unwrap()
}

/// Values bounded away from zero, so ReLU kinks stay farther than `STEP`.
fn away_from_zero(rng: &mut impl Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n)
        .map(|_| {
            let m = rng.random_range(0.1..1.0);
            if rng.random::<bool>() {
                m
            } else {
                -m
            }
        })
        .collect();
    Tensor::from_vec(shape, data).unwrap()
}

fn dot(a: &Tensor, b: &Tensor) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum()
}

fn with(t: &Tensor, data: &[f64]) -> Tensor {
    Tensor::from_vec(t.shape(), data.to_vec()).unwrap()
}

/// Signature of a convolution backward pass, so tests can substitute a faulty one.
pub type ConvBackward =
    dyn Fn(ConvContext, ConvParams<'_>, &Tensor) -> Result<(Option<Tensor>, ParamGrads)>;

/// Convolution backward with the kernel gradient negated. A fault fixture:
/// the suite must reject it.
pub fn conv_backward_sign_fault(
    ctx: ConvContext,
    p: ConvParams<'_>,
    up: &Tensor,
) -> Result<(Option<Tensor>, ParamGrads)> {
    let (dx, mut g) = conv2d_backward(ctx, p, up, true)?;
    g.weight = g.weight.map(|v| -v);
    Ok((dx, g))
}

pub fn check_conv(seed: u64) -> Result<CheckResult> {
    check_conv_with(seed, &|ctx, p, up| conv2d_backward(ctx, p, up, true))
}

pub fn check_conv_with(seed: u64, backward: &ConvBackward) -> Result<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    let mut checked = 0;
    for &(c, k, h, nw, stride, pad) in &[(2, 3, 6, 3, 1, 1), (2, 2, 7, 3, 2, 0), (1, 2, 5, 2, 1, 0)] {
        let x = random_tensor(&mut rng, &[c, h, h], -1.0, 1.0);
        let w = random_tensor(&mut rng, &[k, c, nw, nw], -1.0, 1.0);
        let b = random_tensor(&mut rng, &[k], -1.0, 1.0);
        let p = ConvParams::new(&w, &b, stride, pad)?;
        let (y, ctx) = conv2d_forward_ctx(&x, p)?;
        let r = random_tensor(&mut rng, y.shape(), -1.0, 1.0);
        let (dx, grads) = backward(ctx, p, &r)?;
        let dx = dx.expect("input gradient requested");

        let objective = |x: &Tensor, w: &Tensor, b: &Tensor| -> f64 {
            let p = ConvParams::new(w, b, stride, pad).unwrap();
            dot(&conv2d_forward_ctx(x, p).unwrap().0, &r)
        };
        let nx = numeric_gradient(|d| objective(&with(&x, d), &w, &b), x.data(), STEP);
        let nw_ = numeric_gradient(|d| objective(&x, &with(&w, d), &b), w.data(), STEP);
        let nb = numeric_gradient(|d| objective(&x, &w, &with(&b, d)), b.data(), STEP);
        worst = worst
            .max(max_error(dx.data(), &nx))
            .max(max_error(grads.weight.data(), &nw_))
            .max(max_error(grads.bias.data(), &nb));
        checked += nx.len() + nw_.len() + nb.len();
    }
    Ok(CheckResult {
        name: "conv".into(),
        max_rel_error: worst,
        checked,
    })
}

pub fn check_fc(seed: u64) -> Result<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = random_tensor(&mut rng, &[2, 3, 2], -1.0, 1.0);
    let w = random_tensor(&mut rng, &[5, 12], -1.0, 1.0);
    let b = random_tensor(&mut rng, &[5], -1.0, 1.0);
    let p = FcParams::new(&w, &b)?;
    let (y, ctx) = fc_forward_ctx(&x, p)?;
    let r = random_tensor(&mut rng, y.shape(), -1.0, 1.0);
    let (dx, grads) = fc_backward(ctx, p, &r, true)?;
    let objective = |x: &Tensor, w: &Tensor, b: &Tensor| {
        dot(&fc_forward_ctx(x, FcParams::new(w, b).unwrap()).unwrap().0, &r)
    };
    let nx = numeric_gradient(|d| objective(&with(&x, d), &w, &b), x.data(), STEP);
    let nw = numeric_gradient(|d| objective(&x, &with(&w, d), &b), w.data(), STEP);
    let nb = numeric_gradient(|d| objective(&x, &w, &with(&b, d)), b.data(), STEP);
    Ok(CheckResult {
        name: "fc".into(),
        max_rel_error: max_error(dx.unwrap().data(), &nx)
            .max(max_error(grads.weight.data(), &nw))
            .max(max_error(grads.bias.data(), &nb)),
        checked: nx.len() + nw.len() + nb.len(),
    })
}

pub fn check_maxpool(seed: u64) -> Result<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Distinct values at spacing 0.01 keep each window's argmax stable under the probe step.
    let n = 2 * 5 * 5;
    let mut vals: Vec<f64> = (0..n).map(|i| i as f64 * 0.01).collect();
    for i in (1..n).rev() {
        vals.swap(i, rng.random_range(0..=i));
    }
    let x = Tensor::from_vec(&[2, 5, 5], vals)?;
    let (y, ctx) = maxpool_forward(&x, 2, 2)?;
    let r = random_tensor(&mut rng, y.shape(), -1.0, 1.0);
    let dx = maxpool_backward(ctx, &r)?;
    let nx = numeric_gradient(
        |d| dot(&maxpool_forward(&with(&x, d), 2, 2).unwrap().0, &r),
        x.data(),
        STEP,
    );
    Ok(CheckResult {
        name: "maxpool".into(),
        max_rel_error: max_error(dx.data(), &nx),
        checked: nx.len(),
    })
}

pub fn check_relu(seed: u64) -> Result<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = away_from_zero(&mut rng, &[3, 4]);
    let (y, ctx) = relu_ctx(&x);
    let r = random_tensor(&mut rng, y.shape(), -1.0, 1.0);
    let dx = relu_backward(ctx, &r)?;
    let nx = numeric_gradient(|d| dot(&relu_ctx(&with(&x, d)).0, &r), x.data(), STEP);
    Ok(CheckResult {
        name: "relu".into(),
        max_rel_error: max_error(dx.data(), &nx),
        checked: nx.len(),
    })
}

/// Dropout in train mode with the mask held fixed across probes.
pub fn check_dropout(seed: u64) -> Result<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = random_tensor(&mut rng, &[20], -1.0, 1.0);
    let mask: Vec<f64> = (0..20)
        .map(|_| if rng.random::<bool>() { 0.0 } else { 2.0 })
        .collect();
    let (y, ctx) = dropout_with_mask(&x, mask.clone())?;
    let r = random_tensor(&mut rng, y.shape(), -1.0, 1.0);
    let dx = dropout_backward(ctx, &r)?;
    let nx = numeric_gradient(
        |d| dot(&dropout_with_mask(&with(&x, d), mask.clone()).unwrap().0, &r),
        x.data(),
        STEP,
    );
    Ok(CheckResult {
        name: "dropout".into(),
        max_rel_error: max_error(dx.data(), &nx),
        checked: nx.len(),
    })
}

pub fn check_softmax_xent(seed: u64) -> Result<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let z = random_tensor(&mut rng, &[6], -3.0, 3.0);
    let label = rng.random_range(0..6);
    let (_, g) = softmax_xent(&z, label)?;
    let n = numeric_gradient(|d| softmax_xent(&with(&z, d), label).unwrap().0, z.data(), STEP);
    Ok(CheckResult {
        name: "softmax_xent".into(),
        max_rel_error: max_error(g.data(), &n),
        checked: n.len(),
    })
}

pub fn check_sigmoid_bce(seed: u64) -> Result<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let z = random_tensor(&mut rng, &[7], -4.0, 4.0);
    let t = Tensor::from_vec(
        &[7],
        (0..7).map(|_| f64::from(u8::from(rng.random::<bool>()))).collect(),
    )?;
    let (_, g) = sigmoid_bce(&z, &t)?;
    let n = numeric_gradient(|d| sigmoid_bce(&with(&z, d), &t).unwrap().0, z.data(), STEP);
    Ok(CheckResult {
        name: "sigmoid_bce".into(),
        max_rel_error: max_error(g.data(), &n),
        checked: n.len(),
    })
}

/// Every layer and loss check, in a fixed order.
pub fn run_suite(seed: u64) -> Result<Vec<CheckResult>> {
    run_suite_with_conv(seed, &|ctx, p, up| conv2d_backward(ctx, p, up, true))
}

/// The suite with a substitute convolution backward pass.
pub fn run_suite_with_conv(seed: u64, conv: &ConvBackward) -> Result<Vec<CheckResult>> {
    Ok(vec![
        check_conv_with(seed, conv)?,
        check_maxpool(seed)?,
        check_relu(seed)?,
        check_fc(seed)?,
        check_dropout(seed)?,
        check_softmax_xent(seed)?,
        check_sigmoid_bce(seed)?,
    ])
}
