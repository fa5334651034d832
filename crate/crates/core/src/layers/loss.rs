use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|&z| (z - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Softmax cross-entropy against a class index. Returns the loss and its
/// gradient with respect to the logits.
pub fn softmax_xent(logits: &Tensor, label: usize) -> Result<(f64, Tensor)> {
    let n = logits.len();
    if n < 2 {
        return Err(Error::param("softmax needs at least two classes"));
    }
    if label >= n {
        return Err(Error::param(format!("label {label} outside {n} classes")));
    }
    let z = logits.data();
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + z.iter().map(|&v| (v - m).exp()).sum::<f64>().ln();
    let loss = lse - z[label];
    let mut grad = softmax(z);
    grad[label] -= 1.0;
    Ok((loss, Tensor::from_vec(&[n], grad)?))
}

/// Mean over classes of the logistic loss on `sigmoid(logit)`; targets must be 0 or 1.
pub fn sigmoid_bce(logits: &Tensor, targets: &Tensor) -> Result<(f64, Tensor)> {
    if logits.len() != targets.len() {
        return Err(Error::shape(format!(
            "{} logits vs {} targets",
            logits.len(),
            targets.len()
        )));
    }
    if let Some(t) = targets.data().iter().find(|&&t| t != 0.0 && t != 1.0) {
        return Err(Error::param(format!("target {t} is not 0 or 1")));
    }
    let n = logits.len() as f64;
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(logits.len());
    for (&z, &t) in logits.data().iter().zip(targets.data()) {
        // max(z, 0) - z t + ln(1 + e^-|z|)
        loss += z.max(0.0) - z * t + (-z.abs()).exp().ln_1p();
        grad.push((sigmoid(z) - t) / n);
    }
    Ok((loss / n, Tensor::from_vec(logits.shape(), grad)?))
}
