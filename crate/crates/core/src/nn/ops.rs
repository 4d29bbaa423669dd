use crate::error::{Error, Result};

use super::matrix::Matrix;
use super::rng::RngStream;

pub const ELU_ALPHA: f64 = 1.0;

pub fn elu(x: f64) -> f64 {
    if x >= 0.0 {
        x
    } else {
        ELU_ALPHA * x.exp_m1()
    }
}

/// Derivative of [`elu`]; the `x ≥ 0` branch owns the kink at zero.
pub fn elu_grad(x: f64) -> f64 {
    if x >= 0.0 {
        1.0
    } else {
        ELU_ALPHA * x.exp()
    }
}

/// Softmax over contiguous segments: group `g` is `values[offsets[g]..offsets[g + 1]]`.
/// The group maximum is subtracted before exponentiating.
pub fn grouped_softmax(values: &[f64], offsets: &[usize]) -> Result<Vec<f64>> {
    check_offsets(values.len(), offsets)?;
    let mut out = vec![0.0; values.len()];
    for g in 0..offsets.len().saturating_sub(1) {
        let (lo, hi) = (offsets[g], offsets[g + 1]);
        softmax_into(&values[lo..hi], &mut out[lo..hi]);
    }
    Ok(out)
}

/// Given `α = grouped_softmax(e)` and `∂L/∂α`, returns `∂L/∂e`.
pub fn grouped_softmax_backward(alpha: &[f64], d_alpha: &[f64], offsets: &[usize]) -> Result<Vec<f64>> {
    check_offsets(alpha.len(), offsets)?;
    if d_alpha.len() != alpha.len() {
        return Err(Error::shape(
            "grouped_softmax_backward",
            format!("{} gradients for {} values", d_alpha.len(), alpha.len()),
        ));
    }
    let mut out = vec![0.0; alpha.len()];
    for g in 0..offsets.len().saturating_sub(1) {
        let (lo, hi) = (offsets[g], offsets[g + 1]);
        softmax_backward_into(&alpha[lo..hi], &d_alpha[lo..hi], &mut out[lo..hi]);
    }
    Ok(out)
}

fn check_offsets(len: usize, offsets: &[usize]) -> Result<()> {
    if offsets.first().copied().unwrap_or(0) != 0 || offsets.last().copied().unwrap_or(0) != len {
        return Err(Error::shape(
            "grouped_softmax",
            format!("offsets do not cover {len} values"),
        ));
    }
    for (g, w) in offsets.windows(2).enumerate() {
        if w[1] <= w[0] {
            return Err(Error::EmptyGroup(g));
        }
    }
    Ok(())
}

pub(crate) fn softmax_into(values: &[f64], out: &mut [f64]) {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (o, &v) in out.iter_mut().zip(values) {
        *o = (v - max).exp();
        sum += *o;
    }
    for o in out.iter_mut() {
        *o /= sum;
    }
}

pub(crate) fn softmax_backward_into(alpha: &[f64], d_alpha: &[f64], out: &mut [f64]) {
    let inner: f64 = alpha.iter().zip(d_alpha).map(|(a, d)| a * d).sum();
    for ((o, &a), &d) in out.iter_mut().zip(alpha).zip(d_alpha) {
        *o = a * (d - inner);
    }
}

/// Plain softmax of one row.
pub fn softmax_row(logits: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; logits.len()];
    if !logits.is_empty() {
        softmax_into(logits, &mut out);
    }
    out
}

/// Result of [`dropout`]: the output and the per-element multiplier applied.
#[derive(Clone, Debug, PartialEq)]
pub struct Dropout {
    pub values: Vec<f64>,
    pub scale: Vec<f64>,
}

/// Inverted dropout. In training mode each element is zeroed with
/// probability `rate` and survivors are scaled by `1 / (1 - rate)`.
pub fn dropout(x: &[f64], rate: f64, training: bool, rng: &mut RngStream) -> Result<Dropout> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::BadRate(rate));
    }
    if !training || rate == 0.0 {
        return Ok(Dropout {
            values: x.to_vec(),
            scale: vec![1.0; x.len()],
        });
    }
    let keep = 1.0 / (1.0 - rate);
    let scale: Vec<f64> = x
        .iter()
        .map(|_| if rng.next_f64() < rate { 0.0 } else { keep })
        .collect();
    let values = x.iter().zip(&scale).map(|(v, s)| v * s).collect();
    Ok(Dropout { values, scale })
}

/// Class-weighted cross-entropy over the rows of `logits`:
/// `L = (1 / Σᵢ w[yᵢ]) Σᵢ w[yᵢ] · (−log softmax(logitsᵢ)[yᵢ])`.
/// Returns the loss and `∂L/∂logits`.
pub fn weighted_cross_entropy(logits: &Matrix, labels: &[usize], weights: &[f64]) -> Result<(f64, Matrix)> {
    let (n, c) = logits.shape();
    if labels.len() != n || weights.len() != c {
        return Err(Error::shape(
            "weighted_cross_entropy",
            format!(
                "logits {:?}, {} labels, {} class weights",
                logits.shape(),
                labels.len(),
                weights.len()
            ),
        ));
    }
    if let Some(&bad) = labels.iter().find(|&&y| y >= c) {
        return Err(Error::BadClass(bad));
    }
    let total: f64 = labels.iter().map(|&y| weights[y]).sum();
    if !(total > 0.0 && total.is_finite()) {
        return Err(Error::NonFinite(format!("total sample weight {total}")));
    }
    let mut grad = Matrix::zeros(n, c);
    let mut loss = 0.0;
    for (i, &y) in labels.iter().enumerate() {
        let row = logits.row(i);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        let w = weights[y] / total;
        loss += w * (lse - row[y]);
        let g = grad.row_mut(i);
        for (k, gk) in g.iter_mut().enumerate() {
            let p = (row[k] - lse).exp();
            *gk = w * (p - if k == y { 1.0 } else { 0.0 });
        }
    }
    Ok((loss, grad))
}
