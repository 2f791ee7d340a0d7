use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{NnError, Tensor};

pub const LAYER_NORM_EPS: f64 = 1e-5;
const LOG_FLOOR: f64 = 1e-12;

/// `y = x·W + b`, with `b` broadcast over rows.
pub fn linear(x: &Tensor, w: &Tensor, b: &Tensor) -> Result<Tensor, NnError> {
    if b.len() != w.cols() {
        return Err(NnError::Shape(format!(
            "bias width {} does not match weight {:?}",
            b.len(),
            w.shape()
        )));
    }
    let mut y = x.matmul(w)?;
    let n = y.cols();
    for row in y.data_mut().chunks_mut(n) {
        for (v, bv) in row.iter_mut().zip(b.data()) {
            *v += bv;
        }
    }
    Ok(y)
}

pub struct LinearGrads {
    pub dx: Tensor,
    pub dw: Tensor,
    pub db: Tensor,
}

pub fn linear_backward(x: &Tensor, w: &Tensor, dy: &Tensor) -> Result<LinearGrads, NnError> {
    Ok(LinearGrads {
        dx: dy.matmul_t(w)?,
        dw: x.t_matmul(dy)?,
        db: dy.col_sums(),
    })
}

pub fn relu(x: &Tensor) -> Tensor {
    x.map(|v| v.max(0.0))
}

/// Gradient through relu given the pre-activation input.
pub fn relu_backward(pre: &Tensor, dy: &Tensor) -> Tensor {
    let mut dx = dy.clone();
    for (g, &p) in dx.data_mut().iter_mut().zip(pre.data()) {
        if p <= 0.0 {
            *g = 0.0;
        }
    }
    dx
}

/// Per-row normalisation state kept for the backward pass.
pub struct LayerNormCache {
    xhat: Tensor,
    inv_std: Vec<f64>,
}

pub fn layer_norm(x: &Tensor, gamma: &Tensor, beta: &Tensor, eps: f64) -> Result<Tensor, NnError> {
    Ok(layer_norm_forward(x, gamma, beta, eps)?.0)
}

pub fn layer_norm_forward(
    x: &Tensor,
    gamma: &Tensor,
    beta: &Tensor,
    eps: f64,
) -> Result<(Tensor, LayerNormCache), NnError> {
    let d = x.cols();
    if gamma.len() != d || beta.len() != d {
        return Err(NnError::Shape(format!(
            "layer norm affine width {} / {} vs input width {d}",
            gamma.len(),
            beta.len()
        )));
    }
    let mut xhat = x.clone();
    let mut y = x.clone();
    let mut inv_std = Vec::with_capacity(x.rows());
    for (row_hat, row_y) in xhat
        .data_mut()
        .chunks_mut(d)
        .zip(y.data_mut().chunks_mut(d))
    {
        let mean = row_hat.iter().sum::<f64>() / d as f64;
        let var = row_hat.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
        let is = 1.0 / (var + eps).sqrt();
        inv_std.push(is);
        for j in 0..d {
            row_hat[j] = (row_hat[j] - mean) * is;
            row_y[j] = row_hat[j] * gamma.data()[j] + beta.data()[j];
        }
    }
    Ok((y, LayerNormCache { xhat, inv_std }))
}

pub struct LayerNormGrads {
    pub dx: Tensor,
    pub dgamma: Tensor,
    pub dbeta: Tensor,
}

pub fn layer_norm_backward(cache: &LayerNormCache, gamma: &Tensor, dy: &Tensor) -> LayerNormGrads {
    let d = dy.cols();
    let mut dx = dy.clone();
    let mut dgamma = vec![0.0; d];
    let mut dbeta = vec![0.0; d];
    let g = gamma.data();
    let mut dxhat = vec![0.0; d];
    for (r, (dy_row, dx_row)) in dy
        .data()
        .chunks(d)
        .zip(dx.data_mut().chunks_mut(d))
        .enumerate()
    {
        let xh = cache.xhat.row(r);
        for j in 0..d {
            dgamma[j] += dy_row[j] * xh[j];
            dbeta[j] += dy_row[j];
            dxhat[j] = dy_row[j] * g[j];
        }
        let mean_dxhat = dxhat.iter().sum::<f64>() / d as f64;
        let mean_dxhat_xhat = dxhat.iter().zip(xh).map(|(a, b)| a * b).sum::<f64>() / d as f64;
        let is = cache.inv_std[r];
        for j in 0..d {
            dx_row[j] = is * (dxhat[j] - mean_dxhat - xh[j] * mean_dxhat_xhat);
        }
    }
    LayerNormGrads {
        dx,
        dgamma: Tensor::vector(dgamma),
        dbeta: Tensor::vector(dbeta),
    }
}

/// Row-wise softmax, shifted by the row maximum. `-inf` entries get zero mass;
/// a row that is entirely `-inf` comes back as zeros.
pub fn softmax(x: &Tensor) -> Tensor {
    let mut out = x.clone();
    let c = out.cols();
    for row in out.data_mut().chunks_mut(c) {
        softmax_in_place(row);
    }
    out
}

pub(crate) fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        row.iter_mut().for_each(|v| *v = 0.0);
        return;
    }
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}

/// Given softmax output `p` and upstream `dp`, returns the gradient w.r.t. the logits.
pub fn softmax_backward(p: &Tensor, dp: &Tensor) -> Tensor {
    let mut dz = dp.clone();
    let c = p.cols();
    for (prow, dzrow) in p.data().chunks(c).zip(dz.data_mut().chunks_mut(c)) {
        softmax_backward_row(prow, dzrow);
    }
    dz
}

pub(crate) fn softmax_backward_row(p: &[f64], dp_to_dz: &mut [f64]) {
    let inner: f64 = p.iter().zip(dp_to_dz.iter()).map(|(a, b)| a * b).sum();
    for (g, &pv) in dp_to_dz.iter_mut().zip(p) {
        *g = pv * (*g - inner);
    }
}

/// Mean over rows of `-w[label]·ln(p[label] + 1e-12)`.
pub fn cross_entropy(probs: &Tensor, labels: &[usize], class_weights: &[f64]) -> f64 {
    if labels.is_empty() {
        return 0.0;
    }
    weighted_nll(probs, labels, class_weights).0 / labels.len() as f64
}

/// Summed weighted negative log-likelihood and its gradient w.r.t. `probs`.
pub fn weighted_nll(probs: &Tensor, labels: &[usize], class_weights: &[f64]) -> (f64, Tensor) {
    let mut grad = Tensor::zeros(probs.shape());
    let c = probs.cols();
    let mut loss = 0.0;
    for (i, &y) in labels.iter().enumerate() {
        let p = probs.data()[i * c + y];
        let w = class_weights[y];
        loss -= w * (p + LOG_FLOOR).ln();
        grad.data_mut()[i * c + y] = -w / (p + LOG_FLOOR);
    }
    (loss, grad)
}

/// Sinusoidal position table of shape L×d.
pub fn positional_encoding(len: usize, d: usize) -> Result<Tensor, NnError> {
    if !d.is_multiple_of(2) {
        return Err(NnError::OddWidth(d));
    }
    let mut data = vec![0.0; len * d];
    for pos in 0..len {
        for k in 0..d / 2 {
            let angle = pos as f64 / 10000f64.powf(2.0 * k as f64 / d as f64);
            data[pos * d + 2 * k] = angle.sin();
            data[pos * d + 2 * k + 1] = angle.cos();
        }
    }
    Tensor::matrix(len, d, data)
}

/// Inverted-dropout scale mask: each entry is 0 with probability `rate`,
/// otherwise `1/(1-rate)`.
pub fn dropout_mask(len: usize, rate: f64, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let keep = 1.0 / (1.0 - rate);
    (0..len)
        .map(|_| if rng.random::<f64>() < rate { 0.0 } else { keep })
        .collect()
}

pub fn dropout(x: &Tensor, rate: f64, seed: u64, training: bool) -> Tensor {
    if !training || rate == 0.0 {
        return x.clone();
    }
    let mask = dropout_mask(x.len(), rate, seed);
    apply_mask(x, &mask)
}

pub(crate) fn apply_mask(x: &Tensor, mask: &[f64]) -> Tensor {
    let mut out = x.clone();
    for (v, m) in out.data_mut().iter_mut().zip(mask) {
        *v *= m;
    }
    out
}
