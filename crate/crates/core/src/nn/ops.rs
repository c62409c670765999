//! Stateless forward operations on [`Tensor`]s. The [`Tape`](super::Tape)
//! records these same computations for reverse-mode replay.

use super::kernels::{self, ConvDims};
use super::{NnError, Tensor};

/// Clamp applied to probabilities before taking logarithms.
pub const PROB_EPS: f64 = 1e-12;
pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

pub(crate) fn conv_dims(input: &Tensor, kernel: &Tensor, bias: &Tensor, dilation: usize) -> Result<ConvDims, NnError> {
    input.expect_ndim("conv1d input", 3)?;
    kernel.expect_ndim("conv1d kernel", 3)?;
    let (batch, c_in, len) = (input.shape()[0], input.shape()[1], input.shape()[2]);
    let (c_out, k_in, k) = (kernel.shape()[0], kernel.shape()[1], kernel.shape()[2]);
    if k_in != c_in {
        return Err(NnError::Shape(format!(
            "conv1d: kernel expects {k_in} input channels, input has {c_in}"
        )));
    }
    if k % 2 == 0 {
        return Err(NnError::Shape(format!("conv1d: kernel size {k} must be odd")));
    }
    if dilation == 0 {
        return Err(NnError::Shape("conv1d: dilation must be >= 1".into()));
    }
    bias.expect_shape("conv1d bias", &[c_out])?;
    Ok(ConvDims {
        batch,
        c_in,
        c_out,
        len,
        k,
        dilation,
    })
}

/// Dilated 1D convolution with symmetric zero padding, so the output length
/// equals the input length:
/// `out[b,o,t] = bias[o] + sum_{i,j} in[b,i,t + (j - (k-1)/2) d] * w[o,i,j]`.
pub fn conv1d_dilated(input: &Tensor, kernel: &Tensor, bias: &Tensor, dilation: usize) -> Result<Tensor, NnError> {
    let d = conv_dims(input, kernel, bias, dilation)?;
    let out = kernels::conv1d_forward(input.data(), kernel.data(), bias.data(), &d);
    Tensor::new(vec![d.batch, d.c_out, d.len], out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Running mean/variance buffers of a batch-norm layer.
#[derive(Debug, Clone, PartialEq)]
pub struct RunningStats {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
    pub momentum: f64,
}

impl RunningStats {
    pub fn new(channels: usize) -> Self {
        Self {
            mean: vec![0.0; channels],
            var: vec![1.0; channels],
            momentum: BN_MOMENTUM,
        }
    }

    /// Momentum update; the stored variance is the unbiased estimate.
    pub(crate) fn update(&mut self, batch_mean: &[f64], batch_var: &[f64], count: usize) {
        let m = self.momentum;
        let correction = if count > 1 {
            count as f64 / (count as f64 - 1.0)
        } else {
            1.0
        };
        for c in 0..self.mean.len() {
            self.mean[c] = (1.0 - m) * self.mean[c] + m * batch_mean[c];
            self.var[c] = (1.0 - m) * self.var[c] + m * batch_var[c] * correction;
        }
    }
}

pub(crate) struct BnForward {
    pub out: Vec<f64>,
    /// normalized input, kept for the backward pass in train mode
    pub xhat: Vec<f64>,
    pub inv_std: Vec<f64>,
}

pub(crate) fn batchnorm_forward(
    input: &Tensor,
    gamma: &Tensor,
    beta: &Tensor,
    stats: &mut RunningStats,
    mode: Mode,
    eps: f64,
) -> Result<BnForward, NnError> {
    input.expect_ndim("batchnorm input", 3)?;
    let (batch, c, n) = (input.shape()[0], input.shape()[1], input.shape()[2]);
    gamma.expect_shape("batchnorm gamma", &[c])?;
    beta.expect_shape("batchnorm beta", &[c])?;
    if stats.mean.len() != c || stats.var.len() != c {
        return Err(NnError::Shape(format!(
            "batchnorm running stats hold {} channels, input has {c}",
            stats.mean.len()
        )));
    }
    let (mean, inv_std) = match mode {
        Mode::Train => {
            if batch * n < 2 {
                return Err(NnError::DegenerateBatch(batch * n));
            }
            let (mean, var) = kernels::channel_moments(input.data(), batch, c, n);
            let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + eps).sqrt()).collect();
            stats.update(&mean, &var, batch * n);
            (mean, inv_std)
        }
        Mode::Eval => (
            stats.mean.clone(),
            stats.var.iter().map(|v| 1.0 / (v + eps).sqrt()).collect(),
        ),
    };
    let x = input.data();
    let mut xhat = vec![0.0; x.len()];
    let mut out = vec![0.0; x.len()];
    for b in 0..batch {
        for ch in 0..c {
            let base = (b * c + ch) * n;
            let (mu, is, g, be) = (mean[ch], inv_std[ch], gamma.data()[ch], beta.data()[ch]);
            for t in base..base + n {
                let h = (x[t] - mu) * is;
                xhat[t] = h;
                out[t] = g * h + be;
            }
        }
    }
    Ok(BnForward { out, xhat, inv_std })
}

/// Batch normalization over `(B, N)` per channel. Train mode normalizes
/// with batch statistics and updates `stats`; eval mode uses `stats`.
pub fn batchnorm1d(
    input: &Tensor,
    gamma: &Tensor,
    beta: &Tensor,
    stats: &mut RunningStats,
    mode: Mode,
    eps: f64,
) -> Result<Tensor, NnError> {
    let fw = batchnorm_forward(input, gamma, beta, stats, mode, eps)?;
    Tensor::new(input.shape().to_vec(), fw.out)
}

pub fn relu(input: &Tensor) -> Tensor {
    let data = input.data().iter().map(|&v| v.max(0.0)).collect();
    Tensor::new(input.shape().to_vec(), data).expect("same shape")
}

pub fn sigmoid(input: &Tensor) -> Tensor {
    let data = input.data().iter().map(|&v| sigmoid_scalar(v)).collect();
    Tensor::new(input.shape().to_vec(), data).expect("same shape")
}

pub(crate) fn sigmoid_scalar(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

/// Row-wise softmax over the last axis of a `B x C` tensor.
pub fn softmax(input: &Tensor) -> Result<Tensor, NnError> {
    input.expect_ndim("softmax input", 2)?;
    let c = input.shape()[1];
    let mut out = input.data().to_vec();
    for row in out.chunks_mut(c) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    Tensor::new(input.shape().to_vec(), out)
}

/// `x * W^T + b` for `x: B x I`, `W: O x I`, `b: O`.
pub fn linear(input: &Tensor, weight: &Tensor, bias: &Tensor) -> Result<Tensor, NnError> {
    let (batch, i, o) = linear_dims(input, weight, bias)?;
    Tensor::new(
        vec![batch, o],
        kernels::linear_forward(input.data(), weight.data(), bias.data(), batch, i, o),
    )
}

pub(crate) fn linear_dims(input: &Tensor, weight: &Tensor, bias: &Tensor) -> Result<(usize, usize, usize), NnError> {
    input.expect_ndim("linear input", 2)?;
    weight.expect_ndim("linear weight", 2)?;
    let (batch, i) = (input.shape()[0], input.shape()[1]);
    let o = weight.shape()[0];
    weight.expect_shape("linear weight", &[o, i])?;
    bias.expect_shape("linear bias", &[o])?;
    Ok((batch, i, o))
}

/// Focal-loss hyperparameters: per-class balancing weights and the
/// focusing exponent.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct FocalLossParams {
    alpha: Vec<f64>,
    gamma: f64,
}

impl FocalLossParams {
    pub fn new(alpha: Vec<f64>, gamma: f64) -> Result<Self, NnError> {
        if !gamma.is_finite() || gamma < 0.0 {
            return Err(NnError::Config(format!(
                "focal gamma must be finite and >= 0, got {gamma}"
            )));
        }
        if alpha.is_empty() || alpha.iter().any(|&a| !(a > 0.0 && a <= 1.0)) {
            return Err(NnError::Config(format!(
                "focal alpha entries must lie in (0, 1], got {alpha:?}"
            )));
        }
        Ok(Self { alpha, gamma })
    }

    /// `alpha = 1` for every class: plain cross-entropy when `gamma = 0`.
    pub fn uniform(classes: usize, gamma: f64) -> Result<Self, NnError> {
        Self::new(vec![1.0; classes], gamma)
    }

    /// Inverse class frequency normalized so the rarest class gets weight 1.
    /// Classes absent from `counts` get weight 1.
    pub fn inverse_frequency(counts: &[usize], gamma: f64) -> Result<Self, NnError> {
        let inv: Vec<f64> = counts
            .iter()
            .map(|&c| if c == 0 { f64::INFINITY } else { 1.0 / c as f64 })
            .collect();
        let max = inv.iter().copied().filter(|v| v.is_finite()).fold(0.0, f64::max);
        let alpha = inv
            .iter()
            .map(|&v| if v.is_finite() && max > 0.0 { v / max } else { 1.0 })
            .collect();
        Self::new(alpha, gamma)
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }
}

/// Per-sample focal term `-alpha * (1 - p)^gamma * ln p` with `p` clamped.
pub fn focal_term(p: f64, alpha: f64, gamma: f64) -> f64 {
    let p = p.clamp(PROB_EPS, 1.0 - PROB_EPS);
    let q = 1.0 - p;
    let modulator = if gamma == 0.0 { 1.0 } else { q.powf(gamma) };
    -alpha * modulator * p.ln()
}

/// Derivative of [`focal_term`] with respect to `p` (zero where clamped).
pub(crate) fn focal_term_grad(p_raw: f64, alpha: f64, gamma: f64) -> f64 {
    if !(PROB_EPS..=1.0 - PROB_EPS).contains(&p_raw) {
        return 0.0;
    }
    let p = p_raw;
    let q = 1.0 - p;
    let modulator = if gamma == 0.0 { 1.0 } else { q.powf(gamma) };
    let dmod = if gamma == 0.0 {
        0.0
    } else {
        -gamma * q.powf(gamma - 1.0)
    };
    -alpha * (dmod * p.ln() + modulator / p)
}

pub(crate) fn check_focal_inputs(
    probs: &Tensor,
    targets: &[usize],
    params: &FocalLossParams,
) -> Result<usize, NnError> {
    probs.expect_ndim("focal loss probabilities", 2)?;
    let (batch, c) = (probs.shape()[0], probs.shape()[1]);
    if targets.len() != batch {
        return Err(NnError::Shape(format!(
            "focal loss: {} targets for batch of {batch}",
            targets.len()
        )));
    }
    if batch == 0 {
        return Err(NnError::Shape("focal loss: empty batch".into()));
    }
    if params.alpha.len() != c {
        return Err(NnError::Shape(format!(
            "focal loss: {} alpha weights for {c} classes",
            params.alpha.len()
        )));
    }
    if let Some((i, &t)) = targets.iter().enumerate().find(|(_, &t)| t >= c) {
        return Err(NnError::Index(format!(
            "target {t} at row {i} is out of range for {c} classes"
        )));
    }
    for (b, row) in probs.data().chunks(c).enumerate() {
        let s: f64 = row.iter().sum();
        if (s - 1.0).abs() > 1e-6 {
            return Err(NnError::Shape(format!("focal loss: probability row {b} sums to {s}")));
        }
    }
    Ok(c)
}

/// Mean over the batch of `-alpha_t (1 - p_t)^gamma ln p_t`.
pub fn focal_loss(probs: &Tensor, targets: &[usize], params: &FocalLossParams) -> Result<f64, NnError> {
    let c = check_focal_inputs(probs, targets, params)?;
    let total: f64 = probs
        .data()
        .chunks(c)
        .zip(targets)
        .map(|(row, &t)| focal_term(row[t], params.alpha[t], params.gamma))
        .sum();
    Ok(total / targets.len() as f64)
}
