//! Reverse-mode differentiation over an explicit primitive set.
//!
//! Every op appends a node holding its output value and whatever it needs
//! to replay the local Jacobian-vector product. [`backward`] walks the
//! nodes in reverse creation order.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, Ordering};

use rand::Rng;

use super::kernels::{self, ConvDims};
use super::ops::{self, FocalLossParams, Mode, RunningStats};
use super::{NnError, Tensor};

static NEXT_TAPE_ID: AtomicU64 = AtomicU64::new(1);

/// Identifies a trainable parameter across tapes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ParamId(pub usize);

/// Handle to a node on a specific tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var {
    tape: u64,
    idx: usize,
}

enum Op {
    Leaf,
    Conv1d {
        x: usize,
        w: usize,
        b: usize,
        dims: ConvDims,
    },
    BatchNorm {
        x: usize,
        gamma: usize,
        beta: usize,
        xhat: Vec<f64>,
        inv_std: Vec<f64>,
        mode: Mode,
    },
    Relu(usize),
    Dropout {
        x: usize,
        mask: Vec<f64>,
    },
    Add(usize, usize),
    Mul(usize, usize),
    Scale(usize, f64),
    Sum(usize),
    MaskedMeanTime {
        x: usize,
        weights: Vec<f64>,
    },
    Linear {
        x: usize,
        w: usize,
        b: usize,
    },
    Softmax(usize),
    Sigmoid(usize),
    TwoClass(usize),
    Focal {
        probs: usize,
        targets: Vec<usize>,
        params: FocalLossParams,
    },
}

struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
    param: Option<ParamId>,
}

/// Ordered record of forward computations.
pub struct Tape {
    id: u64,
    nodes: Vec<Node>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

/// Gradients keyed by parameter.
#[derive(Debug, Clone, Default)]
pub struct Gradients {
    grads: BTreeMap<ParamId, Tensor>,
}

impl Gradients {
    pub fn get(&self, id: ParamId) -> Option<&Tensor> {
        self.grads.get(&id)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&ParamId, &Tensor)> {
        self.grads.iter()
    }

    pub fn len(&self) -> usize {
        self.grads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }

    /// Largest absolute gradient entry, for diagnostics.
    pub fn max_abs(&self) -> f64 {
        self.grads
            .values()
            .flat_map(|t| t.data().iter())
            .fold(0.0, |m, v| m.max(v.abs()))
    }
}

impl Tape {
    pub fn new() -> Self {
        Self {
            id: NEXT_TAPE_ID.fetch_add(1, Ordering::Relaxed),
            nodes: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, inputs: &[usize]) -> Var {
        let needs_grad = inputs.iter().any(|&i| self.nodes[i].needs_grad);
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
            param: None,
        });
        Var {
            tape: self.id,
            idx: self.nodes.len() - 1,
        }
    }

    fn idx(&self, v: Var) -> Result<usize, NnError> {
        if v.tape != self.id || v.idx >= self.nodes.len() {
            return Err(NnError::Tape("variable belongs to a different tape".into()));
        }
        Ok(v.idx)
    }

    /// A non-differentiable input.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, &[])
    }

    /// A trainable leaf; its gradient is reported under `id`.
    pub fn param(&mut self, id: ParamId, value: Tensor) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            needs_grad: true,
            param: Some(id),
        });
        Var {
            tape: self.id,
            idx: self.nodes.len() - 1,
        }
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[self.idx(v).expect("var from this tape")].value
    }

    pub fn conv1d(&mut self, x: Var, w: Var, b: Var, dilation: usize) -> Result<Var, NnError> {
        let (xi, wi, bi) = (self.idx(x)?, self.idx(w)?, self.idx(b)?);
        let (xv, wv, bv) = (&self.nodes[xi].value, &self.nodes[wi].value, &self.nodes[bi].value);
        let dims = ops::conv_dims(xv, wv, bv, dilation)?;
        let out = kernels::conv1d_forward(xv.data(), wv.data(), bv.data(), &dims);
        let value = Tensor::new(vec![dims.batch, dims.c_out, dims.len], out)?;
        Ok(self.push(
            value,
            Op::Conv1d {
                x: xi,
                w: wi,
                b: bi,
                dims,
            },
            &[xi, wi, bi],
        ))
    }

    /// Batch normalization; in train mode `stats` is updated from the batch.
    pub fn batchnorm(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        stats: &mut RunningStats,
        mode: Mode,
        eps: f64,
    ) -> Result<Var, NnError> {
        let (xi, gi, bi) = (self.idx(x)?, self.idx(gamma)?, self.idx(beta)?);
        let fw = ops::batchnorm_forward(
            &self.nodes[xi].value,
            &self.nodes[gi].value,
            &self.nodes[bi].value,
            stats,
            mode,
            eps,
        )?;
        let value = Tensor::new(self.nodes[xi].value.shape().to_vec(), fw.out)?;
        Ok(self.push(
            value,
            Op::BatchNorm {
                x: xi,
                gamma: gi,
                beta: bi,
                xhat: fw.xhat,
                inv_std: fw.inv_std,
                mode,
            },
            &[xi, gi, bi],
        ))
    }

    pub fn relu(&mut self, x: Var) -> Result<Var, NnError> {
        let xi = self.idx(x)?;
        let value = ops::relu(&self.nodes[xi].value);
        Ok(self.push(value, Op::Relu(xi), &[xi]))
    }

    /// Inverted dropout. Identity in eval mode or when `rate == 0`.
    pub fn dropout<R: Rng + ?Sized>(&mut self, x: Var, rate: f64, mode: Mode, rng: &mut R) -> Result<Var, NnError> {
        let xi = self.idx(x)?;
        if mode == Mode::Eval || rate == 0.0 {
            return Ok(x);
        }
        if !(0.0..1.0).contains(&rate) {
            return Err(NnError::Config(format!("dropout rate {rate} outside [0, 1)")));
        }
        let keep = 1.0 - rate;
        let mask: Vec<f64> = (0..self.nodes[xi].value.len())
            .map(|_| if rng.gen::<f64>() < keep { 1.0 / keep } else { 0.0 })
            .collect();
        let xv = &self.nodes[xi].value;
        let data = xv.data().iter().zip(&mask).map(|(a, m)| a * m).collect();
        let value = Tensor::new(xv.shape().to_vec(), data)?;
        Ok(self.push(value, Op::Dropout { x: xi, mask }, &[xi]))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, NnError> {
        let (ai, bi) = (self.idx(a)?, self.idx(b)?);
        let (av, bv) = (&self.nodes[ai].value, &self.nodes[bi].value);
        bv.expect_shape("add rhs", av.shape())?;
        let data = av.data().iter().zip(bv.data()).map(|(x, y)| x + y).collect();
        let value = Tensor::new(av.shape().to_vec(), data)?;
        Ok(self.push(value, Op::Add(ai, bi), &[ai, bi]))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, NnError> {
        let (ai, bi) = (self.idx(a)?, self.idx(b)?);
        let (av, bv) = (&self.nodes[ai].value, &self.nodes[bi].value);
        bv.expect_shape("mul rhs", av.shape())?;
        let data = av.data().iter().zip(bv.data()).map(|(x, y)| x * y).collect();
        let value = Tensor::new(av.shape().to_vec(), data)?;
        Ok(self.push(value, Op::Mul(ai, bi), &[ai, bi]))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Result<Var, NnError> {
        let ai = self.idx(a)?;
        let av = &self.nodes[ai].value;
        let value = Tensor::new(av.shape().to_vec(), av.data().iter().map(|x| x * s).collect())?;
        Ok(self.push(value, Op::Scale(ai, s), &[ai]))
    }

    /// Sum of all entries, as a scalar.
    pub fn sum(&mut self, a: Var) -> Result<Var, NnError> {
        let ai = self.idx(a)?;
        let value = Tensor::scalar(self.nodes[ai].value.data().iter().sum());
        Ok(self.push(value, Op::Sum(ai), &[ai]))
    }

    /// Average over time of `B x C x N` using per-frame weights `B x N`
    /// (1 for frames that count, 0 otherwise). Produces `B x C`.
    pub fn masked_mean_time(&mut self, x: Var, mask: &[bool]) -> Result<Var, NnError> {
        let xi = self.idx(x)?;
        let xv = &self.nodes[xi].value;
        xv.expect_ndim("temporal pooling input", 3)?;
        let (batch, c, n) = (xv.shape()[0], xv.shape()[1], xv.shape()[2]);
        if mask.len() != batch * n {
            return Err(NnError::Shape(format!(
                "pooling mask has {} entries, expected {}",
                mask.len(),
                batch * n
            )));
        }
        let mut weights = vec![0.0; batch * n];
        for b in 0..batch {
            let count = mask[b * n..(b + 1) * n].iter().filter(|&&m| m).count();
            if count == 0 {
                return Err(NnError::Shape(format!("pooling mask for sample {b} selects no frames")));
            }
            for t in 0..n {
                if mask[b * n + t] {
                    weights[b * n + t] = 1.0 / count as f64;
                }
            }
        }
        let x = xv.data();
        let mut out = vec![0.0; batch * c];
        for b in 0..batch {
            let w = &weights[b * n..(b + 1) * n];
            for ch in 0..c {
                out[b * c + ch] = x[(b * c + ch) * n..(b * c + ch + 1) * n]
                    .iter()
                    .zip(w)
                    .map(|(v, w)| v * w)
                    .sum();
            }
        }
        let value = Tensor::new(vec![batch, c], out)?;
        Ok(self.push(value, Op::MaskedMeanTime { x: xi, weights }, &[xi]))
    }

    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Result<Var, NnError> {
        let (xi, wi, bi) = (self.idx(x)?, self.idx(w)?, self.idx(b)?);
        let value = ops::linear(&self.nodes[xi].value, &self.nodes[wi].value, &self.nodes[bi].value)?;
        Ok(self.push(value, Op::Linear { x: xi, w: wi, b: bi }, &[xi, wi, bi]))
    }

    pub fn softmax(&mut self, x: Var) -> Result<Var, NnError> {
        let xi = self.idx(x)?;
        let value = ops::softmax(&self.nodes[xi].value)?;
        Ok(self.push(value, Op::Softmax(xi), &[xi]))
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var, NnError> {
        let xi = self.idx(x)?;
        let value = ops::sigmoid(&self.nodes[xi].value);
        Ok(self.push(value, Op::Sigmoid(xi), &[xi]))
    }

    /// Expands `B x 1` probabilities of class 1 into `B x 2` rows `[1-p, p]`.
    pub fn two_class(&mut self, p: Var) -> Result<Var, NnError> {
        let pi = self.idx(p)?;
        let pv = &self.nodes[pi].value;
        pv.expect_ndim("two_class input", 2)?;
        if pv.shape()[1] != 1 {
            return Err(NnError::Shape(format!("two_class expects B x 1, got {:?}", pv.shape())));
        }
        let data = pv.data().iter().flat_map(|&p| [1.0 - p, p]).collect();
        let value = Tensor::new(vec![pv.shape()[0], 2], data)?;
        Ok(self.push(value, Op::TwoClass(pi), &[pi]))
    }

    pub fn focal_loss(&mut self, probs: Var, targets: &[usize], params: &FocalLossParams) -> Result<Var, NnError> {
        let pi = self.idx(probs)?;
        let value = Tensor::scalar(ops::focal_loss(&self.nodes[pi].value, targets, params)?);
        Ok(self.push(
            value,
            Op::Focal {
                probs: pi,
                targets: targets.to_vec(),
                params: params.clone(),
            },
            &[pi],
        ))
    }
}

fn accumulate(slot: &mut Option<Vec<f64>>, delta: &[f64]) {
    match slot {
        Some(g) => {
            for (a, d) in g.iter_mut().zip(delta) {
                *a += d;
            }
        }
        None => *slot = Some(delta.to_vec()),
    }
}

fn accumulate_owned(slot: &mut Option<Vec<f64>>, delta: Vec<f64>) {
    match slot {
        Some(g) => {
            for (a, d) in g.iter_mut().zip(&delta) {
                *a += d;
            }
        }
        None => *slot = Some(delta),
    }
}

/// Replays the tape from the scalar `loss` and returns the gradient of every
/// parameter leaf on the tape (zero for parameters the loss does not reach).
pub fn backward(tape: &Tape, loss: Var) -> Result<Gradients, NnError> {
    let li = tape.idx(loss)?;
    if tape.nodes[li].value.len() != 1 {
        return Err(NnError::Tape(format!(
            "backward needs a scalar loss, got shape {:?}",
            tape.nodes[li].value.shape()
        )));
    }
    if !tape.nodes[li].needs_grad {
        return Err(NnError::Tape(
            "loss does not depend on any parameter (detached graph)".into(),
        ));
    }
    let nodes = &tape.nodes;
    let mut grads: Vec<Option<Vec<f64>>> = (0..nodes.len()).map(|_| None).collect();
    grads[li] = Some(vec![1.0]);

    for i in (0..=li).rev() {
        let Some(g) = grads[i].take() else { continue };
        let node = &nodes[i];
        let wants = |j: usize| nodes[j].needs_grad;
        match &node.op {
            Op::Leaf => {
                grads[i] = Some(g);
            }
            Op::Conv1d { x, w, b, dims } => {
                let (dx, dw, db) =
                    kernels::conv1d_backward(nodes[*x].value.data(), nodes[*w].value.data(), &g, dims, wants(*x));
                if let Some(dx) = dx {
                    accumulate_owned(&mut grads[*x], dx);
                }
                if wants(*w) {
                    accumulate_owned(&mut grads[*w], dw);
                }
                if wants(*b) {
                    accumulate_owned(&mut grads[*b], db);
                }
            }
            Op::BatchNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
                mode,
            } => {
                let shape = nodes[*x].value.shape();
                let (batch, c, n) = (shape[0], shape[1], shape[2]);
                let gam = nodes[*gamma].value.data();
                let mut dgamma = vec![0.0; c];
                let mut dbeta = vec![0.0; c];
                let mut sum_dxhat = vec![0.0; c];
                let mut sum_dxhat_xhat = vec![0.0; c];
                for bb in 0..batch {
                    for ch in 0..c {
                        let base = (bb * c + ch) * n;
                        for t in base..base + n {
                            dgamma[ch] += g[t] * xhat[t];
                            dbeta[ch] += g[t];
                            let dxh = g[t] * gam[ch];
                            sum_dxhat[ch] += dxh;
                            sum_dxhat_xhat[ch] += dxh * xhat[t];
                        }
                    }
                }
                if wants(*x) {
                    let mut dx = vec![0.0; g.len()];
                    let m = (batch * n) as f64;
                    for bb in 0..batch {
                        for ch in 0..c {
                            let base = (bb * c + ch) * n;
                            for t in base..base + n {
                                let dxh = g[t] * gam[ch];
                                dx[t] = match mode {
                                    Mode::Train => {
                                        inv_std[ch] / m * (m * dxh - sum_dxhat[ch] - xhat[t] * sum_dxhat_xhat[ch])
                                    }
                                    Mode::Eval => dxh * inv_std[ch],
                                };
                            }
                        }
                    }
                    accumulate_owned(&mut grads[*x], dx);
                }
                if wants(*gamma) {
                    accumulate_owned(&mut grads[*gamma], dgamma);
                }
                if wants(*beta) {
                    accumulate_owned(&mut grads[*beta], dbeta);
                }
            }
            Op::Relu(x) => {
                if wants(*x) {
                    let xv = nodes[*x].value.data();
                    let d: Vec<f64> = g.iter().zip(xv).map(|(g, v)| if *v > 0.0 { *g } else { 0.0 }).collect();
                    accumulate_owned(&mut grads[*x], d);
                }
            }
            Op::Dropout { x, mask } => {
                if wants(*x) {
                    let d: Vec<f64> = g.iter().zip(mask).map(|(g, m)| g * m).collect();
                    accumulate_owned(&mut grads[*x], d);
                }
            }
            Op::Add(a, b) => {
                if wants(*a) {
                    accumulate(&mut grads[*a], &g);
                }
                if wants(*b) {
                    accumulate(&mut grads[*b], &g);
                }
            }
            Op::Mul(a, b) => {
                let (av, bv) = (nodes[*a].value.data(), nodes[*b].value.data());
                if wants(*a) {
                    accumulate_owned(&mut grads[*a], g.iter().zip(bv).map(|(g, y)| g * y).collect());
                }
                if wants(*b) {
                    accumulate_owned(&mut grads[*b], g.iter().zip(av).map(|(g, x)| g * x).collect());
                }
            }
            Op::Scale(a, s) => {
                if wants(*a) {
                    accumulate_owned(&mut grads[*a], g.iter().map(|v| v * s).collect());
                }
            }
            Op::Sum(a) => {
                if wants(*a) {
                    let len = nodes[*a].value.len();
                    accumulate_owned(&mut grads[*a], vec![g[0]; len]);
                }
            }
            Op::MaskedMeanTime { x, weights } => {
                if wants(*x) {
                    let shape = nodes[*x].value.shape();
                    let (batch, c, n) = (shape[0], shape[1], shape[2]);
                    let mut dx = vec![0.0; batch * c * n];
                    for bb in 0..batch {
                        for ch in 0..c {
                            let gv = g[bb * c + ch];
                            for t in 0..n {
                                dx[(bb * c + ch) * n + t] = gv * weights[bb * n + t];
                            }
                        }
                    }
                    accumulate_owned(&mut grads[*x], dx);
                }
            }
            Op::Linear { x, w, b } => {
                let (batch, ii, o) = ops::linear_dims(&nodes[*x].value, &nodes[*w].value, &nodes[*b].value)?;
                let (dx, dw, db) = kernels::linear_backward(
                    nodes[*x].value.data(),
                    nodes[*w].value.data(),
                    &g,
                    batch,
                    ii,
                    o,
                    wants(*x),
                );
                if let Some(dx) = dx {
                    accumulate_owned(&mut grads[*x], dx);
                }
                if wants(*w) {
                    accumulate_owned(&mut grads[*w], dw);
                }
                if wants(*b) {
                    accumulate_owned(&mut grads[*b], db);
                }
            }
            Op::Softmax(x) => {
                if wants(*x) {
                    let y = node.value.data();
                    let c = node.value.shape()[1];
                    let mut dx = vec![0.0; y.len()];
                    for ((dxr, yr), gr) in dx.chunks_mut(c).zip(y.chunks(c)).zip(g.chunks(c)) {
                        let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                        for j in 0..c {
                            dxr[j] = yr[j] * (gr[j] - dot);
                        }
                    }
                    accumulate_owned(&mut grads[*x], dx);
                }
            }
            Op::Sigmoid(x) => {
                if wants(*x) {
                    let y = node.value.data();
                    accumulate_owned(
                        &mut grads[*x],
                        g.iter().zip(y).map(|(g, y)| g * y * (1.0 - y)).collect(),
                    );
                }
            }
            Op::TwoClass(p) => {
                if wants(*p) {
                    accumulate_owned(&mut grads[*p], g.chunks(2).map(|r| r[1] - r[0]).collect());
                }
            }
            Op::Focal { probs, targets, params } => {
                if wants(*probs) {
                    let pv = &nodes[*probs].value;
                    let c = pv.shape()[1];
                    let scale = g[0] / targets.len() as f64;
                    let mut dp = vec![0.0; pv.len()];
                    for (b, &t) in targets.iter().enumerate() {
                        dp[b * c + t] =
                            scale * ops::focal_term_grad(pv.data()[b * c + t], params.alpha()[t], params.gamma());
                    }
                    accumulate_owned(&mut grads[*probs], dp);
                }
            }
        }
    }

    let mut out = Gradients::default();
    for (i, node) in nodes.iter().enumerate() {
        if let Some(id) = node.param {
            let g = grads[i].take().unwrap_or_else(|| vec![0.0; node.value.len()]);
            let t = Tensor::new(node.value.shape().to_vec(), g)?;
            match out.grads.get_mut(&id) {
                Some(existing) => {
                    for (a, d) in existing.data_mut().iter_mut().zip(t.data()) {
                        *a += d;
                    }
                }
                None => {
                    out.grads.insert(id, t);
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_gives_ones() {
        let mut tape = Tape::new();
        let p = tape.param(ParamId(0), Tensor::from_vec(vec![0.3, -2.0, 5.0]));
        let l = tape.sum(p).unwrap();
        let g = backward(&tape, l).unwrap();
        assert_eq!(g.get(ParamId(0)).unwrap().data(), &[1.0, 1.0, 1.0]);
    }

    #[test]
    fn half_squared_norm_gives_p() {
        let mut tape = Tape::new();
        let vals = vec![0.3, -2.0, 5.0, 1e-3];
        let p = tape.param(ParamId(7), Tensor::from_vec(vals.clone()));
        let sq = tape.mul(p, p).unwrap();
        let s = tape.sum(sq).unwrap();
        let l = tape.scale(s, 0.5).unwrap();
        let g = backward(&tape, l).unwrap();
        assert_eq!(g.get(ParamId(7)).unwrap().data(), vals.as_slice());
    }

    #[test]
    fn detached_and_foreign_vars_error() {
        let mut tape = Tape::new();
        let c = tape.constant(Tensor::from_vec(vec![1.0, 2.0]));
        let s = tape.sum(c).unwrap();
        assert!(matches!(backward(&tape, s), Err(NnError::Tape(_))));

        let mut other = Tape::new();
        let p = other.param(ParamId(0), Tensor::from_vec(vec![1.0]));
        let l = other.sum(p).unwrap();
        assert!(matches!(backward(&tape, l), Err(NnError::Tape(_))));
        assert!(tape.relu(p).is_err());
    }

    #[test]
    fn non_scalar_loss_rejected() {
        let mut tape = Tape::new();
        let p = tape.param(ParamId(0), Tensor::from_vec(vec![1.0, 2.0]));
        assert!(backward(&tape, p).is_err());
    }

    #[test]
    fn unreached_params_get_zero_and_buffers_untouched() {
        let mut tape = Tape::new();
        let a = tape.param(ParamId(0), Tensor::from_vec(vec![1.0, 2.0]));
        let _b = tape.param(ParamId(1), Tensor::from_vec(vec![3.0]));
        let x = Tensor::new(vec![2, 2, 3], (0..12).map(|v| v as f64).collect()).unwrap();
        let xv = tape.constant(x);
        let beta = tape.param(ParamId(2), Tensor::zeros(&[2]));
        let mut stats = RunningStats::new(2);
        let y = tape.batchnorm(xv, a, beta, &mut stats, Mode::Train, 1e-5).unwrap();
        let after_forward = stats.clone();
        let l = tape.sum(y).unwrap();
        let g = backward(&tape, l).unwrap();
        assert_eq!(g.get(ParamId(1)).unwrap().data(), &[0.0]);
        assert_eq!(g.len(), 3);
        assert_eq!(stats, after_forward);
    }
}
