#![allow(dead_code)]

pub mod cli;
pub mod formats;
pub mod gradients;
pub mod oracles;
pub mod pitch;

use pitchkin::nn::{self, ParamId, Tape, Tensor, Var};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FD_STEP: f64 = 1e-5;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn rand_tensor(shape: &[usize], rng: &mut ChaCha8Rng, scale: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(-scale..scale)).collect()).unwrap()
}

/// Gradient agreement within `max(1e-4 relative, 1e-7 absolute)`.
pub fn grads_agree(numeric: f64, analytic: f64) -> bool {
    let tol = (1e-4 * numeric.abs().max(analytic.abs())).max(1e-7);
    (numeric - analytic).abs() <= tol
}

/// `sum(out * r)` with a fixed random `r`, so every output element gets a
/// distinct upstream gradient.
pub fn project(tape: &mut Tape, out: Var, seed: u64) -> Var {
    let shape = tape.value(out).shape().to_vec();
    let r = rand_tensor(&shape, &mut rng(seed), 1.0);
    let r = tape.constant(r);
    let m = tape.mul(out, r).unwrap();
    tape.sum(m).unwrap()
}

#[derive(Debug, Default)]
pub struct GradReport {
    pub checked: usize,
    pub failures: Vec<String>,
}

impl GradReport {
    pub fn merge(&mut self, other: GradReport) {
        self.checked += other.checked;
        self.failures.extend(other.failures);
    }

    pub fn ok(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Central finite differences against reverse mode. `eval` builds a fresh
/// tape from `inputs`, registering input `i` as `ParamId(i)`, and returns
/// the scalar loss. Up to `coords` coordinates are drawn at random.
pub fn gradcheck<F>(name: &str, inputs: &[Tensor], coords: usize, seed: u64, eval: F) -> GradReport
where
    F: Fn(&[Tensor]) -> (Tape, Var),
{
    let (tape, loss) = eval(inputs);
    let grads = nn::backward(&tape, loss).unwrap();
    let sizes: Vec<usize> = inputs.iter().map(|t| t.len()).collect();
    let total: usize = sizes.iter().sum();
    let picks = sample(&mut rng(seed), total, coords.min(total)).into_vec();
    let mut report = GradReport::default();
    for flat in picks {
        let (mut p, mut j) = (0, flat);
        while j >= sizes[p] {
            j -= sizes[p];
            p += 1;
        }
        let analytic = grads.get(ParamId(p)).map_or(0.0, |g| g.data()[j]);
        let mut shifted = inputs.to_vec();
        shifted[p].data_mut()[j] += FD_STEP;
        let (t1, l1) = eval(&shifted);
        shifted[p].data_mut()[j] -= 2.0 * FD_STEP;
        let (t2, l2) = eval(&shifted);
        let numeric = (t1.value(l1).data()[0] - t2.value(l2).data()[0]) / (2.0 * FD_STEP);
        report.checked += 1;
        if !grads_agree(numeric, analytic) {
            report.failures.push(format!(
                "{name}: input {p}[{j}] numeric {numeric:e} analytic {analytic:e}"
            ));
        }
    }
    report
}

/// Straightforward nested-loop dilated convolution with symmetric zero
/// padding, the reference for the GEMM implementation.
pub fn naive_conv(x: &Tensor, w: &Tensor, b: &Tensor, d: usize) -> Vec<f64> {
    let (bs, ci, n) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let (co, k) = (w.shape()[0], w.shape()[2]);
    let half = (k as i64 - 1) / 2;
    let mut out = vec![0.0; bs * co * n];
    for bb in 0..bs {
        for o in 0..co {
            for t in 0..n {
                let mut acc = b.data()[o];
                for i in 0..ci {
                    for j in 0..k {
                        let src = t as i64 + (j as i64 - half) * d as i64;
                        if src >= 0 && (src as usize) < n {
                            acc += x.data()[(bb * ci + i) * n + src as usize] * w.data()[(o * ci + i) * k + j];
                        }
                    }
                }
                out[(bb * co + o) * n + t] = acc;
            }
        }
    }
    out
}
