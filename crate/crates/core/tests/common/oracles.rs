use pitchkin::nn::{self, conv1d_dilated, focal_loss, FocalLossParams, Tensor};
use rand::Rng;

use super::{naive_conv, rand_tensor, rng};

/// Largest absolute deviation between the GEMM convolution and the nested
/// loop over `cases` random shapes with `d in {1,2,4,8,16}`, `k in {1,3,5}`.
pub fn conv_oracle(cases: usize, seed: u64) -> f64 {
    let mut r = rng(seed);
    let mut worst: f64 = 0.0;
    for case in 0..cases {
        let d = [1, 2, 4, 8, 16][case % 5];
        let k = [1, 3, 5][(case / 5) % 3];
        let b = r.gen_range(1..4);
        let ci = r.gen_range(1..6);
        let co = r.gen_range(1..6);
        let n = r.gen_range(1..40);
        let x = rand_tensor(&[b, ci, n], &mut r, 2.0);
        let w = rand_tensor(&[co, ci, k], &mut r, 1.0);
        let bias = rand_tensor(&[co], &mut r, 1.0);
        let fast = conv1d_dilated(&x, &w, &bias, d).unwrap();
        assert_eq!(fast.shape(), &[b, co, n]);
        let slow = naive_conv(&x, &w, &bias, d);
        for (a, e) in fast.data().iter().zip(&slow) {
            worst = worst.max((a - e).abs());
        }
    }
    worst
}

/// `(max |focal(gamma=0, alpha=1) - CE|, |scalar case - 0.25^2 ln 2|)`.
pub fn focal_oracle(seed: u64) -> (f64, f64) {
    let mut r = rng(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let c = r.gen_range(2..6);
        let b = r.gen_range(1..8);
        let logits = rand_tensor(&[b, c], &mut r, 4.0);
        let p = nn::softmax(&logits).unwrap();
        let targets: Vec<usize> = (0..b).map(|_| r.gen_range(0..c)).collect();
        let ce: f64 = p
            .data()
            .chunks(c)
            .zip(&targets)
            .map(|(row, &t)| -row[t].ln())
            .sum::<f64>()
            / b as f64;
        let fl = focal_loss(&p, &targets, &FocalLossParams::uniform(c, 0.0).unwrap()).unwrap();
        worst = worst.max((fl - ce).abs());
    }
    let p = Tensor::new(vec![1, 2], vec![0.5, 0.5]).unwrap();
    let v = focal_loss(&p, &[0], &FocalLossParams::new(vec![0.25, 0.25], 2.0).unwrap()).unwrap();
    (worst, (v - 0.25 * 0.25 * std::f64::consts::LN_2).abs())
}
