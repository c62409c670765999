//! Runs a dilated convolution on the tape and compares its weight gradient
//! with central finite differences.

use pitchkin::nn::{backward, conv1d_dilated, ParamId, Tape, Tensor};

fn loss(x: &Tensor, w: &Tensor, b: &Tensor) -> f64 {
    let y = conv1d_dilated(x, w, b, 4).unwrap();
    y.data()
        .iter()
        .enumerate()
        .map(|(i, v)| v * (i as f64 * 0.37).sin())
        .sum()
}

fn main() {
    let x = Tensor::new(vec![2, 3, 24], (0..144).map(|i| (i as f64 * 0.71).cos()).collect()).unwrap();
    let w = Tensor::new(vec![4, 3, 3], (0..36).map(|i| (i as f64 * 1.3).sin() * 0.5).collect()).unwrap();
    let b = Tensor::new(vec![4], vec![0.1, -0.2, 0.0, 0.3]).unwrap();

    let mut tape = Tape::new();
    let xv = tape.constant(x.clone());
    let wv = tape.param(ParamId(0), w.clone());
    let bv = tape.param(ParamId(1), b.clone());
    let y = tape.conv1d(xv, wv, bv, 4).unwrap();
    let r = Tensor::new(
        tape.value(y).shape().to_vec(),
        (0..tape.value(y).data().len())
            .map(|i| (i as f64 * 0.37).sin())
            .collect(),
    )
    .unwrap();
    let rv = tape.constant(r);
    let prod = tape.mul(y, rv).unwrap();
    let l = tape.sum(prod).unwrap();
    let grads = backward(&tape, l).unwrap();
    let gw = grads.get(ParamId(0)).unwrap();

    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for i in 0..w.data().len() {
        let (mut up, mut down) = (w.clone(), w.clone());
        up.data_mut()[i] += h;
        down.data_mut()[i] -= h;
        let numeric = (loss(&x, &up, &b) - loss(&x, &down, &b)) / (2.0 * h);
        worst = worst.max((numeric - gw.data()[i]).abs());
    }
    println!(
        "checked {} weights, max |numeric - analytic| = {worst:.3e}",
        w.data().len()
    );
}
