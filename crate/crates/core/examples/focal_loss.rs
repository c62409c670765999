//! Focal loss against cross-entropy on an easy and a hard prediction.

use pitchkin::nn::{focal_loss, FocalLossParams, Tensor};

fn main() {
    let probs = Tensor::new(vec![2, 2], vec![0.95, 0.05, 0.3, 0.7]).unwrap();
    let targets = [0, 0];
    let ce = FocalLossParams::uniform(2, 0.0).unwrap();
    for gamma in [0.0, 0.5, 2.0] {
        let fl = FocalLossParams::new(vec![1.0, 1.0], gamma).unwrap();
        println!("gamma {gamma}: loss {:.5}", focal_loss(&probs, &targets, &fl).unwrap());
    }
    println!("cross-entropy: {:.5}", focal_loss(&probs, &targets, &ce).unwrap());

    let weighted = FocalLossParams::inverse_frequency(&[900, 100], 2.0).unwrap();
    println!("inverse-frequency alpha for a 9:1 split: {:?}", weighted.alpha());
}
