//! Blends detector joints with joints regressed from mesh vertices.

use pitchkin::pose::{fuse_joints, regress_joints, FusionInputs};

fn main() {
    let vertices = vec![[0.0, 1.0, 0.0], [0.2, 1.1, 0.0], [0.1, 0.9, 0.3], [0.4, 1.4, 0.1]];
    // each joint averages a subset of vertices; rows sum to one
    let regressor = vec![vec![0.5, 0.5, 0.0, 0.0], vec![0.0, 0.25, 0.25, 0.5]];
    let detected = vec![[0.12, 1.02, 0.01], [0.3, 1.2, 0.2]];

    let regressed = regress_joints(&regressor, &vertices);
    let fused = fuse_joints(&FusionInputs::new(
        detected.clone(),
        vertices.clone(),
        regressor.clone(),
    ))
    .unwrap();
    let leaning =
        fuse_joints(&FusionInputs::new(detected.clone(), vertices, regressor).with_weights(0.8, 0.2)).unwrap();
    for k in 0..detected.len() {
        println!(
            "joint {k}: detected {:?}  regressed {:?}  fused(0.5/0.5) {:?}  fused(0.8/0.2) {:?}",
            detected[k], regressed[k], fused[k], leaning[k]
        );
    }
}
