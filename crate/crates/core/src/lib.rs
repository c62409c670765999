pub mod cli;
pub mod eval;
pub mod kinematics;
pub mod labels;
pub mod nn;
pub mod pose;
pub mod synth;
pub mod tcn;
