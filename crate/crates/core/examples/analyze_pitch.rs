//! Produces a full pitch report with a known throwing hand and no trained
//! models, then prints it as JSON.

use pitchkin::kinematics::{analyze_pitch, AnalyzeConfig, PitchModels};
use pitchkin::labels::{Handedness, PitchPosition};
use pitchkin::synth::{generate_pitch, SynthPitchSpec};

fn main() {
    let spec = SynthPitchSpec::sample(3, Handedness::Right, PitchPosition::Stretch, 0.005);
    let pitch = generate_pitch(&spec).unwrap();
    let cfg = AnalyzeConfig {
        handedness_override: Some(Handedness::Right),
        ..AnalyzeConfig::default()
    };
    let report = analyze_pitch(&pitch.sequence, PitchModels::default(), &cfg);
    println!("{}", serde_json::to_string_pretty(&report).unwrap());
    println!("truth: {}", serde_json::to_string(&pitch.truth).unwrap());
}
