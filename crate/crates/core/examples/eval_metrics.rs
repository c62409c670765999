//! Scores analyzed pitches against their truth with frame and percent margins.

use pitchkin::eval::{evaluate_reports, EvalConfig};
use pitchkin::kinematics::{analyze_pitch, AnalyzeConfig, PitchModels};
use pitchkin::synth::{generate_pitch_set, PitchSetConfig, TruthRecord};

fn main() {
    let mut cfg = PitchSetConfig::new(200, 4);
    cfg.noise_sigma = 0.01;
    let pitches = generate_pitch_set(&cfg).unwrap();
    let reports: Vec<_> = pitches
        .iter()
        .map(|p| {
            let a = AnalyzeConfig {
                handedness_override: p.truth.handedness,
                ..AnalyzeConfig::default()
            };
            analyze_pitch(&p.sequence, PitchModels::default(), &a)
        })
        .collect();
    let truths: Vec<_> = pitches
        .iter()
        .map(|p| TruthRecord {
            tracklet_id: p.sequence.tracklet_id().to_string(),
            truth: p.truth.clone(),
        })
        .collect();
    let report = evaluate_reports(&reports, &truths, &EvalConfig::default()).unwrap();
    for (name, m) in [
        ("release frame", &report.release_frame),
        ("velocity", &report.pitch_velocity),
        ("extension", &report.release_extension),
    ] {
        let cells: Vec<String> = m
            .spec
            .thresholds
            .iter()
            .zip(&m.accuracies)
            .map(|(t, a)| format!("{t}: {:.3}", a.unwrap_or(f64::NAN)))
            .collect();
        println!("{name:>13} ({} scored)  {}", m.count, cells.join("  "));
    }
    println!("monotone: {}", report.is_monotone());
}
