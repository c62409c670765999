mod common;

use std::f64::consts::PI;

use common::pitch::{closed_form_velocity_error, extension_oracle, pitch_sweep};
use pitchkin::kinematics::{
    analyze_pitch, detect_release_event, wrap_angle, AnalyzeConfig, KinematicsError, PitchModels, WristTrajectory,
};
use pitchkin::labels::{Handedness, PitchPosition};
use pitchkin::pose::{PoseFrame, PoseSequence};
use pitchkin::synth::{generate_pitch, SynthPitchSpec};

#[test]
fn closed_form_circle_gives_point_nine() {
    assert!(closed_form_velocity_error() < 1e-9);
}

#[test]
fn extension_is_euclidean() {
    let (pyth, bad) = extension_oracle(1000, 11);
    assert!(pyth < 1e-12);
    assert_eq!(bad, 0);
}

#[test]
fn wrap_angle_range() {
    for k in -20..=20 {
        let d = k as f64 * 0.37;
        let w = wrap_angle(d);
        assert!(w > -PI && w <= PI);
        assert!(((d - w) / (2.0 * PI)).fract().abs() < 1e-9 || ((d - w) / (2.0 * PI)).fract().abs() > 1.0 - 1e-9);
    }
    assert_eq!(wrap_angle(PI), PI);
    assert_eq!(wrap_angle(-PI), PI);
}

#[test]
fn noiseless_pitches_recover_release_and_speed() {
    let s = pitch_sweep(100, 0.0, 21);
    assert_eq!(s.failures, 0);
    assert_eq!(s.exact, 100);
    assert_eq!(s.speed_2pct, 100);
}

#[test]
fn light_noise_keeps_release_within_one_frame() {
    let s = pitch_sweep(100, 0.01, 22);
    assert!(s.frac(s.within_1) >= 0.95, "{s:?}");
}

fn spec(hand: Handedness, seed: u64) -> SynthPitchSpec {
    SynthPitchSpec::sample(seed, hand, PitchPosition::Windup, 0.0)
}

#[test]
fn invariant_under_translation_and_scale() {
    let p = generate_pitch(&spec(Handedness::Right, 3)).unwrap();
    let base = detect_release_event(
        &WristTrajectory::from_sequence(&p.sequence, Handedness::Right).unwrap(),
        5,
    )
    .unwrap();
    let shifted = transform(&p.sequence, |q| [q[0] + 1.5, q[1] - 0.25, q[2] + 7.0]);
    let scaled = transform(&p.sequence, |q| [q[0] * 2.0, q[1] * 2.0, q[2] * 2.0]);
    for (name, seq, factor) in [("translated", shifted, 1.0), ("scaled", scaled, 2.0)] {
        let ev = detect_release_event(&WristTrajectory::from_sequence(&seq, Handedness::Right).unwrap(), 5).unwrap();
        assert_eq!(
            (ev.frame_a, ev.frame_b, ev.release_frame),
            (base.frame_a, base.frame_b, base.release_frame),
            "{name}"
        );
        assert!(
            (ev.speed_mps - factor * base.speed_mps).abs() < 1e-9 * factor * base.speed_mps,
            "{name}"
        );
    }
}

fn transform(seq: &PoseSequence, f: impl Fn([f64; 3]) -> [f64; 3]) -> PoseSequence {
    let frames = seq
        .frames()
        .iter()
        .map(|fr| {
            let joints = fr.joints().map(&f);
            PoseFrame::new(joints, *fr.valid_mask()).unwrap()
        })
        .collect();
    PoseSequence::new(seq.tracklet_id(), seq.fps(), frames).unwrap()
}

#[test]
fn mirrored_pitch_yields_same_indices() {
    let right = generate_pitch(&spec(Handedness::Right, 8)).unwrap();
    let left = generate_pitch(&spec(Handedness::Left, 8)).unwrap();
    assert_eq!(right.sequence.mirror_x().frames(), left.sequence.frames());
    let r = detect_release_event(
        &WristTrajectory::from_sequence(&right.sequence, Handedness::Right).unwrap(),
        5,
    )
    .unwrap();
    let l = detect_release_event(
        &WristTrajectory::from_sequence(&left.sequence, Handedness::Left).unwrap(),
        5,
    )
    .unwrap();
    assert_eq!(
        (r.frame_a, r.frame_b, r.release_frame),
        (l.frame_a, l.frame_b, l.release_frame)
    );
    assert_eq!(r.speed_mps, l.speed_mps);
}

#[test]
fn time_reversal_flags_order_and_keeps_interior_extremes() {
    let p = generate_pitch(&spec(Handedness::Right, 9)).unwrap();
    let n = p.sequence.len();
    let fwd = detect_release_event(
        &WristTrajectory::from_sequence(&p.sequence, Handedness::Right).unwrap(),
        5,
    )
    .unwrap();
    let frames: Vec<_> = p.sequence.frames().iter().rev().cloned().collect();
    let rev = PoseSequence::new("rev", p.sequence.fps(), frames).unwrap();
    let ev = detect_release_event(&WristTrajectory::from_sequence(&rev, Handedness::Right).unwrap(), 5).unwrap();
    assert_eq!(ev.frame_a, n - 1 - fwd.frame_a);
    assert_eq!(ev.frame_b, n - 1 - fwd.frame_b);
    assert!(ev.frame_a > ev.frame_b);
    assert!(!ev.warnings.is_empty());
}

#[test]
fn frozen_pose_reports_no_motion() {
    let p = generate_pitch(&spec(Handedness::Right, 10)).unwrap();
    let still = vec![p.sequence.frames()[0].clone(); 60];
    let seq = PoseSequence::new("still", 30.0, still).unwrap();
    let traj = WristTrajectory::from_sequence(&seq, Handedness::Right).unwrap();
    assert!(matches!(detect_release_event(&traj, 5), Err(KinematicsError::NoMotion)));

    let cfg = AnalyzeConfig {
        handedness_override: Some(Handedness::Right),
        ..Default::default()
    };
    let report = analyze_pitch(&seq, PitchModels::default(), &cfg);
    assert_eq!(report.handedness.value, Some(Handedness::Right));
    assert_eq!(report.release_frame.value, None);
    assert_eq!(report.release_frame.error.as_deref(), Some("no_motion"));
    assert_eq!(report.pitch_velocity_mps.value, None);
    assert_eq!(report.release_extension_m.value, None);
}

#[test]
fn missing_handedness_blocks_kinematics() {
    let p = generate_pitch(&spec(Handedness::Left, 12)).unwrap();
    let report = analyze_pitch(&p.sequence, PitchModels::default(), &AnalyzeConfig::default());
    assert_eq!(report.handedness.error.as_deref(), Some("model_unavailable"));
    assert_eq!(report.release_frame.error.as_deref(), Some("handedness_unavailable"));
}

#[test]
fn analyze_matches_truth_on_clean_pitch() {
    let p = generate_pitch(&spec(Handedness::Left, 13)).unwrap();
    let cfg = AnalyzeConfig {
        handedness_override: Some(Handedness::Left),
        ..Default::default()
    };
    let report = analyze_pitch(&p.sequence, PitchModels::default(), &cfg);
    assert_eq!(report.release_frame.value, p.truth.release_frame);
    let ext = report.release_extension_m.value.unwrap();
    assert!((ext - p.truth.extension_m.unwrap()).abs() < 1e-9);
    let v = report.pitch_velocity_mps.value.unwrap();
    let mph = report.pitch_velocity_mph.value.unwrap();
    assert!((mph / v - 2.236936).abs() < 1e-12);
    assert!(report.aux_linear_speed_3d_mps.unwrap() > 0.0);
}

#[test]
fn window_bounds_are_validated() {
    let p = generate_pitch(&spec(Handedness::Right, 14)).unwrap();
    let traj = WristTrajectory::from_sequence(&p.sequence, Handedness::Right).unwrap();
    assert!(matches!(
        detect_release_event(&traj, 0),
        Err(KinematicsError::Invalid(_))
    ));
    assert!(matches!(
        detect_release_event(&traj, traj.len() / 2 + 1),
        Err(KinematicsError::Invalid(_))
    ));
    assert!(detect_release_event(&traj, traj.len() / 2).is_ok());
}
