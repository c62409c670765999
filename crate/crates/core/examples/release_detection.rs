//! Finds Point A, Point B and the release frame on synthetic pitches of
//! increasing noise.

use pitchkin::kinematics::{detect_release_event, WristTrajectory, DEFAULT_WINDOW, MPS_TO_MPH};
use pitchkin::labels::{Handedness, PitchPosition};
use pitchkin::synth::{generate_pitch, SynthPitchSpec};

fn main() {
    for noise in [0.0, 0.005, 0.01, 0.03] {
        let spec = SynthPitchSpec::sample(17, Handedness::Left, PitchPosition::Windup, noise);
        let pitch = generate_pitch(&spec).unwrap();
        let traj = WristTrajectory::from_sequence(&pitch.sequence, Handedness::Left).unwrap();
        let ev = detect_release_event(&traj, DEFAULT_WINDOW).unwrap();
        println!(
            "noise {noise:.3} m: A {:>2}  B {:>2}  release {:>2} (truth {})  speed {:.2} m/s = {:.1} mph (truth {:.2})  margin {:.2}",
            ev.frame_a,
            ev.frame_b,
            ev.release_frame,
            pitch.truth.release_frame.unwrap(),
            ev.speed_mps,
            ev.speed_mps * MPS_TO_MPH,
            pitch.truth.release_speed_mps.unwrap(),
            ev.peak_margin
        );
    }
}
