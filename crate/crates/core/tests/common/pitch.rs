use rand::Rng;

use super::rng;
use pitchkin::kinematics::{
    detect_release_event, pitch_velocity, release_extension, VelocityInputs, WristTrajectory, DEFAULT_WINDOW,
};
use pitchkin::pose::Point3;
use pitchkin::synth::{generate_pitch_set, PitchSetConfig};

#[derive(Debug, Default, Clone, Copy)]
pub struct PitchSweep {
    pub count: usize,
    pub exact: usize,
    pub within_1: usize,
    pub within_5: usize,
    /// Release speed within 2% of the truth.
    pub speed_2pct: usize,
    pub failures: usize,
}

impl PitchSweep {
    pub fn frac(&self, n: usize) -> f64 {
        n as f64 / self.count.max(1) as f64
    }
}

/// Runs release detection with the true throwing hand over a synthetic set.
pub fn pitch_sweep(count: usize, noise: f64, seed: u64) -> PitchSweep {
    let mut cfg = PitchSetConfig::new(count, seed);
    cfg.noise_sigma = noise;
    let pitches = generate_pitch_set(&cfg).expect("synthetic set");
    let mut s = PitchSweep {
        count,
        ..Default::default()
    };
    for p in &pitches {
        let hand = p.truth.handedness.expect("pitch truth");
        let truth_r = p.truth.release_frame.expect("pitch truth");
        let truth_v = p.truth.release_speed_mps.expect("pitch truth");
        let Ok(ev) =
            WristTrajectory::from_sequence(&p.sequence, hand).and_then(|t| detect_release_event(&t, DEFAULT_WINDOW))
        else {
            s.failures += 1;
            continue;
        };
        let off = ev.release_frame.abs_diff(truth_r);
        s.exact += usize::from(off == 0);
        s.within_1 += usize::from(off <= 1);
        s.within_5 += usize::from(off <= 5);
        s.speed_2pct += usize::from((ev.speed_mps - truth_v).abs() <= 0.02 * truth_v);
    }
    s
}

/// Absolute error of the l = 0.3 m, 0.1 rad/frame, 30 fps case (0.9 m/s).
pub fn closed_form_velocity_error() -> f64 {
    let l = 0.3;
    let mut worst: f64 = 0.0;
    for start in [0.0, 1.0, -2.0, 3.1, std::f64::consts::PI - 0.05] {
        for dir in [1.0, -1.0] {
            let a: f64 = start;
            let b = start + dir * 0.1;
            let v = VelocityInputs {
                wrist_prev: [l * a.cos(), l * a.sin()],
                wrist_at: [l * b.cos(), l * b.sin()],
                fps: 30.0,
                lever_arm: l,
            };
            worst = worst.max((pitch_velocity(&v).expect("valid inputs") - 0.9).abs());
        }
    }
    worst
}

fn point(r: &mut impl Rng) -> Point3 {
    [r.gen_range(-5.0..5.0), r.gen_range(-5.0..5.0), r.gen_range(-5.0..5.0)]
}

/// Pythagorean case error plus the number of random triples violating a
/// metric axiom (identity, symmetry, triangle inequality, positivity).
pub fn extension_oracle(triples: usize, seed: u64) -> (f64, usize) {
    let pyth = (release_extension([3.0, 4.0, 12.0], [0.0; 3]) - 13.0).abs();
    let mut r = rng(seed);
    let mut bad = 0;
    for _ in 0..triples {
        let (x, y, z) = (point(&mut r), point(&mut r), point(&mut r));
        let d = release_extension;
        let ok = d(x, x) == 0.0 && d(x, y) == d(y, x) && d(x, y) > 0.0 && d(x, z) <= d(x, y) + d(y, z) + 1e-12;
        bad += usize::from(!ok);
    }
    (pyth, bad)
}
