//! Parametric motion generator with analytic ground truth.
//!
//! A pitch is built for a right-handed thrower and mirrored for left-handers.
//! The throwing forearm is a rigid segment of length `l*` hinged at the
//! elbow; from the start of the cocking phase the elbow is fixed and the wrist
//! angle `phi` (measured in the x-y plane about the elbow) runs monotonically
//! down from `3pi/2` (hand hanging) through `pi` (the x-minimum, Point A) to
//! `0` (the x-maximum, Point B) and on into the follow-through. The step that
//! lands on `phi = 0` is `omega* / fps` and is the largest per-frame step of
//! the whole motion, so the release frame, speed and extension are exact on
//! noiseless data.

use std::f64::consts::{FRAC_PI_2, PI};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::labels::{Handedness, PitchPosition, Role};
use crate::pose::{JointId, Point3, PoseFrame, PoseSequence, NUM_JOINTS};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Pose(#[from] crate::pose::PoseError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Frames of the cocking phase (hand hanging to fully cocked).
const COCKING_FRAMES: usize = 10;
/// Minimum frames before cocking starts.
const MIN_PREP_FRAMES: usize = 5;
/// Step between successive arc frames before release, as a fraction of the
/// release step.
const ARC_STEP_RATIO: f64 = 0.6;
const MIN_RELEASE_STEP: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthPitchSpec {
    pub handedness: Handedness,
    pub position_style: PitchPosition,
    pub fps: f64,
    pub n_frames: usize,
    pub release_frame: usize,
    /// Angular rate of the wrist about the elbow at release (rad/s).
    pub angular_rate: f64,
    /// Elbow-to-wrist distance (m).
    pub lever_arm: f64,
    /// Standard deviation of the per-coordinate Gaussian joint noise (m).
    pub noise_sigma: f64,
    pub seed: u64,
}

impl SynthPitchSpec {
    /// Broadcast-like defaults drawn from `seed`: 30 fps, 100 frames,
    /// release in frames 55..=75, lever arm 0.30-0.36 m and a release step
    /// of 2.7-2.95 rad per frame.
    pub fn sample(seed: u64, handedness: Handedness, position_style: PitchPosition, noise_sigma: f64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5350_4543);
        let fps = 30.0;
        let step = rng.gen_range(2.7..2.95);
        Self {
            handedness,
            position_style,
            fps,
            n_frames: 100,
            release_frame: rng.gen_range(55..=75),
            angular_rate: step * fps,
            lever_arm: rng.gen_range(0.30..0.36),
            noise_sigma,
            seed,
        }
    }

    /// Per-frame angle swept in the release frame.
    pub fn release_step(&self) -> f64 {
        self.angular_rate / self.fps
    }

    /// Angles of frames `r*-1, r*-2, ...` back to the cocked position `pi`.
    fn arc_before_release(&self) -> Vec<f64> {
        let step = self.release_step();
        let mut angles = vec![step];
        while *angles.last().expect("non-empty") < PI {
            let next = (angles.last().expect("non-empty") + ARC_STEP_RATIO * step).min(PI);
            angles.push(next);
        }
        angles
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let fail = |m: String| Err(SynthError::InvalidSpec(m));
        if !(self.fps.is_finite() && self.fps > 0.0) {
            return fail(format!("fps must be positive, got {}", self.fps));
        }
        if !(self.angular_rate.is_finite() && self.angular_rate > 0.0) {
            return fail(format!("angular rate must be positive, got {}", self.angular_rate));
        }
        if !(self.lever_arm.is_finite() && self.lever_arm > 0.0) {
            return fail(format!("lever arm must be positive, got {}", self.lever_arm));
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return fail(format!("noise sigma must be >= 0, got {}", self.noise_sigma));
        }
        if self.release_frame < 2 || self.release_frame + 2 > self.n_frames {
            return fail(format!(
                "release frame {} must lie in [2, n_frames - 2] for {} frames",
                self.release_frame, self.n_frames
            ));
        }
        let step = self.release_step();
        if !(MIN_RELEASE_STEP..PI).contains(&step) {
            return fail(format!(
                "angular rate / fps = {step:.4} rad per frame must lie in [{MIN_RELEASE_STEP}, pi)"
            ));
        }
        let lead = self.arc_before_release().len() + COCKING_FRAMES + MIN_PREP_FRAMES;
        if self.release_frame < lead {
            return fail(format!(
                "release frame {} leaves no room for cocking and preparation (needs >= {lead})",
                self.release_frame
            ));
        }
        Ok(())
    }
}

/// Analytic labels of a generated tracklet. Pitch fields are present only
/// for pitcher motions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Truth {
    pub role: Role,
    pub handedness: Option<Handedness>,
    pub position_style: Option<PitchPosition>,
    pub release_frame: Option<usize>,
    pub release_speed_mps: Option<f64>,
    pub extension_m: Option<f64>,
}

impl Truth {
    fn role_only(role: Role) -> Self {
        Self {
            role,
            handedness: None,
            position_style: None,
            release_frame: None,
            release_speed_mps: None,
            extension_m: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthPitch {
    pub sequence: PoseSequence,
    pub truth: Truth,
    pub spec: SynthPitchSpec,
}

/// A generated tracklet with its labels.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthSample {
    pub sequence: PoseSequence,
    pub truth: Truth,
}

impl From<SynthPitch> for SynthSample {
    fn from(p: SynthPitch) -> Self {
        Self {
            sequence: p.sequence,
            truth: p.truth,
        }
    }
}

type Skeleton = [Point3; NUM_JOINTS];

fn add(a: Point3, b: Point3) -> Point3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

fn lerp(a: Point3, b: Point3, s: f64) -> Point3 {
    [
        a[0] + (b[0] - a[0]) * s,
        a[1] + (b[1] - a[1]) * s,
        a[2] + (b[2] - a[2]) * s,
    ]
}

fn smoothstep(u: f64) -> f64 {
    let u = u.clamp(0.0, 1.0);
    u * u * (3.0 - 2.0 * u)
}

fn set(sk: &mut Skeleton, id: JointId, p: Point3) {
    sk[id.index()] = p;
}

/// Per-pitch body placement jitter.
struct PitchBody {
    origin: Point3,
    elbow: Point3,
    pivot_ankle: Point3,
    prep_amp: f64,
    knee_lift: f64,
    stride: f64,
}

/// Wrist angle about the elbow at every frame, for a right-hander.
fn wrist_angles(spec: &SynthPitchSpec) -> (Vec<f64>, usize, usize) {
    let n = spec.n_frames;
    let r = spec.release_frame;
    let arc = spec.arc_before_release();
    let a_idx = r - arc.len();
    let cock_start = a_idx - COCKING_FRAMES;
    let step = spec.release_step();
    let follow_total = FRAC_PI_2;
    let first_follow = (0.45 * step).min(0.6 * follow_total);
    let rho = 1.0 - first_follow / follow_total;

    let mut phi = vec![0.0; n];
    for (t, p) in phi.iter_mut().enumerate() {
        *p = if t <= cock_start {
            1.5 * PI
        } else if t <= a_idx {
            let j = (t - cock_start) as f64 / COCKING_FRAMES as f64;
            PI + FRAC_PI_2 * (1.0 + (PI * j).cos()) / 2.0
        } else if t < r {
            arc[r - t - 1]
        } else {
            -follow_total * (1.0 - rho.powi((t - r) as i32))
        };
    }
    (phi, a_idx, cock_start)
}

fn pitch_skeletons(spec: &SynthPitchSpec, body: &PitchBody) -> Vec<Skeleton> {
    let (phi, a_idx, cock_start) = wrist_angles(spec);
    let r = spec.release_frame;
    let l = spec.lever_arm;
    let o = body.origin;
    (0..spec.n_frames)
        .map(|t| {
            let mut sk = [[0.0; 3]; NUM_JOINTS];
            // preparation: arms raise and lower, stride knee lifts
            let prep_u = if t < cock_start {
                t as f64 / cock_start as f64
            } else {
                1.0
            };
            let raise = body.prep_amp * (PI * prep_u).sin().powi(2);
            let lift_u = ((prep_u - 0.35) / 0.65).clamp(0.0, 1.0);
            let lift = body.knee_lift * (PI * lift_u).sin().max(0.0);
            // stride toward the plate during cocking and the arc
            let stride_u = smoothstep((t as f64 - cock_start as f64) / (a_idx - cock_start) as f64);
            let lean = smoothstep((t as f64 - cock_start as f64) / (r - cock_start) as f64);

            let pelvis = add(o, [0.0, 1.0 - 0.05 * lean, 0.2 * lean]);
            set(&mut sk, JointId::Pelvis, pelvis);
            set(&mut sk, JointId::RHip, add(pelvis, [-0.12, -0.02, 0.0]));
            set(&mut sk, JointId::LHip, add(pelvis, [0.12, -0.02, 0.0]));
            set(&mut sk, JointId::RAnkle, body.pivot_ankle);
            set(
                &mut sk,
                JointId::RKnee,
                lerp(add(pelvis, [-0.12, -0.02, 0.0]), body.pivot_ankle, 0.5),
            );
            let l_ankle = add(o, [0.15, 0.08 + 0.8 * lift, -0.05 + body.stride * stride_u]);
            set(&mut sk, JointId::LAnkle, l_ankle);
            set(
                &mut sk,
                JointId::LKnee,
                add(
                    lerp(add(pelvis, [0.12, -0.02, 0.0]), l_ankle, 0.5),
                    [0.0, lift * 0.4, 0.1 + lift * 0.3],
                ),
            );
            let thorax = add(pelvis, [0.0, 0.5, 0.15 * lean]);
            set(&mut sk, JointId::Spine, lerp(pelvis, thorax, 0.5));
            set(&mut sk, JointId::Thorax, thorax);
            set(&mut sk, JointId::Neck, add(thorax, [0.0, 0.12, 0.02]));
            set(&mut sk, JointId::Head, add(thorax, [0.0, 0.27, 0.05]));
            set(&mut sk, JointId::RShoulder, add(thorax, [-0.18, 0.0, 0.0]));
            set(&mut sk, JointId::LShoulder, add(thorax, [0.18, 0.0, 0.0]));

            let elbow = if t < cock_start {
                add(body.elbow, [0.0, raise, 0.0])
            } else {
                body.elbow
            };
            let wrist = add(elbow, [l * phi[t].cos(), l * phi[t].sin(), 0.0]);
            set(&mut sk, JointId::RElbow, elbow);
            set(&mut sk, JointId::RWrist, wrist);

            // glove arm: raised with the throwing arm, tucked after release
            let tuck = smoothstep((t as f64 - a_idx as f64) / (r + 4 - a_idx) as f64);
            let l_sh = add(thorax, [0.18, 0.0, 0.0]);
            let l_elbow = add(l_sh, [0.1, -0.2 + raise, 0.15 - 0.1 * tuck]);
            set(&mut sk, JointId::LElbow, l_elbow);
            set(
                &mut sk,
                JointId::LWrist,
                add(l_elbow, [-0.12 + 0.05 * tuck, 0.12 - 0.2 * tuck, 0.15]),
            );
            sk
        })
        .collect()
}

fn add_noise(frames: &mut [Skeleton], sigma: f64, rng: &mut ChaCha8Rng) {
    if sigma == 0.0 {
        return;
    }
    let normal = Normal::new(0.0, sigma).expect("sigma validated");
    for sk in frames.iter_mut() {
        for p in sk.iter_mut() {
            for c in p.iter_mut() {
                *c += normal.sample(rng);
            }
        }
    }
}

fn to_sequence(id: String, fps: f64, frames: Vec<Skeleton>) -> Result<PoseSequence, SynthError> {
    let frames = frames
        .into_iter()
        .map(PoseFrame::all_valid)
        .collect::<Result<Vec<_>, _>>()?;
    Ok(PoseSequence::new(id, fps, frames)?)
}

/// Generates one pitch. Left-handed pitches are the exact x-mirror (with
/// left/right joint labels swapped) of the right-handed pitch with the same
/// seed, noise included.
pub fn generate_pitch(spec: &SynthPitchSpec) -> Result<SynthPitch, SynthError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let windup = spec.position_style == PitchPosition::Windup;
    let origin = [rng.gen_range(-0.1..0.1), 0.0, rng.gen_range(-0.1..0.1)];
    let body = PitchBody {
        origin,
        elbow: add(
            origin,
            [
                -0.30 + rng.gen_range(-0.03..0.03),
                1.55 + rng.gen_range(-0.05..0.05),
                0.45 + rng.gen_range(-0.05..0.05),
            ],
        ),
        pivot_ankle: add(origin, [-0.15, 0.08, -0.3 + rng.gen_range(-0.05..0.05)]),
        prep_amp: if windup {
            rng.gen_range(0.30..0.40)
        } else {
            rng.gen_range(0.02..0.06)
        },
        knee_lift: if windup {
            rng.gen_range(0.40..0.50)
        } else {
            rng.gen_range(0.08..0.15)
        },
        stride: rng.gen_range(0.7..0.9),
    };
    let mut frames = pitch_skeletons(spec, &body);

    let r = spec.release_frame;
    let wrist = frames[r][JointId::RWrist.index()];
    let ankle = frames[r][JointId::RAnkle.index()];
    let extension = crate::kinematics::release_extension(wrist, ankle);

    add_noise(&mut frames, spec.noise_sigma, &mut rng);
    let id = format!("pitch-{:016x}", spec.seed);
    let mut sequence = to_sequence(id, spec.fps, frames)?;
    if spec.handedness == Handedness::Left {
        sequence = sequence.mirror_x();
    }
    Ok(SynthPitch {
        sequence,
        truth: Truth {
            role: Role::Pitcher,
            handedness: Some(spec.handedness),
            position_style: Some(spec.position_style),
            release_frame: Some(r),
            release_speed_mps: Some(spec.angular_rate * spec.lever_arm),
            extension_m: Some(extension),
        },
        spec: spec.clone(),
    })
}

/// Composition of a generated pitch set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PitchSetConfig {
    pub count: usize,
    /// Exact fraction of left-handed pitches (rounded down).
    pub left_fraction: f64,
    /// Exact fraction of windup pitches (rounded down).
    pub windup_fraction: f64,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl PitchSetConfig {
    pub fn new(count: usize, seed: u64) -> Self {
        Self {
            count,
            left_fraction: 0.5,
            windup_fraction: 0.5,
            noise_sigma: 0.01,
            seed,
        }
    }
}

fn derive_seed(base: u64, stream: u64, i: usize) -> u64 {
    // splitmix-style mixing so nearby indices give unrelated streams
    let mut z = base
        .wrapping_add(stream.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add((i as u64).wrapping_mul(0xBF58_476D_1CE4_E5B9));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Pitches with exact label proportions, in a seeded shuffled order.
pub fn generate_pitch_set(cfg: &PitchSetConfig) -> Result<Vec<SynthPitch>, SynthError> {
    let n_left = (cfg.count as f64 * cfg.left_fraction).floor() as usize;
    let n_windup = (cfg.count as f64 * cfg.windup_fraction).floor() as usize;
    let mut hands: Vec<Handedness> = (0..cfg.count)
        .map(|i| {
            if i < n_left {
                Handedness::Left
            } else {
                Handedness::Right
            }
        })
        .collect();
    let mut styles: Vec<PitchPosition> = (0..cfg.count)
        .map(|i| {
            if i < n_windup {
                PitchPosition::Windup
            } else {
                PitchPosition::Stretch
            }
        })
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    use rand::seq::SliceRandom;
    hands.shuffle(&mut rng);
    styles.shuffle(&mut rng);
    (0..cfg.count)
        .map(|i| {
            let spec = SynthPitchSpec::sample(derive_seed(cfg.seed, 1, i), hands[i], styles[i], cfg.noise_sigma);
            let mut p = generate_pitch(&spec)?;
            p.sequence = p.sequence.with_id(format!("pitch-{:05}", i));
            Ok(p)
        })
        .collect()
}

const ROLE_FRAMES: usize = 100;
const ROLE_FPS: f64 = 30.0;
const ROLE_NOISE: f64 = 0.01;

fn batter_frames(rng: &mut ChaCha8Rng) -> Vec<Skeleton> {
    let o = [rng.gen_range(-0.2..0.2), 0.0, rng.gen_range(-0.2..0.2)];
    let t_swing = rng.gen_range(40..70) as f64;
    let swing_len = rng.gen_range(4.0..7.0);
    let radius = rng.gen_range(0.4..0.5);
    let waggle = rng.gen_range(0.02..0.05);
    (0..ROLE_FRAMES)
        .map(|t| {
            let tf = t as f64;
            let s = smoothstep((tf - t_swing) / swing_len);
            let psi = -2.0 + 3.6 * s;
            let stride = smoothstep((tf - t_swing + 8.0) / 6.0);
            let mut sk = [[0.0; 3]; NUM_JOINTS];
            let pelvis = add(o, [0.05 * stride, 0.95, 0.0]);
            set(&mut sk, JointId::Pelvis, pelvis);
            set(&mut sk, JointId::RHip, add(pelvis, [-0.12, -0.02, 0.0]));
            set(&mut sk, JointId::LHip, add(pelvis, [0.12, -0.02, 0.0]));
            let r_ankle = add(o, [-0.32, 0.08, 0.0]);
            let lift = 0.1 * (PI * ((tf - t_swing + 8.0) / 6.0).clamp(0.0, 1.0)).sin();
            let l_ankle = add(o, [0.32 + 0.15 * stride, 0.08 + lift, 0.0]);
            set(&mut sk, JointId::RAnkle, r_ankle);
            set(&mut sk, JointId::LAnkle, l_ankle);
            set(
                &mut sk,
                JointId::RKnee,
                add(lerp(pelvis, r_ankle, 0.5), [0.0, 0.0, 0.12]),
            );
            set(
                &mut sk,
                JointId::LKnee,
                add(lerp(pelvis, l_ankle, 0.5), [0.0, 0.0, 0.12]),
            );
            let thorax = add(pelvis, [0.0, 0.48, 0.05]);
            set(&mut sk, JointId::Spine, lerp(pelvis, thorax, 0.5));
            set(&mut sk, JointId::Thorax, thorax);
            set(&mut sk, JointId::Neck, add(thorax, [0.0, 0.12, 0.0]));
            set(&mut sk, JointId::Head, add(thorax, [0.0, 0.27, 0.03]));
            let rot = psi * 0.5;
            let sh = [0.18 * rot.cos(), 0.0, 0.18 * rot.sin()];
            let r_sh = add(thorax, [-sh[0], 0.0, -sh[2]]);
            let l_sh = add(thorax, sh);
            set(&mut sk, JointId::RShoulder, r_sh);
            set(&mut sk, JointId::LShoulder, l_sh);
            let wig = waggle * (2.0 * PI * 2.0 * tf / ROLE_FPS).sin() * (1.0 - s);
            let hands = add(thorax, [radius * psi.cos(), -0.15 + wig, radius * psi.sin()]);
            set(&mut sk, JointId::RWrist, add(hands, [0.0, 0.04, 0.0]));
            set(&mut sk, JointId::LWrist, add(hands, [0.0, -0.04, 0.0]));
            set(&mut sk, JointId::RElbow, add(lerp(r_sh, hands, 0.5), [0.0, -0.08, 0.0]));
            set(&mut sk, JointId::LElbow, add(lerp(l_sh, hands, 0.5), [0.0, -0.08, 0.0]));
            sk
        })
        .collect()
}

fn catcher_frames(rng: &mut ChaCha8Rng) -> Vec<Skeleton> {
    let o = [rng.gen_range(-0.2..0.2), 0.0, rng.gen_range(-0.2..0.2)];
    let t_catch = rng.gen_range(30..80) as f64;
    let sway = rng.gen_range(0.01..0.03);
    let phase = rng.gen_range(0.0..2.0 * PI);
    (0..ROLE_FRAMES)
        .map(|t| {
            let tf = t as f64;
            let drift = sway * (2.0 * PI * 0.4 * tf / ROLE_FPS + phase).sin();
            let reach = 0.08 * (-((tf - t_catch) / 3.0).powi(2)).exp();
            let mut sk = [[0.0; 3]; NUM_JOINTS];
            let pelvis = add(o, [drift, 0.55, 0.0]);
            set(&mut sk, JointId::Pelvis, pelvis);
            set(&mut sk, JointId::RHip, add(pelvis, [-0.15, 0.0, 0.0]));
            set(&mut sk, JointId::LHip, add(pelvis, [0.15, 0.0, 0.0]));
            set(&mut sk, JointId::RKnee, add(o, [-0.3, 0.5, 0.35]));
            set(&mut sk, JointId::LKnee, add(o, [0.3, 0.5, 0.35]));
            set(&mut sk, JointId::RAnkle, add(o, [-0.3, 0.08, -0.05]));
            set(&mut sk, JointId::LAnkle, add(o, [0.3, 0.08, -0.05]));
            let thorax = add(pelvis, [0.0, 0.45, 0.12]);
            set(&mut sk, JointId::Spine, lerp(pelvis, thorax, 0.5));
            set(&mut sk, JointId::Thorax, thorax);
            set(&mut sk, JointId::Neck, add(thorax, [0.0, 0.12, 0.03]));
            set(&mut sk, JointId::Head, add(thorax, [0.0, 0.26, 0.07]));
            let r_sh = add(thorax, [-0.18, 0.0, 0.0]);
            let l_sh = add(thorax, [0.18, 0.0, 0.0]);
            set(&mut sk, JointId::RShoulder, r_sh);
            set(&mut sk, JointId::LShoulder, l_sh);
            let glove = add(l_sh, [0.0, -0.05 + reach * 0.5, 0.45 + reach]);
            set(&mut sk, JointId::LElbow, lerp(l_sh, glove, 0.5));
            set(&mut sk, JointId::LWrist, glove);
            set(&mut sk, JointId::RElbow, add(r_sh, [-0.05, -0.22, -0.05]));
            set(&mut sk, JointId::RWrist, add(r_sh, [0.0, -0.35, -0.15]));
            sk
        })
        .collect()
}

fn fielder_frames(rng: &mut ChaCha8Rng) -> Vec<Skeleton> {
    let start = [rng.gen_range(-1.0..1.0), 0.0, rng.gen_range(-1.0..1.0)];
    let heading = rng.gen_range(0.0..2.0 * PI);
    let speed = rng.gen_range(1.5..3.5);
    let cadence = rng.gen_range(1.4..2.2);
    let dir = [heading.cos(), 0.0, heading.sin()];
    let side = [-heading.sin(), 0.0, heading.cos()];
    let along = |p: Point3, a: f64, s: f64, y: f64| -> Point3 {
        [
            p[0] + dir[0] * a + side[0] * s,
            p[1] + y,
            p[2] + dir[2] * a + side[2] * s,
        ]
    };
    (0..ROLE_FRAMES)
        .map(|t| {
            let time = t as f64 / ROLE_FPS;
            let w = 2.0 * PI * cadence * time;
            let base = [start[0] + dir[0] * speed * time, 0.0, start[2] + dir[2] * speed * time];
            let swing = 0.35 * w.sin();
            let mut sk = [[0.0; 3]; NUM_JOINTS];
            let pelvis = along(base, 0.0, 0.0, 1.0 + 0.03 * (2.0 * w).sin());
            set(&mut sk, JointId::Pelvis, pelvis);
            set(&mut sk, JointId::RHip, along(pelvis, 0.0, -0.12, 0.0));
            set(&mut sk, JointId::LHip, along(pelvis, 0.0, 0.12, 0.0));
            let r_ankle = along(base, swing, -0.12, 0.08 + 0.12 * w.cos().max(0.0));
            let l_ankle = along(base, -swing, 0.12, 0.08 + 0.12 * (-w.cos()).max(0.0));
            set(&mut sk, JointId::RAnkle, r_ankle);
            set(&mut sk, JointId::LAnkle, l_ankle);
            set(
                &mut sk,
                JointId::RKnee,
                along(lerp(pelvis, r_ankle, 0.5), 0.08, 0.0, 0.0),
            );
            set(
                &mut sk,
                JointId::LKnee,
                along(lerp(pelvis, l_ankle, 0.5), 0.08, 0.0, 0.0),
            );
            let thorax = along(pelvis, 0.08, 0.0, 0.5);
            set(&mut sk, JointId::Spine, lerp(pelvis, thorax, 0.5));
            set(&mut sk, JointId::Thorax, thorax);
            set(&mut sk, JointId::Neck, along(thorax, 0.02, 0.0, 0.12));
            set(&mut sk, JointId::Head, along(thorax, 0.05, 0.0, 0.27));
            let r_sh = along(thorax, 0.0, -0.18, 0.0);
            let l_sh = along(thorax, 0.0, 0.18, 0.0);
            set(&mut sk, JointId::RShoulder, r_sh);
            set(&mut sk, JointId::LShoulder, l_sh);
            set(&mut sk, JointId::RElbow, along(r_sh, -0.6 * swing * 0.5, 0.0, -0.26));
            set(&mut sk, JointId::LElbow, along(l_sh, 0.6 * swing * 0.5, 0.0, -0.26));
            set(&mut sk, JointId::RWrist, along(r_sh, -0.6 * swing, 0.0, -0.5));
            set(&mut sk, JointId::LWrist, along(l_sh, 0.6 * swing, 0.0, -0.5));
            sk
        })
        .collect()
}

/// One tracklet of the given role at the default 0.01 m joint noise.
pub fn generate_role_sample(role: Role, seed: u64) -> Result<SynthSample, SynthError> {
    generate_role_sample_with_noise(role, ROLE_NOISE, seed)
}

pub fn generate_role_sample_with_noise(role: Role, noise_sigma: f64, seed: u64) -> Result<SynthSample, SynthError> {
    if !(noise_sigma.is_finite() && noise_sigma >= 0.0) {
        return Err(SynthError::InvalidSpec(format!(
            "noise sigma must be >= 0, got {noise_sigma}"
        )));
    }
    if role == Role::Pitcher {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x524F_4C45);
        let hand = if rng.gen_bool(0.5) {
            Handedness::Right
        } else {
            Handedness::Left
        };
        let style = if rng.gen_bool(0.5) {
            PitchPosition::Windup
        } else {
            PitchPosition::Stretch
        };
        return Ok(generate_pitch(&SynthPitchSpec::sample(seed, hand, style, noise_sigma))?.into());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut frames = match role {
        Role::Batter => batter_frames(&mut rng),
        Role::Catcher => catcher_frames(&mut rng),
        Role::Fielder => fielder_frames(&mut rng),
        Role::Pitcher => unreachable!(),
    };
    add_noise(&mut frames, noise_sigma, &mut rng);
    let sequence = to_sequence(format!("{}-{:016x}", role, seed), ROLE_FPS, frames)?;
    Ok(SynthSample {
        sequence,
        truth: Truth::role_only(role),
    })
}

/// `n_per_class` tracklets of each of the four roles, class-major order.
pub fn generate_role_dataset(n_per_class: usize, seed: u64) -> Result<Vec<SynthSample>, SynthError> {
    generate_role_dataset_with_noise(n_per_class, ROLE_NOISE, seed)
}

pub fn generate_role_dataset_with_noise(
    n_per_class: usize,
    noise_sigma: f64,
    seed: u64,
) -> Result<Vec<SynthSample>, SynthError> {
    if n_per_class == 0 {
        return Err(SynthError::InvalidSpec("n_per_class must be >= 1".into()));
    }
    let mut out = Vec::with_capacity(4 * n_per_class);
    for (ri, role) in [Role::Pitcher, Role::Batter, Role::Catcher, Role::Fielder]
        .into_iter()
        .enumerate()
    {
        for i in 0..n_per_class {
            let mut s = generate_role_sample_with_noise(role, noise_sigma, derive_seed(seed, 10 + ri as u64, i))?;
            s.sequence = s.sequence.with_id(format!("{role}-{i:05}"));
            out.push(s);
        }
    }
    Ok(out)
}

#[derive(Serialize, Deserialize)]
pub struct TruthRecord {
    pub tracklet_id: String,
    pub truth: Truth,
}

/// Writes the truth sidecar, one `{"tracklet_id", "truth"}` object per line.
pub fn save_truths(samples: &[SynthSample], path: impl AsRef<Path>) -> Result<(), SynthError> {
    use std::io::Write;
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    for s in samples {
        let rec = TruthRecord {
            tracklet_id: s.sequence.tracklet_id().to_string(),
            truth: s.truth.clone(),
        };
        writeln!(w, "{}", serde_json::to_string(&rec).expect("truth serializes"))?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_truths(path: impl AsRef<Path>) -> Result<Vec<TruthRecord>, SynthError> {
    let text = std::fs::read_to_string(path)?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| {
                SynthError::Pose(crate::pose::PoseError::Parse {
                    line: i + 1,
                    msg: e.to_string(),
                })
            })
        })
        .collect()
}
