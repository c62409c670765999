//! Closed-form pitch statistics: release detection, release speed from the
//! wrist's angular motion about the elbow, and release extension.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::labels::{Handedness, PitchPosition};
use crate::pose::{JointId, Point3, PoseSequence};
use crate::tcn::{self, TcnModel};

/// Exact `3600 / 1609.344`.
pub const MPS_TO_MPH: f64 = 2.236936;
pub const DEFAULT_WINDOW: usize = 5;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum KinematicsError {
    #[error("trajectory has {0} frames, at least 3 are needed")]
    TooShort(usize),
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("joint {joint} missing at frame {frame}")]
    MissingJoint { frame: usize, joint: &'static str },
    #[error("wrist x never changes")]
    NoMotion,
    #[error("degenerate trajectory: {0}")]
    Degenerate(String),
    #[error("wrist coincides with elbow at frame {0}; angle undefined")]
    UndefinedAngle(usize),
}

impl KinematicsError {
    /// Stable machine-readable code used in reports.
    pub fn code(&self) -> &'static str {
        match self {
            KinematicsError::TooShort(_) => "too_short",
            KinematicsError::Invalid(_) => "invalid_input",
            KinematicsError::MissingJoint { .. } => "missing_joint",
            KinematicsError::NoMotion => "no_motion",
            KinematicsError::Degenerate(_) => "degenerate_trajectory",
            KinematicsError::UndefinedAngle(_) => "undefined_angle",
        }
    }
}

/// How the lever arm `l` is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LeverArm {
    /// Wrist-elbow distance at the candidate frame itself.
    AtRelease,
    /// Median wrist-elbow distance over the whole trajectory; robust to
    /// per-frame joint noise on a rigid forearm.
    #[default]
    SequenceMedian,
}

/// Throwing-hand wrist and elbow tracks.
#[derive(Debug, Clone, PartialEq)]
pub struct WristTrajectory {
    wrist: Vec<Point3>,
    elbow: Vec<Point3>,
    fps: f64,
    handedness: Handedness,
}

impl WristTrajectory {
    pub fn new(
        wrist: Vec<Point3>,
        elbow: Vec<Point3>,
        fps: f64,
        handedness: Handedness,
    ) -> Result<Self, KinematicsError> {
        if wrist.len() != elbow.len() {
            return Err(KinematicsError::Invalid(format!(
                "{} wrist frames but {} elbow frames",
                wrist.len(),
                elbow.len()
            )));
        }
        if wrist.len() < 3 {
            return Err(KinematicsError::TooShort(wrist.len()));
        }
        if !(fps.is_finite() && fps > 0.0) {
            return Err(KinematicsError::Invalid(format!("fps must be positive, got {fps}")));
        }
        if let Some(f) = wrist
            .iter()
            .chain(&elbow)
            .position(|p| p.iter().any(|c| !c.is_finite()))
        {
            return Err(KinematicsError::Invalid(format!(
                "non-finite coordinate at frame {}",
                f % wrist.len()
            )));
        }
        Ok(Self {
            wrist,
            elbow,
            fps,
            handedness,
        })
    }

    /// Throwing-side wrist and elbow tracks of a pose sequence.
    pub fn from_sequence(seq: &PoseSequence, handedness: Handedness) -> Result<Self, KinematicsError> {
        let (w, e) = match handedness {
            Handedness::Right => (JointId::RWrist, JointId::RElbow),
            Handedness::Left => (JointId::LWrist, JointId::LElbow),
        };
        Self::new(required_track(seq, w)?, required_track(seq, e)?, seq.fps(), handedness)
    }

    pub fn wrist(&self) -> &[Point3] {
        &self.wrist
    }

    pub fn elbow(&self) -> &[Point3] {
        &self.elbow
    }

    pub fn fps(&self) -> f64 {
        self.fps
    }

    pub fn handedness(&self) -> Handedness {
        self.handedness
    }

    pub fn len(&self) -> usize {
        self.wrist.len()
    }

    pub fn is_empty(&self) -> bool {
        self.wrist.is_empty()
    }

    /// Wrist-elbow distance at every frame.
    pub fn forearm_lengths(&self) -> Vec<f64> {
        self.wrist
            .iter()
            .zip(&self.elbow)
            .map(|(w, e)| distance(*w, *e))
            .collect()
    }

    pub fn median_lever_arm(&self) -> f64 {
        let mut l = self.forearm_lengths();
        l.sort_by(f64::total_cmp);
        let m = l.len() / 2;
        if l.len() % 2 == 1 {
            l[m]
        } else {
            0.5 * (l[m - 1] + l[m])
        }
    }

    fn lever_at(&self, frame: usize, policy: LeverArm, median: f64) -> f64 {
        match policy {
            LeverArm::AtRelease => distance(self.wrist[frame], self.elbow[frame]),
            LeverArm::SequenceMedian => median,
        }
    }

    /// Elbow-relative wrist motion from `frame - 1` to `frame`.
    pub fn velocity_inputs(&self, frame: usize, policy: LeverArm) -> Result<VelocityInputs, KinematicsError> {
        if frame == 0 || frame >= self.len() {
            return Err(KinematicsError::Invalid(format!(
                "frame {frame} has no predecessor in {} frames",
                self.len()
            )));
        }
        let median = if policy == LeverArm::SequenceMedian {
            self.median_lever_arm()
        } else {
            0.0
        };
        Ok(self.inputs_unchecked(frame, policy, median))
    }

    fn inputs_unchecked(&self, frame: usize, policy: LeverArm, median: f64) -> VelocityInputs {
        let rel = |i: usize| [self.wrist[i][0] - self.elbow[i][0], self.wrist[i][1] - self.elbow[i][1]];
        VelocityInputs {
            wrist_prev: rel(frame - 1),
            wrist_at: rel(frame),
            fps: self.fps,
            lever_arm: self.lever_at(frame, policy, median),
        }
    }
}

fn required_track(seq: &PoseSequence, id: JointId) -> Result<Vec<Point3>, KinematicsError> {
    seq.track(id)
        .into_iter()
        .enumerate()
        .map(|(frame, p)| {
            p.ok_or(KinematicsError::MissingJoint {
                frame,
                joint: id.name(),
            })
        })
        .collect()
}

fn distance(a: Point3, b: Point3) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

/// Elbow-relative wrist positions (x, y) at two consecutive frames.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VelocityInputs {
    pub wrist_prev: [f64; 2],
    pub wrist_at: [f64; 2],
    pub fps: f64,
    pub lever_arm: f64,
}

/// Maps an angle difference into `(-pi, pi]`.
pub fn wrap_angle(d: f64) -> f64 {
    let w = d.rem_euclid(2.0 * PI);
    if w > PI {
        w - 2.0 * PI
    } else {
        w
    }
}

/// Linear wrist speed (m/s) from the per-frame angle swept about the elbow.
pub fn pitch_velocity(v: &VelocityInputs) -> Result<f64, KinematicsError> {
    if !(v.fps.is_finite() && v.fps > 0.0) {
        return Err(KinematicsError::Invalid(format!("fps must be positive, got {}", v.fps)));
    }
    if !(v.lever_arm.is_finite() && v.lever_arm > 0.0) {
        return Err(KinematicsError::Invalid(format!(
            "lever arm must be positive, got {}",
            v.lever_arm
        )));
    }
    if v.wrist_prev == [0.0, 0.0] {
        return Err(KinematicsError::UndefinedAngle(0));
    }
    if v.wrist_at == [0.0, 0.0] {
        return Err(KinematicsError::UndefinedAngle(1));
    }
    let a = v.wrist_at[1].atan2(v.wrist_at[0]);
    let b = v.wrist_prev[1].atan2(v.wrist_prev[0]);
    Ok(wrap_angle(a - b).abs() * v.fps * v.lever_arm)
}

/// Euclidean distance from the pivot-leg ankle to the wrist.
pub fn release_extension(wrist: Point3, ankle: Point3) -> f64 {
    distance(wrist, ankle)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReleaseEvent {
    /// Cocking-phase extreme (glove-side x extreme).
    pub frame_a: usize,
    /// Acceleration-end extreme (opposite x extreme).
    pub frame_b: usize,
    pub release_frame: usize,
    pub window_n: usize,
    /// Speed at the release frame (m/s).
    pub speed_mps: f64,
    /// `1 - runner_up / peak` over the window; 0 when the peak is not unique.
    pub peak_margin: f64,
    pub warnings: Vec<String>,
}

pub fn detect_release_event(traj: &WristTrajectory, window_n: usize) -> Result<ReleaseEvent, KinematicsError> {
    detect_release_event_with(traj, window_n, LeverArm::default())
}

pub fn detect_release_event_with(
    traj: &WristTrajectory,
    window_n: usize,
    lever: LeverArm,
) -> Result<ReleaseEvent, KinematicsError> {
    let n = traj.len();
    if window_n == 0 || window_n > n / 2 {
        return Err(KinematicsError::Invalid(format!(
            "window {window_n} must lie in [1, {}]",
            n / 2
        )));
    }
    // signed lateral coordinate: increases toward Point B for either hand
    let sign = match traj.handedness {
        Handedness::Right => 1.0,
        Handedness::Left => -1.0,
    };
    let s: Vec<f64> = traj.wrist.iter().map(|p| sign * p[0]).collect();
    let frame_b = tcn::argmax(&s);
    let frame_a = tcn::argmax(&s.iter().map(|v| -v).collect::<Vec<_>>());
    if s[frame_a] == s[frame_b] {
        return Err(KinematicsError::NoMotion);
    }
    for (name, f) in [("A", frame_a), ("B", frame_b)] {
        if f == 0 || f == n - 1 {
            return Err(KinematicsError::Degenerate(format!(
                "point {name} falls on boundary frame {f}; no interior extreme"
            )));
        }
    }
    let mut warnings = Vec::new();
    if frame_a > frame_b {
        warnings.push(format!("point A (frame {frame_a}) follows point B (frame {frame_b})"));
    }

    let median = traj.median_lever_arm();
    let lo = frame_b.saturating_sub(window_n).max(1);
    let hi = (frame_b + window_n).min(n - 1);
    let mut speeds = Vec::with_capacity(hi - lo + 1);
    for r in lo..=hi {
        speeds.push(pitch_velocity(&traj.inputs_unchecked(r, lever, median)).ok());
    }
    let scored: Vec<f64> = speeds.iter().map(|v| v.unwrap_or(f64::NEG_INFINITY)).collect();
    let best = tcn::argmax(&scored);
    let peak = speeds[best].ok_or(KinematicsError::UndefinedAngle(lo + best))?;
    let runner_up = scored
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != best)
        .map(|(_, v)| *v)
        .fold(0.0_f64, f64::max);
    let peak_margin = if peak > 0.0 {
        (1.0 - runner_up / peak).max(0.0)
    } else {
        0.0
    };
    Ok(ReleaseEvent {
        frame_a,
        frame_b,
        release_frame: lo + best,
        window_n,
        speed_mps: peak,
        peak_margin,
        warnings,
    })
}

/// One report value, or the reason it is missing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Field<T> {
    pub value: Option<T>,
    pub confidence: Option<f64>,
    pub error: Option<String>,
}

impl<T> Field<T> {
    pub fn ok(value: T, confidence: f64) -> Self {
        Self {
            value: Some(value),
            confidence: Some(confidence),
            error: None,
        }
    }

    pub fn err(error: impl Into<String>) -> Self {
        Self {
            value: None,
            confidence: None,
            error: Some(error.into()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PitchReport {
    pub tracklet_id: String,
    pub handedness: Field<Handedness>,
    pub pitch_position: Field<PitchPosition>,
    pub release_frame: Field<usize>,
    pub release_point_3d: Field<Point3>,
    pub pitch_velocity_mps: Field<f64>,
    pub pitch_velocity_mph: Field<f64>,
    pub release_extension_m: Field<f64>,
    pub frame_a: Option<usize>,
    pub frame_b: Option<usize>,
    pub window_n: usize,
    /// Full 3D wrist displacement speed into the release frame (m/s).
    pub aux_linear_speed_3d_mps: Option<f64>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalyzeConfig {
    pub window_n: usize,
    pub lever_arm: LeverArm,
    /// Skip the handedness model and use this throwing hand.
    pub handedness_override: Option<Handedness>,
}

impl Default for AnalyzeConfig {
    fn default() -> Self {
        Self {
            window_n: DEFAULT_WINDOW,
            lever_arm: LeverArm::default(),
            handedness_override: None,
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct PitchModels<'a> {
    pub handedness: Option<&'a TcnModel>,
    pub position: Option<&'a TcnModel>,
}

fn kinematic_failure(report: &mut PitchReport, reason: &str) {
    report.release_frame = Field::err(reason);
    report.release_point_3d = Field::err(reason);
    report.pitch_velocity_mps = Field::err(reason);
    report.pitch_velocity_mph = Field::err(reason);
    report.release_extension_m = Field::err(reason);
}

/// Full per-pitch analysis. Never fails as a whole: every field carries
/// either a value or an error code.
pub fn analyze_pitch(sequence: &PoseSequence, models: PitchModels<'_>, config: &AnalyzeConfig) -> PitchReport {
    let missing = "model_unavailable";
    let mut report = PitchReport {
        tracklet_id: sequence.tracklet_id().to_string(),
        handedness: Field::err(missing),
        pitch_position: Field::err(missing),
        release_frame: Field::err(missing),
        release_point_3d: Field::err(missing),
        pitch_velocity_mps: Field::err(missing),
        pitch_velocity_mph: Field::err(missing),
        release_extension_m: Field::err(missing),
        frame_a: None,
        frame_b: None,
        window_n: config.window_n,
        aux_linear_speed_3d_mps: None,
        warnings: Vec::new(),
    };

    report.handedness = match (config.handedness_override, models.handedness) {
        (Some(h), _) => Field::ok(h, 1.0),
        (None, Some(m)) => match tcn::classify_handedness(m, sequence) {
            Ok((h, c)) => Field::ok(h, c),
            Err(e) => Field::err(format!("classifier_error: {e}")),
        },
        (None, None) => Field::err(missing),
    };
    if let Some(m) = models.position {
        report.pitch_position = match tcn::classify_pitch_position(m, sequence) {
            Ok((p, c)) => Field::ok(p, c),
            Err(e) => Field::err(format!("classifier_error: {e}")),
        };
    }

    let Some(hand) = report.handedness.value else {
        kinematic_failure(&mut report, "handedness_unavailable");
        return report;
    };
    let event = WristTrajectory::from_sequence(sequence, hand)
        .and_then(|traj| detect_release_event_with(&traj, config.window_n, config.lever_arm).map(|ev| (traj, ev)));
    let (traj, ev) = match event {
        Ok(x) => x,
        Err(e) => {
            kinematic_failure(&mut report, e.code());
            report.warnings.push(e.to_string());
            return report;
        }
    };
    let r = ev.release_frame;
    let conf = ev.peak_margin;
    report.frame_a = Some(ev.frame_a);
    report.frame_b = Some(ev.frame_b);
    report.warnings.extend(ev.warnings.iter().cloned());
    report.release_frame = Field::ok(r, conf);
    let wrist = traj.wrist()[r];
    report.release_point_3d = Field::ok(wrist, conf);
    report.pitch_velocity_mps = Field::ok(ev.speed_mps, conf);
    report.pitch_velocity_mph = Field::ok(ev.speed_mps * MPS_TO_MPH, conf);
    report.aux_linear_speed_3d_mps = Some(distance(wrist, traj.wrist()[r - 1]) * traj.fps());

    let ankle_id = match hand {
        Handedness::Right => JointId::RAnkle,
        Handedness::Left => JointId::LAnkle,
    };
    report.release_extension_m = match sequence.frames()[r].get(ankle_id) {
        Some(ankle) => Field::ok(release_extension(wrist, ankle), conf),
        None => Field::err("missing_joint"),
    };
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    fn circle(n: usize, step: f64, l: f64) -> WristTrajectory {
        let elbow = vec![[0.2, 1.5, 0.1]; n];
        let wrist = (0..n)
            .map(|i| {
                let th = PI - step * i as f64;
                [0.2 + l * th.cos(), 1.5 + l * th.sin(), 0.1]
            })
            .collect();
        WristTrajectory::new(wrist, elbow, 30.0, Handedness::Right).unwrap()
    }

    #[test]
    fn closed_form_speed() {
        let l = 0.3;
        let v = VelocityInputs {
            wrist_prev: [l, 0.0],
            wrist_at: [l * 0.1_f64.cos(), l * 0.1_f64.sin()],
            fps: 30.0,
            lever_arm: l,
        };
        assert!((pitch_velocity(&v).unwrap() - 0.9).abs() < 1e-9);
        let still = VelocityInputs {
            wrist_at: v.wrist_prev,
            ..v
        };
        assert_eq!(pitch_velocity(&still).unwrap(), 0.0);
        let zero = VelocityInputs {
            wrist_at: [0.0, 0.0],
            ..v
        };
        assert_eq!(pitch_velocity(&zero), Err(KinematicsError::UndefinedAngle(1)));
    }

    #[test]
    fn wrap_range() {
        assert_eq!(wrap_angle(PI), PI);
        assert_eq!(wrap_angle(-PI), PI);
        assert!((wrap_angle(1.5 * PI) + 0.5 * PI).abs() < 1e-12);
        assert!((wrap_angle(-1.5 * PI) - 0.5 * PI).abs() < 1e-12);
    }

    #[test]
    fn pythagorean_extension() {
        assert!((release_extension([3.0, 4.0, 12.0], [0.0; 3]) - 13.0).abs() < 1e-12);
    }

    #[test]
    fn monotone_ramp_is_degenerate() {
        let traj = circle(20, 0.1, 0.3);
        assert!(matches!(
            detect_release_event(&traj, 3),
            Err(KinematicsError::Degenerate(_))
        ));
    }

    #[test]
    fn frozen_is_no_motion() {
        let t = WristTrajectory::new(
            vec![[0.5, 1.0, 0.0]; 10],
            vec![[0.2, 1.0, 0.0]; 10],
            30.0,
            Handedness::Right,
        )
        .unwrap();
        assert_eq!(detect_release_event(&t, 2), Err(KinematicsError::NoMotion));
    }

    #[test]
    fn window_bounds_checked() {
        let traj = circle(20, 0.1, 0.3);
        assert!(matches!(
            detect_release_event(&traj, 0),
            Err(KinematicsError::Invalid(_))
        ));
        assert!(matches!(
            detect_release_event(&traj, 11),
            Err(KinematicsError::Invalid(_))
        ));
    }
}
