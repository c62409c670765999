//! Pose data model, tracklet JSONL ingestion and the joint-fusion operator.
//!
//! Coordinates are meters: `x` lateral (toward the plate for a right-handed
//! delivery), `y` up, `z` toward the camera. Joints follow the 17-joint
//! Human3.6M ordering.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

/// Number of joints per frame.
pub const NUM_JOINTS: usize = 17;
/// Coordinates per joint.
pub const NUM_COORDS: usize = 3;

pub const FORMAT_NAME: &str = "pose-tracklet";
pub const FORMAT_VERSION: u64 = 1;

pub type Point3 = [f64; 3];

#[derive(Debug, Error)]
pub enum PoseError {
    #[error("line {line}: parse error: {msg}")]
    Parse { line: usize, msg: String },
    #[error("{}non-finite coordinate at frame {frame}, joint {joint}", line_prefix(*.line))]
    NonFinite {
        line: Option<usize>,
        frame: usize,
        joint: &'static str,
    },
    #[error("{}validation error: {msg}", line_prefix(*.line))]
    Validation { line: Option<usize>, msg: String },
    #[error("{}schema error: {msg}", line_prefix(*.line))]
    Schema { line: Option<usize>, msg: String },
    #[error("shape error: {0}")]
    Shape(String),
    #[error("fusion input invalid: {0}")]
    Fusion(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn line_prefix(line: Option<usize>) -> String {
    line.map(|l| format!("line {l}: ")).unwrap_or_default()
}

impl PoseError {
    fn at_line(self, line: usize) -> Self {
        match self {
            PoseError::NonFinite { frame, joint, .. } => PoseError::NonFinite {
                line: Some(line),
                frame,
                joint,
            },
            PoseError::Validation { msg, .. } => PoseError::Validation { line: Some(line), msg },
            PoseError::Schema { msg, .. } => PoseError::Schema { line: Some(line), msg },
            other => other,
        }
    }
}

/// Canonical joint identifiers in Human3.6M order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum JointId {
    Pelvis,
    RHip,
    RKnee,
    RAnkle,
    LHip,
    LKnee,
    LAnkle,
    Spine,
    Thorax,
    Neck,
    Head,
    LShoulder,
    LElbow,
    LWrist,
    RShoulder,
    RElbow,
    RWrist,
}

const JOINT_NAMES: [&str; NUM_JOINTS] = [
    "pelvis",
    "r_hip",
    "r_knee",
    "r_ankle",
    "l_hip",
    "l_knee",
    "l_ankle",
    "spine",
    "thorax",
    "neck",
    "head",
    "l_shoulder",
    "l_elbow",
    "l_wrist",
    "r_shoulder",
    "r_elbow",
    "r_wrist",
];

impl JointId {
    pub const ALL: [JointId; NUM_JOINTS] = [
        JointId::Pelvis,
        JointId::RHip,
        JointId::RKnee,
        JointId::RAnkle,
        JointId::LHip,
        JointId::LKnee,
        JointId::LAnkle,
        JointId::Spine,
        JointId::Thorax,
        JointId::Neck,
        JointId::Head,
        JointId::LShoulder,
        JointId::LElbow,
        JointId::LWrist,
        JointId::RShoulder,
        JointId::RElbow,
        JointId::RWrist,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        JOINT_NAMES[self.index()]
    }

    pub fn from_index(index: usize) -> Option<JointId> {
        Self::ALL.get(index).copied()
    }

    pub fn from_name(name: &str) -> Option<JointId> {
        JOINT_NAMES.iter().position(|n| *n == name).map(|i| Self::ALL[i])
    }

    /// The same joint on the opposite body side; midline joints map to themselves.
    pub fn mirrored(self) -> JointId {
        use JointId::*;
        match self {
            RHip => LHip,
            RKnee => LKnee,
            RAnkle => LAnkle,
            LHip => RHip,
            LKnee => RKnee,
            LAnkle => RAnkle,
            LShoulder => RShoulder,
            LElbow => RElbow,
            LWrist => RWrist,
            RShoulder => LShoulder,
            RElbow => LElbow,
            RWrist => LWrist,
            other => other,
        }
    }

    pub fn names() -> &'static [&'static str; NUM_JOINTS] {
        &JOINT_NAMES
    }
}

/// One frame of joint coordinates with a per-joint validity mask.
#[derive(Debug, Clone, PartialEq)]
pub struct PoseFrame {
    joints: [Point3; NUM_JOINTS],
    valid: [bool; NUM_JOINTS],
}

impl PoseFrame {
    /// Every coordinate must be finite, including those of masked joints.
    pub fn new(joints: [Point3; NUM_JOINTS], valid: [bool; NUM_JOINTS]) -> Result<Self, PoseError> {
        for (k, p) in joints.iter().enumerate() {
            if p.iter().any(|c| !c.is_finite()) {
                return Err(PoseError::NonFinite {
                    line: None,
                    frame: 0,
                    joint: JOINT_NAMES[k],
                });
            }
        }
        Ok(Self { joints, valid })
    }

    pub fn all_valid(joints: [Point3; NUM_JOINTS]) -> Result<Self, PoseError> {
        Self::new(joints, [true; NUM_JOINTS])
    }

    /// A frame with every joint masked out, used for padding.
    pub fn empty() -> Self {
        Self {
            joints: [[0.0; 3]; NUM_JOINTS],
            valid: [false; NUM_JOINTS],
        }
    }

    pub fn joints(&self) -> &[Point3; NUM_JOINTS] {
        &self.joints
    }

    pub fn valid_mask(&self) -> &[bool; NUM_JOINTS] {
        &self.valid
    }

    pub fn joint(&self, id: JointId) -> Point3 {
        self.joints[id.index()]
    }

    pub fn is_valid(&self, id: JointId) -> bool {
        self.valid[id.index()]
    }

    /// The joint position, or `None` when masked out.
    pub fn get(&self, id: JointId) -> Option<Point3> {
        self.is_valid(id).then(|| self.joint(id))
    }

    fn mirror_x(&self) -> PoseFrame {
        let mut joints = [[0.0; 3]; NUM_JOINTS];
        let mut valid = [false; NUM_JOINTS];
        for id in JointId::ALL {
            let src = id.mirrored().index();
            let p = self.joints[src];
            joints[id.index()] = [-p[0], p[1], p[2]];
            valid[id.index()] = self.valid[src];
        }
        PoseFrame { joints, valid }
    }
}

/// A validated tracklet: `N >= 1` frames sampled at a uniform `fps`.
#[derive(Debug, Clone, PartialEq)]
pub struct PoseSequence {
    tracklet_id: String,
    fps: f64,
    frames: Vec<PoseFrame>,
}

impl PoseSequence {
    pub fn new(tracklet_id: impl Into<String>, fps: f64, frames: Vec<PoseFrame>) -> Result<Self, PoseError> {
        if !(fps.is_finite() && fps > 0.0) {
            return Err(PoseError::Validation {
                line: None,
                msg: format!("fps must be finite and positive, got {fps}"),
            });
        }
        if frames.is_empty() {
            return Err(PoseError::Validation {
                line: None,
                msg: "sequence has no frames".into(),
            });
        }
        Ok(Self {
            tracklet_id: tracklet_id.into(),
            fps,
            frames,
        })
    }

    pub fn tracklet_id(&self) -> &str {
        &self.tracklet_id
    }

    pub fn fps(&self) -> f64 {
        self.fps
    }

    pub fn frames(&self) -> &[PoseFrame] {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Positions of one joint over time; masked frames yield `None`.
    pub fn track(&self, id: JointId) -> Vec<Option<Point3>> {
        self.frames.iter().map(|f| f.get(id)).collect()
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.tracklet_id = id.into();
        self
    }

    /// Reflects the body through the `x = 0` plane, swapping left and right
    /// joint labels so the result is an anatomically consistent skeleton.
    pub fn mirror_x(&self) -> PoseSequence {
        PoseSequence {
            tracklet_id: self.tracklet_id.clone(),
            fps: self.fps,
            frames: self.frames.iter().map(PoseFrame::mirror_x).collect(),
        }
    }

    /// Fits the sequence to exactly `len` frames: zero-pads at the end or
    /// center-crops. Returns the frames and a mask of real (non-pad) frames.
    pub fn fit_length(&self, len: usize) -> (Vec<PoseFrame>, Vec<bool>) {
        let n = self.frames.len();
        if n >= len {
            let start = (n - len) / 2;
            (self.frames[start..start + len].to_vec(), vec![true; len])
        } else {
            let mut frames = self.frames.clone();
            frames.resize(len, PoseFrame::empty());
            let mut mask = vec![true; n];
            mask.resize(len, false);
            (frames, mask)
        }
    }
}

/// Sequences padded or cropped to a common length.
#[derive(Debug, Clone)]
pub struct PoseBatch {
    sequences: Vec<PoseSequence>,
    pad_mask: Vec<Vec<bool>>,
    seq_len: usize,
}

impl PoseBatch {
    pub fn new(sequences: &[PoseSequence], seq_len: usize) -> Result<Self, PoseError> {
        if seq_len == 0 {
            return Err(PoseError::Shape("batch sequence length must be positive".into()));
        }
        let mut fitted = Vec::with_capacity(sequences.len());
        let mut pad_mask = Vec::with_capacity(sequences.len());
        for s in sequences {
            let (frames, mask) = s.fit_length(seq_len);
            fitted.push(PoseSequence {
                tracklet_id: s.tracklet_id.clone(),
                fps: s.fps,
                frames,
            });
            pad_mask.push(mask);
        }
        Ok(Self {
            sequences: fitted,
            pad_mask,
            seq_len,
        })
    }

    pub fn sequences(&self) -> &[PoseSequence] {
        &self.sequences
    }

    pub fn pad_mask(&self) -> &[Vec<bool>] {
        &self.pad_mask
    }

    pub fn seq_len(&self) -> usize {
        self.seq_len
    }

    pub fn len(&self) -> usize {
        self.sequences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sequences.is_empty()
    }

    /// Channel-major model input `B x (K*C) x N`; masked joints are zero.
    /// Channel `k*3 + c` carries coordinate `c` of joint `k`.
    pub fn to_channels(&self) -> Vec<f64> {
        let n = self.seq_len;
        let ch = NUM_JOINTS * NUM_COORDS;
        let mut out = vec![0.0; self.sequences.len() * ch * n];
        for (b, s) in self.sequences.iter().enumerate() {
            for (t, f) in s.frames.iter().enumerate() {
                for k in 0..NUM_JOINTS {
                    if !f.valid[k] {
                        continue;
                    }
                    for c in 0..NUM_COORDS {
                        out[(b * ch + k * NUM_COORDS + c) * n + t] = f.joints[k][c];
                    }
                }
            }
        }
        out
    }
}

// ---------------------------------------------------------------------------
// Joint fusion

/// Direct joints, mesh vertices and the vertex-to-joint regressor.
#[derive(Debug, Clone)]
pub struct FusionInputs {
    pub j3d: Vec<Point3>,
    pub vertices: Vec<Point3>,
    /// Row-major `K x M`.
    pub regressor: Vec<Vec<f64>>,
    pub w1: f64,
    pub w2: f64,
}

pub const DEFAULT_FUSION_WEIGHTS: (f64, f64) = (0.5, 0.5);

impl FusionInputs {
    pub fn new(j3d: Vec<Point3>, vertices: Vec<Point3>, regressor: Vec<Vec<f64>>) -> Self {
        let (w1, w2) = DEFAULT_FUSION_WEIGHTS;
        Self {
            j3d,
            vertices,
            regressor,
            w1,
            w2,
        }
    }

    pub fn with_weights(mut self, w1: f64, w2: f64) -> Self {
        self.w1 = w1;
        self.w2 = w2;
        self
    }

    fn validate(&self) -> Result<(), PoseError> {
        let k = self.j3d.len();
        let m = self.vertices.len();
        if self.regressor.len() != k {
            return Err(PoseError::Shape(format!(
                "regressor has {} rows, expected K = {k}",
                self.regressor.len()
            )));
        }
        for (r, row) in self.regressor.iter().enumerate() {
            if row.len() != m {
                return Err(PoseError::Shape(format!(
                    "regressor row {r} has {} columns, expected M = {m}",
                    row.len()
                )));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > 1e-6 {
                return Err(PoseError::Fusion(format!("regressor row {r} sums to {sum}, not 1")));
            }
        }
        if !(self.w1 >= 0.0 && self.w2 >= 0.0 && self.w1.is_finite() && self.w2.is_finite()) {
            return Err(PoseError::Fusion(format!(
                "fusion weights must be finite and non-negative, got ({}, {})",
                self.w1, self.w2
            )));
        }
        let finite = |ps: &[Point3]| ps.iter().flatten().all(|c| c.is_finite());
        if !finite(&self.j3d) || !finite(&self.vertices) {
            return Err(PoseError::Fusion("non-finite joint or vertex coordinate".into()));
        }
        Ok(())
    }
}

/// Regressed joints `G * V`.
pub fn regress_joints(regressor: &[Vec<f64>], vertices: &[Point3]) -> Vec<Point3> {
    regressor
        .iter()
        .map(|row| {
            let mut acc = [0.0; 3];
            for (w, v) in row.iter().zip(vertices) {
                for c in 0..3 {
                    acc[c] += w * v[c];
                }
            }
            acc
        })
        .collect()
}

/// `w1 * J3D + w2 * (G * V3D)`.
pub fn fuse_joints(inputs: &FusionInputs) -> Result<Vec<Point3>, PoseError> {
    inputs.validate()?;
    let regressed = regress_joints(&inputs.regressor, &inputs.vertices);
    let fused: Vec<Point3> = inputs
        .j3d
        .iter()
        .zip(&regressed)
        .map(|(j, r)| std::array::from_fn(|c| inputs.w1 * j[c] + inputs.w2 * r[c]))
        .collect();
    if fused.iter().flatten().any(|c| !c.is_finite()) {
        return Err(PoseError::Fusion("fused joints overflowed".into()));
    }
    Ok(fused)
}

#[derive(Debug, Serialize, Deserialize)]
struct RegressorFile {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

/// Reads a `K x M` joint regressor stored as `{"rows", "cols", "data"}` JSON.
pub fn load_regressor(path: impl AsRef<Path>) -> Result<Vec<Vec<f64>>, PoseError> {
    let text = std::fs::read_to_string(path)?;
    let file: RegressorFile = serde_json::from_str(&text).map_err(|e| PoseError::Parse {
        line: e.line(),
        msg: e.to_string(),
    })?;
    if file.data.len() != file.rows * file.cols {
        return Err(PoseError::Shape(format!(
            "regressor data has {} entries, expected {} x {}",
            file.data.len(),
            file.rows,
            file.cols
        )));
    }
    Ok(file.data.chunks(file.cols.max(1)).map(<[f64]>::to_vec).collect())
}

// ---------------------------------------------------------------------------
// Tracklet JSONL

#[derive(Serialize, Deserialize)]
struct Header {
    format: String,
    version: u64,
}

#[derive(Serialize)]
struct RecordOut<'a> {
    tracklet_id: &'a str,
    fps: f64,
    joint_names: &'a [&'a str],
    frames: Vec<&'a [Point3; NUM_JOINTS]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    valid_mask: Option<Vec<&'a [bool; NUM_JOINTS]>>,
}

/// Writes the header line followed by one record per sequence.
pub fn save_tracklets(sequences: &[PoseSequence], path: impl AsRef<Path>) -> Result<(), PoseError> {
    let mut w = BufWriter::new(File::create(path)?);
    write_tracklets(sequences, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn write_tracklets<W: Write>(sequences: &[PoseSequence], w: &mut W) -> Result<(), PoseError> {
    let header = Header {
        format: FORMAT_NAME.into(),
        version: FORMAT_VERSION,
    };
    writeln!(w, "{}", serde_json::to_string(&header).expect("header serializes"))?;
    for s in sequences {
        let any_masked = s.frames.iter().any(|f| f.valid.iter().any(|v| !v));
        let rec = RecordOut {
            tracklet_id: &s.tracklet_id,
            fps: s.fps,
            joint_names: &JOINT_NAMES,
            frames: s.frames.iter().map(|f| &f.joints).collect(),
            valid_mask: any_masked.then(|| s.frames.iter().map(|f| &f.valid).collect()),
        };
        let line = serde_json::to_string(&rec).map_err(|e| PoseError::Validation {
            line: None,
            msg: e.to_string(),
        })?;
        writeln!(w, "{line}")?;
    }
    Ok(())
}

/// Loads every record; the first malformed record aborts with its line number.
pub fn load_tracklets(path: impl AsRef<Path>) -> Result<Vec<PoseSequence>, PoseError> {
    read_tracklets_lenient(BufReader::new(File::open(path)?))?
        .into_iter()
        .collect()
}

/// Parses a stream, returning per-record results so callers can skip bad
/// records. A missing or wrong header is still a hard error.
pub fn read_tracklets_lenient<R: BufRead>(reader: R) -> Result<Vec<Result<PoseSequence, PoseError>>, PoseError> {
    let mut out = Vec::new();
    let mut saw_header = false;
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        if !saw_header {
            let h: Header = serde_json::from_str(&line).map_err(|e| PoseError::Parse {
                line: line_no,
                msg: format!("expected format header: {e}"),
            })?;
            if h.format != FORMAT_NAME || h.version != FORMAT_VERSION {
                return Err(PoseError::Schema {
                    line: Some(line_no),
                    msg: format!(
                        "unsupported format {:?} version {} (expected {FORMAT_NAME:?} version {FORMAT_VERSION})",
                        h.format, h.version
                    ),
                });
            }
            saw_header = true;
            continue;
        }
        out.push(parse_record(&line).map_err(|e| match e {
            PoseError::Parse { msg, .. } => PoseError::Parse { line: line_no, msg },
            other => other.at_line(line_no),
        }));
    }
    if !saw_header {
        // An entirely empty file is treated as an empty tracklet set.
        return Ok(Vec::new());
    }
    Ok(out)
}

/// Replaces bare `NaN` / `Infinity` tokens (outside string literals) with
/// `null` so the offending coordinate can be reported by joint.
fn neutralize_nonfinite_tokens(line: &str) -> String {
    let mut out = String::with_capacity(line.len());
    let mut in_str = false;
    let mut escaped = false;
    let mut rest = line;
    while let Some(ch) = rest.chars().next() {
        if in_str {
            out.push(ch);
            if escaped {
                escaped = false;
            } else if ch == '\\' {
                escaped = true;
            } else if ch == '"' {
                in_str = false;
            }
            rest = &rest[ch.len_utf8()..];
            continue;
        }
        if ch == '"' {
            in_str = true;
        } else {
            let mut matched = false;
            for tok in ["-Infinity", "Infinity", "NaN"] {
                if rest.starts_with(tok) {
                    out.push_str("null");
                    rest = &rest[tok.len()..];
                    matched = true;
                    break;
                }
            }
            if matched {
                continue;
            }
        }
        out.push(ch);
        rest = &rest[ch.len_utf8()..];
    }
    out
}

fn schema(msg: impl Into<String>) -> PoseError {
    PoseError::Schema {
        line: None,
        msg: msg.into(),
    }
}

fn parse_record(line: &str) -> Result<PoseSequence, PoseError> {
    let value: Value = match serde_json::from_str(line) {
        Ok(v) => v,
        Err(_) => serde_json::from_str(&neutralize_nonfinite_tokens(line)).map_err(|e| PoseError::Parse {
            line: 0,
            msg: e.to_string(),
        })?,
    };
    let obj = value.as_object().ok_or_else(|| PoseError::Parse {
        line: 0,
        msg: "record is not a JSON object".into(),
    })?;

    let tracklet_id = obj
        .get("tracklet_id")
        .and_then(Value::as_str)
        .ok_or_else(|| schema("missing string field \"tracklet_id\""))?;
    let fps = match obj.get("fps") {
        Some(Value::Number(n)) => n.as_f64().unwrap_or(f64::NAN),
        Some(_) => {
            return Err(PoseError::Validation {
                line: None,
                msg: "\"fps\" must be a single number (uniform frame spacing)".into(),
            })
        }
        None => return Err(schema("missing field \"fps\"")),
    };

    let names = obj
        .get("joint_names")
        .and_then(Value::as_array)
        .ok_or_else(|| schema("missing array field \"joint_names\""))?;
    if names.len() != NUM_JOINTS {
        return Err(schema(format!(
            "expected {NUM_JOINTS} joint names, got {}",
            names.len()
        )));
    }
    // canonical index for each column of the record
    let mut order = Vec::with_capacity(NUM_JOINTS);
    let mut seen = [false; NUM_JOINTS];
    for n in names {
        let name = n.as_str().ok_or_else(|| schema("joint names must be strings"))?;
        let id = JointId::from_name(name).ok_or_else(|| schema(format!("unknown joint name {name:?}")))?;
        if std::mem::replace(&mut seen[id.index()], true) {
            return Err(schema(format!("duplicate joint name {name:?}")));
        }
        order.push(id.index());
    }

    let frames_v = obj
        .get("frames")
        .and_then(Value::as_array)
        .ok_or_else(|| schema("missing array field \"frames\""))?;
    let masks_v = match obj.get("valid_mask") {
        None | Some(Value::Null) => None,
        Some(Value::Array(a)) => {
            if a.len() != frames_v.len() {
                return Err(schema(format!(
                    "valid_mask has {} rows for {} frames",
                    a.len(),
                    frames_v.len()
                )));
            }
            Some(a)
        }
        Some(_) => return Err(schema("\"valid_mask\" must be an array")),
    };

    let mut frames = Vec::with_capacity(frames_v.len());
    for (t, fv) in frames_v.iter().enumerate() {
        let joints_v = fv
            .as_array()
            .ok_or_else(|| schema(format!("frame {t} is not an array")))?;
        if joints_v.len() != NUM_JOINTS {
            return Err(schema(format!(
                "frame {t} has {} joints, expected {NUM_JOINTS}",
                joints_v.len()
            )));
        }
        let mut joints = [[0.0; 3]; NUM_JOINTS];
        for (col, jv) in joints_v.iter().enumerate() {
            let canon = order[col];
            let coords = jv
                .as_array()
                .filter(|a| a.len() == NUM_COORDS)
                .ok_or_else(|| schema(format!("frame {t}, joint {}: expected [x, y, z]", JOINT_NAMES[canon])))?;
            for (c, cv) in coords.iter().enumerate() {
                match cv.as_f64() {
                    Some(x) if x.is_finite() => joints[canon][c] = x,
                    _ => {
                        return Err(PoseError::NonFinite {
                            line: None,
                            frame: t,
                            joint: JOINT_NAMES[canon],
                        })
                    }
                }
            }
        }
        let mut valid = [true; NUM_JOINTS];
        if let Some(masks) = masks_v {
            let row = masks[t]
                .as_array()
                .filter(|a| a.len() == NUM_JOINTS)
                .ok_or_else(|| schema(format!("valid_mask row {t} must hold {NUM_JOINTS} booleans")))?;
            for (col, b) in row.iter().enumerate() {
                valid[order[col]] = b
                    .as_bool()
                    .ok_or_else(|| schema(format!("valid_mask row {t} must hold booleans")))?;
            }
        }
        frames.push(PoseFrame { joints, valid });
    }
    PoseSequence::new(tracklet_id, fps, frames)
}
