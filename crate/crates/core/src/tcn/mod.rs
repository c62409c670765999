//! Five-block dilated temporal convolutional network with role (4-way
//! softmax) and binary (sigmoid) heads.
//!
//! Each block is `conv(dilation d_i) -> batchnorm -> ReLU -> dropout`, added
//! to a skip path (identity, or a 1x1 projection when the channel count
//! changes). The last block is averaged over time and fed to two fully
//! connected layers.

mod io;
mod train;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::labels::{ClassLabel, Handedness, PitchPosition, Role};
use crate::nn::{self, Mode, NnError, ParamId, RunningStats, Tape, Tensor, Var};
use crate::pose::{PoseBatch, PoseError, PoseSequence, NUM_COORDS, NUM_JOINTS};

pub use io::{load_model, read_model, save_model, write_model, MODEL_MAGIC, MODEL_VERSION};
pub use train::{evaluate, train, Dataset, EpochStats, EvalSummary, TrainRun, DEFAULT_TRAIN_LR};

pub const NUM_BLOCKS: usize = 5;

#[derive(Debug, Error)]
pub enum TcnError {
    #[error("config error: {0}")]
    Config(String),
    #[error("usage error: {0}")]
    Usage(String),
    #[error("model file error: {0}")]
    Load(String),
    #[error("non-finite loss at epoch {epoch}, batch {batch} (max |grad| {max_grad:e})")]
    NonFiniteLoss { epoch: usize, batch: usize, max_grad: f64 },
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Pose(#[from] PoseError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// What the classifier predicts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Role,
    Handedness,
    Position,
}

impl Task {
    pub fn head(self) -> Head {
        match self {
            Task::Role => Head::Role4,
            Task::Handedness | Task::Position => Head::Binary,
        }
    }

    pub fn num_classes(self) -> usize {
        match self {
            Task::Role => Role::ALL.len(),
            Task::Handedness => Handedness::ALL.len(),
            Task::Position => PitchPosition::ALL.len(),
        }
    }

    /// Epoch budgets per task: role 200, handedness 50, position 100.
    pub fn default_epochs(self) -> usize {
        match self {
            Task::Role => 200,
            Task::Handedness => 50,
            Task::Position => 100,
        }
    }
}

impl std::str::FromStr for Task {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "role" => Ok(Task::Role),
            "handedness" => Ok(Task::Handedness),
            "position" | "pitch-position" => Ok(Task::Position),
            _ => Err(format!("unknown task {s:?} (expected role, handedness or position)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Head {
    /// 4-way softmax over roles.
    Role4,
    /// Single sigmoid output: probability of class 1.
    Binary,
}

impl Head {
    pub fn outputs(self) -> usize {
        match self {
            Head::Role4 => 4,
            Head::Binary => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TcnConfig {
    pub task: Task,
    pub in_channels: usize,
    pub block_channels: Vec<usize>,
    pub kernel_size: usize,
    pub dilations: Vec<usize>,
    pub dropout: f64,
    pub hidden: usize,
    pub seq_len: usize,
    pub seed: u64,
}

impl TcnConfig {
    /// Dilations `1, 2, 4, 8, 16`, `k = 3`, widths `64, 64, 128, 128, 256`,
    /// dropout 0.2, 100-frame windows.
    pub fn new(task: Task) -> Self {
        Self {
            task,
            in_channels: NUM_JOINTS * NUM_COORDS,
            block_channels: vec![64, 64, 128, 128, 256],
            kernel_size: 3,
            dilations: vec![1, 2, 4, 8, 16],
            dropout: 0.2,
            hidden: 64,
            seq_len: 100,
            seed: 0,
        }
    }

    pub fn head(&self) -> Head {
        self.task.head()
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_channels(mut self, channels: &[usize], hidden: usize) -> Self {
        self.block_channels = channels.to_vec();
        self.hidden = hidden;
        self
    }

    /// Temporal span of the deepest block's kernel.
    pub fn deepest_span(&self) -> usize {
        self.dilations.last().map_or(1, |d| (self.kernel_size - 1) * d + 1)
    }

    /// Half-width of the receptive field of one output position.
    pub fn receptive_radius(&self) -> usize {
        self.dilations.iter().map(|d| (self.kernel_size - 1) / 2 * d).sum()
    }

    pub fn validate(&self) -> Result<(), TcnError> {
        let fail = |m: String| Err(TcnError::Config(m));
        if self.block_channels.len() != NUM_BLOCKS || self.dilations.len() != NUM_BLOCKS {
            return fail(format!(
                "expected {NUM_BLOCKS} blocks, got {} widths and {} dilations",
                self.block_channels.len(),
                self.dilations.len()
            ));
        }
        if self.dilations[0] == 0 || self.dilations.windows(2).any(|w| w[1] <= w[0]) {
            return fail(format!(
                "dilations must be positive and strictly increasing: {:?}",
                self.dilations
            ));
        }
        if self.kernel_size.is_multiple_of(2) {
            return fail(format!("kernel size {} must be odd", self.kernel_size));
        }
        if self.in_channels == 0 || self.hidden == 0 || self.block_channels.contains(&0) {
            return fail("channel widths must be positive".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return fail(format!("dropout {} outside [0, 1)", self.dropout));
        }
        if self.seq_len < self.deepest_span() {
            return fail(format!(
                "sequence length {} is shorter than the deepest block span {}",
                self.seq_len,
                self.deepest_span()
            ));
        }
        Ok(())
    }

    /// Parameter shapes in declaration order.
    pub fn param_shapes(&self) -> Vec<(String, Vec<usize>)> {
        let k = self.kernel_size;
        let mut out = Vec::new();
        let mut prev = self.in_channels;
        for (i, &c) in self.block_channels.iter().enumerate() {
            out.push((format!("block{i}.conv.weight"), vec![c, prev, k]));
            out.push((format!("block{i}.conv.bias"), vec![c]));
            out.push((format!("block{i}.bn.weight"), vec![c]));
            out.push((format!("block{i}.bn.bias"), vec![c]));
            if prev != c {
                out.push((format!("block{i}.skip.weight"), vec![c, prev, 1]));
                out.push((format!("block{i}.skip.bias"), vec![c]));
            }
            prev = c;
        }
        out.push(("fc1.weight".into(), vec![self.hidden, prev]));
        out.push(("fc1.bias".into(), vec![self.hidden]));
        out.push(("fc2.weight".into(), vec![self.head().outputs(), self.hidden]));
        out.push(("fc2.bias".into(), vec![self.head().outputs()]));
        out
    }
}

/// A configured network with its parameters and batch-norm buffers.
#[derive(Debug, Clone, PartialEq)]
pub struct TcnModel {
    config: TcnConfig,
    params: Vec<Tensor>,
    bn_stats: Vec<RunningStats>,
}

/// Indices into the parameter list for one block.
struct BlockParams {
    conv_w: usize,
    conv_b: usize,
    bn_g: usize,
    bn_b: usize,
    skip: Option<(usize, usize)>,
}

impl TcnModel {
    /// Seeded initialization: conv/linear weights and biases uniform in
    /// `+-1/sqrt(fan_in)`, batch-norm scale 1 and shift 0.
    pub fn new(config: TcnConfig) -> Result<Self, TcnError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let shapes = config.param_shapes();
        let mut params = Vec::with_capacity(shapes.len());
        let mut fan_in = 1;
        for (name, shape) in &shapes {
            let t = if name.ends_with("bn.weight") {
                Tensor::filled(shape, 1.0)
            } else if name.ends_with("bn.bias") {
                Tensor::zeros(shape)
            } else {
                if name.ends_with(".weight") {
                    fan_in = shape[1..].iter().product();
                }
                let bound = 1.0 / (fan_in as f64).sqrt();
                let dist = Uniform::new_inclusive(-bound, bound);
                let n: usize = shape.iter().product();
                Tensor::new(shape.clone(), (0..n).map(|_| dist.sample(&mut rng)).collect())?
            };
            params.push(t);
        }
        let bn_stats = config.block_channels.iter().map(|&c| RunningStats::new(c)).collect();
        Ok(Self {
            config,
            params,
            bn_stats,
        })
    }

    pub fn from_parts(config: TcnConfig, params: Vec<Tensor>, bn_stats: Vec<RunningStats>) -> Result<Self, TcnError> {
        config.validate()?;
        let shapes = config.param_shapes();
        if shapes.len() != params.len() {
            return Err(TcnError::Load(format!(
                "config implies {} parameter tensors, found {}",
                shapes.len(),
                params.len()
            )));
        }
        for ((name, shape), p) in shapes.iter().zip(&params) {
            if p.shape() != shape.as_slice() {
                return Err(TcnError::Load(format!(
                    "{name}: expected shape {shape:?}, found {:?}",
                    p.shape()
                )));
            }
        }
        if bn_stats.len() != NUM_BLOCKS
            || bn_stats
                .iter()
                .zip(&config.block_channels)
                .any(|(s, &c)| s.mean.len() != c || s.var.len() != c)
        {
            return Err(TcnError::Load("batch-norm buffers do not match block widths".into()));
        }
        Ok(Self {
            config,
            params,
            bn_stats,
        })
    }

    pub fn config(&self) -> &TcnConfig {
        &self.config
    }

    pub fn params(&self) -> &[Tensor] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Tensor] {
        &mut self.params
    }

    pub fn bn_stats(&self) -> &[RunningStats] {
        &self.bn_stats
    }

    pub fn num_parameters(&self) -> usize {
        self.params.iter().map(Tensor::len).sum()
    }

    fn layout(&self) -> (Vec<BlockParams>, usize) {
        let mut blocks = Vec::with_capacity(NUM_BLOCKS);
        let mut i = 0;
        let mut prev = self.config.in_channels;
        for &c in &self.config.block_channels {
            let skip = (prev != c).then_some((i + 4, i + 5));
            blocks.push(BlockParams {
                conv_w: i,
                conv_b: i + 1,
                bn_g: i + 2,
                bn_b: i + 3,
                skip,
            });
            i += if prev != c { 6 } else { 4 };
            prev = c;
        }
        (blocks, i)
    }

    /// Records the forward pass on `tape`. `input` is `B x (K*C) x N`,
    /// `pool_mask` is `B x N` (frames that enter the temporal average).
    /// Returns the head probabilities (`B x 4` or `B x 1`).
    pub fn forward_tape(
        &mut self,
        tape: &mut Tape,
        input: Tensor,
        pool_mask: &[bool],
        mode: Mode,
        rng: &mut ChaCha8Rng,
    ) -> Result<Var, TcnError> {
        let cfg = &self.config;
        input.expect_input(cfg)?;
        let vars: Vec<Var> = self
            .params
            .iter()
            .enumerate()
            .map(|(i, p)| tape.param(ParamId(i), p.clone()))
            .collect();
        let (blocks, fc) = self.layout();
        let dropout = cfg.dropout;
        let dilations = cfg.dilations.clone();
        let head = cfg.head();
        let mut h = tape.constant(input);
        for (bi, blk) in blocks.iter().enumerate() {
            let z = tape.conv1d(h, vars[blk.conv_w], vars[blk.conv_b], dilations[bi])?;
            let z = tape.batchnorm(
                z,
                vars[blk.bn_g],
                vars[blk.bn_b],
                &mut self.bn_stats[bi],
                mode,
                nn::BN_EPS,
            )?;
            let z = tape.relu(z)?;
            let z = tape.dropout(z, dropout, mode, rng)?;
            let skip = match blk.skip {
                Some((w, b)) => tape.conv1d(h, vars[w], vars[b], 1)?,
                None => h,
            };
            h = tape.add(z, skip)?;
        }
        let pooled = tape.masked_mean_time(h, pool_mask)?;
        let f1 = tape.linear(pooled, vars[fc], vars[fc + 1])?;
        let f1 = tape.relu(f1)?;
        let logits = tape.linear(f1, vars[fc + 2], vars[fc + 3])?;
        let probs = match head {
            Head::Role4 => tape.softmax(logits)?,
            Head::Binary => tape.sigmoid(logits)?,
        };
        Ok(probs)
    }

    /// Eval-mode probabilities for a raw `B x (K*C) x N` input.
    pub fn predict_channels(&self, input: Tensor, pool_mask: &[bool]) -> Result<Tensor, TcnError> {
        // eval mode reads but never writes the running statistics
        let mut scratch = self.clone();
        let mut tape = Tape::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let out = scratch.forward_tape(&mut tape, input, pool_mask, Mode::Eval, &mut rng)?;
        Ok(tape.value(out).clone())
    }

    /// Eval-mode probabilities for a batch of pose sequences.
    pub fn predict(&self, sequences: &[PoseSequence]) -> Result<Tensor, TcnError> {
        let batch = PoseBatch::new(sequences, self.config.seq_len)?;
        let (input, mask) = batch_input(&batch)?;
        self.predict_channels(input, &mask)
    }

    fn expect_task(&self, task: Task) -> Result<(), TcnError> {
        if self.config.task != task {
            return Err(TcnError::Usage(format!(
                "model was built for the {:?} task, not {:?}",
                self.config.task, task
            )));
        }
        Ok(())
    }
}

trait ExpectInput {
    fn expect_input(&self, cfg: &TcnConfig) -> Result<(), TcnError>;
}

impl ExpectInput for Tensor {
    fn expect_input(&self, cfg: &TcnConfig) -> Result<(), TcnError> {
        let s = self.shape();
        if s.len() != 3 || s[1] != cfg.in_channels || s[2] != cfg.seq_len {
            return Err(TcnError::Nn(NnError::Shape(format!(
                "model input must be B x {} x {}, got {s:?}",
                cfg.in_channels, cfg.seq_len
            ))));
        }
        Ok(())
    }
}

/// Converts a batch into model input and its flattened pooling mask.
pub fn batch_input(batch: &PoseBatch) -> Result<(Tensor, Vec<bool>), TcnError> {
    let input = Tensor::new(
        vec![batch.len(), NUM_JOINTS * NUM_COORDS, batch.seq_len()],
        batch.to_channels(),
    )?;
    let mask = batch.pad_mask().iter().flatten().copied().collect();
    Ok((input, mask))
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Class 1 iff `p > 0.5`; a tie falls to class 0.
pub fn binary_class(p: f64) -> usize {
    usize::from(p > 0.5)
}

/// Predicted class index for one row of head output.
pub fn predicted_class(head: Head, row: &[f64]) -> usize {
    match head {
        Head::Role4 => argmax(row),
        Head::Binary => binary_class(row[0]),
    }
}

fn classify_binary<L: ClassLabel>(model: &TcnModel, task: Task, sequence: &PoseSequence) -> Result<(L, f64), TcnError> {
    model.expect_task(task)?;
    let out = model.predict(std::slice::from_ref(sequence))?;
    let p = out.data()[0];
    let class = binary_class(p);
    let confidence = if class == 1 { p } else { 1.0 - p };
    Ok((L::from_index(class).expect("binary label"), confidence))
}

/// Role label (argmax, lowest index on ties) and the full distribution.
pub fn classify_role(model: &TcnModel, sequence: &PoseSequence) -> Result<(Role, [f64; 4]), TcnError> {
    model.expect_task(Task::Role)?;
    let out = model.predict(std::slice::from_ref(sequence))?;
    let mut dist = [0.0; 4];
    dist.copy_from_slice(&out.data()[..4]);
    Ok((Role::from_index(argmax(&dist)).expect("4 roles"), dist))
}

/// Handedness with the confidence of the chosen class; ties go to right.
pub fn classify_handedness(model: &TcnModel, sequence: &PoseSequence) -> Result<(Handedness, f64), TcnError> {
    classify_binary(model, Task::Handedness, sequence)
}

/// Windup or stretch on the model's fixed window (pad or center-crop).
pub fn classify_pitch_position(model: &TcnModel, sequence: &PoseSequence) -> Result<(PitchPosition, f64), TcnError> {
    classify_binary(model, Task::Position, sequence)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn small_config(task: Task) -> TcnConfig {
        TcnConfig::new(task).with_channels(&[6, 6, 8, 8, 10], 5)
    }

    #[test]
    fn config_validation() {
        assert!(TcnConfig::new(Task::Role).validate().is_ok());
        let mut c = TcnConfig::new(Task::Role);
        c.dilations = vec![1, 2, 2, 8, 16];
        assert!(c.validate().is_err());
        let mut c = TcnConfig::new(Task::Role);
        c.kernel_size = 4;
        assert!(c.validate().is_err());
        let mut c = TcnConfig::new(Task::Role);
        c.block_channels.pop();
        assert!(c.validate().is_err());
        let mut c = TcnConfig::new(Task::Role);
        c.seq_len = 32; // deepest span is 2 * 16 + 1 = 33
        assert!(matches!(TcnModel::new(c), Err(TcnError::Config(_))));
    }

    #[test]
    fn init_is_seeded() {
        let a = TcnModel::new(small_config(Task::Role).with_seed(3)).unwrap();
        let b = TcnModel::new(small_config(Task::Role).with_seed(3)).unwrap();
        let c = TcnModel::new(small_config(Task::Role).with_seed(4)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.params(), c.params());
    }

    #[test]
    fn argmax_ties_lowest() {
        assert_eq!(argmax(&[0.25, 0.25, 0.25, 0.25]), 0);
        assert_eq!(argmax(&[0.1, 0.4, 0.4, 0.1]), 1);
        assert_eq!(binary_class(0.5), 0);
        assert_eq!(binary_class(0.5000001), 1);
    }

    #[test]
    fn head_mismatch_is_usage_error() {
        let m = TcnModel::new(small_config(Task::Position)).unwrap();
        let seq = PoseSequence::new(
            "s",
            30.0,
            vec![crate::pose::PoseFrame::all_valid([[0.1; 3]; NUM_JOINTS]).unwrap(); 40],
        )
        .unwrap();
        assert!(matches!(classify_role(&m, &seq), Err(TcnError::Usage(_))));
        assert!(matches!(classify_handedness(&m, &seq), Err(TcnError::Usage(_))));
        assert!(classify_pitch_position(&m, &seq).is_ok());
    }

    #[test]
    fn wrong_input_shape_rejected() {
        let m = TcnModel::new(small_config(Task::Role)).unwrap();
        let bad = Tensor::zeros(&[1, 50, 100]);
        assert!(m.predict_channels(bad, &[true; 100]).is_err());
    }
}
