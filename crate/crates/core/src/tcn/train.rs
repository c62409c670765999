use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{batch_input, predicted_class, Head, Task, TcnError, TcnModel};
use crate::nn::{self, FocalLossParams, Mode, OptimConfig, OptimState, ParamId, Tape, Tensor};
use crate::pose::{PoseBatch, PoseSequence};

/// Pre-tensorized labeled samples at a fixed window length.
#[derive(Debug, Clone)]
pub struct Dataset {
    inputs: Vec<f64>,
    masks: Vec<bool>,
    labels: Vec<usize>,
    channels: usize,
    seq_len: usize,
}

impl Dataset {
    pub fn new(sequences: &[PoseSequence], labels: &[usize], seq_len: usize) -> Result<Self, TcnError> {
        if sequences.len() != labels.len() {
            return Err(TcnError::Config(format!(
                "{} sequences but {} labels",
                sequences.len(),
                labels.len()
            )));
        }
        let batch = PoseBatch::new(sequences, seq_len)?;
        let (input, masks) = batch_input(&batch)?;
        let channels = input.shape()[1];
        Ok(Self {
            inputs: input.into_data(),
            masks,
            labels: labels.to_vec(),
            channels,
            seq_len,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn seq_len(&self) -> usize {
        self.seq_len
    }

    /// Per-class sample counts for `classes` classes.
    pub fn class_counts(&self, classes: usize) -> Vec<usize> {
        let mut counts = vec![0; classes];
        for &l in &self.labels {
            if l < classes {
                counts[l] += 1;
            }
        }
        counts
    }

    fn gather(&self, idx: &[usize]) -> Result<(Tensor, Vec<bool>, Vec<usize>), TcnError> {
        let stride = self.channels * self.seq_len;
        let mut data = Vec::with_capacity(idx.len() * stride);
        let mut mask = Vec::with_capacity(idx.len() * self.seq_len);
        let mut labels = Vec::with_capacity(idx.len());
        for &i in idx {
            data.extend_from_slice(&self.inputs[i * stride..(i + 1) * stride]);
            mask.extend_from_slice(&self.masks[i * self.seq_len..(i + 1) * self.seq_len]);
            labels.push(self.labels[i]);
        }
        Ok((
            Tensor::new(vec![idx.len(), self.channels, self.seq_len], data)?,
            mask,
            labels,
        ))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub loss: f64,
    pub accuracy: f64,
}

/// Learning rate used by [`TrainRun::for_dataset`]. AdamW at 1e-2 oscillates
/// and collapses within a few epochs on pose input; 1e-3 converges.
pub const DEFAULT_TRAIN_LR: f64 = 1e-3;

/// Training hyperparameters plus the per-epoch history.
#[derive(Debug, Clone)]
pub struct TrainRun {
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: OptimConfig,
    pub loss: FocalLossParams,
    /// Stop once eval-mode accuracy on the training set reaches this value
    /// at the end of an epoch.
    pub stop_at_accuracy: Option<f64>,
    pub history: Vec<EpochStats>,
}

impl TrainRun {
    /// AdamW at [`DEFAULT_TRAIN_LR`], batch 32, focal loss with `gamma = 2`
    /// and inverse class-frequency `alpha` derived from `data`.
    pub fn for_dataset(task: Task, data: &Dataset, epochs: usize) -> Result<Self, TcnError> {
        let counts = data.class_counts(task.num_classes());
        Ok(Self {
            epochs,
            batch_size: 32,
            optimizer: OptimConfig {
                lr: DEFAULT_TRAIN_LR,
                ..OptimConfig::adamw_default()
            },
            loss: FocalLossParams::inverse_frequency(&counts, 2.0)?,
            stop_at_accuracy: None,
            history: Vec::new(),
        })
    }

    pub fn with_loss(mut self, loss: FocalLossParams) -> Self {
        self.loss = loss;
        self
    }
}

fn loss_on_tape(
    tape: &mut Tape,
    head: Head,
    probs: nn::Var,
    labels: &[usize],
    params: &FocalLossParams,
) -> Result<nn::Var, TcnError> {
    let p = match head {
        Head::Role4 => probs,
        Head::Binary => tape.two_class(probs)?,
    };
    Ok(tape.focal_loss(p, labels, params)?)
}

/// Mini-batch training with focal loss. Appends one [`EpochStats`] per
/// completed epoch to `run.history`; accuracy is measured on the training
/// batches as they are seen.
pub fn train(model: &mut TcnModel, data: &Dataset, run: &mut TrainRun) -> Result<(), TcnError> {
    let cfg = model.config().clone();
    let classes = cfg.task.num_classes();
    if data.is_empty() {
        return Err(TcnError::Config("training dataset is empty".into()));
    }
    if data.seq_len != cfg.seq_len {
        return Err(TcnError::Config(format!(
            "dataset window {} does not match model window {}",
            data.seq_len, cfg.seq_len
        )));
    }
    if let Some(&bad) = data.labels.iter().find(|&&l| l >= classes) {
        return Err(TcnError::Config(format!(
            "label {bad} exceeds the {classes} classes of the {:?} head",
            cfg.task
        )));
    }
    if run.loss.alpha().len() != classes {
        return Err(TcnError::Config(format!(
            "focal alpha has {} entries for {classes} classes",
            run.loss.alpha().len()
        )));
    }
    if run.batch_size == 0 {
        return Err(TcnError::Config("batch size must be positive".into()));
    }
    if run.epochs == 0 {
        return Ok(());
    }

    let head = cfg.head();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x9E37_79B9_7F4A_7C15);
    let mut opt = OptimState::new(run.optimizer, model.params())?;
    let mut order: Vec<usize> = (0..data.len()).collect();
    let ids: Vec<ParamId> = (0..model.params().len()).map(ParamId).collect();

    for epoch in 0..run.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        for (bi, chunk) in order.chunks(run.batch_size).enumerate() {
            let (input, mask, labels) = data.gather(chunk)?;
            let mut tape = Tape::new();
            let probs = model.forward_tape(&mut tape, input, &mask, Mode::Train, &mut rng)?;
            let loss = loss_on_tape(&mut tape, head, probs, &labels, &run.loss)?;
            let loss_value = tape.value(loss).data()[0];
            let grads = nn::backward(&tape, loss)?;
            if !loss_value.is_finite() {
                return Err(TcnError::NonFiniteLoss {
                    epoch,
                    batch: bi,
                    max_grad: grads.max_abs(),
                });
            }
            let out = tape.value(probs);
            let width = out.shape()[1];
            correct += out
                .data()
                .chunks(width)
                .zip(&labels)
                .filter(|(row, &l)| predicted_class(head, row) == l)
                .count();
            loss_sum += loss_value * chunk.len() as f64;
            let grad_refs: Vec<&Tensor> = ids
                .iter()
                .map(|id| grads.get(*id).expect("every param has a grad"))
                .collect();
            nn::optim_step(model.params_mut(), &grad_refs, &mut opt)?;
        }
        let accuracy = correct as f64 / data.len() as f64;
        run.history.push(EpochStats {
            epoch,
            loss: loss_sum / data.len() as f64,
            accuracy,
        });
        if let Some(target) = run.stop_at_accuracy {
            if evaluate(model, data)?.accuracy >= target {
                break;
            }
        }
    }
    if model.params().iter().any(|p| !p.all_finite()) {
        return Err(TcnError::NonFiniteLoss {
            epoch: run.history.len(),
            batch: 0,
            max_grad: f64::NAN,
        });
    }
    Ok(())
}

/// Held-out evaluation in eval mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub accuracy: f64,
    /// `confusion[truth][predicted]`
    pub confusion: Vec<Vec<usize>>,
}

impl EvalSummary {
    /// Fraction of class `c` samples predicted as `c` (1.0 if none exist).
    pub fn recall(&self, c: usize) -> f64 {
        let row = &self.confusion[c];
        let total: usize = row.iter().sum();
        if total == 0 {
            1.0
        } else {
            row[c] as f64 / total as f64
        }
    }
}

pub fn evaluate(model: &TcnModel, data: &Dataset) -> Result<EvalSummary, TcnError> {
    let classes = model.config().task.num_classes();
    let head = model.config().head();
    let mut confusion = vec![vec![0usize; classes]; classes];
    let idx: Vec<usize> = (0..data.len()).collect();
    let mut correct = 0;
    for chunk in idx.chunks(64) {
        let (input, mask, labels) = data.gather(chunk)?;
        let out = model.predict_channels(input, &mask)?;
        let width = out.shape()[1];
        for (row, &l) in out.data().chunks(width).zip(&labels) {
            let p = predicted_class(head, row);
            if l < classes {
                confusion[l][p] += 1;
            }
            correct += usize::from(p == l);
        }
    }
    Ok(EvalSummary {
        accuracy: if data.is_empty() {
            0.0
        } else {
            correct as f64 / data.len() as f64
        },
        confusion,
    })
}
