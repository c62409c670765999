//! Focal loss versus cross-entropy on a 9:1 right/left pitch set.

use pitchkin::labels::{ClassLabel, Handedness};
use pitchkin::nn::FocalLossParams;
use pitchkin::synth::{generate_pitch_set, PitchSetConfig};
use pitchkin::tcn::{evaluate, train, Dataset, Task, TcnConfig, TcnModel, TrainRun};

fn pitches(count: usize, left: f64, seed: u64) -> Dataset {
    let mut cfg = PitchSetConfig::new(count, seed);
    cfg.left_fraction = left;
    let set = generate_pitch_set(&cfg).unwrap();
    let seqs: Vec<_> = set.iter().map(|p| p.sequence.clone()).collect();
    let labels: Vec<_> = set.iter().map(|p| p.truth.handedness.unwrap().index()).collect();
    Dataset::new(&seqs, &labels, 100).unwrap()
}

fn main() {
    let train_set = pitches(200, 0.1, 1);
    let test_set = pitches(100, 0.5, 2);
    let counts = train_set.class_counts(2);
    let losses = [
        ("focal", FocalLossParams::inverse_frequency(&counts, 2.0).unwrap()),
        ("cross-entropy", FocalLossParams::uniform(2, 0.0).unwrap()),
    ];
    for (name, loss) in losses {
        let mut model = TcnModel::new(TcnConfig::new(Task::Handedness).with_seed(5)).unwrap();
        let mut run = TrainRun::for_dataset(Task::Handedness, &train_set, 8)
            .unwrap()
            .with_loss(loss);
        train(&mut model, &train_set, &mut run).unwrap();
        let ev = evaluate(&model, &test_set).unwrap();
        println!(
            "{name:>13}: accuracy {:.3}, left recall {:.3}, right recall {:.3}",
            ev.accuracy,
            ev.recall(Handedness::Left.index()),
            ev.recall(Handedness::Right.index())
        );
    }
}
