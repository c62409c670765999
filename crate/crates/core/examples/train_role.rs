//! Trains the four-way role classifier on synthetic tracklets and reports
//! held-out accuracy. Pass an epoch cap as the first argument (default 10).

use pitchkin::labels::ClassLabel;
use pitchkin::synth::{generate_role_dataset, SynthSample};
use pitchkin::tcn::{evaluate, train, Dataset, Task, TcnConfig, TcnModel, TrainRun};

fn dataset(samples: &[SynthSample]) -> Dataset {
    let seqs: Vec<_> = samples.iter().map(|s| s.sequence.clone()).collect();
    let labels: Vec<_> = samples.iter().map(|s| s.truth.role.index()).collect();
    Dataset::new(&seqs, &labels, 100).unwrap()
}

fn main() {
    let epochs = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(10);
    let train_set = dataset(&generate_role_dataset(100, 1).unwrap());
    let test_set = dataset(&generate_role_dataset(25, 2).unwrap());
    let mut model = TcnModel::new(TcnConfig::new(Task::Role).with_seed(3)).unwrap();
    println!("{} parameters", model.num_parameters());
    let mut run = TrainRun::for_dataset(Task::Role, &train_set, epochs).unwrap();
    run.stop_at_accuracy = Some(1.0);
    train(&mut model, &train_set, &mut run).unwrap();
    for h in &run.history {
        println!("epoch {:>3}  loss {:.4}  accuracy {:.3}", h.epoch, h.loss, h.accuracy);
    }
    let ev = evaluate(&model, &test_set).unwrap();
    println!("held-out accuracy {:.3}", ev.accuracy);
    println!("confusion (truth rows): {:?}", ev.confusion);
}
