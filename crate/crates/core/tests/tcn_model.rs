mod common;

use common::gradients::tiny_config;
use common::{rand_tensor, rng};
use pitchkin::labels::{ClassLabel, Role};
use pitchkin::synth::generate_role_dataset;
use pitchkin::tcn::{self, evaluate, train, Dataset, Task, TcnError, TcnModel, TrainRun};

fn open_gates(model: &mut TcnModel) {
    let names = model.config().param_shapes();
    for (p, (name, _)) in model.params_mut().iter_mut().zip(&names) {
        if name.ends_with("bn.bias") || name == "fc1.bias" {
            p.data_mut().iter_mut().for_each(|v| *v = 50.0);
        }
    }
}

fn probe(model: &TcnModel, input: &pitchkin::nn::Tensor, frame: usize) -> Vec<f64> {
    let n = model.config().seq_len;
    let mask: Vec<bool> = (0..n).map(|t| t == frame).collect();
    model.predict_channels(input.clone(), &mask).unwrap().into_data()
}

#[test]
fn receptive_field_is_sum_of_dilated_radii() {
    let mut cfg = tiny_config(Task::Role, 100);
    cfg.dropout = 0.0;
    assert_eq!(cfg.receptive_radius(), 1 + 2 + 4 + 8 + 16);
    let mut model = TcnModel::new(cfg.clone()).unwrap();
    open_gates(&mut model);
    let input = rand_tensor(&[1, cfg.in_channels, 100], &mut rng(1), 1.0);
    let t0 = 50;
    let base = probe(&model, &input, t0);
    let radius = cfg.receptive_radius();
    for (offset, inside) in [(radius, true), (radius + 1, false)] {
        for t in [t0 + offset, t0 - offset] {
            let mut x = input.clone();
            for c in 0..cfg.in_channels {
                x.data_mut()[c * 100 + t] += 0.5;
            }
            let out = probe(&model, &x, t0);
            assert_eq!(out != base, inside, "offset {offset} frame {t}");
        }
    }
}

#[test]
fn skip_path_carries_signal_when_main_branch_is_dead() {
    let mut cfg = tiny_config(Task::Role, 40);
    cfg.dropout = 0.0;
    let mut model = TcnModel::new(cfg.clone()).unwrap();
    let names = cfg.param_shapes();
    for (p, (name, _)) in model.params_mut().iter_mut().zip(&names) {
        if name.contains(".conv.") || name.contains(".bn.") {
            p.data_mut().iter_mut().for_each(|v| *v = 0.0);
        }
        if name == "fc1.bias" {
            p.data_mut().iter_mut().for_each(|v| *v = 50.0);
        }
    }
    let mask = vec![true; 40];
    let a = model
        .predict_channels(rand_tensor(&[1, cfg.in_channels, 40], &mut rng(2), 1.0), &mask)
        .unwrap();
    let b = model
        .predict_channels(rand_tensor(&[1, cfg.in_channels, 40], &mut rng(3), 1.0), &mask)
        .unwrap();
    assert_ne!(a, b);
}

fn role_data(per_class: usize, seed: u64, seq_len: usize) -> Dataset {
    let samples = generate_role_dataset(per_class, seed).unwrap();
    let seqs: Vec<_> = samples.iter().map(|s| s.sequence.clone()).collect();
    let labels: Vec<_> = samples.iter().map(|s| s.truth.role.index()).collect();
    Dataset::new(&seqs, &labels, seq_len).unwrap()
}

#[test]
fn training_is_deterministic_and_beats_chance() {
    let data = role_data(12, 4, 100);
    let cfg = tcn::TcnConfig::new(Task::Role)
        .with_channels(&[8, 8, 12, 12, 16], 8)
        .with_seed(7);
    let run_once = || {
        let mut m = TcnModel::new(cfg.clone()).unwrap();
        let mut run = TrainRun::for_dataset(Task::Role, &data, 12).unwrap();
        run.batch_size = 16;
        train(&mut m, &data, &mut run).unwrap();
        (m, run.history)
    };
    let (m1, h1) = run_once();
    let (m2, h2) = run_once();
    assert_eq!(m1, m2);
    assert_eq!(h1, h2);
    assert_eq!(h1.len(), 12);
    assert!(h1.last().unwrap().loss < h1[0].loss);
    assert!(evaluate(&m1, &data).unwrap().accuracy > 0.4);
}

#[test]
fn zero_epochs_leaves_model_untouched() {
    let data = role_data(2, 5, 100);
    let cfg = tcn::TcnConfig::new(Task::Role).with_channels(&[4, 4, 4, 4, 4], 4);
    let mut m = TcnModel::new(cfg.clone()).unwrap();
    let mut run = TrainRun::for_dataset(Task::Role, &data, 0).unwrap();
    train(&mut m, &data, &mut run).unwrap();
    assert_eq!(m, TcnModel::new(cfg).unwrap());
    assert!(run.history.is_empty());
}

#[test]
fn label_head_mismatch_is_config_error() {
    let data = role_data(2, 6, 100);
    let mut m = TcnModel::new(tiny_config(Task::Handedness, 100)).unwrap();
    let mut run = TrainRun::for_dataset(Task::Role, &data, 1).unwrap();
    assert!(matches!(train(&mut m, &data, &mut run), Err(TcnError::Config(_))));
}

#[test]
fn classifier_outputs_are_distributions() {
    let samples = generate_role_dataset(1, 7).unwrap();
    let m = TcnModel::new(tiny_config(Task::Role, 100)).unwrap();
    for s in &samples {
        let (role, dist) = tcn::classify_role(&m, &s.sequence).unwrap();
        assert!((dist.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(Role::from_index(tcn::argmax(&dist)), Some(role));
    }
    let h = TcnModel::new(tiny_config(Task::Handedness, 100)).unwrap();
    let (_, conf) = tcn::classify_handedness(&h, &samples[0].sequence).unwrap();
    assert!((0.5..1.0).contains(&conf));
    assert!(matches!(
        tcn::classify_pitch_position(&h, &samples[0].sequence),
        Err(TcnError::Usage(_))
    ));
}
