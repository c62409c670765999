use pitchkin::nn::{FocalLossParams, Mode, ParamId, RunningStats, Tape, Tensor, BN_EPS};
use pitchkin::tcn::{Task, TcnConfig, TcnModel};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{gradcheck, project, rand_tensor, rng, GradReport};

fn params(tape: &mut Tape, inputs: &[Tensor]) -> Vec<pitchkin::nn::Var> {
    inputs
        .iter()
        .enumerate()
        .map(|(i, t)| tape.param(ParamId(i), t.clone()))
        .collect()
}

/// Finite-difference checks of every tape primitive, `coords` coordinates
/// each.
pub fn primitive_checks(coords: usize) -> GradReport {
    let mut r = rng(11);
    let mut report = GradReport::default();

    for (k, d) in [(3, 1), (3, 4), (5, 2), (1, 1)] {
        let inputs = [
            rand_tensor(&[2, 3, 12], &mut r, 1.0),
            rand_tensor(&[4, 3, k], &mut r, 0.5),
            rand_tensor(&[4], &mut r, 0.5),
        ];
        report.merge(gradcheck(&format!("conv1d k={k} d={d}"), &inputs, coords, 1, |x| {
            let mut t = Tape::new();
            let v = params(&mut t, x);
            let y = t.conv1d(v[0], v[1], v[2], d).unwrap();
            let l = project(&mut t, y, 2);
            (t, l)
        }));
    }

    for mode in [Mode::Train, Mode::Eval] {
        let inputs = [
            rand_tensor(&[3, 4, 7], &mut r, 2.0),
            rand_tensor(&[4], &mut r, 1.5),
            rand_tensor(&[4], &mut r, 1.0),
        ];
        report.merge(gradcheck(&format!("batchnorm {mode:?}"), &inputs, coords, 3, |x| {
            let mut t = Tape::new();
            let v = params(&mut t, x);
            let mut stats = RunningStats::new(4);
            stats.mean = vec![0.3, -0.2, 0.1, 0.0];
            stats.var = vec![1.5, 0.7, 2.0, 1.0];
            let y = t.batchnorm(v[0], v[1], v[2], &mut stats, mode, BN_EPS).unwrap();
            let l = project(&mut t, y, 4);
            (t, l)
        }));
    }

    let x = [rand_tensor(&[3, 5, 6], &mut r, 1.0)];
    report.merge(gradcheck("relu", &x, coords, 5, |x| {
        let mut t = Tape::new();
        let v = params(&mut t, x);
        let y = t.relu(v[0]).unwrap();
        let l = project(&mut t, y, 6);
        (t, l)
    }));

    report.merge(gradcheck("dropout (fixed mask)", &x, coords, 7, |x| {
        let mut t = Tape::new();
        let v = params(&mut t, x);
        let y = t
            .dropout(v[0], 0.3, Mode::Train, &mut ChaCha8Rng::seed_from_u64(99))
            .unwrap();
        let l = project(&mut t, y, 8);
        (t, l)
    }));

    let ab = [
        rand_tensor(&[2, 3, 4], &mut r, 1.0),
        rand_tensor(&[2, 3, 4], &mut r, 1.0),
    ];
    report.merge(gradcheck("add", &ab, coords, 9, |x| {
        let mut t = Tape::new();
        let v = params(&mut t, x);
        let y = t.add(v[0], v[1]).unwrap();
        let l = project(&mut t, y, 10);
        (t, l)
    }));
    report.merge(gradcheck("mul", &ab, coords, 11, |x| {
        let mut t = Tape::new();
        let v = params(&mut t, x);
        let y = t.mul(v[0], v[1]).unwrap();
        let l = project(&mut t, y, 12);
        (t, l)
    }));
    report.merge(gradcheck("mul (shared operand)", &ab[..1], coords, 13, |x| {
        let mut t = Tape::new();
        let v = params(&mut t, x);
        let y = t.mul(v[0], v[0]).unwrap();
        let y = t.scale(y, -0.7).unwrap();
        let l = project(&mut t, y, 14);
        (t, l)
    }));

    let mask: Vec<bool> = (0..2 * 9).map(|i| i % 9 < 6 || i % 4 == 0).collect();
    let h = [rand_tensor(&[2, 3, 9], &mut r, 1.0)];
    report.merge(gradcheck("masked_mean_time", &h, coords, 15, |x| {
        let mut t = Tape::new();
        let v = params(&mut t, x);
        let y = t.masked_mean_time(v[0], &mask).unwrap();
        let l = project(&mut t, y, 16);
        (t, l)
    }));

    let lin = [
        rand_tensor(&[4, 6], &mut r, 1.0),
        rand_tensor(&[5, 6], &mut r, 0.5),
        rand_tensor(&[5], &mut r, 0.5),
    ];
    report.merge(gradcheck("linear", &lin, coords, 17, |x| {
        let mut t = Tape::new();
        let v = params(&mut t, x);
        let y = t.linear(v[0], v[1], v[2]).unwrap();
        let l = project(&mut t, y, 18);
        (t, l)
    }));

    let logits = [rand_tensor(&[5, 4], &mut r, 2.0)];
    report.merge(gradcheck("softmax", &logits, coords, 19, |x| {
        let mut t = Tape::new();
        let v = params(&mut t, x);
        let y = t.softmax(v[0]).unwrap();
        let l = project(&mut t, y, 20);
        (t, l)
    }));
    let targets = [0, 3, 1, 2, 3];
    for gamma in [0.0, 0.5, 2.0] {
        let fl = FocalLossParams::new(vec![0.25, 1.0, 0.5, 0.75], gamma).unwrap();
        report.merge(gradcheck(
            &format!("softmax + focal gamma={gamma}"),
            &logits,
            coords,
            21,
            |x| {
                let mut t = Tape::new();
                let v = params(&mut t, x);
                let p = t.softmax(v[0]).unwrap();
                let l = t.focal_loss(p, &targets, &fl).unwrap();
                (t, l)
            },
        ));
    }

    let z = [rand_tensor(&[6, 1], &mut r, 3.0)];
    report.merge(gradcheck("sigmoid", &z, coords, 23, |x| {
        let mut t = Tape::new();
        let v = params(&mut t, x);
        let y = t.sigmoid(v[0]).unwrap();
        let l = project(&mut t, y, 24);
        (t, l)
    }));
    let fl = FocalLossParams::new(vec![0.1, 1.0], 2.0).unwrap();
    report.merge(gradcheck("sigmoid + two_class + focal", &z, coords, 25, |x| {
        let mut t = Tape::new();
        let v = params(&mut t, x);
        let p = t.sigmoid(v[0]).unwrap();
        let p = t.two_class(p).unwrap();
        let l = t.focal_loss(p, &[0, 1, 1, 0, 1, 0], &fl).unwrap();
        (t, l)
    }));
    report
}

/// Small-width five-block TCN for gradient and probe tests.
pub fn tiny_config(task: Task, seq_len: usize) -> TcnConfig {
    let mut cfg = TcnConfig::new(task).with_channels(&[3, 3, 4, 4, 5], 4).with_seed(5);
    cfg.seq_len = seq_len;
    cfg
}

/// Finite-difference check of the loss of the composed five-block network
/// with respect to every parameter tensor (dropout disabled so the function
/// is deterministic).
pub fn tcn_check(task: Task, coords: usize) -> GradReport {
    let mut cfg = tiny_config(task, 40);
    cfg.dropout = 0.0;
    let model = TcnModel::new(cfg.clone()).unwrap();
    let batch = 3;
    let input = rand_tensor(&[batch, cfg.in_channels, cfg.seq_len], &mut rng(31), 1.0);
    let mask: Vec<bool> = (0..batch * cfg.seq_len).map(|i| i % cfg.seq_len < 35).collect();
    let labels: Vec<usize> = (0..batch).map(|b| b % task.num_classes()).collect();
    let fl = FocalLossParams::new(vec![0.6; task.num_classes()], 2.0).unwrap();
    let stats = model.bn_stats().to_vec();
    gradcheck(&format!("tcn {task:?}"), model.params(), coords, 33, |p| {
        let mut m = TcnModel::from_parts(cfg.clone(), p.to_vec(), stats.clone()).unwrap();
        let mut t = Tape::new();
        let probs = m
            .forward_tape(
                &mut t,
                input.clone(),
                &mask,
                Mode::Train,
                &mut ChaCha8Rng::seed_from_u64(0),
            )
            .unwrap();
        let probs = if task == Task::Role {
            probs
        } else {
            t.two_class(probs).unwrap()
        };
        let l = t.focal_loss(probs, &labels, &fl).unwrap();
        (t, l)
    })
}
