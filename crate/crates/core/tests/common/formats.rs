use pitchkin::pose::{self, PoseFrame, PoseSequence, NUM_JOINTS};
use pitchkin::tcn::{self, Task, TcnConfig, TcnModel};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Finite doubles across the whole range: ordinary values, tiny and huge
/// magnitudes, subnormals and signed zero.
pub fn wild_f64(r: &mut ChaCha8Rng) -> f64 {
    match r.gen_range(0..6) {
        0 => r.gen_range(-5.0..5.0),
        1 => f64::from_bits(r.gen::<u64>() & 0x000F_FFFF_FFFF_FFFF),
        2 => -0.0,
        3 => r.gen_range(-1.0..1.0) * 1e300,
        _ => loop {
            let v = f64::from_bits(r.gen());
            if v.is_finite() {
                break v;
            }
        },
    }
}

pub fn random_sequence(r: &mut ChaCha8Rng, id: usize) -> PoseSequence {
    let n = r.gen_range(1..6);
    let masked = r.gen_bool(0.5);
    let frames = (0..n)
        .map(|_| {
            let joints = std::array::from_fn(|_| [wild_f64(r), wild_f64(r), wild_f64(r)]);
            let valid: [bool; NUM_JOINTS] = std::array::from_fn(|_| !masked || r.gen_bool(0.8));
            PoseFrame::new(joints, valid).unwrap()
        })
        .collect();
    let fps = [30.0, 29.97, 60.0, 120.0][r.gen_range(0..4)];
    PoseSequence::new(format!("trk-{id}-\u{e9}\"q"), fps, frames).unwrap()
}

fn bits_equal(a: &PoseSequence, b: &PoseSequence) -> bool {
    a.tracklet_id() == b.tracklet_id()
        && a.fps().to_bits() == b.fps().to_bits()
        && a.len() == b.len()
        && a.frames().iter().zip(b.frames()).all(|(x, y)| {
            x.valid_mask() == y.valid_mask()
                && x.joints()
                    .iter()
                    .flatten()
                    .zip(y.joints().iter().flatten())
                    .all(|(u, v)| u.to_bits() == v.to_bits())
        })
}

/// Serializes and re-reads, comparing every coordinate bit pattern.
pub fn tracklets_round_trip(seqs: &[PoseSequence]) -> bool {
    let mut buf = Vec::new();
    pose::write_tracklets(seqs, &mut buf).unwrap();
    let back: Vec<PoseSequence> = pose::read_tracklets_lenient(buf.as_slice())
        .unwrap()
        .into_iter()
        .collect::<Result<_, _>>()
        .unwrap();
    back.len() == seqs.len() && back.iter().zip(seqs).all(|(a, b)| bits_equal(a, b))
}

pub fn random_model(r: &mut ChaCha8Rng) -> TcnModel {
    let task = [Task::Role, Task::Handedness, Task::Position][r.gen_range(0..3)];
    let widths: Vec<usize> = (0..5).map(|_| r.gen_range(1..6)).collect();
    let mut cfg = TcnConfig::new(task)
        .with_channels(&widths, r.gen_range(1..5))
        .with_seed(r.gen());
    cfg.seq_len = r.gen_range(33..60);
    cfg.dropout = r.gen_range(0.0..0.5);
    let mut m = TcnModel::new(cfg).unwrap();
    for p in m.params_mut() {
        for v in p.data_mut() {
            *v = wild_f64(r);
        }
    }
    m
}

/// Writes, reads and rewrites a model; both the value and the bytes must match.
pub fn model_round_trip(m: &TcnModel) -> bool {
    let mut buf = Vec::new();
    tcn::write_model(m, &mut buf).unwrap();
    let back = tcn::read_model(&mut buf.as_slice()).unwrap();
    let mut again = Vec::new();
    tcn::write_model(&back, &mut again).unwrap();
    let same_bits =
        back.params().iter().zip(m.params()).all(|(a, b)| {
            a.shape() == b.shape() && a.data().iter().zip(b.data()).all(|(u, v)| u.to_bits() == v.to_bits())
        });
    same_bits && back.config() == m.config() && back.bn_stats() == m.bn_stats() && again == buf
}
