mod common;

use common::formats::{model_round_trip, random_model, random_sequence, tracklets_round_trip};
use common::rng;
use pitchkin::pose::{self, PoseError};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn tracklet_jsonl_round_trips_bit_exactly(seed in any::<u64>(), count in 0usize..5) {
        let mut r = rng(seed);
        let seqs: Vec<_> = (0..count).map(|i| random_sequence(&mut r, i)).collect();
        prop_assert!(tracklets_round_trip(&seqs));
    }

    #[test]
    fn model_binary_round_trips_bit_exactly(seed in any::<u64>()) {
        let m = random_model(&mut rng(seed));
        prop_assert!(model_round_trip(&m));
    }

    #[test]
    fn model_reader_never_panics_on_truncation(seed in any::<u64>(), cut in 0.0f64..1.0) {
        let m = random_model(&mut rng(seed));
        let mut buf = Vec::new();
        pitchkin::tcn::write_model(&m, &mut buf).unwrap();
        let at = ((buf.len() as f64) * cut) as usize;
        prop_assert!(pitchkin::tcn::read_model(&mut &buf[..at]).is_err());
    }
}

#[test]
fn file_round_trip_through_disk() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.jsonl");
    let mut r = rng(8);
    let seqs: Vec<_> = (0..3).map(|i| random_sequence(&mut r, i)).collect();
    pose::save_tracklets(&seqs, &path).unwrap();
    assert_eq!(pose::load_tracklets(&path).unwrap(), seqs);
    let mpath = dir.path().join("m.ptcn");
    let m = random_model(&mut r);
    pitchkin::tcn::save_model(&m, &mpath).unwrap();
    assert_eq!(pitchkin::tcn::load_model(&mpath).unwrap(), m);
}

#[test]
fn lenient_reader_isolates_corrupt_records() {
    let mut r = rng(9);
    let seqs: Vec<_> = (0..3).map(|i| random_sequence(&mut r, i)).collect();
    let mut buf = Vec::new();
    pose::write_tracklets(&seqs, &mut buf).unwrap();
    let mut text = String::from_utf8(buf).unwrap();
    text.push_str("{\"tracklet_id\": \"broken\", \"fps\": 30\n");
    let recs = pose::read_tracklets_lenient(text.as_bytes()).unwrap();
    assert_eq!(recs.len(), 4);
    assert!(recs[..3].iter().all(Result::is_ok));
    assert!(matches!(recs[3], Err(PoseError::Parse { line: 5, .. })));
}

#[test]
fn empty_input_is_empty_set() {
    assert!(pose::read_tracklets_lenient(&b""[..]).unwrap().is_empty());
}
