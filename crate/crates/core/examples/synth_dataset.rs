//! Writes a small synthetic pitch set and its truth sidecar to a directory
//! (first argument, default `synth-demo`).

use pitchkin::pose::save_tracklets;
use pitchkin::synth::{generate_pitch_set, save_truths, PitchSetConfig, SynthSample};

fn main() {
    let dir = std::path::PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "synth-demo".into()));
    std::fs::create_dir_all(&dir).unwrap();
    let samples: Vec<SynthSample> = generate_pitch_set(&PitchSetConfig::new(20, 7))
        .unwrap()
        .into_iter()
        .map(Into::into)
        .collect();
    let seqs: Vec<_> = samples.iter().map(|s| s.sequence.clone()).collect();
    save_tracklets(&seqs, dir.join("tracklets.jsonl")).unwrap();
    save_truths(&samples, dir.join("truth.jsonl")).unwrap();
    for s in samples.iter().take(3) {
        println!(
            "{} {}",
            s.sequence.tracklet_id(),
            serde_json::to_string(&s.truth).unwrap()
        );
    }
    println!("wrote {} tracklets to {}", samples.len(), dir.display());
}
