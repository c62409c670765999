use std::path::Path;
use std::process::{Command, Output};

use pitchkin::eval::EvalReport;

pub const BIN: &str = env!("CARGO_BIN_EXE_pitchkin");

pub fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("binary runs")
}

pub fn code(out: &Output) -> i32 {
    out.status.code().unwrap_or(-1)
}

fn p(path: &Path) -> &str {
    path.to_str().expect("utf-8 path")
}

/// Exit codes of each stage and the eval report of a default
/// `synth -> train x2 -> analyze -> eval` run inside `dir`.
pub struct Closure {
    pub codes: Vec<(&'static str, i32)>,
    pub report: Option<EvalReport>,
    pub stderr: String,
}

pub fn closure(dir: &Path, seed: u64) -> Closure {
    let seed = seed.to_string();
    let synth = dir.join("synth");
    let train = dir.join("train");
    let reports = dir.join("reports.jsonl");
    let eval = dir.join("eval.json");
    let tracklets = synth.join("tracklets.jsonl");
    let truth = synth.join("truth.jsonl");
    let steps: Vec<(&'static str, Vec<&str>)> = vec![
        ("synth", vec!["--seed", &seed, "--out", p(&synth), "synth"]),
        (
            "train handedness",
            vec![
                "--seed",
                &seed,
                "--out",
                p(&train),
                "train",
                "--task",
                "handedness",
                "--data",
                p(&tracklets),
                "--truth",
                p(&truth),
            ],
        ),
        (
            "train position",
            vec![
                "--seed",
                &seed,
                "--out",
                p(&train),
                "train",
                "--task",
                "position",
                "--data",
                p(&tracklets),
                "--truth",
                p(&truth),
            ],
        ),
    ];
    let hand_model = train.join("handedness.ptcn");
    let pos_model = train.join("position.ptcn");
    let later: Vec<(&'static str, Vec<&str>)> = vec![
        (
            "analyze",
            vec![
                "--out",
                p(&reports),
                "analyze",
                "--data",
                p(&tracklets),
                "--handedness-model",
                p(&hand_model),
                "--position-model",
                p(&pos_model),
            ],
        ),
        (
            "eval",
            vec![
                "--out",
                p(&eval),
                "eval",
                "--reports",
                p(&reports),
                "--truth",
                p(&truth),
            ],
        ),
    ];
    let mut codes = Vec::new();
    let mut stderr = String::new();
    for (name, args) in steps.into_iter().chain(later) {
        let out = run(&args);
        stderr.push_str(&String::from_utf8_lossy(&out.stderr));
        codes.push((name, code(&out)));
        if !out.status.success() {
            return Closure {
                codes,
                report: None,
                stderr,
            };
        }
    }
    let report = std::fs::read_to_string(&eval)
        .ok()
        .and_then(|t| serde_json::from_str(&t).ok());
    Closure { codes, report, stderr }
}
