//! The `pitchkin` command line: synth, train, classify, analyze, eval.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::eval::{self, EvalConfig, ReportHeader};
use crate::kinematics::{analyze_pitch, AnalyzeConfig, LeverArm, PitchModels};
use crate::labels::ClassLabel;
use crate::nn::{Algorithm, FocalLossParams, OptimConfig};
use crate::pose::{self, PoseSequence};
use crate::synth::{self, PitchSetConfig, SynthSample, TruthRecord};
use crate::tcn::{self, Dataset, Task, TcnConfig, TcnModel, TrainRun, DEFAULT_TRAIN_LR};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_MISSING: i32 = 3;
pub const EXIT_DATA: i32 = 4;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Missing(String),
    Data(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Missing(_) => EXIT_MISSING,
            CliError::Data(_) => EXIT_DATA,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Missing(m) => write!(f, "missing artifact: {m}"),
            CliError::Data(m) => write!(f, "data error: {m}"),
        }
    }
}

type CliResult<T> = Result<T, CliError>;

fn data_err(e: impl std::fmt::Display) -> CliError {
    CliError::Data(e.to_string())
}

#[derive(Debug, Parser)]
#[command(name = "pitchkin", version, about = "Pitch analytics from 3D pose tracklets")]
pub struct Cli {
    /// Seed for synthesis, initialization and shuffling
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads for per-tracklet work (0 = all cores)
    #[arg(long, global = true, default_value_t = 1)]
    pub threads: usize,
    /// TOML or JSON file with [synth], [train], [analyze], [eval] sections
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory (synth, train) or file (classify, analyze, eval; default stdout)
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate synthetic tracklets and a truth sidecar
    Synth(SynthArgs),
    /// Train a classifier on labeled tracklets
    Train(TrainArgs),
    /// Classify tracklets with a trained model
    Classify(ClassifyArgs),
    /// Compute pitch statistics for every tracklet
    Analyze(AnalyzeArgs),
    /// Score pitch reports against a truth sidecar
    Eval(EvalArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SynthKind {
    Pitches,
    Roles,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, value_enum)]
    pub kind: Option<SynthKind>,
    /// Number of pitches (kind = pitches)
    #[arg(long)]
    pub pitches: Option<usize>,
    /// Tracklets per role (kind = roles)
    #[arg(long)]
    pub per_class: Option<usize>,
    /// Joint noise standard deviation in meters
    #[arg(long)]
    pub noise: Option<f64>,
    #[arg(long)]
    pub left_fraction: Option<f64>,
    #[arg(long)]
    pub windup_fraction: Option<f64>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub task: Task,
    /// Tracklet JSONL
    #[arg(long)]
    pub data: PathBuf,
    /// Truth sidecar JSONL providing the labels
    #[arg(long)]
    pub truth: PathBuf,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    /// Stop after the first epoch whose training accuracy reaches this value
    #[arg(long)]
    pub stop_at_accuracy: Option<f64>,
    /// Run every epoch regardless of accuracy
    #[arg(long)]
    pub no_early_stop: bool,
    /// Plain cross-entropy (focal gamma 0, uniform alpha)
    #[arg(long)]
    pub cross_entropy: bool,
}

#[derive(Debug, Args)]
pub struct ClassifyArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub handedness_model: PathBuf,
    #[arg(long)]
    pub position_model: PathBuf,
    /// Frames searched on each side of Point B
    #[arg(long)]
    pub window_n: Option<usize>,
    #[arg(long, value_enum)]
    pub lever_arm: Option<LeverArmArg>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum LeverArmArg {
    AtRelease,
    SequenceMedian,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub reports: PathBuf,
    #[arg(long)]
    pub truth: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSection {
    pub kind: SynthKind,
    pub pitches: usize,
    pub per_class: usize,
    /// Defaults to 0.005 m for pitches and 0.01 m for roles.
    pub noise: Option<f64>,
    pub left_fraction: f64,
    pub windup_fraction: f64,
}

impl Default for SynthSection {
    fn default() -> Self {
        Self {
            kind: SynthKind::Pitches,
            pitches: 500,
            per_class: 200,
            noise: None,
            left_fraction: 0.5,
            windup_fraction: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    /// Defaults per task: role 200, handedness 50, position 100.
    pub epochs: Option<usize>,
    pub batch_size: usize,
    pub algorithm: Algorithm,
    pub lr: f64,
    pub weight_decay: f64,
    pub gamma: f64,
    /// Per-class focal alpha; inverse class frequency when absent.
    pub alpha: Option<Vec<f64>>,
    pub channels: Vec<usize>,
    pub hidden: usize,
    pub dropout: f64,
    pub seq_len: usize,
    pub stop_at_accuracy: Option<f64>,
}

impl Default for TrainSection {
    fn default() -> Self {
        let tcn = TcnConfig::new(Task::Role);
        Self {
            epochs: None,
            batch_size: 32,
            algorithm: Algorithm::AdamW,
            lr: DEFAULT_TRAIN_LR,
            weight_decay: 1e-2,
            gamma: 2.0,
            alpha: None,
            channels: tcn.block_channels,
            hidden: tcn.hidden,
            dropout: tcn.dropout,
            seq_len: tcn.seq_len,
            stop_at_accuracy: Some(1.0),
        }
    }
}

/// Everything a config file may set. CLI flags take precedence.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub synth: SynthSection,
    pub train: TrainSection,
    pub analyze: AnalyzeConfig,
    pub eval: EvalConfig,
}

impl FileConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| CliError::Missing(format!("config {}: {e}", path.display())))?;
        let is_json =
            path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json")) || text.trim_start().starts_with('{');
        if is_json {
            serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))
        } else {
            toml::from_str(&text).map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))
        }
    }
}

/// Parses `args` (including the program name), runs the command and
/// returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("pitchkin: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(cli: &Cli) -> CliResult<()> {
    let mut cfg = match &cli.config {
        Some(p) => FileConfig::load(p)?,
        None => FileConfig::default(),
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads)
        .build()
        .map_err(|e| CliError::Usage(format!("--threads: {e}")))?;
    pool.install(|| match &cli.command {
        Command::Synth(a) => cmd_synth(cli, a, &mut cfg.synth),
        Command::Train(a) => cmd_train(cli, a, &mut cfg.train),
        Command::Classify(a) => cmd_classify(cli, a),
        Command::Analyze(a) => cmd_analyze(cli, a, &mut cfg.analyze),
        Command::Eval(a) => cmd_eval(cli, a, &cfg.eval),
    })
}

fn require_file(path: &Path, what: &str) -> CliResult<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::Missing(format!("{what} {} not found", path.display())))
    }
}

fn output_writer(out: Option<&PathBuf>) -> CliResult<Box<dyn Write>> {
    Ok(match out {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).map_err(|e| data_err(format!("{}: {e}", p.display())))?,
        )),
        None => Box::new(BufWriter::new(std::io::stdout())),
    })
}

fn output_dir(out: Option<&PathBuf>, default: &str) -> CliResult<PathBuf> {
    let dir = out.cloned().unwrap_or_else(|| PathBuf::from(default));
    std::fs::create_dir_all(&dir).map_err(|e| data_err(format!("{}: {e}", dir.display())))?;
    Ok(dir)
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    tool_version: &'static str,
    seed: u64,
    config: &'a SynthSection,
    count: usize,
    tracklets: PathBuf,
    truth: PathBuf,
}

fn cmd_synth(cli: &Cli, a: &SynthArgs, s: &mut SynthSection) -> CliResult<()> {
    if let Some(k) = a.kind {
        s.kind = k;
    }
    if let Some(n) = a.pitches {
        s.pitches = n;
    }
    if let Some(n) = a.per_class {
        s.per_class = n;
    }
    if a.noise.is_some() {
        s.noise = a.noise;
    }
    if let Some(f) = a.left_fraction {
        s.left_fraction = f;
    }
    if let Some(f) = a.windup_fraction {
        s.windup_fraction = f;
    }
    for (name, f) in [
        ("left fraction", s.left_fraction),
        ("windup fraction", s.windup_fraction),
    ] {
        if !(0.0..=1.0).contains(&f) {
            return Err(CliError::Usage(format!("{name} must lie in [0, 1], got {f}")));
        }
    }
    let noise = s.noise.unwrap_or(match s.kind {
        SynthKind::Pitches => 0.005,
        SynthKind::Roles => 0.01,
    });
    if !(noise.is_finite() && noise >= 0.0) {
        return Err(CliError::Usage(format!("noise must be >= 0, got {noise}")));
    }
    s.noise = Some(noise);

    let samples: Vec<SynthSample> = match s.kind {
        SynthKind::Pitches => synth::generate_pitch_set(&PitchSetConfig {
            count: s.pitches,
            left_fraction: s.left_fraction,
            windup_fraction: s.windup_fraction,
            noise_sigma: noise,
            seed: cli.seed,
        })
        .map_err(|e| CliError::Usage(e.to_string()))?
        .into_iter()
        .map(SynthSample::from)
        .collect(),
        SynthKind::Roles => synth::generate_role_dataset_with_noise(s.per_class, noise, cli.seed)
            .map_err(|e| CliError::Usage(e.to_string()))?,
    };

    let dir = output_dir(cli.out.as_ref(), "synth")?;
    let tracklets = dir.join("tracklets.jsonl");
    let truth = dir.join("truth.jsonl");
    let seqs: Vec<PoseSequence> = samples.iter().map(|s| s.sequence.clone()).collect();
    pose::save_tracklets(&seqs, &tracklets).map_err(data_err)?;
    synth::save_truths(&samples, &truth).map_err(data_err)?;
    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME"),
        tool_version: env!("CARGO_PKG_VERSION"),
        seed: cli.seed,
        config: s,
        count: samples.len(),
        tracklets,
        truth,
    };
    println!(
        "{}",
        serde_json::to_string_pretty(&manifest).expect("manifest serializes")
    );
    Ok(())
}

fn load_sequences(path: &Path) -> CliResult<Vec<PoseSequence>> {
    require_file(path, "tracklet file")?;
    pose::load_tracklets(path).map_err(|e| data_err(format!("{}: {e}", path.display())))
}

fn load_truth_map(path: &Path) -> CliResult<BTreeMap<String, synth::Truth>> {
    require_file(path, "truth file")?;
    Ok(synth::load_truths(path)
        .map_err(|e| data_err(format!("{}: {e}", path.display())))?
        .into_iter()
        .map(|r| (r.tracklet_id, r.truth))
        .collect())
}

fn task_label(task: Task, t: &synth::Truth) -> Option<usize> {
    match task {
        Task::Role => Some(t.role.index()),
        Task::Handedness => t.handedness.map(|h| h.index()),
        Task::Position => t.position_style.map(|p| p.index()),
    }
}

#[derive(Serialize)]
struct HistoryRow {
    epoch: usize,
    loss: f64,
    accuracy: f64,
}

fn cmd_train(cli: &Cli, a: &TrainArgs, t: &mut TrainSection) -> CliResult<()> {
    if a.epochs.is_some() {
        t.epochs = a.epochs;
    }
    if let Some(b) = a.batch_size {
        t.batch_size = b;
    }
    if let Some(lr) = a.lr {
        t.lr = lr;
    }
    if a.stop_at_accuracy.is_some() {
        t.stop_at_accuracy = a.stop_at_accuracy;
    }
    if a.no_early_stop {
        t.stop_at_accuracy = None;
    }
    if a.cross_entropy {
        t.gamma = 0.0;
        t.alpha = Some(vec![1.0; a.task.num_classes()]);
    }

    let sequences = load_sequences(&a.data)?;
    let truths = load_truth_map(&a.truth)?;
    let mut labels = Vec::with_capacity(sequences.len());
    for s in &sequences {
        let truth = truths
            .get(s.tracklet_id())
            .ok_or_else(|| data_err(format!("no truth for tracklet {:?}", s.tracklet_id())))?;
        let label = task_label(a.task, truth)
            .ok_or_else(|| data_err(format!("tracklet {:?} has no {:?} label", s.tracklet_id(), a.task)))?;
        labels.push(label);
    }
    if sequences.is_empty() {
        return Err(data_err("no tracklets to train on"));
    }

    let mut config = TcnConfig::new(a.task)
        .with_seed(cli.seed)
        .with_channels(&t.channels, t.hidden);
    config.dropout = t.dropout;
    config.seq_len = t.seq_len;
    let mut model = TcnModel::new(config).map_err(|e| CliError::Usage(e.to_string()))?;
    let data = Dataset::new(&sequences, &labels, t.seq_len).map_err(data_err)?;
    let epochs = t.epochs.unwrap_or(a.task.default_epochs());
    t.epochs = Some(epochs);
    let mut run = TrainRun::for_dataset(a.task, &data, epochs).map_err(data_err)?;
    run.batch_size = t.batch_size;
    run.optimizer = OptimConfig {
        algorithm: t.algorithm,
        lr: t.lr,
        weight_decay: t.weight_decay,
        ..OptimConfig::adamw_default()
    };
    run.stop_at_accuracy = t.stop_at_accuracy;
    run.loss = match &t.alpha {
        Some(alpha) => FocalLossParams::new(alpha.clone(), t.gamma),
        None => FocalLossParams::inverse_frequency(&data.class_counts(a.task.num_classes()), t.gamma),
    }
    .map_err(|e| CliError::Usage(e.to_string()))?;

    tcn::train(&mut model, &data, &mut run).map_err(|e| match e {
        tcn::TcnError::Config(m) | tcn::TcnError::Usage(m) => CliError::Usage(m),
        other => data_err(other),
    })?;

    let dir = output_dir(cli.out.as_ref(), "train")?;
    let name = task_name(a.task);
    let model_path = dir.join(format!("{name}.ptcn"));
    let history_path = dir.join(format!("{name}_history.csv"));
    tcn::save_model(&model, &model_path).map_err(data_err)?;
    let mut w = csv::Writer::from_path(&history_path).map_err(data_err)?;
    if run.history.is_empty() {
        w.write_record(["epoch", "loss", "accuracy"]).map_err(data_err)?;
    }
    for h in &run.history {
        w.serialize(HistoryRow {
            epoch: h.epoch,
            loss: h.loss,
            accuracy: h.accuracy,
        })
        .map_err(data_err)?;
    }
    w.flush().map_err(data_err)?;
    let summary = serde_json::json!({
        "tool": env!("CARGO_PKG_NAME"),
        "tool_version": env!("CARGO_PKG_VERSION"),
        "task": name,
        "seed": cli.seed,
        "config": t,
        "epochs_run": run.history.len(),
        "final": run.history.last(),
        "model": model_path,
        "history": history_path,
    });
    println!(
        "{}",
        serde_json::to_string_pretty(&summary).expect("summary serializes")
    );
    Ok(())
}

fn task_name(task: Task) -> &'static str {
    match task {
        Task::Role => "role",
        Task::Handedness => "handedness",
        Task::Position => "position",
    }
}

fn load_model_file(path: &Path) -> CliResult<TcnModel> {
    require_file(path, "model file")?;
    tcn::load_model(path).map_err(|e| data_err(format!("{}: {e}", path.display())))
}

/// Reads tracklets, warning about and skipping malformed records.
fn load_sequences_lenient(path: &Path) -> CliResult<(Vec<PoseSequence>, usize)> {
    require_file(path, "tracklet file")?;
    let file = File::open(path).map_err(data_err)?;
    let records =
        pose::read_tracklets_lenient(BufReader::new(file)).map_err(|e| data_err(format!("{}: {e}", path.display())))?;
    let total = records.len();
    let mut out = Vec::with_capacity(total);
    for r in records {
        match r {
            Ok(s) => out.push(s),
            Err(e) => eprintln!("pitchkin: warning: skipping record: {e}"),
        }
    }
    out.sort_by(|a, b| a.tracklet_id().cmp(b.tracklet_id()));
    Ok((out, total))
}

#[derive(Serialize)]
struct Classification {
    tracklet_id: String,
    task: &'static str,
    label: Option<String>,
    confidence: Option<f64>,
    probabilities: Option<Vec<f64>>,
    error: Option<String>,
}

fn classify_one(model: &TcnModel, s: &PoseSequence) -> Result<(String, f64, Vec<f64>), tcn::TcnError> {
    let task = model.config().task;
    Ok(match task {
        Task::Role => {
            let (r, dist) = tcn::classify_role(model, s)?;
            (r.to_string(), dist[r.index()], dist.to_vec())
        }
        Task::Handedness => {
            let (h, c) = tcn::classify_handedness(model, s)?;
            let p = if h.index() == 1 { c } else { 1.0 - c };
            (h.to_string(), c, vec![p])
        }
        Task::Position => {
            let (p, c) = tcn::classify_pitch_position(model, s)?;
            let q = if p.index() == 1 { c } else { 1.0 - c };
            (p.to_string(), c, vec![q])
        }
    })
}

fn cmd_classify(cli: &Cli, a: &ClassifyArgs) -> CliResult<()> {
    let model = load_model_file(&a.model)?;
    let (sequences, total) = load_sequences_lenient(&a.data)?;
    if total > 0 && sequences.is_empty() {
        return Err(data_err("every record was malformed"));
    }
    let task = task_name(model.config().task);
    let rows: Vec<Classification> = sequences
        .par_iter()
        .map(|s| match classify_one(&model, s) {
            Ok((label, confidence, probabilities)) => Classification {
                tracklet_id: s.tracklet_id().to_string(),
                task,
                label: Some(label),
                confidence: Some(confidence),
                probabilities: Some(probabilities),
                error: None,
            },
            Err(e) => Classification {
                tracklet_id: s.tracklet_id().to_string(),
                task,
                label: None,
                confidence: None,
                probabilities: None,
                error: Some(e.to_string()),
            },
        })
        .collect();
    let mut w = output_writer(cli.out.as_ref())?;
    for r in &rows {
        writeln!(w, "{}", serde_json::to_string(r).expect("row serializes")).map_err(data_err)?;
    }
    w.flush().map_err(data_err)
}

fn cmd_analyze(cli: &Cli, a: &AnalyzeArgs, cfg: &mut AnalyzeConfig) -> CliResult<()> {
    if let Some(n) = a.window_n {
        cfg.window_n = n;
    }
    if let Some(l) = a.lever_arm {
        cfg.lever_arm = match l {
            LeverArmArg::AtRelease => LeverArm::AtRelease,
            LeverArmArg::SequenceMedian => LeverArm::SequenceMedian,
        };
    }
    if cfg.window_n == 0 {
        return Err(CliError::Usage("window_n must be >= 1".into()));
    }
    let hand_model = load_model_file(&a.handedness_model)?;
    let pos_model = load_model_file(&a.position_model)?;
    for (m, task, what) in [
        (&hand_model, Task::Handedness, "handedness"),
        (&pos_model, Task::Position, "position"),
    ] {
        if m.config().task != task {
            return Err(CliError::Usage(format!(
                "{what} model was trained for the {:?} task",
                m.config().task
            )));
        }
    }
    let (sequences, total) = load_sequences_lenient(&a.data)?;
    if total > 0 && sequences.is_empty() {
        return Err(data_err("every record was malformed"));
    }
    let models = PitchModels {
        handedness: Some(&hand_model),
        position: Some(&pos_model),
    };
    let reports: Vec<_> = sequences.par_iter().map(|s| analyze_pitch(s, models, cfg)).collect();
    let header = ReportHeader::new(serde_json::json!({
        "analyze": cfg,
        "handedness_model": a.handedness_model,
        "position_model": a.position_model,
        "seed": cli.seed,
    }));
    let mut w = output_writer(cli.out.as_ref())?;
    eval::write_reports(&header, &reports, &mut w).map_err(data_err)?;
    w.flush().map_err(data_err)
}

fn cmd_eval(cli: &Cli, a: &EvalArgs, cfg: &EvalConfig) -> CliResult<()> {
    require_file(&a.reports, "report file")?;
    let file = File::open(&a.reports).map_err(data_err)?;
    let (_, reports) =
        eval::read_reports(BufReader::new(file)).map_err(|e| data_err(format!("{}: {e}", a.reports.display())))?;
    require_file(&a.truth, "truth file")?;
    let truths: Vec<TruthRecord> =
        synth::load_truths(&a.truth).map_err(|e| data_err(format!("{}: {e}", a.truth.display())))?;
    let report = eval::evaluate_reports(&reports, &truths, cfg).map_err(|e| CliError::Usage(e.to_string()))?;
    for (what, ids) in [
        ("reports without truth", &report.unmatched_reports),
        ("truths without report", &report.unmatched_truths),
    ] {
        if !ids.is_empty() {
            eprintln!("pitchkin: warning: {} {what} excluded: {}", ids.len(), ids.join(", "));
        }
    }
    let mut w = output_writer(cli.out.as_ref())?;
    writeln!(
        w,
        "{}",
        serde_json::to_string_pretty(&report).expect("report serializes")
    )
    .map_err(data_err)?;
    w.flush().map_err(data_err)
}
