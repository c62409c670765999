//! Margin accuracies and confusion matrices over analyzed pitches.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kinematics::PitchReport;
use crate::labels::{ClassLabel, Handedness, PitchPosition};
use crate::synth::TruthRecord;

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("invalid metric spec: {0}")]
    Spec(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MarginKind {
    /// `|pred - truth| <= x` frames.
    FrameMargin,
    /// `|pred - truth| / |truth| <= x / 100`.
    PercentMargin,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSpec {
    pub kind: MarginKind,
    pub thresholds: Vec<f64>,
}

impl MetricSpec {
    pub fn new(kind: MarginKind, thresholds: Vec<f64>) -> Result<Self, EvalError> {
        let spec = Self { kind, thresholds };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), EvalError> {
        if self.thresholds.is_empty() {
            return Err(EvalError::Spec("no thresholds".into()));
        }
        if self.thresholds.iter().any(|t| !(t.is_finite() && *t > 0.0)) {
            return Err(EvalError::Spec(format!(
                "thresholds must be positive: {:?}",
                self.thresholds
            )));
        }
        if self.thresholds.windows(2).any(|w| w[0] >= w[1]) {
            return Err(EvalError::Spec(format!(
                "thresholds must strictly increase: {:?}",
                self.thresholds
            )));
        }
        Ok(())
    }

    /// Fraction of `pairs` within each threshold. A missing prediction is a
    /// miss; under percent margins a zero truth value is skipped.
    pub fn accuracies(&self, pairs: &[(Option<f64>, f64)]) -> MetricResult {
        let mut hits = vec![0usize; self.thresholds.len()];
        let mut count = 0;
        for &(pred, truth) in pairs {
            let scaled = match self.kind {
                MarginKind::FrameMargin => pred.map(|p| (p - truth).abs()),
                MarginKind::PercentMargin => {
                    if truth == 0.0 {
                        continue;
                    }
                    pred.map(|p| 100.0 * (p - truth).abs() / truth.abs())
                }
            };
            count += 1;
            if let Some(err) = scaled {
                for (h, &t) in hits.iter_mut().zip(&self.thresholds) {
                    if err <= t {
                        *h += 1;
                    }
                }
            }
        }
        MetricResult {
            spec: self.clone(),
            count,
            accuracies: hits
                .iter()
                .map(|&h| {
                    if count == 0 {
                        None
                    } else {
                        Some(h as f64 / count as f64)
                    }
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricResult {
    pub spec: MetricSpec,
    /// Samples scored (denominator).
    pub count: usize,
    /// One entry per threshold; null when nothing was scored.
    pub accuracies: Vec<Option<f64>>,
}

impl MetricResult {
    pub fn is_monotone(&self) -> bool {
        self.accuracies
            .windows(2)
            .all(|w| matches!((w[0], w[1]), (Some(a), Some(b)) if a <= b) || w[0].is_none())
    }

    /// Accuracy at threshold `x`, if `x` is one of the thresholds.
    pub fn at(&self, x: f64) -> Option<f64> {
        let i = self.spec.thresholds.iter().position(|&t| t == x)?;
        self.accuracies[i]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Confusion {
    pub labels: Vec<String>,
    /// `matrix[truth][predicted]`
    pub matrix: Vec<Vec<usize>>,
    /// Samples whose prediction was missing.
    pub unpredicted: usize,
    pub accuracy: Option<f64>,
}

impl Confusion {
    fn build<L: ClassLabel>(pairs: &[(Option<L>, L)]) -> Self {
        let k = L::ALL.len();
        let mut matrix = vec![vec![0; k]; k];
        let mut unpredicted = 0;
        for (p, t) in pairs {
            match p {
                Some(p) => matrix[t.index()][p.index()] += 1,
                None => unpredicted += 1,
            }
        }
        let correct: usize = (0..k).map(|i| matrix[i][i]).sum();
        Self {
            labels: L::ALL.iter().map(|l| l.name().to_string()).collect(),
            matrix,
            unpredicted,
            accuracy: if pairs.is_empty() {
                None
            } else {
                Some(correct as f64 / pairs.len() as f64)
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub release_frames: Vec<f64>,
    pub velocity_percent: Vec<f64>,
    pub extension_percent: Vec<f64>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            release_frames: vec![1.0, 2.0, 5.0],
            velocity_percent: vec![1.0, 2.0, 5.0],
            extension_percent: vec![5.0, 8.0, 10.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub tool: String,
    pub tool_version: String,
    pub config: EvalConfig,
    /// Report/truth pairs joined on tracklet id.
    pub sample_count: usize,
    pub unmatched_reports: Vec<String>,
    pub unmatched_truths: Vec<String>,
    pub release_frame: MetricResult,
    pub pitch_velocity: MetricResult,
    pub release_extension: MetricResult,
    pub handedness: Confusion,
    pub pitch_position: Confusion,
}

impl EvalReport {
    pub fn is_monotone(&self) -> bool {
        [&self.release_frame, &self.pitch_velocity, &self.release_extension]
            .iter()
            .all(|m| m.is_monotone())
    }
}

/// Joins reports and truths on tracklet id and scores every metric.
pub fn evaluate_reports(
    reports: &[PitchReport],
    truths: &[TruthRecord],
    config: &EvalConfig,
) -> Result<EvalReport, EvalError> {
    let release = MetricSpec::new(MarginKind::FrameMargin, config.release_frames.clone())?;
    let velocity = MetricSpec::new(MarginKind::PercentMargin, config.velocity_percent.clone())?;
    let extension = MetricSpec::new(MarginKind::PercentMargin, config.extension_percent.clone())?;

    let truth_by_id: BTreeMap<&str, &TruthRecord> = truths.iter().map(|t| (t.tracklet_id.as_str(), t)).collect();
    let report_ids: BTreeSet<&str> = reports.iter().map(|r| r.tracklet_id.as_str()).collect();
    let mut unmatched_reports = Vec::new();
    let mut pairs = Vec::new();
    for r in reports {
        match truth_by_id.get(r.tracklet_id.as_str()) {
            Some(t) => pairs.push((r, &t.truth)),
            None => unmatched_reports.push(r.tracklet_id.clone()),
        }
    }
    let unmatched_truths: Vec<String> = truth_by_id
        .keys()
        .filter(|id| !report_ids.contains(*id))
        .map(|id| id.to_string())
        .collect();
    unmatched_reports.sort();

    let mut rel = Vec::new();
    let mut vel = Vec::new();
    let mut ext = Vec::new();
    let mut hand: Vec<(Option<Handedness>, Handedness)> = Vec::new();
    let mut pos: Vec<(Option<PitchPosition>, PitchPosition)> = Vec::new();
    for (r, t) in &pairs {
        if let Some(f) = t.release_frame {
            rel.push((r.release_frame.value.map(|v| v as f64), f as f64));
        }
        if let Some(v) = t.release_speed_mps {
            vel.push((r.pitch_velocity_mps.value, v));
        }
        if let Some(e) = t.extension_m {
            ext.push((r.release_extension_m.value, e));
        }
        if let Some(h) = t.handedness {
            hand.push((r.handedness.value, h));
        }
        if let Some(p) = t.position_style {
            pos.push((r.pitch_position.value, p));
        }
    }

    Ok(EvalReport {
        tool: env!("CARGO_PKG_NAME").to_string(),
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        config: config.clone(),
        sample_count: pairs.len(),
        unmatched_reports,
        unmatched_truths,
        release_frame: release.accuracies(&rel),
        pitch_velocity: velocity.accuracies(&vel),
        release_extension: extension.accuracies(&ext),
        handedness: Confusion::build(&hand),
        pitch_position: Confusion::build(&pos),
    })
}

pub const REPORT_FORMAT: &str = "pitch-report";
pub const REPORT_VERSION: u64 = 1;

/// First line of a report JSONL file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportHeader {
    pub format: String,
    pub version: u64,
    pub tool: String,
    pub tool_version: String,
    pub config: serde_json::Value,
}

impl ReportHeader {
    pub fn new(config: serde_json::Value) -> Self {
        Self {
            format: REPORT_FORMAT.into(),
            version: REPORT_VERSION,
            tool: env!("CARGO_PKG_NAME").into(),
            tool_version: env!("CARGO_PKG_VERSION").into(),
            config,
        }
    }
}

pub fn write_reports<W: Write>(header: &ReportHeader, reports: &[PitchReport], w: &mut W) -> std::io::Result<()> {
    writeln!(w, "{}", serde_json::to_string(header).expect("header serializes"))?;
    for r in reports {
        writeln!(w, "{}", serde_json::to_string(r).expect("report serializes"))?;
    }
    Ok(())
}

/// Reads a report file; an empty file yields no reports.
pub fn read_reports<R: BufRead>(reader: R) -> Result<(Option<ReportHeader>, Vec<PitchReport>), String> {
    let mut header = None;
    let mut reports = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| e.to_string())?;
        if line.trim().is_empty() {
            continue;
        }
        if header.is_none() {
            let h: ReportHeader =
                serde_json::from_str(&line).map_err(|e| format!("line {}: expected report header: {e}", i + 1))?;
            if h.format != REPORT_FORMAT || h.version != REPORT_VERSION {
                return Err(format!(
                    "line {}: unsupported report format {:?} version {}",
                    i + 1,
                    h.format,
                    h.version
                ));
            }
            header = Some(h);
            continue;
        }
        reports.push(serde_json::from_str(&line).map_err(|e| format!("line {}: {e}", i + 1))?);
    }
    Ok((header, reports))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spec_rejects_bad_thresholds() {
        assert!(MetricSpec::new(MarginKind::FrameMargin, vec![]).is_err());
        assert!(MetricSpec::new(MarginKind::FrameMargin, vec![1.0, 1.0]).is_err());
        assert!(MetricSpec::new(MarginKind::FrameMargin, vec![2.0, 1.0]).is_err());
        assert!(MetricSpec::new(MarginKind::FrameMargin, vec![0.0, 1.0]).is_err());
    }

    #[test]
    fn inclusive_frame_margin() {
        let s = MetricSpec::new(MarginKind::FrameMargin, vec![1.0, 2.0, 5.0]).unwrap();
        let pairs: Vec<_> = (0..10).map(|i| (Some(i as f64 + 2.0), i as f64)).collect();
        let m = s.accuracies(&pairs);
        assert_eq!(m.accuracies, vec![Some(0.0), Some(1.0), Some(1.0)]);
        assert!(m.is_monotone());
    }

    #[test]
    fn percent_margin_skips_zero_truth_and_counts_missing() {
        let s = MetricSpec::new(MarginKind::PercentMargin, vec![2.0]).unwrap();
        let m = s.accuracies(&[(Some(1.0), 0.0), (None, 10.0), (Some(10.1), 10.0)]);
        assert_eq!(m.count, 2);
        assert_eq!(m.accuracies, vec![Some(0.5)]);
        assert_eq!(s.accuracies(&[]).accuracies, vec![None]);
    }
}
