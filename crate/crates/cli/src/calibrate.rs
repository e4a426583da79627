//! `calibrate` and `threshold`.

use std::path::PathBuf;

use anyhow::anyhow;
use clap::Args;
use delegation_core::calibration::{
    fit_pav, reliability, select_threshold, CalibrationMap, ReliabilityReport, ThresholdMethod, ThresholdOutcome,
};
use delegation_core::model::{AiAssessment, DiagnosisClass};
use serde::{Deserialize, Serialize};

use crate::output::{emit, read_jsonl, to_json, write_atomic};
use crate::{CmdResult, Failure};

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    /// JSON Lines of `{"raw_score": s, "correct": b}`.
    pub validation: PathBuf,
    #[arg(long, default_value_t = 10)]
    pub bins: usize,
    /// Directory for `calibration_map.json` and `reliability.json`;
    /// without it both are printed as one JSON document.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ThresholdArgs {
    /// JSON Lines of `{"predicted_class": c, "confidence": x, "true_label": t}`.
    pub validation: PathBuf,
    #[arg(long, default_value = "normal")]
    pub class: String,
    #[arg(long)]
    pub target_error: f64,
    #[arg(long, default_value = "binomial_upper_95")]
    pub method: ThresholdMethod,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Deserialize)]
struct ScoreRecord {
    raw_score: f64,
    correct: bool,
}

#[derive(Deserialize)]
struct LabelledRecord {
    #[serde(default)]
    case_id: Option<String>,
    predicted_class: String,
    confidence: f64,
    true_label: String,
}

#[derive(Serialize)]
struct Reliability<'a> {
    before: &'a ReliabilityReport,
    after: &'a ReliabilityReport,
}

#[derive(Serialize)]
struct CalibrationOutput<'a> {
    calibration_map: &'a CalibrationMap,
    reliability: Reliability<'a>,
}

pub fn calibrate(args: &CalibrateArgs) -> CmdResult {
    let records: Vec<ScoreRecord> = read_jsonl(&args.validation)?;
    let scores: Vec<f64> = records.iter().map(|r| r.raw_score).collect();
    let correct: Vec<bool> = records.iter().map(|r| r.correct).collect();
    let map = fit_pav(&scores, &correct).map_err(Failure::rejected)?;
    let calibrated: Vec<f64> = scores.iter().map(|&s| map.apply(s).expect("validated score")).collect();
    let before = reliability(&scores, &correct, args.bins).map_err(Failure::rejected)?;
    let after = reliability(&calibrated, &correct, args.bins).map_err(Failure::rejected)?;
    eprintln!("ece {:.4} -> {:.4}, mce {:.4} -> {:.4}", before.ece, after.ece, before.mce, after.mce);
    let rel = Reliability { before: &before, after: &after };
    match &args.out {
        Some(dir) => {
            write_atomic(&dir.join("calibration_map.json"), to_json(&map).as_bytes())?;
            write_atomic(&dir.join("reliability.json"), to_json(&rel).as_bytes())
        }
        None => emit(None, &to_json(&CalibrationOutput { calibration_map: &map, reliability: rel })),
    }
}

fn class(s: &str) -> Result<DiagnosisClass, Failure> {
    s.parse().map_err(|e| Failure::rejected(anyhow!("{e}")))
}

pub fn threshold(args: &ThresholdArgs) -> CmdResult {
    let target = class(&args.class)?;
    let records: Vec<LabelledRecord> = read_jsonl(&args.validation)?;
    let mut labelled = Vec::with_capacity(records.len());
    for (i, r) in records.iter().enumerate() {
        let id = r.case_id.clone().unwrap_or_else(|| format!("record-{}", i + 1));
        let ai = AiAssessment::prediction(id, class(&r.predicted_class)?, r.confidence)
            .and_then(|a| a.with_calibrated(r.confidence))
            .map_err(|e| Failure::rejected(anyhow!("record {}: {e}", i + 1)))?;
        labelled.push((ai, class(&r.true_label)?));
    }
    let outcome = select_threshold(&labelled, target, args.target_error, args.method).map_err(Failure::rejected)?;
    emit(args.out.as_deref(), &to_json(&outcome))?;
    match outcome {
        ThresholdOutcome::Feasible(_) => Ok(()),
        ThresholdOutcome::NoFeasibleThreshold(n) => Err(Failure::rejected(anyhow!(
            "no feasible threshold for `{}` at target error {}",
            n.target_class,
            n.target_error
        ))),
    }
}
