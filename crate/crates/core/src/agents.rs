//! Stochastic models of the AI tool and the clinician.
//!
//! The AI predicts from a confusion row of the true class and draws its score
//! from a Beta distribution chosen by whether the prediction is correct;
//! out-of-scope cases get a wrong prediction that is sometimes scored as
//! confidently as a correct one. The clinician reads from their own confusion
//! row (with known weak spots added as boosts), may adopt a displayed AI label
//! on disagreement (anchoring), and in decision-referral mode may re-read a
//! case after a warning.
//!
//! Profiles are plain data loaded from the scenario file; all sampling goes
//! through a caller-supplied stream.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use rand_distr::{Beta, Distribution};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{AiAssessment, CaseRecord, DiagnosisClass, ModalityKind, QualityStatus};

pub type ConfusionMatrix = [[f64; 5]; 5];

const ROW_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AgentError {
    #[error("invalid {profile} profile: {message}")]
    InvalidProfile { profile: &'static str, message: String },
    #[error("case `{case_id}` has no AI prediction to show the clinician")]
    MissingPrediction { case_id: String },
}

fn invalid(profile: &'static str, message: impl Into<String>) -> AgentError {
    AgentError::InvalidProfile { profile, message: message.into() }
}

fn check_prob(profile: &'static str, what: &str, p: f64) -> Result<(), AgentError> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(invalid(profile, format!("{what} = {p} is not a probability")))
    }
}

fn check_confusion(profile: &'static str, m: &ConfusionMatrix) -> Result<(), AgentError> {
    for (i, row) in m.iter().enumerate() {
        let class = DiagnosisClass::ALL[i];
        for &p in row {
            check_prob(profile, &format!("confusion[{class}]"), p)?;
        }
        let sum: f64 = row.iter().sum();
        if (sum - 1.0).abs() > ROW_TOLERANCE {
            return Err(invalid(profile, format!("confusion row `{class}` sums to {sum}")));
        }
    }
    Ok(())
}

/// Beta(alpha, beta) score distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaParams {
    pub alpha: f64,
    pub beta: f64,
}

impl BetaParams {
    pub fn mean(&self) -> f64 {
        self.alpha / (self.alpha + self.beta)
    }

    fn distribution(&self) -> Beta<f64> {
        Beta::new(self.alpha, self.beta).expect("validated beta parameters")
    }

    fn validate(&self, what: &str) -> Result<(), AgentError> {
        let ok = |v: f64| v > 0.0 && v.is_finite();
        if ok(self.alpha) && ok(self.beta) {
            Ok(())
        } else {
            Err(invalid("ai", format!("{what} needs alpha, beta > 0")))
        }
    }
}

/// Samples an index from a probability row with one uniform draw.
fn sample_row(row: &[f64; 5], rng: &mut impl Rng) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &p) in row.iter().enumerate() {
        if p <= 0.0 {
            continue;
        }
        acc += p;
        last = i;
        if u < acc {
            return i;
        }
    }
    last
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AiProfile {
    /// Row = true class, column = predicted class, in `DiagnosisClass::ALL` order.
    pub confusion: ConfusionMatrix,
    pub score_given_correct: BetaParams,
    pub score_given_incorrect: BetaParams,
    /// Chance an out-of-scope case is scored like a correct prediction.
    pub oos_overconfidence_prob: f64,
    /// Probability that QC detects each defect. Missing entries mean 1.0.
    #[serde(default)]
    pub qc_fail_prob_by_quality: BTreeMap<QualityStatus, f64>,
    /// Entities the AI systematically misses.
    #[serde(default)]
    pub failure_mode_tags: BTreeSet<String>,
    #[serde(default)]
    pub assumption: bool,
}

impl AiProfile {
    pub fn validate(&self) -> Result<(), AgentError> {
        check_confusion("ai", &self.confusion)?;
        self.score_given_correct.validate("score_given_correct")?;
        self.score_given_incorrect.validate("score_given_incorrect")?;
        if self.score_given_correct.mean() <= self.score_given_incorrect.mean() {
            return Err(invalid(
                "ai",
                format!(
                    "mean score when correct ({}) must exceed mean score when incorrect ({})",
                    self.score_given_correct.mean(),
                    self.score_given_incorrect.mean()
                ),
            ));
        }
        check_prob("ai", "oos_overconfidence_prob", self.oos_overconfidence_prob)?;
        for (q, &p) in &self.qc_fail_prob_by_quality {
            if q.is_pass() {
                return Err(invalid("ai", "qc_fail_prob_by_quality cannot list `pass`"));
            }
            check_prob("ai", &format!("qc_fail_prob_by_quality[{q}]"), p)?;
        }
        Ok(())
    }

    pub fn qc_detection(&self, quality: QualityStatus) -> f64 {
        self.qc_fail_prob_by_quality.get(&quality).copied().unwrap_or(1.0)
    }

    /// Whether the AI treats this case as outside its competence.
    pub fn is_blind_spot(&self, case: &CaseRecord) -> bool {
        match &case.oos_entity {
            Some(tag) => self.failure_mode_tags.contains(tag) || case.is_out_of_scope(),
            None => false,
        }
    }
}

/// Draws the AI assessment for one case. `calibrated_confidence` is left
/// empty; the scenario's calibration fills it in.
pub fn ai_assess(profile: &AiProfile, case: &CaseRecord, rng: &mut impl Rng) -> AiAssessment {
    if !case.quality.is_pass() && rng.random::<f64>() < profile.qc_detection(case.quality) {
        return AiAssessment::qc_failure(case.case_id.clone(), case.quality).expect("non-pass status");
    }
    let truth = case.ground_truth();
    let (predicted, scored_as_correct) = if profile.is_blind_spot(case) {
        let wrong: Vec<DiagnosisClass> = DiagnosisClass::ALL.iter().copied().filter(|c| *c != truth).collect();
        let predicted = wrong[rng.random_range(0..wrong.len())];
        (predicted, rng.random::<f64>() < profile.oos_overconfidence_prob)
    } else {
        let predicted = DiagnosisClass::ALL[sample_row(&profile.confusion[truth.index()], rng)];
        (predicted, predicted == truth)
    };
    let dist = if scored_as_correct { &profile.score_given_correct } else { &profile.score_given_incorrect };
    let score = dist.distribution().sample(rng).clamp(0.0, 1.0);
    AiAssessment::prediction(case.case_id.clone(), predicted, score).expect("score clamped to [0, 1]")
}

/// A known human weak spot: extra probability of reading `true_class` as
/// `predicted_class`, taken from the correct-read mass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureModeBoost {
    pub true_class: DiagnosisClass,
    pub predicted_class: DiagnosisClass,
    pub added_mass: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClinicianProfile {
    pub confusion: ConfusionMatrix,
    #[serde(default)]
    pub failure_mode_boosts: Vec<FailureModeBoost>,
    /// Probability of adopting a displayed, disagreeing AI label. Missing means 0.
    #[serde(default)]
    pub anchoring_alpha_by_modality: BTreeMap<ModalityKind, f64>,
    pub warning_compliance: f64,
    pub reread_miss_factor: f64,
    pub minutes_by_class: BTreeMap<DiagnosisClass, f64>,
    #[serde(default)]
    pub assumption: bool,
}

impl ClinicianProfile {
    pub fn validate(&self) -> Result<(), AgentError> {
        check_confusion("clinician", &self.confusion)?;
        for b in &self.failure_mode_boosts {
            if b.true_class == b.predicted_class {
                return Err(invalid("clinician", format!("boost on `{}` must move mass to another class", b.true_class)));
            }
            check_prob("clinician", "failure mode boost", b.added_mass)?;
        }
        for (m, &a) in &self.anchoring_alpha_by_modality {
            check_prob("clinician", &format!("anchoring alpha for {m}"), a)?;
        }
        check_prob("clinician", "warning_compliance", self.warning_compliance)?;
        check_prob("clinician", "reread_miss_factor", self.reread_miss_factor)?;
        for &c in DiagnosisClass::ALL {
            match self.minutes_by_class.get(&c) {
                Some(&m) if m > 0.0 && m.is_finite() => {}
                Some(&m) => return Err(invalid("clinician", format!("minutes for `{c}` must be > 0, got {m}"))),
                None => return Err(invalid("clinician", format!("minutes for `{c}` missing"))),
            }
        }
        for row in self.effective_confusion() {
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_TOLERANCE {
                return Err(invalid("clinician", format!("boosted confusion row sums to {sum}")));
            }
        }
        Ok(())
    }

    /// Read distribution for one true class after applying the boosts. Boost
    /// mass is taken from the correct read; if that runs out the row is
    /// renormalised.
    pub fn effective_row(&self, truth: DiagnosisClass) -> [f64; 5] {
        let t = truth.index();
        let mut row = self.confusion[t];
        for b in self.failure_mode_boosts.iter().filter(|b| b.true_class == truth) {
            row[b.predicted_class.index()] += b.added_mass;
            row[t] -= b.added_mass;
        }
        if row[t] < 0.0 {
            row[t] = 0.0;
            let sum: f64 = row.iter().sum();
            row.iter_mut().for_each(|p| *p /= sum);
        }
        row
    }

    pub fn effective_confusion(&self) -> ConfusionMatrix {
        let mut m = [[0.0; 5]; 5];
        for &c in DiagnosisClass::ALL {
            m[c.index()] = self.effective_row(c);
        }
        m
    }

    pub fn minutes(&self, truth: DiagnosisClass) -> f64 {
        self.minutes_by_class[&truth]
    }

    pub fn anchoring(&self, mode: ModalityKind) -> f64 {
        self.anchoring_alpha_by_modality.get(&mode).copied().unwrap_or(0.0)
    }
}

/// Unaided read: label from the boosted confusion row, minutes by true class.
pub fn clinician_read(profile: &ClinicianProfile, case: &CaseRecord, rng: &mut impl Rng) -> (DiagnosisClass, f64) {
    let truth = case.ground_truth();
    let label = DiagnosisClass::ALL[sample_row(&profile.effective_row(truth), rng)];
    (label, profile.minutes(truth))
}

/// Which AI outputs the clinician gets to see.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Disclosure {
    #[default]
    Always,
    ConfidentAbnormalOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InteractionConfig {
    pub disclosure: Disclosure,
    /// Confidence at or above which an abnormal prediction counts as confident
    /// (for disclosure and for decision-referral warnings).
    pub confident_abnormal_cutoff: f64,
}

impl Default for InteractionConfig {
    fn default() -> Self {
        InteractionConfig { disclosure: Disclosure::Always, confident_abnormal_cutoff: 0.9 }
    }
}

/// Outcome of a clinician read with AI support.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AssistedRead {
    pub label: DiagnosisClass,
    pub minutes: f64,
    pub warnings_fired: u32,
}

fn reread(profile: &ClinicianProfile, case: &CaseRecord, fallback: DiagnosisClass, rng: &mut impl Rng) -> DiagnosisClass {
    let truth = case.ground_truth();
    let row = profile.effective_row(truth);
    if truth.is_normal() {
        return DiagnosisClass::ALL[sample_row(&row, rng)];
    }
    let miss = row[DiagnosisClass::Normal.index()] * profile.reread_miss_factor;
    if rng.random::<f64>() < miss {
        return DiagnosisClass::Normal;
    }
    let mut abnormal = row;
    abnormal[DiagnosisClass::Normal.index()] = 0.0;
    let mass: f64 = abnormal.iter().sum();
    if mass <= 0.0 {
        return fallback;
    }
    abnormal.iter_mut().for_each(|p| *p /= mass);
    DiagnosisClass::ALL[sample_row(&abnormal, rng)]
}

/// Clinician read with the AI output available.
///
/// The clinician first reads unaided. If the AI output is disclosed and
/// disagrees, they adopt it with the modality's anchoring probability. In
/// decision-referral mode a normal read against a confident abnormal AI call
/// fires a warning, and with probability `warning_compliance` the clinician
/// re-reads with miss probability scaled by `reread_miss_factor`.
pub fn clinician_with_ai(
    profile: &ClinicianProfile,
    case: &CaseRecord,
    ai: &AiAssessment,
    mode: ModalityKind,
    interaction: &InteractionConfig,
    rng: &mut impl Rng,
) -> Result<AssistedRead, AgentError> {
    let ai_label = ai
        .predicted_class()
        .ok_or_else(|| AgentError::MissingPrediction { case_id: case.case_id.clone() })?;
    let (own, minutes) = clinician_read(profile, case, rng);
    let confident_abnormal = ai_label.is_abnormal() && ai.confidence() >= interaction.confident_abnormal_cutoff;
    let disclosed = match interaction.disclosure {
        Disclosure::Always => true,
        Disclosure::ConfidentAbnormalOnly => confident_abnormal,
    };

    let mut label = own;
    if disclosed && own != ai_label && rng.random::<f64>() < profile.anchoring(mode) {
        label = ai_label;
    }
    let mut warnings_fired = 0;
    if mode == ModalityKind::DecisionReferral && label.is_normal() && confident_abnormal {
        warnings_fired = 1;
        if rng.random::<f64>() < profile.warning_compliance {
            label = reread(profile, case, ai_label, rng);
        }
    }
    Ok(AssistedRead { label, minutes, warnings_fired })
}
