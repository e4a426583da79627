//! Scenario files: population model, agent profiles, calibration and the
//! modality parameters for one experiment.
//!
//! Scenarios are JSON. `schema` is either an inline schema object or a path,
//! and `policy_path` is a path; relative paths resolve against the scenario
//! file's directory. Every parameter group may carry `"assumption": true`
//! to mark values that are modelling choices rather than measurements.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::agents::{AiProfile, ClinicianProfile, InteractionConfig};
use crate::calibration::{CalibrationMap, ThresholdMethod};
use crate::dsl::{parse_policy, Policy};
use crate::model::{DiagnosisClass, ModalityKind, QualityStatus, Specimen};
use crate::router::Modality;
use crate::schema::FieldSchema;

const SUM_TOLERANCE: f64 = 1e-9;

/// A parameter group plus its `assumption` marker.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assumed<T> {
    #[serde(flatten)]
    pub values: T,
    #[serde(default)]
    pub assumption: bool,
}

impl<T> Assumed<T> {
    pub fn new(values: T) -> Self {
        Assumed { values, assumption: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SchemaSource {
    Path(String),
    Inline(FieldSchema),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OosEntityModel {
    pub entity: String,
    /// Probability that a case with the given true label carries the entity.
    /// Labels not listed never do.
    pub rate_given_label: BTreeMap<DiagnosisClass, f64>,
    /// Chance the case also records a transplant history (e.g. GVHD).
    #[serde(default)]
    pub transplant_history_prob: f64,
    /// Chance the requesting clinician flags the entity as suspected.
    #[serde(default)]
    pub suspected_prob: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextModel {
    pub endoscopy_abnormal_given_abnormal: f64,
    pub endoscopy_abnormal_given_normal: f64,
    /// Share of cases without an endoscopy report.
    #[serde(default)]
    pub endoscopy_unknown_rate: f64,
    #[serde(default)]
    pub transplant_history_rate: f64,
    #[serde(default)]
    pub suspicion_rates: BTreeMap<String, f64>,
    #[serde(default)]
    pub oos_entities: Vec<OosEntityModel>,
    #[serde(default)]
    pub assumption: bool,
}

/// Where calibrated confidences come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CalibrationSource {
    Inline { map: CalibrationMap },
    /// Fit PAV on a fresh validation population of this size.
    FitOnValidation { validation_size: usize },
    /// Use the raw score as the confidence.
    Identity,
}

/// Derive a policy threshold from validation data before each replication.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdSelection {
    pub rule: String,
    pub target_class: DiagnosisClass,
    pub target_error: f64,
    #[serde(default)]
    pub method: ThresholdMethod,
    pub validation_size: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CodocParams {
    pub cutoff: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HcnParams {
    pub normal_cutoff: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecisionReferralParams {
    pub normal_cutoff: f64,
    pub warning_cutoff: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ModalityParams {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub codoc: Option<CodocParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hcn_autoreport: Option<HcnParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decision_referral: Option<DecisionReferralParams>,
    #[serde(default)]
    pub assumption: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Seeds {
    pub base: u64,
    pub replications: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub name: String,
    pub schema: SchemaSource,
    pub prevalence: Assumed<BTreeMap<DiagnosisClass, f64>>,
    pub context_model: ContextModel,
    #[serde(default = "no_defects")]
    pub quality_defect_rates: Assumed<BTreeMap<QualityStatus, f64>>,
    pub ai_profile: AiProfile,
    pub clinician_profile: ClinicianProfile,
    pub calibration_source: CalibrationSource,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub policy_path: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold_selection: Option<ThresholdSelection>,
    #[serde(default)]
    pub modalities: ModalityParams,
    #[serde(default)]
    pub interaction: InteractionConfig,
    #[serde(default)]
    pub specimen: Specimen,
    pub population_size: usize,
    pub seeds: Seeds,
}

fn no_defects() -> Assumed<BTreeMap<QualityStatus, f64>> {
    Assumed { values: BTreeMap::new(), assumption: false }
}

/// A validated scenario with its schema and policy loaded.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub schema: FieldSchema,
    pub policy: Option<Policy>,
}

fn rate(errors: &mut Vec<String>, what: &str, p: f64) {
    if !(0.0..=1.0).contains(&p) {
        errors.push(format!("{what} = {p} is not a probability"));
    }
}

impl ScenarioConfig {
    /// Checks every invariant and collects all violations.
    pub fn problems(&self) -> Vec<String> {
        let mut errors = Vec::new();
        let prevalence = &self.prevalence.values;
        let mut sum = 0.0;
        for (class, &p) in prevalence {
            rate(&mut errors, &format!("prevalence[{class}]"), p);
            sum += p;
        }
        if (sum - 1.0).abs() > SUM_TOLERANCE {
            errors.push(format!("prevalence sums to {sum}, expected 1"));
        }
        let cm = &self.context_model;
        rate(&mut errors, "endoscopy_abnormal_given_abnormal", cm.endoscopy_abnormal_given_abnormal);
        rate(&mut errors, "endoscopy_abnormal_given_normal", cm.endoscopy_abnormal_given_normal);
        rate(&mut errors, "endoscopy_unknown_rate", cm.endoscopy_unknown_rate);
        rate(&mut errors, "transplant_history_rate", cm.transplant_history_rate);
        for (tag, &p) in &cm.suspicion_rates {
            rate(&mut errors, &format!("suspicion_rates[{tag}]"), p);
        }
        let mut seen = BTreeSet::new();
        for e in &cm.oos_entities {
            if !seen.insert(e.entity.as_str()) {
                errors.push(format!("oos entity `{}` listed twice", e.entity));
            }
            for (class, &p) in &e.rate_given_label {
                rate(&mut errors, &format!("oos_entities[{}].rate_given_label[{class}]", e.entity), p);
            }
            rate(&mut errors, &format!("oos_entities[{}].transplant_history_prob", e.entity), e.transplant_history_prob);
            rate(&mut errors, &format!("oos_entities[{}].suspected_prob", e.entity), e.suspected_prob);
        }
        for &class in DiagnosisClass::ALL {
            let total: f64 = cm.oos_entities.iter().filter_map(|e| e.rate_given_label.get(&class)).sum();
            if total > 1.0 + SUM_TOLERANCE {
                errors.push(format!("oos entity rates for `{class}` sum to {total} > 1"));
            }
        }
        let mut defects = 0.0;
        for (q, &p) in &self.quality_defect_rates.values {
            if q.is_pass() {
                errors.push("quality_defect_rates cannot list `pass`".into());
            }
            rate(&mut errors, &format!("quality_defect_rates[{q}]"), p);
            defects += p;
        }
        if defects > 1.0 + SUM_TOLERANCE {
            errors.push(format!("quality defect rates sum to {defects} > 1"));
        }
        if let Err(e) = self.ai_profile.validate() {
            errors.push(e.to_string());
        }
        if let Err(e) = self.clinician_profile.validate() {
            errors.push(e.to_string());
        }
        if let CalibrationSource::FitOnValidation { validation_size } = self.calibration_source {
            if validation_size < 2 {
                errors.push("calibration validation_size must be at least 2".into());
            }
        }
        if let Some(t) = &self.threshold_selection {
            rate(&mut errors, "threshold_selection.target_error", t.target_error);
            if t.validation_size == 0 {
                errors.push("threshold_selection.validation_size must be positive".into());
            }
            if self.policy_path.is_none() {
                errors.push("threshold_selection needs a policy_path".into());
            }
        }
        rate(&mut errors, "interaction.confident_abnormal_cutoff", self.interaction.confident_abnormal_cutoff);
        if self.population_size == 0 {
            errors.push("population_size must be positive".into());
        }
        if self.seeds.replications == 0 {
            errors.push("seeds.replications must be positive".into());
        }
        errors
    }
}

impl Scenario {
    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::Io { path: path.to_path_buf(), source: e })?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_json_str(&text, &base)
    }

    /// Parses a scenario whose relative paths resolve against `base_dir`.
    pub fn from_json_str(text: &str, base_dir: &Path) -> Result<Self, HarnessError> {
        let config: ScenarioConfig =
            serde_json::from_str(text).map_err(|e| HarnessError::Config(vec![format!("scenario: {e}")]))?;
        Self::from_config(config, base_dir)
    }

    pub fn from_config(config: ScenarioConfig, base_dir: &Path) -> Result<Self, HarnessError> {
        let mut problems = config.problems();
        let read = |rel: &str| -> Result<String, HarnessError> {
            let path: PathBuf = base_dir.join(rel);
            std::fs::read_to_string(&path).map_err(|e| HarnessError::Io { path, source: e })
        };
        let schema = match &config.schema {
            SchemaSource::Inline(s) => s.clone(),
            SchemaSource::Path(p) => FieldSchema::from_json_str(&read(p)?)
                .map_err(|e| HarnessError::Config(vec![format!("schema `{p}`: {e}")]))?,
        };
        let policy = match &config.policy_path {
            None => None,
            Some(p) => match parse_policy(&read(p)?) {
                Ok(policy) => Some(policy),
                Err(e) => {
                    problems.push(format!("policy `{p}`: {e}"));
                    None
                }
            },
        };
        if let (Some(policy), Some(t)) = (&policy, &config.threshold_selection) {
            if policy.rule(&t.rule).is_none() {
                problems.push(format!("threshold_selection.rule `{}` is not in the policy", t.rule));
            }
        }
        if !problems.is_empty() {
            return Err(HarnessError::Config(problems));
        }
        let scenario = Scenario { config, schema, policy };
        for kind in ModalityKind::ALL.iter().filter(|k| **k != ModalityKind::AutonomousDecisionSupport) {
            if let Err(HarnessError::Config(p)) = scenario.modality(*kind) {
                problems.extend(p.into_iter().filter(|m| !m.contains("not configured")));
            }
        }
        if let Some(policy) = &scenario.policy {
            if let Err(e) = Modality::autonomous(policy.clone(), &scenario.schema) {
                problems.push(e.to_string());
            }
        }
        if problems.is_empty() {
            Ok(scenario)
        } else {
            Err(HarnessError::Config(problems))
        }
    }

    /// Builds a modality from the scenario's parameters (and its policy for
    /// autonomous decision support).
    pub fn modality(&self, kind: ModalityKind) -> Result<Modality, HarnessError> {
        let missing = || HarnessError::Config(vec![format!("modality `{kind}` is not configured in the scenario")]);
        let config = |e: crate::router::RouterError| HarnessError::Config(vec![e.to_string()]);
        let p = &self.config.modalities;
        match kind {
            ModalityKind::Unaided => Ok(Modality::Unaided),
            ModalityKind::Sequential => Ok(Modality::Sequential),
            ModalityKind::Concurrent => Ok(Modality::Concurrent),
            ModalityKind::Codoc => Modality::codoc(p.codoc.ok_or_else(missing)?.cutoff).map_err(config),
            ModalityKind::HcnAutoreport => {
                Modality::hcn_autoreport(p.hcn_autoreport.ok_or_else(missing)?.normal_cutoff).map_err(config)
            }
            ModalityKind::DecisionReferral => {
                let d = p.decision_referral.ok_or_else(missing)?;
                Modality::decision_referral(d.normal_cutoff, d.warning_cutoff).map_err(config)
            }
            ModalityKind::AutonomousDecisionSupport => {
                let policy = self.policy.clone().ok_or_else(missing)?;
                Modality::autonomous(policy, &self.schema).map_err(config)
            }
        }
    }
}
