//! Shared domain types: diagnoses, QC outcomes, cases, AI assessments,
//! pathways and the decision/audit records produced by routing.
//!
//! Every other module builds on these types and none of them defines its
//! own copy. Values are immutable once constructed; types whose fields are
//! tied together by an invariant keep those fields private and expose
//! checked constructors (serde goes through the same checks).

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Errors raised when a constructor would break a type invariant.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("unknown {kind} `{value}`")]
    UnknownTag { kind: &'static str, value: String },
    #[error("{field} must lie in [0, 1], got {value}")]
    OutOfUnitRange { field: &'static str, value: f64 },
    #[error("predicted_class must be absent iff qc_status != pass (qc_status = {qc})")]
    PredictionQcMismatch { qc: QualityStatus },
    #[error("decider {decider} with clinician_minutes = {minutes} violates the time invariant")]
    DeciderMinutes { decider: Decider, minutes: f64 },
}

macro_rules! tag_enum {
    ($(#[$meta:meta])* $name:ident, $kind:literal { $($variant:ident => $text:literal),+ $(,)? }) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        #[serde(rename_all = "snake_case")]
        pub enum $name {
            $($variant),+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn as_str(self) -> &'static str {
                match self {
                    $($name::$variant => $text),+
                }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl FromStr for $name {
            type Err = ModelError;

            fn from_str(s: &str) -> Result<Self, Self::Err> {
                match s {
                    $($text => Ok($name::$variant),)+
                    other => Err(ModelError::UnknownTag { kind: $kind, value: other.to_string() }),
                }
            }
        }
    };
}

tag_enum!(
    /// Five-way histopathology outcome: one normal class and four abnormal ones.
    DiagnosisClass, "diagnosis class" {
        Normal => "normal",
        NeoplasticUrgent => "neoplastic_urgent",
        NeoplasticNonUrgent => "neoplastic_non_urgent",
        NonNeoplasticUrgent => "non_neoplastic_urgent",
        NonNeoplasticNonUrgent => "non_neoplastic_non_urgent",
    }
);

tag_enum!(
    /// Outcome of the slide quality-control step. Only `Pass` lets the AI predict.
    QualityStatus, "quality status" {
        Pass => "pass",
        OutOfFocus => "out_of_focus",
        Folded => "folded",
        InadequateTissue => "inadequate_tissue",
        NonColonic => "non_colonic",
    }
);

tag_enum!(
    /// Triage priority attached to the clinician-and-AI pathway.
    Priority, "priority" {
        Urgent => "urgent",
        Routine => "routine",
    }
);

tag_enum!(
    /// Who produced the final label.
    Decider, "decider" {
        Ai => "ai",
        Clinician => "clinician",
        ClinicianWithAi => "clinician_with_ai",
    }
);

tag_enum!(
    /// Human-AI teaming modality, without its parameters.
    ModalityKind, "modality" {
        Unaided => "unaided",
        Sequential => "sequential",
        Concurrent => "concurrent",
        Codoc => "codoc",
        HcnAutoreport => "hcn_autoreport",
        DecisionReferral => "decision_referral",
        AutonomousDecisionSupport => "autonomous_decision_support",
    }
);

impl ModalityKind {
    /// Accepts the canonical names plus the short forms `ads` and `hcn`.
    pub fn parse_lenient(s: &str) -> Result<Self, ModelError> {
        match s {
            "ads" => Ok(ModalityKind::AutonomousDecisionSupport),
            "hcn" => Ok(ModalityKind::HcnAutoreport),
            other => other.parse(),
        }
    }
}

/// Criticality rank; `Urgent > NonUrgent > None`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Criticality {
    None,
    NonUrgent,
    Urgent,
}

impl DiagnosisClass {
    /// Index into 5x5 confusion matrices, in `ALL` order.
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn is_normal(self) -> bool {
        self == DiagnosisClass::Normal
    }

    pub fn is_abnormal(self) -> bool {
        !self.is_normal()
    }

    pub fn is_urgent(self) -> bool {
        self.criticality() == Criticality::Urgent
    }

    pub fn criticality(self) -> Criticality {
        match self {
            DiagnosisClass::Normal => Criticality::None,
            DiagnosisClass::NeoplasticUrgent | DiagnosisClass::NonNeoplasticUrgent => {
                Criticality::Urgent
            }
            DiagnosisClass::NeoplasticNonUrgent | DiagnosisClass::NonNeoplasticNonUrgent => {
                Criticality::NonUrgent
            }
        }
    }
}

impl QualityStatus {
    pub fn is_pass(self) -> bool {
        self == QualityStatus::Pass
    }
}

/// Specimen metadata that scopes which inputs the AI was trained on.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Specimen {
    pub site: String,
    pub specimen_type: String,
    pub stain: String,
    pub patient_group: String,
}

impl Specimen {
    pub fn get(&self, name: &str) -> Option<&str> {
        match name {
            "site" => Some(&self.site),
            "specimen_type" => Some(&self.specimen_type),
            "stain" => Some(&self.stain),
            "patient_group" => Some(&self.patient_group),
            _ => None,
        }
    }

    pub const FIELDS: &'static [&'static str] = &["site", "specimen_type", "stain", "patient_group"];
}

impl Default for Specimen {
    fn default() -> Self {
        Specimen {
            site: "colon".into(),
            specimen_type: "biopsy".into(),
            stain: "h_and_e".into(),
            patient_group: "adult".into(),
        }
    }
}

/// Tag value reserved to mean "recorded as not known". Comparisons touching
/// it evaluate to unknown.
pub const UNKNOWN_TAG: &str = "unknown";

/// A single typed context value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FieldValue {
    Bool(bool),
    Number(f64),
    Tag(String),
    TagSet(BTreeSet<String>),
}

impl FieldValue {
    pub fn type_name(&self) -> &'static str {
        match self {
            FieldValue::Bool(_) => "bool",
            FieldValue::Number(_) => "number",
            FieldValue::Tag(_) => "tag",
            FieldValue::TagSet(_) => "tag set",
        }
    }

    /// `true` for the reserved `unknown` tag.
    pub fn is_unknown(&self) -> bool {
        matches!(self, FieldValue::Tag(t) if t == UNKNOWN_TAG)
    }
}

/// Application-specific clinical context, validated against a [`crate::schema::FieldSchema`].
pub type Context = BTreeMap<String, FieldValue>;

/// Context keys used by the reference colon-biopsy scenario.
pub mod context_keys {
    pub const ENDOSCOPY: &str = "endoscopy";
    pub const TRANSPLANT_HISTORY: &str = "transplant_history";
    pub const CLINICAL_SUSPICION: &str = "clinical_suspicion";
}

/// One patient specimen.
///
/// The ground-truth label is only reachable through [`CaseRecord::ground_truth`];
/// the criteria language cannot name it, so routing never sees it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseRecord {
    pub case_id: String,
    pub specimen: Specimen,
    pub context: Context,
    pub quality: QualityStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oos_entity: Option<String>,
    true_label: DiagnosisClass,
    pub review_time_minutes: f64,
}

impl CaseRecord {
    /// A passing-QC case with empty context and default specimen metadata.
    pub fn new(case_id: impl Into<String>, true_label: DiagnosisClass, review_time_minutes: f64) -> Self {
        CaseRecord {
            case_id: case_id.into(),
            specimen: Specimen::default(),
            context: Context::new(),
            quality: QualityStatus::Pass,
            oos_entity: None,
            true_label,
            review_time_minutes,
        }
    }

    pub fn with_context(mut self, key: &str, value: FieldValue) -> Self {
        self.context.insert(key.to_string(), value);
        self
    }

    pub fn with_quality(mut self, quality: QualityStatus) -> Self {
        self.quality = quality;
        self
    }

    pub fn with_oos_entity(mut self, entity: impl Into<String>) -> Self {
        self.oos_entity = Some(entity.into());
        self
    }

    /// Simulation ground truth. Reserved for agent sampling and metrics.
    pub fn ground_truth(&self) -> DiagnosisClass {
        self.true_label
    }

    /// A case carrying an out-of-scope entity is outside the AI's trained scope.
    pub fn is_out_of_scope(&self) -> bool {
        self.oos_entity.is_some()
    }
}

/// QC outcome, predicted class and confidence for one case.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "AiAssessmentRepr", into = "AiAssessmentRepr")]
pub struct AiAssessment {
    case_id: String,
    qc_status: QualityStatus,
    predicted_class: Option<DiagnosisClass>,
    raw_score: f64,
    calibrated_confidence: Option<f64>,
}

#[derive(Serialize, Deserialize)]
struct AiAssessmentRepr {
    case_id: String,
    qc_status: QualityStatus,
    #[serde(default)]
    predicted_class: Option<DiagnosisClass>,
    raw_score: f64,
    #[serde(default)]
    calibrated_confidence: Option<f64>,
}

fn check_unit(field: &'static str, value: f64) -> Result<f64, ModelError> {
    if (0.0..=1.0).contains(&value) {
        Ok(value)
    } else {
        Err(ModelError::OutOfUnitRange { field, value })
    }
}

impl AiAssessment {
    /// Assessment for a slide rejected by quality control: no prediction.
    pub fn qc_failure(case_id: impl Into<String>, qc_status: QualityStatus) -> Result<Self, ModelError> {
        if qc_status.is_pass() {
            return Err(ModelError::PredictionQcMismatch { qc: qc_status });
        }
        Ok(AiAssessment {
            case_id: case_id.into(),
            qc_status,
            predicted_class: None,
            raw_score: 0.0,
            calibrated_confidence: None,
        })
    }

    /// Assessment for a slide that passed QC.
    pub fn prediction(
        case_id: impl Into<String>,
        predicted_class: DiagnosisClass,
        raw_score: f64,
    ) -> Result<Self, ModelError> {
        Ok(AiAssessment {
            case_id: case_id.into(),
            qc_status: QualityStatus::Pass,
            predicted_class: Some(predicted_class),
            raw_score: check_unit("raw_score", raw_score)?,
            calibrated_confidence: None,
        })
    }

    pub fn with_calibrated(mut self, confidence: f64) -> Result<Self, ModelError> {
        self.calibrated_confidence = Some(check_unit("calibrated_confidence", confidence)?);
        Ok(self)
    }

    pub fn case_id(&self) -> &str {
        &self.case_id
    }

    pub fn qc_status(&self) -> QualityStatus {
        self.qc_status
    }

    pub fn predicted_class(&self) -> Option<DiagnosisClass> {
        self.predicted_class
    }

    pub fn raw_score(&self) -> f64 {
        self.raw_score
    }

    pub fn calibrated_confidence(&self) -> Option<f64> {
        self.calibrated_confidence
    }

    /// Calibrated confidence when available, otherwise the raw score.
    pub fn confidence(&self) -> f64 {
        self.calibrated_confidence.unwrap_or(self.raw_score)
    }
}

impl TryFrom<AiAssessmentRepr> for AiAssessment {
    type Error = ModelError;

    fn try_from(r: AiAssessmentRepr) -> Result<Self, Self::Error> {
        if r.predicted_class.is_some() != r.qc_status.is_pass() {
            return Err(ModelError::PredictionQcMismatch { qc: r.qc_status });
        }
        check_unit("raw_score", r.raw_score)?;
        if let Some(c) = r.calibrated_confidence {
            check_unit("calibrated_confidence", c)?;
        }
        Ok(AiAssessment {
            case_id: r.case_id,
            qc_status: r.qc_status,
            predicted_class: r.predicted_class,
            raw_score: r.raw_score,
            calibrated_confidence: r.calibrated_confidence,
        })
    }
}

impl From<AiAssessment> for AiAssessmentRepr {
    fn from(a: AiAssessment) -> Self {
        AiAssessmentRepr {
            case_id: a.case_id,
            qc_status: a.qc_status,
            predicted_class: a.predicted_class,
            raw_score: a.raw_score,
            calibrated_confidence: a.calibrated_confidence,
        }
    }
}

/// The three routing outcomes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Pathway {
    AiOnly,
    ClinicianOnly,
    ClinicianAndAi {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        priority: Option<Priority>,
    },
}

impl Pathway {
    /// Stable key used in pathway histograms, e.g. `clinician_and_ai:urgent`.
    pub fn histogram_key(&self) -> String {
        match self {
            Pathway::AiOnly => "ai_only".into(),
            Pathway::ClinicianOnly => "clinician_only".into(),
            Pathway::ClinicianAndAi { priority: None } => "clinician_and_ai".into(),
            Pathway::ClinicianAndAi { priority: Some(p) } => format!("clinician_and_ai:{p}"),
        }
    }
}

impl fmt::Display for Pathway {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Pathway::AiOnly => f.write_str("ai_only"),
            Pathway::ClinicianOnly => f.write_str("clinician_only"),
            Pathway::ClinicianAndAi { priority: None } => f.write_str("clinician_and_ai"),
            Pathway::ClinicianAndAi { priority: Some(p) } => {
                write!(f, "clinician_and_ai(priority = {p})")
            }
        }
    }
}

/// Three-valued truth.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tri {
    True,
    False,
    Unknown,
}

impl Tri {
    pub fn is_true(self) -> bool {
        self == Tri::True
    }
}

impl From<bool> for Tri {
    fn from(b: bool) -> Self {
        if b {
            Tri::True
        } else {
            Tri::False
        }
    }
}

/// Fired-rule marker used when no rule evaluated to true.
pub const DEFAULT_RULE: &str = "default";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub rule_id: String,
    pub result: Tri,
}

/// Routing outcome for one case plus the evaluation trace that produced it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PathwayDecision {
    pub case_id: String,
    pub pathway: Pathway,
    pub fired_rule: String,
    pub trace: Vec<TraceEntry>,
}

/// Resolved diagnosis and who made it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "FinalDecisionRepr", into = "FinalDecisionRepr")]
pub struct FinalDecision {
    case_id: String,
    final_label: DiagnosisClass,
    decider: Decider,
    clinician_minutes: f64,
    warnings_fired: u32,
}

#[derive(Serialize, Deserialize)]
struct FinalDecisionRepr {
    case_id: String,
    final_label: DiagnosisClass,
    decider: Decider,
    clinician_minutes: f64,
    warnings_fired: u32,
}

impl FinalDecision {
    pub fn new(
        case_id: impl Into<String>,
        final_label: DiagnosisClass,
        decider: Decider,
        clinician_minutes: f64,
        warnings_fired: u32,
    ) -> Result<Self, ModelError> {
        let ok = match decider {
            Decider::Ai => clinician_minutes == 0.0,
            _ => clinician_minutes > 0.0 && clinician_minutes.is_finite(),
        };
        if !ok {
            return Err(ModelError::DeciderMinutes { decider, minutes: clinician_minutes });
        }
        Ok(FinalDecision {
            case_id: case_id.into(),
            final_label,
            decider,
            clinician_minutes,
            warnings_fired,
        })
    }

    pub fn case_id(&self) -> &str {
        &self.case_id
    }

    pub fn final_label(&self) -> DiagnosisClass {
        self.final_label
    }

    pub fn decider(&self) -> Decider {
        self.decider
    }

    pub fn clinician_minutes(&self) -> f64 {
        self.clinician_minutes
    }

    pub fn warnings_fired(&self) -> u32 {
        self.warnings_fired
    }
}

impl TryFrom<FinalDecisionRepr> for FinalDecision {
    type Error = ModelError;

    fn try_from(r: FinalDecisionRepr) -> Result<Self, Self::Error> {
        FinalDecision::new(r.case_id, r.final_label, r.decider, r.clinician_minutes, r.warnings_fired)
    }
}

impl From<FinalDecision> for FinalDecisionRepr {
    fn from(d: FinalDecision) -> Self {
        FinalDecisionRepr {
            case_id: d.case_id,
            final_label: d.final_label,
            decider: d.decider,
            clinician_minutes: d.clinician_minutes,
            warnings_fired: d.warnings_fired,
        }
    }
}

/// One line of the append-only audit trail. `timestamp` is a logical clock.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditRecord {
    pub sequence_number: u64,
    pub pathway_decision: PathwayDecision,
    pub final_decision: FinalDecision,
    pub timestamp: u64,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diagnosis_class_text_round_trip() {
        for &c in DiagnosisClass::ALL {
            assert_eq!(c.as_str().parse::<DiagnosisClass>().unwrap(), c);
            let json = serde_json::to_string(&c).unwrap();
            assert_eq!(json, format!("\"{}\"", c.as_str()));
            assert_eq!(serde_json::from_str::<DiagnosisClass>(&json).unwrap(), c);
        }
        assert_eq!(DiagnosisClass::ALL.len(), 5);
        assert_eq!(DiagnosisClass::ALL.iter().filter(|c| c.is_normal()).count(), 1);
        assert!("maybe".parse::<DiagnosisClass>().is_err());
    }

    #[test]
    fn criticality_orders_urgent_above_non_urgent() {
        use DiagnosisClass::*;
        assert!(NeoplasticUrgent.criticality() > NeoplasticNonUrgent.criticality());
        assert!(NonNeoplasticUrgent.criticality() > NonNeoplasticNonUrgent.criticality());
        assert!(NonNeoplasticNonUrgent.criticality() > Normal.criticality());
    }

    #[test]
    fn qc_failure_never_carries_a_prediction() {
        let a = AiAssessment::qc_failure("c1", QualityStatus::Folded).unwrap();
        assert_eq!(a.predicted_class(), None);
        assert!(AiAssessment::qc_failure("c1", QualityStatus::Pass).is_err());

        let bad = r#"{"case_id":"c1","qc_status":"folded","predicted_class":"normal","raw_score":0.5}"#;
        assert!(serde_json::from_str::<AiAssessment>(bad).is_err());
        let bad = r#"{"case_id":"c1","qc_status":"pass","raw_score":0.5}"#;
        assert!(serde_json::from_str::<AiAssessment>(bad).is_err());
    }

    #[test]
    fn confidence_must_be_in_unit_interval() {
        let a = AiAssessment::prediction("c", DiagnosisClass::Normal, 0.4).unwrap();
        assert!(a.clone().with_calibrated(1.2).is_err());
        assert!(AiAssessment::prediction("c", DiagnosisClass::Normal, -0.1).is_err());
        assert_eq!(a.with_calibrated(0.8).unwrap().confidence(), 0.8);
    }

    #[test]
    fn final_decision_time_invariant() {
        assert!(FinalDecision::new("c", DiagnosisClass::Normal, Decider::Ai, 0.0, 0).is_ok());
        assert!(FinalDecision::new("c", DiagnosisClass::Normal, Decider::Ai, 1.0, 0).is_err());
        assert!(FinalDecision::new("c", DiagnosisClass::Normal, Decider::Clinician, 0.0, 0).is_err());
    }

    #[test]
    fn pathway_serialization() {
        let p = Pathway::ClinicianAndAi { priority: Some(Priority::Urgent) };
        let json = serde_json::to_string(&p).unwrap();
        assert_eq!(json, r#"{"kind":"clinician_and_ai","priority":"urgent"}"#);
        assert_eq!(serde_json::from_str::<Pathway>(&json).unwrap(), p);
        assert_eq!(serde_json::to_string(&Pathway::AiOnly).unwrap(), r#"{"kind":"ai_only"}"#);
    }

    #[test]
    fn case_record_json_uses_snake_case_fields() {
        let case = CaseRecord::new("c-1", DiagnosisClass::Normal, 2.0)
            .with_context("endoscopy", FieldValue::Tag("normal".into()))
            .with_context("transplant_history", FieldValue::Bool(false));
        let json = serde_json::to_string(&case).unwrap();
        assert!(json.contains(r#""true_label":"normal""#));
        assert!(json.contains(r#""review_time_minutes":2.0"#));
        let back: CaseRecord = serde_json::from_str(&json).unwrap();
        assert_eq!(back, case);
    }
}
