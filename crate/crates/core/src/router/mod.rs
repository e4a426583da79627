//! Routing: from a case and its AI assessment to a final decision.
//!
//! [`select_pathway`] runs the delegation policy (first definite `true`
//! wins), [`resolve_case`] turns the chosen pathway into a diagnosis, and
//! [`run_modality`] covers the baseline workflows (unaided, sequential,
//! concurrent, CoDoc, HCN auto-report, decision referral) next to the policy
//! driven one so they can be compared on the same cases.

mod audit;

use thiserror::Error;

pub use audit::{load_audit_log, AuditError, AuditLog, AuditWriter};

use crate::agents::{clinician_read, clinician_with_ai, AgentError, ClinicianProfile, InteractionConfig};
use crate::dsl::{evaluate_expr, validate_policy, Policy, PolicyDiagnostic};
use crate::model::{
    AiAssessment, CaseRecord, Decider, FinalDecision, ModalityKind, ModelError, Pathway, PathwayDecision, TraceEntry,
    Tri, DEFAULT_RULE,
};
use crate::schema::FieldSchema;

/// Rule id recorded when a baseline modality hands the case to the AI.
pub const CONFIDENT_RULE: &str = "confident";

#[derive(Debug, Error)]
pub enum RouterError {
    #[error("{modality}: cutoff {value} must lie in [0, 1]")]
    InvalidCutoff { modality: ModalityKind, value: f64 },
    #[error("policy `{name}` failed validation:\n{}", format_diagnostics(.diagnostics))]
    InvalidPolicy { name: String, diagnostics: Vec<PolicyDiagnostic> },
    #[error("AI assessment is for `{ai}` but the case is `{case}`")]
    CaseMismatch { case: String, ai: String },
    #[error("case `{case_id}` routed to ai_only without an AI prediction (qc_status = {qc})")]
    AiOnlyWithoutPrediction { case_id: String, qc: crate::model::QualityStatus },
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

fn format_diagnostics(d: &[PolicyDiagnostic]) -> String {
    d.iter().map(|d| format!("  {d}")).collect::<Vec<_>>().join("\n")
}

/// A workflow together with its parameters. Construct through the checked
/// constructors; parameters cannot be missing at run time.
#[derive(Debug, Clone, PartialEq)]
pub enum Modality {
    Unaided,
    Sequential,
    Concurrent,
    Codoc { cutoff: f64 },
    HcnAutoreport { normal_cutoff: f64 },
    DecisionReferral { normal_cutoff: f64, warning_cutoff: f64 },
    AutonomousDecisionSupport { policy: Box<Policy> },
}

fn cutoff(modality: ModalityKind, value: f64) -> Result<f64, RouterError> {
    if (0.0..=1.0).contains(&value) {
        Ok(value)
    } else {
        Err(RouterError::InvalidCutoff { modality, value })
    }
}

impl Modality {
    pub fn codoc(c: f64) -> Result<Self, RouterError> {
        Ok(Modality::Codoc { cutoff: cutoff(ModalityKind::Codoc, c)? })
    }

    pub fn hcn_autoreport(normal_cutoff: f64) -> Result<Self, RouterError> {
        Ok(Modality::HcnAutoreport { normal_cutoff: cutoff(ModalityKind::HcnAutoreport, normal_cutoff)? })
    }

    pub fn decision_referral(normal_cutoff: f64, warning_cutoff: f64) -> Result<Self, RouterError> {
        Ok(Modality::DecisionReferral {
            normal_cutoff: cutoff(ModalityKind::DecisionReferral, normal_cutoff)?,
            warning_cutoff: cutoff(ModalityKind::DecisionReferral, warning_cutoff)?,
        })
    }

    /// Policy-driven routing. The policy must validate cleanly against
    /// `schema` under the safety profile.
    pub fn autonomous(policy: Policy, schema: &FieldSchema) -> Result<Self, RouterError> {
        let diagnostics = validate_policy(&policy, schema, true);
        if !diagnostics.is_empty() {
            return Err(RouterError::InvalidPolicy { name: policy.name.clone(), diagnostics });
        }
        Ok(Modality::AutonomousDecisionSupport { policy: Box::new(policy) })
    }

    pub fn kind(&self) -> ModalityKind {
        match self {
            Modality::Unaided => ModalityKind::Unaided,
            Modality::Sequential => ModalityKind::Sequential,
            Modality::Concurrent => ModalityKind::Concurrent,
            Modality::Codoc { .. } => ModalityKind::Codoc,
            Modality::HcnAutoreport { .. } => ModalityKind::HcnAutoreport,
            Modality::DecisionReferral { .. } => ModalityKind::DecisionReferral,
            Modality::AutonomousDecisionSupport { .. } => ModalityKind::AutonomousDecisionSupport,
        }
    }
}

/// Runs the policy over one case. Every rule up to the fired one is traced.
/// A condition that cannot be evaluated counts as `unknown` and never fires.
pub fn select_pathway(policy: &Policy, case: &CaseRecord, ai: &AiAssessment) -> PathwayDecision {
    let mut trace = Vec::new();
    for rule in &policy.rules {
        let result = evaluate_expr(&rule.condition, case, ai).unwrap_or(Tri::Unknown);
        trace.push(TraceEntry { rule_id: rule.rule_id.clone(), result });
        if result.is_true() {
            return PathwayDecision {
                case_id: case.case_id.clone(),
                pathway: rule.target,
                fired_rule: rule.rule_id.clone(),
                trace,
            };
        }
    }
    PathwayDecision {
        case_id: case.case_id.clone(),
        pathway: policy.default_pathway,
        fired_rule: DEFAULT_RULE.into(),
        trace,
    }
}

fn check_ids(case: &CaseRecord, ai: &AiAssessment) -> Result<(), RouterError> {
    if case.case_id == ai.case_id() {
        Ok(())
    } else {
        Err(RouterError::CaseMismatch { case: case.case_id.clone(), ai: ai.case_id().into() })
    }
}

fn ai_decides(case: &CaseRecord, ai: &AiAssessment) -> Result<FinalDecision, RouterError> {
    let label = ai.predicted_class().ok_or_else(|| RouterError::AiOnlyWithoutPrediction {
        case_id: case.case_id.clone(),
        qc: ai.qc_status(),
    })?;
    Ok(FinalDecision::new(case.case_id.clone(), label, Decider::Ai, 0.0, 0)?)
}

fn clinician_alone(case: &CaseRecord, clinician: &ClinicianProfile, rng: &mut impl rand::Rng) -> Result<FinalDecision, RouterError> {
    let (label, minutes) = clinician_read(clinician, case, rng);
    Ok(FinalDecision::new(case.case_id.clone(), label, Decider::Clinician, minutes, 0)?)
}

/// Clinician with AI support; falls back to an unaided read when QC left
/// nothing to show.
fn clinician_assisted(
    case: &CaseRecord,
    ai: &AiAssessment,
    clinician: &ClinicianProfile,
    mode: ModalityKind,
    interaction: &InteractionConfig,
    rng: &mut impl rand::Rng,
) -> Result<FinalDecision, RouterError> {
    if ai.predicted_class().is_none() {
        return clinician_alone(case, clinician, rng);
    }
    let read = clinician_with_ai(clinician, case, ai, mode, interaction, rng)?;
    Ok(FinalDecision::new(case.case_id.clone(), read.label, Decider::ClinicianWithAi, read.minutes, read.warnings_fired)?)
}

/// Turns a pathway into a final decision. `clinician_and_ai` uses the
/// anchoring weight configured for autonomous decision support.
pub fn resolve_case(
    decision: &PathwayDecision,
    case: &CaseRecord,
    ai: &AiAssessment,
    clinician: &ClinicianProfile,
    interaction: &InteractionConfig,
    rng: &mut impl rand::Rng,
) -> Result<FinalDecision, RouterError> {
    check_ids(case, ai)?;
    match decision.pathway {
        Pathway::AiOnly => ai_decides(case, ai),
        Pathway::ClinicianOnly => clinician_alone(case, clinician, rng),
        Pathway::ClinicianAndAi { .. } => {
            clinician_assisted(case, ai, clinician, ModalityKind::AutonomousDecisionSupport, interaction, rng)
        }
    }
}

fn baseline_decision(case: &CaseRecord, confident: Option<bool>, otherwise: Pathway) -> PathwayDecision {
    let (pathway, fired_rule, trace) = match confident {
        None => (otherwise, DEFAULT_RULE.to_string(), vec![]),
        Some(hit) => {
            let entry = TraceEntry { rule_id: CONFIDENT_RULE.into(), result: hit.into() };
            if hit {
                (Pathway::AiOnly, CONFIDENT_RULE.to_string(), vec![entry])
            } else {
                (otherwise, DEFAULT_RULE.to_string(), vec![entry])
            }
        }
    };
    PathwayDecision { case_id: case.case_id.clone(), pathway, fired_rule, trace }
}

fn hcn(ai: &AiAssessment, normal_cutoff: f64) -> bool {
    ai.predicted_class().is_some_and(|c| c.is_normal()) && ai.confidence() >= normal_cutoff
}

/// Runs one modality on one case. `ai` is the (calibrated) assessment shared
/// by all modalities; `rng` is the case's clinician stream, so modalities see
/// the same clinician draws for the same case.
pub fn run_modality(
    modality: &Modality,
    case: &CaseRecord,
    ai: &AiAssessment,
    clinician: &ClinicianProfile,
    interaction: &InteractionConfig,
    rng: &mut impl rand::Rng,
) -> Result<(PathwayDecision, FinalDecision), RouterError> {
    check_ids(case, ai)?;
    let assisted = Pathway::ClinicianAndAi { priority: None };
    match modality {
        Modality::Unaided => {
            let d = baseline_decision(case, None, Pathway::ClinicianOnly);
            Ok((d, clinician_alone(case, clinician, rng)?))
        }
        Modality::Sequential | Modality::Concurrent => {
            let pathway = if ai.predicted_class().is_some() { assisted } else { Pathway::ClinicianOnly };
            let d = baseline_decision(case, None, pathway);
            Ok((d, clinician_assisted(case, ai, clinician, modality.kind(), interaction, rng)?))
        }
        Modality::Codoc { cutoff } => {
            let confident = ai.predicted_class().is_some() && ai.confidence() >= *cutoff;
            let d = baseline_decision(case, Some(confident), Pathway::ClinicianOnly);
            let f = if confident { ai_decides(case, ai)? } else { clinician_alone(case, clinician, rng)? };
            Ok((d, f))
        }
        Modality::HcnAutoreport { normal_cutoff } => {
            let confident = hcn(ai, *normal_cutoff);
            let d = baseline_decision(case, Some(confident), Pathway::ClinicianOnly);
            let f = if confident { ai_decides(case, ai)? } else { clinician_alone(case, clinician, rng)? };
            Ok((d, f))
        }
        Modality::DecisionReferral { normal_cutoff, warning_cutoff } => {
            let confident = hcn(ai, *normal_cutoff);
            let otherwise = if ai.predicted_class().is_some() { assisted } else { Pathway::ClinicianOnly };
            let d = baseline_decision(case, Some(confident), otherwise);
            let f = if confident {
                ai_decides(case, ai)?
            } else {
                let cfg = InteractionConfig { confident_abnormal_cutoff: *warning_cutoff, ..*interaction };
                clinician_assisted(case, ai, clinician, ModalityKind::DecisionReferral, &cfg, rng)?
            };
            Ok((d, f))
        }
        Modality::AutonomousDecisionSupport { policy } => {
            let d = select_pathway(policy, case, ai);
            let f = resolve_case(&d, case, ai, clinician, interaction, rng)?;
            Ok((d, f))
        }
    }
}
