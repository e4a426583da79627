//! Declared field map for a scenario and case validation against it.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::model::{CaseRecord, DiagnosisClass, FieldValue, QualityStatus, Specimen};

/// Declared type of one field.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum FieldType {
    Bool,
    Number,
    /// Free-form tag.
    Tag,
    /// Tag drawn from a closed value set.
    Enum { values: Vec<String> },
    /// Set of tags, optionally restricted to a vocabulary.
    TagSet {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        values: Option<Vec<String>>,
    },
}

impl FieldType {
    pub fn name(&self) -> &'static str {
        match self {
            FieldType::Bool => "bool",
            FieldType::Number => "number",
            FieldType::Tag => "tag",
            FieldType::Enum { .. } => "enum",
            FieldType::TagSet { .. } => "tag set",
        }
    }

    fn enum_of<T: fmt::Display>(items: &[T]) -> FieldType {
        FieldType::Enum { values: items.iter().map(|v| v.to_string()).collect() }
    }
}

/// Scenario field map: context fields and specimen fields.
///
/// Fields under `ai.*` and `qc.*` are built in and not declared here.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct FieldSchema {
    pub context: BTreeMap<String, FieldType>,
    #[serde(default)]
    pub specimen: BTreeMap<String, FieldType>,
}

/// Roots a field path may start with.
pub const FIELD_ROOTS: &[&str] = &["ai", "case", "context", "qc"];

impl FieldSchema {
    pub fn from_json_str(s: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }

    /// Type of a dotted field path such as `context.endoscopy` or `ai.class`.
    pub fn resolve(&self, path: &[String]) -> Option<FieldType> {
        let [root, name] = path else {
            return None;
        };
        match (root.as_str(), name.as_str()) {
            ("ai", "class") => Some(FieldType::enum_of(DiagnosisClass::ALL)),
            ("ai", "confidence") | ("ai", "raw_score") => Some(FieldType::Number),
            ("qc", "status") => Some(FieldType::enum_of(QualityStatus::ALL)),
            ("case", field) => match self.specimen.get(field) {
                Some(t) => Some(t.clone()),
                None if Specimen::FIELDS.contains(&field) => Some(FieldType::Tag),
                None => None,
            },
            ("context", field) => self.context.get(field).cloned(),
            _ => None,
        }
    }
}

/// One problem found by [`validate_case`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CaseDiagnostic {
    pub field: String,
    pub message: String,
}

impl fmt::Display for CaseDiagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

fn diag(field: impl Into<String>, message: impl Into<String>) -> CaseDiagnostic {
    CaseDiagnostic { field: field.into(), message: message.into() }
}

fn check_value(field: &str, ty: &FieldType, value: &FieldValue, out: &mut Vec<CaseDiagnostic>) {
    match (ty, value) {
        (FieldType::Bool, FieldValue::Bool(_)) => {}
        (FieldType::Number, FieldValue::Number(n)) if n.is_finite() => {}
        (FieldType::Number, FieldValue::Number(n)) => {
            out.push(diag(field, format!("number must be finite, got {n}")))
        }
        (FieldType::Tag, FieldValue::Tag(_)) => {}
        (FieldType::Enum { values }, FieldValue::Tag(t)) => {
            if !values.iter().any(|v| v == t) {
                out.push(diag(
                    field,
                    format!("value `{t}` not in {{{}}}", values.join(", ")),
                ));
            }
        }
        (FieldType::TagSet { values }, FieldValue::TagSet(tags)) => {
            if let Some(vocab) = values {
                for t in tags.iter().filter(|t| !vocab.contains(t)) {
                    out.push(diag(field, format!("tag `{t}` not in {{{}}}", vocab.join(", "))));
                }
            }
        }
        (ty, v) => out.push(diag(
            field,
            format!("expected {}, found {}", ty.name(), v.type_name()),
        )),
    }
}

/// Checks a case against the scenario schema and the case invariants.
///
/// Context fields that are absent are allowed (they read as unknown);
/// fields present but undeclared are reported.
pub fn validate_case(case: &CaseRecord, schema: &FieldSchema) -> Vec<CaseDiagnostic> {
    let mut out = Vec::new();
    if case.case_id.trim().is_empty() {
        out.push(diag("case_id", "must be non-empty"));
    }
    if !(case.review_time_minutes > 0.0 && case.review_time_minutes.is_finite()) {
        out.push(diag(
            "review_time_minutes",
            format!("must be > 0, got {}", case.review_time_minutes),
        ));
    }
    if let Some(entity) = &case.oos_entity {
        if entity.trim().is_empty() {
            out.push(diag("oos_entity", "must be a non-empty tag when present"));
        }
    }
    for (name, value) in &case.context {
        let field = format!("context.{name}");
        match schema.context.get(name) {
            Some(ty) => check_value(&field, ty, value, &mut out),
            None => out.push(diag(field, "field not declared in schema")),
        }
    }
    for (name, ty) in &schema.specimen {
        match case.specimen.get(name) {
            Some(v) => check_value(&format!("case.{name}"), ty, &FieldValue::Tag(v.to_string()), &mut out),
            None => out.push(diag(format!("case.{name}"), "schema declares an unknown specimen field")),
        }
    }
    out
}
