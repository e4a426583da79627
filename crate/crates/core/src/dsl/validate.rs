//! Static checks on a parsed policy against a scenario schema.

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use serde::Serialize;

use super::ast::{CmpOp, Expr, FieldPath, Literal, Policy, Span};
use super::eval;
use super::format::format_expr;
use crate::model::{Pathway, QualityStatus, Tri, UNKNOWN_TAG};
use crate::schema::{FieldSchema, FieldType, FIELD_ROOTS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DiagnosticKind {
    UnknownField,
    TypeMismatch,
    UnknownValue,
    UnknownSentinel,
    DuplicateRule,
    UnreachableRule,
    Safety,
}

impl DiagnosticKind {
    pub fn as_str(self) -> &'static str {
        match self {
            DiagnosticKind::UnknownField => "unknown field",
            DiagnosticKind::TypeMismatch => "type mismatch",
            DiagnosticKind::UnknownValue => "unknown value",
            DiagnosticKind::UnknownSentinel => "unknown sentinel",
            DiagnosticKind::DuplicateRule => "duplicate rule",
            DiagnosticKind::UnreachableRule => "unreachable rule",
            DiagnosticKind::Safety => "safety violation",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PolicyDiagnostic {
    pub kind: DiagnosticKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rule_id: Option<String>,
    pub line: u32,
    pub col: u32,
    pub message: String,
}

impl fmt::Display for PolicyDiagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}: {}: {}", self.line, self.col, self.kind.as_str(), self.message)
    }
}

struct Collector<'a> {
    schema: &'a FieldSchema,
    rule_id: Option<String>,
    out: Vec<PolicyDiagnostic>,
}

impl Collector<'_> {
    fn push(&mut self, kind: DiagnosticKind, span: Span, message: String) {
        self.out.push(PolicyDiagnostic {
            kind,
            rule_id: self.rule_id.clone(),
            line: span.line,
            col: span.col,
            message,
        });
    }

    fn resolve(&mut self, path: &FieldPath) -> Option<FieldType> {
        let ty = if FIELD_ROOTS.contains(&path.root()) { self.schema.resolve(&path.segments) } else { None };
        if ty.is_none() {
            self.push(DiagnosticKind::UnknownField, path.span, format!("unknown field `{path}`"));
        }
        ty
    }

    /// Checks one literal against the field type; `op` is `in` for membership.
    fn check_literal(&mut self, path: &FieldPath, ty: &FieldType, op: &str, lit: &Literal) {
        let ok_type = matches!(
            (ty, lit),
            (FieldType::Number, Literal::Number(_))
                | (FieldType::Bool, Literal::Bool(_))
                | (FieldType::Tag | FieldType::Enum { .. } | FieldType::TagSet { .. }, Literal::Ident(_))
        );
        if !ok_type {
            self.push(
                DiagnosticKind::TypeMismatch,
                path.span,
                format!("`{path} {op} {lit}` compares a {} field with a {} literal", ty.name(), lit.type_name()),
            );
            return;
        }
        let Literal::Ident(value) = lit else { return };
        if value == UNKNOWN_TAG {
            self.push(
                DiagnosticKind::UnknownSentinel,
                path.span,
                format!("`{path} {op} {value}` can never be true: `{UNKNOWN_TAG}` always evaluates as unknown"),
            );
            return;
        }
        let vocab = match ty {
            FieldType::Enum { values } => Some(values),
            FieldType::TagSet { values } => values.as_ref(),
            _ => None,
        };
        if let Some(vocab) = vocab {
            if !vocab.contains(value) {
                self.push(
                    DiagnosticKind::UnknownValue,
                    path.span,
                    format!("`{value}` is not a value of `{path}` (expected one of {})", vocab.join(", ")),
                );
            }
        }
    }

    fn check_expr(&mut self, e: &Expr) {
        match e {
            Expr::Compare { path, op, value } => {
                let Some(ty) = self.resolve(path) else { return };
                let op_ok = match ty {
                    FieldType::Number => true,
                    FieldType::Bool | FieldType::Tag | FieldType::Enum { .. } => !op.is_ordering(),
                    FieldType::TagSet { .. } => false,
                };
                if !op_ok {
                    let hint = if matches!(ty, FieldType::TagSet { .. }) { "; use `in`" } else { "" };
                    self.push(
                        DiagnosticKind::TypeMismatch,
                        path.span,
                        format!("operator `{}` is not defined for {} field `{path}`{hint}", op.symbol(), ty.name()),
                    );
                    return;
                }
                self.check_literal(path, &ty, op.symbol(), value);
            }
            Expr::In { path, values } => {
                let Some(ty) = self.resolve(path) else { return };
                for v in values {
                    self.check_literal(path, &ty, "in", v);
                }
            }
            Expr::Not(inner) => self.check_expr(inner),
            Expr::And(l, r) | Expr::Or(l, r) => {
                self.check_expr(l);
                self.check_expr(r);
            }
        }
    }
}

/// Negation-normal, flattened, sorted rendering used to detect rules whose
/// condition repeats an earlier one. Every rewrite is valid under Kleene logic.
fn normalized(e: &Expr, negate: bool) -> String {
    match e {
        Expr::Compare { path, op, value } => {
            let op = if negate { op.negated() } else { *op };
            format_expr(&Expr::Compare { path: path.clone(), op, value: value.clone() })
        }
        Expr::In { path, values } => {
            let set: BTreeSet<String> = values.iter().map(|v| v.to_string()).collect();
            let text = if set.len() == 1 {
                let op = if negate { CmpOp::Ne } else { CmpOp::Eq };
                format!("{path} {} {}", op.symbol(), set.iter().next().unwrap())
            } else {
                let body = set.into_iter().collect::<Vec<_>>().join(", ");
                let text = format!("{path} in {{ {body} }}");
                if negate { format!("!({text})") } else { text }
            };
            text
        }
        Expr::Not(inner) => normalized(inner, !negate),
        Expr::And(..) | Expr::Or(..) => {
            let is_and = matches!(e, Expr::And(..)) != negate;
            let mut parts = BTreeSet::new();
            collect_junction(e, negate, is_and, &mut parts);
            let sep = if is_and { " && " } else { " || " };
            let body = parts.into_iter().collect::<Vec<_>>().join(sep);
            format!("({body})")
        }
    }
}

fn collect_junction(e: &Expr, negate: bool, is_and: bool, parts: &mut BTreeSet<String>) {
    match e {
        Expr::And(l, r) | Expr::Or(l, r) if (matches!(e, Expr::And(..)) != negate) == is_and => {
            collect_junction(l, negate, is_and, parts);
            collect_junction(r, negate, is_and, parts);
        }
        Expr::Not(inner) if matches!(**inner, Expr::And(..) | Expr::Or(..) | Expr::Not(_)) => {
            collect_junction(inner, !negate, is_and, parts)
        }
        _ => {
            parts.insert(normalized(e, negate));
        }
    }
}

/// Canonical form of a condition; equal strings mean equivalent conditions.
pub fn normalize_condition(e: &Expr) -> String {
    normalized(e, false)
}

/// Possible truth values of `e` over every case whose slide failed QC.
/// Bit 0 = true, bit 1 = false, bit 2 = unknown.
fn outcomes_when_qc_fails(e: &Expr) -> u8 {
    const ALL: u8 = 0b111;
    let bit = |t: Tri| match t {
        Tri::True => 1,
        Tri::False => 2,
        Tri::Unknown => 4,
    };
    let tris = |mask: u8| {
        [Tri::True, Tri::False, Tri::Unknown].into_iter().filter(move |t| mask & bit(*t) != 0)
    };
    let combine = |a: u8, b: u8, f: fn(Tri, Tri) -> Tri| {
        tris(a).flat_map(|x| tris(b).map(move |y| bit(f(x, y)))).fold(0, |m, v| m | v)
    };
    match e {
        Expr::Compare { path, .. } | Expr::In { path, .. } => match path.root() {
            "ai" => bit(Tri::Unknown),
            "qc" if path.is("qc.status") => {
                struct Qc(QualityStatus);
                impl eval::FieldSource for Qc {
                    fn lookup(&self, path: &FieldPath) -> Option<eval::FieldRef<'_>> {
                        path.is("qc.status").then(|| eval::FieldRef::Tag(self.0.as_str()))
                    }
                }
                QualityStatus::ALL
                    .iter()
                    .filter(|q| !q.is_pass())
                    .map(|q| eval::evaluate(e, &Qc(*q)).map(bit).unwrap_or(ALL))
                    .fold(0, |m, v| m | v)
            }
            _ => ALL,
        },
        Expr::Not(inner) => tris(outcomes_when_qc_fails(inner)).map(|t| bit(eval::not(t))).fold(0, |m, v| m | v),
        Expr::And(l, r) => combine(outcomes_when_qc_fails(l), outcomes_when_qc_fails(r), eval::and),
        Expr::Or(l, r) => combine(outcomes_when_qc_fails(l), outcomes_when_qc_fails(r), eval::or),
    }
}

/// Returns every problem found; an empty list means the policy is valid.
///
/// With `safety_profile`, the default must be `clinician_only` and no rule
/// targeting `ai_only` may be able to fire for a slide that failed QC.
pub fn validate_policy(policy: &Policy, schema: &FieldSchema, safety_profile: bool) -> Vec<PolicyDiagnostic> {
    let mut c = Collector { schema, rule_id: None, out: Vec::new() };
    if safety_profile && policy.default_pathway != Pathway::ClinicianOnly {
        c.push(
            DiagnosticKind::Safety,
            policy.default_span,
            format!("default must be clinician_only, found {}", policy.default_pathway),
        );
    }
    let mut seen_ids: HashMap<&str, Span> = HashMap::new();
    let mut seen_conditions: HashMap<String, &str> = HashMap::new();
    for rule in &policy.rules {
        c.rule_id = Some(rule.rule_id.clone());
        if let Some(first) = seen_ids.get(rule.rule_id.as_str()) {
            c.push(
                DiagnosticKind::DuplicateRule,
                rule.span,
                format!("rule id `{}` already defined at {first}", rule.rule_id),
            );
        } else {
            seen_ids.insert(&rule.rule_id, rule.span);
        }
        c.check_expr(&rule.condition);
        let norm = normalize_condition(&rule.condition);
        if let Some(earlier) = seen_conditions.get(&norm) {
            c.push(
                DiagnosticKind::UnreachableRule,
                rule.span,
                format!("rule `{}` can never fire: earlier rule `{earlier}` has the same condition", rule.rule_id),
            );
        } else {
            seen_conditions.insert(norm, &rule.rule_id);
        }
        if safety_profile && rule.target == Pathway::AiOnly && outcomes_when_qc_fails(&rule.condition) & 1 != 0 {
            c.push(
                DiagnosticKind::Safety,
                rule.span,
                format!("rule `{}` routes to ai_only but can fire for a slide that failed QC", rule.rule_id),
            );
        }
    }
    c.out
}
