//! Three-valued (Kleene) evaluation of conditions.
//!
//! A comparison that touches a missing field, or a tag recorded as
//! `unknown`, evaluates to [`Tri::Unknown`]. Routing fires a rule only on a
//! definite [`Tri::True`], so missing context can never enable a pathway.

use std::collections::BTreeSet;

use thiserror::Error;

use super::ast::{CmpOp, Expr, FieldPath, Literal};
use crate::model::{AiAssessment, CaseRecord, FieldValue, Tri, UNKNOWN_TAG};

/// Borrowed view of a field value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FieldRef<'a> {
    Bool(bool),
    Number(f64),
    Tag(&'a str),
    TagSet(&'a BTreeSet<String>),
}

impl FieldRef<'_> {
    fn type_name(&self) -> &'static str {
        match self {
            FieldRef::Bool(_) => "bool",
            FieldRef::Number(_) => "number",
            FieldRef::Tag(_) => "tag",
            FieldRef::TagSet(_) => "tag set",
        }
    }
}

impl<'a> From<&'a FieldValue> for FieldRef<'a> {
    fn from(v: &'a FieldValue) -> Self {
        match v {
            FieldValue::Bool(b) => FieldRef::Bool(*b),
            FieldValue::Number(n) => FieldRef::Number(*n),
            FieldValue::Tag(t) => FieldRef::Tag(t),
            FieldValue::TagSet(s) => FieldRef::TagSet(s),
        }
    }
}

/// Anything conditions can be evaluated against. `None` means missing.
pub trait FieldSource {
    fn lookup(&self, path: &FieldPath) -> Option<FieldRef<'_>>;
}

/// Fields visible to policies for one case: specimen and context from the
/// case, QC status and prediction from the AI assessment. Ground truth and
/// out-of-scope entities are not reachable.
pub struct CaseView<'a> {
    pub case: &'a CaseRecord,
    pub ai: &'a AiAssessment,
}

impl FieldSource for CaseView<'_> {
    fn lookup(&self, path: &FieldPath) -> Option<FieldRef<'_>> {
        let [root, name] = path.segments.as_slice() else {
            return None;
        };
        match (root.as_str(), name.as_str()) {
            ("ai", "class") => self.ai.predicted_class().map(|c| FieldRef::Tag(c.as_str())),
            ("ai", "confidence") => self.ai.calibrated_confidence().map(FieldRef::Number),
            ("ai", "raw_score") => {
                self.ai.predicted_class().map(|_| FieldRef::Number(self.ai.raw_score()))
            }
            ("qc", "status") => Some(FieldRef::Tag(self.ai.qc_status().as_str())),
            ("case", field) => self.case.specimen.get(field).map(FieldRef::Tag),
            ("context", field) => self.case.context.get(field).map(FieldRef::from),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("type mismatch at `{path}`: cannot apply `{op}` to {found} and {literal}")]
    TypeMismatch { path: String, op: &'static str, found: &'static str, literal: &'static str },
}

fn mismatch(path: &FieldPath, op: &'static str, found: FieldRef<'_>, lit: &Literal) -> EvalError {
    EvalError::TypeMismatch {
        path: path.to_string(),
        op,
        found: found.type_name(),
        literal: lit.type_name(),
    }
}

fn lookup<'s>(src: &'s impl FieldSource, path: &FieldPath) -> Option<FieldRef<'s>> {
    match src.lookup(path)? {
        FieldRef::Tag(t) if t == UNKNOWN_TAG => None,
        v => Some(v),
    }
}

fn compare(path: &FieldPath, value: FieldRef<'_>, op: CmpOp, lit: &Literal) -> Result<bool, EvalError> {
    let err = || mismatch(path, op.symbol(), value, lit);
    match (value, lit) {
        (FieldRef::Number(a), Literal::Number(b)) => Ok(match op {
            CmpOp::Eq => a == *b,
            CmpOp::Ne => a != *b,
            CmpOp::Lt => a < *b,
            CmpOp::Le => a <= *b,
            CmpOp::Gt => a > *b,
            CmpOp::Ge => a >= *b,
        }),
        (FieldRef::Bool(a), Literal::Bool(b)) if !op.is_ordering() => Ok((a == *b) == (op == CmpOp::Eq)),
        (FieldRef::Tag(a), Literal::Ident(b)) if !op.is_ordering() => Ok((a == b) == (op == CmpOp::Eq)),
        _ => Err(err()),
    }
}

fn member(path: &FieldPath, value: FieldRef<'_>, values: &[Literal]) -> Result<bool, EvalError> {
    if let FieldRef::TagSet(tags) = value {
        let mut hit = false;
        for lit in values {
            match lit {
                Literal::Ident(s) => hit |= tags.contains(s),
                _ => return Err(mismatch(path, "in", value, lit)),
            }
        }
        return Ok(hit);
    }
    let mut hit = false;
    for lit in values {
        hit |= compare(path, value, CmpOp::Eq, lit).map_err(|_| mismatch(path, "in", value, lit))?;
    }
    Ok(hit)
}

pub fn not(a: Tri) -> Tri {
    match a {
        Tri::True => Tri::False,
        Tri::False => Tri::True,
        Tri::Unknown => Tri::Unknown,
    }
}

pub fn and(a: Tri, b: Tri) -> Tri {
    match (a, b) {
        (Tri::False, _) | (_, Tri::False) => Tri::False,
        (Tri::True, Tri::True) => Tri::True,
        _ => Tri::Unknown,
    }
}

pub fn or(a: Tri, b: Tri) -> Tri {
    match (a, b) {
        (Tri::True, _) | (_, Tri::True) => Tri::True,
        (Tri::False, Tri::False) => Tri::False,
        _ => Tri::Unknown,
    }
}

/// Evaluates `expr` against any field source.
pub fn evaluate(expr: &Expr, src: &impl FieldSource) -> Result<Tri, EvalError> {
    Ok(match expr {
        Expr::Compare { path, op, value } => match lookup(src, path) {
            None => Tri::Unknown,
            Some(v) => compare(path, v, *op, value)?.into(),
        },
        Expr::In { path, values } => match lookup(src, path) {
            None => Tri::Unknown,
            Some(v) => member(path, v, values)?.into(),
        },
        Expr::Not(e) => not(evaluate(e, src)?),
        Expr::And(l, r) => and(evaluate(l, src)?, evaluate(r, src)?),
        Expr::Or(l, r) => or(evaluate(l, src)?, evaluate(r, src)?),
    })
}

/// Evaluates `expr` for one case and its AI assessment.
pub fn evaluate_expr(expr: &Expr, case: &CaseRecord, ai: &AiAssessment) -> Result<Tri, EvalError> {
    evaluate(expr, &CaseView { case, ai })
}
