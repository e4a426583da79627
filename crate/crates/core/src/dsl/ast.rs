use std::fmt;

use serde::{Serialize, Serializer};

use crate::model::Pathway;

/// 1-based source position. Positions never take part in equality, so a
/// re-formatted policy compares equal to the original.
#[derive(Debug, Clone, Copy, Default, Serialize)]
pub struct Span {
    pub line: u32,
    pub col: u32,
}

impl PartialEq for Span {
    fn eq(&self, _: &Self) -> bool {
        true
    }
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

/// Dotted field reference such as `context.endoscopy`. Serializes as the
/// dotted string.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldPath {
    pub segments: Vec<String>,
    pub span: Span,
}

impl Serialize for FieldPath {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl FieldPath {
    pub fn new(dotted: &str) -> Self {
        FieldPath { segments: dotted.split('.').map(String::from).collect(), span: Span::default() }
    }

    pub fn root(&self) -> &str {
        &self.segments[0]
    }

    pub fn is(&self, dotted: &str) -> bool {
        self.segments.iter().map(String::as_str).eq(dotted.split('.'))
    }
}

impl fmt::Display for FieldPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.segments.join("."))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum CmpOp {
    #[serde(rename = "==")]
    Eq,
    #[serde(rename = "!=")]
    Ne,
    #[serde(rename = "<")]
    Lt,
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = ">")]
    Gt,
    #[serde(rename = ">=")]
    Ge,
}

impl CmpOp {
    pub const ALL: [CmpOp; 6] = [CmpOp::Eq, CmpOp::Ne, CmpOp::Lt, CmpOp::Le, CmpOp::Gt, CmpOp::Ge];

    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Eq => "==",
            CmpOp::Ne => "!=",
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
        }
    }

    pub fn is_ordering(self) -> bool {
        !matches!(self, CmpOp::Eq | CmpOp::Ne)
    }

    /// Operator `op'` with `!(a op b) == (a op' b)` on present values.
    pub fn negated(self) -> CmpOp {
        match self {
            CmpOp::Eq => CmpOp::Ne,
            CmpOp::Ne => CmpOp::Eq,
            CmpOp::Lt => CmpOp::Ge,
            CmpOp::Le => CmpOp::Gt,
            CmpOp::Gt => CmpOp::Le,
            CmpOp::Ge => CmpOp::Lt,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Literal {
    Bool(bool),
    Number(f64),
    Ident(String),
}

impl Literal {
    pub fn type_name(&self) -> &'static str {
        match self {
            Literal::Bool(_) => "bool",
            Literal::Number(_) => "number",
            Literal::Ident(_) => "identifier",
        }
    }
}

impl fmt::Display for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Literal::Bool(b) => write!(f, "{b}"),
            // `Display` for f64 prints the shortest text that parses back to the same value.
            Literal::Number(n) => write!(f, "{n}"),
            Literal::Ident(s) => f.write_str(s),
        }
    }
}

/// Condition tree.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Expr {
    Compare { path: FieldPath, op: CmpOp, value: Literal },
    In { path: FieldPath, values: Vec<Literal> },
    Not(Box<Expr>),
    And(Box<Expr>, Box<Expr>),
    Or(Box<Expr>, Box<Expr>),
}

impl Expr {
    pub fn compare(path: &str, op: CmpOp, value: Literal) -> Expr {
        Expr::Compare { path: FieldPath::new(path), op, value }
    }

    pub fn member(path: &str, values: Vec<Literal>) -> Expr {
        Expr::In { path: FieldPath::new(path), values }
    }

    pub fn and(self, rhs: Expr) -> Expr {
        Expr::And(Box::new(self), Box::new(rhs))
    }

    pub fn or(self, rhs: Expr) -> Expr {
        Expr::Or(Box::new(self), Box::new(rhs))
    }

    #[allow(clippy::should_implement_trait)]
    pub fn not(self) -> Expr {
        Expr::Not(Box::new(self))
    }

    /// Every field path referenced, in source order.
    pub fn paths(&self) -> Vec<&FieldPath> {
        let mut out = Vec::new();
        self.visit_paths(&mut |p| out.push(p));
        out
    }

    fn visit_paths<'a>(&'a self, f: &mut impl FnMut(&'a FieldPath)) {
        match self {
            Expr::Compare { path, .. } | Expr::In { path, .. } => f(path),
            Expr::Not(e) => e.visit_paths(f),
            Expr::And(l, r) | Expr::Or(l, r) => {
                l.visit_paths(f);
                r.visit_paths(f);
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Rule {
    pub rule_id: String,
    pub condition: Expr,
    pub target: Pathway,
    /// Comment lines directly above the rule, without the leading `#`.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub comments: Vec<String>,
    #[serde(skip)]
    pub span: Span,
}

impl Rule {
    pub fn new(rule_id: impl Into<String>, condition: Expr, target: Pathway) -> Self {
        Rule { rule_id: rule_id.into(), condition, target, comments: Vec::new(), span: Span::default() }
    }
}

/// A parsed delegation-criteria program: ordered rules plus a mandatory default.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Policy {
    pub name: String,
    pub default_pathway: Pathway,
    pub rules: Vec<Rule>,
    /// Comments before the `policy` keyword.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub header_comments: Vec<String>,
    /// Comments directly above the `default` line.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub default_comments: Vec<String>,
    /// Comments after the last rule.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub trailing_comments: Vec<String>,
    #[serde(skip)]
    pub default_span: Span,
}

impl Policy {
    pub fn new(name: impl Into<String>, default_pathway: Pathway, rules: Vec<Rule>) -> Self {
        Policy {
            name: name.into(),
            default_pathway,
            rules,
            header_comments: Vec::new(),
            default_comments: Vec::new(),
            trailing_comments: Vec::new(),
            default_span: Span::default(),
        }
    }

    pub fn rule(&self, rule_id: &str) -> Option<&Rule> {
        self.rules.iter().find(|r| r.rule_id == rule_id)
    }

    /// Replaces the literal of every `ai.confidence >= x` / `ai.confidence > x`
    /// comparison in rule `rule_id` with `tau`. Returns how many literals were
    /// replaced, or `None` if the rule does not exist.
    pub fn set_confidence_threshold(&mut self, rule_id: &str, tau: f64) -> Option<usize> {
        let rule = self.rules.iter_mut().find(|r| r.rule_id == rule_id)?;
        Some(splice(&mut rule.condition, tau))
    }
}

fn splice(e: &mut Expr, tau: f64) -> usize {
    match e {
        Expr::Compare { path, op: CmpOp::Ge | CmpOp::Gt, value: value @ Literal::Number(_) } if path.is("ai.confidence") => {
            *value = Literal::Number(tau);
            1
        }
        Expr::Compare { .. } | Expr::In { .. } => 0,
        Expr::Not(inner) => splice(inner, tau),
        Expr::And(l, r) | Expr::Or(l, r) => splice(l, tau) + splice(r, tau),
    }
}
