//! Canonical rendering of policies.
//!
//! One item per line, two-space indentation, rule identifiers padded so the
//! `when` keywords line up. Parentheses appear only where precedence needs
//! them (and around the operand of `!` unless it is another `!`).

use std::fmt::Write;

use super::ast::{Expr, Literal, Policy};

fn quote(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        if c == '"' || c == '\\' {
            out.push('\\');
        }
        out.push(c);
    }
    out.push('"');
    out
}

fn write_literals(out: &mut String, values: &[Literal]) {
    out.push_str("{ ");
    for (i, v) in values.iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        let _ = write!(out, "{v}");
    }
    out.push_str(" }");
}

fn write_expr(out: &mut String, e: &Expr) {
    match e {
        Expr::Compare { path, op, value } => {
            let _ = write!(out, "{path} {} {value}", op.symbol());
        }
        Expr::In { path, values } => {
            let _ = write!(out, "{path} in ");
            write_literals(out, values);
        }
        Expr::Not(inner) => {
            out.push('!');
            if matches!(**inner, Expr::Not(_)) {
                write_expr(out, inner);
            } else {
                write_grouped(out, inner);
            }
        }
        Expr::And(l, r) => {
            write_operand(out, l, matches!(**l, Expr::Or(..)));
            out.push_str(" && ");
            write_operand(out, r, matches!(**r, Expr::Or(..) | Expr::And(..)));
        }
        Expr::Or(l, r) => {
            write_operand(out, l, false);
            out.push_str(" || ");
            write_operand(out, r, matches!(**r, Expr::Or(..)));
        }
    }
}

fn write_grouped(out: &mut String, e: &Expr) {
    out.push('(');
    write_expr(out, e);
    out.push(')');
}

fn write_operand(out: &mut String, e: &Expr, group: bool) {
    if group {
        write_grouped(out, e);
    } else {
        write_expr(out, e);
    }
}

/// Renders one expression in canonical form.
pub fn format_expr(e: &Expr) -> String {
    let mut out = String::new();
    write_expr(&mut out, e);
    out
}

/// Renders a policy in canonical form. Output always ends with a newline.
pub fn format_policy(policy: &Policy) -> String {
    let mut out = String::new();
    for c in &policy.header_comments {
        let _ = writeln!(out, "#{c}");
    }
    let _ = writeln!(out, "policy {} {{", quote(&policy.name));
    for c in &policy.default_comments {
        let _ = writeln!(out, "  #{c}");
    }
    let _ = writeln!(out, "  default -> {};", policy.default_pathway);
    let width = policy.rules.iter().map(|r| r.rule_id.len()).max().unwrap_or(0) + 1;
    for rule in &policy.rules {
        for c in &rule.comments {
            let _ = writeln!(out, "  #{c}");
        }
        let _ = writeln!(
            out,
            "  rule {:<width$} when {} -> {};",
            rule.rule_id,
            format_expr(&rule.condition),
            rule.target,
        );
    }
    for c in &policy.trailing_comments {
        let _ = writeln!(out, "  #{c}");
    }
    out.push_str("}\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::ast::CmpOp;
    use crate::dsl::parse_policy;

    #[test]
    fn minimal_policy_is_one_item_per_line() {
        let p = parse_policy(r#"policy   "p"{default->clinician_only;}"#).unwrap();
        assert_eq!(format_policy(&p), "policy \"p\" {\n  default -> clinician_only;\n}\n");
    }

    #[test]
    fn parenthesizes_only_where_needed() {
        let a = || Expr::compare("ai.confidence", CmpOp::Ge, Literal::Number(0.9));
        let b = || Expr::compare("qc.status", CmpOp::Eq, Literal::Ident("pass".into()));
        assert_eq!(
            format_expr(&a().or(b()).and(a())),
            "(ai.confidence >= 0.9 || qc.status == pass) && ai.confidence >= 0.9"
        );
        assert_eq!(
            format_expr(&a().and(b().and(a()))),
            "ai.confidence >= 0.9 && (qc.status == pass && ai.confidence >= 0.9)"
        );
        assert_eq!(format_expr(&a().and(b()).or(a())), "ai.confidence >= 0.9 && qc.status == pass || ai.confidence >= 0.9");
        assert_eq!(format_expr(&a().not().not()), "!!(ai.confidence >= 0.9)");
    }

    #[test]
    fn quotes_names_with_escapes() {
        let p = crate::dsl::Policy::new("a \"b\" \\c", crate::model::Pathway::AiOnly, vec![]);
        let text = format_policy(&p);
        assert_eq!(parse_policy(&text).unwrap().name, "a \"b\" \\c");
    }
}
