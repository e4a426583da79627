//! Generators and independent oracles shared by the property and acceptance
//! tests. Nothing here calls into the evaluator or the PAV fitter.

#![allow(dead_code)]

use std::collections::BTreeSet;

use delegation_core::dsl::{CmpOp, Expr, Literal, Policy, Rule, KEYWORDS};
use delegation_core::model::{
    AiAssessment, CaseRecord, DiagnosisClass, FieldValue, Pathway, Priority, QualityStatus, Tri,
};
use rand::seq::IndexedRandom;
use rand::Rng;

const CLASSES: &[&str] =
    &["normal", "neoplastic_urgent", "neoplastic_non_urgent", "non_neoplastic_urgent", "non_neoplastic_non_urgent"];
const STATUSES: &[&str] = &["pass", "out_of_focus", "folded", "inadequate_tissue", "non_colonic"];
const ENDOSCOPY: &[&str] = &["normal", "abnormal", "unknown"];
const SUSPICIONS: &[&str] = &["gvhd", "ibd", "microscopic_colitis", "spirochetosis"];
const SITES: &[&str] = &["colon", "rectum"];
const NUMBER_GRID: &[f64] = &[0.0, 0.05, 0.1, 0.25, 0.5, 0.75, 0.9, 0.95, 0.99, 0.995, 1.0];

fn ident_literals<R: Rng>(rng: &mut R, pool: &[&str]) -> Vec<Literal> {
    let k = rng.random_range(1..=pool.len().min(3));
    pool.choose_multiple(rng, k).map(|s| Literal::Ident(s.to_string())).collect()
}

fn number<R: Rng>(rng: &mut R) -> f64 {
    if rng.random_bool(0.7) {
        *NUMBER_GRID.choose(rng).unwrap()
    } else {
        f64::from(rng.random_range(0..=1000u32)) / 1000.0
    }
}

fn eq_op<R: Rng>(rng: &mut R) -> CmpOp {
    if rng.random_bool(0.5) {
        CmpOp::Eq
    } else {
        CmpOp::Ne
    }
}

/// A well-typed leaf over the COBIx field set.
pub fn gen_leaf<R: Rng>(rng: &mut R) -> Expr {
    let ops = [CmpOp::Eq, CmpOp::Ne, CmpOp::Lt, CmpOp::Le, CmpOp::Gt, CmpOp::Ge];
    match rng.random_range(0..9) {
        0 => Expr::compare("ai.class", eq_op(rng), Literal::Ident(CLASSES.choose(rng).unwrap().to_string())),
        1 => Expr::member("ai.class", ident_literals(rng, CLASSES)),
        2 => Expr::compare("ai.confidence", *ops.choose(rng).unwrap(), Literal::Number(number(rng))),
        3 => Expr::compare("ai.raw_score", *ops.choose(rng).unwrap(), Literal::Number(number(rng))),
        4 => Expr::compare("qc.status", eq_op(rng), Literal::Ident(STATUSES.choose(rng).unwrap().to_string())),
        5 => Expr::compare("context.endoscopy", eq_op(rng), Literal::Ident(ENDOSCOPY[..2].choose(rng).unwrap().to_string())),
        6 => Expr::compare("context.transplant_history", eq_op(rng), Literal::Bool(rng.random())),
        7 => Expr::member("context.clinical_suspicion", ident_literals(rng, SUSPICIONS)),
        _ => {
            if rng.random_bool(0.5) {
                Expr::compare("case.site", eq_op(rng), Literal::Ident(SITES.choose(rng).unwrap().to_string()))
            } else {
                Expr::member("context.endoscopy", ident_literals(rng, &ENDOSCOPY[..2]))
            }
        }
    }
}

pub fn gen_expr<R: Rng>(rng: &mut R, depth: u32) -> Expr {
    if depth == 0 || rng.random_bool(0.35) {
        return gen_leaf(rng);
    }
    match rng.random_range(0..3) {
        0 => gen_expr(rng, depth - 1).not(),
        1 => gen_expr(rng, depth - 1).and(gen_expr(rng, depth - 1)),
        _ => gen_expr(rng, depth - 1).or(gen_expr(rng, depth - 1)),
    }
}

pub fn gen_pathway<R: Rng>(rng: &mut R) -> Pathway {
    match rng.random_range(0..5) {
        0 => Pathway::AiOnly,
        1 => Pathway::ClinicianOnly,
        2 => Pathway::ClinicianAndAi { priority: None },
        3 => Pathway::ClinicianAndAi { priority: Some(Priority::Urgent) },
        _ => Pathway::ClinicianAndAi { priority: Some(Priority::Routine) },
    }
}

fn gen_ident<R: Rng>(rng: &mut R) -> String {
    loop {
        let len = rng.random_range(1..10);
        let mut s = String::new();
        s.push(rng.random_range(b'a'..=b'z') as char);
        for _ in 1..len {
            let c = match rng.random_range(0..4) {
                0 => '_',
                1 => rng.random_range(b'0'..=b'9') as char,
                _ => rng.random_range(b'a'..=b'z') as char,
            };
            s.push(c);
        }
        if !KEYWORDS.contains(&s.as_str()) {
            return s;
        }
    }
}

fn gen_comments<R: Rng>(rng: &mut R) -> Vec<String> {
    let n = if rng.random_bool(0.7) { 0 } else { rng.random_range(1..3) };
    (0..n)
        .map(|_| {
            let words: Vec<String> = (0..rng.random_range(0..4)).map(|_| gen_ident(rng)).collect();
            let text = words.join(" ");
            if rng.random_bool(0.5) {
                format!(" {text}").trim_end().to_string()
            } else {
                text
            }
        })
        .collect()
}

fn gen_name<R: Rng>(rng: &mut R) -> String {
    let pool = ["a", "b", " ", "-", "\"", "\\", "é", "1", "_"];
    (0..rng.random_range(0..12)).map(|_| *pool.choose(rng).unwrap()).collect()
}

/// A random policy with unique rule ids and comments at item boundaries.
pub fn gen_policy<R: Rng>(rng: &mut R) -> Policy {
    let mut ids = BTreeSet::new();
    let mut rules = Vec::new();
    for _ in 0..rng.random_range(0..7) {
        let id = gen_ident(rng);
        if !ids.insert(id.clone()) {
            continue;
        }
        let mut rule = Rule::new(id, gen_expr(rng, 4), gen_pathway(rng));
        rule.comments = gen_comments(rng);
        rules.push(rule);
    }
    let mut p = Policy::new(gen_name(rng), gen_pathway(rng), rules);
    p.header_comments = gen_comments(rng);
    p.default_comments = gen_comments(rng);
    p.trailing_comments = gen_comments(rng);
    p
}

/// Random case/assessment pair, with missing and `unknown` fields.
pub fn gen_world<R: Rng>(rng: &mut R) -> (CaseRecord, AiAssessment) {
    let mut case = CaseRecord::new("w", DiagnosisClass::Normal, 1.0);
    case.specimen.site = SITES.choose(rng).unwrap().to_string();
    if rng.random_bool(0.85) {
        case = case.with_context("endoscopy", FieldValue::Tag(ENDOSCOPY.choose(rng).unwrap().to_string()));
    }
    if rng.random_bool(0.85) {
        case = case.with_context("transplant_history", FieldValue::Bool(rng.random()));
    }
    if rng.random_bool(0.85) {
        let k = rng.random_range(0..=2);
        let tags = SUSPICIONS.choose_multiple(rng, k).map(|s| s.to_string()).collect();
        case = case.with_context("clinical_suspicion", FieldValue::TagSet(tags));
    }
    let status: QualityStatus = STATUSES.choose(rng).unwrap().parse().unwrap();
    let ai = if status != QualityStatus::Pass && rng.random_bool(0.8) {
        AiAssessment::qc_failure("w", status).unwrap()
    } else {
        let class: DiagnosisClass = CLASSES.choose(rng).unwrap().parse().unwrap();
        let a = AiAssessment::prediction("w", class, number(rng)).unwrap();
        if rng.random_bool(0.8) {
            a.with_calibrated(number(rng)).unwrap()
        } else {
            a
        }
    };
    (case, ai)
}

// ---- three-valued reference ----------------------------------------------

/// Truth degrees 0, 1/2, 1 with min/max/complement.
fn degree(b: Option<bool>) -> u8 {
    match b {
        Some(false) => 0,
        None => 1,
        Some(true) => 2,
    }
}

fn to_tri(d: u8) -> Tri {
    match d {
        0 => Tri::False,
        1 => Tri::Unknown,
        _ => Tri::True,
    }
}

enum Val {
    Num(f64),
    Tag(String),
    Bool(bool),
    Set(BTreeSet<String>),
}

fn field(case: &CaseRecord, ai: &AiAssessment, path: &str) -> Option<Val> {
    let v = match path {
        "ai.class" => Val::Tag(ai.predicted_class()?.to_string()),
        "ai.confidence" => Val::Num(ai.calibrated_confidence()?),
        "ai.raw_score" => {
            ai.predicted_class()?;
            Val::Num(ai.raw_score())
        }
        "qc.status" => Val::Tag(ai.qc_status().to_string()),
        "case.site" => Val::Tag(case.specimen.site.clone()),
        p => match case.context.get(p.strip_prefix("context.")?)? {
            FieldValue::Bool(b) => Val::Bool(*b),
            FieldValue::Number(n) => Val::Num(*n),
            FieldValue::Tag(t) => Val::Tag(t.clone()),
            FieldValue::TagSet(s) => Val::Set(s.clone()),
        },
    };
    match v {
        Val::Tag(t) if t == "unknown" => None,
        v => Some(v),
    }
}

fn lit_matches(v: &Val, lit: &Literal) -> bool {
    match (v, lit) {
        (Val::Num(a), Literal::Number(b)) => a == b,
        (Val::Bool(a), Literal::Bool(b)) => a == b,
        (Val::Tag(a), Literal::Ident(b)) => a == b,
        (Val::Set(s), Literal::Ident(b)) => s.contains(b),
        _ => panic!("generator produced an ill-typed leaf"),
    }
}

fn leaf(case: &CaseRecord, ai: &AiAssessment, e: &Expr) -> Option<bool> {
    match e {
        Expr::Compare { path, op, value } => {
            let v = field(case, ai, &path.to_string())?;
            Some(match (op, &v, value) {
                (CmpOp::Eq, ..) => lit_matches(&v, value),
                (CmpOp::Ne, ..) => !lit_matches(&v, value),
                (CmpOp::Lt, Val::Num(a), Literal::Number(b)) => a < b,
                (CmpOp::Le, Val::Num(a), Literal::Number(b)) => a <= b,
                (CmpOp::Gt, Val::Num(a), Literal::Number(b)) => a > b,
                (CmpOp::Ge, Val::Num(a), Literal::Number(b)) => a >= b,
                _ => panic!("generator produced an ill-typed ordering"),
            })
        }
        Expr::In { path, values } => {
            let v = field(case, ai, &path.to_string())?;
            Some(values.iter().any(|l| lit_matches(&v, l)))
        }
        _ => unreachable!(),
    }
}

fn reference_degree(e: &Expr, case: &CaseRecord, ai: &AiAssessment) -> u8 {
    match e {
        Expr::Not(x) => 2 - reference_degree(x, case, ai),
        Expr::And(l, r) => reference_degree(l, case, ai).min(reference_degree(r, case, ai)),
        Expr::Or(l, r) => reference_degree(l, case, ai).max(reference_degree(r, case, ai)),
        leafy => degree(leaf(case, ai, leafy)),
    }
}

/// Reference Kleene evaluation, written independently of the library evaluator.
pub fn reference_eval(e: &Expr, case: &CaseRecord, ai: &AiAssessment) -> Tri {
    to_tri(reference_degree(e, case, ai))
}

/// Reference routing: first rule whose reference value is true.
pub fn reference_route(p: &Policy, case: &CaseRecord, ai: &AiAssessment) -> (Pathway, String) {
    for r in &p.rules {
        if reference_eval(&r.condition, case, ai) == Tri::True {
            return (r.target, r.rule_id.clone());
        }
    }
    (p.default_pathway, "default".into())
}

// ---- brute-force isotonic fit --------------------------------------------

/// Least-squares monotone fit by enumerating every split of the distinct
/// sorted scores into contiguous blocks. Returns `(score, fitted)` per
/// distinct score.
pub fn isotonic_bruteforce(scores: &[f64], correct: &[bool]) -> Vec<(f64, f64)> {
    let mut pairs: Vec<(f64, bool)> = scores.iter().copied().zip(correct.iter().copied()).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut groups: Vec<(f64, f64, f64)> = Vec::new(); // (score, hits, n)
    for (s, c) in pairs {
        match groups.last_mut() {
            Some(g) if g.0 == s => {
                g.1 += f64::from(u8::from(c));
                g.2 += 1.0;
            }
            _ => groups.push((s, f64::from(u8::from(c)), 1.0)),
        }
    }
    let g = groups.len();
    let mut best: Option<(f64, Vec<f64>)> = None;
    for mask in 0u32..(1 << (g - 1)) {
        // Bit i set = a block boundary after group i.
        let mut fitted = vec![0.0; g];
        let mut start = 0;
        let mut prev = f64::NEG_INFINITY;
        let mut ok = true;
        let mut sse = 0.0;
        for i in 0..g {
            if i == g - 1 || mask & (1 << i) != 0 {
                let hits: f64 = groups[start..=i].iter().map(|x| x.1).sum();
                let n: f64 = groups[start..=i].iter().map(|x| x.2).sum();
                let mean = hits / n;
                if mean < prev {
                    ok = false;
                    break;
                }
                prev = mean;
                // Sum of squared residuals for binary outcomes around `mean`.
                sse += hits * (1.0 - mean).powi(2) + (n - hits) * mean.powi(2);
                fitted[start..=i].iter_mut().for_each(|f| *f = mean);
                start = i + 1;
            }
        }
        if ok && best.as_ref().is_none_or(|(b, _)| sse < *b - 1e-12) {
            best = Some((sse, fitted));
        }
    }
    let fitted = best.expect("the single-block fit is always monotone").1;
    groups.iter().zip(fitted).map(|(g, f)| (g.0, f)).collect()
}

/// Every binary-outcome input of length `n` up to score order: one score per
/// tie group (compositions of `n`) times every correctness pattern, with the
/// input order scrambled.
pub fn binary_inputs(n: usize) -> Vec<(Vec<f64>, Vec<bool>)> {
    let mut out = Vec::new();
    for comp in 0u32..(1 << (n - 1)) {
        let mut scores = Vec::with_capacity(n);
        let mut level = 1;
        for i in 0..n {
            scores.push(f64::from(level) / 10.0);
            if i + 1 < n && comp & (1 << i) != 0 {
                level += 1;
            }
        }
        for pattern in 0u32..(1 << n) {
            let correct: Vec<bool> = (0..n).map(|i| pattern & (1 << i) != 0).collect();
            // Deterministic scramble: reverse odd patterns, rotate the rest.
            let mut idx: Vec<usize> = (0..n).collect();
            if pattern % 2 == 1 {
                idx.reverse();
            } else {
                idx.rotate_left((pattern as usize) % n);
            }
            out.push((idx.iter().map(|&i| scores[i]).collect(), idx.iter().map(|&i| correct[i]).collect()));
        }
    }
    out
}
