//! Randomised checks of the criteria language against independent oracles.

mod support;

use delegation_core::dsl::{evaluate_expr, format_policy, parse_policy, validate_policy, Expr};
use delegation_core::model::{AiAssessment, CaseRecord, FieldValue, Pathway, QualityStatus, Tri};
use delegation_core::reference::cobix_schema;
use delegation_core::router::select_pathway;
use delegation_core::rng::stream;
use rand::Rng;
use support::{gen_expr, gen_leaf, gen_policy, gen_world, reference_eval, reference_route};

#[test]
fn format_then_parse_is_identity_on_random_policies() {
    let mut rng = stream(0xD51);
    for i in 0..10_000 {
        let p = gen_policy(&mut rng);
        let text = format_policy(&p);
        let back = parse_policy(&text).unwrap_or_else(|e| panic!("policy {i}: {e}\n{text}"));
        assert_eq!(back, p, "policy {i}:\n{text}");
        assert_eq!(format_policy(&back), text, "policy {i} is not a fixpoint");
    }
}

#[test]
fn evaluator_matches_reference_on_random_pairs() {
    let mut rng = stream(0xE7A1);
    for i in 0..10_000 {
        let e = gen_expr(&mut rng, 5);
        let (case, ai) = gen_world(&mut rng);
        let got = evaluate_expr(&e, &case, &ai).expect("generated expressions are well typed");
        assert_eq!(got, reference_eval(&e, &case, &ai), "pair {i}: {e:?}");
    }
}

#[test]
fn routing_matches_reference_and_traces_up_to_the_fired_rule() {
    let mut rng = stream(0x20u64);
    for _ in 0..2_000 {
        let p = gen_policy(&mut rng);
        let (case, ai) = gen_world(&mut rng);
        let d = select_pathway(&p, &case, &ai);
        let (pathway, fired) = reference_route(&p, &case, &ai);
        assert_eq!((d.pathway, d.fired_rule.clone()), (pathway, fired));
        let (last, earlier) = match d.trace.split_last() {
            Some(x) => x,
            None => {
                assert!(p.rules.is_empty() || d.fired_rule == "default");
                continue;
            }
        };
        assert!(earlier.iter().all(|t| t.result != Tri::True));
        if d.fired_rule == "default" {
            assert_eq!(d.trace.len(), p.rules.len());
            assert_ne!(last.result, Tri::True);
        } else {
            assert_eq!(last.result, Tri::True);
            assert_eq!(last.rule_id, d.fired_rule);
        }
    }
}

/// Fills every missing or unknown context field with a concrete value.
fn complete(case: &CaseRecord, rng: &mut impl Rng) -> CaseRecord {
    let mut c = case.clone();
    let endo = ["normal", "abnormal"][rng.random_range(0..2)];
    let unknown = |v: Option<&FieldValue>| v.is_none_or(FieldValue::is_unknown);
    if unknown(c.context.get("endoscopy")) {
        c.context.insert("endoscopy".into(), FieldValue::Tag(endo.into()));
    }
    if unknown(c.context.get("transplant_history")) {
        c.context.insert("transplant_history".into(), FieldValue::Bool(rng.random()));
    }
    if unknown(c.context.get("clinical_suspicion")) {
        let tags = ["gvhd", "ibd", "spirochetosis"].iter().filter(|_| rng.random_bool(0.5)).map(|s| s.to_string());
        c.context.insert("clinical_suspicion".into(), FieldValue::TagSet(tags.collect()));
    }
    c
}

#[test]
fn definite_results_survive_any_completion_of_missing_context() {
    let mut rng = stream(0x50u64);
    for _ in 0..5_000 {
        let e = gen_expr(&mut rng, 4);
        let (case, ai) = gen_world(&mut rng);
        let before = evaluate_expr(&e, &case, &ai).unwrap();
        if before == Tri::Unknown {
            continue;
        }
        for _ in 0..4 {
            let filled = complete(&case, &mut rng);
            assert_eq!(evaluate_expr(&e, &filled, &ai).unwrap(), before, "{e:?}");
        }
    }
}

/// Policies with a clinician-only default and `ai_only` rules guarded by
/// random conditions.
fn safety_candidate(rng: &mut impl Rng) -> delegation_core::dsl::Policy {
    let mut p = gen_policy(rng);
    p.default_pathway = Pathway::ClinicianOnly;
    for r in &mut p.rules {
        if rng.random_bool(0.5) {
            r.target = Pathway::AiOnly;
            if rng.random_bool(0.5) {
                let guard: Expr = gen_leaf(rng);
                r.condition = r.condition.clone().and(guard);
            }
        }
    }
    p
}

#[test]
fn validated_safety_policies_never_send_qc_failures_to_ai_only() {
    let mut rng = stream(0x5AFE);
    let schema = cobix_schema();
    let mut accepted = 0;
    for _ in 0..20_000 {
        let p = safety_candidate(&mut rng);
        if !validate_policy(&p, &schema, true).is_empty() {
            continue;
        }
        accepted += 1;
        for _ in 0..20 {
            let (case, _) = gen_world(&mut rng);
            for &q in QualityStatus::ALL.iter().filter(|q| !q.is_pass()) {
                let ai = AiAssessment::qc_failure("w", q).unwrap();
                assert_ne!(select_pathway(&p, &case, &ai).pathway, Pathway::AiOnly, "{}", format_policy(&p));
            }
        }
    }
    assert!(accepted > 200, "only {accepted} candidates validated");
}

#[test]
fn parse_errors_never_panic_on_mutated_sources() {
    let mut rng = stream(0xBAD);
    let alphabet: Vec<char> = "{}();,-><=!&|#\" \n.abcxyz019".chars().collect();
    for _ in 0..3_000 {
        let mut text: Vec<char> = format_policy(&gen_policy(&mut rng)).chars().collect();
        for _ in 0..rng.random_range(1..4) {
            if text.is_empty() {
                break;
            }
            let i = rng.random_range(0..text.len());
            match rng.random_range(0..3) {
                0 => {
                    text.remove(i);
                }
                1 => text.insert(i, alphabet[rng.random_range(0..alphabet.len())]),
                _ => text[i] = alphabet[rng.random_range(0..alphabet.len())],
            }
        }
        let s: String = text.into_iter().collect();
        if let Err(e) = parse_policy(&s) {
            assert!(e.line >= 1 && e.col >= 1);
        }
    }
}
