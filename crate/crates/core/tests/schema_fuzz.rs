//! Case validation against a hand-written checker for the reference schema.

use std::collections::BTreeSet;

use delegation_core::model::{CaseRecord, DiagnosisClass, FieldValue};
use delegation_core::reference::cobix_schema;
use delegation_core::schema::validate_case;
use proptest::prelude::*;

const KEYS: &[&str] = &["endoscopy", "transplant_history", "clinical_suspicion", "bogus"];
const TAGS: &[&str] = &["normal", "abnormal", "unknown", "gvhd", "ibd", "spirochetosis", "maybe"];

fn value() -> impl Strategy<Value = FieldValue> {
    let tag = prop::sample::select(TAGS.to_vec()).prop_map(String::from);
    prop_oneof![
        any::<bool>().prop_map(FieldValue::Bool),
        prop_oneof![Just(f64::NAN), Just(f64::INFINITY), -10.0f64..10.0].prop_map(FieldValue::Number),
        tag.clone().prop_map(FieldValue::Tag),
        prop::collection::btree_set(tag, 0..4).prop_map(FieldValue::TagSet),
    ]
}

/// Fields the reference schema should flag, one entry per problem.
fn expected(case: &CaseRecord) -> Vec<String> {
    let mut out = Vec::new();
    if case.review_time_minutes <= 0.0 {
        out.push("review_time_minutes".to_string());
    }
    for (k, v) in &case.context {
        let field = format!("context.{k}");
        match (k.as_str(), v) {
            ("endoscopy", FieldValue::Tag(t)) if ["normal", "abnormal", "unknown"].contains(&t.as_str()) => {}
            ("transplant_history", FieldValue::Bool(_)) => {}
            ("clinical_suspicion", FieldValue::TagSet(s)) => {
                let vocab = ["gvhd", "ibd", "microscopic_colitis", "spirochetosis"];
                out.extend(s.iter().filter(|t| !vocab.contains(&t.as_str())).map(|_| field.clone()));
            }
            _ => out.push(field),
        }
    }
    if !["colon", "rectum"].contains(&case.specimen.site.as_str()) {
        out.push("case.site".to_string());
    }
    out.sort();
    out
}

proptest! {
    #[test]
    fn validation_matches_hand_checker(
        fields in prop::collection::btree_map(prop::sample::select(KEYS.to_vec()), value(), 0..4),
        minutes in prop_oneof![Just(0.0), Just(-1.0), 0.1f64..10.0],
        site in prop::sample::select(vec!["colon", "rectum", "ileum"]),
    ) {
        let mut case = CaseRecord::new("c", DiagnosisClass::Normal, minutes);
        for (k, v) in fields {
            case = case.with_context(k, v);
        }
        case.specimen.site = site.into();
        let mut got: Vec<String> = validate_case(&case, &cobix_schema()).into_iter().map(|d| d.field).collect();
        got.sort();
        prop_assert_eq!(got, expected(&case));
    }
}

#[test]
fn empty_tag_set_is_valid() {
    let case = CaseRecord::new("c", DiagnosisClass::Normal, 1.0).with_context("clinical_suspicion", FieldValue::TagSet(BTreeSet::new()));
    assert!(validate_case(&case, &cobix_schema()).is_empty());
}
