//! Synthetic case populations.

use std::collections::BTreeSet;

use rand::Rng;

use super::scenario::ScenarioConfig;
use crate::model::{context_keys, CaseRecord, DiagnosisClass, FieldValue, QualityStatus};
use crate::rng::case_stream;

/// Stable id of the `index`-th case of a population.
pub fn case_id(index: usize) -> String {
    format!("case-{index:06}")
}

fn pick<T: Copy>(items: impl IntoIterator<Item = (T, f64)>, u: f64) -> Option<T> {
    let mut acc = 0.0;
    let mut last = None;
    for (item, p) in items {
        if p <= 0.0 {
            continue;
        }
        acc += p;
        last = Some(item);
        if u < acc {
            return last;
        }
    }
    // Only reached through rounding when the weights sum to one.
    if acc > 1.0 - 1e-9 {
        last
    } else {
        None
    }
}

/// Draws one case. Every quantity comes from the case's own stream, so the
/// result depends only on `(scenario, seed, index)`.
pub fn generate_case(scenario: &ScenarioConfig, seed: u64, index: usize) -> CaseRecord {
    let id = case_id(index);
    let mut rng = case_stream(seed, &id, "population");
    let prevalence = &scenario.prevalence.values;
    let label = pick(DiagnosisClass::ALL.iter().map(|&c| (c, prevalence.get(&c).copied().unwrap_or(0.0))), rng.random())
        .expect("prevalence sums to one");

    let quality = pick(scenario.quality_defect_rates.values.iter().map(|(&q, &p)| (q, p)), rng.random())
        .unwrap_or(QualityStatus::Pass);

    let cm = &scenario.context_model;
    let endoscopy = if rng.random::<f64>() < cm.endoscopy_unknown_rate {
        "unknown"
    } else {
        let p = if label.is_abnormal() { cm.endoscopy_abnormal_given_abnormal } else { cm.endoscopy_abnormal_given_normal };
        if rng.random::<f64>() < p {
            "abnormal"
        } else {
            "normal"
        }
    };
    let mut transplant = rng.random::<f64>() < cm.transplant_history_rate;
    let mut suspicion = BTreeSet::new();
    for (tag, &p) in &cm.suspicion_rates {
        if rng.random::<f64>() < p {
            suspicion.insert(tag.clone());
        }
    }
    let u: f64 = rng.random();
    let entity = pick(
        cm.oos_entities.iter().enumerate().map(|(i, e)| (i, e.rate_given_label.get(&label).copied().unwrap_or(0.0))),
        u,
    )
    .map(|i| &cm.oos_entities[i]);
    // Always draw both so the stream layout does not depend on the entity.
    let (t, s): (f64, f64) = (rng.random(), rng.random());
    if let Some(e) = entity {
        transplant |= t < e.transplant_history_prob;
        if s < e.suspected_prob {
            suspicion.insert(e.entity.clone());
        }
    }

    let minutes = scenario.clinician_profile.minutes(label);
    let mut case = CaseRecord::new(id, label, minutes)
        .with_quality(quality)
        .with_context(context_keys::ENDOSCOPY, FieldValue::Tag(endoscopy.into()))
        .with_context(context_keys::TRANSPLANT_HISTORY, FieldValue::Bool(transplant))
        .with_context(context_keys::CLINICAL_SUSPICION, FieldValue::TagSet(suspicion));
    case.specimen = scenario.specimen.clone();
    if let Some(e) = entity {
        case = case.with_oos_entity(e.entity.clone());
    }
    case
}

/// `n` independent cases, deterministic in `(scenario, n, seed)`.
pub fn generate_population(scenario: &ScenarioConfig, n: usize, seed: u64) -> Vec<CaseRecord> {
    (0..n).map(|i| generate_case(scenario, seed, i)).collect()
}
