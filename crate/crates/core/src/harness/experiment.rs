//! Paired multi-modality experiments and threshold sweeps.
//!
//! Within one replication every modality sees the same population, the same
//! AI assessments and the same per-case clinician streams, so differences
//! between modalities come from the routing alone. Replications run in
//! parallel and are merged in replication order.

use std::collections::{BTreeMap, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{count_metrics, MetricCounts, MetricsReport};
use super::population::generate_population;
use super::scenario::{CalibrationSource, Scenario};
use super::HarnessError;
use crate::agents::ai_assess;
use crate::calibration::{fit_pav, select_threshold, CalibrationMap, ThresholdOutcome, ThresholdResult};
use crate::dsl::Policy;
use crate::model::{AiAssessment, CaseRecord, DiagnosisClass, ModalityKind};
use crate::router::{run_modality, AuditLog, Modality};
use crate::rng::{case_stream, derive_seed};

/// Overrides for a run; `None` fields fall back to the scenario.
#[derive(Debug, Clone, Default)]
pub struct ExperimentOptions {
    pub population_size: Option<usize>,
    pub replications: Option<u32>,
    pub seed: Option<u64>,
    /// Use this threshold for the given rule instead of selecting one.
    pub fixed_threshold: Option<(String, f64)>,
    /// Keep replication 0's population and audit logs in the result.
    pub keep_first_replication: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationRun {
    pub index: u32,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threshold: Option<ThresholdResult>,
    pub counts: BTreeMap<ModalityKind, MetricCounts>,
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub scenario: String,
    pub seed: u64,
    pub population_size: usize,
    pub modalities: Vec<ModalityKind>,
    pub replications: Vec<ReplicationRun>,
    /// Replication 0's population and audit logs, when requested.
    pub population: Option<Vec<CaseRecord>>,
    pub audit: BTreeMap<ModalityKind, AuditLog>,
}

impl ExperimentResult {
    /// Pooled report with across-replication statistics.
    pub fn report(&self, kind: ModalityKind) -> Option<MetricsReport> {
        let counts: Vec<MetricCounts> = self.replications.iter().filter_map(|r| r.counts.get(&kind).cloned()).collect();
        (!counts.is_empty()).then(|| MetricsReport::aggregate(&counts))
    }

    pub fn reports(&self) -> BTreeMap<ModalityKind, MetricsReport> {
        self.modalities.iter().filter_map(|&k| Some((k, self.report(k)?))).collect()
    }

    /// One report per replication, in order.
    pub fn per_replication(&self, kind: ModalityKind) -> Vec<MetricsReport> {
        self.replications.iter().filter_map(|r| r.counts.get(&kind).map(MetricCounts::report)).collect()
    }
}

/// Seed of replication `index`.
pub fn replication_seed(base: u64, index: u32) -> u64 {
    derive_seed(base, &format!("replication-{index}"))
}

fn calibrate(a: AiAssessment, map: Option<&CalibrationMap>) -> AiAssessment {
    if a.predicted_class().is_none() {
        return a;
    }
    let conf = match map {
        Some(m) => m.apply(a.raw_score()).expect("raw scores lie in [0, 1]"),
        None => a.raw_score(),
    };
    a.with_calibrated(conf).expect("calibrated confidence lies in [0, 1]")
}

/// AI assessments for a population, on each case's `"ai"` stream.
pub fn assess_population(
    scenario: &Scenario,
    cases: &[CaseRecord],
    seed: u64,
    map: Option<&CalibrationMap>,
) -> Vec<AiAssessment> {
    cases
        .iter()
        .map(|c| {
            let raw = ai_assess(&scenario.config.ai_profile, c, &mut case_stream(seed, &c.case_id, "ai"));
            calibrate(raw, map)
        })
        .collect()
}

/// Calibration map for one replication (`None` means identity).
pub fn calibration_for(scenario: &Scenario, seed: u64) -> Result<Option<CalibrationMap>, HarnessError> {
    match &scenario.config.calibration_source {
        CalibrationSource::Identity => Ok(None),
        CalibrationSource::Inline { map } => Ok(Some(map.clone())),
        CalibrationSource::FitOnValidation { validation_size } => {
            let vseed = derive_seed(seed, "calibration");
            let cases = generate_population(&scenario.config, *validation_size, vseed);
            let (scores, correct): (Vec<f64>, Vec<bool>) = assess_population(scenario, &cases, vseed, None)
                .iter()
                .zip(&cases)
                .filter_map(|(a, c)| a.predicted_class().map(|p| (a.raw_score(), p == c.ground_truth())))
                .unzip();
            Ok(Some(fit_pav(&scores, &correct)?))
        }
    }
}

/// Runs the scenario's threshold selection on a fresh validation sample.
pub fn select_policy_threshold(
    scenario: &Scenario,
    seed: u64,
    map: Option<&CalibrationMap>,
) -> Result<Option<ThresholdResult>, HarnessError> {
    let Some(sel) = &scenario.config.threshold_selection else {
        return Ok(None);
    };
    let tseed = derive_seed(seed, "threshold");
    let cases = generate_population(&scenario.config, sel.validation_size, tseed);
    let labelled: Vec<(AiAssessment, DiagnosisClass)> = assess_population(scenario, &cases, tseed, map)
        .into_iter()
        .zip(&cases)
        .filter(|(a, _)| a.predicted_class().is_some())
        .map(|(a, c)| (a, c.ground_truth()))
        .collect();
    if labelled.is_empty() {
        return Err(HarnessError::Config(vec!["threshold validation sample has no AI predictions".into()]));
    }
    match select_threshold(&labelled, sel.target_class, sel.target_error, sel.method)? {
        ThresholdOutcome::Feasible(r) => Ok(Some(r)),
        ThresholdOutcome::NoFeasibleThreshold(n) => Err(HarnessError::NoFeasibleThreshold(Box::new(n))),
    }
}

fn splice(policy: &Policy, rule: &str, tau: f64) -> Result<Policy, HarnessError> {
    let mut p = policy.clone();
    match p.set_confidence_threshold(rule, tau) {
        Some(n) if n > 0 => Ok(p),
        Some(_) => Err(HarnessError::Config(vec![format!("rule `{rule}` has no `ai.confidence >=` comparison")])),
        None => Err(HarnessError::Config(vec![format!("rule `{rule}` is not in the policy")])),
    }
}

struct Replication {
    run: ReplicationRun,
    population: Vec<CaseRecord>,
    audit: BTreeMap<ModalityKind, AuditLog>,
}

fn run_replication(
    scenario: &Scenario,
    kinds: &[ModalityKind],
    n: usize,
    index: u32,
    seed: u64,
    options: &ExperimentOptions,
) -> Result<Replication, HarnessError> {
    let map = calibration_for(scenario, seed)?;
    let mut threshold = None;
    let mut policy = scenario.policy.clone();
    if let Some(p) = &policy {
        if let Some((rule, tau)) = &options.fixed_threshold {
            policy = Some(splice(p, rule, *tau)?);
        } else if let Some(t) = select_policy_threshold(scenario, seed, map.as_ref())? {
            let rule = &scenario.config.threshold_selection.as_ref().expect("selection configured").rule;
            policy = Some(splice(p, rule, t.tau)?);
            threshold = Some(t);
        }
    }

    let mut modalities = Vec::with_capacity(kinds.len() + 1);
    let with_baseline = std::iter::once(ModalityKind::Unaided).chain(kinds.iter().copied().filter(|k| *k != ModalityKind::Unaided));
    for kind in with_baseline {
        let m = match (kind, &policy) {
            (ModalityKind::AutonomousDecisionSupport, Some(p)) => Modality::autonomous(p.clone(), &scenario.schema)?,
            _ => scenario.modality(kind)?,
        };
        modalities.push((kind, m));
    }

    let population = generate_population(&scenario.config, n, seed);
    let assessments = assess_population(scenario, &population, seed, map.as_ref());
    let truths: HashMap<String, DiagnosisClass> =
        population.iter().map(|c| (c.case_id.clone(), c.ground_truth())).collect();
    let clinician = &scenario.config.clinician_profile;
    let interaction = &scenario.config.interaction;

    let mut audit = BTreeMap::new();
    for (kind, modality) in &modalities {
        let mut log = AuditLog::new();
        for (case, ai) in population.iter().zip(&assessments) {
            let mut rng = case_stream(seed, &case.case_id, "clinician");
            let (pd, fd) = run_modality(modality, case, ai, clinician, interaction, &mut rng)?;
            log.append(pd, fd);
        }
        audit.insert(*kind, log);
    }
    let baseline = &audit[&ModalityKind::Unaided];
    let mut counts = BTreeMap::new();
    for kind in kinds {
        counts.insert(*kind, count_metrics(&audit[kind], &truths, baseline)?);
    }
    Ok(Replication { run: ReplicationRun { index, seed, threshold, counts }, population, audit })
}

/// Runs every modality over `replications` paired populations.
pub fn run_experiment(
    scenario: &Scenario,
    kinds: &[ModalityKind],
    options: &ExperimentOptions,
) -> Result<ExperimentResult, HarnessError> {
    let n = options.population_size.unwrap_or(scenario.config.population_size);
    let reps = options.replications.unwrap_or(scenario.config.seeds.replications);
    let base = options.seed.unwrap_or(scenario.config.seeds.base);
    let mut unique = Vec::new();
    for k in kinds {
        if !unique.contains(k) {
            unique.push(*k);
        }
    }
    let results: Vec<Result<Replication, HarnessError>> = (0..reps)
        .into_par_iter()
        .map(|r| {
            let mut rep = run_replication(scenario, &unique, n, r, replication_seed(base, r), options)?;
            if !(options.keep_first_replication && r == 0) {
                rep.population = Vec::new();
                rep.audit.clear();
            }
            Ok(rep)
        })
        .collect();
    let mut replications = Vec::with_capacity(results.len());
    let mut population = None;
    let mut audit = BTreeMap::new();
    for r in results {
        let r = r?;
        if options.keep_first_replication && r.run.index == 0 {
            population = Some(r.population);
            audit = r.audit.into_iter().filter(|(k, _)| unique.contains(k)).collect();
        }
        replications.push(r.run);
    }
    Ok(ExperimentResult {
        scenario: scenario.config.name.clone(),
        seed: base,
        population_size: n,
        modalities: unique,
        replications,
        population,
        audit,
    })
}

/// One row of a threshold sweep. Rates are pooled over replications.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub tau: f64,
    pub coverage: f64,
    pub fn_among_auto: Option<f64>,
    pub time_reduction: f64,
}

pub const SWEEP_CSV_HEADER: &str = "tau,coverage,fn_among_auto,time_reduction";

pub fn sweep_to_csv(rows: &[SweepRow]) -> String {
    let mut s = format!("{SWEEP_CSV_HEADER}\n");
    for r in rows {
        let fna = r.fn_among_auto.map(|v| v.to_string()).unwrap_or_default();
        s.push_str(&format!("{},{},{},{}\n", r.tau, r.coverage, fna, r.time_reduction));
    }
    s
}

/// Substitutes each `tau` into `rule` and runs autonomous decision support.
/// Coverage is the autonomy rate.
pub fn sweep_threshold(
    scenario: &Scenario,
    rule: &str,
    tau_grid: &[f64],
    options: &ExperimentOptions,
) -> Result<Vec<SweepRow>, HarnessError> {
    if tau_grid.iter().any(|t| !(0.0..=1.0).contains(t)) || tau_grid.windows(2).any(|w| w[0] > w[1]) {
        return Err(HarnessError::Config(vec!["sweep grid must be ascending values in [0, 1]".into()]));
    }
    tau_grid
        .iter()
        .map(|&tau| {
            let opts = ExperimentOptions {
                fixed_threshold: Some((rule.to_string(), tau)),
                keep_first_replication: false,
                ..options.clone()
            };
            let result = run_experiment(scenario, &[ModalityKind::AutonomousDecisionSupport], &opts)?;
            let r = result.report(ModalityKind::AutonomousDecisionSupport).expect("modality ran");
            Ok(SweepRow { tau, coverage: r.autonomy_rate, fn_among_auto: r.fn_among_auto, time_reduction: r.time_reduction })
        })
        .collect()
}
