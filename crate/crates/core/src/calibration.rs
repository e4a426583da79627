//! Score calibration, reliability measurement and autonomy-threshold selection.
//!
//! Calibration fits a non-decreasing step function from raw scores to the
//! empirical probability that the prediction is correct (isotonic regression
//! by pool-adjacent-violators). A calibrated value of 0.9 should therefore
//! mean "correct about 90% of the time", which [`reliability`] measures.
//!
//! Threshold selection scans the observed confidence grid, so the result is
//! exact for the step-shaped error curve; no continuous solver is involved.

use serde::{Deserialize, Serialize};
use statrs::function::beta::beta_reg;
use thiserror::Error;

use crate::model::{AiAssessment, DiagnosisClass};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CalibrationError {
    #[error("scores and correctness differ in length ({scores} vs {labels})")]
    LengthMismatch { scores: usize, labels: usize },
    #[error("need at least {min} samples, got {got}")]
    TooFewSamples { min: usize, got: usize },
    #[error("{what} {value} outside [0, 1]")]
    OutOfRange { what: &'static str, value: f64 },
    #[error("number of bins must be at least 1")]
    NoBins,
    #[error("invalid calibration map: {0}")]
    InvalidMap(String),
}

/// Non-decreasing step function on [0, 1].
///
/// Breakpoint `(ub, value)` maps every score `s` with `previous_ub < s <= ub`
/// to `value`. Upper bounds are strictly increasing and the last one is 1.0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MapRepr", into = "MapRepr")]
pub struct CalibrationMap {
    breakpoints: Vec<(f64, f64)>,
}

#[derive(Serialize, Deserialize)]
struct MapRepr {
    breakpoints: Vec<(f64, f64)>,
}

impl TryFrom<MapRepr> for CalibrationMap {
    type Error = CalibrationError;

    fn try_from(r: MapRepr) -> Result<Self, Self::Error> {
        CalibrationMap::new(r.breakpoints)
    }
}

impl From<CalibrationMap> for MapRepr {
    fn from(m: CalibrationMap) -> Self {
        MapRepr { breakpoints: m.breakpoints }
    }
}

impl CalibrationMap {
    pub fn new(breakpoints: Vec<(f64, f64)>) -> Result<Self, CalibrationError> {
        let bad = |m: &str| Err(CalibrationError::InvalidMap(m.to_string()));
        let Some(&(last_ub, _)) = breakpoints.last() else {
            return bad("no breakpoints");
        };
        if last_ub != 1.0 {
            return bad("last upper bound must be 1.0");
        }
        for &(ub, v) in &breakpoints {
            if !(0.0..=1.0).contains(&ub) || !(0.0..=1.0).contains(&v) {
                return bad("bounds and values must lie in [0, 1]");
            }
        }
        for w in breakpoints.windows(2) {
            if w[1].0 <= w[0].0 {
                return bad("upper bounds must be strictly increasing");
            }
            if w[1].1 < w[0].1 {
                return bad("values must be non-decreasing");
            }
        }
        Ok(CalibrationMap { breakpoints })
    }

    pub fn breakpoints(&self) -> &[(f64, f64)] {
        &self.breakpoints
    }

    /// Calibrated value for a raw score in [0, 1].
    pub fn apply(&self, raw_score: f64) -> Result<f64, CalibrationError> {
        if !(0.0..=1.0).contains(&raw_score) {
            return Err(CalibrationError::OutOfRange { what: "raw score", value: raw_score });
        }
        let i = self.breakpoints.partition_point(|&(ub, _)| ub < raw_score);
        Ok(self.breakpoints[i].1)
    }
}

/// Free-function form of [`CalibrationMap::apply`].
pub fn apply_calibration(map: &CalibrationMap, raw_score: f64) -> Result<f64, CalibrationError> {
    map.apply(raw_score)
}

fn check_pairs(scores: &[f64], correct: &[bool], min: usize) -> Result<(), CalibrationError> {
    if scores.len() != correct.len() {
        return Err(CalibrationError::LengthMismatch { scores: scores.len(), labels: correct.len() });
    }
    if scores.len() < min {
        return Err(CalibrationError::TooFewSamples { min, got: scores.len() });
    }
    if let Some(&s) = scores.iter().find(|s| !(0.0..=1.0).contains(*s)) {
        return Err(CalibrationError::OutOfRange { what: "score", value: s });
    }
    Ok(())
}

struct Block {
    upper: f64,
    hits: f64,
    weight: f64,
}

impl Block {
    // a.hits / a.weight > b.hits / b.weight, compared without division.
    fn mean_gt(&self, other: &Block) -> bool {
        self.hits * other.weight > other.hits * self.weight
    }

    fn mean_eq(&self, other: &Block) -> bool {
        self.hits * other.weight == other.hits * self.weight
    }

    fn absorb(&mut self, next: Block) {
        self.upper = next.upper;
        self.hits += next.hits;
        self.weight += next.weight;
    }
}

/// Least-squares non-decreasing fit of correctness indicators against
/// scores, by pool-adjacent-violators. Tied scores are pooled first.
pub fn fit_pav(scores: &[f64], correct: &[bool]) -> Result<CalibrationMap, CalibrationError> {
    check_pairs(scores, correct, 2)?;
    let mut pairs: Vec<(f64, bool)> = scores.iter().copied().zip(correct.iter().copied()).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));

    let mut stack: Vec<Block> = Vec::new();
    let mut i = 0;
    while i < pairs.len() {
        let score = pairs[i].0;
        let mut block = Block { upper: score, hits: 0.0, weight: 0.0 };
        while i < pairs.len() && pairs[i].0 == score {
            block.hits += f64::from(u8::from(pairs[i].1));
            block.weight += 1.0;
            i += 1;
        }
        while let Some(top) = stack.last() {
            if top.mean_gt(&block) {
                let mut top = stack.pop().unwrap();
                top.absorb(block);
                block = top;
            } else {
                break;
            }
        }
        stack.push(block);
    }

    let mut merged: Vec<Block> = Vec::with_capacity(stack.len());
    for block in stack {
        match merged.last_mut() {
            Some(prev) if prev.mean_eq(&block) => prev.absorb(block),
            _ => merged.push(block),
        }
    }
    let last = merged.len() - 1;
    let breakpoints = merged
        .iter()
        .enumerate()
        .map(|(j, b)| (if j == last { 1.0 } else { b.upper }, b.hits / b.weight))
        .collect();
    CalibrationMap::new(breakpoints)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityBin {
    pub lower: f64,
    pub upper: f64,
    pub count: u64,
    /// `None` for empty bins.
    pub mean_confidence: Option<f64>,
    pub empirical_accuracy: Option<f64>,
}

impl ReliabilityBin {
    pub fn gap(&self) -> Option<f64> {
        Some((self.empirical_accuracy? - self.mean_confidence?).abs())
    }
}

/// Equal-width reliability table with expected and maximum calibration error.
/// Empty bins contribute nothing to ECE and are excluded from MCE.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityReport {
    pub bins: Vec<ReliabilityBin>,
    pub total: u64,
    pub ece: f64,
    pub mce: f64,
}

pub fn reliability(confidences: &[f64], correct: &[bool], n_bins: usize) -> Result<ReliabilityReport, CalibrationError> {
    if n_bins == 0 {
        return Err(CalibrationError::NoBins);
    }
    check_pairs(confidences, correct, 1)?;
    let mut sums = vec![(0u64, 0.0f64, 0u64); n_bins];
    for (&c, &ok) in confidences.iter().zip(correct) {
        let idx = ((c * n_bins as f64) as usize).min(n_bins - 1);
        let slot = &mut sums[idx];
        slot.0 += 1;
        slot.1 += c;
        slot.2 += u64::from(ok);
    }
    let total = confidences.len() as u64;
    let bins: Vec<ReliabilityBin> = sums
        .iter()
        .enumerate()
        .map(|(i, &(count, conf_sum, hits))| ReliabilityBin {
            lower: i as f64 / n_bins as f64,
            upper: (i + 1) as f64 / n_bins as f64,
            count,
            mean_confidence: (count > 0).then(|| conf_sum / count as f64),
            empirical_accuracy: (count > 0).then(|| hits as f64 / count as f64),
        })
        .collect();
    let ece = bins
        .iter()
        .filter_map(|b| Some(b.count as f64 / total as f64 * b.gap()?))
        .sum();
    let mce = bins.iter().filter_map(ReliabilityBin::gap).fold(0.0, f64::max);
    Ok(ReliabilityReport { bins, total, ece, mce })
}

/// How the error rate above a threshold is judged against the target.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdMethod {
    PointEstimate,
    /// One-sided 95% Clopper-Pearson upper bound on the error rate.
    #[default]
    #[serde(rename = "binomial_upper_95")]
    BinomialUpper95,
}

impl std::str::FromStr for ThresholdMethod {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "point_estimate" => Ok(ThresholdMethod::PointEstimate),
            "binomial_upper_95" => Ok(ThresholdMethod::BinomialUpper95),
            other => Err(format!("unknown threshold method `{other}` (expected point_estimate or binomial_upper_95)")),
        }
    }
}

/// One-sided Clopper-Pearson upper confidence bound for `errors` failures in
/// `n` trials: the `p` solving `P(X <= errors | n, p) = 1 - level`.
pub fn clopper_pearson_upper(errors: u64, n: u64, level: f64) -> f64 {
    assert!(n > 0 && errors <= n, "need 0 <= errors <= n and n > 0");
    if errors == n {
        return 1.0;
    }
    // P(X <= k | n, p) = 1 - I_p(k + 1, n - k), decreasing in p.
    let (a, b) = ((errors + 1) as f64, (n - errors) as f64);
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if beta_reg(a, b, mid) < level {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-14 {
            break;
        }
    }
    hi
}

/// Error statistics at one candidate threshold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdCandidate {
    pub tau: f64,
    pub selected: u64,
    pub errors: u64,
    pub coverage: f64,
    pub point_error: f64,
}

impl ThresholdCandidate {
    pub fn bound(&self, method: ThresholdMethod) -> f64 {
        match method {
            ThresholdMethod::PointEstimate => self.point_error,
            ThresholdMethod::BinomialUpper95 => clopper_pearson_upper(self.errors, self.selected, 0.95),
        }
    }
}

/// Candidates at every distinct observed confidence for `target_class`
/// predictions, in ascending `tau` order.
pub fn threshold_candidates(assessments: &[(AiAssessment, DiagnosisClass)], target_class: DiagnosisClass) -> Vec<ThresholdCandidate> {
    let mut preds: Vec<(f64, bool)> = assessments
        .iter()
        .filter(|(a, _)| a.predicted_class() == Some(target_class))
        .map(|(a, truth)| (a.confidence(), *truth != target_class))
        .collect();
    preds.sort_by(|a, b| b.0.total_cmp(&a.0));
    let total = preds.len() as f64;
    let mut out = Vec::new();
    let (mut selected, mut errors) = (0u64, 0u64);
    let mut i = 0;
    while i < preds.len() {
        let tau = preds[i].0;
        while i < preds.len() && preds[i].0 == tau {
            selected += 1;
            errors += u64::from(preds[i].1);
            i += 1;
        }
        out.push(ThresholdCandidate {
            tau,
            selected,
            errors,
            coverage: selected as f64 / total,
            point_error: errors as f64 / selected as f64,
        });
    }
    out.reverse();
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdResult {
    pub tau: f64,
    pub target_class: DiagnosisClass,
    pub target_error: f64,
    pub method: ThresholdMethod,
    pub achieved_error_bound: f64,
    /// Fraction of `target_class` predictions with confidence >= tau.
    pub coverage: f64,
    pub selected: u64,
    pub errors: u64,
}

/// No threshold meets the error budget: the AI must not auto-report this class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoFeasibleThreshold {
    pub target_class: DiagnosisClass,
    pub target_error: f64,
    pub method: ThresholdMethod,
    pub candidates: usize,
    /// Lowest point-estimate error over all candidates, if any exist.
    pub best_point_error: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum ThresholdOutcome {
    Feasible(ThresholdResult),
    NoFeasibleThreshold(NoFeasibleThreshold),
}

impl ThresholdOutcome {
    pub fn feasible(&self) -> Option<&ThresholdResult> {
        match self {
            ThresholdOutcome::Feasible(r) => Some(r),
            ThresholdOutcome::NoFeasibleThreshold(_) => None,
        }
    }
}

/// Smallest observed confidence `tau` such that `target_class` predictions at
/// or above `tau` have error (point estimate or 95% upper bound) within
/// `target_error`.
pub fn select_threshold(
    assessments: &[(AiAssessment, DiagnosisClass)],
    target_class: DiagnosisClass,
    target_error: f64,
    method: ThresholdMethod,
) -> Result<ThresholdOutcome, CalibrationError> {
    if assessments.is_empty() {
        return Err(CalibrationError::TooFewSamples { min: 1, got: 0 });
    }
    if !(0.0..=1.0).contains(&target_error) {
        return Err(CalibrationError::OutOfRange { what: "target error", value: target_error });
    }
    let candidates = threshold_candidates(assessments, target_class);
    // The upper bound is never below the point estimate, so only candidates
    // that pass on the point estimate need the bound.
    let hit = candidates
        .iter()
        .filter(|c| c.point_error <= target_error)
        .map(|c| (c, c.bound(method)))
        .find(|(_, bound)| *bound <= target_error);
    Ok(match hit {
        Some((c, bound)) => ThresholdOutcome::Feasible(ThresholdResult {
            tau: c.tau,
            target_class,
            target_error,
            method,
            achieved_error_bound: bound,
            coverage: c.coverage,
            selected: c.selected,
            errors: c.errors,
        }),
        None => ThresholdOutcome::NoFeasibleThreshold(NoFeasibleThreshold {
            target_class,
            target_error,
            method,
            candidates: candidates.len(),
            best_point_error: candidates.iter().map(|c| c.point_error).reduce(f64::min),
        }),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn assert_map(map: &CalibrationMap, expected: &[(f64, f64)]) {
        assert_eq!(map.breakpoints().len(), expected.len(), "{map:?}");
        for (got, want) in map.breakpoints().iter().zip(expected) {
            assert!((got.0 - want.0).abs() < 1e-12 && (got.1 - want.1).abs() < 1e-12, "{map:?}");
        }
    }

    #[test]
    fn two_monotone_points() {
        let map = fit_pav(&[0.1, 0.9], &[false, true]).unwrap();
        assert_map(&map, &[(0.1, 0.0), (1.0, 1.0)]);
        assert_eq!(map.apply(0.5).unwrap(), 1.0);
        assert_eq!(map.apply(0.1).unwrap(), 0.0);
    }

    #[test]
    fn three_points_pool_into_one_block() {
        // Hand-run PAV: [1, 0] violate -> 0.5; [0.5, 0] violate -> 1/3.
        let map = fit_pav(&[0.2, 0.4, 0.6], &[true, false, false]).unwrap();
        assert_map(&map, &[(1.0, 1.0 / 3.0)]);
    }

    #[test]
    fn ties_are_pooled_before_fitting() {
        let map = fit_pav(&[0.5, 0.5, 0.5, 0.9], &[true, false, false, true]).unwrap();
        assert_map(&map, &[(0.5, 1.0 / 3.0), (1.0, 1.0)]);
    }

    #[test]
    fn precondition_errors() {
        assert!(matches!(fit_pav(&[0.1], &[true]), Err(CalibrationError::TooFewSamples { .. })));
        assert!(matches!(fit_pav(&[0.1, 0.2], &[true]), Err(CalibrationError::LengthMismatch { .. })));
        assert!(matches!(fit_pav(&[0.1, 1.2], &[true, false]), Err(CalibrationError::OutOfRange { .. })));
        let map = fit_pav(&[0.1, 0.9], &[false, true]).unwrap();
        assert!(map.apply(1.01).is_err());
        assert!(map.apply(-0.01).is_err());
    }

    #[test]
    fn step_lookup_on_identity_like_map() {
        let bps = (1..=10).map(|i| (i as f64 / 10.0, i as f64 / 10.0)).collect::<Vec<_>>();
        let mut bps = bps;
        bps[9].0 = 1.0;
        let map = CalibrationMap::new(bps).unwrap();
        assert_eq!(map.apply(0.35).unwrap(), 0.4);
        assert_eq!(map.apply(0.0).unwrap(), 0.1);
    }

    #[test]
    fn map_invariants_are_checked_on_load() {
        assert!(serde_json::from_str::<CalibrationMap>(r#"{"breakpoints":[[0.5,0.2],[0.9,0.9]]}"#).is_err());
        assert!(serde_json::from_str::<CalibrationMap>(r#"{"breakpoints":[[0.5,0.6],[1.0,0.4]]}"#).is_err());
        assert!(serde_json::from_str::<CalibrationMap>(r#"{"breakpoints":[[0.5,0.6],[0.5,0.7],[1.0,0.8]]}"#).is_err());
        let map: CalibrationMap = serde_json::from_str(r#"{"breakpoints":[[0.5,0.2],[1.0,0.9]]}"#).unwrap();
        assert_eq!(serde_json::to_string(&map).unwrap(), r#"{"breakpoints":[[0.5,0.2],[1.0,0.9]]}"#);
    }

    #[test]
    fn single_bin_half_correct() {
        let conf = vec![1.0; 10];
        let correct: Vec<bool> = (0..10).map(|i| i % 2 == 0).collect();
        let r = reliability(&conf, &correct, 10).unwrap();
        assert_eq!(r.ece, 0.5);
        assert_eq!(r.mce, 0.5);
        assert_eq!(r.bins.iter().map(|b| b.count).sum::<u64>(), 10);
        assert_eq!(r.bins[9].count, 10);
    }

    #[test]
    fn sharp_calibrated_sample_has_zero_ece() {
        let conf = [0.0, 0.0, 1.0, 1.0, 1.0];
        let correct = [false, false, true, true, true];
        let r = reliability(&conf, &correct, 15).unwrap();
        assert_eq!(r.ece, 0.0);
        assert_eq!(r.mce, 0.0);
    }

    #[test]
    fn empty_bins_do_not_contribute() {
        let r = reliability(&[0.05, 0.95], &[false, true], 10).unwrap();
        assert_eq!(r.bins.iter().filter(|b| b.count == 0).count(), 8);
        assert!(r.bins[4].gap().is_none());
        assert!((r.ece - 0.05).abs() < 1e-12);
        assert!((r.mce - 0.05).abs() < 1e-12);
        assert!(reliability(&[0.5], &[true], 0).is_err());
        assert!(reliability(&[], &[], 10).is_err());
    }

    #[test]
    fn clopper_pearson_closed_forms() {
        for n in [1u64, 5, 20, 300, 5000] {
            let zero = clopper_pearson_upper(0, n, 0.95);
            assert!((zero - (1.0 - 0.05f64.powf(1.0 / n as f64))).abs() < 1e-10, "n={n}");
            let all_but_one = clopper_pearson_upper(n - 1, n, 0.95);
            assert!((all_but_one - 0.95f64.powf(1.0 / n as f64)).abs() < 1e-10, "n={n}");
            assert_eq!(clopper_pearson_upper(n, n, 0.95), 1.0);
        }
    }

    fn normal(conf: f64, truth: DiagnosisClass) -> (AiAssessment, DiagnosisClass) {
        let a = AiAssessment::prediction("c", DiagnosisClass::Normal, conf)
            .unwrap()
            .with_calibrated(conf)
            .unwrap();
        (a, truth)
    }

    fn toy_set() -> Vec<(AiAssessment, DiagnosisClass)> {
        let mut v: Vec<_> = [0.99, 0.98, 0.97, 0.96, 0.95, 0.94, 0.93, 0.92]
            .into_iter()
            .map(|c| normal(c, DiagnosisClass::Normal))
            .collect();
        v.push(normal(0.91, DiagnosisClass::NeoplasticUrgent));
        v.push(normal(0.90, DiagnosisClass::NonNeoplasticNonUrgent));
        v
    }

    #[test]
    fn toy_fixture_threshold() {
        // Hand computation: tau=0.90 -> 2/10 wrong, 0.91 -> 1/9, 0.92 -> 0/8.
        let out = select_threshold(&toy_set(), DiagnosisClass::Normal, 0.0, ThresholdMethod::PointEstimate).unwrap();
        let r = out.feasible().expect("feasible");
        assert_eq!(r.tau, 0.92);
        assert!((r.coverage - 0.8).abs() < 1e-12);
        assert_eq!(r.achieved_error_bound, 0.0);
    }

    #[test]
    fn all_correct_takes_minimum_confidence() {
        let set: Vec<_> = [0.7, 0.8, 0.95].into_iter().map(|c| normal(c, DiagnosisClass::Normal)).collect();
        let out = select_threshold(&set, DiagnosisClass::Normal, 0.0, ThresholdMethod::PointEstimate).unwrap();
        let r = out.feasible().unwrap();
        assert_eq!((r.tau, r.coverage), (0.7, 1.0));
        let out = select_threshold(&toy_set(), DiagnosisClass::Normal, 1.0, ThresholdMethod::BinomialUpper95).unwrap();
        assert_eq!(out.feasible().unwrap().tau, 0.90);
    }

    #[test]
    fn all_wrong_is_infeasible() {
        let set: Vec<_> = [0.7, 0.8, 0.95]
            .into_iter()
            .map(|c| normal(c, DiagnosisClass::NeoplasticUrgent))
            .collect();
        let out = select_threshold(&set, DiagnosisClass::Normal, 0.5, ThresholdMethod::PointEstimate).unwrap();
        assert!(matches!(out, ThresholdOutcome::NoFeasibleThreshold(ref n) if n.best_point_error == Some(1.0)));
        let json = serde_json::to_string(&out).unwrap();
        assert!(json.starts_with(r#"{"status":"no_feasible_threshold""#));
    }

    #[test]
    fn binomial_bound_is_more_conservative() {
        let out = select_threshold(&toy_set(), DiagnosisClass::Normal, 0.3, ThresholdMethod::PointEstimate).unwrap();
        assert_eq!(out.feasible().unwrap().tau, 0.90);
        let out = select_threshold(&toy_set(), DiagnosisClass::Normal, 0.3, ThresholdMethod::BinomialUpper95).unwrap();
        // 0/8 correct-only at 0.92 has upper bound 1 - 0.05^(1/8) = 0.312 > 0.3.
        assert!(out.feasible().is_none());
    }

    #[test]
    fn invalid_inputs() {
        assert!(select_threshold(&[], DiagnosisClass::Normal, 0.1, ThresholdMethod::PointEstimate).is_err());
        assert!(select_threshold(&toy_set(), DiagnosisClass::Normal, 1.5, ThresholdMethod::PointEstimate).is_err());
        assert_eq!("binomial_upper_95".parse::<ThresholdMethod>(), Ok(ThresholdMethod::BinomialUpper95));
    }
}
