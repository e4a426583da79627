//! Outcome metrics computed from audit logs.
//!
//! Everything is derived from [`MetricCounts`], a set of additive tallies;
//! merging counts from shards or replications is plain addition, so the
//! pooled report does not depend on merge order.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::model::{Decider, DiagnosisClass, Pathway};
use crate::router::AuditLog;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricCounts {
    /// `confusion[true][final]`.
    pub confusion: [[u64; 5]; 5],
    pub total: u64,
    pub autonomous: u64,
    pub autonomous_normal: u64,
    pub autonomous_normal_false: u64,
    pub reviewed: u64,
    pub minutes: f64,
    pub baseline_reviewed: u64,
    pub baseline_minutes: f64,
    pub warnings: u64,
    pub pathway_histogram: BTreeMap<String, u64>,
}

impl MetricCounts {
    pub fn merge(&mut self, other: &MetricCounts) {
        for (row, orow) in self.confusion.iter_mut().zip(&other.confusion) {
            for (c, o) in row.iter_mut().zip(orow) {
                *c += o;
            }
        }
        self.total += other.total;
        self.autonomous += other.autonomous;
        self.autonomous_normal += other.autonomous_normal;
        self.autonomous_normal_false += other.autonomous_normal_false;
        self.reviewed += other.reviewed;
        self.minutes += other.minutes;
        self.baseline_reviewed += other.baseline_reviewed;
        self.baseline_minutes += other.baseline_minutes;
        self.warnings += other.warnings;
        for (k, v) in &other.pathway_histogram {
            *self.pathway_histogram.entry(k.clone()).or_default() += v;
        }
    }

    fn ratio(num: u64, den: u64) -> Option<f64> {
        (den > 0).then(|| num as f64 / den as f64)
    }

    pub fn report(&self) -> MetricsReport {
        let m = &self.confusion;
        let normal = DiagnosisClass::Normal.index();
        let mut per_class = BTreeMap::new();
        for &c in DiagnosisClass::ALL {
            let i = c.index();
            let positives: u64 = m[i].iter().sum();
            let negatives: u64 = (0..5).filter(|&t| t != i).map(|t| m[t].iter().sum::<u64>()).sum();
            let false_pos: u64 = (0..5).filter(|&t| t != i).map(|t| m[t][i]).sum();
            per_class.insert(
                c,
                ClassMetrics {
                    sensitivity: Self::ratio(m[i][i], positives),
                    specificity: Self::ratio(negatives - false_pos, negatives),
                },
            );
        }
        let abnormal_total: u64 = (0..5).filter(|&t| t != normal).map(|t| m[t].iter().sum::<u64>()).sum();
        let abnormal_caught: u64 = (0..5).filter(|&t| t != normal).map(|t| abnormal_total_row(&m[t], normal)).sum();
        let normal_total: u64 = m[normal].iter().sum();

        MetricsReport {
            total: self.total,
            per_class,
            sensitivity: Self::ratio(abnormal_caught, abnormal_total),
            specificity: Self::ratio(m[normal][normal], normal_total),
            autonomy_rate: Self::ratio(self.autonomous, self.total).unwrap_or(0.0),
            fn_among_auto: Self::ratio(self.autonomous_normal_false, self.autonomous_normal),
            case_reduction: if self.baseline_reviewed > 0 {
                1.0 - self.reviewed as f64 / self.baseline_reviewed as f64
            } else {
                0.0
            },
            time_reduction: if self.baseline_minutes > 0.0 { 1.0 - self.minutes / self.baseline_minutes } else { 0.0 },
            pathway_histogram: self.pathway_histogram.clone(),
            warnings_total: self.warnings,
            replication_stats: BTreeMap::new(),
        }
    }
}

fn abnormal_total_row(row: &[u64; 5], normal: usize) -> u64 {
    row.iter().enumerate().filter(|(j, _)| *j != normal).map(|(_, v)| v).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub sensitivity: Option<f64>,
    pub specificity: Option<f64>,
}

/// Mean and normal-approximation 95% interval across replications.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReplicationStat {
    pub mean: f64,
    pub lower: f64,
    pub upper: f64,
    pub replications: usize,
}

impl ReplicationStat {
    pub fn from_values(values: &[f64]) -> Option<Self> {
        let n = values.len();
        if n == 0 {
            return None;
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let half = if n > 1 {
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            1.96 * (var / n as f64).sqrt()
        } else {
            0.0
        };
        Some(ReplicationStat { mean, lower: mean - half, upper: mean + half, replications: n })
    }
}

/// Outcome metrics for one modality. Rates with an empty denominator are `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub total: u64,
    pub per_class: BTreeMap<DiagnosisClass, ClassMetrics>,
    /// Binary (normal vs abnormal) sensitivity and specificity.
    pub sensitivity: Option<f64>,
    pub specificity: Option<f64>,
    pub autonomy_rate: f64,
    pub fn_among_auto: Option<f64>,
    pub case_reduction: f64,
    pub time_reduction: f64,
    pub pathway_histogram: BTreeMap<String, u64>,
    pub warnings_total: u64,
    /// Across-replication summaries, keyed by metric name. Empty for a
    /// single run.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub replication_stats: BTreeMap<String, ReplicationStat>,
}

/// Names of the scalar metrics summarised across replications.
pub const SUMMARY_METRICS: &[&str] =
    &["sensitivity", "specificity", "autonomy_rate", "fn_among_auto", "case_reduction", "time_reduction"];

impl MetricsReport {
    pub fn scalar(&self, name: &str) -> Option<f64> {
        match name {
            "sensitivity" => self.sensitivity,
            "specificity" => self.specificity,
            "autonomy_rate" => Some(self.autonomy_rate),
            "fn_among_auto" => self.fn_among_auto,
            "case_reduction" => Some(self.case_reduction),
            "time_reduction" => Some(self.time_reduction),
            _ => None,
        }
    }

    /// Pooled report plus per-metric replication statistics.
    pub fn aggregate(counts: &[MetricCounts]) -> MetricsReport {
        let mut pooled = MetricCounts::default();
        for c in counts {
            pooled.merge(c);
        }
        let reports: Vec<MetricsReport> = counts.iter().map(MetricCounts::report).collect();
        let mut out = pooled.report();
        for &name in SUMMARY_METRICS {
            let values: Vec<f64> = reports.iter().filter_map(|r| r.scalar(name)).collect();
            if let Some(stat) = ReplicationStat::from_values(&values) {
                out.replication_stats.insert(name.into(), stat);
            }
        }
        out
    }

    /// Aligned two-column text rendering.
    pub fn to_text(&self, title: &str) -> String {
        let pct = |v: Option<f64>| v.map_or("n/a".to_string(), |v| format!("{:.2}%", v * 100.0));
        let mut rows: Vec<(String, String)> = vec![
            ("cases".into(), self.total.to_string()),
            ("sensitivity".into(), pct(self.sensitivity)),
            ("specificity".into(), pct(self.specificity)),
            ("autonomy_rate".into(), pct(Some(self.autonomy_rate))),
            ("fn_among_auto".into(), pct(self.fn_among_auto)),
            ("case_reduction".into(), pct(Some(self.case_reduction))),
            ("time_reduction".into(), pct(Some(self.time_reduction))),
            ("warnings_total".into(), self.warnings_total.to_string()),
        ];
        for (class, m) in &self.per_class {
            rows.push((format!("sensitivity[{class}]"), pct(m.sensitivity)));
        }
        for (k, v) in &self.pathway_histogram {
            rows.push((format!("pathway[{k}]"), v.to_string()));
        }
        let width = rows.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
        let mut s = format!("{title}\n");
        for (k, v) in rows {
            s.push_str(&format!("  {k:<width$}  {v:>10}\n"));
        }
        s
    }
}

/// Tallies one audit log against the truths and the unaided baseline log.
pub fn count_metrics(
    audit: &AuditLog,
    truths: &HashMap<String, DiagnosisClass>,
    baseline: &AuditLog,
) -> Result<MetricCounts, HarnessError> {
    let missing: Vec<String> = audit
        .records()
        .iter()
        .chain(baseline.records())
        .map(|r| &r.final_decision)
        .filter(|d| !truths.contains_key(d.case_id()))
        .map(|d| d.case_id().to_string())
        .collect();
    if !missing.is_empty() {
        return Err(HarnessError::MissingTruth(missing));
    }
    let mut c = MetricCounts::default();
    for r in audit.records() {
        let d = &r.final_decision;
        let truth = truths[d.case_id()];
        c.total += 1;
        c.confusion[truth.index()][d.final_label().index()] += 1;
        *c.pathway_histogram.entry(r.pathway_decision.pathway.histogram_key()).or_default() += 1;
        c.warnings += u64::from(d.warnings_fired());
        if d.decider() == Decider::Ai {
            c.autonomous += 1;
            if d.final_label().is_normal() {
                c.autonomous_normal += 1;
                c.autonomous_normal_false += u64::from(truth.is_abnormal());
            }
        } else {
            c.reviewed += 1;
            c.minutes += d.clinician_minutes();
        }
        debug_assert_eq!(d.decider() == Decider::Ai, r.pathway_decision.pathway == Pathway::AiOnly);
    }
    for r in baseline.records() {
        let d = &r.final_decision;
        if d.decider() != Decider::Ai {
            c.baseline_reviewed += 1;
            c.baseline_minutes += d.clinician_minutes();
        }
    }
    Ok(c)
}

/// Metrics for one audit log. `time_reduction` compares clinician minutes
/// with the unaided baseline over the same cases.
pub fn compute_metrics(
    audit: &AuditLog,
    truths: &HashMap<String, DiagnosisClass>,
    baseline: &AuditLog,
) -> Result<MetricsReport, HarnessError> {
    Ok(count_metrics(audit, truths, baseline)?.report())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{FinalDecision, PathwayDecision};

    fn log(rows: &[(&str, Pathway, DiagnosisClass, Decider, f64, u32)]) -> AuditLog {
        let mut log = AuditLog::new();
        for &(id, pathway, label, decider, minutes, warnings) in rows {
            let pd = PathwayDecision { case_id: id.into(), pathway, fired_rule: "r".into(), trace: vec![] };
            log.append(pd, FinalDecision::new(id, label, decider, minutes, warnings).unwrap());
        }
        log
    }

    fn truths(rows: &[(&str, DiagnosisClass)]) -> HashMap<String, DiagnosisClass> {
        rows.iter().map(|(id, c)| (id.to_string(), *c)).collect()
    }

    #[test]
    fn six_case_fixture() {
        use DiagnosisClass::*;
        let t = truths(&[
            ("c1", Normal),
            ("c2", Normal),
            ("c3", NeoplasticUrgent),
            ("c4", Normal),
            ("c5", NonNeoplasticUrgent),
            ("c6", NeoplasticNonUrgent),
        ]);
        let both = Pathway::ClinicianAndAi { priority: None };
        let audit = log(&[
            ("c1", Pathway::AiOnly, Normal, Decider::Ai, 0.0, 0),
            ("c2", Pathway::AiOnly, Normal, Decider::Ai, 0.0, 0),
            ("c3", Pathway::AiOnly, Normal, Decider::Ai, 0.0, 0), // missed abnormal
            ("c4", Pathway::ClinicianOnly, NeoplasticNonUrgent, Decider::Clinician, 2.0, 0), // false positive
            ("c5", both, NonNeoplasticUrgent, Decider::ClinicianWithAi, 6.0, 1),
            ("c6", Pathway::ClinicianOnly, NonNeoplasticNonUrgent, Decider::Clinician, 6.0, 0), // wrong abnormal class
        ]);
        // Unaided baseline: 2 + 2 + 6 + 2 + 6 + 6 = 24 minutes over 6 reviews.
        let baseline = log(&[
            ("c1", Pathway::ClinicianOnly, Normal, Decider::Clinician, 2.0, 0),
            ("c2", Pathway::ClinicianOnly, Normal, Decider::Clinician, 2.0, 0),
            ("c3", Pathway::ClinicianOnly, NeoplasticUrgent, Decider::Clinician, 6.0, 0),
            ("c4", Pathway::ClinicianOnly, Normal, Decider::Clinician, 2.0, 0),
            ("c5", Pathway::ClinicianOnly, NonNeoplasticUrgent, Decider::Clinician, 6.0, 0),
            ("c6", Pathway::ClinicianOnly, NeoplasticNonUrgent, Decider::Clinician, 6.0, 0),
        ]);
        let r = compute_metrics(&audit, &t, &baseline).unwrap();
        assert_eq!(r.total, 6);
        // Abnormal truths c3, c5, c6; c5 and c6 are called abnormal.
        assert_eq!(r.sensitivity, Some(2.0 / 3.0));
        // Normal truths c1, c2, c4; c4 is over-called.
        assert_eq!(r.specificity, Some(2.0 / 3.0));
        assert_eq!(r.autonomy_rate, 0.5);
        // Auto-reported normals c1, c2, c3; c3 is abnormal.
        assert_eq!(r.fn_among_auto, Some(1.0 / 3.0));
        assert_eq!(r.case_reduction, 0.5);
        // Reviewed minutes 2 + 6 + 6 = 14 of 24.
        assert_eq!(r.time_reduction, 1.0 - 14.0 / 24.0);
        assert_eq!(r.warnings_total, 1);
        assert_eq!(r.per_class[&NeoplasticUrgent].sensitivity, Some(0.0));
        assert_eq!(r.per_class[&NonNeoplasticUrgent].sensitivity, Some(1.0));
        assert_eq!(r.per_class[&NonNeoplasticNonUrgent].sensitivity, None);
        // c6 is the only false non_neoplastic_non_urgent call among 6 negatives.
        assert_eq!(r.per_class[&NonNeoplasticNonUrgent].specificity, Some(5.0 / 6.0));
        // Normal as a class: c3 is a false normal call among 3 negatives.
        assert_eq!(r.per_class[&Normal].specificity, Some(2.0 / 3.0));
        let hist: Vec<(&str, u64)> = r.pathway_histogram.iter().map(|(k, v)| (k.as_str(), *v)).collect();
        assert_eq!(hist, [("ai_only", 3), ("clinician_and_ai", 1), ("clinician_only", 2)]);
        assert_eq!(r.autonomy_rate, r.pathway_histogram["ai_only"] as f64 / r.total as f64);
    }

    #[test]
    fn perfect_unaided_run() {
        let t = truths(&[("a", DiagnosisClass::Normal), ("b", DiagnosisClass::NeoplasticUrgent)]);
        let audit = log(&[
            ("a", Pathway::ClinicianOnly, DiagnosisClass::Normal, Decider::Clinician, 2.0, 0),
            ("b", Pathway::ClinicianOnly, DiagnosisClass::NeoplasticUrgent, Decider::Clinician, 6.0, 0),
        ]);
        let r = compute_metrics(&audit, &t, &audit).unwrap();
        assert_eq!((r.sensitivity, r.specificity), (Some(1.0), Some(1.0)));
        assert_eq!((r.autonomy_rate, r.time_reduction, r.case_reduction), (0.0, 0.0, 0.0));
        assert_eq!(r.fn_among_auto, None);
    }

    #[test]
    fn workload_closed_form() {
        // 35 normals auto-reported; abnormal reads take 3x as long.
        let mut rows = Vec::new();
        let mut base = Vec::new();
        let ids: Vec<String> = (0..100).map(|i| format!("c{i}")).collect();
        let mut t = HashMap::new();
        for (i, id) in ids.iter().enumerate() {
            if i < 35 {
                rows.push((id.as_str(), Pathway::AiOnly, DiagnosisClass::Normal, Decider::Ai, 0.0, 0));
                base.push((id.as_str(), Pathway::ClinicianOnly, DiagnosisClass::Normal, Decider::Clinician, 1.0, 0));
                t.insert(id.clone(), DiagnosisClass::Normal);
            } else {
                let c = DiagnosisClass::NeoplasticNonUrgent;
                rows.push((id.as_str(), Pathway::ClinicianOnly, c, Decider::Clinician, 3.0, 0));
                base.push((id.as_str(), Pathway::ClinicianOnly, c, Decider::Clinician, 3.0, 0));
                t.insert(id.clone(), c);
            }
        }
        let r = compute_metrics(&log(&rows), &t, &log(&base)).unwrap();
        let expected = 0.35 * 1.0 / (0.35 * 1.0 + 0.65 * 3.0);
        assert!((r.time_reduction - expected).abs() < 1e-12);
        assert!((expected - 0.152).abs() < 1e-3);
        assert!((r.case_reduction - 0.35).abs() < 1e-12);
        assert!(r.time_reduction < r.case_reduction);
    }

    #[test]
    fn missing_truth_lists_case_ids() {
        let audit = log(&[("x", Pathway::AiOnly, DiagnosisClass::Normal, Decider::Ai, 0.0, 0)]);
        match compute_metrics(&audit, &HashMap::new(), &AuditLog::new()) {
            Err(HarnessError::MissingTruth(ids)) => assert_eq!(ids, ["x"]),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn merge_is_order_independent_for_counts() {
        let mut a = MetricCounts { total: 3, autonomous: 1, ..Default::default() };
        a.confusion[0][0] = 3;
        a.pathway_histogram.insert("ai_only".into(), 1);
        let mut b = MetricCounts { total: 2, reviewed: 2, ..Default::default() };
        b.confusion[1][1] = 2;
        b.pathway_histogram.insert("clinician_only".into(), 2);
        let mut ab = a.clone();
        ab.merge(&b);
        let mut ba = b.clone();
        ba.merge(&a);
        assert_eq!(ab, ba);
    }

    #[test]
    fn replication_interval() {
        let s = ReplicationStat::from_values(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(s.mean, 2.0);
        assert!((s.upper - (2.0 + 1.96 / 3f64.sqrt())).abs() < 1e-12);
        assert!(ReplicationStat::from_values(&[]).is_none());
    }
}
