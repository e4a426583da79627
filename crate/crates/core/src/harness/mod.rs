//! Experiment harness: synthetic populations, paired runs of several
//! modalities across replications, and the metrics that compare them.

mod experiment;
mod metrics;
mod population;
mod scenario;

use std::path::PathBuf;

use thiserror::Error;

pub use experiment::{
    assess_population, calibration_for, replication_seed, run_experiment, select_policy_threshold, sweep_threshold,
    sweep_to_csv, ExperimentOptions, ExperimentResult, ReplicationRun, SweepRow, SWEEP_CSV_HEADER,
};
pub use metrics::{
    compute_metrics, count_metrics, ClassMetrics, MetricCounts, MetricsReport, ReplicationStat, SUMMARY_METRICS,
};
pub use population::{case_id, generate_case, generate_population};
pub use scenario::{
    Assumed, CalibrationSource, CodocParams, ContextModel, DecisionReferralParams, HcnParams, ModalityParams,
    OosEntityModel, Scenario, ScenarioConfig, SchemaSource, Seeds, ThresholdSelection,
};

use crate::calibration::{CalibrationError, NoFeasibleThreshold};
use crate::router::RouterError;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid scenario:\n{}", .0.iter().map(|p| format!("  {p}")).collect::<Vec<_>>().join("\n"))]
    Config(Vec<String>),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("no feasible threshold for `{}` at target error {}", .0.target_class, .0.target_error)]
    NoFeasibleThreshold(Box<NoFeasibleThreshold>),
    #[error("no truth for cases: {}", .0.join(", "))]
    MissingTruth(Vec<String>),
    #[error(transparent)]
    Router(#[from] RouterError),
    #[error(transparent)]
    Calibration(#[from] CalibrationError),
}
