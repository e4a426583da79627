//! `simulate` and `compare`.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::anyhow;
use clap::Args;
use delegation_core::harness::{
    run_experiment, sweep_threshold, sweep_to_csv, ExperimentOptions, HarnessError, ReplicationStat, Scenario,
};
use delegation_core::model::ModalityKind;

use crate::output::{to_json, write_atomic};
use crate::{CmdResult, Failure, RunArgs};

const DEFAULT_GRID: &[f64] = &[0.5, 0.8, 0.9, 0.95, 0.97, 0.98, 0.99, 0.995, 0.999, 1.0];

/// Metrics compared by `compare`.
pub const COMPARED_METRICS: &[&str] = &["sensitivity", "specificity", "time_reduction"];

pub const COMPARE_CSV_HEADER: &str = "modality,baseline,metric,delta_mean,delta_lower,delta_upper,replications";

#[derive(Debug, Args)]
pub struct SimulateArgs {
    pub scenario: PathBuf,
    /// Modalities to run (comma-separated); defaults to every configured one.
    #[arg(long, value_delimiter = ',')]
    pub modality: Vec<String>,
    /// Sweep the confidence threshold of this policy rule instead.
    #[arg(long, value_name = "RULE_ID")]
    pub sweep: Option<String>,
    /// Ascending thresholds for `--sweep`.
    #[arg(long, value_delimiter = ',', requires = "sweep")]
    pub grid: Vec<f64>,
    #[command(flatten)]
    pub run: RunArgs,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    pub scenario: PathBuf,
    #[arg(long, default_value = "unaided")]
    pub baseline: String,
    /// Modalities to compare against the baseline (comma-separated).
    #[arg(long, value_delimiter = ',', required = true)]
    pub against: Vec<String>,
    #[command(flatten)]
    pub run: RunArgs,
}

fn harness_failure(e: HarnessError) -> Failure {
    match e {
        HarnessError::Io { .. } => Failure::runtime(e),
        HarnessError::Config(_) | HarnessError::NoFeasibleThreshold(_) => Failure::rejected(e),
        other => Failure::runtime(other),
    }
}

fn load(path: &Path) -> Result<Scenario, Failure> {
    Scenario::load(path).map_err(harness_failure)
}

fn parse_kinds(names: &[String]) -> Result<Vec<ModalityKind>, Failure> {
    names
        .iter()
        .map(|n| ModalityKind::parse_lenient(n.trim()).map_err(|e| Failure::rejected(anyhow!("{e}"))))
        .collect()
}

fn configured(scenario: &Scenario) -> Vec<ModalityKind> {
    ModalityKind::ALL.iter().copied().filter(|k| scenario.modality(*k).is_ok()).collect()
}

fn options(run: &RunArgs, keep: bool) -> ExperimentOptions {
    ExperimentOptions {
        population_size: run.population_size,
        replications: run.replications,
        seed: run.seed,
        fixed_threshold: None,
        keep_first_replication: keep,
    }
}

fn written(path: PathBuf, contents: &str) -> CmdResult {
    write_atomic(&path, contents.as_bytes())?;
    println!("{}", path.display());
    Ok(())
}

pub fn simulate(args: &SimulateArgs) -> CmdResult {
    let scenario = load(&args.scenario)?;
    let out = args.run.out_dir();
    if let Some(rule) = &args.sweep {
        let grid = if args.grid.is_empty() { DEFAULT_GRID } else { &args.grid[..] };
        let rows = sweep_threshold(&scenario, rule, grid, &options(&args.run, false)).map_err(harness_failure)?;
        return written(out.join("sweep.csv"), &sweep_to_csv(&rows));
    }
    let kinds = if args.modality.is_empty() { configured(&scenario) } else { parse_kinds(&args.modality)? };
    let result = run_experiment(&scenario, &kinds, &options(&args.run, true)).map_err(harness_failure)?;

    let mut summary = format!(
        "scenario {}\nseed {}\npopulation {} x {} replication(s)\n",
        result.scenario,
        result.seed,
        result.population_size,
        result.replications.len()
    );
    for (kind, report) in result.reports() {
        written(out.join(format!("{kind}.json")), &to_json(&report))?;
        summary.push('\n');
        summary.push_str(&report.to_text(&kind.to_string()));
    }
    let thresholds: Vec<_> = result.replications.iter().filter_map(|r| r.threshold.clone()).collect();
    if !thresholds.is_empty() {
        written(out.join("thresholds.json"), &to_json(&thresholds))?;
    }
    for (kind, log) in &result.audit {
        written(out.join("audit").join(format!("{kind}.jsonl")), &log.to_jsonl())?;
    }
    written(out.join("summary.txt"), &summary)
}

pub fn compare(args: &CompareArgs) -> CmdResult {
    let scenario = load(&args.scenario)?;
    let baseline = parse_kinds(std::slice::from_ref(&args.baseline))?[0];
    let against = parse_kinds(&args.against)?;
    let mut kinds = vec![baseline];
    kinds.extend(against.iter().copied());
    let result = run_experiment(&scenario, &kinds, &options(&args.run, false)).map_err(harness_failure)?;
    let base = result.per_replication(baseline);

    let mut csv = format!("{COMPARE_CSV_HEADER}\n");
    let mut text = format!(
        "{} vs {baseline} ({} replication(s) of {} cases, seed {})\n",
        result.scenario,
        base.len(),
        result.population_size,
        result.seed
    );
    let mut seen = Vec::new();
    for kind in against {
        if seen.contains(&kind) {
            continue;
        }
        seen.push(kind);
        let runs = result.per_replication(kind);
        let _ = writeln!(text, "\n{kind}");
        for &metric in COMPARED_METRICS {
            let deltas: Vec<f64> = runs
                .iter()
                .zip(&base)
                .filter_map(|(a, b)| Some(a.scalar(metric)? - b.scalar(metric)?))
                .collect();
            match ReplicationStat::from_values(&deltas) {
                Some(s) => {
                    let _ = writeln!(csv, "{kind},{baseline},{metric},{},{},{},{}", s.mean, s.lower, s.upper, s.replications);
                    let _ = writeln!(
                        text,
                        "  {metric:<16} {:+7.2} pp  [{:+.2}, {:+.2}]",
                        s.mean * 100.0,
                        s.lower * 100.0,
                        s.upper * 100.0
                    );
                }
                None => {
                    let _ = writeln!(csv, "{kind},{baseline},{metric},,,,0");
                    let _ = writeln!(text, "  {metric:<16} n/a");
                }
            }
        }
    }
    let out = args.run.out_dir();
    print!("{text}");
    written(out.join("compare.csv"), &csv)?;
    written(out.join("compare.txt"), &text)
}
