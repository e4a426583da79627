//! `policy check|fmt|build`.

use std::path::{Path, PathBuf};

use anyhow::anyhow;
use clap::Args;
use delegation_core::calibration::ThresholdResult;
use delegation_core::dsl::{format_policy, parse_policy, validate_policy, Policy};
use delegation_core::schema::FieldSchema;

use crate::output::{emit, read_text, write_atomic};
use crate::{CmdResult, Failure};

#[derive(Debug, Args)]
pub struct CheckArgs {
    pub policy: PathBuf,
    /// Field schema (JSON) the policy is checked against.
    #[arg(long)]
    pub schema: PathBuf,
    /// Also enforce the fail-safe rules (no ai_only default, QC guard first).
    #[arg(long)]
    pub safety_profile: bool,
}

#[derive(Debug, Args)]
pub struct FmtArgs {
    pub policy: PathBuf,
    /// Rewrite the file in place instead of printing.
    #[arg(long)]
    pub write: bool,
}

#[derive(Debug, Args)]
pub struct BuildArgs {
    pub template: PathBuf,
    /// `RULE_ID=VALUE`, where VALUE is a number or a threshold result JSON file.
    #[arg(long = "threshold", value_name = "RULE_ID=VALUE", required = true)]
    pub thresholds: Vec<String>,
    /// Validate the result against this schema under the safety profile.
    #[arg(long)]
    pub schema: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn load_policy(path: &Path) -> Result<(String, Policy), Failure> {
    let text = read_text(path)?;
    let policy = parse_policy(&text).map_err(|e| Failure::rejected(anyhow!("{}:{e}", path.display())))?;
    Ok((text, policy))
}

fn load_schema(path: &Path) -> Result<FieldSchema, Failure> {
    FieldSchema::from_json_str(&read_text(path)?)
        .map_err(|e| Failure::rejected(anyhow!("{}: invalid schema: {e}", path.display())))
}

fn report(path: &Path, policy: &Policy, schema: &FieldSchema, safety: bool) -> CmdResult {
    let diags = validate_policy(policy, schema, safety);
    for d in &diags {
        println!("{}:{d}", path.display());
    }
    if diags.is_empty() {
        Ok(())
    } else {
        Err(Failure::rejected(anyhow!("{} diagnostic(s) in {}", diags.len(), path.display())))
    }
}

pub fn check(args: &CheckArgs) -> CmdResult {
    let (_, policy) = load_policy(&args.policy)?;
    let schema = load_schema(&args.schema)?;
    report(&args.policy, &policy, &schema, args.safety_profile)?;
    println!("{}: ok", args.policy.display());
    Ok(())
}

pub fn fmt(args: &FmtArgs) -> CmdResult {
    let (text, policy) = load_policy(&args.policy)?;
    let formatted = format_policy(&policy);
    if !args.write {
        print!("{formatted}");
    } else if formatted != text {
        write_atomic(&args.policy, formatted.as_bytes())?;
    }
    Ok(())
}

fn threshold_value(spec: &str) -> Result<(String, f64), Failure> {
    let (rule, value) = spec
        .split_once('=')
        .ok_or_else(|| Failure::rejected(anyhow!("`{spec}`: expected RULE_ID=VALUE")))?;
    let tau = match value.parse::<f64>() {
        Ok(v) => v,
        Err(_) => {
            let path = Path::new(value);
            let r: ThresholdResult = serde_json::from_str(&read_text(path)?)
                .map_err(|e| Failure::rejected(anyhow!("{}: not a feasible threshold result: {e}", path.display())))?;
            r.tau
        }
    };
    if !(0.0..=1.0).contains(&tau) {
        return Err(Failure::rejected(anyhow!("threshold for `{rule}` must lie in [0, 1], got {tau}")));
    }
    Ok((rule.to_string(), tau))
}

pub fn build(args: &BuildArgs) -> CmdResult {
    let (_, mut policy) = load_policy(&args.template)?;
    for spec in &args.thresholds {
        let (rule, tau) = threshold_value(spec)?;
        match policy.set_confidence_threshold(&rule, tau) {
            Some(n) if n > 0 => {}
            Some(_) => return Err(Failure::rejected(anyhow!("rule `{rule}` has no `ai.confidence >=` comparison"))),
            None => return Err(Failure::rejected(anyhow!("rule `{rule}` is not in {}", args.template.display()))),
        }
    }
    if let Some(schema) = &args.schema {
        report(&args.template, &policy, &load_schema(schema)?, true)?;
    }
    emit(args.out.as_deref(), &format_policy(&policy))
}
