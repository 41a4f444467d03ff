use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use pns_bounds::{
    compatibility_check, coverage_trial, default_grid, joint_covariate_bounds, merged_bounds,
    oracle_bounds, oracle_bounds_stratified, shifted_merged_bounds, stratified_merged_bounds,
    tian_pearl_bounds, tightness_check, validate_with_tol, BoundsError, CoverageConfig, DeltaPolicy,
    ExternalMarginal, JointDistribution, StratifiedInput, TargetMarginal, DEFAULT_TOL,
};
use serde::Deserialize;
use serde_json::{json, Value};

#[derive(Parser)]
#[command(name = "pns-bounds", version, about = "Bounds on the probability of necessity and sufficiency")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Significant digits in numeric output.
    #[arg(long, global = true, default_value_t = 9, value_parser = clap::value_parser!(u32).range(1..=17))]
    precision: u32,
}

#[derive(Subcommand)]
enum Command {
    /// Bounds from the target dataset alone.
    TianPearl(InputArgs),
    /// Merged bounds for an external dataset with the same treatment mechanism.
    Merge(InputArgs),
    /// Merged bounds with a shifted external treatment mechanism.
    MergeDelta(InputArgs),
    /// Merged bounds per covariate stratum, averaged over P(C).
    MergeStratified(InputArgs),
    /// Bounds from the full joint P(Z | X, Y, C).
    Joint(InputArgs),
    /// Compares joint bounds with bounds that marginalise Y.
    Tightness(InputArgs),
    /// Grid-search oracle over the coherent free parameters.
    Oracle(OracleArgs),
    /// Coverage of all bounds on random structural models.
    Simulate(SimulateArgs),
}

#[derive(Args)]
struct InputArgs {
    /// JSON document with `target`, `external`, `stratified` and/or `joint`.
    #[arg(long)]
    input: PathBuf,
    /// Tolerance for normalisation and compatibility checks on the input.
    #[arg(long, default_value_t = DEFAULT_TOL, value_parser = positive)]
    tol: f64,
}

#[derive(Args)]
struct OracleArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Grid points per free parameter; defaults by dimension.
    #[arg(long, value_parser = clap::value_parser!(u64).range(2..))]
    grid: Option<u64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum PolicyArg {
    Zero,
    Random,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, default_value_t = 1000)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 2)]
    support_y: usize,
    #[arg(long, default_value_t = 1)]
    support_c: usize,
    #[arg(long, value_enum, default_value_t = PolicyArg::Zero)]
    delta_policy: PolicyArg,
    /// Oracle grid; defaults by dimension, oracle skipped when `|Y| > 3`.
    #[arg(long, value_parser = clap::value_parser!(u64).range(2..))]
    grid: Option<u64>,
}

fn positive(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v > 0.0 && v.is_finite() => Ok(v),
        _ => Err(format!("expected a positive number, got {s}")),
    }
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct Document {
    target: Option<TargetMarginal>,
    external: Option<ExternalMarginal>,
    stratified: Option<StratifiedInput>,
    joint: Option<JointDistribution>,
}

enum Failure {
    Invalid(String),
    Budget(String),
}

impl From<BoundsError> for Failure {
    fn from(e: BoundsError) -> Self {
        match e {
            BoundsError::Budget { .. } => Failure::Budget(e.to_string()),
            _ => Failure::Invalid(e.to_string()),
        }
    }
}

fn load(path: &Path) -> Result<Document, Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::Invalid(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Failure::Invalid(format!("invalid input: {e}")))
}

fn field<T>(value: Option<T>, name: &str) -> Result<T, Failure> {
    value.ok_or_else(|| Failure::Invalid(format!("input is missing `{name}`")))
}

fn pair(doc: Document, tol: f64) -> Result<(TargetMarginal, ExternalMarginal), Failure> {
    let target = field(doc.target, "target")?;
    let external = field(doc.external, "external")?;
    validate_with_tol(&target, &external, tol)?;
    if !compatibility_check(&target, &external, tol) {
        return Err(Failure::Invalid(format!(
            "marginals violate the compatibility identity: both datasets must imply the same P(Z=1) (tol {tol:e})"
        )));
    }
    Ok((target, external))
}

fn to_json<T: serde::Serialize>(value: &T) -> Value {
    serde_json::to_value(value).expect("result types serialise")
}

fn run(command: Command) -> Result<Value, Failure> {
    match command {
        Command::TianPearl(a) => {
            let target = field(load(&a.input)?.target, "target")?;
            target.validate()?;
            Ok(to_json(&tian_pearl_bounds(&target)))
        }
        Command::Merge(a) => {
            let (target, external) = pair(load(&a.input)?, a.tol)?;
            Ok(to_json(&merged_bounds(&target, &external)?))
        }
        Command::MergeDelta(a) => {
            let (target, external) = pair(load(&a.input)?, a.tol)?;
            Ok(to_json(&shifted_merged_bounds(&target, &external)?))
        }
        Command::MergeStratified(a) => {
            let input = field(load(&a.input)?.stratified, "stratified")?;
            input.validate_with_tol(a.tol)?;
            let out = stratified_merged_bounds(&input)?;
            Ok(json!({
                "lower": out.bounds.lower,
                "upper": out.bounds.upper,
                "phi": out.bounds.phi,
                "theta": out.bounds.theta,
                "per_stratum": out.per_stratum,
            }))
        }
        Command::Joint(a) => {
            let joint = field(load(&a.input)?.joint, "joint")?;
            joint.validate_with_tol(a.tol)?;
            let (bounds, components) = joint_covariate_bounds(&joint)?;
            Ok(json!({
                "lower": bounds.lower,
                "upper": bounds.upper,
                "components": components,
            }))
        }
        Command::Tightness(a) => {
            let joint = field(load(&a.input)?.joint, "joint")?;
            joint.validate_with_tol(a.tol)?;
            Ok(to_json(&tightness_check(&joint)?))
        }
        Command::Oracle(a) => {
            let doc = load(&a.input.input)?;
            let grid = |n: usize| a.grid.map_or(default_grid(n), |g| g as usize);
            if doc.target.is_none() && doc.external.is_none() {
                let input = field(doc.stratified, "target")?;
                input.validate_with_tol(a.input.tol)?;
                let g = grid(input.p_y.len() - 1);
                Ok(to_json(&oracle_bounds_stratified(&input, g)?))
            } else {
                let (target, external) = pair(doc, a.input.tol)?;
                let g = grid(external.p_y.len().saturating_sub(1));
                Ok(to_json(&oracle_bounds(&target, &external, g)?))
            }
        }
        Command::Simulate(a) => {
            let n = a.support_y.saturating_sub(1);
            let oracle_grid = match a.grid {
                Some(g) => Some(g as usize),
                None if n <= 3 => Some(default_grid(n)),
                None => None,
            };
            let config = CoverageConfig {
                seed: a.seed,
                trials: a.trials,
                support_y: a.support_y,
                support_c: a.support_c,
                delta_policy: match a.delta_policy {
                    PolicyArg::Zero => DeltaPolicy::Zero,
                    PolicyArg::Random => DeltaPolicy::Random,
                },
                oracle_grid,
            };
            Ok(to_json(&coverage_trial(&config)?))
        }
    }
}

fn round_significant(v: f64, digits: u32) -> f64 {
    if v == 0.0 || !v.is_finite() {
        return v;
    }
    format!("{:.*e}", digits as usize - 1, v).parse().unwrap_or(v)
}

fn round_value(value: Value, digits: u32) -> Value {
    match value {
        Value::Number(n) if n.is_f64() => {
            json!(round_significant(n.as_f64().unwrap_or_default(), digits))
        }
        Value::Array(items) => Value::Array(items.into_iter().map(|v| round_value(v, digits)).collect()),
        Value::Object(map) => Value::Object(map.into_iter().map(|(k, v)| (k, round_value(v, digits))).collect()),
        other => other,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(value) => {
            println!("{}", round_value(value, cli.precision));
            ExitCode::SUCCESS
        }
        Err(Failure::Invalid(msg)) => {
            println!("{}", json!({ "error": msg }));
            ExitCode::from(2)
        }
        Err(Failure::Budget(msg)) => {
            println!("{}", json!({ "error": msg }));
            ExitCode::from(3)
        }
    }
}
