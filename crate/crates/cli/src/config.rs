//! Command-line arguments and JSON config merging.
//!
//! Each subcommand's arguments double as its config-file schema: a `--config`
//! JSON object supplies defaults and any flag given on the command line wins.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use r4_core::R4Error;

#[derive(Debug, Parser)]
#[command(name = "r4", version, about = "Robust reduced-rank regression with outlier detection")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit one model at a fixed rank and threshold level or outlier budget.
    Fit(FitArgs),
    /// Fit a solution path over ranks and a threshold grid, select by the information criterion.
    Path(PathArgs),
    /// Run the synthetic benchmark.
    Simulate(SimulateArgs),
    /// Single-entry contamination sweep comparing plain and robust fits.
    Breakdown(BreakdownArgs),
}

fn is_false(b: &bool) -> bool {
    !*b
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
pub struct DataArgs {
    /// Design matrix CSV (n × p).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x: Option<PathBuf>,
    /// Response matrix CSV (n × m).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub y: Option<PathBuf>,
    /// Response weighting matrix CSV (m × m, positive definite).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma: Option<PathBuf>,
    /// Multivariate series CSV (T × m); regresses each row on the row `lag` steps earlier.
    #[arg(long, conflicts_with_all = ["x", "y"])]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub series: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lag: Option<usize>,
    /// Number of leading regression rows used for fitting; the rest are forecast.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub split: Option<usize>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
pub struct SolverArgs {
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_iterations: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
    /// Subsample-initialized restarts on top of the cold start.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub multistart: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub subsample_fraction: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
pub struct OutputArgs {
    /// Output directory.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    /// Omit timestamps so repeated runs produce identical files.
    #[arg(long)]
    #[serde(default, skip_serializing_if = "is_false")]
    pub no_timestamp: bool,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
pub struct FitArgs {
    /// JSON file with default values for any of these options.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rank: Option<usize>,
    /// Threshold level for the penalized form.
    #[arg(long, conflicts_with = "rho_count")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    /// soft, hard or hard-ridge.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rule: Option<String>,
    /// Ridge parameter for hard-ridge and the constrained form.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
    /// Maximum number of outlying rows (constrained form).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rho_count: Option<usize>,
    /// Threshold individual entries instead of whole rows.
    #[arg(long)]
    #[serde(default, skip_serializing_if = "is_false")]
    pub elementwise: bool,
    #[command(flatten)]
    #[serde(flatten)]
    pub solver: SolverArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
pub struct PathArgs {
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    pub data: DataArgs,
    /// Ranks as `1..R` (inclusive) or a comma list.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ranks: Option<String>,
    /// Number of threshold levels.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid: Option<usize>,
    /// Smallest targeted outlier proportion.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub vmin: Option<f64>,
    /// Largest targeted outlier proportion.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub vmax: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rule: Option<String>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
    #[arg(long)]
    #[serde(default, skip_serializing_if = "is_false")]
    pub elementwise: bool,
    /// Grid over outlier budgets instead of threshold levels.
    #[arg(long)]
    #[serde(default, skip_serializing_if = "is_false")]
    pub constrained: bool,
    #[command(flatten)]
    #[serde(flatten)]
    pub solver: SolverArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
pub struct SimulateArgs {
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// I, II or III.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
    /// Fraction of outlying rows.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub contamination: Option<f64>,
    /// Outlier magnitude in response standard deviations.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub snr: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reps: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rank: Option<usize>,
    /// Comma list of R4, R4_weighted, RRR, RRS, RRO.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub methods: Option<String>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub multistart: Option<usize>,
    /// Leave out the two high-leverage design rows.
    #[arg(long)]
    #[serde(default, skip_serializing_if = "is_false")]
    pub no_leverage: bool,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[command(flatten)]
    #[serde(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
pub struct BreakdownArgs {
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// Data to contaminate; a clean Model I instance is generated when omitted.
    #[command(flatten)]
    #[serde(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rank: Option<usize>,
    /// Comma list of increasing contamination magnitudes.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub magnitudes: Option<String>,
    /// Hard threshold level; defaults to three times the median clean residual row norm.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[command(flatten)]
    #[serde(flatten)]
    pub solver: SolverArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub output: OutputArgs,
}

/// Overlays the flags given on the command line onto the config file's values.
pub fn merge_config<T: Serialize + DeserializeOwned>(flags: &T, config: Option<&Path>) -> Result<T, R4Error> {
    let Some(path) = config else {
        return Ok(reparse(flags));
    };
    let text = std::fs::read_to_string(path).map_err(|source| R4Error::Io { path: path.to_path_buf(), source })?;
    let mut base: Value = serde_json::from_str(&text)
        .map_err(|e| R4Error::InvalidInput(format!("{}: {e}", path.display())))?;
    let Value::Object(base_map) = &mut base else {
        return Err(R4Error::InvalidInput(format!("{}: config must be a JSON object", path.display())));
    };
    let Value::Object(overrides) = serde_json::to_value(flags).expect("arguments serialize") else {
        unreachable!("arguments serialize to an object");
    };
    base_map.extend(overrides);
    let given = base_map.clone();
    let merged: T =
        serde_json::from_value(base).map_err(|e| R4Error::InvalidInput(format!("{}: {e}", path.display())))?;
    let Value::Object(known) = serde_json::to_value(&merged).expect("arguments serialize") else {
        unreachable!("arguments serialize to an object");
    };
    let unknown: Vec<&String> = given
        .iter()
        .filter(|(k, v)| !known.contains_key(*k) && !matches!(v, Value::Null | Value::Bool(false)))
        .map(|(k, _)| k)
        .collect();
    if !unknown.is_empty() {
        return Err(R4Error::InvalidInput(format!("{}: unknown config keys {unknown:?}", path.display())));
    }
    Ok(merged)
}

fn reparse<T: Serialize + DeserializeOwned>(flags: &T) -> T {
    serde_json::from_value(serde_json::to_value(flags).expect("arguments serialize")).expect("arguments round trip")
}

/// `1..R` (inclusive) or `1,2,4`.
pub fn parse_ranks(s: &str) -> Result<Vec<usize>, R4Error> {
    let bad = || R4Error::InvalidInput(format!("cannot parse ranks {s:?}; use 1..R or a comma list"));
    if let Some((a, b)) = s.split_once("..") {
        let lo: usize = a.trim().parse().map_err(|_| bad())?;
        let hi: usize = b.trim().trim_start_matches('=').parse().map_err(|_| bad())?;
        if lo == 0 || hi < lo {
            return Err(bad());
        }
        return Ok((lo..=hi).collect());
    }
    s.split(',').map(|t| t.trim().parse::<usize>().map_err(|_| bad())).collect()
}

pub fn parse_list<T: std::str::FromStr>(s: &str, what: &str) -> Result<Vec<T>, R4Error> {
    s.split(',')
        .map(|t| t.trim().parse::<T>().map_err(|_| R4Error::InvalidInput(format!("cannot parse {what} entry {t:?}"))))
        .collect()
}
