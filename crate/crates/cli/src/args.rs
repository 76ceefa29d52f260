use std::path::PathBuf;

use clap::{Args, ValueEnum};

use kltrend::limit_law::{Norm, StripeCenter};
use kltrend::panel::InitMode;
use kltrend::trend_count::CountMethod;
use kltrend::{Error, Result};

#[derive(Debug, Clone, Args)]
pub struct InputArgs {
    /// CSV file with a header row; the first data row is X_0.
    pub input: PathBuf,
    /// Time-stamp column to drop.
    #[arg(long)]
    pub time_column: Option<String>,
    /// Comma separated column names to keep, in order.
    #[arg(long, value_delimiter = ',')]
    pub columns: Option<Vec<String>>,
    /// Take natural logarithms.
    #[arg(long)]
    pub log: bool,
    /// Subtract the first row from every row.
    #[arg(long)]
    pub normalize_start: bool,
    #[arg(long, value_enum, default_value = "levels")]
    pub init_mode: InitModeArg,
    /// Keep a subset of series, e.g. `1-11,14` (1-based) or names.
    #[arg(long, conflicts_with = "aggregate")]
    pub select: Option<String>,
    /// Average groups of series, e.g. `1+2,3+4+5`.
    #[arg(long)]
    pub aggregate: Option<String>,
    /// Number of basis functions; default ⌈T^{3/4}⌉.
    #[arg(long)]
    pub k: Option<usize>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum InitModeArg {
    Levels,
    DifferenceFromStart,
}

impl From<InitModeArg> for InitMode {
    fn from(m: InitModeArg) -> Self {
        match m {
            InitModeArg::Levels => InitMode::Levels,
            InitModeArg::DifferenceFromStart => InitMode::DifferenceFromStart,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct TableArgs {
    /// Discretisation steps for simulated critical values.
    #[arg(long, default_value_t = kltrend::limit_law::DEFAULT_STEPS)]
    pub table_steps: usize,
    /// Replications for simulated critical values.
    #[arg(long, default_value_t = kltrend::limit_law::DEFAULT_REPS)]
    pub table_reps: usize,
    /// Seed of the critical value simulation.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Fail instead of simulating missing critical values.
    #[arg(long)]
    pub no_simulate: bool,
    /// Cache directory; overrides KLTREND_CACHE_DIR.
    #[arg(long)]
    pub cache_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Maxgap,
    F1,
    F2,
    F3,
    SeqF1,
    SeqFinf,
}

impl MethodArg {
    pub fn to_method(self, eta: f64, include_zero: bool) -> CountMethod {
        match self {
            MethodArg::Maxgap => CountMethod::MaxGap,
            MethodArg::F1 => CountMethod::F1,
            MethodArg::F2 => CountMethod::F2 { include_zero },
            MethodArg::F3 => CountMethod::F3 { include_zero },
            MethodArg::SeqF1 => CountMethod::SeqF1 { eta },
            MethodArg::SeqFinf => CountMethod::SeqFinf { eta },
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum NormArg {
    One,
    Inf,
}

impl From<NormArg> for Norm {
    fn from(n: NormArg) -> Self {
        match n {
            NormArg::One => Norm::One,
            NormArg::Inf => Norm::Infinity,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum CenterArg {
    Mean,
    Median,
}

impl From<CenterArg> for StripeCenter {
    fn from(c: CenterArg) -> Self {
        match c {
            CenterArg::Mean => StripeCenter::Mean,
            CenterArg::Median => StripeCenter::Median,
        }
    }
}

fn resolve(token: &str, labels: &[String]) -> Result<usize> {
    let token = token.trim();
    if let Ok(i) = token.parse::<usize>() {
        if i == 0 || i > labels.len() {
            return Err(Error::InvalidArgument(format!(
                "column {i} out of range 1..={}",
                labels.len()
            )));
        }
        return Ok(i - 1);
    }
    labels
        .iter()
        .position(|l| l == token)
        .ok_or_else(|| Error::InvalidArgument(format!("unknown column {token:?}")))
}

/// Parses `1-3,5,name` into 0-based column indices.
pub fn parse_columns(spec: &str, labels: &[String]) -> Result<Vec<usize>> {
    let mut out = Vec::new();
    for part in spec.split(',').filter(|p| !p.trim().is_empty()) {
        match part.split_once('-') {
            Some((a, b)) if a.trim().parse::<usize>().is_ok() && b.trim().parse::<usize>().is_ok() => {
                let (lo, hi) = (resolve(a, labels)?, resolve(b, labels)?);
                if lo > hi {
                    return Err(Error::InvalidArgument(format!("empty range {part:?}")));
                }
                out.extend(lo..=hi);
            }
            _ => out.push(resolve(part, labels)?),
        }
    }
    if out.is_empty() {
        return Err(Error::InvalidArgument(format!("no columns in {spec:?}")));
    }
    Ok(out)
}

/// Parses `1+2,3+4` into groups of 0-based indices.
pub fn parse_groups(spec: &str, labels: &[String]) -> Result<Vec<Vec<usize>>> {
    spec.split(',')
        .filter(|g| !g.trim().is_empty())
        .map(|g| g.split('+').map(|t| resolve(t, labels)).collect())
        .collect()
}
