use std::path::PathBuf;

use clap::{Parser, ValueEnum};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Zero-rate region: rectangle corner for W > L, partition sweep otherwise.
    RegionZero,
    /// Positive-rate inner bound over gridded auxiliary channels.
    RegionPositive,
    /// Composite testing with merged hypothesis sets.
    RegionComposite,
    /// Finite-blocklength error probabilities and exponent fits.
    Simulate,
    /// Coupling solvers against the lattice oracle on random instances.
    VerifyOracle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// Exact type enumeration where the guards allow it, Monte Carlo otherwise.
    Auto,
    Exact,
    Mc,
}

/// Exponent regions for distributed hypothesis testing with one sensor and
/// several detectors.
#[derive(Debug, Clone, Parser, Serialize, Deserialize)]
#[command(name = "mdht", version)]
pub struct RunArgs {
    /// Model file (JSON). Not needed for verify-oracle or --replay.
    #[arg(long)]
    pub model: Option<PathBuf>,

    #[arg(long, value_enum)]
    pub command: Option<Command>,

    /// Number of zero-rate messages.
    #[arg(long = "W", default_value_t = 2)]
    pub w: usize,

    /// Communication rate in nats per symbol.
    #[arg(long = "R")]
    pub rate: Option<f64>,

    /// Grid resolution; defaults depend on the command and |X|.
    #[arg(long)]
    pub delta: Option<f64>,

    #[arg(long, default_value_t = -2.0, allow_hyphen_values = true)]
    pub r_min: f64,

    #[arg(long, default_value_t = 2.0, allow_hyphen_values = true)]
    pub r_max: f64,

    #[arg(long, default_value_t = 0.05)]
    pub r_step: f64,

    /// Bisection depth for tilts where the partition changes (K=2 only).
    #[arg(long, default_value_t = 0)]
    pub r_refine: usize,

    /// Auxiliary alphabet size for positive-rate searches.
    #[arg(long, default_value_t = 2)]
    pub u_size: usize,

    /// Blocklengths, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub n: Vec<u64>,

    #[arg(long, default_value_t = 10_000)]
    pub trials: u64,

    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    /// Typicality radius.
    #[arg(long, default_value_t = 0.02)]
    pub mu: f64,

    /// Partition mapping for simulate, 1-based cells per hypothesis, e.g. "1,2,2".
    #[arg(long, value_delimiter = ',')]
    pub b: Vec<usize>,

    /// Tilt vector for simulate (K-1 entries).
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub r: Vec<f64>,

    /// Shared auxiliary channel for positive-rate simulation, rows U|X
    /// separated by ';', e.g. "0.75,0.25;0.25,0.75".
    #[arg(long)]
    pub channel: Option<String>,

    /// Draw positive-rate codebooks once instead of per trial.
    #[arg(long)]
    pub fixed_codebook: bool,

    #[arg(long, value_enum, default_value_t = Method::Auto)]
    pub method: Method,

    /// Merged sets S_k for region-composite, 1-based, e.g. "1,3;2".
    #[arg(long)]
    pub sets: Option<String>,

    /// Local-search weight vectors for region-composite, e.g. "1,1;2,1".
    #[arg(long)]
    pub weights: Option<String>,

    /// Instances per family for verify-oracle.
    #[arg(long, default_value_t = 10)]
    pub instances: usize,

    /// Output directory (created if missing).
    #[arg(long, default_value = "mdht-out")]
    pub out: PathBuf,

    /// Rerun the parameters and model stored in a manifest.
    #[arg(long)]
    #[serde(skip)]
    pub replay: Option<PathBuf>,
}

/// `"a,b;c"` into rows of numbers.
pub fn parse_rows<T: std::str::FromStr>(text: &str, what: &str) -> Result<Vec<Vec<T>>, String> {
    text.split(';')
        .map(|row| {
            row.split(',')
                .map(|v| v.trim().parse::<T>().map_err(|_| format!("{what}: cannot parse '{}'", v.trim())))
                .collect()
        })
        .collect()
}
