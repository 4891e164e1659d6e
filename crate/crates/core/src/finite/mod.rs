//! Finite-blocklength error probabilities of the zero-rate and positive-rate
//! schemes, and slope fits of the resulting type-II series.
//!
//! The zero-rate decisions depend only on the source and observation types,
//! so their errors are summed exactly over joint types. The positive-rate
//! code is random and is simulated.

mod exact;
mod fit;
mod monte_carlo;
mod positive;
mod scheme;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::positive_rate::UChannelTuple;

pub use exact::{exact_zero_rate_errors, joint_type_count, JOINT_TYPE_BUDGET, MAX_EXACT_CELLS, MAX_EXACT_N};
pub use fit::{exponent_fit, exponent_fit_log, ExponentFit};
pub use monte_carlo::{mc_zero_rate_errors, wilson_half_width};
pub use positive::{bin_rates, mc_positive_rate_scheme, MAX_CODEWORDS, MAX_POSITIVE_N};

/// Which scheme to evaluate.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum SchemeMode {
    /// One message per distinct source marginal plus a fallback.
    WGtL,
    /// Tilted partition of source types into `w` cells; `b` is 0-based.
    Partition { w: usize, b: Vec<usize>, r: Vec<f64> },
    /// Random binning code with the given auxiliary channels and rate.
    PositiveRate { tuple: UChannelTuple, rate: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SchemeConfig {
    pub mode: SchemeMode,
    pub n: u64,
    pub mu: f64,
    pub trials: u64,
    pub seed: u64,
    /// Draw the positive-rate codebooks once instead of per trial.
    pub fixed_codebook: bool,
}

impl SchemeConfig {
    pub fn new(mode: SchemeMode, n: u64, mu: f64) -> Self {
        Self {
            mode,
            n,
            mu,
            trials: 10_000,
            seed: 0,
            fixed_codebook: false,
        }
    }

    pub fn with_trials(mut self, trials: u64, seed: u64) -> Self {
        self.trials = trials;
        self.seed = seed;
        self
    }

    pub fn with_n(&self, n: u64) -> Self {
        Self { n, ..self.clone() }
    }

    pub(crate) fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::invalid("blocklength must be at least 1"));
        }
        if !(self.mu > 0.0 && self.mu.is_finite()) {
            return Err(Error::invalid(format!("typicality radius {} must be positive", self.mu)));
        }
        Ok(())
    }
}

/// Error probabilities at one blocklength. `alpha[k][m]` is
/// `Pr{Ĥ_k ≠ m | H = m}` for `m ≠ k` (`None` on the diagonal) and `beta[k]`
/// is `Pr{Ĥ_k ≠ k | H = k}`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorEstimates {
    pub n: u64,
    pub exact: bool,
    pub trials: Option<u64>,
    pub alpha: Vec<Vec<Option<f64>>>,
    pub alpha_half_width: Vec<Vec<Option<f64>>>,
    pub beta: Vec<f64>,
    /// `ln β`, finite even where `β` underflows.
    pub log_beta: Vec<f64>,
    pub beta_half_width: Vec<f64>,
    /// Largest deviation of a summed distribution from 1 (exact runs).
    pub mass_error: Option<f64>,
    pub notes: Vec<String>,
}

impl ErrorEstimates {
    /// `max_m α_{k,m}`.
    pub fn max_alpha(&self, k: usize) -> f64 {
        self.alpha[k].iter().flatten().fold(0.0, |a, b| a.max(*b))
    }

    /// `β_k` as written in reports: underflow shows as `< 1e-300`.
    pub fn beta_label(&self, k: usize) -> String {
        if self.beta[k] == 0.0 && self.log_beta[k].is_finite() {
            "< 1e-300".into()
        } else {
            format!("{}", self.beta[k])
        }
    }

    /// Rows `(n, k, m, kind, value, exact, half_width)`, 1-based indices;
    /// type-II rows carry `m = k`.
    pub fn rows(&self) -> Vec<(u64, usize, usize, &'static str, f64, bool, f64)> {
        let mut out = Vec::new();
        for k in 0..self.beta.len() {
            for (m, a) in self.alpha[k].iter().enumerate() {
                if let Some(a) = a {
                    out.push((self.n, k + 1, m + 1, "alpha", *a, self.exact, self.alpha_half_width[k][m].unwrap_or(0.0)));
                }
            }
            out.push((self.n, k + 1, k + 1, "beta", self.beta[k], self.exact, self.beta_half_width[k]));
        }
        out
    }
}

/// Smallest `n` of the series from which on every `α_{k,m} ≤ ε_k`.
pub fn type_one_threshold(series: &[ErrorEstimates], epsilon: &[f64]) -> Option<u64> {
    let ok = |e: &ErrorEstimates| (0..e.beta.len()).all(|k| e.max_alpha(k) <= epsilon[k]);
    let mut sorted: Vec<&ErrorEstimates> = series.iter().collect();
    sorted.sort_by_key(|e| e.n);
    let mut threshold = None;
    for e in sorted.iter().rev() {
        if ok(e) {
            threshold = Some(e.n);
        } else {
            break;
        }
    }
    threshold
}

/// Streaming `ln Σ e^{l_i}`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct LogSum {
    max: f64,
    sum: f64,
}

impl Default for LogSum {
    fn default() -> Self {
        Self {
            max: f64::NEG_INFINITY,
            sum: 0.0,
        }
    }
}

impl LogSum {
    #[inline]
    pub fn add(&mut self, l: f64) {
        if l == f64::NEG_INFINITY {
            return;
        }
        if l <= self.max {
            self.sum += (l - self.max).exp();
        } else {
            self.sum = self.sum * (self.max - l).exp() + 1.0;
            self.max = l;
        }
    }

    pub fn merge(&mut self, other: &LogSum) {
        if other.sum > 0.0 {
            self.add(other.ln());
        }
    }

    pub fn ln(&self) -> f64 {
        if self.sum > 0.0 {
            self.max + self.sum.ln()
        } else {
            f64::NEG_INFINITY
        }
    }
}

/// `ln i!` for `i ≤ n`.
pub(crate) fn ln_factorials(n: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(n + 1);
    let mut acc = 0.0;
    out.push(0.0);
    for i in 1..=n {
        acc += (i as f64).ln();
        out.push(acc);
    }
    out
}
