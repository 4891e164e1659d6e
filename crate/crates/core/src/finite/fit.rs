//! Exponent estimates from type-II error series.

use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExponentFit {
    /// Least-squares slope of `−ln β` against `n`, nats per symbol.
    pub slope: f64,
    /// Intercept, the sub-exponential prefactor on the log scale.
    pub intercept: f64,
    /// Blocklengths that entered the fit.
    pub used: Vec<u64>,
    /// Blocklengths dropped because `β = 0`.
    pub dropped: Vec<u64>,
}

/// Fit on `(n, β)` pairs; zero `β` is dropped with a warning.
pub fn exponent_fit(series: &[(u64, f64)]) -> Result<ExponentFit> {
    if series.iter().any(|(_, b)| !(*b >= 0.0 && *b <= 1.0)) {
        return Err(Error::invalid("β values must lie in [0,1]"));
    }
    exponent_fit_log(&series.iter().map(|(n, b)| (*n, b.ln())).collect::<Vec<_>>())
}

/// Fit on `(n, ln β)` pairs, which avoids underflow of tiny `β`.
pub fn exponent_fit_log(series: &[(u64, f64)]) -> Result<ExponentFit> {
    let (kept, dropped): (Vec<_>, Vec<_>) = series.iter().partition(|(_, l)| l.is_finite());
    let dropped: Vec<u64> = dropped.iter().map(|(n, _)| *n).collect();
    if !dropped.is_empty() {
        log::warn!("dropping blocklengths {dropped:?} with β = 0 from the exponent fit");
    }
    if kept.len() < 3 {
        return Err(Error::invalid(format!(
            "exponent fit needs at least 3 points with β > 0, got {}",
            kept.len()
        )));
    }
    let len = kept.len() as f64;
    let mean_n = kept.iter().map(|(n, _)| *n as f64).sum::<f64>() / len;
    let mean_y = kept.iter().map(|(_, l)| -l).sum::<f64>() / len;
    let sxx: f64 = kept.iter().map(|(n, _)| (*n as f64 - mean_n).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::invalid("exponent fit needs distinct blocklengths"));
    }
    let sxy: f64 = kept.iter().map(|(n, l)| (*n as f64 - mean_n) * (-l - mean_y)).sum();
    let slope = sxy / sxx;
    Ok(ExponentFit {
        slope,
        intercept: mean_y - slope * mean_n,
        used: kept.iter().map(|(n, _)| *n).collect(),
        dropped,
    })
}
