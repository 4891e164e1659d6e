//! Exact zero-rate error probabilities by summing over joint types.

use rayon::prelude::*;

use super::scheme::ZeroRateScheme;
use super::{ln_factorials, ErrorEstimates, LogSum, SchemeConfig};
use crate::error::{Error, Result};
use crate::model::HypothesisModel;
use crate::prob::binomial;

/// Largest blocklength for exact sums.
pub const MAX_EXACT_N: u64 = 300;
/// Largest `|X|·|Y_k|` for exact sums.
pub const MAX_EXACT_CELLS: usize = 6;
/// Joint types enumerated per detector before the computation is refused.
pub const JOINT_TYPE_BUDGET: f64 = 1.0e8;

/// Number of joint types with `n` symbols over `cells` letters.
pub fn joint_type_count(n: u64, cells: usize) -> f64 {
    binomial(n as usize + cells - 1, cells - 1)
}

struct Enumerator<'a> {
    n: usize,
    ny: usize,
    cells: usize,
    hyps: usize,
    /// `ln P^(m)(x,y)` at `[m * cells + cell]`.
    lnp: Vec<f64>,
    lnfact: &'a [f64],
    scheme: &'a ZeroRateScheme,
    k: usize,
}

impl Enumerator<'_> {
    fn slot(&self, m: usize, w: usize, yi: usize) -> usize {
        (m * self.scheme.messages + w) * self.scheme.y_index[self.k].size() + yi
    }

    /// Accumulators for every joint type whose first cell holds `c0` symbols.
    fn slab(&self, c0: usize) -> Vec<LogSum> {
        let mut acc = vec![LogSum::default(); self.hyps * self.scheme.messages * self.scheme.y_index[self.k].size()];
        let mut xc = vec![0u32; self.cells / self.ny];
        let mut yc = vec![0u32; self.ny];
        let mut lp = vec![0.0; (self.cells + 1) * self.hyps];
        self.place(0, c0, self.n, 0.0, &mut xc, &mut yc, &mut lp, &mut acc);
        acc
    }

    #[allow(clippy::too_many_arguments)]
    fn place(
        &self,
        cell: usize,
        c: usize,
        remaining: usize,
        lcoef: f64,
        xc: &mut [u32],
        yc: &mut [u32],
        lp: &mut [f64],
        acc: &mut [LogSum],
    ) {
        let (x, y, h) = (cell / self.ny, cell % self.ny, self.hyps);
        xc[x] += c as u32;
        yc[y] += c as u32;
        for m in 0..h {
            let step = if c > 0 { c as f64 * self.lnp[m * self.cells + cell] } else { 0.0 };
            lp[(cell + 1) * h + m] = lp[cell * h + m] + step;
        }
        let lcoef = lcoef - self.lnfact[c];
        let left = remaining - c;
        if cell + 2 == self.cells {
            self.place(cell + 1, left, left, lcoef, xc, yc, lp, acc);
        } else if cell + 1 == self.cells {
            let w = self.scheme.message(xc);
            let yi = self.scheme.y_index[self.k].index(yc);
            let base = self.lnfact[self.n] + lcoef;
            for m in 0..h {
                acc[self.slot(m, w, yi)].add(base + lp[self.cells * h + m]);
            }
        } else {
            for next in 0..=left {
                self.place(cell + 1, next, left, lcoef, xc, yc, lp, acc);
            }
        }
        xc[x] -= c as u32;
        yc[y] -= c as u32;
    }
}

/// Exact `α` and `β` of a zero-rate scheme (`w_gt_l` or `partition`) by
/// enumerating the joint types of `(X, Y_k)` for every detector.
pub fn exact_zero_rate_errors(model: &HypothesisModel, config: &SchemeConfig) -> Result<ErrorEstimates> {
    config.validate()?;
    let n = config.n;
    if n > MAX_EXACT_N {
        return Err(Error::GuardExceeded(format!(
            "exact sums are limited to n <= {MAX_EXACT_N} (asked n={n}); use the Monte Carlo estimator"
        )));
    }
    for k in 0..model.detectors() {
        let cells = model.x_size() * model.y_size(k);
        if cells > MAX_EXACT_CELLS {
            return Err(Error::GuardExceeded(format!(
                "exact sums need |X|·|Y_k| <= {MAX_EXACT_CELLS}; detector {} has {cells}",
                k + 1
            )));
        }
        let count = joint_type_count(n, cells);
        if count > JOINT_TYPE_BUDGET {
            return Err(Error::GuardExceeded(format!(
                "detector {} needs {count:.3e} joint types at n={n}, budget is {JOINT_TYPE_BUDGET:.0e}",
                k + 1
            )));
        }
    }
    let scheme = ZeroRateScheme::compile(model, config)?;
    let lnfact = ln_factorials(n as usize);
    let (kk, mm) = (model.detectors(), model.hypotheses());
    let mut alpha = vec![vec![None; mm]; kk];
    let mut beta = vec![0.0; kk];
    let mut log_beta = vec![0.0; kk];
    let mut mass_error: f64 = 0.0;
    for k in 0..kk {
        let ny = model.y_size(k);
        let cells = model.x_size() * ny;
        let lnp = (0..mm)
            .flat_map(|m| model.joint(m, k).probs().iter().map(|p| p.ln()).collect::<Vec<_>>())
            .collect();
        let en = Enumerator {
            n: n as usize,
            ny,
            cells,
            hyps: mm,
            lnp,
            lnfact: &lnfact,
            scheme: &scheme,
            k,
        };
        let first = if cells == 1 { n as usize } else { 0 };
        let slabs: Vec<Vec<LogSum>> = (first..=n as usize).into_par_iter().map(|c0| en.slab(c0)).collect();
        // fixed slab order keeps the sums bit-stable
        let mut acc = slabs[0].clone();
        for s in &slabs[1..] {
            for (a, b) in acc.iter_mut().zip(s) {
                a.merge(b);
            }
        }
        let ys = scheme.y_index[k].size();
        for m in 0..mm {
            let (mut total, mut err) = (LogSum::default(), LogSum::default());
            for w in 0..scheme.messages {
                for yi in 0..ys {
                    let a = &acc[en.slot(m, w, yi)];
                    total.merge(a);
                    if scheme.declare_indexed(k, w, yi) != m {
                        err.merge(a);
                    }
                }
            }
            mass_error = mass_error.max((total.ln().exp() - 1.0).abs());
            let l = err.ln();
            if m == k {
                log_beta[k] = l;
                beta[k] = l.exp();
            } else {
                alpha[k][m] = Some(l.exp());
            }
        }
    }
    let zero_hw = alpha.iter().map(|row| row.iter().map(|a| a.map(|_| 0.0)).collect()).collect();
    Ok(ErrorEstimates {
        n,
        exact: true,
        trials: None,
        alpha,
        alpha_half_width: zero_hw,
        beta,
        log_beta,
        beta_half_width: vec![0.0; kk],
        mass_error: Some(mass_error),
        notes: scheme.notes,
    })
}
