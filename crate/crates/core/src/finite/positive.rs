//! Monte Carlo of the positive-rate random binning code.
//!
//! Codebook `m` holds `⌊e^{nR}⌋ × ⌊e^{nR'_m}⌋` codewords drawn i.i.d. from
//! `P^(m)_U`. The sensor sends `(m, w̃)` for a uniformly chosen codeword
//! jointly typical with `x^n`, or a fallback. Detector `k` picks the
//! codeword of bin `w̃` with the smallest empirical `H(U|Y_k)` and declares
//! `m` if it is jointly typical with `y_k^n`, else `k`.

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::monte_carlo::{assemble, trial_rng, SourceSampler};
use super::{ErrorEstimates, SchemeConfig, SchemeMode};
use crate::error::{Error, Result};
use crate::model::HypothesisModel;
use crate::positive_rate::UChannelTuple;
use crate::prob::{compose, counts_typical, JointPmf2};

/// Largest blocklength simulated.
pub const MAX_POSITIVE_N: u64 = 24;
/// Largest `⌊e^{nR}⌋` or `⌊e^{nR'}⌋`.
pub const MAX_BOOK_SIDE: f64 = 65536.0;
/// Codewords drawn per trial over all hypotheses.
pub const MAX_CODEWORDS: f64 = 1_048_576.0;

/// Binning rates `R'_m = I_{P^(m)}(X;U) + μ − R`, floored at zero. Fails
/// when some `R'_m ≥ I_{P^(m)}(Y_k;U)` for a detector `k ≠ m`; with
/// `R'_m = 0` there is nothing to resolve and the check is skipped.
pub fn bin_rates(model: &HypothesisModel, tuple: &UChannelTuple, rate: f64, mu: f64) -> Result<Vec<f64>> {
    (0..model.hypotheses())
        .map(|m| {
            let c = tuple.channel(m);
            let i_xu = compose(model.joint(m, 0), c)?.marginal_ux().mutual_information();
            let r_bin = (i_xu + mu - rate).max(0.0);
            if r_bin > 0.0 {
                for k in (0..model.detectors()).filter(|&k| k != m) {
                    let i_yu = compose(model.joint(m, k), c)?.marginal_uy().mutual_information();
                    if r_bin >= i_yu {
                        return Err(Error::invalid(format!(
                            "binning rate R'={r_bin:.6} for m={} is not below I(Y_{};U)={i_yu:.6}; raise R",
                            m + 1,
                            k + 1
                        )));
                    }
                }
            }
            Ok(r_bin)
        })
        .collect()
}

struct Code {
    n: usize,
    u_size: usize,
    x_size: usize,
    bins: usize,
    /// Codewords per bin, per hypothesis.
    per_bin: Vec<usize>,
    u_law: Vec<WeightedIndex<f64>>,
    /// `P^(m)_{UX}` row-major over (u, x).
    ux: Vec<Vec<f64>>,
    /// `P^(m)_{UY_k}` at `[m][k]`, row-major over (u, y).
    uy: Vec<Vec<Vec<f64>>>,
    y_sizes: Vec<usize>,
    mu: f64,
}

impl Code {
    fn draw(&self, rng: &mut ChaCha8Rng) -> Vec<Vec<u8>> {
        (0..self.u_law.len())
            .map(|m| {
                (0..self.bins * self.per_bin[m] * self.n)
                    .map(|_| self.u_law[m].sample(rng) as u8)
                    .collect()
            })
            .collect()
    }

    /// Uniform choice among all jointly typical `(m, codeword)`; `None` is the fallback.
    fn encode(&self, books: &[Vec<u8>], xs: &[u8], rng: &mut ChaCha8Rng) -> Option<(usize, usize)> {
        let mut hits = Vec::new();
        let mut joint = vec![0u32; self.u_size * self.x_size];
        for (m, book) in books.iter().enumerate() {
            for (i, word) in book.chunks_exact(self.n).enumerate() {
                joint.iter_mut().for_each(|c| *c = 0);
                for (u, x) in word.iter().zip(xs) {
                    joint[*u as usize * self.x_size + *x as usize] += 1;
                }
                if counts_typical(&joint, self.n as u64, &self.ux[m], self.mu / 2.0) {
                    hits.push((m, i / self.per_bin[m]));
                }
            }
        }
        (!hits.is_empty()).then(|| hits[rng.gen_range(0..hits.len())])
    }

    fn decide(&self, books: &[Vec<u8>], sent: Option<(usize, usize)>, k: usize, ys: &[u8]) -> usize {
        let Some((m, bin)) = sent else {
            return k;
        };
        let ny = self.y_sizes[k];
        let mut joint = vec![0u32; self.u_size * ny];
        let mut best: Option<(f64, Vec<u32>)> = None;
        for l in 0..self.per_bin[m] {
            let start = (bin * self.per_bin[m] + l) * self.n;
            let word = &books[m][start..start + self.n];
            joint.iter_mut().for_each(|c| *c = 0);
            for (u, y) in word.iter().zip(ys) {
                joint[*u as usize * ny + *y as usize] += 1;
            }
            let h = empirical_conditional_entropy(&joint, self.u_size, ny);
            if best.as_ref().map_or(true, |(b, _)| h < *b) {
                best = Some((h, joint.clone()));
            }
        }
        let (_, joint) = best.expect("bins are nonempty");
        if counts_typical(&joint, self.n as u64, &self.uy[m][k], self.mu) {
            m
        } else {
            k
        }
    }
}

/// `H(U|Y)` of the type with counts `[u * ny + y]`.
fn empirical_conditional_entropy(joint: &[u32], nu: usize, ny: usize) -> f64 {
    let n: u32 = joint.iter().sum();
    let mut h = 0.0;
    for y in 0..ny {
        let cy: u32 = (0..nu).map(|u| joint[u * ny + y]).sum();
        for u in 0..nu {
            let c = joint[u * ny + y];
            if c > 0 {
                h -= c as f64 / n as f64 * (c as f64 / cy as f64).ln();
            }
        }
    }
    h
}

/// Simulated errors of the positive-rate code. Codebooks are fresh per
/// trial unless `fixed_codebook` is set.
pub fn mc_positive_rate_scheme(model: &HypothesisModel, config: &SchemeConfig) -> Result<ErrorEstimates> {
    config.validate()?;
    model.require_simple()?;
    let SchemeMode::PositiveRate { tuple, rate } = &config.mode else {
        return Err(Error::invalid("mc_positive_rate_scheme needs the positive_rate mode"));
    };
    if config.trials == 0 || config.trials >= 1 << 44 {
        return Err(Error::invalid("trial count out of range"));
    }
    if !(*rate > 0.0 && rate.is_finite()) {
        return Err(Error::invalid(format!("rate {rate} must be positive")));
    }
    let n = config.n;
    if n > MAX_POSITIVE_N {
        return Err(Error::GuardExceeded(format!(
            "positive-rate simulation is limited to n <= {MAX_POSITIVE_N} (asked {n})"
        )));
    }
    let r_bin = bin_rates(model, tuple, *rate, config.mu)?;
    let bins = (n as f64 * rate).exp().floor();
    let sides: Vec<f64> = r_bin.iter().map(|r| (n as f64 * r).exp().floor()).collect();
    if bins > MAX_BOOK_SIDE || sides.iter().any(|s| *s > MAX_BOOK_SIDE) {
        return Err(Error::GuardExceeded(format!(
            "codebook sides e^(nR)={bins}, e^(nR')={sides:?} exceed {MAX_BOOK_SIDE}"
        )));
    }
    let total: f64 = sides.iter().map(|s| s * bins).sum();
    if total > MAX_CODEWORDS {
        return Err(Error::GuardExceeded(format!("{total} codewords per trial exceed {MAX_CODEWORDS}")));
    }
    let (kk, mm) = (model.detectors(), model.hypotheses());
    let pu = |m: usize| -> Result<JointPmf2> { Ok(compose(model.joint(m, 0), tuple.channel(m))?.marginal_ux()) };
    let code = Code {
        n: n as usize,
        u_size: tuple.u_size(),
        x_size: model.x_size(),
        bins: bins as usize,
        per_bin: sides.iter().map(|s| *s as usize).collect(),
        u_law: (0..mm)
            .map(|m| {
                WeightedIndex::new(pu(m)?.row_sums()).map_err(|e| Error::invalid(e.to_string()))
            })
            .collect::<Result<_>>()?,
        ux: (0..mm).map(|m| Ok(pu(m)?.probs().to_vec())).collect::<Result<_>>()?,
        uy: (0..mm)
            .map(|m| {
                (0..kk)
                    .map(|k| Ok(compose(model.joint(m, k), tuple.channel(m))?.marginal_uy().probs().to_vec()))
                    .collect::<Result<_>>()
            })
            .collect::<Result<_>>()?,
        y_sizes: model.y_sizes().to_vec(),
        mu: config.mu,
    };
    let fixed = config
        .fixed_codebook
        .then(|| code.draw(&mut trial_rng(config.seed, 2, 0, 0)));
    let mut errors = vec![vec![0u64; mm]; kk];
    for m in 0..mm {
        let sampler = SourceSampler::new(model, m)?;
        let per_k: Vec<u64> = (0..config.trials)
            .into_par_iter()
            .map(|t| {
                let mut rng = trial_rng(config.seed, 1, m, t);
                let fresh;
                let books = match &fixed {
                    Some(b) => b,
                    None => {
                        fresh = code.draw(&mut rng);
                        &fresh
                    }
                };
                let mut xs = vec![0u8; code.n];
                let mut ys = vec![vec![0u8; code.n]; kk];
                sampler.sample(&mut rng, &mut xs, &mut ys);
                let sent = code.encode(books, &xs, &mut rng);
                (0..kk)
                    .map(|k| (code.decide(books, sent, k, &ys[k]) != m) as u64)
                    .collect::<Vec<u64>>()
            })
            .reduce(|| vec![0; kk], |a, b| a.iter().zip(&b).map(|(x, y)| x + y).collect());
        for k in 0..kk {
            errors[k][m] = per_k[k];
        }
    }
    let notes = vec![format!(
        "bins = {}, codewords per bin = {:?}, binning rates = {:?}",
        code.bins, code.per_bin, r_bin
    )];
    Ok(assemble(n, config.trials, &errors, notes))
}
