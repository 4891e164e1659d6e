//! Seeded Monte Carlo estimates of the zero-rate errors.

use rand::distributions::{Distribution, WeightedIndex};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::scheme::ZeroRateScheme;
use super::{ErrorEstimates, SchemeConfig};
use crate::error::{Error, Result};
use crate::model::HypothesisModel;

const Z95: f64 = 1.959963984540054;

/// Half-width of the 95% Wilson score interval for `errors` out of `trials`.
pub fn wilson_half_width(errors: u64, trials: u64) -> f64 {
    let n = trials as f64;
    let p = errors as f64 / n;
    let z2 = Z95 * Z95;
    Z95 * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / (1.0 + z2 / n)
}

/// Independent stream for one (purpose, hypothesis, trial) triple.
pub(crate) fn trial_rng(seed: u64, tag: u64, m: usize, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((tag << 60) | ((m as u64) << 44) | trial);
    rng
}

/// Samplers for `X ~ P^(m)_X` and `Y_k | X ~ P^(m)_{Y_k|X}`; detectors are
/// drawn conditionally independent given `X`, which leaves every pair
/// `(X, Y_k)` with its model law.
pub(crate) struct SourceSampler {
    x: WeightedIndex<f64>,
    y: Vec<Vec<Option<WeightedIndex<f64>>>>,
}

impl SourceSampler {
    pub fn new(model: &HypothesisModel, m: usize) -> Result<Self> {
        let px = model.marginal_x(m);
        let x = WeightedIndex::new(px.probs()).map_err(|e| Error::invalid(e.to_string()))?;
        let y = (0..model.detectors())
            .map(|k| {
                let j = model.joint(m, k);
                (0..model.x_size())
                    .map(|xv| {
                        let row: Vec<f64> = (0..j.cols()).map(|yv| j.get(xv, yv)).collect();
                        WeightedIndex::new(row).ok()
                    })
                    .collect()
            })
            .collect();
        Ok(Self { x, y })
    }

    /// Fills `xs` and `ys[k]` with one block.
    pub fn sample(&self, rng: &mut ChaCha8Rng, xs: &mut [u8], ys: &mut [Vec<u8>]) {
        for t in 0..xs.len() {
            let xv = self.x.sample(rng);
            xs[t] = xv as u8;
            for (k, yk) in ys.iter_mut().enumerate() {
                let d = self.y[k][xv].as_ref().expect("sampled letter has positive mass");
                yk[t] = d.sample(rng) as u8;
            }
        }
    }
}

pub(crate) fn counts(seq: &[u8], size: usize) -> Vec<u32> {
    let mut c = vec![0u32; size];
    for &s in seq {
        c[s as usize] += 1;
    }
    c
}

pub(crate) fn assemble(
    n: u64,
    trials: u64,
    errors: &[Vec<u64>],
    notes: Vec<String>,
) -> ErrorEstimates {
    let kk = errors.len();
    let mm = errors[0].len();
    let rate = |e: u64| e as f64 / trials as f64;
    let alpha = (0..kk)
        .map(|k| (0..mm).map(|m| (m != k).then(|| rate(errors[k][m]))).collect())
        .collect();
    let alpha_half_width = (0..kk)
        .map(|k| (0..mm).map(|m| (m != k).then(|| wilson_half_width(errors[k][m], trials))).collect())
        .collect();
    let beta: Vec<f64> = (0..kk).map(|k| rate(errors[k][k])).collect();
    ErrorEstimates {
        n,
        exact: false,
        trials: Some(trials),
        alpha,
        alpha_half_width,
        log_beta: beta.iter().map(|b| b.ln()).collect(),
        beta,
        beta_half_width: (0..kk).map(|k| wilson_half_width(errors[k][k], trials)).collect(),
        mass_error: None,
        notes,
    }
}

/// Monte Carlo estimate of the zero-rate errors; trial `t` under hypothesis
/// `m` uses its own counter-based stream, so results do not depend on the
/// thread count.
pub fn mc_zero_rate_errors(model: &HypothesisModel, config: &SchemeConfig) -> Result<ErrorEstimates> {
    config.validate()?;
    if config.trials == 0 {
        return Err(Error::invalid("need at least one trial"));
    }
    if config.trials >= 1 << 44 {
        return Err(Error::invalid("too many trials for the stream layout"));
    }
    let scheme = ZeroRateScheme::compile(model, config)?;
    let (kk, mm, n) = (model.detectors(), model.hypotheses(), config.n as usize);
    let mut errors = vec![vec![0u64; mm]; kk];
    for m in 0..mm {
        let sampler = SourceSampler::new(model, m)?;
        let per_k: Vec<u64> = (0..config.trials)
            .into_par_iter()
            .map_init(
                || (vec![0u8; n], vec![vec![0u8; n]; kk]),
                |(xs, ys), t| {
                    let mut rng = trial_rng(config.seed, 0, m, t);
                    sampler.sample(&mut rng, xs, ys);
                    let w = scheme.message(&counts(xs, model.x_size()));
                    (0..kk)
                        .map(|k| (scheme.declare(k, w, &counts(&ys[k], model.y_size(k))) != m) as u64)
                        .collect::<Vec<u64>>()
                },
            )
            .reduce(|| vec![0; kk], |a, b| a.iter().zip(&b).map(|(x, y)| x + y).collect());
        for k in 0..kk {
            errors[k][m] = per_k[k];
        }
    }
    Ok(assemble(config.n, config.trials, &errors, scheme.notes))
}
