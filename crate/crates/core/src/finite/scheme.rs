//! Zero-rate encoders and detectors compiled into lookup tables over types.

use rayon::prelude::*;

use super::{SchemeConfig, SchemeMode};
use crate::error::{Error, Result};
use crate::model::HypothesisModel;
use crate::prob::{compositions, counts_typical, Pmf};
use crate::zero_rate::{check_mapping, projected_divergence, select_cell};

/// Largest dense type table we allocate.
const MAX_TYPE_TABLE: usize = 10_000_000;

/// Dense index of types with `n` symbols over `dims` letters: the first
/// `dims − 1` counts in base `n + 1`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct TypeIndex {
    base: usize,
    dims: usize,
}

impl TypeIndex {
    pub fn new(n: u64, dims: usize) -> Result<Self> {
        let base = n as usize + 1;
        let size = (base as f64).powi(dims as i32 - 1);
        if size > MAX_TYPE_TABLE as f64 {
            return Err(Error::GuardExceeded(format!(
                "type table of {size} entries for n={n} over {dims} letters"
            )));
        }
        Ok(Self { base, dims })
    }

    pub fn size(&self) -> usize {
        self.base.pow(self.dims as u32 - 1)
    }

    #[inline]
    pub fn index(&self, counts: &[u32]) -> usize {
        counts[..self.dims - 1]
            .iter()
            .rev()
            .fold(0, |acc, &c| acc * self.base + c as usize)
    }
}

/// Message per source type and declared hypothesis per (message, observation type).
#[derive(Debug, Clone)]
pub(crate) struct ZeroRateScheme {
    pub messages: usize,
    pub x_index: TypeIndex,
    pub msg: Vec<u32>,
    pub y_index: Vec<TypeIndex>,
    decision: Vec<Vec<u16>>,
    pub notes: Vec<String>,
}

impl ZeroRateScheme {
    pub fn compile(model: &HypothesisModel, config: &SchemeConfig) -> Result<Self> {
        config.validate()?;
        model.require_simple()?;
        let (n, mu) = (config.n, config.mu);
        let nx = model.x_size();
        let x_index = TypeIndex::new(n, nx)?;
        let x_types: Vec<Vec<u32>> = compositions(n as usize, nx)
            .into_iter()
            .map(|c| c.into_iter().map(|v| v as u32).collect())
            .collect();
        let groups = model.groups();
        let mm = model.hypotheses();
        let mut notes = Vec::new();

        // key[m]: the message under which detectors look for hypothesis m
        let (messages, key, sensor): (usize, Vec<usize>, Vec<(usize, bool)>) = match &config.mode {
            SchemeMode::WGtL => {
                let l = groups.len();
                let sensor = x_types
                    .iter()
                    .map(|c| {
                        let hits: Vec<usize> = (0..l)
                            .filter(|&g| counts_typical(c, n, groups.marginals[g].probs(), mu))
                            .collect();
                        (hits.first().copied().unwrap_or(l), hits.len() > 1)
                    })
                    .collect();
                (l + 1, groups.group_of.clone(), sensor)
            }
            SchemeMode::Partition { w, b, r } => {
                model.check_zero_rate()?;
                check_mapping(&groups, b, *w)?;
                if r.len() + 1 != model.detectors() || r.iter().any(|v| !v.is_finite()) {
                    return Err(Error::invalid(format!(
                        "tilt must have K-1 = {} finite entries",
                        model.detectors() - 1
                    )));
                }
                let kk = model.detectors();
                let sensor = x_types
                    .par_iter()
                    .map(|c| {
                        let hits: Vec<usize> = (0..mm)
                            .filter(|&m| counts_typical(c, n, model.marginal_x(m).probs(), mu))
                            .collect();
                        if let Some(&m) = hits.first() {
                            let split = hits.iter().any(|&h| b[h] != b[m]);
                            return Ok((b[m], split));
                        }
                        let px = Pmf::new(c.iter().map(|&v| v as f64 / n as f64).collect())?;
                        let mut f = vec![f64::NAN; kk * mm];
                        for kappa in 0..kk {
                            for m in (0..mm).filter(|&m| m != kappa) {
                                f[kappa * mm + m] = projected_divergence(model, kappa, m, &px)?.0;
                            }
                        }
                        let cell = select_cell(*w, b, r, kk, |kappa, m| (m != kappa).then(|| f[kappa * mm + m]));
                        Ok((cell, false))
                    })
                    .collect::<Result<Vec<_>>>()?;
                (*w, b.clone(), sensor)
            }
            SchemeMode::PositiveRate { .. } => {
                return Err(Error::invalid("the positive-rate scheme is simulated, not compiled"));
            }
        };
        let overlaps = sensor.iter().filter(|s| s.1).count();
        if overlaps > 0 {
            notes.push(format!(
                "{overlaps} source types are typical for several marginals with different messages; the first hypothesis in index order wins"
            ));
        }
        let mut msg = vec![u32::MAX; x_index.size()];
        for (c, (w, _)) in x_types.iter().zip(&sensor) {
            msg[x_index.index(c)] = *w as u32;
        }

        let mut y_index = Vec::new();
        let mut decision = Vec::new();
        let mut ambiguous = 0usize;
        for k in 0..model.detectors() {
            let ny = model.y_size(k);
            let idx = TypeIndex::new(n, ny)?;
            let mut table = vec![k as u16; messages * idx.size()];
            let py: Vec<Pmf> = (0..mm).map(|m| model.marginal_y(m, k)).collect();
            for c in compositions(n as usize, ny) {
                let c: Vec<u32> = c.into_iter().map(|v| v as u32).collect();
                let typical: Vec<bool> = py.iter().map(|p| counts_typical(&c, n, p.probs(), mu)).collect();
                let yi = idx.index(&c);
                for w in 0..messages {
                    let cands: Vec<usize> = (0..mm).filter(|&m| key[m] == w && typical[m]).collect();
                    if cands.len() == 1 {
                        table[w * idx.size() + yi] = cands[0] as u16;
                    } else if cands.len() > 1 {
                        ambiguous += 1;
                    }
                }
            }
            y_index.push(idx);
            decision.push(table);
        }
        if ambiguous > 0 {
            notes.push(format!(
                "{ambiguous} (message, observation type) pairs match several hypotheses; detector k declares k there"
            ));
        }
        Ok(Self {
            messages,
            x_index,
            msg,
            y_index,
            decision,
            notes,
        })
    }

    #[inline]
    pub fn message(&self, x_counts: &[u32]) -> usize {
        self.msg[self.x_index.index(x_counts)] as usize
    }

    /// Hypothesis declared by detector `k`.
    #[inline]
    pub fn declare(&self, k: usize, w: usize, y_counts: &[u32]) -> usize {
        self.declare_indexed(k, w, self.y_index[k].index(y_counts))
    }

    #[inline]
    pub fn declare_indexed(&self, k: usize, w: usize, yi: usize) -> usize {
        self.decision[k][w * self.y_index[k].size() + yi] as usize
    }
}
