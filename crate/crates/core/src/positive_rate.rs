//! Achievable exponents at positive rate: quantize `X` through an auxiliary
//! channel `U|X` (one channel per distinct source marginal), bin the
//! quantization index, and bound each detector's exponent by two
//! information projections.

use rayon::prelude::*;
use serde::Serialize;

use crate::coupling::{iproject_entropy_constrained, iproject_overlapping, DEFAULT_MAX_ITER, DEFAULT_TOL};
use crate::error::{Error, Result};
use crate::frontier::{pareto_indices, ExponentPoint, Provenance, RegionFrontier};
use crate::model::{HypothesisModel, MarginalGroups};
use crate::prob::{compose, Axis, ConditionalPmf, Pmf, SimplexGrid};

/// Slack on the rate condition.
pub const RATE_SLACK: f64 = 1e-12;

/// Tuples evaluated by one search before it is refused.
pub const MAX_TUPLES: f64 = 2.0e7;

/// One auxiliary channel per source-marginal group, so hypotheses with equal
/// `P_X` always share their channel.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UChannelTuple {
    u_size: usize,
    channels: Vec<ConditionalPmf>,
    group_of: Vec<usize>,
}

impl UChannelTuple {
    pub fn new(model: &HypothesisModel, channels: Vec<ConditionalPmf>) -> Result<Self> {
        let groups = model.groups();
        if channels.len() != groups.len() {
            return Err(Error::invalid(format!(
                "{} channels for {} source-marginal groups",
                channels.len(),
                groups.len()
            )));
        }
        let u_size = channels[0].output_size();
        for c in &channels {
            if c.input_size() != model.x_size() || c.output_size() != u_size {
                return Err(Error::invalid("channel shapes must be |X| rows over a common U"));
            }
        }
        Ok(Self {
            u_size,
            channels,
            group_of: groups.group_of,
        })
    }

    /// The degenerate auxiliary: `|U| = 1`.
    pub fn constant(model: &HypothesisModel) -> Self {
        let groups = model.groups();
        Self {
            u_size: 1,
            channels: vec![ConditionalPmf::constant(model.x_size()); groups.len()],
            group_of: groups.group_of,
        }
    }

    /// The same channel for every group.
    pub fn shared(model: &HypothesisModel, channel: ConditionalPmf) -> Result<Self> {
        let l = model.groups().len();
        Self::new(model, vec![channel; l])
    }

    pub fn u_size(&self) -> usize {
        self.u_size
    }

    /// Channel used under hypothesis `m`.
    pub fn channel(&self, m: usize) -> &ConditionalPmf {
        &self.channels[self.group_of[m]]
    }

    pub fn channels(&self) -> &[ConditionalPmf] {
        &self.channels
    }

    fn provenance(&self, rate: f64) -> Provenance {
        Provenance::Channels {
            rate,
            u_size: self.u_size,
            channels: self.channels.iter().map(ConditionalPmf::to_row_major).collect(),
        }
    }
}

/// Outcome of the rate check, with every violating `(k, m)` pair (0-based)
/// and its `I(U;X|Y_k)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Feasibility {
    pub feasible: bool,
    pub violations: Vec<(usize, usize, f64)>,
}

/// `I_{P^(m)}(U;X|Y_k)` for hypothesis `m` at detector `k` under `channel`.
pub fn conditional_information(model: &HypothesisModel, k: usize, m: usize, channel: &ConditionalPmf) -> Result<f64> {
    Ok(compose(model.joint(m, k), channel)?.conditional_mutual_information_ux_given_y())
}

/// Pairs `(k, m)` whose rate condition a tuple must meet.
fn rate_pairs(model: &HypothesisModel) -> Vec<(usize, usize)> {
    (0..model.detectors())
        .flat_map(|k| (0..model.hypotheses()).filter(move |&m| m != k).map(move |m| (k, m)))
        .collect()
}

/// Whether `I_{P^(m)}(U;X|Y_k) ≤ R` for every detector `k` and hypothesis `m ≠ k`.
pub fn tuple_feasible(model: &HypothesisModel, tuple: &UChannelTuple, rate: f64) -> Result<Feasibility> {
    feasible_on_pairs(model, tuple, rate, &rate_pairs(model))
}

pub(crate) fn feasible_on_pairs(
    model: &HypothesisModel,
    tuple: &UChannelTuple,
    rate: f64,
    pairs: &[(usize, usize)],
) -> Result<Feasibility> {
    let mut violations = Vec::new();
    for &(k, m) in pairs {
        let i = conditional_information(model, k, m, tuple.channel(m))?;
        if i > rate + RATE_SLACK {
            violations.push((k, m, i));
        }
    }
    Ok(Feasibility {
        feasible: violations.is_empty(),
        violations,
    })
}

/// Both bound terms for one (detector, reference hypothesis, alternative) triple.
///
/// The reference is `P^(m)_{U|X} P^(ξ)_{XY_k}`; for simple testing `ξ = k`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PairTerms {
    /// `I_{P^(m)}(U;X|Y_k)`.
    pub info: f64,
    /// Projection with `π_UX`, `π_UY` pinned to those of `P^(m)`.
    pub first: f64,
    /// Projection with `π_UX`, `π_Y` pinned and `H_π(U|Y_k) ≥ H_{P^(m)}(U|Y_k)`,
    /// before adding `R − info`.
    pub second_divergence: f64,
    pub converged: bool,
}

impl PairTerms {
    /// `min(first, second_divergence + R − info)`.
    pub fn bound(&self, rate: f64) -> f64 {
        self.first.min(self.second_divergence + rate - self.info)
    }
}

pub fn pair_terms(
    model: &HypothesisModel,
    k: usize,
    xi: usize,
    m: usize,
    channel: &ConditionalPmf,
) -> Result<PairTerms> {
    let target = compose(model.joint(m, k), channel)?;
    let reference = compose(model.joint(xi, k), channel)?;
    let ux = target.marginal_ux();
    let first = iproject_overlapping(&reference, &ux, &target.marginal_uy(), DEFAULT_TOL, DEFAULT_MAX_ITER)?;
    let h_min = target
        .conditional_entropy_u_given_y()
        .min((channel.output_size() as f64).ln());
    let second = iproject_entropy_constrained(&reference, &ux, &target.marginal(Axis::Y), h_min, DEFAULT_TOL)?;
    Ok(PairTerms {
        info: target.conditional_mutual_information_ux_given_y(),
        first: first.value,
        second_divergence: second.value,
        converged: first.converged && second.converged,
    })
}

fn check_detector(model: &HypothesisModel, k: usize) -> Result<()> {
    model.require_simple()?;
    if k >= model.detectors() {
        return Err(Error::invalid(format!("no detector k={}", k + 1)));
    }
    Ok(())
}

/// `min_{m≠k}` of the first projection.
pub fn theta1_bound(model: &HypothesisModel, tuple: &UChannelTuple, k: usize) -> Result<f64> {
    check_detector(model, k)?;
    (0..model.hypotheses())
        .filter(|&m| m != k)
        .map(|m| pair_terms(model, k, k, m, tuple.channel(m)).map(|t| t.first))
        .try_fold(f64::INFINITY, |acc, v| v.map(|v| acc.min(v)))
}

/// `min_{m≠k}` of the entropy-constrained projection plus `R − I_{P^(m)}(U;X|Y_k)`.
pub fn theta2_bound(model: &HypothesisModel, tuple: &UChannelTuple, rate: f64, k: usize) -> Result<f64> {
    check_detector(model, k)?;
    (0..model.hypotheses())
        .filter(|&m| m != k)
        .map(|m| pair_terms(model, k, k, m, tuple.channel(m)).map(|t| t.second_divergence + rate - t.info))
        .try_fold(f64::INFINITY, |acc, v| v.map(|v| acc.min(v)))
}

/// `θ_k = min_{m≠k} min(first, second + R − I)`.
pub fn theta_k(model: &HypothesisModel, tuple: &UChannelTuple, rate: f64, k: usize) -> Result<f64> {
    check_detector(model, k)?;
    (0..model.hypotheses())
        .filter(|&m| m != k)
        .map(|m| pair_terms(model, k, k, m, tuple.channel(m)).map(|t| t.bound(rate)))
        .try_fold(f64::INFINITY, |acc, v| v.map(|v| acc.min(v)))
}

fn check_rate(rate: f64) -> Result<()> {
    if !(rate > 0.0 && rate.is_finite()) {
        return Err(Error::invalid(format!("rate {rate} must be positive")));
    }
    Ok(())
}

/// The exponent vector of one tuple; refuses infeasible tuples.
pub fn theta_vector(model: &HypothesisModel, tuple: &UChannelTuple, rate: f64) -> Result<ExponentPoint> {
    check_rate(rate)?;
    let f = tuple_feasible(model, tuple, rate)?;
    if !f.feasible {
        let (k, m, i) = f.violations[0];
        return Err(Error::invalid(format!(
            "tuple violates the rate: I(U;X|Y_{}) = {i} > R = {rate} under m={}",
            k + 1,
            m + 1
        )));
    }
    let theta = (0..model.detectors())
        .map(|k| theta_k(model, tuple, rate, k))
        .collect::<Result<_>>()?;
    Ok(ExponentPoint {
        theta,
        provenance: tuple.provenance(rate),
    })
}

/// All channels `U|X` whose rows lie on the `δ`-lattice of the `|U|`-simplex.
pub fn channel_grid(x_size: usize, u_size: usize, delta: f64) -> Result<Vec<ConditionalPmf>> {
    if u_size == 0 {
        return Err(Error::invalid("auxiliary alphabet must be nonempty"));
    }
    if u_size == 1 {
        return Ok(vec![ConditionalPmf::constant(x_size)]);
    }
    let rows = SimplexGrid::new(u_size, delta)?;
    let count = (rows.len() as f64).powi(x_size as i32);
    if count > 1e6 {
        return Err(Error::GuardExceeded(format!(
            "{count} channels on the δ={delta} grid for |X|={x_size}, |U|={u_size}"
        )));
    }
    let mut out: Vec<Vec<Pmf>> = vec![Vec::new()];
    for _ in 0..x_size {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                rows.points().iter().map(move |row| {
                    let mut p = prefix.clone();
                    p.push(row.clone());
                    p
                })
            })
            .collect();
    }
    out.into_iter().map(ConditionalPmf::new).collect()
}

/// Per-group candidate channels with precomputed bound terms, reused across rates.
#[derive(Debug, Clone)]
pub struct PositiveRateTables {
    groups: MarginalGroups,
    channels: Vec<ConditionalPmf>,
    u_size: usize,
    /// `terms[(k * M + m) * C + c]` for `m` admissible at `k`.
    terms: Vec<Option<PairTerms>>,
    /// `I_{P^(m)}(U;X|Y_k)` for every (k, m, c), for the rate condition.
    info: Vec<f64>,
    detectors: usize,
    hypotheses: usize,
}

/// Which alternatives `m` detector `k` must tell apart from its reference
/// set, and the reference hypotheses `ξ`. Simple testing: `ξ = k`, `m ≠ k`.
pub struct PairPlan {
    pub refs: Vec<Vec<usize>>,
    pub alternatives: Vec<Vec<usize>>,
}

impl PairPlan {
    pub fn simple(model: &HypothesisModel) -> Self {
        let kk = model.detectors();
        Self {
            refs: (0..kk).map(|k| vec![k]).collect(),
            alternatives: (0..kk)
                .map(|k| (0..model.hypotheses()).filter(|&m| m != k).collect())
                .collect(),
        }
    }
}

impl PositiveRateTables {
    pub fn build(model: &HypothesisModel, u_size: usize, delta: f64) -> Result<Self> {
        model.require_simple()?;
        Self::build_with_plan(model, u_size, delta, &PairPlan::simple(model))
    }

    pub(crate) fn build_with_plan(
        model: &HypothesisModel,
        u_size: usize,
        delta: f64,
        plan: &PairPlan,
    ) -> Result<Self> {
        let channels = channel_grid(model.x_size(), u_size, delta)?;
        let (kk, mm, cc) = (model.detectors(), model.hypotheses(), channels.len());
        let jobs: Vec<(usize, usize, usize)> = (0..kk)
            .flat_map(|k| (0..mm).flat_map(move |m| (0..cc).map(move |c| (k, m, c))))
            .collect();
        let solved = jobs
            .par_iter()
            .map(|&(k, m, c)| {
                let info = conditional_information(model, k, m, &channels[c])?;
                let terms = if plan.alternatives[k].contains(&m) {
                    let mut best: Option<PairTerms> = None;
                    for &xi in &plan.refs[k] {
                        let t = pair_terms(model, k, xi, m, &channels[c])?;
                        // for several references keep both minima separately
                        best = Some(match best {
                            None => t,
                            Some(b) => merge_refs(b, t),
                        });
                    }
                    best
                } else {
                    None
                };
                Ok((info, terms))
            })
            .collect::<Result<Vec<_>>>()?;
        let (info, terms) = solved.into_iter().unzip();
        Ok(Self {
            groups: model.groups(),
            channels,
            u_size,
            terms,
            info,
            detectors: kk,
            hypotheses: mm,
        })
    }

    pub fn channels(&self) -> &[ConditionalPmf] {
        &self.channels
    }

    fn idx(&self, k: usize, m: usize, c: usize) -> usize {
        (k * self.hypotheses + m) * self.channels.len() + c
    }

    pub fn terms(&self, k: usize, m: usize, c: usize) -> Option<&PairTerms> {
        self.terms[self.idx(k, m, c)].as_ref()
    }

    pub fn info(&self, k: usize, m: usize, c: usize) -> f64 {
        self.info[self.idx(k, m, c)]
    }

    pub fn unconverged(&self) -> usize {
        self.terms.iter().flatten().filter(|t| !t.converged).count()
    }

    /// Channels each group may use at `rate`, given the pairs whose rate condition applies.
    fn feasible_channels(&self, rate: f64, pairs: &[(usize, usize)]) -> Vec<Vec<usize>> {
        (0..self.groups.len())
            .map(|g| {
                let members = self.groups.members(g);
                (0..self.channels.len())
                    .filter(|&c| {
                        pairs
                            .iter()
                            .filter(|(_, m)| members.contains(m))
                            .all(|&(k, m)| self.info(k, m, c) <= rate + RATE_SLACK)
                    })
                    .collect()
            })
            .collect()
    }

    /// Pareto frontier over every feasible tuple at `rate`.
    pub fn search(&self, rate: f64) -> Result<RegionFrontier> {
        let pairs: Vec<(usize, usize)> = (0..self.detectors)
            .flat_map(|k| (0..self.hypotheses).filter(move |&m| m != k).map(move |m| (k, m)))
            .collect();
        self.search_with(rate, &pairs)
    }

    pub(crate) fn search_with(&self, rate: f64, rate_pairs: &[(usize, usize)]) -> Result<RegionFrontier> {
        check_rate(rate)?;
        let cand = self.feasible_channels(rate, rate_pairs);
        let total: f64 = cand.iter().map(|c| c.len() as f64).product();
        if total > MAX_TUPLES {
            return Err(Error::GuardExceeded(format!(
                "{total} channel tuples (|U|={}, {} channels per group, L={})",
                self.u_size,
                self.channels.len(),
                self.groups.len()
            )));
        }
        let total = total as usize;
        let (kk, mm) = (self.detectors, self.hypotheses);
        let decode = |mut code: usize| -> Vec<usize> {
            let mut pick = vec![0; cand.len()];
            for g in (0..cand.len()).rev() {
                pick[g] = cand[g][code % cand[g].len()];
                code /= cand[g].len();
            }
            pick
        };
        let theta_of = |pick: &[usize]| -> Vec<f64> {
            (0..kk)
                .map(|k| {
                    (0..mm)
                        .filter_map(|m| self.terms(k, m, pick[self.groups.group_of[m]]))
                        .map(|t| t.bound(rate))
                        .fold(f64::INFINITY, f64::min)
                })
                .collect()
        };
        const CHUNK: usize = 1 << 16;
        let survivors: Vec<(usize, Vec<f64>)> = (0..total.div_ceil(CHUNK))
            .into_par_iter()
            .flat_map_iter(|chunk| {
                let lo = chunk * CHUNK;
                let hi = (lo + CHUNK).min(total);
                let thetas: Vec<Vec<f64>> = (lo..hi).map(|code| theta_of(&decode(code))).collect();
                pareto_indices(&thetas)
                    .into_iter()
                    .map(|i| (lo + i, thetas[i].clone()))
                    .collect::<Vec<_>>()
            })
            .collect();
        let thetas: Vec<Vec<f64>> = survivors.iter().map(|(_, t)| t.clone()).collect();
        let points = pareto_indices(&thetas)
            .into_iter()
            .map(|i| {
                let pick = decode(survivors[i].0);
                ExponentPoint {
                    theta: survivors[i].1.clone(),
                    provenance: Provenance::Channels {
                        rate,
                        u_size: self.u_size,
                        channels: pick.iter().map(|&c| self.channels[c].to_row_major()).collect(),
                    },
                }
            })
            .collect();
        Ok(RegionFrontier::from_points(points)
            .with_meta("rate", rate)
            .with_meta("u_size", self.u_size)
            .with_meta("u_size_cap_note", "auxiliary alphabet is capped by the caller; no cardinality bound is known")
            .with_meta("channels_per_group", self.channels.len())
            .with_meta("feasible_per_group", cand.iter().map(Vec::len).collect::<Vec<_>>())
            .with_meta("tuples", total)
            .with_meta("unconverged_solves", self.unconverged()))
    }
}

/// Combines terms from two reference hypotheses: each bound takes its own minimum.
fn merge_refs(a: PairTerms, b: PairTerms) -> PairTerms {
    debug_assert_eq!(a.info, b.info);
    PairTerms {
        info: a.info,
        first: a.first.min(b.first),
        second_divergence: a.second_divergence.min(b.second_divergence),
        converged: a.converged && b.converged,
    }
}

/// Pareto frontier of exponent vectors over all gridded feasible tuples.
pub fn search_region(model: &HypothesisModel, rate: f64, u_size: usize, delta: f64) -> Result<RegionFrontier> {
    check_rate(rate)?;
    if u_size > model.x_size() + 1 {
        log::warn!("|U|={u_size} exceeds the usual cap |X|+1={}", model.x_size() + 1);
    }
    PositiveRateTables::build(model, u_size, delta)?.search(rate)
}

/// Per-detector comparison of the full search with the detector-only rerun.
#[derive(Debug, Clone, Serialize)]
pub struct ShaReport {
    pub full: Vec<f64>,
    pub single: Vec<f64>,
    pub max_abs_diff: f64,
    pub pass: bool,
}

/// For two detectors and two hypotheses with distinct source marginals,
/// each detector's best exponent in the joint search must equal the one it
/// gets alone.
pub fn sha_check(model: &HypothesisModel, rate: f64, u_size: usize, delta: f64, tol: f64) -> Result<ShaReport> {
    if model.detectors() != 2 || model.hypotheses() != 2 {
        return Err(Error::invalid("the single-detector comparison needs K = M = 2"));
    }
    if model.groups().len() != 2 {
        return Err(Error::invalid("the single-detector comparison needs P_X^(1) != P_X^(2)"));
    }
    let full = search_region(model, rate, u_size, delta)?;
    let full: Vec<f64> = (0..2).map(|k| full.max_coordinate(k)).collect();
    let single = (0..2)
        .map(|k| Ok(search_region(&model.single_detector(k)?, rate, u_size, delta)?.max_coordinate(0)))
        .collect::<Result<Vec<f64>>>()?;
    let max_abs_diff = full
        .iter()
        .zip(&single)
        .map(|(a, b)| if a == b { 0.0 } else { (a - b).abs() })
        .fold(0.0, f64::max);
    Ok(ShaReport {
        pass: max_abs_diff <= tol,
        full,
        single,
        max_abs_diff,
    })
}
