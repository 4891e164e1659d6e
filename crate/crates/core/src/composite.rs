//! Composite testing: detector `k` only needs to tell its merged set `S_k`
//! apart from the remaining hypotheses, so every exponent is a minimum over
//! pairs `(ξ ∈ S_k, m ∉ S_k)`.
//!
//! The zero-rate partition for `W ≤ L` has no closed-form optimum here. We
//! provide an evaluator for any partition and a local search that improves
//! on the tilt rule; neither claims optimality.

use rayon::prelude::*;
use serde::{Serialize, Serializer};

use crate::coupling::{iproject_two_marginals, DEFAULT_MAX_ITER, DEFAULT_TOL};
use crate::error::{Error, Result};
use crate::frontier::{ExponentPoint, Provenance, RegionFrontier};
use crate::model::{HypothesisModel, MarginalGroups};
use crate::positive_rate::{
    feasible_on_pairs, pair_terms, Feasibility, PairPlan, PositiveRateTables, UChannelTuple,
};
use crate::prob::{Pmf, SimplexGrid};
use crate::zero_rate::{check_mapping, consistent_mappings, select_cell, Partition};

/// Merged sets `S_k` (0-based, sorted), one per detector.
#[derive(Debug, Clone, PartialEq)]
pub struct CompositeSpec {
    sets: Vec<Vec<usize>>,
    hypotheses: usize,
}

impl Serialize for CompositeSpec {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let one_based: Vec<Vec<usize>> = self.sets.iter().map(|v| v.iter().map(|m| m + 1).collect()).collect();
        one_based.serialize(s)
    }
}

impl CompositeSpec {
    pub fn new(model: &HypothesisModel, mut sets: Vec<Vec<usize>>) -> Result<Self> {
        if sets.len() != model.detectors() {
            return Err(Error::invalid(format!(
                "{} merged sets for {} detectors",
                sets.len(),
                model.detectors()
            )));
        }
        for (k, s) in sets.iter_mut().enumerate() {
            s.sort_unstable();
            s.dedup();
            if s.is_empty() {
                return Err(Error::invalid(format!("S_{} is empty", k + 1)));
            }
            if let Some(m) = s.iter().find(|&&m| m >= model.hypotheses()) {
                return Err(Error::invalid(format!("S_{} names hypothesis {} > M", k + 1, m + 1)));
            }
        }
        Ok(Self {
            sets,
            hypotheses: model.hypotheses(),
        })
    }

    /// Parses 1-based index lists, e.g. `[[1,3],[2]]`.
    pub fn from_one_based(model: &HypothesisModel, sets: &[Vec<usize>]) -> Result<Self> {
        if sets.iter().flatten().any(|&m| m == 0) {
            return Err(Error::invalid("hypothesis indices are 1-based"));
        }
        Self::new(model, sets.iter().map(|s| s.iter().map(|m| m - 1).collect()).collect())
    }

    /// `S_k = {k}`: simple testing.
    pub fn singleton(model: &HypothesisModel) -> Result<Self> {
        model.require_simple()?;
        Self::new(model, (0..model.detectors()).map(|k| vec![k]).collect())
    }

    pub fn set(&self, k: usize) -> &[usize] {
        &self.sets[k]
    }

    pub fn sets(&self) -> &[Vec<usize>] {
        &self.sets
    }

    pub fn contains(&self, k: usize, m: usize) -> bool {
        self.sets[k].binary_search(&m).is_ok()
    }

    /// Hypotheses outside `S_k`.
    pub fn outside(&self, k: usize) -> Vec<usize> {
        (0..self.hypotheses).filter(|&m| !self.contains(k, m)).collect()
    }

    fn plan(&self) -> PairPlan {
        PairPlan {
            refs: self.sets.clone(),
            alternatives: (0..self.sets.len()).map(|k| self.outside(k)).collect(),
        }
    }
}

fn two_marginal_term(model: &HypothesisModel, k: usize, xi: usize, m: usize, px: &Pmf) -> Result<(f64, bool)> {
    let r = iproject_two_marginals(
        model.joint(xi, k),
        px,
        &model.marginal_y(m, k),
        DEFAULT_TOL,
        DEFAULT_MAX_ITER,
    )?;
    Ok((r.value, r.converged))
}

/// Many messages: `η_k = min_{ξ∈S_k, m∉S_k} min D(π‖P^(ξ)_{XY_k})` over `π`
/// with `π_X = P^(m)_X`, `π_{Y_k} = P^(m)_{Y_k}`; `+∞` when every hypothesis is in `S_k`.
pub fn composite_rectangle(model: &HypothesisModel, spec: &CompositeSpec, w: usize) -> Result<ExponentPoint> {
    let l = model.groups().len();
    if w <= l {
        return Err(Error::invalid(format!(
            "rectangle region needs W > L (W={w}, L={l}); use the partition search"
        )));
    }
    let theta = (0..model.detectors())
        .map(|k| {
            let mut eta = f64::INFINITY;
            for &xi in spec.set(k) {
                for m in spec.outside(k) {
                    eta = eta.min(two_marginal_term(model, k, xi, m, &model.marginal_x(m))?.0);
                }
            }
            Ok(eta)
        })
        .collect::<Result<_>>()?;
    Ok(ExponentPoint {
        theta,
        provenance: Provenance::Rectangle { w },
    })
}

/// Projected divergences for every detector, hypothesis outside its merged
/// set, reference in it, and grid point.
#[derive(Debug, Clone)]
pub struct CompositeTables {
    grid: SimplexGrid,
    groups: MarginalGroups,
    spec: CompositeSpec,
    /// `min_{ξ∈S_k}` of the projection, `[(k * M + m) * P + p]`; NaN for `m ∈ S_k`.
    values: Vec<f64>,
    unconverged: usize,
}

impl CompositeTables {
    pub fn build(model: &HypothesisModel, spec: &CompositeSpec, delta: f64) -> Result<Self> {
        let groups = model.groups();
        let grid = SimplexGrid::with_anchors(model.x_size(), delta, &groups.marginals)?;
        let (kk, mm, pp) = (model.detectors(), model.hypotheses(), grid.len());
        let solved: Vec<(f64, bool)> = (0..kk * mm * pp)
            .into_par_iter()
            .map(|i| {
                let (k, m, p) = (i / (mm * pp), (i / pp) % mm, i % pp);
                if spec.contains(k, m) {
                    return Ok((f64::NAN, true));
                }
                let mut best = (f64::INFINITY, true);
                for &xi in spec.set(k) {
                    let (v, c) = two_marginal_term(model, k, xi, m, &grid.points()[p])?;
                    best = (best.0.min(v), best.1 && c);
                }
                Ok(best)
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            unconverged: solved.iter().filter(|(_, c)| !c).count(),
            values: solved.into_iter().map(|(v, _)| v).collect(),
            grid,
            groups,
            spec: spec.clone(),
        })
    }

    pub fn grid(&self) -> &SimplexGrid {
        &self.grid
    }

    pub fn spec(&self) -> &CompositeSpec {
        &self.spec
    }

    pub fn unconverged(&self) -> usize {
        self.unconverged
    }

    fn detectors(&self) -> usize {
        self.spec.sets.len()
    }

    fn hypotheses(&self) -> usize {
        self.spec.hypotheses
    }

    /// The pair term for `(k, m)` at grid point `p`, `None` when `m ∈ S_k`.
    pub fn term(&self, k: usize, m: usize, p: usize) -> Option<f64> {
        (!self.spec.contains(k, m)).then(|| self.values[(k * self.hypotheses() + m) * self.grid.len() + p])
    }
}

fn check_tilt(detectors: usize, r: &[f64]) -> Result<()> {
    if r.len() + 1 != detectors {
        return Err(Error::invalid(format!("tilt has {} entries, expected K-1 = {}", r.len(), detectors - 1)));
    }
    if r.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("tilt entries must be finite"));
    }
    Ok(())
}

/// The tilt rule with composite terms; for singleton sets this is the
/// simple-hypothesis partition.
pub fn composite_partition(tables: &CompositeTables, w: usize, b: &[usize], r: &[f64]) -> Result<Partition> {
    check_mapping(&tables.groups, b, w)?;
    check_tilt(tables.detectors(), r)?;
    let grid = &tables.grid;
    let cell_of = (0..grid.len())
        .map(|p| match grid.anchor_of(p) {
            Some(g) => b[tables.groups.members(g)[0]],
            None => select_cell(w, b, r, tables.detectors(), |k, m| tables.term(k, m, p)),
        })
        .collect();
    Ok(Partition {
        cells: w,
        cell_of,
        b: b.to_vec(),
        r: r.to_vec(),
        delta: grid.resolution(),
    })
}

fn check_partition(tables: &CompositeTables, psi: &Partition) -> Result<()> {
    check_mapping(&tables.groups, &psi.b, psi.cells)?;
    if psi.cell_of.len() != tables.grid.len() {
        return Err(Error::invalid("partition does not cover the grid"));
    }
    if psi.cell_of.iter().any(|&c| c >= psi.cells) {
        return Err(Error::invalid("partition uses a cell beyond W"));
    }
    for p in 0..tables.grid.len() {
        if let Some(g) = tables.grid.anchor_of(p) {
            let m = tables.groups.members(g)[0];
            if psi.cell_of[p] != psi.b[m] {
                return Err(Error::invalid(format!("P_X^({}) is not in its cell b(m)={}", m + 1, psi.b[m] + 1)));
            }
        }
    }
    Ok(())
}

fn eta_k(tables: &CompositeTables, psi: &Partition, k: usize) -> f64 {
    (0..tables.hypotheses())
        .filter(|&m| !tables.spec.contains(k, m))
        .flat_map(|m| psi.members(psi.b[m]).filter_map(move |p| tables.term(k, m, p)))
        .fold(f64::INFINITY, f64::min)
}

/// `η_k` under partition `ψ`: the smallest pair term over points of cell `b(m)`.
pub fn composite_theta_zero(tables: &CompositeTables, psi: &Partition, k: usize) -> Result<f64> {
    check_partition(tables, psi)?;
    if k >= tables.detectors() {
        return Err(Error::invalid(format!("no detector k={}", k + 1)));
    }
    Ok(eta_k(tables, psi, k))
}

/// All `η_k` under `ψ`.
pub fn composite_eta(tables: &CompositeTables, psi: &Partition) -> Result<Vec<f64>> {
    check_partition(tables, psi)?;
    Ok((0..tables.detectors()).map(|k| eta_k(tables, psi, k)).collect())
}

/// `min_k w_k η_k` over detectors with positive weight.
pub fn weighted_objective(eta: &[f64], weights: &[f64]) -> f64 {
    eta.iter()
        .zip(weights)
        .filter(|(_, w)| **w > 0.0)
        .map(|(e, w)| e * w)
        .fold(f64::INFINITY, f64::min)
}

/// Result of a local search run.
#[derive(Debug, Clone, Serialize)]
pub struct LocalSearchOutcome {
    pub partition: Partition,
    pub initial_objective: f64,
    pub objective: f64,
    pub eta: Vec<f64>,
    pub moves: usize,
    pub sweeps: usize,
}

/// Coordinate ascent on the weighted objective: grid points are visited in
/// index order and moved to the cell that raises the objective most, as
/// long as some move strictly improves it. Source marginals stay pinned.
pub fn psi_local_search(tables: &CompositeTables, init: &Partition, weights: &[f64]) -> Result<LocalSearchOutcome> {
    check_partition(tables, init)?;
    if weights.len() != tables.detectors() || weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
        return Err(Error::invalid("need one finite nonnegative weight per detector"));
    }
    if weights.iter().all(|w| *w == 0.0) {
        return Err(Error::invalid("at least one weight must be positive"));
    }
    let kk = tables.detectors();
    let objective = |psi: &Partition| weighted_objective(&(0..kk).map(|k| eta_k(tables, psi, k)).collect::<Vec<_>>(), weights);
    let mut psi = init.clone();
    let initial_objective = objective(&psi);
    let mut current = initial_objective;
    let (mut moves, mut sweeps) = (0, 0);
    loop {
        sweeps += 1;
        let mut improved = false;
        for p in 0..tables.grid.len() {
            if tables.grid.anchor_of(p).is_some() {
                continue;
            }
            let from = psi.cell_of[p];
            let best = (0..psi.cells)
                .into_par_iter()
                .filter(|&c| c != from)
                .map(|c| {
                    let mut trial = psi.clone();
                    trial.cell_of[p] = c;
                    (c, objective(&trial))
                })
                .reduce(|| (usize::MAX, f64::NEG_INFINITY), |a, b| if b.1 > a.1 || (b.1 == a.1 && b.0 < a.0) { b } else { a });
            if best.0 != usize::MAX && best.1 > current {
                psi.cell_of[p] = best.0;
                current = best.1;
                moves += 1;
                improved = true;
            }
        }
        if !improved {
            break;
        }
    }
    let eta = (0..kk).map(|k| eta_k(tables, &psi, k)).collect();
    Ok(LocalSearchOutcome {
        partition: psi,
        initial_objective,
        objective: current,
        eta,
        moves,
        sweeps,
    })
}

/// Frontier over consistent mappings and tilts, each partition optionally
/// improved by local search under every weight vector.
pub fn composite_sweep(
    tables: &CompositeTables,
    w: usize,
    tilts: &[Vec<f64>],
    weights: &[Vec<f64>],
) -> Result<RegionFrontier> {
    if tilts.is_empty() {
        return Err(Error::invalid("empty tilt grid"));
    }
    let mappings = consistent_mappings(&tables.groups, w);
    let jobs: Vec<(usize, usize)> = (0..mappings.len())
        .flat_map(|i| (0..tilts.len()).map(move |j| (i, j)))
        .collect();
    let delta = tables.grid.resolution();
    let mut points = Vec::new();
    for &(i, j) in &jobs {
        let psi = composite_partition(tables, w, &mappings[i], &tilts[j])?;
        let one_based: Vec<usize> = mappings[i].iter().map(|c| c + 1).collect();
        points.push(ExponentPoint {
            theta: composite_eta(tables, &psi)?,
            provenance: Provenance::CompositePartition {
                b: one_based.clone(),
                r: tilts[j].clone(),
                weights: Vec::new(),
                delta,
            },
        });
        for wt in weights {
            let out = psi_local_search(tables, &psi, wt)?;
            points.push(ExponentPoint {
                theta: out.eta,
                provenance: Provenance::CompositePartition {
                    b: one_based.clone(),
                    r: tilts[j].clone(),
                    weights: wt.clone(),
                    delta,
                },
            });
        }
    }
    let evaluated = points.len();
    Ok(RegionFrontier::from_points(points)
        .with_meta("w", w)
        .with_meta("l", tables.groups.len())
        .with_meta("delta", delta)
        .with_meta("spec", &tables.spec)
        .with_meta("mappings", mappings.len())
        .with_meta("tilts", tilts.len())
        .with_meta("weights", weights)
        .with_meta("evaluated", evaluated)
        .with_meta("partition_note", "local search gives an inner bound; the optimal partition is not characterized")
        .with_meta("unconverged_solves", tables.unconverged))
}

/// Pairs `(k, m ∉ S_k)` whose rate condition applies.
fn composite_rate_pairs(spec: &CompositeSpec) -> Vec<(usize, usize)> {
    (0..spec.sets.len())
        .flat_map(|k| spec.outside(k).into_iter().map(move |m| (k, m)))
        .collect()
}

/// Rate condition `I_{P^(m)}(U;X|Y_k) ≤ R` for every `k` and `m ∉ S_k`.
pub fn composite_tuple_feasible(
    model: &HypothesisModel,
    spec: &CompositeSpec,
    tuple: &UChannelTuple,
    rate: f64,
) -> Result<Feasibility> {
    feasible_on_pairs(model, tuple, rate, &composite_rate_pairs(spec))
}

/// `η_k = min_{ξ∈S_k, m∉S_k} min(first, second + R − I)` with reference `P^(ξ)`.
pub fn composite_theta_positive(
    model: &HypothesisModel,
    spec: &CompositeSpec,
    tuple: &UChannelTuple,
    rate: f64,
    k: usize,
) -> Result<f64> {
    if k >= model.detectors() {
        return Err(Error::invalid(format!("no detector k={}", k + 1)));
    }
    let mut eta = f64::INFINITY;
    for m in spec.outside(k) {
        for &xi in spec.set(k) {
            eta = eta.min(pair_terms(model, k, xi, m, tuple.channel(m))?.bound(rate));
        }
    }
    Ok(eta)
}

/// Positive-rate composite frontier over gridded channel tuples.
pub fn composite_search_positive(
    model: &HypothesisModel,
    spec: &CompositeSpec,
    rate: f64,
    u_size: usize,
    delta: f64,
) -> Result<RegionFrontier> {
    let tables = PositiveRateTables::build_with_plan(model, u_size, delta, &spec.plan())?;
    Ok(tables
        .search_with(rate, &composite_rate_pairs(spec))?
        .with_meta("spec", spec))
}
