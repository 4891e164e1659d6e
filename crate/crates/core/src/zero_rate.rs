//! Zero-rate exponent regions: the rectangle for many messages and the
//! partition-based region otherwise.
//!
//! With `W` messages the sensor partitions the simplex of source types into
//! `W` cells. A mapping `b` assigns each hypothesis the cell holding its own
//! marginal, and a tilt `r` trades the detectors' exponents against each
//! other when the remaining types are assigned.

use rayon::prelude::*;
use serde::Serialize;

use crate::coupling::{iproject_two_marginals, DEFAULT_MAX_ITER, DEFAULT_TOL};
use crate::error::{Error, Result};
use crate::frontier::{ExponentPoint, Provenance, RegionFrontier};
use crate::model::{HypothesisModel, MarginalGroups};
use crate::prob::{Pmf, SimplexGrid};

/// Default grid resolution for a source alphabet of the given size.
pub fn default_delta(x_size: usize) -> f64 {
    if x_size <= 2 {
        0.01
    } else {
        0.02
    }
}

/// `min D(π‖P^(κ)_{XY_κ})` over `π` with `π_X = px`, `π_{Y_κ} = P^(m)_{Y_κ}`.
pub fn projected_divergence(model: &HypothesisModel, kappa: usize, m: usize, px: &Pmf) -> Result<(f64, bool)> {
    let r = iproject_two_marginals(
        model.joint(kappa, kappa),
        px,
        &model.marginal_y(m, kappa),
        DEFAULT_TOL,
        DEFAULT_MAX_ITER,
    )?;
    Ok((r.value, r.converged))
}

/// Projected divergences `F[κ][m][p]` for every detector `κ`, hypothesis
/// `m ≠ κ` and grid point `p`; shared by partition building and exponent evaluation.
#[derive(Debug, Clone)]
pub struct ZeroRateTables {
    grid: SimplexGrid,
    groups: MarginalGroups,
    detectors: usize,
    hypotheses: usize,
    values: Vec<f64>,
    unconverged: usize,
}

impl ZeroRateTables {
    /// Tables on the `δ`-lattice with the model's source marginals injected.
    pub fn build(model: &HypothesisModel, delta: f64) -> Result<Self> {
        let groups = model.groups();
        let grid = SimplexGrid::with_anchors(model.x_size(), delta, &groups.marginals)?;
        Self::with_grid(model, grid)
    }

    /// Tables on a caller-supplied grid. Every source marginal must be a grid
    /// point with matching anchor index.
    pub fn with_grid(model: &HypothesisModel, grid: SimplexGrid) -> Result<Self> {
        model.check_zero_rate()?;
        let groups = model.groups();
        for (g, px) in groups.marginals.iter().enumerate() {
            let found = (0..grid.len()).any(|p| grid.anchor_of(p) == Some(g) && grid.points()[p] == *px);
            if !found {
                return Err(Error::invalid(format!("grid lacks source marginal group {}", g + 1)));
            }
        }
        let (kk, mm, pp) = (model.detectors(), model.hypotheses(), grid.len());
        let solved: Vec<(f64, bool)> = (0..kk * mm * pp)
            .into_par_iter()
            .map(|i| {
                let (kappa, m, p) = (i / (mm * pp), (i / pp) % mm, i % pp);
                if m == kappa {
                    return Ok((f64::NAN, true));
                }
                projected_divergence(model, kappa, m, &grid.points()[p]).map_err(|e| {
                    Error::invalid(format!("grid point {p} (κ={}, m={}): {e}", kappa + 1, m + 1))
                })
            })
            .collect::<Result<_>>()?;
        let unconverged = solved.iter().filter(|(_, c)| !c).count();
        Ok(Self {
            grid,
            groups,
            detectors: kk,
            hypotheses: mm,
            values: solved.into_iter().map(|(v, _)| v).collect(),
            unconverged,
        })
    }

    pub fn grid(&self) -> &SimplexGrid {
        &self.grid
    }

    pub fn groups(&self) -> &MarginalGroups {
        &self.groups
    }

    /// `F[κ][m][p]`; NaN when `m = κ`.
    pub fn value(&self, kappa: usize, m: usize, p: usize) -> f64 {
        self.values[(kappa * self.hypotheses + m) * self.grid.len() + p]
    }

    /// Solves that hit the iteration cap.
    pub fn unconverged(&self) -> usize {
        self.unconverged
    }

    pub fn detectors(&self) -> usize {
        self.detectors
    }

    pub fn hypotheses(&self) -> usize {
        self.hypotheses
    }
}

/// Assignment of grid points to cells; `b` and `cell_of` are 0-based.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Partition {
    pub cells: usize,
    pub cell_of: Vec<usize>,
    pub b: Vec<usize>,
    pub r: Vec<f64>,
    pub delta: f64,
}

impl Partition {
    pub fn members(&self, cell: usize) -> impl Iterator<Item = usize> + '_ {
        self.cell_of
            .iter()
            .enumerate()
            .filter(move |(_, c)| **c == cell)
            .map(|(p, _)| p)
    }
}

/// Checks that `b` maps into `[0, w)` and sends equal source marginals to the same cell.
pub fn check_mapping(groups: &MarginalGroups, b: &[usize], w: usize) -> Result<()> {
    if b.len() != groups.group_of.len() {
        return Err(Error::invalid(format!(
            "mapping has {} entries for {} hypotheses",
            b.len(),
            groups.group_of.len()
        )));
    }
    if w == 0 {
        return Err(Error::invalid("need at least one message"));
    }
    if let Some(c) = b.iter().find(|c| **c >= w) {
        return Err(Error::invalid(format!("cell {} exceeds W={w}", c + 1)));
    }
    for m in 0..b.len() {
        for m2 in m + 1..b.len() {
            if groups.group_of[m] == groups.group_of[m2] && b[m] != b[m2] {
                return Err(Error::invalid(format!(
                    "hypotheses m={} and m'={} share P_X but b maps them to cells {} and {}",
                    m + 1,
                    m2 + 1,
                    b[m] + 1,
                    b[m2] + 1
                )));
            }
        }
    }
    Ok(())
}

/// Tilt attached to detector `κ`: `Σ_{l ≥ κ} r_l` over the `K−1` entries of `r`.
pub fn tilt(r: &[f64], kappa: usize) -> f64 {
    r.iter().skip(kappa).sum()
}

/// The partition rule for one type: the cell `j` maximizing
/// `min_κ [ min_{m: b(m)=j, m admissible for κ} term(κ, m) + tilt(r, κ) ]`,
/// ties to the smallest `j`, vacuous minima `+∞`.
pub fn select_cell(
    cells: usize,
    b: &[usize],
    r: &[f64],
    detectors: usize,
    term: impl Fn(usize, usize) -> Option<f64>,
) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for j in 0..cells {
        let mut score = f64::INFINITY;
        for kappa in 0..detectors {
            let inner = (0..b.len())
                .filter(|&m| b[m] == j)
                .filter_map(|m| term(kappa, m))
                .fold(f64::INFINITY, f64::min);
            score = score.min(inner + tilt(r, kappa));
        }
        if score > best.1 {
            best = (j, score);
        }
    }
    best.0
}

fn validate_tilt(model: &HypothesisModel, r: &[f64]) -> Result<()> {
    if r.len() + 1 != model.detectors() {
        return Err(Error::invalid(format!(
            "tilt has {} entries, expected K-1 = {}",
            r.len(),
            model.detectors() - 1
        )));
    }
    if r.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("tilt entries must be finite"));
    }
    Ok(())
}

/// Assigns every grid point a cell: source marginals go to `b(m)`, every
/// other type by [`select_cell`] on the precomputed divergences.
pub fn build_partition(
    model: &HypothesisModel,
    tables: &ZeroRateTables,
    w: usize,
    b: &[usize],
    r: &[f64],
) -> Result<Partition> {
    check_mapping(tables.groups(), b, w)?;
    validate_tilt(model, r)?;
    let groups = tables.groups();
    let grid = tables.grid();
    let kk = model.detectors();
    let cell_of = (0..grid.len())
        .map(|p| match grid.anchor_of(p) {
            Some(g) => b[groups.members(g)[0]],
            None => select_cell(w, b, r, kk, |kappa, m| (m != kappa).then(|| tables.value(kappa, m, p))),
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

/// `θ_k = min_{m≠k} min_{p in cell b(m)} F[k][m][p]`, empty cells giving `+∞`.
pub fn theta_of(model: &HypothesisModel, tables: &ZeroRateTables, partition: &Partition) -> ExponentPoint {
    let theta = (0..model.detectors())
        .map(|k| {
            (0..model.hypotheses())
                .filter(|&m| m != k)
                .flat_map(|m| partition.members(partition.b[m]).map(move |p| tables.value(k, m, p)))
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    ExponentPoint {
        theta,
        provenance: Provenance::Partition {
            b: partition.b.iter().map(|c| c + 1).collect(),
            r: partition.r.clone(),
            delta: partition.delta,
        },
    }
}

/// The corner of the rectangle region available when `W > L`.
pub fn rectangle_region(model: &HypothesisModel, w: usize) -> Result<ExponentPoint> {
    model.check_zero_rate()?;
    let l = model.groups().len();
    if w <= l {
        return Err(Error::invalid(format!(
            "rectangle region needs W > L (W={w}, L={l}); use the partition sweep"
        )));
    }
    let theta = (0..model.detectors())
        .map(|k| {
            (0..model.hypotheses())
                .filter(|&m| m != k)
                .map(|m| projected_divergence(model, k, m, &model.marginal_x(m)).map(|v| v.0))
                .try_fold(f64::INFINITY, |acc, v| v.map(|v| acc.min(v)))
        })
        .collect::<Result<_>>()?;
    Ok(ExponentPoint {
        theta,
        provenance: Provenance::Rectangle { w },
    })
}

/// Every mapping `[0,M) → [0,W)` that is constant on source-marginal groups,
/// in lexicographic order of the group assignment.
pub fn consistent_mappings(groups: &MarginalGroups, w: usize) -> Vec<Vec<usize>> {
    let l = groups.len();
    let total = (w as u64).checked_pow(l as u32).unwrap_or(u64::MAX);
    (0..total)
        .map(|mut code| {
            let mut by_group = vec![0; l];
            for slot in by_group.iter_mut().rev() {
                *slot = (code % w as u64) as usize;
                code /= w as u64;
            }
            groups.group_of.iter().map(|&g| by_group[g]).collect()
        })
        .collect()
}

/// Evenly spaced values `min, min+step, …, max` (endpoints included up to rounding).
pub fn linspace_step(min: f64, max: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0) || !(max >= min) || !min.is_finite() || !max.is_finite() {
        return Err(Error::invalid(format!("bad range [{min}, {max}] step {step}")));
    }
    let n = ((max - min) / step + 1e-9).floor() as usize;
    // snap to 12 decimals so 0.05·k prints as written
    Ok((0..=n)
        .map(|i| ((min + i as f64 * step) * 1e12).round() / 1e12)
        .collect())
}

/// Cartesian grid of tilt vectors with `dims` coordinates, each from `values`.
pub fn tilt_grid(values: &[f64], dims: usize) -> Result<Vec<Vec<f64>>> {
    let count = (values.len() as f64).powi(dims as i32);
    if count > 1e6 {
        return Err(Error::GuardExceeded(format!("{count} tilt vectors")));
    }
    let mut out = vec![Vec::new()];
    for _ in 0..dims {
        out = out
            .into_iter()
            .flat_map(|prefix: Vec<f64>| {
                values.iter().map(move |v| {
                    let mut p = prefix.clone();
                    p.push(*v);
                    p
                })
            })
            .collect();
    }
    Ok(out)
}

/// Pareto frontier of `theta_of` over all consistent mappings and tilts.
pub fn sweep_region(
    model: &HypothesisModel,
    w: usize,
    tilts: &[Vec<f64>],
    delta: f64,
) -> Result<RegionFrontier> {
    let tables = ZeroRateTables::build(model, delta)?;
    sweep_with_tables(model, &tables, w, tilts)
}

pub fn sweep_with_tables(
    model: &HypothesisModel,
    tables: &ZeroRateTables,
    w: usize,
    tilts: &[Vec<f64>],
) -> Result<RegionFrontier> {
    if tilts.is_empty() {
        return Err(Error::invalid("empty tilt grid"));
    }
    for r in tilts {
        validate_tilt(model, r)?;
    }
    let mappings = consistent_mappings(tables.groups(), w);
    let jobs: Vec<(usize, usize)> = (0..mappings.len())
        .flat_map(|i| (0..tilts.len()).map(move |j| (i, j)))
        .collect();
    let points = jobs
        .par_iter()
        .map(|&(i, j)| {
            let part = build_partition(model, tables, w, &mappings[i], &tilts[j])?;
            Ok(theta_of(model, tables, &part))
        })
        .collect::<Result<Vec<_>>>()?;
    let evaluated = points.len();
    Ok(RegionFrontier::from_points(points)
        .with_meta("w", w)
        .with_meta("l", tables.groups().len())
        .with_meta("delta", tables.grid().resolution())
        .with_meta("grid_points", tables.grid().len())
        .with_meta("mappings", mappings.len())
        .with_meta("tilts", tilts.len())
        .with_meta("evaluated", evaluated)
        .with_meta("unconverged_solves", tables.unconverged()))
}

/// Adds tilts between neighbours of a one-dimensional tilt grid wherever
/// some mapping's exponent vector differs at the two neighbours, bisecting
/// up to `depth` times. Returns the sorted, enlarged grid.
pub fn refine_tilts(
    model: &HypothesisModel,
    tables: &ZeroRateTables,
    w: usize,
    tilts: &[f64],
    depth: usize,
) -> Result<Vec<f64>> {
    if model.detectors() != 2 {
        return Err(Error::invalid("tilt refinement is implemented for K=2 only"));
    }
    let mappings = consistent_mappings(tables.groups(), w);
    let eval = |r: f64| -> Result<Vec<Vec<f64>>> {
        mappings
            .par_iter()
            .map(|b| Ok(theta_of(model, tables, &build_partition(model, tables, w, b, &[r])?).theta))
            .collect()
    };
    let mut sorted = tilts.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.dedup();
    let mut out = sorted.clone();
    let mut frontier: Vec<(f64, f64)> = sorted.windows(2).map(|p| (p[0], p[1])).collect();
    for _ in 0..depth {
        let mut next = Vec::new();
        for (lo, hi) in frontier {
            if eval(lo)? != eval(hi)? {
                let mid = 0.5 * (lo + hi);
                out.push(mid);
                next.push((lo, mid));
                next.push((mid, hi));
            }
        }
        frontier = next;
    }
    out.sort_by(f64::total_cmp);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coupling::{brute_force_min, CouplingProblem};
    use crate::prob::JointPmf2;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn r_values() -> Vec<Vec<f64>> {
        tilt_grid(&linspace_step(-2.0, 2.0, 0.05).unwrap(), 1).unwrap()
    }

    #[test]
    fn tilt_sums_stop_at_k_minus_one() {
        let r = [0.5, -0.25];
        assert_eq!(tilt(&r, 0), 0.25);
        assert_eq!(tilt(&r, 1), -0.25);
        assert_eq!(tilt(&r, 2), 0.0);
    }

    #[test]
    fn linspace_covers_endpoints() {
        let v = linspace_step(-2.0, 2.0, 0.05).unwrap();
        assert_eq!(v.len(), 81);
        assert!((v[80] - 2.0).abs() < 1e-12);
        assert!(linspace_step(1.0, 0.0, 0.1).is_err());
    }

    #[test]
    fn mappings_respect_groups() {
        let model = HypothesisModel::example1();
        let maps = consistent_mappings(&model.groups(), 2);
        assert_eq!(maps.len(), 8);
        assert_eq!(maps[1], vec![0, 0, 1]);
        let a = JointPmf2::new(2, 2, vec![0.25, 0.25, 0.25, 0.25]).unwrap();
        let b = JointPmf2::new(2, 2, vec![0.3, 0.2, 0.2, 0.3]).unwrap();
        let c = JointPmf2::new(2, 2, vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        let m = HypothesisModel::new(vec![vec![a], vec![b], vec![c]], vec![0.1]).unwrap();
        let g = m.groups();
        assert!(consistent_mappings(&g, 3).iter().all(|b| b[0] == b[1]));
        assert!(check_mapping(&g, &[0, 1, 1], 2).is_err());
        assert!(check_mapping(&g, &[0, 0, 2], 2).is_err());
    }

    #[test]
    fn anchors_land_in_their_cells() {
        let model = HypothesisModel::example1();
        let tables = ZeroRateTables::build(&model, 0.01).unwrap();
        for b in consistent_mappings(tables.groups(), 2) {
            for r in [-1.0, 0.0, 0.7] {
                let part = build_partition(&model, &tables, 2, &b, &[r]).unwrap();
                for p in 0..tables.grid().len() {
                    if let Some(g) = tables.grid().anchor_of(p) {
                        assert_eq!(part.cell_of[p], b[g]);
                    }
                }
            }
        }
    }

    #[test]
    fn single_cell_takes_everything() {
        let model = HypothesisModel::example1();
        let tables = ZeroRateTables::build(&model, 0.05).unwrap();
        let part = build_partition(&model, &tables, 1, &[0, 0, 0], &[0.3]).unwrap();
        assert!(part.cell_of.iter().all(|c| *c == 0));
    }

    #[test]
    fn example1_partition_matches_direct_rule() {
        let model = HypothesisModel::example1();
        let tables = ZeroRateTables::build(&model, 0.01).unwrap();
        let b = [0, 1, 1];
        let part = build_partition(&model, &tables, 2, &b, &[0.0]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..5 {
            let p = loop {
                let p = rng.gen_range(0..tables.grid().len());
                if tables.grid().anchor_of(p).is_none() {
                    break p;
                }
            };
            let px = &tables.grid().points()[p];
            // independent re-evaluation: fresh solves, explicit argmax
            let mut scores = [f64::INFINITY; 2];
            for (j, score) in scores.iter_mut().enumerate() {
                for kappa in 0..2 {
                    let inner = (0..3)
                        .filter(|&m| b[m] == j && m != kappa)
                        .map(|m| projected_divergence(&model, kappa, m, px).unwrap().0)
                        .fold(f64::INFINITY, f64::min);
                    *score = score.min(inner);
                }
            }
            let expect = if scores[1] > scores[0] { 1 } else { 0 };
            assert_eq!(part.cell_of[p], expect, "point {p}");
        }
    }

    #[test]
    fn rectangle_needs_many_messages() {
        let model = HypothesisModel::example1();
        assert!(rectangle_region(&model, 3).is_err());
        let corner = rectangle_region(&model, 4).unwrap();
        assert!(corner.theta.iter().all(|t| *t > 0.0 && t.is_finite()));
    }

    #[test]
    fn rectangle_example1_matches_oracle() {
        let model = HypothesisModel::example1();
        let corner = rectangle_region(&model, 4).unwrap();
        for k in 0..2 {
            let oracle = (0..3)
                .filter(|&m| m != k)
                .map(|m| {
                    let pb = CouplingProblem::two_marginals(
                        model.joint(k, k),
                        &model.marginal_x(m),
                        &model.marginal_y(m, k),
                    );
                    brute_force_min(&pb, 1e-3).unwrap()
                })
                .fold(f64::INFINITY, f64::min);
            assert!(corner.theta[k] <= oracle + 1e-9);
            assert!(oracle - corner.theta[k] < 1e-3);
        }
    }

    #[test]
    fn anchor_only_grid_reproduces_rectangle() {
        let model = HypothesisModel::example1();
        let grid = SimplexGrid::from_points(model.groups().marginals).unwrap();
        let tables = ZeroRateTables::with_grid(&model, grid).unwrap();
        let part = build_partition(&model, &tables, 3, &[0, 1, 2], &[0.0]).unwrap();
        let theta = theta_of(&model, &tables, &part).theta;
        let corner = rectangle_region(&model, 4).unwrap().theta;
        assert_eq!(theta, corner);
    }

    #[test]
    fn shared_cell_is_below_rectangle() {
        let model = HypothesisModel::example1();
        let tables = ZeroRateTables::build(&model, 0.02).unwrap();
        let corner = rectangle_region(&model, 4).unwrap().theta;
        let part = build_partition(&model, &tables, 2, &[0, 0, 1], &[0.0]).unwrap();
        let theta = theta_of(&model, &tables, &part).theta;
        assert!(theta[0] <= corner[0] + 1e-12 && theta[1] <= corner[1] + 1e-12);
    }

    #[test]
    fn many_messages_sweep_returns_rectangle() {
        let model = HypothesisModel::example1();
        let f = sweep_region(&model, 4, &r_values()[..5], 0.05).unwrap();
        let corner = rectangle_region(&model, 4).unwrap().theta;
        assert_eq!(f.len(), 1);
        for k in 0..2 {
            assert!((f.points[0].theta[k] - corner[k]).abs() < 1e-12);
        }
    }

    #[test]
    fn sweep_points_lie_below_rectangle() {
        let model = HypothesisModel::example1();
        let f = sweep_region(&model, 2, &r_values(), 0.02).unwrap();
        let corner = rectangle_region(&model, 4).unwrap().theta;
        for p in &f.points {
            assert!(p.theta[0] <= corner[0] + 1e-12 && p.theta[1] <= corner[1] + 1e-12);
        }
    }

    #[test]
    fn symmetric_model_gives_symmetric_frontier() {
        // exchanging the detectors, hypotheses 1 and 2, and the two source
        // symbols maps this model onto itself
        let flip = |j: &JointPmf2| {
            JointPmf2::new(2, 2, vec![j.get(1, 0), j.get(1, 1), j.get(0, 0), j.get(0, 1)]).unwrap()
        };
        let a = JointPmf2::new(2, 2, vec![0.35, 0.25, 0.10, 0.30]).unwrap();
        let b = JointPmf2::new(2, 2, vec![0.20, 0.40, 0.30, 0.10]).unwrap();
        let model = HypothesisModel::new(
            vec![vec![a.clone(), b.clone()], vec![flip(&b), flip(&a)]],
            vec![0.1, 0.1],
        )
        .unwrap();
        let f = sweep_region(&model, 2, &r_values(), 0.02).unwrap();
        assert!(f.len() > 1);
        for p in &f.points {
            assert!(f.contains(&[p.theta[1] - 1e-9, p.theta[0] - 1e-9]), "{:?}", p.theta);
        }
    }

    #[test]
    fn tilt_refinement_fills_the_frontier() {
        let model = HypothesisModel::example1();
        let tables = ZeroRateTables::build(&model, 0.01).unwrap();
        let coarse = linspace_step(-2.0, 2.0, 0.05).unwrap();
        let fine = refine_tilts(&model, &tables, 2, &coarse, 6).unwrap();
        assert!(fine.len() > coarse.len());
        let grid_of = |v: &[f64]| tilt_grid(v, 1).unwrap();
        let a = sweep_with_tables(&model, &tables, 2, &grid_of(&coarse)).unwrap();
        let b = sweep_with_tables(&model, &tables, 2, &grid_of(&fine)).unwrap();
        assert!(b.len() > a.len());
        // every coarse frontier point is still achieved
        for p in &a.points {
            assert!(b.contains(&p.theta));
        }
    }

    #[test]
    fn refinement_does_not_increase_theta() {
        let model = HypothesisModel::example1();
        let tables: Vec<_> = [0.05, 0.02, 0.01]
            .iter()
            .map(|d| ZeroRateTables::build(&model, *d).unwrap())
            .collect();
        for b in consistent_mappings(&model.groups(), 2) {
            for r in [-0.02, 0.0, 0.01, 0.03] {
                let thetas: Vec<Vec<f64>> = tables
                    .iter()
                    .map(|t| theta_of(&model, t, &build_partition(&model, t, 2, &b, &[r]).unwrap()).theta)
                    .collect();
                for w in thetas.windows(2) {
                    assert!(w[1][0] <= w[0][0] + 1e-12 && w[1][1] <= w[0][1] + 1e-12, "{b:?} {r} {thetas:?}");
                }
            }
        }
    }
}
