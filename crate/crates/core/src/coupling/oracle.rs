//! Lattice brute force for small coupling problems, used to certify the solvers.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::prob::{JointPmf2, JointPmf3, Pmf};

/// Largest number of cells the oracle accepts.
pub const ORACLE_MAX_CELLS: usize = 12;

/// Lattice points evaluated per sweep before switching to coarse-to-fine search.
const SWEEP_BUDGET: f64 = 2.0e6;

/// A pinned marginal: `target` is row-major over `axes` (ascending).
#[derive(Debug, Clone, Serialize)]
pub struct MarginalConstraint {
    pub axes: Vec<usize>,
    pub target: Vec<f64>,
}

/// `min D(π‖reference)` subject to marginal constraints and, for 3-axis
/// problems, an optional lower bound on `H_π(axis 0 | axis 2)`.
#[derive(Debug, Clone, Serialize)]
pub struct CouplingProblem {
    pub shape: Vec<usize>,
    pub reference: Vec<f64>,
    pub constraints: Vec<MarginalConstraint>,
    pub h_min: Option<f64>,
}

impl CouplingProblem {
    pub fn two_marginals(q: &JointPmf2, px: &Pmf, py: &Pmf) -> Self {
        Self {
            shape: vec![q.rows(), q.cols()],
            reference: q.probs().to_vec(),
            constraints: vec![
                MarginalConstraint {
                    axes: vec![0],
                    target: px.probs().to_vec(),
                },
                MarginalConstraint {
                    axes: vec![1],
                    target: py.probs().to_vec(),
                },
            ],
            h_min: None,
        }
    }

    pub fn overlapping(pref: &JointPmf3, pi_ux: &JointPmf2, pi_uy: &JointPmf2) -> Self {
        let (nu, nx, ny) = pref.dims();
        Self {
            shape: vec![nu, nx, ny],
            reference: pref.probs().to_vec(),
            constraints: vec![
                MarginalConstraint {
                    axes: vec![0, 1],
                    target: pi_ux.probs().to_vec(),
                },
                MarginalConstraint {
                    axes: vec![0, 2],
                    target: pi_uy.probs().to_vec(),
                },
            ],
            h_min: None,
        }
    }

    pub fn entropy_constrained(pref: &JointPmf3, pi_ux: &JointPmf2, p_y: &Pmf, h_min: f64) -> Self {
        let (nu, nx, ny) = pref.dims();
        Self {
            shape: vec![nu, nx, ny],
            reference: pref.probs().to_vec(),
            constraints: vec![
                MarginalConstraint {
                    axes: vec![0, 1],
                    target: pi_ux.probs().to_vec(),
                },
                MarginalConstraint {
                    axes: vec![2],
                    target: p_y.probs().to_vec(),
                },
            ],
            h_min: Some(h_min),
        }
    }

    fn cells(&self) -> usize {
        self.shape.iter().product()
    }

    /// Index of `cell`'s projection onto `axes` in row-major order.
    fn project(&self, cell: usize, axes: &[usize]) -> usize {
        let mut coords = vec![0; self.shape.len()];
        let mut rest = cell;
        for a in (0..self.shape.len()).rev() {
            coords[a] = rest % self.shape[a];
            rest /= self.shape[a];
        }
        axes.iter().fold(0, |acc, &a| acc * self.shape[a] + coords[a])
    }

    fn validate(&self) -> Result<()> {
        if self.reference.len() != self.cells() {
            return Err(Error::invalid("reference length does not match shape"));
        }
        for c in &self.constraints {
            let size: usize = c.axes.iter().map(|&a| self.shape.get(a).copied().unwrap_or(0)).product();
            if c.axes.is_empty() || c.axes.windows(2).any(|w| w[0] >= w[1]) || size != c.target.len() {
                return Err(Error::invalid(format!("bad constraint on axes {:?}", c.axes)));
            }
        }
        if self.h_min.is_some() && self.shape.len() != 3 {
            return Err(Error::invalid("entropy bound needs a three-axis problem"));
        }
        Ok(())
    }

    fn cond_entropy(&self, table: &[f64]) -> f64 {
        let (nu, ny) = (self.shape[0], self.shape[2]);
        let mut uy = vec![0.0; nu * ny];
        let mut y = vec![0.0; ny];
        for (i, &v) in table.iter().enumerate() {
            let j = self.project(i, &[0, 2]);
            uy[j] += v;
            y[j % ny] += v;
        }
        crate::prob::entropy_raw(&uy) - crate::prob::entropy_raw(&y)
    }
}

/// Equality system `A v = rhs` over the free cells, reduced to row echelon form.
struct Reduced {
    pivots: Vec<(usize, Vec<f64>, f64)>,
    free: Vec<usize>,
}

fn reduce(mut a: Vec<Vec<f64>>, mut rhs: Vec<f64>, nvars: usize) -> Option<Reduced> {
    let eps = 1e-12;
    let mut row = 0;
    let mut pivot_cols = Vec::new();
    for col in 0..nvars {
        let Some(p) = (row..a.len()).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())) else {
            break;
        };
        if a[p][col].abs() <= eps {
            continue;
        }
        a.swap(row, p);
        rhs.swap(row, p);
        let f = a[row][col];
        a[row].iter_mut().for_each(|v| *v /= f);
        rhs[row] /= f;
        for i in 0..a.len() {
            if i != row && a[i][col].abs() > eps {
                let g = a[i][col];
                for c in 0..nvars {
                    a[i][c] -= g * a[row][c];
                }
                rhs[i] -= g * rhs[row];
            }
        }
        pivot_cols.push(col);
        row += 1;
    }
    if rhs[row..].iter().any(|v| v.abs() > 1e-9) {
        return None;
    }
    let free: Vec<usize> = (0..nvars).filter(|c| !pivot_cols.contains(c)).collect();
    let pivots = pivot_cols
        .iter()
        .enumerate()
        .map(|(r, &c)| (c, free.iter().map(|&f| a[r][f]).collect(), rhs[r]))
        .collect();
    Some(Reduced { pivots, free })
}

/// Minimum of `D(π‖Q)` over couplings whose free coordinates lie on the
/// `δ`-lattice; the remaining coordinates are solved from the constraints, so
/// every candidate is exactly feasible and the result is an upper bound on
/// the true minimum.
///
/// When the full lattice exceeds the sweep budget the search runs coarse to
/// fine, zooming around the incumbent (the problem is convex).
pub fn brute_force_min(problem: &CouplingProblem, delta: f64) -> Result<f64> {
    problem.validate()?;
    if problem.cells() > ORACLE_MAX_CELLS {
        return Err(Error::GuardExceeded(format!(
            "oracle limited to {ORACLE_MAX_CELLS} cells, problem has {}",
            problem.cells()
        )));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::invalid(format!("lattice step {delta} not in (0,1)")));
    }
    let vars: Vec<usize> = (0..problem.cells()).filter(|&i| problem.reference[i] > 0.0).collect();
    let mut a = Vec::new();
    let mut rhs = Vec::new();
    let mut upper = vec![f64::INFINITY; vars.len()];
    for c in &problem.constraints {
        for (t, &target) in c.target.iter().enumerate() {
            let row: Vec<f64> = vars
                .iter()
                .map(|&cell| if problem.project(cell, &c.axes) == t { 1.0 } else { 0.0 })
                .collect();
            for (j, v) in row.iter().enumerate() {
                if *v > 0.0 {
                    upper[j] = upper[j].min(target);
                }
            }
            a.push(row);
            rhs.push(target);
        }
    }
    let Some(red) = reduce(a, rhs, vars.len()) else {
        return Ok(f64::INFINITY);
    };
    let ub: Vec<f64> = red.free.iter().map(|&f| upper[f].min(1.0)).collect();

    let evaluate = |free_vals: &[f64]| -> Option<f64> {
        let mut table = vec![0.0; problem.cells()];
        for (k, &f) in red.free.iter().enumerate() {
            table[vars[f]] = free_vals[k];
        }
        for (col, coeffs, r) in &red.pivots {
            let v = r - coeffs.iter().zip(free_vals).map(|(c, x)| c * x).sum::<f64>();
            if v < -1e-12 {
                return None;
            }
            table[vars[*col]] = v.max(0.0);
        }
        if let Some(h) = problem.h_min {
            if problem.cond_entropy(&table) < h - 1e-12 {
                return None;
            }
        }
        Some(crate::prob::kl_raw(&table, &problem.reference))
    };

    // axis values for one free coordinate: multiples of `step` in [lo, hi], plus `hi` at the upper bound
    let axis = |lo: f64, hi: f64, step: f64, cap: f64| -> Vec<f64> {
        let mut v: Vec<f64> = ((lo / step - 1e-9).ceil() as i64..=(hi / step + 1e-9).floor() as i64)
            .map(|k| k as f64 * step)
            .filter(|x| *x <= cap)
            .collect();
        if hi >= cap - 1e-15 && v.last().map_or(true, |l| (l - cap).abs() > 1e-15) {
            v.push(cap);
        }
        v
    };
    let sweep = |axes: &[Vec<f64>]| -> Option<(f64, Vec<f64>)> {
        let mut best: Option<(f64, Vec<f64>)> = None;
        let mut idx = vec![0usize; axes.len()];
        let mut point: Vec<f64> = axes.iter().map(|a| a[0]).collect();
        loop {
            if let Some(v) = evaluate(&point) {
                if best.as_ref().map_or(true, |(b, _)| v < *b) {
                    best = Some((v, point.clone()));
                }
            }
            let mut d = 0;
            loop {
                if d == axes.len() {
                    return best;
                }
                idx[d] += 1;
                if idx[d] < axes[d].len() {
                    point[d] = axes[d][idx[d]];
                    break;
                }
                idx[d] = 0;
                point[d] = axes[d][0];
                d += 1;
            }
        }
    };

    if red.free.is_empty() {
        return Ok(evaluate(&[]).unwrap_or(f64::INFINITY));
    }
    let count = |step: f64| ub.iter().map(|u| (u / step).floor() + 2.0).product::<f64>();
    let mut step = delta;
    while count(step) > SWEEP_BUDGET {
        step *= 4.0;
    }
    let axes: Vec<Vec<f64>> = ub.iter().map(|&u| axis(0.0, u, step, u)).collect();
    let Some((mut best, mut at)) = sweep(&axes) else {
        return Ok(f64::INFINITY);
    };
    while step > delta * (1.0 + 1e-9) {
        let fine = step / 4.0;
        let axes: Vec<Vec<f64>> = at
            .iter()
            .zip(&ub)
            .map(|(&c, &u)| axis((c - 2.0 * step).max(0.0), (c + 2.0 * step).min(u), fine, u))
            .collect();
        if let Some((v, p)) = sweep(&axes) {
            if v <= best {
                best = v;
                at = p;
            }
        }
        step = fine;
    }
    Ok(best)
}
