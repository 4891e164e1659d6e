//! Constrained information projections.
//!
//! Every exponent formula in this crate bottoms out in a problem of the form
//! `min D(π‖Q)` over couplings `π` with some marginals pinned, optionally with
//! a lower bound on the conditional entropy `H_π(U|Y)`. The linear cases are
//! solved by proportional scaling; the entropy-constrained case by bisection
//! on the multiplier of the entropy constraint, with an entropic mirror-descent
//! inner solver.

mod oracle;
mod scaling;

use serde::Serialize;

pub use oracle::{brute_force_min, CouplingProblem, MarginalConstraint, ORACLE_MAX_CELLS};

use crate::error::{Error, Result};
use crate::prob::{entropy_raw, kl_raw, JointPmf2, JointPmf3, Pmf};
use scaling::{masked_start, scale, support_feasible, Layout};

pub const DEFAULT_TOL: f64 = 1e-9;
pub const DEFAULT_MAX_ITER: usize = 100_000;
/// Upper end of the bracket searched for the entropy multiplier.
pub const LAMBDA_MAX: f64 = 50.0;

const CONSISTENCY_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    ProportionalFitting,
    AlternatingProjection,
    DualBisection,
    /// Entropy bound equals the largest attainable conditional entropy.
    EntropyTight,
    /// No feasible coupling; value is `+∞`.
    Infeasible,
}

/// Outcome of one projection.
#[derive(Debug, Clone, Serialize)]
pub struct SolverReport {
    /// `D(argmin‖Q)` in nats; `+∞` when infeasible.
    pub value: f64,
    /// Minimizer in the reference's row-major layout (empty when infeasible).
    pub argmin: Vec<f64>,
    pub shape: Vec<usize>,
    pub iterations: usize,
    /// Largest constraint violation of `argmin`.
    pub residual: f64,
    pub converged: bool,
    pub method: Method,
    /// Entropy multiplier at the returned point, when one was used.
    pub multiplier: Option<f64>,
}

impl SolverReport {
    fn infeasible(shape: Vec<usize>) -> Self {
        Self {
            value: f64::INFINITY,
            argmin: Vec::new(),
            shape,
            iterations: 0,
            residual: 0.0,
            converged: true,
            method: Method::Infeasible,
            multiplier: None,
        }
    }

    pub fn is_feasible(&self) -> bool {
        self.method != Method::Infeasible
    }

    pub fn argmin_joint2(&self) -> Option<JointPmf2> {
        match self.shape[..] {
            [r, c] if self.is_feasible() => Some(JointPmf2::from_raw(r, c, self.argmin.clone())),
            _ => None,
        }
    }

    pub fn argmin_joint3(&self) -> Option<JointPmf3> {
        match self.shape[..] {
            [u, x, y] if self.is_feasible() => {
                Some(JointPmf3::from_raw(u, x, y, self.argmin.clone()))
            }
            _ => None,
        }
    }
}

fn check_tol(tol: f64) -> Result<()> {
    if !(tol > 0.0) {
        return Err(Error::invalid(format!("tolerance {tol} must be positive")));
    }
    Ok(())
}

/// Shared path for the linear problems: support check, then scaling.
fn project_linear(
    layout: &Layout,
    reference: &[f64],
    row_target: &[f64],
    col_target: &[f64],
    shape: Vec<usize>,
    method: Method,
    tol: f64,
    max_iter: usize,
) -> SolverReport {
    if !support_feasible(layout, reference, row_target, col_target) {
        return SolverReport::infeasible(shape);
    }
    let start = masked_start(layout, reference, row_target, col_target);
    let out = scale(layout, start, row_target, col_target, tol, max_iter, |_| {});
    SolverReport {
        value: kl_raw(&out.table, reference),
        argmin: out.table,
        shape,
        iterations: out.iterations,
        residual: out.residual,
        converged: out.converged,
        method,
        multiplier: None,
    }
}

/// `min D(π‖Q)` over `π` with marginals `(px, py)`, by iterative proportional fitting.
pub fn iproject_two_marginals(
    q: &JointPmf2,
    px: &Pmf,
    py: &Pmf,
    tol: f64,
    max_iter: usize,
) -> Result<SolverReport> {
    check_tol(tol)?;
    if px.len() != q.rows() || py.len() != q.cols() {
        return Err(Error::invalid(format!(
            "targets of sizes ({}, {}) for a {}x{} reference",
            px.len(),
            py.len(),
            q.rows(),
            q.cols()
        )));
    }
    let layout = Layout {
        blocks: 1,
        rows: q.rows(),
        cols: q.cols(),
    };
    Ok(project_linear(
        &layout,
        q.probs(),
        px.probs(),
        py.probs(),
        vec![q.rows(), q.cols()],
        Method::ProportionalFitting,
        tol,
        max_iter,
    ))
}

/// The fitting iterates after each full row-and-column cycle.
///
/// Diagnostic for convergence studies: the divergence from the limit,
/// `D(π*‖π_t)`, is non-increasing along this sequence.
pub fn two_marginal_iterates(q: &JointPmf2, px: &Pmf, py: &Pmf, cycles: usize) -> Vec<JointPmf2> {
    let layout = Layout {
        blocks: 1,
        rows: q.rows(),
        cols: q.cols(),
    };
    let start = masked_start(&layout, q.probs(), px.probs(), py.probs());
    let mut out = Vec::with_capacity(cycles);
    scale(&layout, start, px.probs(), py.probs(), 0.0, cycles, |t| {
        out.push(JointPmf2::from_raw(q.rows(), q.cols(), t.to_vec()))
    });
    out
}

/// `min D(π_UXY‖P)` over `π` with `π_UX = pi_ux` and `π_UY = pi_uy`.
///
/// The two families are projected onto alternately, UX first; each
/// projection rescales the (u, x) or (u, y) fibres.
pub fn iproject_overlapping(
    pref: &JointPmf3,
    pi_ux: &JointPmf2,
    pi_uy: &JointPmf2,
    tol: f64,
    max_iter: usize,
) -> Result<SolverReport> {
    check_tol(tol)?;
    let (nu, nx, ny) = pref.dims();
    if (pi_ux.rows(), pi_ux.cols()) != (nu, nx) || (pi_uy.rows(), pi_uy.cols()) != (nu, ny) {
        return Err(Error::invalid("target marginals do not match the reference tensor"));
    }
    let shape = vec![nu, nx, ny];
    let u_from_ux = pi_ux.row_sums();
    let u_from_uy = pi_uy.row_sums();
    if u_from_ux
        .iter()
        .zip(&u_from_uy)
        .any(|(a, b)| (a - b).abs() > CONSISTENCY_TOL)
    {
        return Ok(SolverReport::infeasible(shape));
    }
    let layout = Layout {
        blocks: nu,
        rows: nx,
        cols: ny,
    };
    Ok(project_linear(
        &layout,
        pref.probs(),
        pi_ux.probs(),
        pi_uy.probs(),
        shape,
        Method::AlternatingProjection,
        tol,
        max_iter,
    ))
}

/// Linear part of the entropy-constrained problem: `π_UX` and `π_Y` pinned.
///
/// Viewing the tensor as a `(|U|·|X|) × |Y|` matrix this is a two-marginal fit.
fn linear_family(nu: usize, nx: usize, ny: usize) -> Layout {
    Layout {
        blocks: 1,
        rows: nu * nx,
        cols: ny,
    }
}

fn cond_entropy_u_given_y(table: &[f64], nu: usize, nx: usize, ny: usize) -> f64 {
    let mut uy = vec![0.0; nu * ny];
    let mut y = vec![0.0; ny];
    for u in 0..nu {
        for x in 0..nx {
            for j in 0..ny {
                let v = table[(u * nx + x) * ny + j];
                uy[u * ny + j] += v;
                y[j] += v;
            }
        }
    }
    entropy_raw(&uy) - entropy_raw(&y)
}

fn uy_marginal(table: &[f64], nu: usize, nx: usize, ny: usize) -> Vec<f64> {
    let mut uy = vec![0.0; nu * ny];
    for u in 0..nu {
        for x in 0..nx {
            for j in 0..ny {
                uy[u * ny + j] += table[(u * nx + x) * ny + j];
            }
        }
    }
    uy
}

struct EntropyProblem<'a> {
    pref: &'a [f64],
    row_target: &'a [f64],
    col_target: &'a [f64],
    nu: usize,
    nx: usize,
    ny: usize,
    tol: f64,
}

impl EntropyProblem<'_> {
    fn layout(&self) -> Layout {
        linear_family(self.nu, self.nx, self.ny)
    }

    fn h(&self, t: &[f64]) -> f64 {
        cond_entropy_u_given_y(t, self.nu, self.nx, self.ny)
    }

    /// Minimizes `D(π‖P) − λ H_π(U|Y)` over the linear family by entropic
    /// mirror descent with step `1/(1+λ)`:
    /// `π ← Proj( P^{1/(1+λ)} · π(x|u,y)^{λ/(1+λ)} )`.
    fn solve_lambda(&self, lambda: f64, warm: &[f64], budget: usize) -> (Vec<f64>, usize, f64) {
        let layout = self.layout();
        let (a, b) = (1.0 / (1.0 + lambda), lambda / (1.0 + lambda));
        let mut cur = warm.to_vec();
        let mut steps = 0;
        let mut residual = 0.0;
        let mut tilted = vec![0.0; cur.len()];
        while steps < budget {
            steps += 1;
            let uy = uy_marginal(&cur, self.nu, self.nx, self.ny);
            for u in 0..self.nu {
                for x in 0..self.nx {
                    for y in 0..self.ny {
                        let i = (u * self.nx + x) * self.ny + y;
                        let (p, c) = (self.pref[i], cur[i]);
                        tilted[i] = if p > 0.0 && c > 0.0 {
                            (a * p.ln() + b * (c / uy[u * self.ny + y]).ln()).exp()
                        } else {
                            0.0
                        };
                    }
                }
            }
            let out = scale(
                &layout,
                tilted.clone(),
                self.row_target,
                self.col_target,
                self.tol * 1e-2,
                DEFAULT_MAX_ITER,
                |_| {},
            );
            residual = out.residual;
            let change = out
                .table
                .iter()
                .zip(&cur)
                .map(|(n, o)| (n - o).abs())
                .fold(0.0, f64::max);
            cur = out.table;
            // linear rate λ/(1+λ): the remaining distance is about change·(1+λ)
            if change * (1.0 + lambda) <= self.tol * 1e-2 {
                break;
            }
        }
        (cur, steps, residual)
    }

    /// Largest attainable `H_π(U|Y)` over the linear family and the UY marginal attaining it.
    fn max_entropy(&self, start: &[f64]) -> (f64, Vec<f64>) {
        let (nu, nx, ny) = (self.nu, self.nx, self.ny);
        let pu: Vec<f64> = (0..nu)
            .map(|u| self.row_target[u * nx..(u + 1) * nx].iter().sum())
            .collect();
        let product_supported = (0..nu).all(|u| {
            (0..nx).all(|x| {
                (0..ny).all(|y| {
                    self.row_target[u * nx + x] <= 0.0
                        || self.col_target[y] <= 0.0
                        || self.pref[(u * nx + x) * ny + y] > 0.0
                })
            })
        });
        if product_supported {
            let s: Vec<f64> = (0..nu)
                .flat_map(|u| {
                    let w = pu[u];
                    self.col_target.iter().map(move |py| w * py)
                })
                .collect();
            return (entropy_raw(&pu), s);
        }
        // mirror ascent on H(π_UY): π ← Proj(π(x|u,y))
        let layout = self.layout();
        let mut cur = start.to_vec();
        for _ in 0..20_000 {
            let uy = uy_marginal(&cur, nu, nx, ny);
            let tilted: Vec<f64> = cur
                .iter()
                .enumerate()
                .map(|(i, &c)| {
                    let (u, y) = (i / (nx * ny), i % ny);
                    if c > 0.0 {
                        c / uy[u * ny + y]
                    } else {
                        0.0
                    }
                })
                .collect();
            let next = scale(
                &layout,
                tilted,
                self.row_target,
                self.col_target,
                1e-13,
                DEFAULT_MAX_ITER,
                |_| {},
            )
            .table;
            let change = next
                .iter()
                .zip(&cur)
                .map(|(n, o)| (n - o).abs())
                .fold(0.0, f64::max);
            cur = next;
            if change < 1e-14 {
                break;
            }
        }
        (self.h(&cur), uy_marginal(&cur, nu, nx, ny))
    }
}

/// `min D(π‖P)` over `π` with `π_UX = pi_ux`, `π_Y = p_y` and `H_π(U|Y) ≥ h_min`.
///
/// The feasible set is convex. When the entropy-free projection already meets
/// the bound it is returned as is (λ = 0). Otherwise the multiplier λ of the
/// entropy constraint is bracketed in `[0, LAMBDA_MAX]` and located by
/// regula falsi on `H_{π_λ}(U|Y) − h_min`, which is nondecreasing in λ.
/// If no bracket exists the report is flagged unconverged and carries the
/// Lagrangian dual value at `LAMBDA_MAX`, a lower bound on the minimum.
pub fn iproject_entropy_constrained(
    pref: &JointPmf3,
    pi_ux: &JointPmf2,
    p_y: &Pmf,
    h_min: f64,
    tol: f64,
) -> Result<SolverReport> {
    check_tol(tol)?;
    let (nu, nx, ny) = pref.dims();
    if (pi_ux.rows(), pi_ux.cols()) != (nu, nx) || p_y.len() != ny {
        return Err(Error::invalid("target marginals do not match the reference tensor"));
    }
    let log_u = (nu as f64).ln();
    if !(h_min >= -1e-12 && h_min <= log_u + 1e-12) {
        return Err(Error::invalid(format!(
            "entropy bound {h_min} outside [0, log|U| = {log_u}]"
        )));
    }
    let shape = vec![nu, nx, ny];
    let layout = linear_family(nu, nx, ny);
    let base = project_linear(
        &layout,
        pref.probs(),
        pi_ux.probs(),
        p_y.probs(),
        shape.clone(),
        Method::ProportionalFitting,
        tol,
        DEFAULT_MAX_ITER,
    );
    if !base.is_feasible() {
        return Ok(base);
    }
    let problem = EntropyProblem {
        pref: pref.probs(),
        row_target: pi_ux.probs(),
        col_target: p_y.probs(),
        nu,
        nx,
        ny,
        tol,
    };
    let h0 = problem.h(&base.argmin);
    if h0 >= h_min - tol {
        return Ok(base);
    }

    let (h_max, uy_star) = problem.max_entropy(&base.argmin);
    if h_min > h_max + tol {
        return Ok(SolverReport::infeasible(shape));
    }
    if h_min >= h_max - tol {
        // only couplings whose UY marginal is the entropy maximizer remain
        let uy = JointPmf2::from_raw(nu, ny, uy_star);
        let mut rep = iproject_overlapping(pref, pi_ux, &uy, tol, DEFAULT_MAX_ITER)?;
        if rep.is_feasible() {
            rep.method = Method::EntropyTight;
        }
        return Ok(rep);
    }

    let budget = 200_000;
    let mut iterations = base.iterations;
    let eval = |lambda: f64, warm: &[f64], iterations: &mut usize| {
        let (t, steps, res) = problem.solve_lambda(lambda, warm, budget);
        *iterations += steps;
        let phi = problem.h(&t) - h_min;
        (t, phi, res)
    };

    // bracket: φ(0) < 0; expand the upper end geometrically up to LAMBDA_MAX
    let (mut lo, mut phi_lo, mut t_lo) = (0.0, h0 - h_min, base.argmin.clone());
    let mut hi = 1.0f64;
    let (mut t_hi, mut phi_hi, mut res_hi);
    loop {
        let (t, phi, res) = eval(hi, &t_lo, &mut iterations);
        (t_hi, phi_hi, res_hi) = (t, phi, res);
        if phi_hi >= 0.0 {
            break;
        }
        (lo, phi_lo, t_lo) = (hi, phi_hi, t_hi.clone());
        if hi >= LAMBDA_MAX {
            // no bracket: report the dual bound at LAMBDA_MAX
            let d = kl_raw(&t_hi, pref.probs());
            return Ok(SolverReport {
                value: d - LAMBDA_MAX * phi_hi,
                argmin: t_hi,
                shape,
                iterations,
                residual: res_hi.max(-phi_hi),
                converged: false,
                method: Method::DualBisection,
                multiplier: Some(LAMBDA_MAX),
            });
        }
        hi = (hi * 4.0).min(LAMBDA_MAX);
    }

    // Illinois regula falsi; keep the feasible end (φ ≥ 0)
    let mut side = 0i8;
    for _ in 0..200 {
        if phi_hi <= tol || hi - lo <= 1e-13 * (1.0 + hi) {
            break;
        }
        let mut w_lo = phi_lo;
        let mut w_hi = phi_hi;
        if side == -1 {
            w_hi *= 0.5;
        } else if side == 1 {
            w_lo *= 0.5;
        }
        let mut mid = lo - w_lo * (hi - lo) / (w_hi - w_lo);
        if !(mid > lo && mid < hi) {
            mid = 0.5 * (lo + hi);
        }
        let warm = if -phi_lo < phi_hi { &t_lo } else { &t_hi };
        let (t, phi, res) = eval(mid, &warm.clone(), &mut iterations);
        if phi >= 0.0 {
            (hi, phi_hi, t_hi, res_hi) = (mid, phi, t, res);
            side = if side == 1 { 2 } else { 1 };
            if side == 2 {
                side = 1;
                phi_lo *= 0.5;
            }
        } else {
            (lo, phi_lo, t_lo) = (mid, phi, t);
            side = if side == -1 { -2 } else { -1 };
            if side == -2 {
                side = -1;
                phi_hi *= 0.5;
            }
        }
    }
    let h_hi = problem.h(&t_hi);
    Ok(SolverReport {
        value: kl_raw(&t_hi, pref.probs()),
        argmin: t_hi,
        shape,
        iterations,
        residual: res_hi.max(h_min - h_hi).max(0.0),
        converged: res_hi <= tol,
        method: Method::DualBisection,
        multiplier: Some(hi),
    })
}

#[cfg(test)]
mod tests;
