//! Entropies, divergences and mutual informations, in nats.

use serde::Serialize;

use super::pmf::{Axis, JointPmf2, JointPmf3, ProbTable};
use crate::error::{Error, Result};

/// `Σ p log(p/q)` on raw slices with `0·log(0/q) = 0`; `+∞` when `p ≪ q` fails.
pub fn kl_raw(p: &[f64], q: &[f64]) -> f64 {
    debug_assert_eq!(p.len(), q.len());
    let mut d = 0.0;
    for (&a, &b) in p.iter().zip(q) {
        if a > 0.0 {
            if b <= 0.0 {
                return f64::INFINITY;
            }
            d += a * (a / b).ln();
        }
    }
    // rounding can push an exact zero slightly negative
    d.max(0.0)
}

/// Kullback-Leibler divergence `D(p‖q)` between tables of the same shape.
pub fn kl_divergence<T: ProbTable>(p: &T, q: &T) -> Result<f64> {
    if p.shape() != q.shape() {
        return Err(Error::invalid(format!(
            "divergence between shapes {:?} and {:?}",
            p.shape(),
            q.shape()
        )));
    }
    Ok(kl_raw(p.values(), q.values()))
}

/// Shannon entropy of a (possibly unnormalized) nonnegative vector's entries.
pub fn entropy_raw(p: &[f64]) -> f64 {
    -p.iter()
        .filter(|v| **v > 0.0)
        .map(|v| v * v.ln())
        .sum::<f64>()
}

pub fn entropy<T: ProbTable>(p: &T) -> f64 {
    entropy_raw(p.values()).max(0.0)
}

impl JointPmf2 {
    pub fn mutual_information(&self) -> f64 {
        let (px, py) = (self.row_sums(), self.col_sums());
        let mut i = 0.0;
        for x in 0..self.rows() {
            for y in 0..self.cols() {
                let p = self.get(x, y);
                if p > 0.0 {
                    i += p * (p / (px[x] * py[y])).ln();
                }
            }
        }
        i.max(0.0)
    }

    /// H(X|Y) for rows X, columns Y.
    pub fn conditional_entropy_rows_given_cols(&self) -> f64 {
        (entropy_raw(self.probs()) - entropy_raw(&self.col_sums())).max(0.0)
    }
}

impl JointPmf3 {
    fn pair_entropy(&self, a: Axis, b: Axis) -> f64 {
        entropy_raw(self.marginal_pair(a, b).expect("distinct axes").probs())
    }

    /// H(U|Y).
    pub fn conditional_entropy_u_given_y(&self) -> f64 {
        (self.pair_entropy(Axis::U, Axis::Y) - entropy_raw(self.marginal(Axis::Y).probs())).max(0.0)
    }

    /// I(U;X|Y) = H(U,Y) + H(X,Y) − H(Y) − H(U,X,Y).
    pub fn conditional_mutual_information_ux_given_y(&self) -> f64 {
        let v = self.pair_entropy(Axis::U, Axis::Y) + self.pair_entropy(Axis::X, Axis::Y)
            - entropy_raw(self.marginal(Axis::Y).probs())
            - entropy_raw(self.probs());
        v.max(0.0)
    }

    /// I(A;B) between two distinct axes.
    pub fn mutual_information(&self, a: Axis, b: Axis) -> Result<f64> {
        Ok(self.marginal_pair(a, b)?.mutual_information())
    }
}

/// Every information quantity the exponent formulas draw from a U×X×Y joint.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct InfoSummary {
    pub h_u: f64,
    pub h_x: f64,
    pub h_y: f64,
    pub h_uxy: f64,
    pub h_u_given_y: f64,
    pub i_xy: f64,
    pub i_ux: f64,
    pub i_uy: f64,
    pub i_ux_given_y: f64,
}

pub fn info_summary(joint: &JointPmf3) -> InfoSummary {
    InfoSummary {
        h_u: entropy_raw(joint.marginal(Axis::U).probs()),
        h_x: entropy_raw(joint.marginal(Axis::X).probs()),
        h_y: entropy_raw(joint.marginal(Axis::Y).probs()),
        h_uxy: entropy_raw(joint.probs()),
        h_u_given_y: joint.conditional_entropy_u_given_y(),
        i_xy: joint.marginal_xy().mutual_information(),
        i_ux: joint.marginal_ux().mutual_information(),
        i_uy: joint.marginal_uy().mutual_information(),
        i_ux_given_y: joint.conditional_mutual_information_ux_given_y(),
    }
}
