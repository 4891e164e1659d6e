use serde::Serialize;

use super::pmf::{EmpiricalType, Pmf, MASS_TOL};
use crate::error::{Error, Result};

/// Slack absorbing floating-point error in typicality decisions.
const TYPICAL_SLACK: f64 = 1e-12;

/// A finite proxy for the probability simplex: a regular lattice plus anchor points.
#[derive(Debug, Clone, Serialize)]
pub struct SimplexGrid {
    resolution: f64,
    divisions: usize,
    points: Vec<Pmf>,
    /// `anchor_of[i]` is the index of the injected pmf that grid point `i` equals, if any.
    anchor_of: Vec<Option<usize>>,
}

/// All compositions of `total` into `parts` nonnegative parts, lexicographic order.
pub fn compositions(total: usize, parts: usize) -> Vec<Vec<usize>> {
    fn rec(total: usize, parts: usize, prefix: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if parts == 1 {
            prefix.push(total);
            out.push(prefix.clone());
            prefix.pop();
            return;
        }
        for first in (0..=total).rev() {
            prefix.push(first);
            rec(total - first, parts - 1, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    if parts > 0 {
        rec(total, parts, &mut Vec::with_capacity(parts), &mut out);
    }
    out
}

/// Binomial coefficient as f64, exact for the small arguments used here.
pub fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

impl SimplexGrid {
    /// Lattice `{c/N : Σc = N}` with `N = ⌈1/δ⌉`, so the spacing `1/N` is at most `δ`.
    pub fn new(alphabet_size: usize, delta: f64) -> Result<Self> {
        Self::with_anchors(alphabet_size, delta, &[])
    }

    /// Lattice plus `anchors`, injected exactly. A lattice point within
    /// `MASS_TOL` of an anchor is replaced by the anchor itself.
    pub fn with_anchors(alphabet_size: usize, delta: f64, anchors: &[Pmf]) -> Result<Self> {
        if alphabet_size == 0 {
            return Err(Error::invalid("simplex over an empty alphabet"));
        }
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::invalid(format!("grid resolution {delta} not in (0,1)")));
        }
        if anchors.iter().any(|a| a.len() != alphabet_size) {
            return Err(Error::invalid("anchor pmf size differs from the grid alphabet"));
        }
        let divisions = (1.0 / delta - 1e-9).ceil() as usize;
        let count = binomial(divisions + alphabet_size - 1, alphabet_size - 1);
        if count > 5e6 {
            return Err(Error::GuardExceeded(format!(
                "simplex grid with {count} points (|X|={alphabet_size}, δ={delta})"
            )));
        }
        let mut points: Vec<Pmf> = compositions(divisions, alphabet_size)
            .into_iter()
            .map(|c| {
                let probs = c.iter().map(|v| *v as f64 / divisions as f64).collect();
                Pmf::new(probs).expect("lattice points are pmfs")
            })
            .collect();
        let mut anchor_of = vec![None; points.len()];
        for (ai, a) in anchors.iter().enumerate() {
            match points.iter().position(|p| p.approx_eq(a, MASS_TOL)) {
                Some(i) => {
                    if anchor_of[i].is_none() {
                        points[i] = a.clone();
                        anchor_of[i] = Some(ai);
                    }
                }
                None => {
                    // repeated anchors map to their first occurrence
                    let dup = points
                        .iter()
                        .zip(&anchor_of)
                        .any(|(p, o)| o.is_some() && p.approx_eq(a, MASS_TOL));
                    if !dup {
                        points.push(a.clone());
                        anchor_of.push(Some(ai));
                    }
                }
            }
        }
        Ok(Self {
            resolution: delta,
            divisions,
            points,
            anchor_of,
        })
    }

    /// A "grid" consisting of the given pmfs only.
    pub fn from_points(points: Vec<Pmf>) -> Result<Self> {
        let n = points.first().map(Pmf::len).unwrap_or(0);
        if n == 0 || points.iter().any(|p| p.len() != n) {
            return Err(Error::invalid("grid points must share a nonempty alphabet"));
        }
        let anchor_of = (0..points.len()).map(Some).collect();
        Ok(Self {
            resolution: 1.0,
            divisions: 0,
            points,
            anchor_of,
        })
    }

    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    /// Lattice spacing `1/N` actually used (0 for point-set grids).
    pub fn spacing(&self) -> f64 {
        if self.divisions == 0 {
            0.0
        } else {
            1.0 / self.divisions as f64
        }
    }

    pub fn points(&self) -> &[Pmf] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn anchor_of(&self, i: usize) -> Option<usize> {
        self.anchor_of[i]
    }

    /// Number of plain lattice points (excluding injected anchors that fell off-lattice).
    pub fn lattice_len(&self) -> usize {
        binomial(
            self.divisions + self.points[0].len() - 1,
            self.points[0].len() - 1,
        ) as usize
    }
}

/// L∞ typicality: `‖t/n − p‖∞ ≤ μ`.
pub fn is_typical(t: &EmpiricalType, p: &Pmf, mu: f64) -> Result<bool> {
    if t.counts().len() != p.len() {
        return Err(Error::invalid("type and pmf alphabets differ"));
    }
    if !(mu > 0.0) {
        return Err(Error::invalid(format!("typicality radius {mu} must be positive")));
    }
    Ok(t.to_pmf()?.linf_distance(p) <= mu + TYPICAL_SLACK)
}

/// Typicality test on raw counts, used on hot paths.
#[inline]
pub(crate) fn counts_typical(counts: &[u32], n: u64, p: &[f64], mu: f64) -> bool {
    let nf = n as f64;
    counts
        .iter()
        .zip(p)
        .all(|(c, q)| (*c as f64 / nf - q).abs() <= mu + TYPICAL_SLACK)
}
