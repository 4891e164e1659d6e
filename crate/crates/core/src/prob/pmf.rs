use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on total mass for every probability table.
pub const MASS_TOL: f64 = 1e-12;

/// Common view over the probability tables of this module.
///
/// Values are stored row-major in the order of `shape()`.
pub trait ProbTable {
    fn shape(&self) -> Vec<usize>;
    fn values(&self) -> &[f64];
}

fn check_mass(values: &[f64], what: &str) -> Result<()> {
    if values.is_empty() {
        return Err(Error::validation(format!("{what}: empty alphabet")));
    }
    if let Some((i, v)) = values
        .iter()
        .enumerate()
        .find(|(_, v)| !v.is_finite() || **v < 0.0)
    {
        return Err(Error::validation(format!(
            "{what}: entry {i} is {v}, expected a finite nonnegative number"
        )));
    }
    let total: f64 = values.iter().sum();
    if (total - 1.0).abs() > MASS_TOL {
        return Err(Error::validation(format!(
            "{what}: total mass {total:.15} differs from 1"
        )));
    }
    Ok(())
}

/// Normalizes nonnegative weights in place; fails on an all-zero vector.
pub(crate) fn normalize(values: &mut [f64]) -> Result<()> {
    let total: f64 = values.iter().sum();
    if !(total > 0.0) || !total.is_finite() {
        return Err(Error::invalid("cannot normalize weights with zero mass"));
    }
    values.iter_mut().for_each(|v| *v /= total);
    Ok(())
}

/// A pmf over the alphabet `0..len`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pmf {
    probs: Vec<f64>,
}

impl Pmf {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        check_mass(&probs, "pmf")?;
        Ok(Self { probs })
    }

    /// Builds a pmf from nonnegative weights, rescaling them to unit mass.
    pub fn from_weights(mut weights: Vec<f64>) -> Result<Self> {
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::invalid("weights must be finite and nonnegative"));
        }
        normalize(&mut weights)?;
        Ok(Self { probs: weights })
    }

    pub fn uniform(n: usize) -> Self {
        assert!(n > 0, "uniform pmf over an empty alphabet");
        Self {
            probs: vec![1.0 / n as f64; n],
        }
    }

    pub fn point(n: usize, i: usize) -> Self {
        assert!(i < n);
        let mut probs = vec![0.0; n];
        probs[i] = 1.0;
        Self { probs }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn get(&self, i: usize) -> f64 {
        self.probs[i]
    }

    pub fn linf_distance(&self, other: &Pmf) -> f64 {
        debug_assert_eq!(self.len(), other.len());
        self.probs
            .iter()
            .zip(&other.probs)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn approx_eq(&self, other: &Pmf, tol: f64) -> bool {
        self.len() == other.len() && self.linf_distance(other) <= tol
    }

    /// Product pmf `self × other` as a joint over (self, other).
    pub fn product(&self, other: &Pmf) -> JointPmf2 {
        let mut probs = Vec::with_capacity(self.len() * other.len());
        for a in &self.probs {
            for b in &other.probs {
                probs.push(a * b);
            }
        }
        JointPmf2 {
            rows: self.len(),
            cols: other.len(),
            probs,
        }
    }
}

impl ProbTable for Pmf {
    fn shape(&self) -> Vec<usize> {
        vec![self.probs.len()]
    }
    fn values(&self) -> &[f64] {
        &self.probs
    }
}

/// A joint pmf over X×Y stored row-major (`x * cols + y`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointPmf2 {
    rows: usize,
    cols: usize,
    probs: Vec<f64>,
}

impl JointPmf2 {
    pub fn new(rows: usize, cols: usize, probs: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 || probs.len() != rows * cols {
            return Err(Error::validation(format!(
                "joint pmf: {} entries do not fit a {rows}x{cols} table",
                probs.len()
            )));
        }
        check_mass(&probs, "joint pmf")?;
        Ok(Self { rows, cols, probs })
    }

    /// Skips the mass check; callers guarantee a normalized table.
    pub(crate) fn from_raw(rows: usize, cols: usize, probs: Vec<f64>) -> Self {
        debug_assert_eq!(probs.len(), rows * cols);
        Self { rows, cols, probs }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.probs[x * self.cols + y]
    }

    pub fn row_sums(&self) -> Vec<f64> {
        self.probs.chunks(self.cols).map(|r| r.iter().sum()).collect()
    }

    pub fn col_sums(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.cols];
        for row in self.probs.chunks(self.cols) {
            for (o, v) in out.iter_mut().zip(row) {
                *o += v;
            }
        }
        out
    }

    pub fn marginal_x(&self) -> Pmf {
        Pmf {
            probs: self.row_sums(),
        }
    }

    pub fn marginal_y(&self) -> Pmf {
        Pmf {
            probs: self.col_sums(),
        }
    }

    pub fn transpose(&self) -> JointPmf2 {
        let mut probs = vec![0.0; self.probs.len()];
        for x in 0..self.rows {
            for y in 0..self.cols {
                probs[y * self.rows + x] = self.probs[x * self.cols + y];
            }
        }
        JointPmf2 {
            rows: self.cols,
            cols: self.rows,
            probs,
        }
    }

    pub fn linf_distance(&self, other: &JointPmf2) -> f64 {
        self.probs
            .iter()
            .zip(&other.probs)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn is_strictly_positive(&self) -> bool {
        self.probs.iter().all(|p| *p > 0.0)
    }

    /// True when `self` puts mass only where `reference` does.
    pub fn absolutely_continuous_wrt(&self, reference: &JointPmf2) -> bool {
        self.probs
            .iter()
            .zip(&reference.probs)
            .all(|(p, q)| *p == 0.0 || *q > 0.0)
    }
}

impl ProbTable for JointPmf2 {
    fn shape(&self) -> Vec<usize> {
        vec![self.rows, self.cols]
    }
    fn values(&self) -> &[f64] {
        &self.probs
    }
}

/// Axis of a [`JointPmf3`] over U×X×Y.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Axis {
    U,
    X,
    Y,
}

/// A joint pmf over U×X×Y, index `(u * nx + x) * ny + y`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointPmf3 {
    nu: usize,
    nx: usize,
    ny: usize,
    probs: Vec<f64>,
}

impl JointPmf3 {
    pub fn new(nu: usize, nx: usize, ny: usize, probs: Vec<f64>) -> Result<Self> {
        if nu == 0 || nx == 0 || ny == 0 || probs.len() != nu * nx * ny {
            return Err(Error::validation(format!(
                "joint pmf: {} entries do not fit a {nu}x{nx}x{ny} tensor",
                probs.len()
            )));
        }
        check_mass(&probs, "joint pmf")?;
        Ok(Self { nu, nx, ny, probs })
    }

    pub(crate) fn from_raw(nu: usize, nx: usize, ny: usize, probs: Vec<f64>) -> Self {
        debug_assert_eq!(probs.len(), nu * nx * ny);
        Self { nu, nx, ny, probs }
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.nu, self.nx, self.ny)
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    #[inline]
    pub fn index(&self, u: usize, x: usize, y: usize) -> usize {
        (u * self.nx + x) * self.ny + y
    }

    pub fn get(&self, u: usize, x: usize, y: usize) -> f64 {
        self.probs[self.index(u, x, y)]
    }

    fn size(&self, axis: Axis) -> usize {
        match axis {
            Axis::U => self.nu,
            Axis::X => self.nx,
            Axis::Y => self.ny,
        }
    }

    fn coord(u: usize, x: usize, y: usize, axis: Axis) -> usize {
        match axis {
            Axis::U => u,
            Axis::X => x,
            Axis::Y => y,
        }
    }

    /// Single-axis marginal.
    pub fn marginal(&self, axis: Axis) -> Pmf {
        let mut out = vec![0.0; self.size(axis)];
        for u in 0..self.nu {
            for x in 0..self.nx {
                for y in 0..self.ny {
                    out[Self::coord(u, x, y, axis)] += self.get(u, x, y);
                }
            }
        }
        Pmf { probs: out }
    }

    /// Pairwise marginal with `rows` as the first index and `cols` as the second.
    pub fn marginal_pair(&self, rows: Axis, cols: Axis) -> Result<JointPmf2> {
        if rows == cols {
            return Err(Error::invalid(format!(
                "marginal over repeated axis {rows:?}"
            )));
        }
        let (nr, nc) = (self.size(rows), self.size(cols));
        let mut out = vec![0.0; nr * nc];
        for u in 0..self.nu {
            for x in 0..self.nx {
                for y in 0..self.ny {
                    let r = Self::coord(u, x, y, rows);
                    let c = Self::coord(u, x, y, cols);
                    out[r * nc + c] += self.get(u, x, y);
                }
            }
        }
        Ok(JointPmf2::from_raw(nr, nc, out))
    }

    pub fn marginal_ux(&self) -> JointPmf2 {
        self.marginal_pair(Axis::U, Axis::X).expect("distinct axes")
    }

    pub fn marginal_uy(&self) -> JointPmf2 {
        self.marginal_pair(Axis::U, Axis::Y).expect("distinct axes")
    }

    pub fn marginal_xy(&self) -> JointPmf2 {
        self.marginal_pair(Axis::X, Axis::Y).expect("distinct axes")
    }
}

impl ProbTable for JointPmf3 {
    fn shape(&self) -> Vec<usize> {
        vec![self.nu, self.nx, self.ny]
    }
    fn values(&self) -> &[f64] {
        &self.probs
    }
}

/// Marginalizes a U×X×Y table onto the listed axes, in the listed order.
///
/// Two axes give a [`JointPmf2`], one axis a [`Pmf`].
pub fn marginalize(joint: &JointPmf3, axes: &[Axis]) -> Result<Marginal> {
    match axes {
        [a] => Ok(Marginal::One(joint.marginal(*a))),
        [a, b] => joint.marginal_pair(*a, *b).map(Marginal::Two),
        _ => Err(Error::invalid(format!(
            "marginalize expects one or two axes, got {axes:?}"
        ))),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Marginal {
    One(Pmf),
    Two(JointPmf2),
}

/// A channel U|X: one pmf over U for every input symbol x.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionalPmf {
    rows: Vec<Pmf>,
}

impl ConditionalPmf {
    pub fn new(rows: Vec<Pmf>) -> Result<Self> {
        let first = rows
            .first()
            .ok_or_else(|| Error::validation("channel with no input symbols"))?
            .len();
        if rows.iter().any(|r| r.len() != first) {
            return Err(Error::validation("channel rows have different output sizes"));
        }
        Ok(Self { rows })
    }

    /// Deterministic single-letter output (|U| = 1).
    pub fn constant(nx: usize) -> Self {
        Self {
            rows: vec![Pmf::point(1, 0); nx],
        }
    }

    /// U = X.
    pub fn identity(n: usize) -> Self {
        Self {
            rows: (0..n).map(|x| Pmf::point(n, x)).collect(),
        }
    }

    pub fn input_size(&self) -> usize {
        self.rows.len()
    }

    pub fn output_size(&self) -> usize {
        self.rows[0].len()
    }

    pub fn rows(&self) -> &[Pmf] {
        &self.rows
    }

    pub fn prob(&self, u: usize, x: usize) -> f64 {
        self.rows[x].get(u)
    }

    /// Row-major flattening `[x][u]`, the serialized form.
    pub fn to_row_major(&self) -> Vec<f64> {
        self.rows.iter().flat_map(|r| r.probs().iter().copied()).collect()
    }
}

/// Joint `pxy(x, y) · channel(u | x)` over U×X×Y.
pub fn compose(pxy: &JointPmf2, channel: &ConditionalPmf) -> Result<JointPmf3> {
    if channel.input_size() != pxy.rows() {
        return Err(Error::invalid(format!(
            "channel expects |X|={}, joint has |X|={}",
            channel.input_size(),
            pxy.rows()
        )));
    }
    let (nu, nx, ny) = (channel.output_size(), pxy.rows(), pxy.cols());
    let mut probs = vec![0.0; nu * nx * ny];
    for u in 0..nu {
        for x in 0..nx {
            let w = channel.prob(u, x);
            for y in 0..ny {
                probs[(u * nx + x) * ny + y] = pxy.get(x, y) * w;
            }
        }
    }
    Ok(JointPmf3::from_raw(nu, nx, ny, probs))
}

/// Counts of a sequence over a finite alphabet.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EmpiricalType {
    counts: Vec<u64>,
    n: u64,
}

impl EmpiricalType {
    pub fn new(counts: Vec<u64>) -> Result<Self> {
        if counts.is_empty() {
            return Err(Error::invalid("type over an empty alphabet"));
        }
        let n = counts.iter().sum();
        Ok(Self { counts, n })
    }

    pub fn from_sequence(seq: &[usize], alphabet: usize) -> Result<Self> {
        let mut counts = vec![0u64; alphabet];
        for &s in seq {
            *counts
                .get_mut(s)
                .ok_or_else(|| Error::invalid(format!("symbol {s} outside alphabet {alphabet}")))? +=
                1;
        }
        Self::new(counts)
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn to_pmf(&self) -> Result<Pmf> {
        if self.n == 0 {
            return Err(Error::invalid("type of an empty sequence"));
        }
        Ok(Pmf {
            probs: self
                .counts
                .iter()
                .map(|c| *c as f64 / self.n as f64)
                .collect(),
        })
    }
}
