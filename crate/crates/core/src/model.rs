//! Hypothesis models: `M` hypotheses, `K` detectors, one pairwise joint per (hypothesis, detector).

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prob::{JointPmf2, Pmf, MASS_TOL};

/// Pairwise joints `P^(m)_{XY_k}` together with type-I ceilings `ε_k`.
///
/// Hypotheses and detectors are 0-based in the API and 1-based in every
/// user-facing message and file.
#[derive(Debug, Clone, PartialEq)]
pub struct HypothesisModel {
    x_size: usize,
    y_sizes: Vec<usize>,
    epsilon: Vec<f64>,
    /// `joints[m][k]`.
    joints: Vec<Vec<JointPmf2>>,
}

/// Source marginals grouped by exact equality.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MarginalGroups {
    /// Distinct `P_X` in order of first appearance.
    pub marginals: Vec<Pmf>,
    /// `group_of[m]` indexes `marginals`.
    pub group_of: Vec<usize>,
}

impl MarginalGroups {
    pub fn len(&self) -> usize {
        self.marginals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.marginals.is_empty()
    }

    pub fn members(&self, g: usize) -> Vec<usize> {
        (0..self.group_of.len()).filter(|&m| self.group_of[m] == g).collect()
    }
}

impl HypothesisModel {
    /// Builds and validates a model from `joints[m][k]`.
    ///
    /// Checks: masses, shapes, one source marginal per hypothesis across
    /// detectors, pairwise-distinct joints per detector, and
    /// `P^(m)_{XY_k} ≪ P^(k)_{XY_k}` for every detector with a target hypothesis.
    pub fn new(joints: Vec<Vec<JointPmf2>>, epsilon: Vec<f64>) -> Result<Self> {
        let m_count = joints.len();
        if m_count < 2 {
            return Err(Error::validation(format!("need at least 2 hypotheses, got {m_count}")));
        }
        let k_count = epsilon.len();
        if k_count == 0 {
            return Err(Error::validation("need at least one detector"));
        }
        if let Some(e) = epsilon.iter().find(|e| !(**e > 0.0 && **e < 1.0)) {
            return Err(Error::validation(format!("epsilon {e} not in (0,1)")));
        }
        for (m, row) in joints.iter().enumerate() {
            if row.len() != k_count {
                return Err(Error::validation(format!(
                    "hypothesis m={} has {} joints, expected K={k_count}",
                    m + 1,
                    row.len()
                )));
            }
        }
        let x_size = joints[0][0].rows();
        let y_sizes: Vec<usize> = joints[0].iter().map(JointPmf2::cols).collect();
        for (m, row) in joints.iter().enumerate() {
            for (k, j) in row.iter().enumerate() {
                if j.rows() != x_size || j.cols() != y_sizes[k] {
                    return Err(Error::validation(format!(
                        "joint (m={},k={}) is {}x{}, expected {}x{}",
                        m + 1,
                        k + 1,
                        j.rows(),
                        j.cols(),
                        x_size,
                        y_sizes[k]
                    )));
                }
            }
        }
        for (m, row) in joints.iter().enumerate() {
            let px = row[0].marginal_x();
            for (k, j) in row.iter().enumerate().skip(1) {
                if j.marginal_x().linf_distance(&px) > MASS_TOL {
                    return Err(Error::validation(format!(
                        "inconsistent P_X for m={} between detectors k=1 and k={}",
                        m + 1,
                        k + 1
                    )));
                }
            }
        }
        for k in 0..k_count {
            for m in 0..m_count {
                for m2 in m + 1..m_count {
                    if joints[m][k].linf_distance(&joints[m2][k]) <= MASS_TOL {
                        return Err(Error::validation(format!(
                            "duplicate joint (m={},m'={},k={})",
                            m + 1,
                            m2 + 1,
                            k + 1
                        )));
                    }
                }
            }
        }
        for k in 0..k_count.min(m_count) {
            for m in 0..m_count {
                if !joints[m][k].absolutely_continuous_wrt(&joints[k][k]) {
                    return Err(Error::validation(format!(
                        "absolute continuity violated: P^(m={})_XY{} not << P^(k={})_XY{}",
                        m + 1,
                        k + 1,
                        k + 1,
                        k + 1
                    )));
                }
            }
        }
        Ok(Self {
            x_size,
            y_sizes,
            epsilon,
            joints,
        })
    }

    /// The three-hypothesis, two-detector binary model used throughout the docs.
    ///
    /// Both detectors see the same joint. The fourth entry of the second
    /// table is the (1,1) cell, which makes it sum to one.
    pub fn example1() -> Self {
        let tables = [
            [0.30, 0.23, 0.27, 0.20],
            [0.14, 0.29, 0.31, 0.26],
            [0.52, 0.18, 0.23, 0.07],
        ];
        let joints = tables
            .iter()
            .map(|t| {
                let j = JointPmf2::new(2, 2, t.to_vec()).expect("table is a pmf");
                vec![j.clone(), j]
            })
            .collect();
        Self::new(joints, vec![0.2, 0.2]).expect("example model is valid")
    }

    pub fn hypotheses(&self) -> usize {
        self.joints.len()
    }

    pub fn detectors(&self) -> usize {
        self.epsilon.len()
    }

    pub fn x_size(&self) -> usize {
        self.x_size
    }

    pub fn y_size(&self, k: usize) -> usize {
        self.y_sizes[k]
    }

    pub fn y_sizes(&self) -> &[usize] {
        &self.y_sizes
    }

    pub fn epsilon(&self) -> &[f64] {
        &self.epsilon
    }

    pub fn joint(&self, m: usize, k: usize) -> &JointPmf2 {
        &self.joints[m][k]
    }

    pub fn marginal_x(&self, m: usize) -> Pmf {
        self.joints[m][0].marginal_x()
    }

    pub fn marginal_y(&self, m: usize, k: usize) -> Pmf {
        self.joints[m][k].marginal_y()
    }

    /// Distinct source marginals; `L` is `groups().len()`.
    pub fn groups(&self) -> MarginalGroups {
        let mut marginals: Vec<Pmf> = Vec::new();
        let mut group_of = Vec::with_capacity(self.hypotheses());
        for m in 0..self.hypotheses() {
            let px = self.marginal_x(m);
            match marginals.iter().position(|q| q.approx_eq(&px, MASS_TOL)) {
                Some(g) => group_of.push(g),
                None => {
                    group_of.push(marginals.len());
                    marginals.push(px);
                }
            }
        }
        MarginalGroups {
            marginals,
            group_of,
        }
    }

    /// Simple-hypothesis operations pair detector `k` with hypothesis `k`.
    pub fn require_simple(&self) -> Result<()> {
        if self.detectors() > self.hypotheses() {
            return Err(Error::invalid(format!(
                "simple testing needs K <= M (K={}, M={})",
                self.detectors(),
                self.hypotheses()
            )));
        }
        Ok(())
    }

    /// Extra conditions of the zero-rate results: every pair of joints at a
    /// detector differs in a marginal, and `P^(k)_{XY_k}` is strictly positive.
    pub fn check_zero_rate(&self) -> Result<()> {
        self.require_simple()?;
        for k in 0..self.detectors() {
            for m in 0..self.hypotheses() {
                for m2 in m + 1..self.hypotheses() {
                    let same_x = self.marginal_x(m).linf_distance(&self.marginal_x(m2)) <= MASS_TOL;
                    let same_y =
                        self.marginal_y(m, k).linf_distance(&self.marginal_y(m2, k)) <= MASS_TOL;
                    if same_x && same_y {
                        return Err(Error::validation(format!(
                            "joints (m={},m'={},k={}) share both marginals",
                            m + 1,
                            m2 + 1,
                            k + 1
                        )));
                    }
                }
            }
            let target = &self.joints[k][k];
            if let Some(i) = target.probs().iter().position(|p| *p <= 0.0) {
                return Err(Error::validation(format!(
                    "P^(k={})_XY{} has a zero cell at (x={}, y={}); zero-rate exponents need it strictly positive",
                    k + 1,
                    k + 1,
                    i / target.cols() + 1,
                    i % target.cols() + 1
                )));
            }
        }
        Ok(())
    }

    /// Detector `k` alone, with hypotheses reordered so that `k` comes first.
    pub fn single_detector(&self, k: usize) -> Result<Self> {
        self.require_simple()?;
        if k >= self.detectors() {
            return Err(Error::invalid(format!("no detector k={}", k + 1)));
        }
        let order = std::iter::once(k).chain((0..self.hypotheses()).filter(|&m| m != k));
        let joints = order.map(|m| vec![self.joints[m][k].clone()]).collect();
        Self::new(joints, vec![self.epsilon[k]])
    }

    /// Sub-model on the listed hypotheses and detectors, in the given order.
    pub fn restrict(&self, hypotheses: &[usize], detectors: &[usize]) -> Result<Self> {
        if hypotheses.iter().any(|&m| m >= self.hypotheses())
            || detectors.iter().any(|&k| k >= self.detectors())
        {
            return Err(Error::invalid("restriction index out of range"));
        }
        let joints = hypotheses
            .iter()
            .map(|&m| detectors.iter().map(|&k| self.joints[m][k].clone()).collect())
            .collect();
        Self::new(joints, detectors.iter().map(|&k| self.epsilon[k]).collect())
    }

    pub fn to_file(&self) -> ModelFile {
        let joints = (0..self.hypotheses())
            .flat_map(|m| {
                (0..self.detectors()).map(move |k| JointEntry {
                    m: m + 1,
                    k: k + 1,
                    probs: self.joints[m][k].probs().iter().map(|v| format!("{v}")).collect(),
                })
            })
            .collect();
        ModelFile {
            m: self.hypotheses(),
            k: self.detectors(),
            x_size: self.x_size,
            y_sizes: self.y_sizes.clone(),
            epsilon: self.epsilon.iter().map(|v| format!("{v}")).collect(),
            joints,
        }
    }

    pub fn from_file(file: &ModelFile) -> Result<Self> {
        if file.y_sizes.len() != file.k || file.epsilon.len() != file.k {
            return Err(Error::validation(format!(
                "header says K={} but lists {} y sizes and {} epsilons",
                file.k,
                file.y_sizes.len(),
                file.epsilon.len()
            )));
        }
        let mut slots: Vec<Vec<Option<JointPmf2>>> = vec![vec![None; file.k]; file.m];
        for entry in &file.joints {
            if entry.m == 0 || entry.m > file.m || entry.k == 0 || entry.k > file.k {
                return Err(Error::validation(format!(
                    "joint (m={},k={}) outside M={} K={}",
                    entry.m, entry.k, file.m, file.k
                )));
            }
            let probs = entry
                .probs
                .iter()
                .map(|s| parse_number(s))
                .collect::<Result<Vec<f64>>>()?;
            let joint = JointPmf2::new(file.x_size, file.y_sizes[entry.k - 1], probs).map_err(|e| {
                Error::validation(format!("joint (m={},k={}): {e}", entry.m, entry.k))
            })?;
            let slot = &mut slots[entry.m - 1][entry.k - 1];
            if slot.is_some() {
                return Err(Error::validation(format!(
                    "joint (m={},k={}) listed twice",
                    entry.m, entry.k
                )));
            }
            *slot = Some(joint);
        }
        let mut joints = Vec::with_capacity(file.m);
        for (m, row) in slots.into_iter().enumerate() {
            let mut out = Vec::with_capacity(file.k);
            for (k, j) in row.into_iter().enumerate() {
                out.push(j.ok_or_else(|| {
                    Error::validation(format!("missing joint (m={},k={})", m + 1, k + 1))
                })?);
            }
            joints.push(out);
        }
        let epsilon = file
            .epsilon
            .iter()
            .map(|s| parse_number(s))
            .collect::<Result<Vec<f64>>>()?;
        Self::new(joints, epsilon)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref())
            .map_err(|e| Error::Io(format!("{}: {e}", path.as_ref().display())))?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ModelFile = serde_json::from_str(text)?;
        Self::from_file(&file)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_file()).expect("model file serializes")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json() + "\n")?;
        Ok(())
    }
}

fn parse_number(s: &str) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| Error::Parse(format!("not a decimal number: {s:?}")))
}

/// On-disk model: header plus one row-major table per (m, k), numbers as decimal strings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    #[serde(rename = "M")]
    pub m: usize,
    #[serde(rename = "K")]
    pub k: usize,
    pub x_size: usize,
    pub y_sizes: Vec<usize>,
    pub epsilon: Vec<String>,
    pub joints: Vec<JointEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JointEntry {
    pub m: usize,
    pub k: usize,
    pub probs: Vec<String>,
}
