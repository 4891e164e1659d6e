//! Fixtures shared by the benchmarks.

use mdht_core::{ConditionalPmf, JointPmf2, JointPmf3, Pmf};

/// A fixed, strictly positive 3×3 reference with mismatched target marginals.
pub fn two_marginal_instance() -> (JointPmf2, Pmf, Pmf) {
    let q = JointPmf2::new(3, 3, vec![0.05, 0.12, 0.08, 0.15, 0.1, 0.05, 0.2, 0.1, 0.15]).unwrap();
    let px = Pmf::new(vec![0.5, 0.3, 0.2]).unwrap();
    let py = Pmf::new(vec![0.2, 0.2, 0.6]).unwrap();
    (q, px, py)
}

/// Reference and target tensors over `U×X×Y` built from two binary joints
/// through the same auxiliary channel.
pub fn three_way_instance() -> (JointPmf3, JointPmf3) {
    let ch = ConditionalPmf::new(vec![Pmf::new(vec![0.9, 0.1]).unwrap(), Pmf::new(vec![0.2, 0.8]).unwrap()]).unwrap();
    let a = JointPmf2::new(2, 2, vec![0.30, 0.23, 0.27, 0.20]).unwrap();
    let b = JointPmf2::new(2, 2, vec![0.14, 0.29, 0.31, 0.26]).unwrap();
    (mdht_core::prob::compose(&a, &ch).unwrap(), mdht_core::prob::compose(&b, &ch).unwrap())
}
