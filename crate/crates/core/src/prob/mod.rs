//! Finite-alphabet probability primitives.

mod grid;
mod info;
mod pmf;

pub use grid::{binomial, compositions, is_typical, SimplexGrid};
pub(crate) use grid::counts_typical;
pub use info::{entropy, entropy_raw, info_summary, kl_divergence, kl_raw, InfoSummary};
pub use pmf::{
    compose, marginalize, Axis, ConditionalPmf, EmpiricalType, JointPmf2, JointPmf3, Marginal,
    Pmf, ProbTable, MASS_TOL,
};
