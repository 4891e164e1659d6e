//! Error-exponent regions for distributed hypothesis testing with one sensor
//! and several detectors.
//!
//! The sensor observes `X^n`, detector `k` observes `Y_k^n`, and under
//! hypothesis `m` the pair `(X, Y_k)` is i.i.d. `P^(m)_{XY_k}`. This crate
//! computes achievable type-II exponent vectors for zero-rate and
//! positive-rate communication, simple and composite hypotheses, and checks
//! them against exact and simulated finite-blocklength error probabilities.

pub mod composite;
pub mod coupling;
pub mod error;
pub mod finite;
pub mod frontier;
pub mod model;
pub mod positive_rate;
pub mod prob;
pub mod zero_rate;

pub use composite::CompositeSpec;
pub use coupling::{Method, SolverReport};
pub use error::{Error, Result};
pub use finite::{ErrorEstimates, SchemeConfig, SchemeMode};
pub use frontier::{ExponentPoint, Provenance, RegionFrontier};
pub use model::HypothesisModel;
pub use positive_rate::UChannelTuple;
pub use prob::{ConditionalPmf, JointPmf2, JointPmf3, Pmf};
pub use zero_rate::Partition;
