//! Hidden dense community detection on sparse random graphs.
//!
//! The crate covers the whole pipeline of the planted dense subset problem:
//!
//! * [`model`] and [`graph`]: problem parameters, graph sampling with a
//!   planted set, the success-probability metric and the plain-text graph
//!   format.
//! * [`bp`]: synchronous belief propagation on a sampled graph.
//! * [`cavity`]: population dynamics for the distributional cavity recursion,
//!   Bethe free energy and Nishimori diagnostics.
//! * [`large_degree`]: the scalar Gaussian theory (`mu = lambda F(mu; kappa)`)
//!   and the resulting phase diagram.
//! * [`oracles`]: exhaustive search and exact enumeration on tiny instances.
//!
//! All logarithms are natural logarithms.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bp;
pub mod cavity;
pub mod error;
pub mod graph;
pub mod kernel;
pub mod large_degree;
pub mod model;
pub mod oracles;
mod parallel;
pub mod quadrature;
pub mod seed;

pub use bp::{BpConfig, InitMode, MessageState, ThresholdRule};
pub use cavity::{CavityCurve, CavityCurvePoint, Population, PopulationConfig, Reweighting};
pub use error::{Error, Result};
pub use graph::{MembershipMode, PlantedGraph};
pub use kernel::KernelParams;
pub use large_degree::{MuFixedPoints, PhaseBoundaries};
pub use model::ModelParams;
pub use oracles::ExhaustiveResult;

/// Version string embedded in experiment outputs.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
