//! Optimal timing of a strict quarantine for an SIR epidemic under an L1
//! budget on restrictions and a cap on the infected fraction.
//!
//! The solvers in [`unconstrained`] and [`constrained`] compute the optimal
//! switching times semi-analytically; [`oracle`] recovers them by brute force
//! and [`pmp`] checks them against the adjoint system.

// `!(a > b)` is used on purpose so that NaN fails validation
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod constrained;
pub mod dynamics;
pub mod error;
pub mod final_size;
pub mod oracle;
pub mod params;
pub mod pmp;
pub mod roots;
pub mod runner;
pub mod unconstrained;

pub use constrained::{solve_constrained, CaseLabel, ConstrainedPolicy, RegionGeometry};
pub use dynamics::{integrate, ControlSchedule, ControlSegment, EventKind, SegmentKind, Trajectory};
pub use error::{Error, Result};
pub use final_size::{lambert_w0, x_infinity, FinalSizeResult};
pub use params::{EpidemicParams, SolverOptions};
pub use unconstrained::{solve_unconstrained, UnconstrainedCase, UnconstrainedPolicy};
