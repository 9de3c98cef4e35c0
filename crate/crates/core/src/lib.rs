//! Three-phase unbalanced power flow for radial low-voltage feeders with
//! phase-switching devices (PSDs).
//!
//! * [`model`]: feeder, customers, phase assignments and structural checks.
//! * [`sweep`]: nonlinear backward/forward sweep power flow for a fixed assignment.
//! * [`linearize`]: affine surrogates of `1/V*` (least squares and complex expansion).
//! * [`milp`]: linearized power flow and the exact phase-assignment search.
//! * [`restore`]: the feasibility-restoration pipeline and solution comparison.
//! * [`synth`]: seeded synthetic feeders used by tests, benches and demos.

pub mod error;
pub mod linearize;
pub mod milp;
pub mod model;
pub mod restore;
pub mod sweep;
pub mod synth;

pub use error::{Error, Result};
pub use model::{
    Assignment, Customer, CustomerId, LineSegment, Network, NodeId, Phase, PhaseMatrix, Phasor,
};
