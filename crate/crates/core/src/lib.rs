//! Offline energy-minimal resource allocation for wireless powered
//! multiuser mobile edge computing.
//!
//! An access point (AP) beams RF energy to `K` users over `N` slots; each
//! user executes its arriving task bits locally or offloads them to the
//! AP's server, which must finish all work by the deadline. The joint
//! solver minimizes the AP's total energy through Lagrange duality: closed
//! form subproblem minimizers, an ellipsoid method on the dual, and a
//! barrier-method SDP to recover the energy beamforming covariances. A
//! primal barrier solve refines the recovered allocation, and its
//! multipliers certify the reported duality gap.

#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod allocate;
pub mod baselines;
pub mod cli;
pub mod dual;
pub mod ellipsoid;
pub mod energy;
pub mod error;
pub mod experiments;
pub mod interior;
pub mod linalg;
pub mod model;
pub mod oracle;
pub mod sdp;
pub mod solver;
pub mod staircase;
mod serde_util;

pub use error::{Error, Result};
pub use solver::{solve, Scheme, SolveReport, SolverOptions};
pub use model::{Allocation, BitAllocation, ChannelRealization, DualPoint, Instance, SystemParams, TaskArrivals};
