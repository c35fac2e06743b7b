//! Simulator and optimizer for an IRS-aided multi-tier hybrid computing
//! network: over-the-air computation for system monitoring running next to
//! NOMA task offloading from MEC users to an edge server, which can forward
//! work to a cloud server over a second IRS-assisted hop.
//!
//! The crate is organised bottom-up:
//!
//! - [`sysmodel`]: domain types, scenario generation and exact evaluation of
//!   every rate, MSE and power expression.
//! - [`convexcore`]: a small conic program description backed by an
//!   interior-point solver.
//! - [`subproblems`]: SCA surrogates and the block solvers (transceiver and
//!   CPU block, the two IRS blocks, time allocation, feasibility restoration,
//!   phase quantization).
//! - [`orchestrator`]: the outer alternating-optimization loop and the
//!   comparison schemes.

// Links the system OpenBLAS used by the solver's PSD cones.
extern crate openblas_src;

pub mod convexcore;
pub mod error;
pub mod linalg;
pub mod orchestrator;
pub mod subproblems;
pub mod sysmodel;

pub use error::{Error, Result};
