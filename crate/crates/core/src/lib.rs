//! Finite-dimensional feedback stabilization of the original Burgers system
//! (a viscous Burgers equation coupled to a mean-flow scalar) and of the
//! Burgers equation with nonlocal cubic damping.
//!
//! The crate integrates master/follower pairs of these systems, evaluates the
//! closed-form certificate constants that guarantee synchronization of the
//! follower at a prescribed exponential rate, and measures the rate actually
//! achieved.

// `!(x > y)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod basis;
pub mod certificates;
pub mod config;
pub mod controllers;
pub mod dynamics;
pub mod error;
pub mod tridiag;

pub use analysis::{Channel, Quantity, RateFit, Trace, Verdict};
pub use basis::{
    eigenpair, eigenvalue, h1_seminorm, l2_inner, GridField, GridSpec, VolumePartition,
};
pub use certificates::{
    BnnFamily, BnnInputs, CertificateLedger, Claim, InequalityConstants, ObeTarget, Plan,
};
pub use config::{run, RunConfig, RunOutcome};
pub use controllers::{Controller, ControllerFamily, ControllerSpec};
pub use dynamics::{
    PhysicalParams, Scenario, Scheme, Simulation, SourceTerm, StepperConfig, System,
};
pub use error::{Error, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
