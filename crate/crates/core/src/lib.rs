//! Exponential-integrator sampling for diffusion bridges.
//!
//! * [`schedule`]: VE/VP noise schedules and the half-log-SNR calculus.
//! * [`bridge`]: scores, probability-flow ODE and SDE right-hand sides.
//! * [`solvers`]: DBMSolver and baseline samplers.
//! * [`models`]: analytic denoisers with exact posterior means.
//! * [`harness`]: quadrature and fine-step oracles, convergence studies, metrics.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod bridge;
pub mod error;
pub mod harness;
pub mod models;
pub mod noise;
pub mod schedule;
pub mod solvers;

pub use bridge::{BridgeCoeffs, BridgeProblem, CountedDenoiser, Denoiser, State};
pub use error::{Error, Result};
pub use schedule::{make_grid, rho, GridScheme, ScheduleKind, ScheduleParams, TimeGrid};
