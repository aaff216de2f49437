//! Dynamics and geometric control of a quadrotor carrying a multi-link
//! flexible tether.

pub mod cli;
pub mod control;
pub mod error;
pub mod flexible_control;
pub mod integrator;
pub mod lqr;
pub mod manifold;
pub mod model;
pub mod report;
pub mod scenario;
pub mod taut_control;
pub mod verify;

pub use error::{Error, Result};
