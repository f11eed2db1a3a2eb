//! Drift-vehicle path tracking with a linearised MPC, adaptive radius and
//! steering laws, and a Bayesian-optimisation tuner for the upper layer.

pub mod bo;
pub mod equilibrium;
pub mod error;
pub mod mpc;
pub mod path;
pub mod sim;
pub mod tracking;
pub mod vehicle;

pub use error::{Error, Result};
