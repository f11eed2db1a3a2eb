//! Linearised receding-horizon control around a drift equilibrium.

mod controller;
mod linear;
mod qp;

pub use controller::{condense, solve_mpc, solve_mpc_warm, CondensedMpc, MpcConfig, MpcSolution};
pub use linear::{
    augment, continuous_jacobians, linearize, linearize_with, AugmentedModel, FdScheme, LinearModel, Matrix5,
    Matrix5x2,
};
pub use qp::{KktResiduals, QpProblem, QpSettings, QpSolution};
