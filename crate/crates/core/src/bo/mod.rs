//! Gaussian-process Bayesian optimisation of the tracking-law parameters.

mod acquisition;
mod cost;
mod gp;
mod kernel;
mod qmc;
mod tuner;

pub use acquisition::{acquire_next, ei_at, expected_improvement, CANDIDATES, POLISH_STARTS};
pub use cost::{barrier, episode_cost, increment, CostConfig, COST_EPS};
pub use gp::{
    log_marginal_likelihood, GpDataset, GpHyper, GpModel, HyperStrategy, ThetaBounds, FLAT_LENGTH_SCALE, VARIANCE_FLOOR,
};
pub use kernel::{matern52, matern52_rho, scaled_distance};
pub use qmc::ScrambledHalton;
pub use tuner::{bo_loop, write_history_csv, write_timing_csv, BoOutcome, BoSettings, HistoryRecord};
