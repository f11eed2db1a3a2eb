//! Closed-loop episodes, tuning runs and comparison reports.

mod episode;
mod report;
mod scenario;
mod tune;

pub use episode::{
    evaluate_theta, hold_equilibrium, initial_condition, run_episode, run_on_path, EpisodeFailure, EpisodeTrace,
    MetricsReport, TraceRow, MAX_DEP_FAILURE_SHARE, MAX_LATERAL_ERROR, SPEED_RANGE, TRACE_HEADER,
};
pub use scenario::{Mode, PathSpec, PptConfig, Scenario, Theta, DEFAULT_STEER_GAIN};
pub use report::{collect_traces, compare, render_table, write_bundle, write_metrics_csv, ReportRow, METRICS_HEADER};
pub use tune::{free_indices, tune, TuneOutcome, THETA_NAMES};
