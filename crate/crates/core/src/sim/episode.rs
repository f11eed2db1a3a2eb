use std::io::{Read, Write};

use nalgebra::{DVector, Vector5};
use serde::{Deserialize, Serialize};

use super::scenario::{Scenario, Theta};
use crate::bo::episode_cost;
use crate::equilibrium::{solve_dep, DriftEquilibrium};
use crate::error::Result;
use crate::mpc::{augment, linearize, solve_mpc_warm};
use crate::path::{tracking_errors_near, PathTable, MAX_PROJECTION_DISTANCE};
use crate::tracking::{apt_radius, clamp_radius, default_ppt_grid, ppt_radius, steer_feedback, AptParams};
use crate::vehicle::{integrate, ControlInput, Pose, VehicleParams, VehicleState};

/// Lateral error beyond which an episode is abandoned (m).
pub const MAX_LATERAL_ERROR: f64 = 10.0;
pub const SPEED_RANGE: (f64, f64) = (0.1, 40.0);
/// Largest tolerated share of steps whose equilibrium solve failed.
pub const MAX_DEP_FAILURE_SHARE: f64 = 0.2;

/// One control period of a closed-loop run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub t: f64,
    #[serde(rename = "X")]
    pub x: f64,
    #[serde(rename = "Y")]
    pub y: f64,
    pub phi: f64,
    #[serde(rename = "V")]
    pub v: f64,
    pub beta: f64,
    pub r: f64,
    pub delta_cmd: f64,
    #[serde(rename = "F_xr_cmd")]
    pub f_xr_cmd: f64,
    pub e: f64,
    pub d_phi: f64,
    pub d_psi: f64,
    pub e_la: f64,
    #[serde(rename = "R_eq")]
    pub r_eq_radius: f64,
    pub delta_eq_hat: f64,
    #[serde(rename = "V_eq")]
    pub v_eq: f64,
    pub beta_eq: f64,
    pub r_eq: f64,
    #[serde(rename = "F_xr_eq")]
    pub f_xr_eq: f64,
    pub mpc_cost: f64,
    pub dep_converged: bool,
    pub rate_active: bool,
    pub box_active: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeFailure {
    pub step: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeTrace {
    pub rows: Vec<TraceRow>,
    pub failure: Option<EpisodeFailure>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub rmse_e: f64,
    pub rmse_dpsi: f64,
    pub rmse_v: f64,
    pub rmse_beta: f64,
    pub rmse_r: f64,
    pub rmse_delta: f64,
    pub rmse_f: f64,
    pub max_abs_e: f64,
    pub cost: f64,
    pub completed: bool,
}

fn rms(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v * v, n + 1));
    if n == 0 {
        0.0
    } else {
        (sum / n as f64).sqrt()
    }
}

impl EpisodeTrace {
    pub fn completed(&self) -> bool {
        self.failure.is_none()
    }

    /// RMSEs against the per-step equilibrium references.
    pub fn metrics(&self, scenario: &Scenario) -> MetricsReport {
        let rows = &self.rows;
        let cost = if self.completed() {
            let e: Vec<f64> = rows.iter().map(|r| r.e).collect();
            let d: Vec<f64> = rows.iter().map(|r| r.d_psi).collect();
            episode_cost(&e, &d, &scenario.cost).unwrap_or(scenario.cost.j_fail)
        } else {
            scenario.cost.j_fail
        };
        MetricsReport {
            rmse_e: rms(rows.iter().map(|r| r.e)),
            rmse_dpsi: rms(rows.iter().map(|r| r.d_psi)),
            rmse_v: rms(rows.iter().map(|r| r.v - r.v_eq)),
            rmse_beta: rms(rows.iter().map(|r| r.beta - r.beta_eq)),
            rmse_r: rms(rows.iter().map(|r| r.r - r.r_eq)),
            rmse_delta: rms(rows.iter().map(|r| r.delta_cmd - r.delta_eq_hat)),
            rmse_f: rms(rows.iter().map(|r| r.f_xr_cmd - r.f_xr_eq)),
            max_abs_e: rows.iter().map(|r| r.e.abs()).fold(0.0, f64::max),
            cost,
            completed: self.completed(),
        }
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for row in &self.rows {
            w.serialize(row)?;
        }
        if self.rows.is_empty() {
            w.write_record(TRACE_HEADER)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(input);
        let rows = r.deserialize().collect::<std::result::Result<Vec<TraceRow>, _>>()?;
        Ok(Self { rows, failure: None })
    }
}

pub const TRACE_HEADER: [&str; 23] = [
    "t",
    "X",
    "Y",
    "phi",
    "V",
    "beta",
    "r",
    "delta_cmd",
    "F_xr_cmd",
    "e",
    "d_phi",
    "d_psi",
    "e_la",
    "R_eq",
    "delta_eq_hat",
    "V_eq",
    "beta_eq",
    "r_eq",
    "F_xr_eq",
    "mpc_cost",
    "dep_converged",
    "rate_active",
    "box_active",
];

/// Starting point on the path: the nominal equilibrium for the base steering
/// angle and the radius at the path origin, with the course along the tangent.
pub fn initial_condition(
    path: &PathTable,
    apt: &AptParams,
    model: &VehicleParams,
) -> Result<(VehicleState, Pose, DriftEquilibrium)> {
    let p0 = path.samples()[0];
    let radius = clamp_radius(if p0.kappa == 0.0 { f64::INFINITY } else { 1.0 / p0.kappa });
    let delta = radius.signum() * apt.delta_eq_base;
    let dep = solve_dep(delta, radius, model, None)?;
    let pose = Pose::new(p0.x, p0.y, p0.phi - dep.beta);
    Ok((dep.state(), pose, dep))
}

/// Equilibrium radius and steering for this step.
fn references(
    scenario: &Scenario,
    theta: &Theta,
    path: &PathTable,
    pose: &Pose,
    state: &VehicleState,
    te: &crate::path::TrackingErrors,
    grid: &[f64],
) -> Result<(f64, f64)> {
    let apt = AptParams { w_r: theta.w_r, w_e: theta.w_e, delta_eq_base: theta.delta_eq, ..scenario.apt };
    let radius = if scenario.mode.uses_apt() {
        apt_radius(te, &apt)
    } else {
        let n = scenario.ppt.horizon_pts.unwrap_or(scenario.mpc.n_p);
        let step = (state.v * scenario.mpc.dt).max(scenario.ppt.min_step);
        ppt_radius(pose, pose.phi + state.beta, path, te.s, step, n, grid)?
    };
    // Right-hand turns mirror the steering equilibrium.
    let sign = radius.signum();
    let delta = if scenario.mode.uses_apt() {
        let mirrored = AptParams { delta_eq_base: sign * theta.delta_eq, ..apt };
        steer_feedback(te, &mirrored, &scenario.limits)
    } else {
        (sign * theta.delta_eq).clamp(scenario.limits.delta_min, scenario.limits.delta_max)
    };
    Ok((radius, delta))
}

/// Runs one closed-loop episode. Control-level failures end the episode early
/// and are reported in the trace; configuration errors are returned.
pub fn run_episode(scenario: &Scenario, theta: Option<Theta>) -> Result<EpisodeTrace> {
    scenario.validate()?;
    let theta = scenario.resolve_theta(theta)?;
    let path = scenario.path.build()?;
    run_on_path(scenario, &theta, &path)
}

pub fn run_on_path(scenario: &Scenario, theta: &Theta, path: &PathTable) -> Result<EpisodeTrace> {
    let steps = scenario.steps();
    let dt = scenario.mpc.dt;
    let grid = default_ppt_grid();
    let (mut state, mut pose, mut dep) = initial_condition(path, &scenario.apt, &scenario.model)?;
    let mut u_prev = dep.input();
    let mut warm: Option<DVector<f64>> = None;
    let mut hint = 0usize;
    let mut dep_failures = 0usize;
    let mut rows = Vec::with_capacity(steps);

    let fail = |rows: Vec<TraceRow>, step: usize, reason: String| {
        Ok(EpisodeTrace { rows, failure: Some(EpisodeFailure { step, reason }) })
    };

    for k in 0..steps {
        let te = match tracking_errors_near(&pose, state.beta, path, scenario.apt.x_la, hint, MAX_PROJECTION_DISTANCE) {
            Ok(te) => te,
            Err(e) => return fail(rows, k, e.to_string()),
        };
        hint = te.index;
        if te.e.abs() > MAX_LATERAL_ERROR {
            return fail(rows, k, format!("lateral error {:.2} m", te.e));
        }

        let (radius, delta_hat) = references(scenario, theta, path, &pose, &state, &te, &grid)?;
        let converged = match solve_dep(delta_hat, radius, &scenario.model, Some(dep.seed())) {
            Ok(d) => {
                dep = d;
                true
            }
            Err(_) => {
                dep_failures += 1;
                false
            }
        };

        let model = augment(&linearize(&dep, &scenario.model, dt)?);
        let xi = Vector5::new(state.v, state.beta, state.r, u_prev.delta, u_prev.f_xr);
        let sol = match solve_mpc_warm(&xi, &dep, &model, &scenario.mpc, &scenario.limits, warm.as_ref()) {
            Ok(s) => s,
            Err(e) => return fail(rows, k, e.to_string()),
        };
        warm = Some(sol.u_stack.clone());

        rows.push(TraceRow {
            t: k as f64 * dt,
            x: pose.x,
            y: pose.y,
            phi: pose.phi,
            v: state.v,
            beta: state.beta,
            r: state.r,
            delta_cmd: sol.input.delta,
            f_xr_cmd: sol.input.f_xr,
            e: te.e,
            d_phi: te.d_phi,
            d_psi: te.d_psi,
            e_la: te.e_la,
            r_eq_radius: radius,
            delta_eq_hat: delta_hat,
            v_eq: dep.v,
            beta_eq: dep.beta,
            r_eq: dep.r,
            f_xr_eq: dep.f_xr,
            mpc_cost: sol.cost,
            dep_converged: converged,
            rate_active: sol.rate_active,
            box_active: sol.box_active,
        });

        let applied = saturate(sol.input, &scenario.plant);
        match integrate(state, pose, applied, &scenario.plant, dt, scenario.substeps) {
            Ok((s, p)) => {
                state = s;
                pose = p;
            }
            Err(e) => return fail(rows, k + 1, e.to_string()),
        }
        if !(SPEED_RANGE.0..=SPEED_RANGE.1).contains(&state.v) || !state.v.is_finite() {
            return fail(rows, k + 1, format!("speed {:.3} m/s left the admissible range", state.v));
        }
        u_prev = sol.input;
    }
    if dep_failures as f64 > MAX_DEP_FAILURE_SHARE * steps as f64 {
        return fail(rows, steps, format!("equilibrium solve failed on {dep_failures} of {steps} steps"));
    }
    Ok(EpisodeTrace { rows, failure: None })
}

/// The rear tire cannot transmit more longitudinal force than the friction
/// circle allows; larger commands spin the wheel at the limit.
fn saturate(u: ControlInput, plant: &VehicleParams) -> ControlInput {
    let limit = plant.rear_force_limit();
    ControlInput::new(u.delta, u.f_xr.clamp(-limit, limit))
}

/// Holds a fixed equilibrium with the MPC, starting from `start`. Returns the
/// drift state after each control period.
pub fn hold_equilibrium(
    dep: &DriftEquilibrium,
    start: VehicleState,
    plant: &VehicleParams,
    model: &VehicleParams,
    scenario: &Scenario,
    steps: usize,
) -> Result<Vec<VehicleState>> {
    let lin = augment(&linearize(dep, model, scenario.mpc.dt)?);
    let mut state = start;
    let mut pose = Pose::new(0.0, 0.0, 0.0);
    let mut u_prev = dep.input();
    let mut warm: Option<DVector<f64>> = None;
    let mut out = Vec::with_capacity(steps);
    for _ in 0..steps {
        let xi = Vector5::new(state.v, state.beta, state.r, u_prev.delta, u_prev.f_xr);
        let sol = solve_mpc_warm(&xi, dep, &lin, &scenario.mpc, &scenario.limits, warm.as_ref())?;
        (state, pose) = integrate(state, pose, saturate(sol.input, plant), plant, scenario.mpc.dt, scenario.substeps)?;
        warm = Some(sol.u_stack);
        u_prev = sol.input;
        out.push(state);
    }
    Ok(out)
}

/// Episode cost of `theta`, with failed episodes mapped to the failure cost.
pub fn evaluate_theta(scenario: &Scenario, path: &PathTable, theta: &Theta) -> Result<f64> {
    let trace = run_on_path(scenario, theta, path)?;
    Ok(trace.metrics(scenario).cost)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::scenario::{Mode, PathSpec};

    fn circle_scenario() -> Scenario {
        Scenario {
            mode: Mode::Apt,
            path: PathSpec::Clothoid {
                x0: 0.0,
                y0: 0.0,
                theta0: 0.0,
                kappa: 1.0 / 40.0,
                kappa_prime: 0.0,
                length: 400.0,
                spacing: 0.25,
            },
            apt: AptParams { k: 0.0, ..AptParams::default() },
            ..Scenario::case1()
        }
    }

    #[test]
    fn nominal_hold_on_circle() {
        let s = circle_scenario();
        let theta = Theta { delta_eq: -0.52, w_r: 1.0, w_e: 0.0 };
        let trace = run_episode(&s, Some(theta)).unwrap();
        assert!(trace.completed());
        assert_eq!(trace.rows.len(), 184);
        let m = trace.metrics(&s);
        for v in [m.rmse_v, m.rmse_beta, m.rmse_r, m.rmse_delta, m.rmse_e, m.rmse_dpsi] {
            assert!(v < 1e-3, "{m:?}");
        }
        assert!(m.rmse_f < 1e-3 * 5605.0);
    }

    #[test]
    fn initial_course_follows_tangent() {
        let path = circle_scenario().path.build().unwrap();
        let (state, pose, dep) = initial_condition(&path, &AptParams::default(), &VehicleParams::default()).unwrap();
        assert_eq!(state, dep.state());
        assert!((pose.phi + state.beta).abs() < 1e-15);
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let s = circle_scenario();
        let mut trace = run_episode(&s, Some(Theta { delta_eq: -0.5, w_r: 1.0, w_e: 0.3 })).unwrap();
        trace.rows.truncate(20);
        let mut buf = Vec::new();
        trace.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with(&TRACE_HEADER.join(",")));
        let back = EpisodeTrace::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back.rows, trace.rows);
    }

    #[test]
    fn saturation_clips_to_plant_limit() {
        let p = VehicleParams::default().with_mu(0.9);
        let u = saturate(ControlInput::new(0.1, 9000.0), &p);
        assert_eq!(u.f_xr, p.rear_force_limit());
    }
}
