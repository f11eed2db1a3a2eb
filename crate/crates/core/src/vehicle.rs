//! Single-track drift model with a simplified Pacejka front tire and a
//! friction-circle rear tire.
//!
//! Conventions: yaw rate `r > 0` turns left, sideslip `beta` is the angle of
//! the CoG velocity measured from the body x-axis, and tire forces follow the
//! `F_y = -mu F_z sin(C atan(B alpha))` sign so that they oppose slip.

use std::f64::consts::PI;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Speeds at or below this value leave the drift model undefined.
pub const MIN_SPEED: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VehicleParams {
    /// Mass (kg).
    pub m: f64,
    /// Yaw inertia (kg m^2).
    pub i_z: f64,
    /// CoG to front axle (m).
    pub a: f64,
    /// CoG to rear axle (m).
    pub b: f64,
    /// Tire stiffness factor.
    pub tire_b: f64,
    /// Tire shape factor.
    pub tire_c: f64,
    /// Road friction coefficient.
    pub mu: f64,
    /// Gravitational acceleration (m/s^2).
    pub g: f64,
}

impl Default for VehicleParams {
    fn default() -> Self {
        Self {
            m: 1830.0,
            i_z: 3234.0,
            a: 1.40,
            b: 1.65,
            tire_b: 8.321,
            tire_c: 1.626,
            mu: 1.0,
            g: 9.81,
        }
    }
}

impl VehicleParams {
    pub fn with_mu(self, mu: f64) -> Self {
        Self { mu, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("m", self.m),
            ("i_z", self.i_z),
            ("a", self.a),
            ("b", self.b),
            ("tire_b", self.tire_b),
            ("tire_c", self.tire_c),
            ("g", self.g),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.mu > 0.0 && self.mu <= 2.0) {
            return Err(Error::InvalidParameter(format!("mu must lie in (0, 2], got {}", self.mu)));
        }
        Ok(())
    }

    /// Friction-circle radius of the rear axle, `mu * F_zr`.
    pub fn rear_force_limit(&self) -> f64 {
        self.mu * static_loads(self).1
    }
}

/// Drift state at the centre of gravity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleState {
    pub v: f64,
    pub beta: f64,
    pub r: f64,
}

impl VehicleState {
    pub fn new(v: f64, beta: f64, r: f64) -> Self {
        Self { v, beta, r }
    }

    pub fn to_vector(self) -> Vector3<f64> {
        Vector3::new(self.v, self.beta, self.r)
    }

    pub fn from_vector(x: &Vector3<f64>) -> Self {
        Self::new(x[0], x[1], x[2])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlInput {
    /// Front steering angle (rad).
    pub delta: f64,
    /// Rear longitudinal tire force (N).
    pub f_xr: f64,
}

impl ControlInput {
    pub fn new(delta: f64, f_xr: f64) -> Self {
        Self { delta, f_xr }
    }
}

/// Input box and per-step rate limits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControlLimits {
    pub delta_min: f64,
    pub delta_max: f64,
    pub f_min: f64,
    pub f_max: f64,
    pub d_delta_lim: f64,
    pub d_f_lim: f64,
}

impl Default for ControlLimits {
    fn default() -> Self {
        Self {
            delta_min: -1.0,
            delta_max: 1.0,
            f_min: 0.0,
            f_max: 9000.0,
            d_delta_lim: 0.15,
            d_f_lim: 1000.0,
        }
    }
}

impl ControlLimits {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta_min < self.delta_max && self.f_min < self.f_max) {
            return Err(Error::InvalidParameter("input bounds must satisfy min < max".into()));
        }
        if !(self.d_delta_lim > 0.0 && self.d_f_lim > 0.0) {
            return Err(Error::InvalidParameter("rate limits must be positive".into()));
        }
        Ok(())
    }

    pub fn contains(&self, u: ControlInput, tol: f64) -> bool {
        u.delta >= self.delta_min - tol
            && u.delta <= self.delta_max + tol
            && u.f_xr >= self.f_min - tol
            && u.f_xr <= self.f_max + tol
    }

    pub fn rate_ok(&self, prev: ControlInput, next: ControlInput, tol: f64) -> bool {
        (next.delta - prev.delta).abs() <= self.d_delta_lim + tol
            && (next.f_xr - prev.f_xr).abs() <= self.d_f_lim + tol
    }
}

/// Global position and heading.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub phi: f64,
}

impl Pose {
    pub fn new(x: f64, y: f64, phi: f64) -> Self {
        Self { x, y, phi: wrap_angle(phi) }
    }
}

/// Wraps an angle into `(-pi, pi]`.
pub fn wrap_angle(angle: f64) -> f64 {
    let mut a = angle % (2.0 * PI);
    if a <= -PI {
        a += 2.0 * PI;
    } else if a > PI {
        a -= 2.0 * PI;
    }
    a
}

/// Time derivative of the drift state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateDerivative {
    pub dv: f64,
    pub dbeta: f64,
    pub dr: f64,
}

impl StateDerivative {
    pub fn to_vector(self) -> Vector3<f64> {
        Vector3::new(self.dv, self.dbeta, self.dr)
    }

    pub fn norm(self) -> f64 {
        self.to_vector().norm()
    }
}

/// Front and rear tire slip angles `(alpha_f, alpha_r)`.
pub fn slip_angles(state: VehicleState, delta: f64, params: &VehicleParams) -> Result<(f64, f64)> {
    if !(state.v > MIN_SPEED) {
        return Err(Error::DegenerateSpeed { speed: state.v });
    }
    let vx = state.v * state.beta.cos();
    let vy = state.v * state.beta.sin();
    let alpha_f = (vy + params.a * state.r).atan2(vx) - delta;
    let alpha_r = (vy - params.b * state.r).atan2(vx);
    Ok((alpha_f, alpha_r))
}

/// Simplified Pacejka lateral force.
pub fn lateral_force(alpha: f64, f_z: f64, params: &VehicleParams) -> f64 {
    -params.mu * f_z * (params.tire_c * (params.tire_b * alpha).atan()).sin()
}

/// Rear lateral force left over by the friction circle, directed against
/// the rear slip angle. Zero slip yields zero force.
pub fn rear_lateral_force(f_xr: f64, f_zr: f64, alpha_r: f64, params: &VehicleParams) -> Result<f64> {
    let limit = params.mu * f_zr;
    if f_xr.abs() > limit {
        return Err(Error::FrictionCircle { force: f_xr, limit });
    }
    let magnitude = (limit * limit - f_xr * f_xr).max(0.0).sqrt();
    let sign = if alpha_r > 0.0 {
        -1.0
    } else if alpha_r < 0.0 {
        1.0
    } else {
        0.0
    };
    Ok(sign * magnitude)
}

/// Static axle loads `(F_zf, F_zr)`.
pub fn static_loads(params: &VehicleParams) -> (f64, f64) {
    let weight = params.m * params.g;
    let wheelbase = params.a + params.b;
    let f_zf = weight * params.b / wheelbase;
    (f_zf, weight - f_zf)
}

pub fn dynamics(state: VehicleState, input: ControlInput, params: &VehicleParams) -> Result<StateDerivative> {
    let (alpha_f, alpha_r) = slip_angles(state, input.delta, params)?;
    let (f_zf, f_zr) = static_loads(params);
    let f_yf = lateral_force(alpha_f, f_zf, params);
    let f_yr = rear_lateral_force(input.f_xr, f_zr, alpha_r, params)?;

    let (sb, cb) = state.beta.sin_cos();
    let (sdb, cdb) = (input.delta - state.beta).sin_cos();
    let dv = (-f_yf * sdb + f_yr * sb + input.f_xr * cb) / params.m;
    let dbeta = (f_yf * cdb + f_yr * cb - input.f_xr * sb) / (params.m * state.v) - state.r;
    let dr = (params.a * f_yf * input.delta.cos() - params.b * f_yr) / params.i_z;
    Ok(StateDerivative { dv, dbeta, dr })
}

type Full = [f64; 6];

fn full_rate(s: &Full, input: ControlInput, params: &VehicleParams) -> Result<Full> {
    let d = dynamics(VehicleState::new(s[0], s[1], s[2]), input, params)?;
    let course = s[5] + s[1];
    Ok([d.dv, d.dbeta, d.dr, s[0] * course.cos(), s[0] * course.sin(), s[2]])
}

fn axpy(base: &Full, k: &Full, h: f64) -> Full {
    std::array::from_fn(|i| base[i] + h * k[i])
}

/// One classical RK4 step over `(V, beta, r, X, Y, phi)` with a held input.
pub fn step(
    state: VehicleState,
    pose: Pose,
    input: ControlInput,
    params: &VehicleParams,
    dt: f64,
) -> Result<(VehicleState, Pose)> {
    if !(dt > 0.0) {
        return Err(Error::InvalidParameter(format!("dt must be positive, got {dt}")));
    }
    let s0: Full = [state.v, state.beta, state.r, pose.x, pose.y, pose.phi];
    let k1 = full_rate(&s0, input, params)?;
    let k2 = full_rate(&axpy(&s0, &k1, 0.5 * dt), input, params)?;
    let k3 = full_rate(&axpy(&s0, &k2, 0.5 * dt), input, params)?;
    let k4 = full_rate(&axpy(&s0, &k3, dt), input, params)?;
    let s: Full = std::array::from_fn(|i| s0[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]));
    Ok((VehicleState::new(s[0], s[1], s[2]), Pose::new(s[3], s[4], s[5])))
}

/// Holds `input` for `period` seconds using `substeps` RK4 steps.
pub fn integrate(
    mut state: VehicleState,
    mut pose: Pose,
    input: ControlInput,
    params: &VehicleParams,
    period: f64,
    substeps: usize,
) -> Result<(VehicleState, Pose)> {
    let dt = period / substeps.max(1) as f64;
    for _ in 0..substeps.max(1) {
        (state, pose) = step(state, pose, input, params, dt)?;
    }
    Ok((state, pose))
}
