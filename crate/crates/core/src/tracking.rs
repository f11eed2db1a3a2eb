//! Radius and steering references for the drift equilibrium.

use serde::{Deserialize, Serialize};

use crate::equilibrium::{MAX_RADIUS, MIN_RADIUS};
use crate::error::{Error, Result};
use crate::path::{PathTable, TrackingErrors};
use crate::vehicle::{ControlLimits, Pose};

pub const PPT_GRID_SIZE: usize = 40;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AptParams {
    pub w_r: f64,
    pub w_e: f64,
    /// Look-ahead distance (m).
    pub x_la: f64,
    /// Steering feedback gain (rad/m).
    pub k: f64,
    pub delta_eq_base: f64,
}

impl Default for AptParams {
    fn default() -> Self {
        Self { w_r: 1.0, w_e: 0.0, x_la: 12.0, k: 0.25, delta_eq_base: -0.52 }
    }
}

impl AptParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.x_la > 0.0) {
            return Err(Error::InvalidParameter("look-ahead distance must be positive".into()));
        }
        if ![self.w_r, self.w_e, self.k, self.delta_eq_base].iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidParameter("APT parameters must be finite".into()));
        }
        Ok(())
    }
}

/// Keeps the sign and limits the magnitude to the equilibrium solver's domain.
pub fn clamp_radius(radius: f64) -> f64 {
    let sign = if radius < 0.0 { -1.0 } else { 1.0 };
    sign * radius.abs().clamp(MIN_RADIUS, MAX_RADIUS)
}

/// `R_eq = w_r R_r + w_e e_la`, with `R_r` capped at the straight-line radius.
pub fn apt_radius(errors: &TrackingErrors, p: &AptParams) -> f64 {
    let r_r = if errors.r_r.is_finite() { errors.r_r.clamp(-MAX_RADIUS, MAX_RADIUS) } else { MAX_RADIUS };
    clamp_radius(p.w_r * r_r + p.w_e * errors.e_la)
}

pub fn steer_feedback(errors: &TrackingErrors, p: &AptParams, limits: &ControlLimits) -> f64 {
    (p.delta_eq_base + p.k * errors.e_la).clamp(limits.delta_min, limits.delta_max)
}

/// 40 log-spaced magnitudes in `[5, 500]` m, each with both signs.
pub fn default_ppt_grid() -> Vec<f64> {
    let (lo, hi) = (MIN_RADIUS.ln(), MAX_RADIUS.ln());
    let mut grid = Vec::with_capacity(2 * PPT_GRID_SIZE);
    for i in 0..PPT_GRID_SIZE {
        let mag = (lo + (hi - lo) * i as f64 / (PPT_GRID_SIZE - 1) as f64).exp();
        grid.push(mag);
        grid.push(-mag);
    }
    grid
}

/// Circle-fit baseline. Target points lie ahead of the foot point `s0` at
/// arc-length increments `step`; each candidate circle is tangent to the
/// course angle `course` at the vehicle position, with positive radii
/// turning left.
pub fn ppt_radius(
    pose: &Pose,
    course: f64,
    path: &PathTable,
    s0: f64,
    step: f64,
    horizon_pts: usize,
    radius_grid: &[f64],
) -> Result<f64> {
    if horizon_pts < 3 {
        return Err(Error::InvalidParameter("PPT needs at least 3 horizon points".into()));
    }
    if radius_grid.is_empty() || radius_grid.iter().any(|r| !r.is_finite() || *r == 0.0) {
        return Err(Error::InvalidParameter("PPT radius grid must be finite and nonzero".into()));
    }
    if !(step > 0.0) {
        return Err(Error::InvalidParameter("PPT point step must be positive".into()));
    }
    let targets: Vec<(f64, f64)> = (1..=horizon_pts).map(|j| path.point_at(s0 + j as f64 * step)).collect();
    let (nx, ny) = (-course.sin(), course.cos());
    let mut best: Option<(f64, f64)> = None;
    for &radius in radius_grid {
        let (cx, cy) = (pose.x + radius * nx, pose.y + radius * ny);
        let sse: f64 = targets
            .iter()
            .map(|&(x, y)| ((x - cx).hypot(y - cy) - radius.abs()).powi(2))
            .sum();
        best = match best {
            None => Some((radius, sse)),
            Some((r0, s_best)) if better(radius, sse, r0, s_best) => Some((radius, sse)),
            keep => keep,
        };
    }
    Ok(best.map(|(r, _)| r).unwrap_or(MAX_RADIUS))
}

/// Strict total order on candidates so the result ignores grid ordering.
fn better(r: f64, sse: f64, r0: f64, sse0: f64) -> bool {
    if sse != sse0 {
        return sse < sse0;
    }
    if r.abs() != r0.abs() {
        return r.abs() > r0.abs();
    }
    r > r0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::path::{build_clothoid, ClothoidSpec, DEFAULT_SPACING};

    fn errs(r_r: f64, e_la: f64) -> TrackingErrors {
        TrackingErrors { e: 0.0, d_phi: 0.0, d_psi: 0.0, e_la, r_r, index: 0, s: 0.0 }
    }

    #[test]
    fn apt_examples() {
        let p = AptParams { w_r: 1.026, w_e: 0.945, ..Default::default() };
        assert!((apt_radius(&errs(40.0, 0.5), &p) - 41.5125).abs() < 1e-12);
        let unit = AptParams::default();
        assert_eq!(apt_radius(&errs(40.0, 0.0), &unit), 40.0);
        assert_eq!(apt_radius(&errs(40.0, 3.0), &unit), apt_radius(&errs(40.0, -2.0), &unit));
    }

    #[test]
    fn apt_clamps_preserving_sign() {
        let p = AptParams::default();
        assert_eq!(apt_radius(&errs(f64::INFINITY, 0.0), &p), 500.0);
        assert_eq!(apt_radius(&errs(-2000.0, 0.0), &p), -500.0);
        assert_eq!(apt_radius(&errs(-2.0, 0.0), &p), -5.0);
        assert_eq!(apt_radius(&errs(3.0, 0.0), &p), 5.0);
    }

    #[test]
    fn apt_and_feedback_are_affine() {
        let p = AptParams { w_r: 0.8, w_e: -2.5, k: 0.3, ..Default::default() };
        let lim = ControlLimits::default();
        let r = |e| apt_radius(&errs(60.0, e), &p);
        let d = |e| steer_feedback(&errs(60.0, e), &p, &lim);
        assert!(((r(0.4) - r(-0.2)) - 2.0 * (r(0.1) - r(-0.2))).abs() < 1e-12);
        assert!(((d(0.4) - d(-0.2)) - 2.0 * (d(0.1) - d(-0.2))).abs() < 1e-12);
    }

    #[test]
    fn positive_error_enlarges_left_radius() {
        let p = AptParams { w_r: 1.0, w_e: 0.7, ..Default::default() };
        assert!(apt_radius(&errs(40.0, 0.3), &p) > apt_radius(&errs(40.0, 0.0), &p));
    }

    #[test]
    fn steering_examples() {
        let lim = ControlLimits::default();
        let p = AptParams::default();
        assert!((steer_feedback(&errs(40.0, 0.4), &p, &lim) + 0.42).abs() < 1e-12);
        assert_eq!(steer_feedback(&errs(40.0, 0.0), &p, &lim), -0.52);
        let off = AptParams { k: 0.0, ..p };
        assert_eq!(steer_feedback(&errs(40.0, 1.7), &off, &lim), -0.52);
        assert_eq!(steer_feedback(&errs(40.0, -10.0), &p, &lim), -1.0);
    }

    #[test]
    fn grid_shape() {
        let g = default_ppt_grid();
        assert_eq!(g.len(), 80);
        assert!((g[0] - 5.0).abs() < 1e-12 && (g[78] - 500.0).abs() < 1e-9);
        assert!(g.chunks(2).all(|c| c[0] == -c[1]));
    }

    fn circle(radius: f64) -> PathTable {
        let spec = ClothoidSpec { kappa: 1.0 / radius, kappa_prime: 0.0, length: 100.0, ..Default::default() };
        build_clothoid(&spec, DEFAULT_SPACING).unwrap()
    }

    #[test]
    fn recovers_circle_radius() {
        let grid = default_ppt_grid();
        let r_true = grid[40];
        let path = circle(r_true);
        let r = ppt_radius(&Pose::new(0.0, 0.0, 0.0), 0.0, &path, 0.0, 1.5, 20, &grid).unwrap();
        assert_eq!(r, r_true);
    }

    #[test]
    fn straight_picks_flattest_circle() {
        let spec = ClothoidSpec { kappa: 0.0, kappa_prime: 0.0, length: 60.0, ..Default::default() };
        let path = build_clothoid(&spec, DEFAULT_SPACING).unwrap();
        let grid = default_ppt_grid();
        let r = ppt_radius(&Pose::new(0.0, 0.0, 0.0), 0.0, &path, 0.0, 1.5, 20, &grid).unwrap();
        assert!((r.abs() - 500.0).abs() < 1e-9);
    }

    #[test]
    fn grid_order_does_not_matter() {
        let path = build_clothoid(&ClothoidSpec::default(), DEFAULT_SPACING).unwrap();
        let pose = Pose::new(30.0, 4.0, 0.2);
        let grid = default_ppt_grid();
        let mut rev = grid.clone();
        rev.reverse();
        let a = ppt_radius(&pose, 0.15, &path, 30.0, 1.8, 20, &grid).unwrap();
        let b = ppt_radius(&pose, 0.15, &path, 30.0, 1.8, 20, &rev).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn clothoid_matches_fine_grid() {
        let path = build_clothoid(&ClothoidSpec::default(), DEFAULT_SPACING).unwrap();
        let coarse = default_ppt_grid();
        let n = 10 * PPT_GRID_SIZE;
        let (lo, hi) = (MIN_RADIUS.ln(), MAX_RADIUS.ln());
        let fine: Vec<f64> = (0..n)
            .flat_map(|i| {
                let m = (lo + (hi - lo) * i as f64 / (n - 1) as f64).exp();
                [m, -m]
            })
            .collect();
        let ratio = (hi - lo) / (PPT_GRID_SIZE - 1) as f64;
        for s0 in [10.0, 120.0, 250.0] {
            let (x, y) = path.point_at(s0);
            let phi = s0 * s0 / 24000.0 + s0 / 40.0;
            let pose = Pose::new(x, y, phi);
            let a = ppt_radius(&pose, phi, &path, s0, 1.9, 20, &coarse).unwrap();
            let b = ppt_radius(&pose, phi, &path, s0, 1.9, 20, &fine).unwrap();
            assert_eq!(a.signum(), b.signum());
            assert!((a.abs().ln() - b.abs().ln()).abs() <= ratio + 1e-9, "{a} vs {b}");
        }
    }
}
