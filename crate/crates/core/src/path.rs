//! Reference paths sampled at uniform arc length, plus projection and
//! tracking-error queries.

use std::f64::consts::PI;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vehicle::{wrap_angle, Pose};

/// Default sample interval (m).
pub const DEFAULT_SPACING: f64 = 0.25;
/// Poses farther than this from every sample are considered lost.
pub const MAX_PROJECTION_DISTANCE: f64 = 50.0;

/// Clothoid with curvature `kappa + kappa_prime * s`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClothoidSpec {
    pub x0: f64,
    pub y0: f64,
    pub theta0: f64,
    pub kappa: f64,
    pub kappa_prime: f64,
    pub length: f64,
}

impl Default for ClothoidSpec {
    fn default() -> Self {
        Self {
            x0: 0.0,
            y0: 0.0,
            theta0: 0.0,
            kappa: 1.0 / 40.0,
            kappa_prime: 1.0 / 12000.0,
            length: 400.0,
        }
    }
}

impl ClothoidSpec {
    pub fn heading(&self, s: f64) -> f64 {
        self.theta0 + self.kappa * s + 0.5 * self.kappa_prime * s * s
    }

    pub fn curvature(&self, s: f64) -> f64 {
        self.kappa + self.kappa_prime * s
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathSample {
    pub s: f64,
    pub x: f64,
    pub y: f64,
    pub phi: f64,
    pub kappa: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathTable {
    samples: Vec<PathSample>,
    spacing: f64,
}

/// Closest-point query result.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    /// Nearest sample index.
    pub index: usize,
    /// Refined arc length of the foot point.
    pub s: f64,
    pub x_r: f64,
    pub y_r: f64,
    /// Signed lateral error, positive left of the path tangent.
    pub e: f64,
    pub phi_r: f64,
    /// Signed reference radius `1/kappa` (infinite on straights).
    pub radius: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackingErrors {
    pub e: f64,
    pub d_phi: f64,
    pub d_psi: f64,
    pub e_la: f64,
    pub r_r: f64,
    pub index: usize,
    pub s: f64,
}

/// Composite Simpson integration of `(cos psi, sin psi)` over `[0, s]`.
pub fn clothoid_point(spec: &ClothoidSpec, s: f64, max_step: f64) -> (f64, f64) {
    let (dx, dy) = simpson_segment(spec, 0.0, s, max_step);
    (spec.x0 + dx, spec.y0 + dy)
}

fn simpson_segment(spec: &ClothoidSpec, s0: f64, s1: f64, max_step: f64) -> (f64, f64) {
    if s1 <= s0 {
        return (0.0, 0.0);
    }
    let mut n = ((s1 - s0) / max_step).ceil() as usize;
    n = n.max(2);
    if n % 2 == 1 {
        n += 1;
    }
    let h = (s1 - s0) / n as f64;
    let (mut sx, mut sy) = (0.0, 0.0);
    for i in 0..=n {
        let w = if i == 0 || i == n {
            1.0
        } else if i % 2 == 1 {
            4.0
        } else {
            2.0
        };
        let (sn, cs) = spec.heading(s0 + h * i as f64).sin_cos();
        sx += w * cs;
        sy += w * sn;
    }
    (sx * h / 3.0, sy * h / 3.0)
}

pub fn build_clothoid(spec: &ClothoidSpec, spacing: f64) -> Result<PathTable> {
    if !(spec.length > 0.0 && spec.length.is_finite()) {
        return Err(Error::InvalidParameter(format!("clothoid length must be positive, got {}", spec.length)));
    }
    if !(spacing > 0.0 && spacing <= spec.length) {
        return Err(Error::InvalidParameter(format!("spacing {spacing} outside (0, length]")));
    }
    let count = (spec.length / spacing + 1e-9).floor() as usize + 1;
    let mut samples = Vec::with_capacity(count);
    let (mut x, mut y) = (spec.x0, spec.y0);
    for k in 0..count {
        let s = k as f64 * spacing;
        if k > 0 {
            let (dx, dy) = simpson_segment(spec, s - spacing, s, spacing / 4.0);
            x += dx;
            y += dy;
        }
        samples.push(PathSample { s, x, y, phi: spec.heading(s), kappa: spec.curvature(s) });
    }
    Ok(PathTable { samples, spacing })
}

/// Figure-eight of two tangent circles: a left lobe followed by a right lobe,
/// both starting at the origin heading along +x.
pub fn build_eight_path(radius: f64, spacing: f64) -> Result<PathTable> {
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(Error::InvalidParameter(format!("lobe radius must be positive, got {radius}")));
    }
    let lobe = 2.0 * PI * radius;
    if !(spacing > 0.0 && spacing <= lobe) {
        return Err(Error::InvalidParameter(format!("spacing {spacing} outside (0, lobe length]")));
    }
    let count = (2.0 * lobe / spacing + 1e-9).floor() as usize + 1;
    let samples = (0..count)
        .map(|k| {
            let s = k as f64 * spacing;
            let (local, turn) = if s < lobe { (s, 1.0) } else { (s - lobe, -1.0) };
            let angle = local / radius;
            PathSample {
                s,
                x: radius * angle.sin(),
                y: turn * radius * (1.0 - angle.cos()),
                phi: turn * angle,
                kappa: turn / radius,
            }
        })
        .collect();
    Ok(PathTable { samples, spacing })
}

impl PathTable {
    pub fn samples(&self) -> &[PathSample] {
        &self.samples
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn length(&self) -> f64 {
        self.samples.last().map_or(0.0, |p| p.s)
    }

    /// Position at arc length `s`, linearly interpolated and clamped to the ends.
    pub fn point_at(&self, s: f64) -> (f64, f64) {
        let last = self.samples.len() - 1;
        let f = (s / self.spacing).clamp(0.0, last as f64);
        let i = (f.floor() as usize).min(last.saturating_sub(1));
        let t = f - i as f64;
        let (p, q) = (&self.samples[i], &self.samples[(i + 1).min(last)]);
        (p.x + t * (q.x - p.x), p.y + t * (q.y - p.y))
    }

    fn nearest_in(&self, x: f64, y: f64, lo: usize, hi: usize) -> (usize, f64) {
        let mut best = (lo, f64::INFINITY);
        for (i, p) in self.samples[lo..=hi].iter().enumerate() {
            let d2 = (p.x - x).powi(2) + (p.y - y).powi(2);
            if d2 < best.1 {
                best = (lo + i, d2);
            }
        }
        best
    }

    /// Closest point over the whole table.
    pub fn project(&self, pose: &Pose) -> Result<Projection> {
        self.project_window(pose, 0, self.samples.len() - 1)
    }

    /// Closest point restricted to samples within `window` arc length of `hint`.
    /// Keeps the foot point from jumping between neighbouring spiral turns or lobes.
    pub fn project_near(&self, pose: &Pose, hint: usize, window: f64) -> Result<Projection> {
        let w = (window / self.spacing).ceil() as usize;
        let last = self.samples.len() - 1;
        let hint = hint.min(last);
        self.project_window(pose, hint.saturating_sub(w), (hint + w).min(last))
    }

    fn project_window(&self, pose: &Pose, lo: usize, hi: usize) -> Result<Projection> {
        let (i, d2) = self.nearest_in(pose.x, pose.y, lo, hi);
        if d2.sqrt() > MAX_PROJECTION_DISTANCE {
            return Err(Error::OffPath { distance: d2.sqrt() });
        }
        let last = self.samples.len() - 1;
        let dist2 = |k: usize| {
            let p = &self.samples[k];
            (p.x - pose.x).powi(2) + (p.y - pose.y).powi(2)
        };
        // Quadratic fit of squared distance through the neighbours.
        let mut t = 0.0;
        if i > 0 && i < last {
            let (dm, d0, dp) = (dist2(i - 1), d2, dist2(i + 1));
            let curv = dm - 2.0 * d0 + dp;
            if curv > 0.0 {
                t = (0.5 * (dm - dp) / curv).clamp(-1.0, 1.0);
            }
        }
        let (j, frac) = if t >= 0.0 { (i, t) } else { (i - 1, 1.0 + t) };
        let j1 = (j + 1).min(last);
        let (p, q) = (&self.samples[j], &self.samples[j1]);
        let x_r = p.x + frac * (q.x - p.x);
        let y_r = p.y + frac * (q.y - p.y);
        let phi_r = wrap_angle(p.phi + frac * wrap_angle(q.phi - p.phi));
        let (sn, cs) = phi_r.sin_cos();
        let e = cs * (pose.y - y_r) - sn * (pose.x - x_r);
        let kappa = self.samples[i].kappa;
        Ok(Projection {
            index: i,
            s: p.s + frac * (q.s - p.s),
            x_r,
            y_r,
            e,
            phi_r,
            radius: 1.0 / kappa,
        })
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["s", "X", "Y", "phi_r", "kappa"])?;
        for p in &self.samples {
            w.write_record([p.s, p.x, p.y, p.phi, p.kappa].map(|v| v.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }
}

fn errors_from(pose: &Pose, beta: f64, proj: Projection, x_la: f64) -> TrackingErrors {
    let d_phi = wrap_angle(pose.phi - proj.phi_r);
    let d_psi = d_phi + beta;
    TrackingErrors {
        e: proj.e,
        d_phi,
        d_psi,
        e_la: proj.e + x_la * d_psi.sin(),
        r_r: proj.radius,
        index: proj.index,
        s: proj.s,
    }
}

pub fn tracking_errors(pose: &Pose, beta: f64, path: &PathTable, x_la: f64) -> Result<TrackingErrors> {
    Ok(errors_from(pose, beta, path.project(pose)?, x_la))
}

/// Windowed variant of [`tracking_errors`] used inside the closed loop.
pub fn tracking_errors_near(
    pose: &Pose,
    beta: f64,
    path: &PathTable,
    x_la: f64,
    hint: usize,
    window: f64,
) -> Result<TrackingErrors> {
    Ok(errors_from(pose, beta, path.project_near(pose, hint, window)?, x_la))
}
