use nalgebra::{DMatrix, DVector, Vector2, Vector5};
use serde::{Deserialize, Serialize};

use super::linear::AugmentedModel;
use super::qp::{KktResiduals, QpProblem, QpSettings};
use crate::equilibrium::DriftEquilibrium;
use crate::error::{Error, Result};
use crate::vehicle::{ControlInput, ControlLimits};

/// Horizons, weights and control period of the receding-horizon problem.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MpcConfig {
    pub n_p: usize,
    pub n_c: usize,
    /// Diagonal weight on `(V, beta, r, delta, F_xr)`.
    pub q: [f64; 5],
    /// Diagonal weight on `(d_delta, d_F_xr)`.
    pub r: [f64; 2],
    pub dt: f64,
}

impl Default for MpcConfig {
    fn default() -> Self {
        Self { n_p: 20, n_c: 19, q: [10.0, 1.0, 10.0, 1.0, 1.0], r: [1.0, 1.0], dt: 0.1 }
    }
}

impl MpcConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_c == 0 || self.n_c > self.n_p {
            return Err(Error::InvalidParameter(format!(
                "horizons must satisfy 0 < N_c <= N_p (got N_c = {}, N_p = {})",
                self.n_c, self.n_p
            )));
        }
        if self.q.iter().chain(self.r.iter()).any(|w| !(*w > 0.0 && w.is_finite())) {
            return Err(Error::InvalidParameter("MPC weights must be positive".into()));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidParameter("control period must be positive".into()));
        }
        Ok(())
    }
}

/// The receding-horizon problem in condensed form: predictions are
/// `free + gamma * U`, where `U` stacks the `N_c` increments.
///
/// `qp` is posed in the equilibrated variable `z` with `U = scale .* z`:
/// the Hessian has unit diagonal and every constraint row unit norm, so its
/// KKT residuals are not swamped by the newton-scale force entries.
#[derive(Debug, Clone)]
pub struct CondensedMpc {
    pub qp: QpProblem,
    pub scale: DVector<f64>,
    pub free: DVector<f64>,
    pub gamma: DMatrix<f64>,
    /// Cost of the free response, so that the full cost is
    /// `0.5 U'HU + g'U + constant`.
    pub constant: f64,
    pub n_rate_rows: usize,
}

#[derive(Debug, Clone)]
pub struct MpcSolution {
    pub input: ControlInput,
    pub cost: f64,
    pub increments: Vec<Vector2<f64>>,
    pub predicted: Vec<Vector5<f64>>,
    pub rate_active: bool,
    pub box_active: bool,
    pub kkt: KktResiduals,
    pub iterations: usize,
    /// Stacked physical increments, reusable as a shifted warm start.
    pub u_stack: DVector<f64>,
}

pub fn condense(
    xi_now: &Vector5<f64>,
    dep: &DriftEquilibrium,
    model: &AugmentedModel,
    cfg: &MpcConfig,
    limits: &ControlLimits,
) -> Result<CondensedMpc> {
    cfg.validate()?;
    limits.validate()?;
    if xi_now.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter("MPC state is not finite".into()));
    }
    let (np, nc) = (cfg.n_p, cfg.n_c);
    let nu = 2 * nc;
    let xi_eq = dep.xi();

    let mut free = DVector::zeros(5 * np);
    let mut gamma = DMatrix::zeros(5 * np, nu);
    let mut prev = *xi_now;
    for k in 0..np {
        let cur = model.a_hat * prev + model.d_hat;
        free.fixed_rows_mut::<5>(5 * k).copy_from(&cur);
        prev = cur;
        if k > 0 {
            for j in 0..k.min(nc) {
                let above = gamma.fixed_view::<5, 2>(5 * (k - 1), 2 * j).into_owned();
                gamma.fixed_view_mut::<5, 2>(5 * k, 2 * j).copy_from(&(model.a_hat * above));
            }
        }
        if k < nc {
            gamma.fixed_view_mut::<5, 2>(5 * k, 2 * k).copy_from(&model.b_hat);
        }
    }

    let qdiag = DVector::from_fn(5 * np, |i, _| cfg.q[i % 5]);
    let rdiag = DVector::from_fn(nu, |i, _| cfg.r[i % 2]);
    let mut dev = free.clone();
    for k in 0..np {
        let mut blk = dev.fixed_rows_mut::<5>(5 * k);
        blk -= xi_eq;
    }
    let qg = DMatrix::from_fn(5 * np, nu, |i, j| qdiag[i] * gamma[(i, j)]);
    let mut h = gamma.transpose() * &qg * 2.0;
    for i in 0..nu {
        h[(i, i)] += 2.0 * rdiag[i];
    }
    let h = (&h + h.transpose()) * 0.5;
    let g = qg.transpose() * &dev * 2.0;
    let constant = dev.iter().zip(qdiag.iter()).map(|(d, q)| q * d * d).sum();

    // Rows: increment bounds first, then cumulative input bounds.
    let u_prev = [xi_now[3], xi_now[4]];
    let lo = [limits.delta_min, limits.f_min];
    let hi = [limits.delta_max, limits.f_max];
    let rate = [limits.d_delta_lim, limits.d_f_lim];
    let m = 4 * nu;
    let mut a = DMatrix::zeros(m, nu);
    let mut b = DVector::zeros(m);
    for j in 0..nc {
        for c in 0..2 {
            let col = 2 * j + c;
            let row = 2 * col;
            a[(row, col)] = 1.0;
            b[row] = rate[c];
            a[(row + 1, col)] = -1.0;
            b[row + 1] = rate[c];
            let row = 2 * nu + 2 * col;
            for l in 0..=j {
                a[(row, 2 * l + c)] = 1.0;
                a[(row + 1, 2 * l + c)] = -1.0;
            }
            b[row] = hi[c] - u_prev[c];
            b[row + 1] = u_prev[c] - lo[c];
        }
    }
    let scale = DVector::from_fn(nu, |i, _| 1.0 / h[(i, i)].sqrt());
    let h = DMatrix::from_fn(nu, nu, |i, j| scale[i] * h[(i, j)] * scale[j]);
    let g = g.component_mul(&scale);
    for r in 0..m {
        let mut row = a.row_mut(r);
        row.component_mul_assign(&scale.transpose());
        let norm = row.norm();
        row /= norm;
        b[r] /= norm;
    }
    Ok(CondensedMpc { qp: QpProblem { h, g, a, b }, scale, free, gamma, constant, n_rate_rows: 2 * nu })
}

impl CondensedMpc {
    pub fn to_physical(&self, z: &DVector<f64>) -> DVector<f64> {
        z.component_mul(&self.scale)
    }

    pub fn to_scaled(&self, u: &DVector<f64>) -> DVector<f64> {
        u.component_div(&self.scale)
    }

    /// Full cost of the physical increment stack `u`.
    pub fn cost(&self, u: &DVector<f64>) -> f64 {
        self.qp.objective(&self.to_scaled(u)) + self.constant
    }

    pub fn predict(&self, u: &DVector<f64>) -> Vec<Vector5<f64>> {
        let flat = &self.free + &self.gamma * u;
        (0..flat.len() / 5).map(|k| flat.fixed_rows::<5>(5 * k).into_owned()).collect()
    }
}

pub fn solve_mpc(
    xi_now: &Vector5<f64>,
    dep: &DriftEquilibrium,
    model: &AugmentedModel,
    cfg: &MpcConfig,
    limits: &ControlLimits,
) -> Result<MpcSolution> {
    solve_mpc_warm(xi_now, dep, model, cfg, limits, None)
}

/// As [`solve_mpc`], optionally starting the active-set iteration from the
/// previous solution shifted by one step. An infeasible warm start falls back
/// to `U = 0`.
pub fn solve_mpc_warm(
    xi_now: &Vector5<f64>,
    dep: &DriftEquilibrium,
    model: &AugmentedModel,
    cfg: &MpcConfig,
    limits: &ControlLimits,
    previous: Option<&DVector<f64>>,
) -> Result<MpcSolution> {
    let u_prev = ControlInput::new(xi_now[3], xi_now[4]);
    if !limits.contains(u_prev, 1e-9) {
        return Err(Error::QpInfeasible);
    }
    let cond = condense(xi_now, dep, model, cfg, limits)?;
    let nu = 2 * cfg.n_c;
    let settings = QpSettings::default();
    let zero = DVector::zeros(nu);
    let start = match previous {
        Some(p) if p.len() == nu => {
            let mut shifted = DVector::zeros(nu);
            shifted.rows_mut(0, nu - 2).copy_from(&p.rows(2, nu - 2));
            let shifted = cond.to_scaled(&shifted);
            if cond.qp.max_violation(&shifted) <= settings.feas_tol {
                shifted
            } else {
                zero
            }
        }
        _ => zero,
    };
    let sol = cond.qp.solve(&start, &settings)?;
    let kkt = cond.qp.kkt(&sol.x, &sol.lambda);
    let u = cond.to_physical(&sol.x);
    let du = Vector2::new(u[0], u[1]);
    let input = ControlInput::new(
        (u_prev.delta + du[0]).clamp(limits.delta_min, limits.delta_max),
        (u_prev.f_xr + du[1]).clamp(limits.f_min, limits.f_max),
    );
    let increments = (0..cfg.n_c).map(|j| Vector2::new(u[2 * j], u[2 * j + 1])).collect();
    Ok(MpcSolution {
        input,
        cost: sol.objective + cond.constant,
        increments,
        predicted: cond.predict(&u),
        rate_active: sol.active.iter().any(|&i| i < cond.n_rate_rows),
        box_active: sol.active.iter().any(|&i| i >= cond.n_rate_rows),
        kkt,
        iterations: sol.iterations,
        u_stack: u,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::equilibrium::solve_dep;
    use crate::mpc::linear::{augment, linearize};
    use crate::vehicle::VehicleParams;

    fn setup() -> (DriftEquilibrium, AugmentedModel) {
        let p = VehicleParams::default();
        let dep = solve_dep(-0.52, 40.0, &p, None).unwrap();
        let aug = augment(&linearize(&dep, &p, 0.1).unwrap());
        (dep, aug)
    }

    #[test]
    fn equilibrium_is_optimal() {
        let (dep, aug) = setup();
        let cfg = MpcConfig::default();
        let sol = solve_mpc(&dep.xi(), &dep, &aug, &cfg, &ControlLimits::default()).unwrap();
        assert!(sol.u_stack.amax() < 1e-9);
        assert!(sol.cost < 1e-10);
        assert!((sol.input.delta - dep.delta).abs() < 1e-9);
        assert!((sol.input.f_xr - dep.f_xr).abs() < 1e-6);
    }

    #[test]
    fn config_validation() {
        let mut cfg = MpcConfig::default();
        assert!(cfg.validate().is_ok());
        cfg.n_c = 21;
        assert!(cfg.validate().is_err());
        let mut cfg = MpcConfig::default();
        cfg.r[1] = 0.0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn previous_input_outside_box_is_rejected() {
        let (dep, aug) = setup();
        let mut xi = dep.xi();
        xi[4] = 9500.0;
        let r = solve_mpc(&xi, &dep, &aug, &MpcConfig::default(), &ControlLimits::default());
        assert!(matches!(r, Err(Error::QpInfeasible)));
    }

    #[test]
    fn condensed_prediction_matches_rollout() {
        let (dep, aug) = setup();
        let cfg = MpcConfig::default();
        let mut xi = dep.xi();
        xi[0] += 1.0;
        xi[2] -= 0.05;
        let sol = solve_mpc(&xi, &dep, &aug, &cfg, &ControlLimits::default()).unwrap();
        let mut cur = xi;
        for k in 0..cfg.n_p {
            let du = if k < cfg.n_c { sol.increments[k] } else { Vector2::zeros() };
            cur = aug.propagate(&cur, &du);
            assert!((cur - sol.predicted[k]).amax() < 1e-9 * (1.0 + cur.amax()));
        }
    }

    #[test]
    fn equilibrated_problem_is_unit_scaled() {
        let (dep, aug) = setup();
        let mut xi = dep.xi();
        xi[0] -= 2.0;
        let c = condense(&xi, &dep, &aug, &MpcConfig::default(), &ControlLimits::default()).unwrap();
        for i in 0..c.qp.n() {
            assert!((c.qp.h[(i, i)] - 1.0).abs() < 1e-12);
        }
        for r in 0..c.qp.m() {
            assert!((c.qp.a.row(r).norm() - 1.0).abs() < 1e-12);
        }
        let u = DVector::from_fn(c.qp.n(), |i, _| 0.01 * i as f64);
        assert!((c.to_physical(&c.to_scaled(&u)) - &u).amax() < 1e-12);
    }

    #[test]
    fn warm_start_reaches_same_objective() {
        let (dep, aug) = setup();
        let cfg = MpcConfig::default();
        let lim = ControlLimits::default();
        let mut xi = dep.xi();
        xi[1] += 0.2;
        xi[4] -= 2500.0;
        let cold = solve_mpc(&xi, &dep, &aug, &cfg, &lim).unwrap();
        let warm = solve_mpc_warm(&xi, &dep, &aug, &cfg, &lim, Some(&cold.u_stack)).unwrap();
        assert!((cold.cost - warm.cost).abs() <= 1e-8 * (1.0 + cold.cost.abs()));
    }
}
