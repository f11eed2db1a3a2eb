use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Floor applied to arguments of logarithms in the episode cost.
pub const COST_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CostConfig {
    /// Weight of the course-angle error.
    pub lambda: f64,
    /// Lateral error beyond which the barrier activates (m).
    pub e_max: f64,
    pub n_k: usize,
    /// Lower clamp on the barrier term.
    pub b_min: f64,
    /// Cost assigned to failed episodes.
    pub j_fail: f64,
}

impl Default for CostConfig {
    fn default() -> Self {
        Self { lambda: 10.0, e_max: 1.5, n_k: 184, b_min: 0.0, j_fail: 10.0 }
    }
}

impl CostConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.e_max > 0.0 && self.n_k >= 2 && self.j_fail.is_finite()) {
            return Err(Error::InvalidParameter("cost config needs lambda > 0, e_max > 0, N_k >= 2".into()));
        }
        Ok(())
    }
}

/// Soft barrier on lateral errors above `e_max`.
pub fn barrier(e: &[f64], cfg: &CostConfig) -> f64 {
    let inner = e.iter().map(|v| 10.0 * (v - cfg.e_max).max(0.0)).sum::<f64>() / e.len() as f64;
    inner.max(COST_EPS).ln().max(cfg.b_min)
}

/// Mean step-to-step change of the lateral error.
pub fn increment(e: &[f64]) -> f64 {
    e.windows(2).map(|w| w[1] - w[0]).sum::<f64>() / (e.len() - 1) as f64
}

/// Log-compressed tracking cost of a completed episode.
pub fn episode_cost(e: &[f64], d_psi: &[f64], cfg: &CostConfig) -> Result<f64> {
    cfg.validate()?;
    if e.len() != cfg.n_k || d_psi.len() != cfg.n_k {
        return Err(Error::InvalidParameter(format!(
            "episode cost expects {} steps, got {} and {}",
            cfg.n_k,
            e.len(),
            d_psi.len()
        )));
    }
    let n = e.len() as f64;
    let tracking = e.iter().zip(d_psi).map(|(a, b)| a.abs() + cfg.lambda * b.abs()).sum::<f64>() / n;
    let bracket = tracking + barrier(e, cfg) + increment(e);
    Ok(bracket.max(COST_EPS).ln())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(n: usize) -> CostConfig {
        CostConfig { n_k: n, ..Default::default() }
    }

    #[test]
    fn perfect_tracking_hits_the_floor() {
        let z = vec![0.0; 10];
        assert_eq!(episode_cost(&z, &z, &cfg(10)).unwrap(), COST_EPS.ln());
    }

    #[test]
    fn constant_error_below_threshold() {
        let e = vec![0.5; 10];
        let z = vec![0.0; 10];
        assert_eq!(increment(&e), 0.0);
        assert_eq!(barrier(&e, &cfg(10)), 0.0);
        assert!((episode_cost(&e, &z, &cfg(10)).unwrap() - 0.5f64.ln()).abs() < 1e-15);
        let c = CostConfig { lambda: 123.0, ..cfg(10) };
        assert_eq!(episode_cost(&e, &z, &c).unwrap(), episode_cost(&e, &z, &cfg(10)).unwrap());
    }

    #[test]
    fn doubling_errors_raises_cost() {
        let e: Vec<f64> = (0..20).map(|i| 0.3 * ((i as f64) * 0.7).sin()).collect();
        let d: Vec<f64> = (0..20).map(|i| 0.01 * (i as f64).cos()).collect();
        let e2: Vec<f64> = e.iter().map(|v| 2.0 * v).collect();
        assert!(episode_cost(&e2, &d, &cfg(20)).unwrap() > episode_cost(&e, &d, &cfg(20)).unwrap());
    }

    #[test]
    fn barrier_activates_above_threshold() {
        let mut e = vec![0.5; 10];
        e[4] = 3.0;
        // inner = 10 * 1.5 / 10
        assert!((barrier(&e, &cfg(10)) - 1.5f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn increment_telescopes() {
        let e = [0.1, -0.4, 0.9, 0.7];
        assert!((increment(&e) - (0.7 - 0.1) / 3.0).abs() < 1e-15);
    }

    #[test]
    fn length_mismatch_rejected() {
        assert!(episode_cost(&[0.0; 5], &[0.0; 5], &cfg(6)).is_err());
    }
}
