use crate::bo::{bo_loop, BoOutcome, BoSettings, ThetaBounds};
use crate::error::{Error, Result};

use super::episode::evaluate_theta;
use super::scenario::{Mode, Scenario, Theta};

pub const THETA_NAMES: [&str; 3] = ["delta_eq", "w_r", "w_e"];

#[derive(Debug, Clone)]
pub struct TuneOutcome {
    /// Full parameter vector with the learned components filled in.
    pub theta: Theta,
    /// Names of the learned components, in history-column order.
    pub names: Vec<&'static str>,
    pub bo: BoOutcome,
}

/// Indices into `(delta_eq, w_r, w_e)` learned by each mode.
pub fn free_indices(mode: Mode) -> &'static [usize] {
    match mode {
        Mode::Ppt => &[],
        Mode::Dep => &[0],
        Mode::Apt => &[1, 2],
        Mode::Almpc => &[0, 1, 2],
    }
}

fn expand(base: Theta, free: &[usize], values: &[f64]) -> Theta {
    let mut full = base.to_array();
    for (&i, &v) in free.iter().zip(values) {
        full[i] = v;
    }
    Theta { delta_eq: full[0], w_r: full[1], w_e: full[2] }
}

/// Tunes the components of theta that `scenario.mode` learns. Components it
/// does not learn keep the scenario's base values.
pub fn tune(scenario: &Scenario, bounds: &ThetaBounds, settings: &BoSettings) -> Result<TuneOutcome> {
    scenario.validate()?;
    if bounds.dim() != 3 {
        return Err(Error::InvalidParameter("theta bounds must cover (delta_eq, w_r, w_e)".into()));
    }
    let free = free_indices(scenario.mode);
    if free.is_empty() {
        return Err(Error::Config(format!("mode {} has nothing to tune", scenario.mode)));
    }
    let sub = ThetaBounds::new(
        free.iter().map(|&i| bounds.lo[i]).collect(),
        free.iter().map(|&i| bounds.hi[i]).collect(),
    )?;
    let base = scenario.resolve_theta(Some(Theta {
        delta_eq: scenario.apt.delta_eq_base,
        w_r: scenario.apt.w_r,
        w_e: scenario.apt.w_e,
    }))?;
    let path = scenario.path.build()?;
    let bo = bo_loop(&sub, settings, |v: &[f64]| evaluate_theta(scenario, &path, &expand(base, free, v)))?;
    Ok(TuneOutcome {
        theta: expand(base, free, &bo.theta_star),
        names: free.iter().map(|&i| THETA_NAMES[i]).collect(),
        bo,
    })
}
