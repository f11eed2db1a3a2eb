use std::io::Write;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::acquisition::acquire_next;
use super::gp::{GpDataset, GpHyper, GpModel, HyperStrategy, ThetaBounds};
use super::qmc::ScrambledHalton;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoSettings {
    /// Space-filling evaluations before the first acquisition.
    pub init: usize,
    /// Total evaluations, including the initial ones.
    pub budget: usize,
    pub seed: u64,
    /// Hyperparameters are re-optimised after this many new points.
    pub refit_every: usize,
}

impl Default for BoSettings {
    fn default() -> Self {
        Self { init: 20, budget: 320, seed: 0, refit_every: 5 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HistoryRecord {
    pub iteration: usize,
    pub theta: Vec<f64>,
    pub cost: f64,
    pub best: f64,
}

#[derive(Debug, Clone)]
pub struct BoOutcome {
    pub theta_star: Vec<f64>,
    pub best_cost: f64,
    pub history: Vec<HistoryRecord>,
    /// Seconds since the start of the run, one entry per evaluation.
    pub wall_time: Vec<f64>,
}

fn acquisition_seed(seed: u64, iteration: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(iteration as u64)
}

/// Bayesian optimisation of `objective` over `bounds`. The initial design is
/// evaluated in parallel; the acquisition phase is sequential.
pub fn bo_loop<F>(bounds: &ThetaBounds, settings: &BoSettings, objective: F) -> Result<BoOutcome>
where
    F: Fn(&[f64]) -> Result<f64> + Sync,
{
    bounds.validate()?;
    if settings.init < 2 || settings.budget < settings.init || settings.refit_every == 0 {
        return Err(Error::InvalidParameter("BO needs init >= 2, budget >= init, refit_every >= 1".into()));
    }
    let clock = Instant::now();
    let mut halton = ScrambledHalton::new(bounds.dim(), settings.seed);
    let initial: Vec<Vec<f64>> = (0..settings.init).map(|_| bounds.from_unit(&halton.next_point())).collect();
    let costs: Vec<f64> = initial.par_iter().map(|t| objective(t)).collect::<Result<_>>()?;

    let mut data = GpDataset::new();
    let mut history = Vec::with_capacity(settings.budget);
    let mut wall_time = Vec::with_capacity(settings.budget);
    let mut best = f64::INFINITY;
    let mut record = |theta: Vec<f64>, cost: f64, data: &mut GpDataset, history: &mut Vec<HistoryRecord>| {
        data.push(theta.clone(), cost)?;
        best = best.min(cost);
        history.push(HistoryRecord { iteration: history.len() + 1, theta, cost, best });
        wall_time.push(clock.elapsed().as_secs_f64());
        Ok::<f64, Error>(best)
    };
    for (theta, cost) in initial.into_iter().zip(costs) {
        record(theta, cost, &mut data, &mut history)?;
    }

    let strategy = HyperStrategy::default();
    let mut hyper: Option<GpHyper> = None;
    let mut since_refit = 0;
    while history.len() < settings.budget {
        let model = match &hyper {
            Some(h) if since_refit < settings.refit_every => match GpModel::fit_with(&data, bounds, h.clone()) {
                Ok(m) => m,
                Err(_) => GpModel::fit(&data, bounds, &strategy)?,
            },
            _ => {
                since_refit = 0;
                GpModel::fit(&data, bounds, &strategy)?
            }
        };
        hyper = Some(model.hyper().clone());
        let current_best = history.last().map_or(f64::INFINITY, |r| r.best);
        let theta = acquire_next(&model, bounds, current_best, acquisition_seed(settings.seed, history.len()));
        let cost = objective(&theta)?;
        record(theta, cost, &mut data, &mut history)?;
        since_refit += 1;
    }

    let best_rec = history
        .iter()
        .fold(None::<&HistoryRecord>, |acc, r| match acc {
            Some(a) if a.cost <= r.cost => Some(a),
            _ => Some(r),
        })
        .expect("history is non-empty");
    Ok(BoOutcome {
        theta_star: best_rec.theta.clone(),
        best_cost: best_rec.cost,
        history,
        wall_time,
    })
}

/// Writes `iteration, <names...>, cost, best`. Floats use the shortest
/// representation that round-trips exactly.
pub fn write_history_csv<W: Write>(history: &[HistoryRecord], names: &[&str], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["iteration".to_string()];
    header.extend(names.iter().map(|s| s.to_string()));
    header.extend(["cost".to_string(), "best".to_string()]);
    w.write_record(&header)?;
    for r in history {
        if r.theta.len() != names.len() {
            return Err(Error::InvalidParameter("history column names do not match theta".into()));
        }
        let mut row = vec![r.iteration.to_string()];
        row.extend(r.theta.iter().map(|v| v.to_string()));
        row.extend([r.cost.to_string(), r.best.to_string()]);
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_timing_csv<W: Write>(wall_time: &[f64], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["iteration", "wall_time_s"])?;
    for (i, t) in wall_time.iter().enumerate() {
        w.write_record([(i + 1).to_string(), t.to_string()])?;
    }
    w.flush()?;
    Ok(())
}
