use statrs::function::erf::erfc;

use super::gp::{GpModel, ThetaBounds};
use super::qmc::ScrambledHalton;

pub const CANDIDATES: usize = 2048;
pub const POLISH_STARTS: usize = 8;

fn std_normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

fn std_normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Expected improvement below `best` for a Gaussian with the given mean and
/// standard deviation.
pub fn expected_improvement(mean: f64, std_dev: f64, best: f64) -> f64 {
    if !(std_dev > 0.0) {
        return 0.0;
    }
    let diff = best - mean;
    let z = diff / std_dev;
    (diff * std_normal_cdf(z) + std_dev * std_normal_pdf(z)).max(0.0)
}

pub fn ei_at(model: &GpModel, theta: &[f64], best: f64) -> f64 {
    let (mu, var) = model.predict(theta);
    expected_improvement(mu, var.sqrt(), best)
}

fn ei_unit(model: &GpModel, u: &[f64], best: f64) -> f64 {
    let (mu, var) = model.predict_unit(u);
    expected_improvement(mu, var.sqrt(), best)
}

/// Maximises EI over the box: scrambled Halton candidates, then a compass
/// search from the best few. Ties keep the earlier candidate, so the result
/// depends only on the inputs and the seed.
pub fn acquire_next(model: &GpModel, bounds: &ThetaBounds, best: f64, seed: u64) -> Vec<f64> {
    let d = bounds.dim();
    let mut halton = ScrambledHalton::new(d, seed);
    let mut scored: Vec<(f64, Vec<f64>)> = (0..CANDIDATES)
        .map(|_| {
            let u = halton.next_point();
            (ei_unit(model, &u, best), u)
        })
        .collect();
    scored.sort_by(|a, b| b.0.total_cmp(&a.0));

    let mut winner = scored[0].clone();
    for (mut val, mut u) in scored.into_iter().take(POLISH_STARTS) {
        let mut step = 0.05;
        while step > 1e-4 {
            let mut moved = false;
            for i in 0..d {
                for dir in [1.0, -1.0] {
                    let mut cand = u.clone();
                    cand[i] = (cand[i] + dir * step).clamp(0.0, 1.0);
                    let v = ei_unit(model, &cand, best);
                    if v > val {
                        val = v;
                        u = cand;
                        moved = true;
                    }
                }
            }
            if !moved {
                step *= 0.5;
            }
        }
        if val > winner.0 {
            winner = (val, u);
        }
    }
    bounds.from_unit(&winner.1)
}
