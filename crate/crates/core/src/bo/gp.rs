use argmin::core::{CostFunction, Executor, State};
use argmin::solver::neldermead::NelderMead;
use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use super::kernel::matern52;
use super::qmc::ScrambledHalton;
use crate::error::{Error, Result};

/// Variance below this is treated as round-off and reported as zero.
/// Length scale used while every observed cost is identical.
pub const FLAT_LENGTH_SCALE: f64 = 0.2;
pub const VARIANCE_FLOOR: f64 = 1e-12;
const MAX_JITTER_FACTOR: f64 = 1e-6;

/// Axis-aligned box for the tuned parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThetaBounds {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl Default for ThetaBounds {
    /// `(delta_eq, w_r, w_e)`.
    fn default() -> Self {
        Self { lo: vec![-0.7, 0.0, -5.0], hi: vec![0.4, 2.0, 5.0] }
    }
}

impl ThetaBounds {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        let b = Self { lo, hi };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        if self.lo.is_empty() || self.lo.len() != self.hi.len() {
            return Err(Error::InvalidParameter("bounds must be non-empty with matching lengths".into()));
        }
        if self.lo.iter().zip(&self.hi).any(|(l, h)| !(l < h && l.is_finite() && h.is_finite())) {
            return Err(Error::InvalidParameter("bounds must satisfy lo < hi".into()));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn to_unit(&self, theta: &[f64]) -> Vec<f64> {
        theta.iter().zip(self.lo.iter().zip(&self.hi)).map(|(t, (l, h))| (t - l) / (h - l)).collect()
    }

    pub fn from_unit(&self, u: &[f64]) -> Vec<f64> {
        u.iter().zip(self.lo.iter().zip(&self.hi)).map(|(t, (l, h))| (l + t * (h - l)).clamp(*l, *h)).collect()
    }

    pub fn contains(&self, theta: &[f64]) -> bool {
        theta.len() == self.dim() && theta.iter().zip(self.lo.iter().zip(&self.hi)).all(|(t, (l, h))| l <= t && t <= h)
    }

    pub fn diameter(&self) -> f64 {
        self.lo.iter().zip(&self.hi).map(|(l, h)| (h - l).powi(2)).sum::<f64>().sqrt()
    }
}

/// Observations `(theta, cost)`. Repeated `theta` values are merged into one
/// point carrying the mean of their costs.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GpDataset {
    thetas: Vec<Vec<f64>>,
    costs: Vec<f64>,
    counts: Vec<usize>,
}

impl GpDataset {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, theta: Vec<f64>, cost: f64) -> Result<()> {
        if !cost.is_finite() || theta.iter().any(|t| !t.is_finite()) {
            return Err(Error::InvalidParameter("GP observations must be finite".into()));
        }
        if let Some(d) = self.thetas.first().map(Vec::len) {
            if d != theta.len() {
                return Err(Error::InvalidParameter("GP observation has the wrong dimension".into()));
            }
        }
        if let Some(i) = self.thetas.iter().position(|t| *t == theta) {
            let n = self.counts[i] as f64;
            self.costs[i] = (self.costs[i] * n + cost) / (n + 1.0);
            self.counts[i] += 1;
        } else {
            self.thetas.push(theta);
            self.costs.push(cost);
            self.counts.push(1);
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.thetas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.thetas.is_empty()
    }

    pub fn thetas(&self) -> &[Vec<f64>] {
        &self.thetas
    }

    pub fn costs(&self) -> &[f64] {
        &self.costs
    }

    pub fn mean_cost(&self) -> f64 {
        self.costs.iter().sum::<f64>() / self.costs.len().max(1) as f64
    }

    /// Costs relative to their mean.
    pub fn centered_costs(&self) -> DVector<f64> {
        let mean = self.mean_cost();
        DVector::from_iterator(self.costs.len(), self.costs.iter().map(|c| c - mean))
    }

    /// Mean squared deviation of the costs, the natural signal scale.
    pub fn cost_scale(&self) -> f64 {
        let mean = self.mean_cost();
        let m = self.costs.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / self.costs.len().max(1) as f64;
        if m > 0.0 {
            m
        } else {
            1.0
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpHyper {
    pub signal_var: f64,
    /// In unit-box coordinates.
    pub length_scales: Vec<f64>,
    pub noise_var: f64,
}

/// Multi-start log-marginal-likelihood search. Bounds are relative to the unit
/// box widths and to the cost scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HyperStrategy {
    pub starts: usize,
    pub max_iters: u64,
    pub length_bounds: (f64, f64),
    pub signal_bounds: (f64, f64),
    pub noise_bounds: (f64, f64),
}

impl Default for HyperStrategy {
    fn default() -> Self {
        Self {
            starts: 8,
            max_iters: 150,
            length_bounds: (0.01, 10.0),
            signal_bounds: (1e-4, 1e2),
            noise_bounds: (1e-8, 1.0),
        }
    }
}

/// Fitted GP with a cached Cholesky factor. The prior mean is the constant
/// sample mean of the costs; the kernel models the centered costs.
#[derive(Debug, Clone)]
pub struct GpModel {
    bounds: ThetaBounds,
    x: Vec<Vec<f64>>,
    y: DVector<f64>,
    offset: f64,
    hyper: GpHyper,
    chol: Cholesky<f64, Dyn>,
    alpha: DVector<f64>,
    jitter: f64,
}

fn factor(x: &[Vec<f64>], hyper: &GpHyper) -> Result<(Cholesky<f64, Dyn>, f64)> {
    let n = x.len();
    let k = DMatrix::from_fn(n, n, |i, j| matern52(&x[i], &x[j], hyper.signal_var, &hyper.length_scales));
    let base = &k + DMatrix::identity(n, n) * hyper.noise_var;
    if let Some(c) = base.clone().cholesky() {
        return Ok((c, 0.0));
    }
    let mut jitter = 1e-12 * hyper.signal_var;
    while jitter <= MAX_JITTER_FACTOR * hyper.signal_var * (1.0 + 1e-9) {
        if let Some(c) = (&base + DMatrix::identity(n, n) * jitter).cholesky() {
            return Ok((c, jitter));
        }
        jitter *= 10.0;
    }
    Err(Error::NotPositiveDefinite)
}

fn check_hyper(hyper: &GpHyper, dim: usize) -> Result<()> {
    let ok = hyper.signal_var > 0.0
        && hyper.noise_var >= 0.0
        && hyper.length_scales.len() == dim
        && hyper.length_scales.iter().all(|l| *l > 0.0 && l.is_finite());
    if ok {
        Ok(())
    } else {
        Err(Error::InvalidParameter("GP hyperparameters must be positive with one length scale per input".into()))
    }
}

/// Log marginal likelihood of the centered costs under `hyper`.
pub fn log_marginal_likelihood(data: &GpDataset, bounds: &ThetaBounds, hyper: &GpHyper) -> Result<f64> {
    let x: Vec<Vec<f64>> = data.thetas().iter().map(|t| bounds.to_unit(t)).collect();
    check_hyper(hyper, bounds.dim())?;
    let (chol, _) = factor(&x, hyper)?;
    let y = data.centered_costs();
    Ok(lml_from(&chol, &y))
}

fn lml_from(chol: &Cholesky<f64, Dyn>, y: &DVector<f64>) -> f64 {
    let alpha = chol.solve(y);
    let logdet: f64 = chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>() * 2.0;
    -0.5 * y.dot(&alpha) - 0.5 * logdet - 0.5 * y.len() as f64 * (2.0 * std::f64::consts::PI).ln()
}

struct NegLml<'a> {
    x: &'a [Vec<f64>],
    y: &'a DVector<f64>,
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl NegLml<'_> {
    fn hyper(&self, p: &[f64]) -> GpHyper {
        let c: Vec<f64> = p.iter().zip(self.lo.iter().zip(&self.hi)).map(|(v, (l, h))| v.clamp(*l, *h).exp()).collect();
        let d = c.len() - 2;
        GpHyper { signal_var: c[0], length_scales: c[1..=d].to_vec(), noise_var: c[d + 1] }
    }
}

impl CostFunction for NegLml<'_> {
    type Param = Vec<f64>;
    type Output = f64;

    fn cost(&self, p: &Self::Param) -> std::result::Result<f64, argmin::core::Error> {
        // Leaving the box is penalised so the simplex is pushed back inside.
        let outside: f64 = p
            .iter()
            .zip(self.lo.iter().zip(&self.hi))
            .map(|(v, (l, h))| (l - v).max(0.0) + (v - h).max(0.0))
            .sum();
        let value = match factor(self.x, &self.hyper(p)) {
            Ok((chol, _)) => -lml_from(&chol, self.y),
            Err(_) => 1e10,
        };
        Ok(value + 1e3 * outside)
    }
}

impl GpModel {
    /// Fits with fixed hyperparameters.
    pub fn fit_with(data: &GpDataset, bounds: &ThetaBounds, hyper: GpHyper) -> Result<Self> {
        bounds.validate()?;
        check_hyper(&hyper, bounds.dim())?;
        if data.len() < 2 {
            return Err(Error::InvalidParameter("GP needs at least two observations".into()));
        }
        if data.thetas().iter().any(|t| !bounds.contains(t)) {
            return Err(Error::InvalidParameter("GP observation outside the bounds".into()));
        }
        let x: Vec<Vec<f64>> = data.thetas().iter().map(|t| bounds.to_unit(t)).collect();
        let y = data.centered_costs();
        let (chol, jitter) = factor(&x, &hyper)?;
        let alpha = chol.solve(&y);
        Ok(Self { bounds: bounds.clone(), x, y, offset: data.mean_cost(), hyper, chol, alpha, jitter })
    }

    /// Fits hyperparameters by maximising the log marginal likelihood from
    /// several deterministic starts, then caches the factor.
    pub fn fit(data: &GpDataset, bounds: &ThetaBounds, strategy: &HyperStrategy) -> Result<Self> {
        let hyper = optimize_hyper(data, bounds, strategy)?;
        Self::fit_with(data, bounds, hyper)
    }

    pub fn hyper(&self) -> &GpHyper {
        &self.hyper
    }

    pub fn bounds(&self) -> &ThetaBounds {
        &self.bounds
    }

    pub fn prior_mean(&self) -> f64 {
        self.offset
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn log_marginal_likelihood(&self) -> f64 {
        lml_from(&self.chol, &self.y)
    }

    /// Posterior mean and latent variance at `theta`.
    pub fn predict(&self, theta: &[f64]) -> (f64, f64) {
        self.predict_unit(&self.bounds.to_unit(theta))
    }

    pub(crate) fn predict_unit(&self, u: &[f64]) -> (f64, f64) {
        let h = &self.hyper;
        let ks = DVector::from_iterator(
            self.x.len(),
            self.x.iter().map(|xi| matern52(xi, u, h.signal_var, &h.length_scales)),
        );
        let mean = self.offset + ks.dot(&self.alpha);
        let v = self.chol.l_dirty().solve_lower_triangular(&ks).unwrap_or_else(|| DVector::zeros(ks.len()));
        let var = h.signal_var - v.dot(&v);
        (mean, if var < VARIANCE_FLOOR { 0.0 } else { var })
    }
}

fn optimize_hyper(data: &GpDataset, bounds: &ThetaBounds, strategy: &HyperStrategy) -> Result<GpHyper> {
    bounds.validate()?;
    if data.len() < 2 {
        return Err(Error::InvalidParameter("GP needs at least two observations".into()));
    }
    let d = bounds.dim();
    let spread = data.costs().iter().any(|c| *c != data.costs()[0]);
    if !spread {
        // Identical costs carry no likelihood information; a short fixed
        // length scale turns EI into a space-filling search.
        return Ok(GpHyper { signal_var: 1.0, length_scales: vec![FLAT_LENGTH_SCALE; d], noise_var: 1e-6 });
    }
    let scale = data.cost_scale();
    let mut lo = vec![(strategy.signal_bounds.0 * scale).ln()];
    let mut hi = vec![(strategy.signal_bounds.1 * scale).ln()];
    lo.extend(std::iter::repeat_n(strategy.length_bounds.0.ln(), d));
    hi.extend(std::iter::repeat_n(strategy.length_bounds.1.ln(), d));
    lo.push((strategy.noise_bounds.0 * scale).ln());
    hi.push((strategy.noise_bounds.1 * scale).ln());

    let x: Vec<Vec<f64>> = data.thetas().iter().map(|t| bounds.to_unit(t)).collect();
    let y = data.centered_costs();
    let problem = NegLml { x: &x, y: &y, lo: lo.clone(), hi: hi.clone() };

    let p = lo.len();
    let mid: Vec<f64> = lo.iter().zip(&hi).map(|(l, h)| 0.5 * (l + h)).collect();
    let mut starts = vec![mid];
    let mut halton = ScrambledHalton::new(p.min(10), 17);
    while starts.len() < strategy.starts.max(1) {
        let u = halton.next_point();
        starts.push((0..p).map(|i| lo[i] + u[i % u.len()] * (hi[i] - lo[i])).collect());
    }

    let mut best: Option<(f64, Vec<f64>)> = None;
    for start in starts {
        let simplex: Vec<Vec<f64>> = std::iter::once(start.clone())
            .chain((0..p).map(|i| {
                let mut v = start.clone();
                let step = 0.1 * (hi[i] - lo[i]);
                v[i] = if v[i] + step <= hi[i] { v[i] + step } else { v[i] - step };
                v
            }))
            .collect();
        let solver = NelderMead::new(simplex)
            .with_sd_tolerance(1e-6)
            .map_err(|e| Error::InvalidParameter(e.to_string()))?;
        let res = Executor::new(NegLml { x: &x, y: &y, lo: lo.clone(), hi: hi.clone() }, solver)
            .configure(|s| s.max_iters(strategy.max_iters))
            .run()
            .map_err(|e| Error::InvalidParameter(e.to_string()))?;
        let cost = res.state.get_best_cost();
        if let Some(param) = res.state.get_best_param() {
            if best.as_ref().is_none_or(|(c, _)| cost < *c) {
                best = Some((cost, param.clone()));
            }
        }
    }
    let (_, param) = best.ok_or(Error::NotPositiveDefinite)?;
    Ok(problem.hyper(&param))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hyper() -> GpHyper {
        GpHyper { signal_var: 1.5, length_scales: vec![0.3, 0.5, 0.2], noise_var: 1e-4 }
    }

    #[test]
    fn bounds_round_trip() {
        let b = ThetaBounds::default();
        let t = [-0.1, 1.3, 2.0];
        let back = b.from_unit(&b.to_unit(&t));
        assert!(t.iter().zip(&back).all(|(a, c)| (a - c).abs() < 1e-15));
        assert!(ThetaBounds::new(vec![0.0], vec![0.0]).is_err());
    }

    #[test]
    fn duplicates_are_merged() {
        let mut d = GpDataset::new();
        d.push(vec![0.0, 1.0, 0.0], 2.0).unwrap();
        d.push(vec![0.0, 1.0, 0.0], 4.0).unwrap();
        d.push(vec![0.1, 1.0, 0.0], 1.0).unwrap();
        assert_eq!(d.len(), 2);
        assert_eq!(d.costs(), &[3.0, 1.0]);
        assert!(d.push(vec![0.0, 1.0], 1.0).is_err());
        assert!(d.push(vec![0.0, 1.0, 0.0], f64::NAN).is_err());
    }

    #[test]
    fn far_points_interpolate_their_observations() {
        let b = ThetaBounds::default();
        let mut d = GpDataset::new();
        d.push(b.lo.clone(), 1.0).unwrap();
        d.push(b.hi.clone(), -2.0).unwrap();
        let m = GpModel::fit_with(&d, &b, hyper()).unwrap();
        assert!((m.predict(&b.lo).0 - 1.0).abs() < 1e-3);
        assert!((m.predict(&b.hi).0 + 2.0).abs() < 1e-3);
    }

    #[test]
    fn prior_recovered_far_from_data() {
        let b = ThetaBounds::new(vec![0.0; 3], vec![100.0; 3]).unwrap();
        let mut d = GpDataset::new();
        d.push(vec![0.0, 0.0, 0.0], 3.0).unwrap();
        d.push(vec![1.0, 0.0, 0.0], 2.0).unwrap();
        let h = GpHyper { length_scales: vec![0.05; 3], ..hyper() };
        let m = GpModel::fit_with(&d, &b, h).unwrap();
        let (mu, var) = m.predict(&[100.0, 100.0, 100.0]);
        assert!((mu - 2.5).abs() < 1e-12);
        assert_eq!(m.prior_mean(), 2.5);
        assert!((var - 1.5).abs() < 1e-12);
    }

    #[test]
    fn noiseless_training_point_has_zero_variance() {
        let b = ThetaBounds::default();
        let mut d = GpDataset::new();
        for (t, c) in [([-0.5, 0.5, 1.0], 0.2), ([0.1, 1.5, -2.0], 0.7), ([0.3, 0.2, 4.0], -0.4)] {
            d.push(t.to_vec(), c).unwrap();
        }
        let h = GpHyper { noise_var: 0.0, ..hyper() };
        let m = GpModel::fit_with(&d, &b, h).unwrap();
        let (mu, var) = m.predict(&[0.1, 1.5, -2.0]);
        assert!((mu - 0.7).abs() < 1e-9);
        assert_eq!(var, 0.0);
    }

    #[test]
    fn flat_data_uses_fixed_hyper() {
        let b = ThetaBounds::default();
        let mut d = GpDataset::new();
        let mut h = ScrambledHalton::new(3, 1);
        for _ in 0..6 {
            d.push(b.from_unit(&h.next_point()), 10.0).unwrap();
        }
        let m = GpModel::fit(&d, &b, &HyperStrategy::default()).unwrap();
        assert_eq!(m.hyper().length_scales, vec![FLAT_LENGTH_SCALE; 3]);
        assert_eq!(m.predict(&b.lo).0, 10.0);
    }

    #[test]
    fn hyper_search_improves_likelihood() {
        let b = ThetaBounds::default();
        let mut d = GpDataset::new();
        let mut h = ScrambledHalton::new(3, 4);
        for _ in 0..25 {
            let t = b.from_unit(&h.next_point());
            let c = (3.0 * t[0]).sin() + 0.1 * t[1] * t[2];
            d.push(t, c).unwrap();
        }
        let fitted = GpModel::fit(&d, &b, &HyperStrategy::default()).unwrap();
        let naive = log_marginal_likelihood(&d, &b, &hyper()).unwrap();
        assert!(fitted.log_marginal_likelihood() >= naive);
        let again = GpModel::fit(&d, &b, &HyperStrategy::default()).unwrap();
        assert_eq!(fitted.hyper(), again.hyper());
    }
}
