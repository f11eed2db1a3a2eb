use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};

/// Dense convex QP: minimise `0.5 x'Hx + g'x` subject to `Ax <= b`.
#[derive(Debug, Clone)]
pub struct QpProblem {
    pub h: DMatrix<f64>,
    pub g: DVector<f64>,
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
}

#[derive(Debug, Clone, Copy)]
pub struct QpSettings {
    pub max_iter: usize,
    pub feas_tol: f64,
    pub dual_tol: f64,
}

impl Default for QpSettings {
    fn default() -> Self {
        Self { max_iter: 500, feas_tol: 1e-9, dual_tol: 1e-10 }
    }
}

#[derive(Debug, Clone)]
pub struct QpSolution {
    pub x: DVector<f64>,
    /// One multiplier per inequality row; zero for inactive rows.
    pub lambda: DVector<f64>,
    pub active: Vec<usize>,
    pub iterations: usize,
    pub objective: f64,
}

/// Infinity-norm KKT residuals of a candidate primal/dual pair.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct KktResiduals {
    pub stationarity: f64,
    pub primal: f64,
    pub dual: f64,
    pub complementarity: f64,
}

impl KktResiduals {
    pub fn max(&self) -> f64 {
        self.stationarity.max(self.primal).max(self.dual).max(self.complementarity)
    }
}

impl QpProblem {
    pub fn n(&self) -> usize {
        self.h.nrows()
    }

    pub fn m(&self) -> usize {
        self.a.nrows()
    }

    pub fn objective(&self, x: &DVector<f64>) -> f64 {
        0.5 * x.dot(&(&self.h * x)) + self.g.dot(x)
    }

    pub fn max_violation(&self, x: &DVector<f64>) -> f64 {
        if self.m() == 0 {
            return 0.0;
        }
        (&self.a * x - &self.b).max().max(0.0)
    }

    pub fn kkt(&self, x: &DVector<f64>, lambda: &DVector<f64>) -> KktResiduals {
        let slack = &self.b - &self.a * x;
        let stat = &self.h * x + &self.g + self.a.transpose() * lambda;
        let mut comp = 0.0_f64;
        for i in 0..self.m() {
            comp = comp.max((lambda[i] * slack[i]).abs());
        }
        KktResiduals {
            stationarity: stat.amax(),
            primal: self.max_violation(x),
            dual: if self.m() == 0 { 0.0 } else { (-lambda.min()).max(0.0) },
            complementarity: comp,
        }
    }

    /// Solves with the primal active-set method from a feasible start.
    pub fn solve(&self, x0: &DVector<f64>, settings: &QpSettings) -> Result<QpSolution> {
        let n = self.n();
        let m = self.m();
        if self.g.len() != n || self.a.ncols() != n || self.b.len() != m || x0.len() != n {
            return Err(Error::InvalidParameter("QP dimensions are inconsistent".into()));
        }
        if self.max_violation(x0) > settings.feas_tol {
            return Err(Error::QpInfeasible);
        }
        let chol: Cholesky<f64, Dyn> = self.h.clone().cholesky().ok_or(Error::NotPositiveDefinite)?;
        let l = chol.l();
        // In y = L'x the Hessian is the identity, so each step is an
        // orthogonal projection computed by QR of the working rows.
        let gy = l.solve_lower_triangular(&self.g).ok_or(Error::NotPositiveDefinite)?;
        let ct = l.solve_lower_triangular(&self.a.transpose()).ok_or(Error::NotPositiveDefinite)?;
        let c_norm: Vec<f64> = (0..m).map(|i| ct.column(i).norm()).collect();

        let mut y = l.transpose() * x0;
        let mut working: Vec<usize> = Vec::new();
        // Set after an unblocked full step: y is then the minimiser on the
        // working set and any remaining step is round-off.
        let mut stationary = false;
        // The constraint just released cannot block the next step; only
        // round-off in `c_j . p` could make it appear to.
        let mut released = None;

        for iter in 1..=settings.max_iter {
            let grad = &y + &gy;
            let (p, lam_w) = if working.is_empty() {
                (-&grad, DVector::zeros(0))
            } else {
                let mut cw = DMatrix::zeros(n, working.len());
                for (r, &i) in working.iter().enumerate() {
                    cw.set_column(r, &ct.column(i));
                }
                let qr = cw.qr();
                let (q, rf) = (qr.q(), qr.r());
                let qg = q.transpose() * &grad;
                let lam = rf.solve_upper_triangular(&(-&qg)).ok_or(Error::QpInfeasible)?;
                (-(&grad - &q * qg), lam)
            };

            if stationary || p.amax() <= 1e-12 * (1.0 + grad.amax()) {
                let (j, min_lam) = lam_w
                    .iter()
                    .enumerate()
                    .fold((usize::MAX, f64::INFINITY), |acc, (j, &l)| if l < acc.1 { (j, l) } else { acc });
                if working.is_empty() || min_lam >= -settings.dual_tol {
                    let mut x = l.transpose().solve_upper_triangular(&y).ok_or(Error::NotPositiveDefinite)?;
                    let mut lambda = DVector::zeros(m);
                    for (r, &i) in working.iter().enumerate() {
                        lambda[i] = lam_w[r].max(0.0);
                    }
                    working.sort_unstable();
                    if let Some((px, pl)) = self.polish(&working, settings.dual_tol) {
                        if self.kkt(&px, &pl).max() < self.kkt(&x, &lambda).max() {
                            (x, lambda) = (px, pl);
                        }
                    }
                    let objective = self.objective(&x);
                    return Ok(QpSolution { x, lambda, active: working, iterations: iter, objective });
                }
                released = Some(working.remove(j));
                stationary = false;
                continue;
            }

            let mut alpha = 1.0;
            let mut blocking = None;
            let dir_tol = 1e-12 * p.norm();
            for (i, &norm) in c_norm.iter().enumerate() {
                if working.contains(&i) || released == Some(i) {
                    continue;
                }
                let cp = ct.column(i).dot(&p);
                if cp > dir_tol * norm {
                    let slack = (self.b[i] - ct.column(i).dot(&y)).max(0.0);
                    let ratio = slack / cp;
                    if ratio < alpha {
                        alpha = ratio;
                        blocking = Some(i);
                    }
                }
            }
            y += alpha * p;
            released = None;
            match blocking {
                Some(i) => working.push(i),
                None => stationary = true,
            }
        }
        Err(Error::QpIterationLimit(settings.max_iter))
    }

    /// Solves the KKT system of the final working set directly, with a few
    /// rounds of iterative refinement, to remove drift accumulated by the
    /// incremental steps. `None` if the system is singular or a multiplier
    /// comes out negative.
    fn polish(&self, working: &[usize], dual_tol: f64) -> Option<(DVector<f64>, DVector<f64>)> {
        let (n, k) = (self.n(), working.len());
        let mut kkt = DMatrix::zeros(n + k, n + k);
        kkt.view_mut((0, 0), (n, n)).copy_from(&self.h);
        let mut rhs = DVector::zeros(n + k);
        rhs.rows_mut(0, n).copy_from(&(-&self.g));
        for (r, &i) in working.iter().enumerate() {
            let row = self.a.row(i);
            kkt.view_mut((n + r, 0), (1, n)).copy_from(&row);
            kkt.view_mut((0, n + r), (n, 1)).copy_from(&row.transpose());
            rhs[n + r] = self.b[i];
        }
        let lu = kkt.clone().lu();
        let mut sol = lu.solve(&rhs)?;
        for _ in 0..3 {
            let res = &rhs - &kkt * &sol;
            sol += lu.solve(&res)?;
        }
        let mut lambda = DVector::zeros(self.m());
        for (r, &i) in working.iter().enumerate() {
            if sol[n + r] < -dual_tol {
                return None;
            }
            lambda[i] = sol[n + r].max(0.0);
        }
        Some((sol.rows(0, n).into_owned(), lambda))
    }
}
