use nalgebra::{Matrix2, Matrix3, Matrix3x2, SMatrix, Vector2, Vector3, Vector5};

use crate::equilibrium::DriftEquilibrium;
use crate::error::Result;
use crate::vehicle::{dynamics, ControlInput, VehicleParams, VehicleState};

pub type Matrix5 = SMatrix<f64, 5, 5>;
pub type Matrix5x2 = SMatrix<f64, 5, 2>;

/// Finite-difference scheme for the model Jacobians.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FdScheme {
    Central,
    Forward,
}

/// Affine discrete-time model `x+ = A x + B u + d` around an equilibrium.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearModel {
    pub a: Matrix3<f64>,
    pub b: Matrix3x2<f64>,
    pub d: Vector3<f64>,
}

impl LinearModel {
    pub fn predict(&self, x: &Vector3<f64>, u: &Vector2<f64>) -> Vector3<f64> {
        self.a * x + self.b * u + self.d
    }
}

/// Increment-form model over `xi = (x, u)` driven by `delta_u`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentedModel {
    pub a_hat: Matrix5,
    pub b_hat: Matrix5x2,
    pub d_hat: Vector5<f64>,
}

impl AugmentedModel {
    pub fn propagate(&self, xi: &Vector5<f64>, du: &Vector2<f64>) -> Vector5<f64> {
        self.a_hat * xi + self.b_hat * du + self.d_hat
    }

    /// Reads back `(A, B, d)` from the block layout.
    pub fn blocks(&self) -> LinearModel {
        LinearModel {
            a: self.a_hat.fixed_view::<3, 3>(0, 0).into_owned(),
            b: self.a_hat.fixed_view::<3, 2>(0, 3).into_owned(),
            d: self.d_hat.fixed_rows::<3>(0).into_owned(),
        }
    }
}

fn f(x: &Vector3<f64>, u: &Vector2<f64>, params: &VehicleParams) -> Result<Vector3<f64>> {
    Ok(dynamics(VehicleState::from_vector(x), ControlInput::new(u[0], u[1]), params)?.to_vector())
}

/// Continuous-time Jacobians `(df/dx, df/du)` at `(x, u)`.
pub fn continuous_jacobians(
    x: &Vector3<f64>,
    u: &Vector2<f64>,
    params: &VehicleParams,
    scheme: FdScheme,
) -> Result<(Matrix3<f64>, Matrix3x2<f64>)> {
    let rel = match scheme {
        FdScheme::Central => 1e-5,
        FdScheme::Forward => 1e-7,
    };
    let f0 = f(x, u, params)?;
    let mut ac = Matrix3::zeros();
    for j in 0..3 {
        let h = rel * (1.0 + x[j].abs());
        let mut xp = *x;
        xp[j] += h;
        let col = match scheme {
            FdScheme::Central => {
                let mut xm = *x;
                xm[j] -= h;
                (f(&xp, u, params)? - f(&xm, u, params)?) / (2.0 * h)
            }
            FdScheme::Forward => (f(&xp, u, params)? - f0) / h,
        };
        ac.set_column(j, &col);
    }
    let mut bc = Matrix3x2::zeros();
    for j in 0..2 {
        let h = rel * (1.0 + u[j].abs());
        let mut up = *u;
        up[j] += h;
        let col = match scheme {
            FdScheme::Central => {
                let mut um = *u;
                um[j] -= h;
                (f(x, &up, params)? - f(x, &um, params)?) / (2.0 * h)
            }
            FdScheme::Forward => (f(x, &up, params)? - f0) / h,
        };
        bc.set_column(j, &col);
    }
    Ok((ac, bc))
}

pub fn linearize(dep: &DriftEquilibrium, params: &VehicleParams, dt: f64) -> Result<LinearModel> {
    linearize_with(dep, params, dt, FdScheme::Central)
}

/// Euler discretisation `A = I + A_c dt`, `B = B_c dt`, with the offset chosen
/// so that the equilibrium is a fixed point of the affine model.
pub fn linearize_with(
    dep: &DriftEquilibrium,
    params: &VehicleParams,
    dt: f64,
    scheme: FdScheme,
) -> Result<LinearModel> {
    let x = dep.state().to_vector();
    let u = Vector2::new(dep.delta, dep.f_xr);
    let (ac, bc) = continuous_jacobians(&x, &u, params, scheme)?;
    let a = Matrix3::identity() + ac * dt;
    let b = bc * dt;
    let d = x - a * x - b * u;
    Ok(LinearModel { a, b, d })
}

pub fn augment(model: &LinearModel) -> AugmentedModel {
    let mut a_hat = Matrix5::zeros();
    a_hat.fixed_view_mut::<3, 3>(0, 0).copy_from(&model.a);
    a_hat.fixed_view_mut::<3, 2>(0, 3).copy_from(&model.b);
    a_hat.fixed_view_mut::<2, 2>(3, 3).copy_from(&Matrix2::identity());
    let mut b_hat = Matrix5x2::zeros();
    b_hat.fixed_view_mut::<3, 2>(0, 0).copy_from(&model.b);
    b_hat.fixed_view_mut::<2, 2>(3, 0).copy_from(&Matrix2::identity());
    let mut d_hat = Vector5::zeros();
    d_hat.fixed_rows_mut::<3>(0).copy_from(&model.d);
    AugmentedModel { a_hat, b_hat, d_hat }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::equilibrium::solve_dep;

    fn dep() -> (DriftEquilibrium, VehicleParams) {
        let p = VehicleParams::default();
        (solve_dep(-0.52, 40.0, &p, None).unwrap(), p)
    }

    #[test]
    fn affine_identity_at_equilibrium() {
        let (dep, p) = dep();
        let m = linearize(&dep, &p, 0.1).unwrap();
        let x = dep.state().to_vector();
        let u = Vector2::new(dep.delta, dep.f_xr);
        assert!((m.predict(&x, &u) - x).amax() < 1e-10);
    }

    #[test]
    fn schemes_agree() {
        let (dep, p) = dep();
        let x = dep.state().to_vector();
        let u = Vector2::new(dep.delta, dep.f_xr);
        let (ac, bc) = continuous_jacobians(&x, &u, &p, FdScheme::Central).unwrap();
        let (af, bf) = continuous_jacobians(&x, &u, &p, FdScheme::Forward).unwrap();
        assert!((ac - af).amax() <= 1e-4 * ac.amax());
        assert!((bc - bf).amax() <= 1e-4 * bc.amax());
    }

    #[test]
    fn zero_period_limit() {
        let (dep, p) = dep();
        let m = linearize(&dep, &p, 1e-9).unwrap();
        assert!((m.a - Matrix3::identity()).amax() < 1e-6);
        assert!(m.b.amax() < 1e-6);
    }

    #[test]
    fn augmented_blocks_and_fixed_point() {
        let (dep, p) = dep();
        let m = linearize(&dep, &p, 0.1).unwrap();
        let aug = augment(&m);
        assert_eq!(aug.blocks(), m);
        assert_eq!(aug.a_hat.fixed_view::<2, 3>(3, 0).amax(), 0.0);
        assert_eq!(aug.b_hat.fixed_view::<3, 2>(0, 0).into_owned(), m.b);
        let xi = Vector5::new(dep.v + 0.5, dep.beta, dep.r - 0.1, -0.3, 4000.0);
        let next = aug.propagate(&xi, &Vector2::zeros());
        assert_eq!((next[3], next[4]), (xi[3], xi[4]));
        let eq = dep.xi();
        assert!((aug.propagate(&eq, &Vector2::zeros()) - eq).amax() < 1e-9);
    }
}
