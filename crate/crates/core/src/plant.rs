//! Rigid-body rotational dynamics `J ω̇ = τ − ω × Jω − κω`, `Ṙ = R ω̂`.

use crate::integrator::{rkmk4_step, LieState, Tangent};
use crate::so3::{project_to_so3, RotationMatrix};
use nalgebra::{DVector, Matrix3, Vector3};
use thiserror::Error;

/// Long runs re-project the attitude onto SO(3) after this many steps.
pub const PROJECTION_INTERVAL: usize = 1000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlantError {
    #[error("inertia is not symmetric (asymmetry {0:.3e})")]
    InertiaNotSymmetric(f64),
    #[error("inertia is not positive definite")]
    InertiaNotPositive,
    #[error("non-finite entry in {0}")]
    NonFinite(&'static str),
}

/// Inertia `J` (kg·m²) and rotational damping `κ` (N·m·s/rad).
///
/// The aerodynamic parameter vector of the general model has no role for a
/// multicopter and is not represented.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantParams {
    inertia: Matrix3<f64>,
    inertia_inv: Matrix3<f64>,
    damping: Matrix3<f64>,
}

impl PlantParams {
    pub fn new(inertia: Matrix3<f64>, damping: Matrix3<f64>) -> Result<Self, PlantError> {
        if inertia.iter().any(|v| !v.is_finite()) {
            return Err(PlantError::NonFinite("inertia"));
        }
        if damping.iter().any(|v| !v.is_finite()) {
            return Err(PlantError::NonFinite("damping"));
        }
        let asym = (inertia - inertia.transpose()).amax();
        if asym > 1e-12 * inertia.amax().max(1.0) {
            return Err(PlantError::InertiaNotSymmetric(asym));
        }
        let chol = inertia.cholesky().ok_or(PlantError::InertiaNotPositive)?;
        Ok(Self { inertia, inertia_inv: chol.inverse(), damping })
    }

    /// Diagonal inertia with scalar damping `κ I`.
    pub fn diagonal(j: Vector3<f64>, kappa: f64) -> Result<Self, PlantError> {
        Self::new(Matrix3::from_diagonal(&j), Matrix3::identity() * kappa)
    }

    pub fn inertia(&self) -> &Matrix3<f64> {
        &self.inertia
    }
    pub fn inertia_inv(&self) -> &Matrix3<f64> {
        &self.inertia_inv
    }
    pub fn damping(&self) -> &Matrix3<f64> {
        &self.damping
    }

    /// `ω × Jω + κω`, the torque that holds `ω` constant.
    pub fn bias_torque(&self, omega: &Vector3<f64>) -> Vector3<f64> {
        omega.cross(&(self.inertia * omega)) + self.damping * omega
    }

    pub fn kinetic_energy(&self, omega: &Vector3<f64>) -> f64 {
        0.5 * omega.dot(&(self.inertia * omega))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BodyState {
    pub r: RotationMatrix,
    pub omega: Vector3<f64>,
}

impl BodyState {
    pub fn at_rest(r: RotationMatrix) -> Self {
        Self { r, omega: Vector3::zeros() }
    }
}

/// `ω̇ = J⁻¹(τ − ω × Jω − κω)`.
pub fn body_derivative(omega: &Vector3<f64>, tau: &Vector3<f64>, p: &PlantParams) -> Vector3<f64> {
    p.inertia_inv * (tau - p.bias_torque(omega))
}

/// One RKMK4 step with `τ` held over the step.
pub fn integrate_step(s: &BodyState, tau: &Vector3<f64>, p: &PlantParams, dt: f64) -> BodyState {
    debug_assert!(dt > 0.0);
    let ls = LieState {
        rotations: vec![s.r],
        x: DVector::from_column_slice(s.omega.as_slice()),
    };
    let next = rkmk4_step(&ls, dt, |_, x| {
        let w = Vector3::new(x[0], x[1], x[2]);
        let wd = body_derivative(&w, tau, p);
        Tangent { omegas: vec![w], x_dot: DVector::from_column_slice(wd.as_slice()) }
    });
    let LieState { mut rotations, x } = next;
    BodyState { r: rotations.remove(0), omega: Vector3::new(x[0], x[1], x[2]) }
}

/// Projects back onto SO(3); a no-op up to rounding for states produced by
/// [`integrate_step`].
pub fn reproject(r: &RotationMatrix) -> RotationMatrix {
    project_to_so3(r.matrix()).unwrap_or(*r)
}
