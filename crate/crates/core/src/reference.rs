//! Double-flip command and the second-order geometric reference filter.

use crate::integrator::{rkmk4_step, LieState, Tangent};
use crate::so3::{attitude_error, attitude_error_vector, exp_so3, RotationMatrix};
use nalgebra::{DVector, Vector3};
use std::f64::consts::PI;

/// Two roll revolutions on `[0, 2]`, two pitch revolutions on `(2.5, 4.5]`,
/// identity otherwise.
pub fn raw_maneuver(t: f64) -> RotationMatrix {
    if (0.0..=2.0).contains(&t) {
        exp_so3(&(Vector3::x() * (2.0 * PI * t)))
    } else if t > 2.5 && t <= 4.5 {
        exp_so3(&(Vector3::y() * (2.0 * PI * (t - 2.5))))
    } else {
        RotationMatrix::identity()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceSample {
    pub r_d: RotationMatrix,
    pub omega_d: Vector3<f64>,
    pub omega_d_dot: Vector3<f64>,
    pub t: f64,
}

/// `Ṙ_d = R_d ω̂_d`, `ω̇_d = −k_p e(targetᵀR_d) − k_d ω_d`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceFilter {
    pub r_d: RotationMatrix,
    pub omega_d: Vector3<f64>,
    pub t: f64,
    kp: f64,
    kd: f64,
}

impl ReferenceFilter {
    pub fn new(r_d: RotationMatrix, natural_frequency: f64, damping_ratio: f64) -> Self {
        Self {
            r_d,
            omega_d: Vector3::zeros(),
            t: 0.0,
            kp: natural_frequency * natural_frequency,
            kd: 2.0 * damping_ratio * natural_frequency,
        }
    }

    /// 15 rad/s, damping 0.707.
    pub fn standard(r_d: RotationMatrix) -> Self {
        Self::new(r_d, 15.0, 0.707)
    }

    pub fn gains(&self) -> (f64, f64) {
        (self.kp, self.kd)
    }

    pub fn acceleration(&self, target: &RotationMatrix, r_d: &RotationMatrix, omega_d: &Vector3<f64>) -> Vector3<f64> {
        let e = attitude_error_vector(&attitude_error(target, r_d));
        -self.kp * e - self.kd * omega_d
    }

    pub fn sample(&self, target: &RotationMatrix) -> ReferenceSample {
        ReferenceSample {
            r_d: self.r_d,
            omega_d: self.omega_d,
            omega_d_dot: self.acceleration(target, &self.r_d, &self.omega_d),
            t: self.t,
        }
    }

    /// Advances over `dt` with `target` held and returns the new sample.
    pub fn filter_step(&mut self, target: &RotationMatrix, dt: f64) -> ReferenceSample {
        debug_assert!(dt > 0.0);
        let s = LieState {
            rotations: vec![self.r_d],
            x: DVector::from_column_slice(self.omega_d.as_slice()),
        };
        let next = rkmk4_step(&s, dt, |rs, x| {
            let w = Vector3::new(x[0], x[1], x[2]);
            let a = self.acceleration(target, &rs[0], &w);
            Tangent { omegas: vec![w], x_dot: DVector::from_column_slice(a.as_slice()) }
        });
        self.r_d = next.rotations[0];
        self.omega_d = Vector3::new(next.x[0], next.x[1], next.x[2]);
        self.t += dt;
        self.sample(target)
    }
}
