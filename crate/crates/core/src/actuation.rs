//! Hexacopter actuation: pseudo-inverse allocation in squared rotor speed,
//! first-order motors with speed limits, and the applied torque.
//!
//! Body axes are x forward, y right, z down; each rotor thrusts along `−z`.

use nalgebra::{DMatrix, DVector, Vector3};
use std::f64::consts::PI;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ActuationError {
    #[error("effectiveness matrix is rank deficient (σ_min/σ_max = {0:.3e})")]
    RankDeficient(f64),
    #[error("invalid {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
}

fn invalid(name: &'static str, reason: impl Into<String>) -> ActuationError {
    ActuationError::InvalidParameter { name, reason: reason.into() }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rotor {
    /// Position in the body frame (m); only x and y enter the torques.
    pub position: Vector3<f64>,
    /// `+1` when the rotor's drag torque on the body points along `+z`.
    pub spin: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RotorGeometry {
    pub rotors: Vec<Rotor>,
    /// Thrust coefficient, N/(rad/s)².
    pub kf: f64,
    /// Drag-torque coefficient, N·m/(rad/s)².
    pub km: f64,
}

impl RotorGeometry {
    /// Regular hexagon with the first arm on `+x`, spins alternating.
    pub fn hexagon(arm_length: f64, kf: f64, km: f64) -> Result<Self, ActuationError> {
        if !(arm_length > 0.0) {
            return Err(invalid("arm_length", format!("must be positive, got {arm_length}")));
        }
        if !(kf > 0.0) {
            return Err(invalid("kf", format!("must be positive, got {kf}")));
        }
        if !(km > 0.0) {
            return Err(invalid("km", format!("must be positive, got {km}")));
        }
        let rotors = (0..6)
            .map(|i| {
                let a = i as f64 * PI / 3.0;
                Rotor {
                    position: Vector3::new(arm_length * a.cos(), arm_length * a.sin(), 0.0),
                    spin: if i % 2 == 0 { 1.0 } else { -1.0 },
                }
            })
            .collect();
        Ok(Self { rotors, kf, km })
    }

    /// Rows `(thrust, τ_x, τ_y, τ_z)` per unit squared speed.
    pub fn effectiveness_matrix(&self) -> DMatrix<f64> {
        let n = self.rotors.len();
        let mut b = DMatrix::zeros(4, n);
        for (j, r) in self.rotors.iter().enumerate() {
            // r × (0, 0, −k_f) = (−k_f y, k_f x, 0)
            b[(0, j)] = self.kf;
            b[(1, j)] = -self.kf * r.position.y;
            b[(2, j)] = self.kf * r.position.x;
            b[(3, j)] = self.km * r.spin;
        }
        b
    }
}

/// Minimum-norm allocation `u = B⁺ [T; τ]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Allocator {
    b: DMatrix<f64>,
    pinv: DMatrix<f64>,
}

impl Allocator {
    pub fn new(b: DMatrix<f64>) -> Result<Self, ActuationError> {
        if b.nrows() != 4 || b.ncols() < 4 {
            return Err(invalid("effectiveness", format!("expected 4×n with n ≥ 4, got {:?}", b.shape())));
        }
        let sv = b.clone().svd(false, false).singular_values;
        let (lo, hi) = (sv.min(), sv.max());
        if !(hi > 0.0) || lo / hi < 1e-9 {
            return Err(ActuationError::RankDeficient(if hi > 0.0 { lo / hi } else { 0.0 }));
        }
        let bbt = &b * b.transpose();
        let inv = bbt.cholesky().ok_or(ActuationError::RankDeficient(lo / hi))?.inverse();
        let pinv = b.transpose() * inv;
        Ok(Self { b, pinv })
    }

    pub fn effectiveness(&self) -> &DMatrix<f64> {
        &self.b
    }

    pub fn pseudo_inverse(&self) -> &DMatrix<f64> {
        &self.pinv
    }

    /// Squared-speed commands, before saturation.
    pub fn allocate(&self, tau: &Vector3<f64>, thrust: f64) -> DVector<f64> {
        let c = DVector::from_vec(vec![thrust, tau.x, tau.y, tau.z]);
        &self.pinv * c
    }

    /// `(thrust, τ)` produced by the given squared speeds.
    pub fn applied(&self, squared: &DVector<f64>) -> (f64, Vector3<f64>) {
        let y = &self.b * squared;
        (y[0], Vector3::new(y[1], y[2], y[3]))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MotorParams {
    /// First-order time constant on squared speed (s).
    pub time_constant: f64,
    pub min_speed: f64,
    pub max_speed: f64,
}

impl MotorParams {
    pub fn new(time_constant: f64, min_speed: f64, max_speed: f64) -> Result<Self, ActuationError> {
        if !(time_constant > 0.0) {
            return Err(invalid("time_constant", format!("must be positive, got {time_constant}")));
        }
        if !(min_speed >= 0.0 && max_speed > min_speed) {
            return Err(invalid("speed limits", format!("need 0 ≤ min < max, got [{min_speed}, {max_speed}]")));
        }
        Ok(Self { time_constant, min_speed, max_speed })
    }

    pub fn clamp(&self, squared: f64) -> f64 {
        squared.clamp(self.min_speed * self.min_speed, self.max_speed * self.max_speed)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActuatorState {
    /// Current squared rotor speeds, rad²/s².
    pub squared: DVector<f64>,
    pub params: MotorParams,
}

impl ActuatorState {
    pub fn new(squared: DVector<f64>, params: MotorParams) -> Self {
        let squared = squared.map(|s| params.clamp(s));
        Self { squared, params }
    }

    pub fn speeds(&self) -> DVector<f64> {
        self.squared.map(f64::sqrt)
    }

    /// `ṡ = (sat(cmd) − s)/T`.
    pub fn derivative(params: &MotorParams, squared: &DVector<f64>, cmd: &DVector<f64>) -> DVector<f64> {
        DVector::from_fn(squared.len(), |i, _| (params.clamp(cmd[i]) - squared[i]) / params.time_constant)
    }
}

/// Exact first-order step toward the clamped command with `cmd` held.
pub fn motor_step(a: &ActuatorState, cmd: &DVector<f64>, dt: f64) -> ActuatorState {
    let decay = (-dt / a.params.time_constant).exp();
    let squared = DVector::from_fn(a.squared.len(), |i, _| {
        let c = a.params.clamp(cmd[i]);
        a.params.clamp(c + (a.squared[i] - c) * decay)
    });
    ActuatorState { squared, params: a.params }
}

pub fn applied_torque(a: &ActuatorState, alloc: &Allocator) -> (f64, Vector3<f64>) {
    alloc.applied(&a.squared)
}
