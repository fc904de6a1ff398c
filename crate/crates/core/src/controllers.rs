//! Cascaded NDI laws: rate loop with model inversion, geometric attitude
//! loop, sensor path and an Euler-angle baseline.

use crate::lti::{lag_filter, pade_delay, LtiError, StateSpace};
use crate::plant::PlantParams;
use crate::so3::{attitude_error, attitude_error_vector, exp_so3, RotationMatrix};
use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use std::f64::consts::PI;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ControlError {
    #[error("{0}")]
    Dimension(String),
    #[error(transparent)]
    Lti(#[from] LtiError),
}

fn v3(x: &DVector<f64>) -> Vector3<f64> {
    Vector3::new(x[0], x[1], x[2])
}

fn dv(v: &Vector3<f64>) -> DVector<f64> {
    DVector::from_column_slice(v.as_slice())
}

fn stack(a: &Vector3<f64>, b: &Vector3<f64>) -> DVector<f64> {
    DVector::from_iterator(6, a.iter().chain(b.iter()).copied())
}

fn mat3(m: &Matrix3<f64>) -> DMatrix<f64> {
    DMatrix::from_column_slice(3, 3, m.as_slice())
}

/// `ẋ = A x + B_ω ω + B_ref ω_ref`, `ν = C x + D_ω ω + D_ref ω_ref`,
/// `τ = ω × Jω + κω + J ν`.
#[derive(Debug, Clone, PartialEq)]
pub struct RateController {
    realization: StateSpace,
    model: PlantParams,
    pub state: DVector<f64>,
}

impl RateController {
    /// `realization` takes the stacked input `(ω, ω_ref)`.
    pub fn new(realization: StateSpace, model: PlantParams) -> Result<Self, ControlError> {
        if realization.input_dim() != 6 || realization.output_dim() != 3 {
            return Err(ControlError::Dimension(format!(
                "rate law must map (ω, ω_ref) to 3 outputs, got {}→{}",
                realization.input_dim(),
                realization.output_dim()
            )));
        }
        let state = DVector::zeros(realization.state_dim());
        Ok(Self { realization, model, state })
    }

    /// `D_ω = −K`, `D_ref = K`, no states.
    pub fn proportional(k: &Matrix3<f64>, model: PlantParams) -> Self {
        let mut d = DMatrix::zeros(3, 6);
        d.view_mut((0, 0), (3, 3)).copy_from(&mat3(&(-k)));
        d.view_mut((0, 3), (3, 3)).copy_from(&mat3(k));
        Self::new(StateSpace::gain(d), model).expect("3×6 gain")
    }

    /// Compensator acting on `ω_ref − S(ω)`, where `S` is the optional
    /// feedback filter.
    pub fn from_compensator(
        compensator: &StateSpace,
        feedback: Option<&StateSpace>,
        model: PlantParams,
    ) -> Result<Self, ControlError> {
        Self::new(error_path(compensator, feedback)?, model)
    }

    pub fn realization(&self) -> &StateSpace {
        &self.realization
    }

    pub fn model(&self) -> &PlantParams {
        &self.model
    }

    /// Desired acceleration `ν`.
    pub fn desired_acceleration(&self, x: &DVector<f64>, omega: &Vector3<f64>, omega_ref: &Vector3<f64>) -> Vector3<f64> {
        let u = stack(omega, omega_ref);
        v3(&(self.realization.c() * x + self.realization.d() * u))
    }

    pub fn state_derivative(&self, x: &DVector<f64>, omega: &Vector3<f64>, omega_ref: &Vector3<f64>) -> DVector<f64> {
        self.realization.derivative(x, &stack(omega, omega_ref))
    }

    /// Inverts the model so that `ω̇ = ν`.
    pub fn torque(&self, omega: &Vector3<f64>, nu: &Vector3<f64>) -> Vector3<f64> {
        self.model.bias_torque(omega) + self.model.inertia() * nu
    }

    /// Returns the torque for the current state, then advances the state
    /// over `dt` with the inputs held.
    pub fn rate_ndi(&mut self, omega_meas: &Vector3<f64>, omega_ref: &Vector3<f64>, dt: f64) -> Vector3<f64> {
        let nu = self.desired_acceleration(&self.state, omega_meas, omega_ref);
        let tau = self.torque(omega_meas, &nu);
        if self.realization.state_dim() > 0 {
            self.state = self
                .realization
                .step(&self.state, &stack(omega_meas, omega_ref), dt)
                .expect("dimensions checked at construction");
        }
        tau
    }

    /// `𝒜_ω = [[A, B_ω], [C, D_ω]]`, the closed loop of `(x_ω, ω)`.
    pub fn closed_loop_matrix(&self) -> DMatrix<f64> {
        let r = &self.realization;
        let n = r.state_dim();
        let mut m = DMatrix::zeros(n + 3, n + 3);
        m.view_mut((0, 0), (n, n)).copy_from(r.a());
        m.view_mut((0, n), (n, 3)).copy_from(&r.b().columns(0, 3));
        m.view_mut((n, 0), (3, n)).copy_from(r.c());
        m.view_mut((n, n), (3, 3)).copy_from(&r.d().columns(0, 3));
        m
    }

    /// Input matrix of the closed loop, `[B_ref; D_ref]`.
    pub fn closed_loop_input(&self) -> DMatrix<f64> {
        let r = &self.realization;
        let n = r.state_dim();
        let mut m = DMatrix::zeros(n + 3, 3);
        m.view_mut((0, 0), (n, 3)).copy_from(&r.b().columns(3, 3));
        m.view_mut((n, 0), (3, 3)).copy_from(&r.d().columns(3, 3));
        m
    }
}

/// Realization of `K(ω_ref − S(ω))` with input `(ω, ω_ref)`.
pub fn error_path(compensator: &StateSpace, feedback: Option<&StateSpace>) -> Result<StateSpace, ControlError> {
    if compensator.input_dim() != 3 || compensator.output_dim() != 3 {
        return Err(ControlError::Dimension("compensator must be 3→3".into()));
    }
    let mut diff = DMatrix::zeros(3, 6);
    diff.view_mut((0, 0), (3, 3)).copy_from(&(-DMatrix::identity(3, 3)));
    diff.view_mut((0, 3), (3, 3)).copy_from(&DMatrix::identity(3, 3));
    let diff = StateSpace::gain(diff);
    let front = match feedback {
        Some(s) => {
            if s.input_dim() != 3 || s.output_dim() != 3 {
                return Err(ControlError::Dimension("feedback filter must be 3→3".into()));
            }
            StateSpace::diagonal(&[s.clone(), StateSpace::identity(3)]).series(&diff)?
        }
        None => diff,
    };
    Ok(front.series(compensator)?)
}

/// `ω_cmd = [R_eᵀω_d] + C x + D e_R`, `ẋ = A x + B e_R`.
#[derive(Debug, Clone, PartialEq)]
pub struct AttitudeController {
    realization: StateSpace,
    pub state: DVector<f64>,
    pub feedforward: bool,
}

impl AttitudeController {
    pub fn new(realization: StateSpace, feedforward: bool) -> Result<Self, ControlError> {
        if realization.input_dim() != 3 || realization.output_dim() != 3 {
            return Err(ControlError::Dimension(format!(
                "attitude compensator must be 3→3, got {}→{}",
                realization.input_dim(),
                realization.output_dim()
            )));
        }
        let state = DVector::zeros(realization.state_dim());
        Ok(Self { realization, state, feedforward })
    }

    /// `D_R = −K`.
    pub fn proportional(k: &Matrix3<f64>, feedforward: bool) -> Self {
        Self::new(StateSpace::gain(mat3(&(-k))), feedforward).expect("3×3 gain")
    }

    pub fn realization(&self) -> &StateSpace {
        &self.realization
    }

    pub fn command(&self, x: &DVector<f64>, r_e: &RotationMatrix, omega_d: &Vector3<f64>) -> Vector3<f64> {
        let e = attitude_error_vector(r_e);
        let mut w = v3(&(self.realization.c() * x + self.realization.d() * dv(&e)));
        if self.feedforward {
            w += r_e.transpose().rotate(omega_d);
        }
        w
    }

    pub fn state_derivative(&self, x: &DVector<f64>, r_e: &RotationMatrix) -> DVector<f64> {
        self.realization.derivative(x, &dv(&attitude_error_vector(r_e)))
    }

    /// Returns the rate command for the current state, then advances the
    /// state over `dt` with `e_R` held.
    pub fn attitude_ndi(
        &mut self,
        r_d: &RotationMatrix,
        r: &RotationMatrix,
        omega_d: &Vector3<f64>,
        dt: f64,
    ) -> Vector3<f64> {
        let r_e = attitude_error(r_d, r);
        let w = self.command(&self.state, &r_e, omega_d);
        if self.realization.state_dim() > 0 {
            let e = dv(&attitude_error_vector(&r_e));
            self.state = self.realization.step(&self.state, &e, dt).expect("dimensions checked at construction");
        }
        w
    }
}

/// Extra desired acceleration for tracking, `R_eᵀω̇_d − ω̂_e R_eᵀω_d`.
pub fn tracking_cancellation(
    r_e: &RotationMatrix,
    omega_e: &Vector3<f64>,
    omega_d: &Vector3<f64>,
    omega_d_dot: &Vector3<f64>,
) -> Vector3<f64> {
    let ret = r_e.transpose();
    ret.rotate(omega_d_dot) - omega_e.cross(&ret.rotate(omega_d))
}

/// Per-channel delay (Padé) followed by a first-order lag.
#[derive(Debug, Clone, PartialEq)]
pub struct SensorModel {
    realization: StateSpace,
    pub state: DVector<f64>,
}

impl SensorModel {
    pub fn new(delay: f64, pade_order: usize, cutoff_hz: f64) -> Result<Self, ControlError> {
        let chain = pade_delay(delay, pade_order)?.series(&lag_filter(cutoff_hz)?)?;
        let realization = StateSpace::diagonal(&[chain.clone(), chain.clone(), chain]);
        let state = DVector::zeros(realization.state_dim());
        Ok(Self { realization, state })
    }

    /// 5 ms delay, third-order Padé, 100 Hz lag.
    pub fn standard() -> Self {
        Self::new(0.005, 3, 100.0).expect("valid constants")
    }

    pub fn realization(&self) -> &StateSpace {
        &self.realization
    }

    pub fn output(&self, x: &DVector<f64>, omega: &Vector3<f64>) -> Vector3<f64> {
        v3(&(self.realization.c() * x + self.realization.d() * dv(omega)))
    }

    pub fn state_derivative(&self, x: &DVector<f64>, omega: &Vector3<f64>) -> DVector<f64> {
        self.realization.derivative(x, &dv(omega))
    }

    /// Advances over `dt` with the input held and returns the new reading.
    pub fn sense(&mut self, omega_true: &Vector3<f64>, dt: f64) -> Vector3<f64> {
        let u = dv(omega_true);
        self.state = self.realization.step(&self.state, &u, dt).expect("dimensions fixed");
        self.output(&self.state, omega_true)
    }
}

/// ZYX Euler angles `(φ, θ, ψ)` with `R = R_z(ψ) R_y(θ) R_x(φ)`.
pub fn euler_zyx(r: &RotationMatrix) -> Vector3<f64> {
    let m = r.matrix();
    Vector3::new(
        m[(2, 1)].atan2(m[(2, 2)]),
        (-m[(2, 0)]).clamp(-1.0, 1.0).asin(),
        m[(1, 0)].atan2(m[(0, 0)]),
    )
}

pub fn from_euler_zyx(phi: &Vector3<f64>) -> RotationMatrix {
    let rx = exp_so3(&(Vector3::x() * phi[0]));
    let ry = exp_so3(&(Vector3::y() * phi[1]));
    let rz = exp_so3(&(Vector3::z() * phi[2]));
    rz.compose(&ry).compose(&rx)
}

/// Below this `|cos θ|` the Euler kinematics are treated as singular.
pub const EULER_SINGULAR_COS: f64 = 1e-6;

/// `Φ̇ = W(Φ) ω`. Returns the matrix and whether `cos θ` had to be
/// saturated.
pub fn euler_rate_matrix(phi: &Vector3<f64>) -> (Matrix3<f64>, bool) {
    let (sf, cf) = phi[0].sin_cos();
    let (st, ct) = phi[1].sin_cos();
    let singular = ct.abs() < EULER_SINGULAR_COS;
    let ct = if singular { EULER_SINGULAR_COS.copysign(ct) } else { ct };
    let w = Matrix3::new(
        1.0, sf * st / ct, cf * st / ct,
        0.0, cf, -sf,
        0.0, sf / ct, cf / ct,
    );
    (w, singular)
}

fn wrap_angle(a: f64) -> f64 {
    let w = (a + PI).rem_euclid(2.0 * PI) - PI;
    if w == -PI { PI } else { w }
}

/// Outer loop of the Euler-angle NDI baseline.
///
/// `Φ̇_cmd = C x + D e_Φ (+ Φ̇_d)`, `ω_cmd = W(Φ)⁻¹ Φ̇_cmd`, with
/// `e_Φ = wrap(Φ − Φ_d)` and `ẋ = A x + B e_Φ`. The reference arrives as
/// Euler angles; see [`euler_reference_rate`] for propagating it from `ω_d`.
#[derive(Debug, Clone, PartialEq)]
pub struct EulerBaseline {
    realization: StateSpace,
    pub state: DVector<f64>,
    pub feedforward: bool,
}

/// Output of the baseline law.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EulerCommand {
    pub omega_cmd: Vector3<f64>,
    pub error: Vector3<f64>,
    pub singular: bool,
}

/// `Φ̇_d = W(Φ_d) ω_d`, and whether `W` was saturated.
pub fn euler_reference_rate(phi_d: &Vector3<f64>, omega_d: &Vector3<f64>) -> (Vector3<f64>, bool) {
    let (w, singular) = euler_rate_matrix(phi_d);
    (w * omega_d, singular)
}

impl EulerBaseline {
    pub fn new(realization: StateSpace, feedforward: bool) -> Result<Self, ControlError> {
        if realization.input_dim() != 3 || realization.output_dim() != 3 {
            return Err(ControlError::Dimension("attitude compensator must be 3→3".into()));
        }
        let state = DVector::zeros(realization.state_dim());
        Ok(Self { realization, state, feedforward })
    }

    pub fn realization(&self) -> &StateSpace {
        &self.realization
    }

    pub fn command(
        &self,
        x: &DVector<f64>,
        phi_d: &Vector3<f64>,
        phi_d_dot: &Vector3<f64>,
        r: &RotationMatrix,
    ) -> EulerCommand {
        let phi = euler_zyx(r);
        let e = (phi - phi_d).map(wrap_angle);
        let mut rate = v3(&(self.realization.c() * x + self.realization.d() * dv(&e)));
        if self.feedforward {
            rate += phi_d_dot;
        }
        let (w, singular) = euler_rate_matrix(&phi);
        let omega_cmd = w.lu().solve(&rate).unwrap_or_else(|| Vector3::repeat(f64::INFINITY));
        EulerCommand { omega_cmd, error: e, singular }
    }

    pub fn state_derivative(&self, x: &DVector<f64>, error: &Vector3<f64>) -> DVector<f64> {
        self.realization.derivative(x, &dv(error))
    }

    /// Returns the command for the current state, then advances the state
    /// over `dt` with `e_Φ` held.
    pub fn euler_ndi(
        &mut self,
        phi_d: &Vector3<f64>,
        phi_d_dot: &Vector3<f64>,
        r: &RotationMatrix,
        dt: f64,
    ) -> EulerCommand {
        let cmd = self.command(&self.state, phi_d, phi_d_dot, r);
        if self.realization.state_dim() > 0 {
            self.state = self.realization.step(&self.state, &dv(&cmd.error), dt).expect("dimensions fixed");
        }
        cmd
    }
}
