//! Scenario files (TOML). Every section and key is optional; unknown keys
//! are rejected.

use crate::actuation::{ActuationError, Allocator, MotorParams, RotorGeometry};
use crate::controllers::{AttitudeController, ControlError, EulerBaseline, RateController, SensorModel};
use crate::lti::{make_lead_lag, StateSpace};
use crate::plant::PlantParams;
use nalgebra::{DVector, Matrix3, Vector3};
use serde::Deserialize;
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("invalid {field}: {reason}")]
    Validation { field: String, reason: String },
}

fn invalid(field: &str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Validation { field: field.into(), reason: reason.into() }
}

/// A scalar applied to all three axes, or one value per axis.
#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum Axes {
    Scalar(f64),
    PerAxis([f64; 3]),
}

impl Axes {
    pub fn get(&self, i: usize) -> f64 {
        match self {
            Axes::Scalar(v) => *v,
            Axes::PerAxis(v) => v[i],
        }
    }
    pub fn vector(&self) -> Vector3<f64> {
        Vector3::new(self.get(0), self.get(1), self.get(2))
    }
}

/// Scalar (times identity), diagonal, or full row-major 3×3.
#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum Matrix3Spec {
    Scalar(f64),
    Diagonal([f64; 3]),
    Full([[f64; 3]; 3]),
}

impl Matrix3Spec {
    pub fn matrix(&self) -> Matrix3<f64> {
        match self {
            Matrix3Spec::Scalar(v) => Matrix3::identity() * *v,
            Matrix3Spec::Diagonal(d) => Matrix3::from_diagonal(&Vector3::from(*d)),
            Matrix3Spec::Full(m) => Matrix3::from_fn(|i, j| m[i][j]),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlantConfig {
    pub inertia: Matrix3Spec,
    pub damping: Matrix3Spec,
}

impl Default for PlantConfig {
    fn default() -> Self {
        Self {
            inertia: Matrix3Spec::Diagonal([0.0213, 0.0222, 0.0409]),
            damping: Matrix3Spec::Scalar(0.009),
        }
    }
}

/// `kp + ki/(s + eps) + kd·s/(tau·s + 1)` per axis.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompensatorConfig {
    pub kp: Axes,
    #[serde(default = "zero_axes")]
    pub ki: Axes,
    #[serde(default = "zero_axes")]
    pub kd: Axes,
    #[serde(default = "default_eps")]
    pub eps: Axes,
    #[serde(default = "default_tau")]
    pub tau: Axes,
}

fn zero_axes() -> Axes {
    Axes::Scalar(0.0)
}
fn default_eps() -> Axes {
    Axes::Scalar(0.001)
}
fn default_tau() -> Axes {
    Axes::Scalar(10.0)
}

impl CompensatorConfig {
    pub fn proportional(k: f64) -> Self {
        Self { kp: Axes::Scalar(k), ki: zero_axes(), kd: zero_axes(), eps: default_eps(), tau: default_tau() }
    }

    /// Per-axis realization stacked block-diagonally.
    pub fn realization(&self, field: &str) -> Result<StateSpace, ConfigError> {
        let mut blocks = Vec::with_capacity(3);
        for i in 0..3 {
            let b = make_lead_lag(self.kp.get(i), self.ki.get(i), self.kd.get(i), self.eps.get(i), self.tau.get(i))
                .map_err(|e| invalid(field, e.to_string()))?;
            blocks.push(b);
        }
        Ok(StateSpace::diagonal(&blocks))
    }

    fn check_finite(&self, field: &str) -> Result<(), ConfigError> {
        for (name, a) in [("kp", self.kp), ("ki", self.ki), ("kd", self.kd), ("eps", self.eps), ("tau", self.tau)] {
            if (0..3).any(|i| !a.get(i).is_finite()) {
                return Err(invalid(&format!("{field}.{name}"), "must be finite"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControllerKind {
    Geometric,
    Euler,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InnerLoop {
    /// Rate loop with model inversion driving the rigid body.
    Ndi,
    /// The body follows the rate command exactly (kinematics only).
    Ideal,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ControllerConfig {
    pub kind: ControllerKind,
    pub feedforward: bool,
    pub tracking_cancellation: bool,
    pub inner_loop: InnerLoop,
    pub attitude: CompensatorConfig,
    pub rate: CompensatorConfig,
}

/// Default gains: PD attitude loop `−45 − 2s/(0.01s + 1)` over a
/// proportional rate loop `K_ω = 10`. The cascade closes near 21 rad/s with
/// damping about 0.7 and certifies with the standard sensor path.
impl Default for ControllerConfig {
    fn default() -> Self {
        Self {
            kind: ControllerKind::Geometric,
            feedforward: true,
            tracking_cancellation: false,
            inner_loop: InnerLoop::Ndi,
            attitude: CompensatorConfig {
                kp: Axes::Scalar(-45.0),
                ki: zero_axes(),
                kd: Axes::Scalar(-2.0),
                eps: default_eps(),
                tau: Axes::Scalar(0.01),
            },
            rate: CompensatorConfig::proportional(10.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SensorConfig {
    pub enabled: bool,
    pub delay: f64,
    pub pade_order: usize,
    pub cutoff_hz: f64,
    /// Standard deviation of white gyro noise (rad/s), drawn once per step
    /// from `sim.seed` and added to the rate feedback.
    pub noise_std: f64,
}

impl Default for SensorConfig {
    fn default() -> Self {
        Self { enabled: true, delay: 0.005, pade_order: 3, cutoff_hz: 100.0, noise_std: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ActuationConfig {
    pub enabled: bool,
    pub arm_length: f64,
    pub kf: f64,
    pub km: f64,
    pub mass: f64,
    pub gravity: f64,
    pub min_speed: f64,
    pub max_speed: f64,
    pub time_constant: f64,
}

impl Default for ActuationConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            arm_length: 0.25,
            kf: 1.2e-5,
            km: 2e-7,
            mass: 1.6,
            gravity: 9.81,
            min_speed: 100.0,
            max_speed: 1000.0,
            time_constant: 0.02,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ManeuverKind {
    DoubleFlip,
    Regulation,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ManeuverConfig {
    pub kind: ManeuverKind,
    /// Regulation start `exp(angle·axiŝ)`; ignored when `random_initial`.
    pub initial_axis: [f64; 3],
    pub initial_angle: f64,
    pub initial_omega: [f64; 3],
    /// Haar-random start drawn from `sim.seed`.
    pub random_initial: bool,
    pub filter_natural_frequency: f64,
    pub filter_damping: f64,
}

impl Default for ManeuverConfig {
    fn default() -> Self {
        Self {
            kind: ManeuverKind::DoubleFlip,
            initial_axis: [1.0, 0.0, 0.0],
            initial_angle: 1.0,
            initial_omega: [0.0; 3],
            random_initial: false,
            filter_natural_frequency: 15.0,
            filter_damping: 0.707,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimConfig {
    pub dt: f64,
    pub duration: f64,
    pub seed: u64,
    /// Run the certification checks and attach them to the summary.
    pub certify: bool,
    /// Write every n-th step to the time series.
    pub log_every: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self { dt: 5e-4, duration: 6.0, seed: 0, certify: false, log_every: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    /// Directory for the CSV and summary; overridden by `run --out`.
    pub dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    pub name: Option<String>,
    pub plant: PlantConfig,
    pub controller: ControllerConfig,
    pub sensor: SensorConfig,
    pub actuation: ActuationConfig,
    pub maneuver: ManeuverConfig,
    pub sim: SimConfig,
    pub output: OutputConfig,
}

pub fn parse_scenario(text: &str) -> Result<ScenarioConfig, ConfigError> {
    let cfg: ScenarioConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

/// Reads and validates a scenario. The name defaults to the file stem.
pub fn load_scenario(path: &Path) -> Result<ScenarioConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
    let mut cfg = parse_scenario(&text)?;
    if cfg.name.is_none() {
        cfg.name = path.file_stem().map(|s| s.to_string_lossy().into_owned());
    }
    Ok(cfg)
}

fn positive(field: &str, v: f64) -> Result<(), ConfigError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(invalid(field, format!("must be positive and finite, got {v}")))
    }
}

impl ScenarioConfig {
    pub fn name(&self) -> &str {
        self.name.as_deref().unwrap_or("scenario")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        positive("sim.dt", self.sim.dt)?;
        positive("sim.duration", self.sim.duration)?;
        if self.sim.log_every == 0 {
            return Err(invalid("sim.log_every", "must be at least 1"));
        }
        self.plant_params()?;
        self.controller.attitude.check_finite("controller.attitude")?;
        self.controller.rate.check_finite("controller.rate")?;
        self.controller.attitude.realization("controller.attitude")?;
        self.controller.rate.realization("controller.rate")?;
        if !(self.sensor.noise_std >= 0.0 && self.sensor.noise_std.is_finite()) {
            return Err(invalid("sensor.noise_std", "must be finite and non-negative"));
        }
        if self.sensor.enabled {
            positive("sensor.delay", self.sensor.delay)?;
            positive("sensor.cutoff_hz", self.sensor.cutoff_hz)?;
            if self.sensor.pade_order == 0 {
                return Err(invalid("sensor.pade_order", "must be at least 1"));
            }
        }
        if self.actuation.enabled {
            let a = &self.actuation;
            positive("actuation.mass", a.mass)?;
            positive("actuation.gravity", a.gravity)?;
            self.allocator()?;
            MotorParams::new(a.time_constant, a.min_speed, a.max_speed)
                .map_err(|e| actuation_field(&e, "actuation"))?;
        }
        let m = &self.maneuver;
        positive("maneuver.filter_natural_frequency", m.filter_natural_frequency)?;
        positive("maneuver.filter_damping", m.filter_damping)?;
        if !m.random_initial && Vector3::from(m.initial_axis).norm() == 0.0 && m.initial_angle != 0.0 {
            return Err(invalid("maneuver.initial_axis", "must be nonzero"));
        }
        if !m.initial_angle.is_finite() || m.initial_omega.iter().any(|v| !v.is_finite()) {
            return Err(invalid("maneuver", "initial state must be finite"));
        }
        Ok(())
    }

    pub fn plant_params(&self) -> Result<PlantParams, ConfigError> {
        PlantParams::new(self.plant.inertia.matrix(), self.plant.damping.matrix())
            .map_err(|e| invalid("plant.inertia", e.to_string()))
    }

    pub fn attitude_realization(&self) -> Result<StateSpace, ConfigError> {
        self.controller.attitude.realization("controller.attitude")
    }

    pub fn rate_compensator(&self) -> Result<StateSpace, ConfigError> {
        self.controller.rate.realization("controller.rate")
    }

    pub fn sensor_model(&self) -> Result<Option<SensorModel>, ConfigError> {
        if !self.sensor.enabled {
            return Ok(None);
        }
        SensorModel::new(self.sensor.delay, self.sensor.pade_order, self.sensor.cutoff_hz)
            .map(Some)
            .map_err(|e| invalid("sensor", e.to_string()))
    }

    /// Rate law with the feedback filter inside its realization.
    pub fn rate_controller(&self) -> Result<RateController, ConfigError> {
        let sensor = self.sensor_model()?;
        RateController::from_compensator(
            &self.rate_compensator()?,
            sensor.as_ref().map(|s| s.realization()),
            self.plant_params()?,
        )
        .map_err(|e: ControlError| invalid("controller.rate", e.to_string()))
    }

    pub fn attitude_controller(&self) -> Result<AttitudeController, ConfigError> {
        AttitudeController::new(self.attitude_realization()?, self.controller.feedforward)
            .map_err(|e| invalid("controller.attitude", e.to_string()))
    }

    pub fn euler_baseline(&self) -> Result<EulerBaseline, ConfigError> {
        EulerBaseline::new(self.attitude_realization()?, self.controller.feedforward)
            .map_err(|e| invalid("controller.attitude", e.to_string()))
    }

    pub fn allocator(&self) -> Result<Allocator, ConfigError> {
        let a = &self.actuation;
        let g = RotorGeometry::hexagon(a.arm_length, a.kf, a.km).map_err(|e| actuation_field(&e, "actuation"))?;
        Allocator::new(g.effectiveness_matrix()).map_err(|e| actuation_field(&e, "actuation"))
    }

    pub fn motor_params(&self) -> Result<MotorParams, ConfigError> {
        let a = &self.actuation;
        MotorParams::new(a.time_constant, a.min_speed, a.max_speed).map_err(|e| actuation_field(&e, "actuation"))
    }

    pub fn hover_thrust(&self) -> f64 {
        self.actuation.mass * self.actuation.gravity
    }

    pub fn hover_command(&self) -> Result<DVector<f64>, ConfigError> {
        Ok(self.allocator()?.allocate(&Vector3::zeros(), self.hover_thrust()))
    }
}

fn actuation_field(e: &ActuationError, section: &str) -> ConfigError {
    match e {
        ActuationError::InvalidParameter { name, reason } => invalid(&format!("{section}.{name}"), reason.clone()),
        other => invalid(section, other.to_string()),
    }
}
