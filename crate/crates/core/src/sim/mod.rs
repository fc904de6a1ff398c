//! Scenario-driven closed-loop simulation.
//!
//! The rigid body, reference filter, both compensators (with the feedback
//! filter inside the rate realization) and the motors form one ODE on
//! `SO(3)² × ℝⁿ`, stepped by RKMK4 with the laws evaluated at every stage.
//! Only the raw maneuver target is held over a step.

pub mod certify;
pub mod config;

use crate::actuation::{ActuatorState, Allocator, MotorParams};
use crate::controllers::{
    euler_reference_rate, euler_zyx, tracking_cancellation, AttitudeController, EulerBaseline, RateController,
};
use crate::integrator::{rkmk4_step, LieState, Tangent};
use crate::plant::{body_derivative, reproject, PlantParams, PROJECTION_INTERVAL};
use crate::reference::{raw_maneuver, ReferenceFilter};
use crate::so3::{
    attitude_error, attitude_error_vector, config_error_of, exp_so3, random_rotation, RotationMatrix,
};
use certify::CertificationReport;
use config::{ConfigError, ControllerKind, InnerLoop, ManeuverKind, ScenarioConfig};
use nalgebra::{DVector, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use std::fmt::{self, Write as _};
use std::ops::Range;
use std::path::{Path, PathBuf};

/// Divergence threshold on `‖ω‖` and `‖ω_cmd‖` (rad/s).
pub const DIVERGENCE_RATE: f64 = 1e3;

pub const CSV_COLUMNS: [&str; 17] = [
    "t", "psi", "eR_x", "eR_y", "eR_z", "omega_x", "omega_y", "omega_z", "omegad_x", "omegad_y", "omegad_z",
    "tau_dem_x", "tau_dem_y", "tau_dem_z", "tau_app_x", "tau_app_y", "tau_app_z",
];

enum Outer {
    Geometric(AttitudeController),
    Euler(EulerBaseline),
}

/// Index ranges of the vector part of the state.
#[derive(Debug, Clone, PartialEq)]
pub struct Layout {
    pub omega: Range<usize>,
    pub omega_d: Range<usize>,
    pub attitude: Range<usize>,
    pub rate: Range<usize>,
    pub motors: Range<usize>,
    /// Euler-angle reference `Φ_d` of the baseline (empty otherwise).
    pub euler_d: Range<usize>,
}

/// Everything the laws produce at one state.
#[derive(Debug, Clone, PartialEq)]
pub struct Signals {
    pub psi: f64,
    pub e_r: Vector3<f64>,
    pub omega: Vector3<f64>,
    pub omega_d: Vector3<f64>,
    pub omega_cmd: Vector3<f64>,
    pub tau_demanded: Vector3<f64>,
    pub tau_applied: Vector3<f64>,
    pub singular: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Instability {
    pub t: f64,
    pub reason: String,
}

pub struct Simulation {
    cfg: ScenarioConfig,
    plant: PlantParams,
    outer: Outer,
    rate: RateController,
    filter: Option<ReferenceFilter>,
    actuation: Option<(Allocator, MotorParams, f64)>,
    layout: Layout,
    state: LieState,
    target: RotationMatrix,
    step: usize,
    dt: f64,
    instability: Option<Instability>,
    rng: ChaCha8Rng,
    /// Gyro noise held over the current step.
    noise: Vector3<f64>,
}

fn v3(x: &DVector<f64>, r: &Range<usize>) -> Vector3<f64> {
    Vector3::new(x[r.start], x[r.start + 1], x[r.start + 2])
}

impl Simulation {
    pub fn new(cfg: &ScenarioConfig) -> Result<Self, ConfigError> {
        cfg.validate()?;
        let plant = cfg.plant_params()?;
        let rate = cfg.rate_controller()?;
        let outer = match cfg.controller.kind {
            ControllerKind::Geometric => Outer::Geometric(cfg.attitude_controller()?),
            ControllerKind::Euler => Outer::Euler(cfg.euler_baseline()?),
        };
        let n_att = match &outer {
            Outer::Geometric(c) => c.realization().state_dim(),
            Outer::Euler(c) => c.realization().state_dim(),
        };
        let n_rate = rate.realization().state_dim();
        let actuation = if cfg.actuation.enabled {
            Some((cfg.allocator()?, cfg.motor_params()?, cfg.hover_thrust()))
        } else {
            None
        };
        let n_mot = actuation.as_ref().map_or(0, |(a, _, _)| a.effectiveness().ncols());
        let mut at = 6;
        let mut take = |n: usize| {
            let r = at..at + n;
            at += n;
            r
        };
        let layout = Layout {
            omega: 0..3,
            omega_d: 3..6,
            attitude: take(n_att),
            rate: take(n_rate),
            motors: take(n_mot),
            euler_d: take(if matches!(outer, Outer::Euler(_)) { 3 } else { 0 }),
        };
        let mut x = DVector::zeros(at);

        let (r0, r_d0, filter) = match cfg.maneuver.kind {
            ManeuverKind::DoubleFlip => {
                let m = &cfg.maneuver;
                let f = ReferenceFilter::new(RotationMatrix::identity(), m.filter_natural_frequency, m.filter_damping);
                (RotationMatrix::identity(), RotationMatrix::identity(), Some(f))
            }
            ManeuverKind::Regulation => (initial_attitude(cfg), RotationMatrix::identity(), None),
        };
        if !layout.euler_d.is_empty() {
            x.rows_mut(layout.euler_d.start, 3).copy_from(&euler_zyx(&r_d0));
        }
        let w0 = Vector3::from(cfg.maneuver.initial_omega);
        x.rows_mut(0, 3).copy_from(&w0);
        if let Some((alloc, params, thrust)) = &actuation {
            let hover = ActuatorState::new(alloc.allocate(&Vector3::zeros(), *thrust), *params);
            x.rows_mut(layout.motors.start, n_mot).copy_from(&hover.squared);
        }
        Ok(Self {
            cfg: cfg.clone(),
            plant,
            outer,
            rate,
            filter,
            actuation,
            layout,
            state: LieState { rotations: vec![r0, r_d0], x },
            target: raw_maneuver(0.0),
            step: 0,
            dt: cfg.sim.dt,
            instability: None,
            rng: ChaCha8Rng::seed_from_u64(cfg.sim.seed ^ 0x6779_726f),
            noise: Vector3::zeros(),
        })
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.cfg
    }
    pub fn layout(&self) -> &Layout {
        &self.layout
    }
    pub fn time(&self) -> f64 {
        self.step as f64 * self.dt
    }
    pub fn steps_taken(&self) -> usize {
        self.step
    }
    pub fn attitude(&self) -> &RotationMatrix {
        &self.state.rotations[0]
    }
    pub fn desired_attitude(&self) -> &RotationMatrix {
        &self.state.rotations[1]
    }
    pub fn vector_state(&self) -> &DVector<f64> {
        &self.state.x
    }
    pub fn rate_controller(&self) -> &RateController {
        &self.rate
    }
    pub fn instability(&self) -> Option<&Instability> {
        self.instability.as_ref()
    }

    /// Overrides the initial attitude and body rate (before the first step).
    pub fn set_initial(&mut self, r: RotationMatrix, omega: Vector3<f64>) {
        self.state.rotations[0] = r;
        self.state.x.rows_mut(0, 3).copy_from(&omega);
    }

    fn evaluate(&self, rs: &[RotationMatrix], x: &DVector<f64>) -> (Tangent, Signals) {
        let l = &self.layout;
        let (r, r_d) = (&rs[0], &rs[1]);
        let omega = v3(x, &l.omega);
        let omega_d = v3(x, &l.omega_d);
        let omega_d_dot = match &self.filter {
            Some(f) => f.acceleration(&self.target, r_d, &omega_d),
            None => Vector3::zeros(),
        };
        let r_e = attitude_error(r_d, r);
        let e_r = attitude_error_vector(&r_e);
        let x_att = x.rows(l.attitude.start, l.attitude.len()).into_owned();
        let x_rate = x.rows(l.rate.start, l.rate.len()).into_owned();

        let mut x_dot = DVector::zeros(x.len());
        let mut singular = false;
        let omega_cmd = match &self.outer {
            Outer::Geometric(c) => {
                x_dot.rows_mut(l.attitude.start, l.attitude.len()).copy_from(&c.state_derivative(&x_att, &r_e));
                c.command(&x_att, &r_e, &omega_d)
            }
            Outer::Euler(c) => {
                let phi_d = v3(x, &l.euler_d);
                let (phi_d_dot, ref_singular) = euler_reference_rate(&phi_d, &omega_d);
                x_dot.rows_mut(l.euler_d.start, 3).copy_from(&phi_d_dot);
                let cmd = c.command(&x_att, &phi_d, &phi_d_dot, r);
                singular = cmd.singular || ref_singular;
                x_dot.rows_mut(l.attitude.start, l.attitude.len()).copy_from(&c.state_derivative(&x_att, &cmd.error));
                cmd.omega_cmd
            }
        };
        x_dot.rows_mut(3, 3).copy_from(&omega_d_dot);

        let signals = |body_rate: Vector3<f64>, dem: Vector3<f64>, app: Vector3<f64>| Signals {
            psi: config_error_of(&r_e),
            e_r,
            omega: body_rate,
            omega_d,
            omega_cmd,
            tau_demanded: dem,
            tau_applied: app,
            singular,
        };

        if self.cfg.controller.inner_loop == InnerLoop::Ideal {
            let tangent = Tangent { omegas: vec![omega_cmd, omega_d], x_dot };
            return (tangent, signals(omega_cmd, Vector3::zeros(), Vector3::zeros()));
        }

        let omega_meas = omega + self.noise;
        let mut nu = self.rate.desired_acceleration(&x_rate, &omega_meas, &omega_cmd);
        if self.cfg.controller.tracking_cancellation {
            let omega_e = omega - r_e.transpose().rotate(&omega_d);
            nu += tracking_cancellation(&r_e, &omega_e, &omega_d, &omega_d_dot);
        }
        let tau_dem = self.rate.torque(&omega, &nu);
        x_dot
            .rows_mut(l.rate.start, l.rate.len())
            .copy_from(&self.rate.state_derivative(&x_rate, &omega_meas, &omega_cmd));

        let tau_app = match &self.actuation {
            Some((alloc, params, thrust)) => {
                let s = x.rows(l.motors.start, l.motors.len()).into_owned();
                let cmd = alloc.allocate(&tau_dem, *thrust);
                x_dot
                    .rows_mut(l.motors.start, l.motors.len())
                    .copy_from(&ActuatorState::derivative(params, &s, &cmd));
                alloc.applied(&s).1
            }
            None => tau_dem,
        };
        x_dot.rows_mut(0, 3).copy_from(&body_derivative(&omega, &tau_app, &self.plant));
        let tangent = Tangent { omegas: vec![omega, omega_d], x_dot };
        (tangent, signals(omega, tau_dem, tau_app))
    }

    /// Signals at the current state.
    pub fn signals(&self) -> Signals {
        self.evaluate(&self.state.rotations, &self.state.x).1
    }

    fn check(&mut self, s: &Signals) {
        if self.instability.is_some() {
            return;
        }
        let t = self.time();
        let finite = self.state.x.iter().all(|v| v.is_finite())
            && self.state.rotations.iter().all(|r| r.matrix().iter().all(|v| v.is_finite()))
            && s.omega_cmd.iter().chain(s.tau_demanded.iter()).all(|v| v.is_finite());
        let reason = if !finite {
            Some("non-finite state".to_string())
        } else if s.singular {
            Some("Euler kinematics singular".to_string())
        } else if s.omega.norm() > DIVERGENCE_RATE {
            Some(format!("|omega| = {:.3e} exceeds {DIVERGENCE_RATE}", s.omega.norm()))
        } else if s.omega_cmd.norm() > DIVERGENCE_RATE {
            Some(format!("|omega_cmd| = {:.3e} exceeds {DIVERGENCE_RATE}", s.omega_cmd.norm()))
        } else {
            None
        };
        if let Some(reason) = reason {
            self.instability = Some(Instability { t, reason });
        }
    }

    /// Advances one step. Returns the signals at the new state.
    pub fn step(&mut self) -> Signals {
        self.target = if self.filter.is_some() { raw_maneuver(self.time()) } else { RotationMatrix::identity() };
        let std = self.cfg.sensor.noise_std;
        if std > 0.0 {
            let mut draw = || std * Distribution::<f64>::sample(&StandardNormal, &mut self.rng);
            self.noise = Vector3::new(draw(), draw(), draw());
        }
        let next = rkmk4_step(&self.state, self.dt, |rs, x| self.evaluate(rs, x).0);
        self.state = next;
        self.step += 1;
        if self.step.is_multiple_of(PROJECTION_INTERVAL) {
            for r in &mut self.state.rotations {
                *r = reproject(r);
            }
        }
        let s = self.signals();
        self.check(&s);
        s
    }

    pub fn total_steps(&self) -> usize {
        (self.cfg.sim.duration / self.dt).round() as usize
    }

    /// Runs to the configured duration or the first instability.
    pub fn run(mut self) -> RunResult {
        let mut log = TimeSeries::default();
        let mut acc = SummaryAccumulator::default();
        let s = self.signals();
        self.check(&s);
        log.push(0.0, &s);
        acc.add(&s, 0.0);
        let n = self.total_steps();
        let every = self.cfg.sim.log_every;
        while self.step < n && self.instability.is_none() {
            let s = self.step();
            acc.add(&s, self.dt);
            if self.step.is_multiple_of(every) || self.step == n || self.instability.is_some() {
                log.push(self.time(), &s);
            }
        }
        let certification = if self.cfg.sim.certify { certify::certify(&self.cfg).ok() } else { None };
        let summary = acc.finish(self.cfg.name().to_string(), self.time(), self.instability.clone(), certification);
        RunResult { summary, log }
    }
}

fn initial_attitude(cfg: &ScenarioConfig) -> RotationMatrix {
    let m = &cfg.maneuver;
    if m.random_initial {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.sim.seed);
        return random_rotation(&mut rng);
    }
    let axis = Vector3::from(m.initial_axis);
    if axis.norm() == 0.0 {
        return RotationMatrix::identity();
    }
    exp_so3(&(axis.normalize() * m.initial_angle))
}

/// Logged rows in the fixed column order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TimeSeries {
    pub rows: Vec<[f64; 17]>,
}

impl TimeSeries {
    fn push(&mut self, t: f64, s: &Signals) {
        let mut r = [0.0; 17];
        r[0] = t;
        r[1] = s.psi;
        r[2..5].copy_from_slice(s.e_r.as_slice());
        r[5..8].copy_from_slice(s.omega.as_slice());
        r[8..11].copy_from_slice(s.omega_d.as_slice());
        r[11..14].copy_from_slice(s.tau_demanded.as_slice());
        r[14..17].copy_from_slice(s.tau_applied.as_slice());
        self.rows.push(r);
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(self.rows.len() * 200 + 200);
        out.push_str(&CSV_COLUMNS.join(","));
        out.push('\n');
        for r in &self.rows {
            for (i, v) in r.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                // shortest round-trip representation
                let _ = write!(out, "{v:e}");
            }
            out.push('\n');
        }
        out
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let i = CSV_COLUMNS.iter().position(|c| *c == name)?;
        Some(self.rows.iter().map(|r| r[i]).collect())
    }
}

#[derive(Debug, Default)]
struct SummaryAccumulator {
    peak_psi: f64,
    final_psi: f64,
    peak_e_r: f64,
    peak_tau: f64,
    effort: f64,
    prev_tau: Option<f64>,
}

impl SummaryAccumulator {
    fn add(&mut self, s: &Signals, dt: f64) {
        let tau = s.tau_applied.norm();
        if let Some(p) = self.prev_tau {
            self.effort += 0.5 * (p + tau) * dt;
        }
        self.prev_tau = Some(tau);
        self.peak_psi = self.peak_psi.max(s.psi);
        self.final_psi = s.psi;
        self.peak_e_r = self.peak_e_r.max(s.e_r.norm());
        self.peak_tau = self.peak_tau.max(tau);
    }

    fn finish(
        self,
        name: String,
        t_end: f64,
        instability: Option<Instability>,
        certification: Option<CertificationReport>,
    ) -> RunSummary {
        RunSummary {
            name,
            t_end,
            peak_psi: self.peak_psi,
            final_psi: self.final_psi,
            peak_e_r: self.peak_e_r,
            peak_tau: self.peak_tau,
            effort: self.effort,
            instability,
            certification,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub name: String,
    pub t_end: f64,
    pub peak_psi: f64,
    pub final_psi: f64,
    pub peak_e_r: f64,
    /// Peak applied torque norm.
    pub peak_tau: f64,
    /// `∫‖τ_applied‖ dt`.
    pub effort: f64,
    pub instability: Option<Instability>,
    pub certification: Option<CertificationReport>,
}

impl RunSummary {
    pub fn unstable(&self) -> bool {
        self.instability.is_some()
    }
}

impl fmt::Display for RunSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "name = {}", self.name)?;
        writeln!(f, "t_end = {:.6}", self.t_end)?;
        writeln!(f, "peak_psi = {:.6e}", self.peak_psi)?;
        writeln!(f, "final_psi = {:.6e}", self.final_psi)?;
        writeln!(f, "peak_eR = {:.6e}", self.peak_e_r)?;
        writeln!(f, "peak_tau = {:.6e}", self.peak_tau)?;
        writeln!(f, "effort = {:.6e}", self.effort)?;
        writeln!(f, "unstable = {}", self.unstable())?;
        if let Some(i) = &self.instability {
            writeln!(f, "unstable_at = {:.6}", i.t)?;
            writeln!(f, "unstable_reason = {}", i.reason)?;
        }
        if let Some(c) = &self.certification {
            write!(f, "{c}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub summary: RunSummary,
    pub log: TimeSeries,
}

impl RunResult {
    /// Writes `<name>.csv` and `<name>.summary.txt` into `dir`.
    pub fn write(&self, dir: &Path) -> std::io::Result<(PathBuf, PathBuf)> {
        std::fs::create_dir_all(dir)?;
        let csv = dir.join(format!("{}.csv", self.summary.name));
        let txt = dir.join(format!("{}.summary.txt", self.summary.name));
        std::fs::write(&csv, self.log.to_csv())?;
        std::fs::write(&txt, self.summary.to_string())?;
        Ok((csv, txt))
    }
}

pub fn run(cfg: &ScenarioConfig) -> Result<RunResult, ConfigError> {
    Ok(Simulation::new(cfg)?.run())
}

/// Runs scenarios on separate threads; results keep the input order.
pub fn compare(cfgs: &[ScenarioConfig]) -> Result<Vec<RunResult>, ConfigError> {
    for c in cfgs {
        c.validate()?;
    }
    let results: Vec<Result<RunResult, ConfigError>> = std::thread::scope(|scope| {
        let handles: Vec<_> = cfgs.iter().map(|c| scope.spawn(move || run(c))).collect();
        handles.into_iter().map(|h| h.join().expect("simulation thread panicked")).collect()
    });
    results.into_iter().collect()
}

/// Side-by-side table of summaries.
pub fn comparison_table(results: &[RunResult]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<28} {:>12} {:>12} {:>12} {:>12} {:>12} {:>9}",
        "scenario", "peak_psi", "final_psi", "peak_eR", "peak_tau", "effort", "unstable"
    );
    for r in results {
        let s = &r.summary;
        let flag = match &s.instability {
            Some(i) => format!("t={:.3}", i.t),
            None => "no".into(),
        };
        let _ = writeln!(
            out,
            "{:<28} {:>12.4e} {:>12.4e} {:>12.4e} {:>12.4e} {:>12.4e} {:>9}",
            s.name, s.peak_psi, s.final_psi, s.peak_e_r, s.peak_tau, s.effort, flag
        );
    }
    out
}
