//! Python bindings: SO(3) helpers, lead-lag realizations, certification and
//! simulation of TOML scenarios.
//!
//! Matrices cross the boundary as nested lists in row-major order.

use nalgebra::{DMatrix, Matrix3, Vector3};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use so3ndi::lti::{self, StateSpace};
use so3ndi::sim::certify::{certify, CertificationReport};
use so3ndi::sim::config::{load_scenario, parse_scenario, ScenarioConfig};
use so3ndi::sim::{self, RunSummary, CSV_COLUMNS};
use so3ndi::so3::{self, RotationMatrix};

type Rows = Vec<Vec<f64>>;

fn value_error(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn rows3(m: &Matrix3<f64>) -> Rows {
    (0..3).map(|i| (0..3).map(|j| m[(i, j)]).collect()).collect()
}

fn rows(m: &DMatrix<f64>) -> Rows {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

fn matrix3(m: Rows) -> PyResult<Matrix3<f64>> {
    if m.len() != 3 || m.iter().any(|r| r.len() != 3) {
        return Err(PyValueError::new_err("expected a 3x3 nested list"));
    }
    Ok(Matrix3::from_fn(|i, j| m[i][j]))
}

fn rotation(m: Rows) -> PyResult<RotationMatrix> {
    RotationMatrix::new(matrix3(m)?).map_err(value_error)
}

fn vec3(v: [f64; 3]) -> Vector3<f64> {
    Vector3::from(v)
}

fn arr3(v: &Vector3<f64>) -> [f64; 3] {
    [v[0], v[1], v[2]]
}

#[pyfunction]
fn hat(v: [f64; 3]) -> Rows {
    rows3(so3::hat(&vec3(v)).matrix())
}

#[pyfunction]
fn vee(m: Rows) -> PyResult<[f64; 3]> {
    so3::vee(&matrix3(m)?).map(|v| arr3(&v)).map_err(value_error)
}

#[pyfunction]
fn exp_so3(v: [f64; 3]) -> Rows {
    rows3(so3::exp_so3(&vec3(v)).matrix())
}

#[pyfunction]
fn log_so3(r: Rows) -> PyResult<[f64; 3]> {
    Ok(arr3(&so3::log_so3(&rotation(r)?)))
}

/// `Ψ(R_d, R) = ½ tr(I − R_dᵀR)`.
#[pyfunction]
fn config_error(r_d: Rows, r: Rows) -> PyResult<f64> {
    Ok(so3::config_error(&rotation(r_d)?, &rotation(r)?))
}

#[pyfunction]
fn attitude_error_vector(r_d: Rows, r: Rows) -> PyResult<[f64; 3]> {
    let r_e = so3::attitude_error(&rotation(r_d)?, &rotation(r)?);
    Ok(arr3(&so3::attitude_error_vector(&r_e)))
}

#[pyfunction]
fn error_jacobian(r_e: Rows) -> PyResult<Rows> {
    Ok(rows3(&so3::error_jacobian(&rotation(r_e)?)))
}

/// Haar-uniform rotation from a seeded generator.
#[pyfunction]
fn random_rotation(seed: u64) -> Rows {
    rows3(so3::random_rotation(&mut ChaCha8Rng::seed_from_u64(seed)).matrix())
}

/// State-space realization `(A, B, C, D)`.
#[pyclass(name = "StateSpace", frozen)]
struct PyStateSpace {
    inner: StateSpace,
}

#[pymethods]
impl PyStateSpace {
    #[getter]
    fn a(&self) -> Rows {
        rows(self.inner.a())
    }
    #[getter]
    fn b(&self) -> Rows {
        rows(self.inner.b())
    }
    #[getter]
    fn c(&self) -> Rows {
        rows(self.inner.c())
    }
    #[getter]
    fn d(&self) -> Rows {
        rows(self.inner.d())
    }
    #[getter]
    fn state_dim(&self) -> usize {
        self.inner.state_dim()
    }

    /// Transfer matrix at `s = jω`, as nested lists of complex numbers.
    fn frequency_response(&self, omega: f64) -> PyResult<Vec<Vec<(f64, f64)>>> {
        let g = self.inner.transfer_eval(lti::C64::new(0.0, omega)).map_err(value_error)?;
        Ok((0..g.nrows()).map(|i| (0..g.ncols()).map(|j| (g[(i, j)].re, g[(i, j)].im)).collect()).collect())
    }

    fn __repr__(&self) -> String {
        format!(
            "StateSpace(states={}, inputs={}, outputs={})",
            self.inner.state_dim(),
            self.inner.input_dim(),
            self.inner.output_dim()
        )
    }
}

/// `kp + ki/(s + eps) + kd·s/(tau_f·s + 1)`.
#[pyfunction]
#[pyo3(signature = (kp, ki=0.0, kd=0.0, eps=0.0, tau_f=0.0))]
fn make_lead_lag(kp: f64, ki: f64, kd: f64, eps: f64, tau_f: f64) -> PyResult<PyStateSpace> {
    lti::make_lead_lag(kp, ki, kd, eps, tau_f).map(|inner| PyStateSpace { inner }).map_err(value_error)
}

fn report_dict<'py>(py: Python<'py>, r: &CertificationReport) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("rate_hurwitz", r.rate_hurwitz)?;
    d.set_item("rate_spectral_abscissa", r.rate_abscissa)?;
    for (name, o) in [("attitude", &r.attitude), ("cascade", &r.cascade)] {
        d.set_item(format!("{name}_lmi"), o.verdict)?;
        d.set_item(format!("{name}_margin"), o.margin)?;
        d.set_item(format!("{name}_variables"), o.variables)?;
    }
    d.set_item("p12", r.p12)?;
    let ratios: Vec<Option<f64>> = r.bandwidth.iter().map(|b| b.ratio).collect();
    d.set_item("bandwidth_ratios", ratios)?;
    d.set_item("warnings", r.warnings.clone())?;
    d.set_item("all_feasible", r.all_feasible())?;
    Ok(d)
}

fn summary_dict<'py>(py: Python<'py>, s: &RunSummary) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("name", &s.name)?;
    d.set_item("t_end", s.t_end)?;
    d.set_item("peak_psi", s.peak_psi)?;
    d.set_item("final_psi", s.final_psi)?;
    d.set_item("peak_eR", s.peak_e_r)?;
    d.set_item("peak_tau", s.peak_tau)?;
    d.set_item("effort", s.effort)?;
    d.set_item("unstable", s.unstable())?;
    d.set_item("unstable_at", s.instability.as_ref().map(|i| i.t))?;
    d.set_item("unstable_reason", s.instability.as_ref().map(|i| i.reason.clone()))?;
    if let Some(c) = &s.certification {
        d.set_item("certification", report_dict(py, c)?)?;
    }
    Ok(d)
}

/// Validated scenario configuration.
#[pyclass(name = "Scenario", frozen)]
struct PyScenario {
    inner: ScenarioConfig,
}

#[pymethods]
impl PyScenario {
    /// Parses TOML text; an empty string gives the defaults.
    #[new]
    #[pyo3(signature = (text=""))]
    fn new(text: &str) -> PyResult<Self> {
        parse_scenario(text).map(|inner| Self { inner }).map_err(value_error)
    }

    #[staticmethod]
    fn load(path: std::path::PathBuf) -> PyResult<Self> {
        load_scenario(&path).map(|inner| Self { inner }).map_err(value_error)
    }

    #[getter]
    fn name(&self) -> String {
        self.inner.name.clone().unwrap_or_default()
    }
    #[getter]
    fn dt(&self) -> f64 {
        self.inner.sim.dt
    }
    #[getter]
    fn duration(&self) -> f64 {
        self.inner.sim.duration
    }

    fn attitude_controller(&self) -> PyResult<PyStateSpace> {
        self.inner.attitude_realization().map(|inner| PyStateSpace { inner }).map_err(value_error)
    }

    /// The rate law with inputs `(ω, ω_ref)` and output `ν`.
    fn rate_controller(&self) -> PyResult<PyStateSpace> {
        let rc = self.inner.rate_controller().map_err(value_error)?;
        Ok(PyStateSpace { inner: rc.realization().clone() })
    }

    /// Rate-loop Hurwitz test, both LMIs and bandwidth ratios.
    fn certify<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let cfg = self.inner.clone();
        let r = py.detach(move || certify(&cfg)).map_err(value_error)?;
        report_dict(py, &r)
    }

    /// Runs to completion; returns `(summary, columns)`.
    fn run<'py>(&self, py: Python<'py>) -> PyResult<(Bound<'py, PyDict>, Bound<'py, PyDict>)> {
        let cfg = self.inner.clone();
        let res = py.detach(move || sim::run(&cfg)).map_err(value_error)?;
        let cols = PyDict::new(py);
        for name in CSV_COLUMNS {
            cols.set_item(name, res.log.column(name))?;
        }
        Ok((summary_dict(py, &res.summary)?, cols))
    }

    /// The log of a full run in CSV form.
    fn run_csv(&self, py: Python<'_>) -> PyResult<String> {
        let cfg = self.inner.clone();
        py.detach(move || sim::run(&cfg)).map(|r| r.log.to_csv()).map_err(value_error)
    }

    fn __repr__(&self) -> String {
        format!("Scenario(name={:?}, dt={}, duration={})", self.name(), self.inner.sim.dt, self.inner.sim.duration)
    }
}

/// Step-by-step simulation.
#[pyclass(name = "Simulation", unsendable)]
struct PySimulation {
    inner: sim::Simulation,
}

#[pymethods]
impl PySimulation {
    #[new]
    fn new(scenario: &PyScenario) -> PyResult<Self> {
        sim::Simulation::new(&scenario.inner).map(|inner| Self { inner }).map_err(value_error)
    }

    /// Overrides the initial attitude and body rate.
    #[pyo3(signature = (r, omega=[0.0; 3]))]
    fn set_initial(&mut self, r: Rows, omega: [f64; 3]) -> PyResult<()> {
        self.inner.set_initial(rotation(r)?, vec3(omega));
        Ok(())
    }

    /// Advances one step and returns the logged signals.
    fn step<'py>(&mut self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let s = self.inner.step();
        let d = PyDict::new(py);
        d.set_item("t", self.inner.time())?;
        d.set_item("psi", s.psi)?;
        d.set_item("e_R", arr3(&s.e_r))?;
        d.set_item("omega", arr3(&s.omega))?;
        d.set_item("omega_d", arr3(&s.omega_d))?;
        d.set_item("omega_cmd", arr3(&s.omega_cmd))?;
        d.set_item("tau_demanded", arr3(&s.tau_demanded))?;
        d.set_item("tau_applied", arr3(&s.tau_applied))?;
        d.set_item("singular", s.singular)?;
        Ok(d)
    }

    #[getter]
    fn time(&self) -> f64 {
        self.inner.time()
    }
    #[getter]
    fn attitude(&self) -> Rows {
        rows3(self.inner.attitude().matrix())
    }
    #[getter]
    fn desired_attitude(&self) -> Rows {
        rows3(self.inner.desired_attitude().matrix())
    }
    #[getter]
    fn unstable(&self) -> bool {
        self.inner.instability().is_some()
    }
}

#[pymodule]
mod so3ndi_py {
    #[pymodule_export]
    use super::{
        attitude_error_vector, config_error, error_jacobian, exp_so3, hat, log_so3, make_lead_lag, random_rotation,
        vee, PyScenario, PySimulation, PyStateSpace,
    };
}
