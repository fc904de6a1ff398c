//! Certification front-end: rate-loop Hurwitz test, attitude and cascade
//! LMIs, and per-axis bandwidth ratios.

use super::config::{ConfigError, ScenarioConfig};
use crate::lmi::{
    build_attitude_lmi, build_cascade_lmis, build_cascade_matrices, solve_feasibility, LmiProblem, SolverOptions,
    Verdict,
};
use crate::lti::{bandwidth, is_hurwitz, StateSpace, C64};
use crate::controllers::RateController;
use std::fmt;

/// Design rule for time-scale separation between the loops.
pub const MIN_BANDWIDTH_RATIO: f64 = 4.0;

#[derive(Debug, Clone, PartialEq)]
pub struct LmiOutcome {
    pub verdict: &'static str,
    pub margin: f64,
    pub normalized_margin: f64,
    pub variables: usize,
}

impl LmiOutcome {
    fn from_verdict(p: &LmiProblem, v: &Verdict) -> Self {
        let r = v.report();
        Self {
            verdict: v.label(),
            margin: r.margin,
            normalized_margin: r.normalized_margin,
            variables: p.scalar_count(),
        }
    }

    pub fn feasible(&self) -> bool {
        self.verdict == "feasible"
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AxisBandwidth {
    pub attitude: Option<f64>,
    pub rate: Option<f64>,
    pub ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CertificationReport {
    pub rate_hurwitz: bool,
    pub rate_abscissa: f64,
    pub attitude: LmiOutcome,
    pub cascade: LmiOutcome,
    /// Cross term of the cascade certificate, when one was found.
    pub p12: Option<f64>,
    pub bandwidth: [AxisBandwidth; 3],
    pub warnings: Vec<String>,
}

impl CertificationReport {
    pub fn all_feasible(&self) -> bool {
        self.rate_hurwitz && self.attitude.feasible() && self.cascade.feasible()
    }
}

/// Attitude loop with an ideal inner loop, `−Γ_Φ/(s − Γ_Φ)` on axis `i`.
pub fn attitude_loop_response(att: &StateSpace, axis: usize, w: f64) -> C64 {
    let s = C64::new(0.0, w);
    match att.transfer_eval(s) {
        Ok(g) => {
            let g = g[(axis, axis)];
            -g / (s - g)
        }
        Err(_) => C64::new(f64::NAN, f64::NAN),
    }
}

/// Rate loop `Γ_ref/(s − Γ_ω)` on axis `i`.
pub fn rate_loop_response(rate: &StateSpace, axis: usize, w: f64) -> C64 {
    let s = C64::new(0.0, w);
    match rate.transfer_eval(s) {
        Ok(g) => {
            let gw = g[(axis, axis)];
            let gr = g[(axis, 3 + axis)];
            gr / (s - gw)
        }
        Err(_) => C64::new(f64::NAN, f64::NAN),
    }
}

pub fn bandwidth_ratios(att: &StateSpace, rate: &StateSpace) -> [AxisBandwidth; 3] {
    let one = |i: usize| {
        let a = bandwidth(|w| attitude_loop_response(att, i, w), 1e6).ok();
        let r = bandwidth(|w| rate_loop_response(rate, i, w), 1e6).ok();
        let ratio = match (a, r) {
            (Some(a), Some(r)) => Some(a / r),
            _ => None,
        };
        AxisBandwidth { attitude: a, rate: r, ratio }
    };
    [one(0), one(1), one(2)]
}

pub fn certify_realizations(att: &StateSpace, rate: &RateController, opts: &SolverOptions) -> CertificationReport {
    let (rate_hurwitz, rate_abscissa) = is_hurwitz(&rate.closed_loop_matrix());
    let mut warnings = Vec::new();
    if !rate_hurwitz {
        warnings.push(format!("rate loop not Hurwitz (spectral abscissa {rate_abscissa:.4e})"));
    }

    let attitude = match build_attitude_lmi(att) {
        Ok(p) => LmiOutcome::from_verdict(&p, &solve_feasibility(&p, opts)),
        Err(e) => {
            warnings.push(format!("attitude LMI: {e}"));
            LmiOutcome { verdict: "error", margin: f64::NAN, normalized_margin: f64::NAN, variables: 0 }
        }
    };

    let mut p12 = None;
    let cascade = match build_cascade_matrices(att, rate.realization()).and_then(|m| build_cascade_lmis(&m)) {
        Ok(p) => {
            let v = solve_feasibility(&p, opts);
            if let Some(c) = v.certificate() {
                p12 = c.block("p12").map(|b| b[(0, 0)]);
            }
            LmiOutcome::from_verdict(&p, &v)
        }
        Err(e) => {
            warnings.push(format!("cascade LMI: {e}"));
            LmiOutcome { verdict: "error", margin: f64::NAN, normalized_margin: f64::NAN, variables: 0 }
        }
    };

    let bw = bandwidth_ratios(att, rate.realization());
    for (axis, b) in ["roll", "pitch", "yaw"].iter().zip(&bw) {
        match b.ratio {
            Some(r) if r < MIN_BANDWIDTH_RATIO => {
                warnings.push(format!("{axis} bandwidth ratio {r:.3} below {MIN_BANDWIDTH_RATIO}"))
            }
            Some(_) => {}
            None => warnings.push(format!("{axis} bandwidth ratio undefined")),
        }
    }

    CertificationReport { rate_hurwitz, rate_abscissa, attitude, cascade, p12, bandwidth: bw, warnings }
}

pub fn certify(cfg: &ScenarioConfig) -> Result<CertificationReport, ConfigError> {
    let att = cfg.attitude_realization()?;
    let rate = cfg.rate_controller()?;
    Ok(certify_realizations(&att, &rate, &SolverOptions::default()))
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_string(), |x| format!("{x:.4}"))
}

impl fmt::Display for CertificationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "rate_hurwitz = {}", self.rate_hurwitz)?;
        writeln!(f, "rate_spectral_abscissa = {:.6e}", self.rate_abscissa)?;
        for (name, o) in [("attitude_lmi", &self.attitude), ("cascade_lmi", &self.cascade)] {
            writeln!(f, "{name} = {}", o.verdict)?;
            writeln!(f, "{name}_margin = {:.6e}", o.margin)?;
            writeln!(f, "{name}_normalized_margin = {:.6e}", o.normalized_margin)?;
            writeln!(f, "{name}_variables = {}", o.variables)?;
        }
        if let Some(p) = self.p12 {
            writeln!(f, "cascade_p12 = {p:.6e}")?;
        }
        for (axis, b) in ["roll", "pitch", "yaw"].iter().zip(&self.bandwidth) {
            writeln!(
                f,
                "bandwidth_{axis} = attitude {} rad/s, rate {} rad/s, ratio {}",
                opt(b.attitude),
                opt(b.rate),
                opt(b.ratio)
            )?;
        }
        for w in &self.warnings {
            writeln!(f, "warning = {w}")?;
        }
        Ok(())
    }
}
