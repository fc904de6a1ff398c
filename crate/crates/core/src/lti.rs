//! Continuous-time linear state-space blocks.
//!
//! A [`StateSpace`] holds `(A, B, C, D)` for `ẋ = Ax + Bu`, `y = Cx + Du`.
//! Zero-state blocks are pure gains and work everywhere a dynamic block does.
//! Scalar transfer functions are realized in controllable canonical form, and
//! composite blocks are built with [`StateSpace::series`] and
//! [`StateSpace::diagonal`], so realizations are deterministic.

use nalgebra::{Complex, DMatrix, DVector};
use thiserror::Error;

pub type C64 = Complex<f64>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LtiError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid parameter {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
    #[error("s = {0} is a pole of the system")]
    PoleHit(C64),
    #[error("magnitude stays above 1/√2 up to {0} rad/s")]
    UnboundedBandwidth(f64),
    #[error("frequency response does not start at or above 1/√2 (|H| = {0})")]
    NoPassband(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateSpace {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    c: DMatrix<f64>,
    d: DMatrix<f64>,
}

impl StateSpace {
    pub fn new(
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        c: DMatrix<f64>,
        d: DMatrix<f64>,
    ) -> Result<Self, LtiError> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(LtiError::Dimension(format!("A is {}×{}", n, a.ncols())));
        }
        if b.nrows() != n || c.ncols() != n {
            return Err(LtiError::Dimension(format!(
                "A is {n}×{n} but B has {} rows and C has {} columns",
                b.nrows(),
                c.ncols()
            )));
        }
        if d.nrows() != c.nrows() || d.ncols() != b.ncols() {
            return Err(LtiError::Dimension(format!(
                "D is {}×{}, expected {}×{}",
                d.nrows(),
                d.ncols(),
                c.nrows(),
                b.ncols()
            )));
        }
        Ok(Self { a, b, c, d })
    }

    /// Static gain block `y = D u`.
    pub fn gain(d: DMatrix<f64>) -> Self {
        let (p, m) = d.shape();
        Self {
            a: DMatrix::zeros(0, 0),
            b: DMatrix::zeros(0, m),
            c: DMatrix::zeros(p, 0),
            d,
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::gain(DMatrix::identity(n, n))
    }

    /// SISO realization of `num(s)/den(s)` in controllable canonical form.
    ///
    /// Coefficients are in ascending powers of `s`; the transfer must be proper.
    pub fn from_transfer(num: &[f64], den: &[f64]) -> Result<Self, LtiError> {
        let den = trim_trailing_zeros(den);
        let num = trim_trailing_zeros(num);
        if den.is_empty() {
            return Err(LtiError::InvalidParameter {
                name: "den",
                reason: "zero denominator".into(),
            });
        }
        let n = den.len() - 1;
        if num.len() > n + 1 {
            return Err(LtiError::InvalidParameter {
                name: "num",
                reason: "improper transfer function".into(),
            });
        }
        let lead = den[n];
        let a_coef: Vec<f64> = den.iter().map(|x| x / lead).collect();
        let mut b_coef = vec![0.0; n + 1];
        for (k, x) in num.iter().enumerate() {
            b_coef[k] = x / lead;
        }
        let d = b_coef[n];
        // Companion form in states scaled by alpha^(i-n+1), where alpha is
        // the geometric mean pole magnitude. Keeps entries O(alpha).
        let alpha = match a_coef.first() {
            Some(&a0) if n > 0 && a0 != 0.0 => a0.abs().powf(1.0 / n as f64),
            _ => 1.0,
        };
        let mut a = DMatrix::zeros(n, n);
        for i in 0..n.saturating_sub(1) {
            a[(i, i + 1)] = alpha;
        }
        let mut b = DMatrix::zeros(n, 1);
        let mut c = DMatrix::zeros(1, n);
        if n > 0 {
            for j in 0..n {
                let w = alpha.powi(j as i32 + 1 - n as i32);
                a[(n - 1, j)] = -a_coef[j] * w;
                c[(0, j)] = (b_coef[j] - d * a_coef[j]) * w;
            }
            b[(n - 1, 0)] = 1.0;
        }
        Ok(Self {
            a,
            b,
            c,
            d: DMatrix::from_element(1, 1, d),
        })
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }
    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }
    pub fn c(&self) -> &DMatrix<f64> {
        &self.c
    }
    pub fn d(&self) -> &DMatrix<f64> {
        &self.d
    }

    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }
    pub fn input_dim(&self) -> usize {
        self.b.ncols()
    }
    pub fn output_dim(&self) -> usize {
        self.c.nrows()
    }

    /// `u → self → next`.
    pub fn series(&self, next: &StateSpace) -> Result<StateSpace, LtiError> {
        if self.output_dim() != next.input_dim() {
            return Err(LtiError::Dimension(format!(
                "series: {} outputs feed {} inputs",
                self.output_dim(),
                next.input_dim()
            )));
        }
        let (n1, n2) = (self.state_dim(), next.state_dim());
        let n = n1 + n2;
        let mut a = DMatrix::zeros(n, n);
        a.view_mut((0, 0), (n1, n1)).copy_from(&self.a);
        a.view_mut((n1, n1), (n2, n2)).copy_from(&next.a);
        a.view_mut((n1, 0), (n2, n1)).copy_from(&(&next.b * &self.c));
        let mut b = DMatrix::zeros(n, self.input_dim());
        b.view_mut((0, 0), (n1, self.input_dim())).copy_from(&self.b);
        b.view_mut((n1, 0), (n2, self.input_dim()))
            .copy_from(&(&next.b * &self.d));
        let mut c = DMatrix::zeros(next.output_dim(), n);
        c.view_mut((0, 0), (next.output_dim(), n1))
            .copy_from(&(&next.d * &self.c));
        c.view_mut((0, n1), (next.output_dim(), n2)).copy_from(&next.c);
        let d = &next.d * &self.d;
        StateSpace::new(a, b, c, d)
    }

    /// Block-diagonal stacking: inputs, outputs and states are concatenated.
    pub fn diagonal(blocks: &[StateSpace]) -> StateSpace {
        let n: usize = blocks.iter().map(|b| b.state_dim()).sum();
        let m: usize = blocks.iter().map(|b| b.input_dim()).sum();
        let p: usize = blocks.iter().map(|b| b.output_dim()).sum();
        let mut a = DMatrix::zeros(n, n);
        let mut bm = DMatrix::zeros(n, m);
        let mut c = DMatrix::zeros(p, n);
        let mut d = DMatrix::zeros(p, m);
        let (mut xi, mut ui, mut yi) = (0, 0, 0);
        for blk in blocks {
            let (bn, bmm, bp) = (blk.state_dim(), blk.input_dim(), blk.output_dim());
            a.view_mut((xi, xi), (bn, bn)).copy_from(&blk.a);
            bm.view_mut((xi, ui), (bn, bmm)).copy_from(&blk.b);
            c.view_mut((yi, xi), (bp, bn)).copy_from(&blk.c);
            d.view_mut((yi, ui), (bp, bmm)).copy_from(&blk.d);
            xi += bn;
            ui += bmm;
            yi += bp;
        }
        StateSpace { a, b: bm, c, d }
    }

    /// State derivative `Ax + Bu`.
    pub fn derivative(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        &self.a * x + &self.b * u
    }

    /// `y = Cx + Du`.
    pub fn output(&self, x: &DVector<f64>, u: &DVector<f64>) -> Result<DVector<f64>, LtiError> {
        self.check_state_input(x, u)?;
        Ok(&self.c * x + &self.d * u)
    }

    /// One classical RK4 step of `ẋ = Ax + Bu` with `u` held over the step.
    pub fn step(&self, x: &DVector<f64>, u: &DVector<f64>, dt: f64) -> Result<DVector<f64>, LtiError> {
        self.check_state_input(x, u)?;
        if !(dt > 0.0) {
            return Err(LtiError::InvalidParameter {
                name: "dt",
                reason: format!("must be positive, got {dt}"),
            });
        }
        let bu = &self.b * u;
        let f = |x: &DVector<f64>| &self.a * x + &bu;
        let k1 = f(x);
        let k2 = f(&(x + &k1 * (dt / 2.0)));
        let k3 = f(&(x + &k2 * (dt / 2.0)));
        let k4 = f(&(x + &k3 * dt));
        Ok(x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0))
    }

    fn check_state_input(&self, x: &DVector<f64>, u: &DVector<f64>) -> Result<(), LtiError> {
        if x.len() != self.state_dim() || u.len() != self.input_dim() {
            return Err(LtiError::Dimension(format!(
                "state {} / input {} given, block expects {} / {}",
                x.len(),
                u.len(),
                self.state_dim(),
                self.input_dim()
            )));
        }
        Ok(())
    }

    /// `C (sI − A)⁻¹ B + D`.
    pub fn transfer_eval(&self, s: C64) -> Result<DMatrix<C64>, LtiError> {
        let n = self.state_dim();
        let d = self.d.map(|x| C64::new(x, 0.0));
        if n == 0 {
            return Ok(d);
        }
        let resolvent = DMatrix::<C64>::from_fn(n, n, |i, j| {
            let diag = if i == j { s } else { C64::new(0.0, 0.0) };
            diag - self.a[(i, j)]
        });
        let scale = resolvent.iter().map(|z| z.norm()).fold(0.0, f64::max).max(1e-300);
        let lu = resolvent.lu();
        let u = lu.u();
        let min_pivot = (0..n).map(|i| u[(i, i)].norm()).fold(f64::INFINITY, f64::min);
        if min_pivot <= 1e-13 * scale {
            return Err(LtiError::PoleHit(s));
        }
        let b = self.b.map(|x| C64::new(x, 0.0));
        let x = lu.solve(&b).ok_or(LtiError::PoleHit(s))?;
        let c = self.c.map(|x| C64::new(x, 0.0));
        Ok(c * x + d)
    }

    /// Scalar transfer value for single-input single-output blocks.
    pub fn transfer_siso(&self, s: C64) -> Result<C64, LtiError> {
        if self.input_dim() != 1 || self.output_dim() != 1 {
            return Err(LtiError::Dimension("transfer_siso on a MIMO block".into()));
        }
        Ok(self.transfer_eval(s)?[(0, 0)])
    }
}

fn trim_trailing_zeros(p: &[f64]) -> &[f64] {
    let mut end = p.len();
    while end > 0 && p[end - 1] == 0.0 {
        end -= 1;
    }
    &p[..end]
}

/// `kp + ki/(s + eps) + kd·s/(tau_f·s + 1)`, realized minimally.
///
/// With `ki = 0` this is the lead form `kp + kd·s/(tau_f·s + 1)`; with
/// `ki = kd = 0` a pure gain.
pub fn make_lead_lag(kp: f64, ki: f64, kd: f64, eps: f64, tau_f: f64) -> Result<StateSpace, LtiError> {
    if !(tau_f > 0.0) {
        return Err(LtiError::InvalidParameter {
            name: "tau_f",
            reason: format!("must be positive, got {tau_f}"),
        });
    }
    if !(eps >= 0.0) {
        return Err(LtiError::InvalidParameter {
            name: "eps",
            reason: format!("must be non-negative, got {eps}"),
        });
    }
    let p = 1.0 / tau_f;
    match (ki != 0.0, kd != 0.0) {
        (false, false) => Ok(StateSpace::gain(DMatrix::from_element(1, 1, kp))),
        // kp + kd/τ − (kd/τ²)/(s + 1/τ)
        (false, true) => StateSpace::from_transfer(&[kp * p, kp + kd * p], &[p, 1.0]),
        (true, false) => StateSpace::from_transfer(&[kp * eps + ki, kp], &[eps, 1.0]),
        (true, true) if (eps - p).abs() <= 1e-14 * p => {
            // coincident poles: (ki + kd s/τ)/(s + ε)
            StateSpace::from_transfer(&[kp * eps + ki, kp + kd * p], &[eps, 1.0])
        }
        (true, true) => {
            // common denominator (s + ε)(s + p), with kd s/(τ s + 1) = kd p s/(s + p)
            let den = [eps * p, eps + p, 1.0];
            let num = [
                kp * eps * p + ki * p,
                kp * (eps + p) + ki + kd * p * eps,
                kp + kd * p,
            ];
            StateSpace::from_transfer(&num, &den)
        }
    }
}

/// Coefficients `c_k` of the diagonal Padé approximant of `e^{−x}`:
/// `Σ c_k (−x)^k / Σ c_k x^k`.
pub fn pade_coefficients(order: usize) -> Vec<f64> {
    let n = order;
    let mut c = vec![1.0; n + 1];
    for k in 1..=n {
        // c_k / c_{k−1} = (n − k + 1) / (k (2n − k + 1))
        c[k] = c[k - 1] * (n - k + 1) as f64 / (k as f64 * (2 * n - k + 1) as f64);
    }
    c
}

/// Padé approximant of the pure delay `e^{−sT}`.
pub fn pade_delay(delay: f64, order: usize) -> Result<StateSpace, LtiError> {
    if !(delay > 0.0) {
        return Err(LtiError::InvalidParameter {
            name: "delay",
            reason: format!("must be positive, got {delay}"),
        });
    }
    if order == 0 {
        return Err(LtiError::InvalidParameter {
            name: "order",
            reason: "must be at least 1".into(),
        });
    }
    let c = pade_coefficients(order);
    let mut num = Vec::with_capacity(order + 1);
    let mut den = Vec::with_capacity(order + 1);
    let mut tk = 1.0;
    for (k, ck) in c.iter().enumerate() {
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        num.push(sign * ck * tk);
        den.push(ck * tk);
        tk *= delay;
    }
    StateSpace::from_transfer(&num, &den)
}

/// First-order lag `1/(s/(2π f_c) + 1)`.
pub fn lag_filter(cutoff_hz: f64) -> Result<StateSpace, LtiError> {
    if !(cutoff_hz > 0.0) {
        return Err(LtiError::InvalidParameter {
            name: "cutoff_hz",
            reason: format!("must be positive, got {cutoff_hz}"),
        });
    }
    let wc = 2.0 * std::f64::consts::PI * cutoff_hz;
    StateSpace::from_transfer(&[wc], &[wc, 1.0])
}

/// Hurwitz test; returns the verdict and the spectral abscissa.
pub fn is_hurwitz(a: &DMatrix<f64>) -> (bool, f64) {
    if a.nrows() == 0 {
        return (true, f64::NEG_INFINITY);
    }
    let abscissa = a
        .clone()
        .complex_eigenvalues()
        .iter()
        .map(|z| z.re)
        .fold(f64::NEG_INFINITY, f64::max);
    (abscissa < 0.0, abscissa)
}

/// Closed-loop −3 dB bandwidth: the smallest ω at which `|h(jω)|` falls
/// through `1/√2`, located on a log grid and refined by bisection.
pub fn bandwidth<F>(h: F, omega_max: f64) -> Result<f64, LtiError>
where
    F: Fn(f64) -> C64,
{
    let level = std::f64::consts::FRAC_1_SQRT_2;
    let omega_min = 1e-6;
    let start = h(omega_min).norm();
    if start < level {
        return Err(LtiError::NoPassband(start));
    }
    let ratio: f64 = 1.01;
    let mut lo = omega_min;
    loop {
        let hi = (lo * ratio).min(omega_max);
        if h(hi).norm() < level {
            let (mut a, mut b) = (lo, hi);
            while (b - a) > 1e-8 * b {
                let mid = (a * b).sqrt();
                if h(mid).norm() < level {
                    b = mid;
                } else {
                    a = mid;
                }
            }
            return Ok((a * b).sqrt());
        }
        if hi >= omega_max {
            return Err(LtiError::UnboundedBandwidth(omega_max));
        }
        lo = hi;
    }
}
