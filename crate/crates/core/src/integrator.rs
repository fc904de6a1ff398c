//! Fourth-order Runge–Kutta–Munthe-Kaas stepping on `SO(3)^k × ℝ^n`.
//!
//! Every rotation follows `Ṙ_i = R_i ω̂_i(R, x)` and is advanced as
//! `R_i⁺ = R_i exp(û_i)`, so the step never leaves the group.

use crate::so3::{exp_so3, RotationMatrix};
use nalgebra::{DVector, Vector3};

/// Joint state of a few rotations and a vector part.
#[derive(Debug, Clone, PartialEq)]
pub struct LieState {
    pub rotations: Vec<RotationMatrix>,
    pub x: DVector<f64>,
}

/// Vector field value: body angular velocity per rotation, and `ẋ`.
#[derive(Debug, Clone)]
pub struct Tangent {
    pub omegas: Vec<Vector3<f64>>,
    pub x_dot: DVector<f64>,
}

/// Inverse of the left-trivialized `dexp` truncated after the `u²` term,
/// which is enough for fourth order.
fn dexp_inv(u: &Vector3<f64>, w: &Vector3<f64>) -> Vector3<f64> {
    let uw = u.cross(w);
    w + 0.5 * uw + u.cross(&uw) / 12.0
}

fn retract(base: &[RotationMatrix], u: &[Vector3<f64>]) -> Vec<RotationMatrix> {
    base.iter().zip(u).map(|(r, ui)| r.compose(&exp_so3(ui))).collect()
}

/// One RKMK4 step of size `dt`.
pub fn rkmk4_step<F>(s: &LieState, dt: f64, mut f: F) -> LieState
where
    F: FnMut(&[RotationMatrix], &DVector<f64>) -> Tangent,
{
    let k = s.rotations.len();
    let zero_u = vec![Vector3::zeros(); k];

    let stage = |f: &mut F, u: &[Vector3<f64>], x: &DVector<f64>| {
        let rs = retract(&s.rotations, u);
        let t = f(&rs, x);
        let ku: Vec<Vector3<f64>> = u.iter().zip(&t.omegas).map(|(ui, w)| dexp_inv(ui, w)).collect();
        (ku, t.x_dot)
    };
    let comb = |a: &[Vector3<f64>], h: f64| -> Vec<Vector3<f64>> { a.iter().map(|v| v * h).collect() };

    let (k1u, k1x) = stage(&mut f, &zero_u, &s.x);
    let (k2u, k2x) = stage(&mut f, &comb(&k1u, 0.5 * dt), &(&s.x + &k1x * (0.5 * dt)));
    let (k3u, k3x) = stage(&mut f, &comb(&k2u, 0.5 * dt), &(&s.x + &k2x * (0.5 * dt)));
    let (k4u, k4x) = stage(&mut f, &comb(&k3u, dt), &(&s.x + &k3x * dt));

    let u: Vec<Vector3<f64>> = (0..k)
        .map(|i| (k1u[i] + 2.0 * k2u[i] + 2.0 * k3u[i] + k4u[i]) * (dt / 6.0))
        .collect();
    let x = &s.x + (k1x + 2.0 * k2x + 2.0 * k3x + k4x) * (dt / 6.0);
    LieState { rotations: retract(&s.rotations, &u), x }
}
