//! Rotation-group kernel: hat/vee, exponential and logarithm, the chordal
//! configuration error, the attitude error vector and its Jacobian.
//!
//! Everything here is a pure function over small fixed-size values.

use nalgebra::{Matrix3, Vector3};
use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

/// Tolerance on `‖RᵀR − I‖_F` for a matrix to count as a rotation.
pub const ORTHONORMALITY_TOL: f64 = 1e-9;
/// Largest symmetric part accepted by [`vee`].
pub const SKEW_TOL: f64 = 1e-9;
/// Below this angle `exp`/`log` switch to Taylor forms of the Rodrigues coefficients.
pub const SMALL_ANGLE: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum So3Error {
    #[error("matrix is not skew-symmetric (symmetric part norm {0:e})")]
    NotSkew(f64),
    #[error("matrix is not a rotation (‖RᵀR − I‖_F = {defect:e}, det = {det})")]
    NotRotation { defect: f64, det: f64 },
    #[error("cannot project a matrix with det = {0} onto SO(3)")]
    NonPositiveDeterminant(f64),
}

/// Skew-symmetric 3×3 matrix, an element of so(3).
///
/// Only constructed through [`hat`], so `Sᵀ = −S` holds exactly.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SkewMatrix(Matrix3<f64>);

impl SkewMatrix {
    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    pub fn into_inner(self) -> Matrix3<f64> {
        self.0
    }

    /// Exact inverse of [`hat`].
    pub fn vee(&self) -> Vector3<f64> {
        Vector3::new(self.0[(2, 1)], self.0[(0, 2)], self.0[(1, 0)])
    }
}

/// Element of SO(3): orthonormal with positive determinant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RotationMatrix(Matrix3<f64>);

impl RotationMatrix {
    pub fn identity() -> Self {
        Self(Matrix3::identity())
    }

    /// Validates `‖RᵀR − I‖_F ≤ 1e−9` and `det R > 0`.
    pub fn new(m: Matrix3<f64>) -> Result<Self, So3Error> {
        let defect = orthonormality_defect(&m);
        let det = m.determinant();
        if !(defect <= ORTHONORMALITY_TOL) || !(det > 0.0) {
            return Err(So3Error::NotRotation { defect, det });
        }
        Ok(Self(m))
    }

    /// Wraps a matrix the caller knows to be a rotation (e.g. a product of rotations).
    pub fn from_matrix_unchecked(m: Matrix3<f64>) -> Self {
        Self(m)
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    pub fn into_inner(self) -> Matrix3<f64> {
        self.0
    }

    pub fn transpose(&self) -> Self {
        Self(self.0.transpose())
    }

    pub fn compose(&self, other: &RotationMatrix) -> Self {
        Self(self.0 * other.0)
    }

    pub fn rotate(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.0 * v
    }

    pub fn trace(&self) -> f64 {
        self.0.trace()
    }

    /// Rotation angle in `[0, π]`.
    pub fn angle(&self) -> f64 {
        let s = 0.5 * skew_part_vee(&self.0).norm();
        let c = 0.5 * (self.0.trace() - 1.0);
        s.atan2(c)
    }

    pub fn orthonormality_defect(&self) -> f64 {
        orthonormality_defect(&self.0)
    }
}

impl std::ops::Mul for RotationMatrix {
    type Output = RotationMatrix;
    fn mul(self, rhs: RotationMatrix) -> RotationMatrix {
        self.compose(&rhs)
    }
}

pub fn orthonormality_defect(m: &Matrix3<f64>) -> f64 {
    (m.transpose() * m - Matrix3::identity()).norm()
}

/// `hat(v)·w = v × w`.
pub fn hat(v: &Vector3<f64>) -> SkewMatrix {
    SkewMatrix(Matrix3::new(
        0.0, -v.z, v.y, //
        v.z, 0.0, -v.x, //
        -v.y, v.x, 0.0,
    ))
}

/// Inverse of [`hat`] on a general matrix; rejects inputs with a symmetric
/// part above [`SKEW_TOL`].
pub fn vee(s: &Matrix3<f64>) -> Result<Vector3<f64>, So3Error> {
    let sym = 0.5 * (s + s.transpose());
    let asym = sym.norm();
    if !(asym <= SKEW_TOL) {
        return Err(So3Error::NotSkew(asym));
    }
    Ok(Vector3::new(s[(2, 1)], s[(0, 2)], s[(1, 0)]))
}

/// `(M − Mᵀ)^∨` without the skew check.
fn skew_part_vee(m: &Matrix3<f64>) -> Vector3<f64> {
    Vector3::new(
        m[(2, 1)] - m[(1, 2)],
        m[(0, 2)] - m[(2, 0)],
        m[(1, 0)] - m[(0, 1)],
    )
}

/// Rodrigues exponential `exp(v̂)`.
pub fn exp_so3(v: &Vector3<f64>) -> RotationMatrix {
    let theta2 = v.norm_squared();
    let theta = theta2.sqrt();
    let (a, b) = if theta < SMALL_ANGLE {
        (1.0 - theta2 / 6.0, 0.5 - theta2 / 24.0)
    } else {
        (theta.sin() / theta, (1.0 - theta.cos()) / theta2)
    };
    let k = hat(v).into_inner();
    RotationMatrix(Matrix3::identity() + k * a + k * k * b)
}

/// Principal logarithm, `‖result‖ ∈ [0, π]`.
///
/// At angle π the axis comes from the dominant diagonal entry of `(R + I)/2`
/// with its first nonzero component made positive.
pub fn log_so3(r: &RotationMatrix) -> Vector3<f64> {
    let m = r.matrix();
    let w = skew_part_vee(m); // 2 sinθ · axis
    let s = 0.5 * w.norm();
    let c = 0.5 * (m.trace() - 1.0);
    let theta = s.atan2(c);

    if theta < SMALL_ANGLE {
        return 0.5 * w * (1.0 + theta * theta / 6.0);
    }
    if theta < std::f64::consts::PI - 1e-2 {
        return w * (theta / (2.0 * theta.sin()));
    }

    // Near π: (R + Rᵀ)/2 = cosθ I + (1 − cosθ) s sᵀ.
    let sym = 0.5 * (m + m.transpose());
    let outer = (sym - Matrix3::identity() * c) / (1.0 - c);
    let k = (0..3)
        .max_by(|&i, &j| outer[(i, i)].total_cmp(&outer[(j, j)]))
        .unwrap_or(0);
    let mut axis: Vector3<f64> = outer.column(k).into_owned();
    axis /= axis.norm();
    let d = axis.dot(&w);
    if d.abs() > 1e-12 {
        if d < 0.0 {
            axis = -axis;
        }
    } else if let Some(first) = axis.iter().copied().find(|x| x.abs() > 1e-12) {
        if first < 0.0 {
            axis = -axis;
        }
    }
    axis * theta
}

/// `R_e = R_dᵀ R`.
pub fn attitude_error(r_d: &RotationMatrix, r: &RotationMatrix) -> RotationMatrix {
    RotationMatrix(r_d.matrix().transpose() * r.matrix())
}

/// Configuration error `Ψ = ½ tr(I − R_dᵀR)`, a quarter of the chordal metric.
pub fn config_error(r_d: &RotationMatrix, r: &RotationMatrix) -> f64 {
    config_error_of(&attitude_error(r_d, r))
}

/// `Ψ` of an attitude error already formed.
pub fn config_error_of(r_e: &RotationMatrix) -> f64 {
    0.5 * (3.0 - r_e.trace())
}

/// Chordal metric `‖I − R_aᵀR_b‖²_F`.
pub fn chordal_metric(r_a: &RotationMatrix, r_b: &RotationMatrix) -> f64 {
    (Matrix3::identity() - r_a.matrix().transpose() * r_b.matrix()).norm_squared()
}

/// `e_R = ½ (R_e − R_eᵀ)^∨`.
pub fn attitude_error_vector(r_e: &RotationMatrix) -> Vector3<f64> {
    0.5 * skew_part_vee(r_e.matrix())
}

/// `E(R_e) = ½ (tr(R_e) I − R_eᵀ)`, so that `ė_R = E(R_e) ω_e`.
pub fn error_jacobian(r_e: &RotationMatrix) -> Matrix3<f64> {
    let m = r_e.matrix();
    0.5 * (Matrix3::identity() * m.trace() - m.transpose())
}

/// `ω_e = ω − R_eᵀ ω_d`.
pub fn angular_velocity_error(
    omega: &Vector3<f64>,
    r_e: &RotationMatrix,
    omega_d: &Vector3<f64>,
) -> Vector3<f64> {
    omega - r_e.matrix().transpose() * omega_d
}

/// Frobenius-nearest rotation (orthogonal polar factor) of `m`.
///
/// Computed with the scaled Newton iteration `X ← ½(γX + X⁻ᵀ/γ)`.
pub fn project_to_so3(m: &Matrix3<f64>) -> Result<RotationMatrix, So3Error> {
    let det = m.determinant();
    if !(det > 0.0) || !det.is_finite() {
        return Err(So3Error::NonPositiveDeterminant(det));
    }
    let mut x = *m;
    for _ in 0..100 {
        let Some(inv) = x.try_inverse() else {
            return Err(So3Error::NonPositiveDeterminant(x.determinant()));
        };
        let inv_t = inv.transpose();
        // determinant scaling, dropped near convergence
        let gamma = x.determinant().abs().powf(-1.0 / 3.0);
        let gamma = if (gamma - 1.0).abs() < 1e-3 { 1.0 } else { gamma };
        let next = 0.5 * (x * gamma + inv_t / gamma);
        let change = (next - x).norm();
        x = next;
        if change < 1e-15 {
            break;
        }
    }
    Ok(RotationMatrix(x))
}

/// Haar-uniform random rotation (normalized Gaussian unit quaternion).
pub fn random_rotation<R: Rng + ?Sized>(rng: &mut R) -> RotationMatrix {
    let mut q = [0.0f64; 4];
    loop {
        for qi in &mut q {
            *qi = rng.sample(StandardNormal);
        }
        let n = q.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-9 {
            q.iter_mut().for_each(|x| *x /= n);
            break;
        }
    }
    let [w, x, y, z] = q;
    RotationMatrix(Matrix3::new(
        1.0 - 2.0 * (y * y + z * z),
        2.0 * (x * y - w * z),
        2.0 * (x * z + w * y),
        2.0 * (x * y + w * z),
        1.0 - 2.0 * (x * x + z * z),
        2.0 * (y * z - w * x),
        2.0 * (x * z - w * y),
        2.0 * (y * z + w * x),
        1.0 - 2.0 * (x * x + y * y),
    ))
}

/// Uniformly distributed unit vector.
pub fn random_unit_vector<R: Rng + ?Sized>(rng: &mut R) -> Vector3<f64> {
    loop {
        let v = Vector3::new(
            rng.sample::<f64, _>(StandardNormal),
            rng.sample::<f64, _>(StandardNormal),
            rng.sample::<f64, _>(StandardNormal),
        );
        let n = v.norm();
        if n > 1e-9 {
            return v / n;
        }
    }
}
