//! Stability LMIs of the cascaded attitude/rate architecture.
//!
//! The attitude compensator `(A_R, B_R, C_R, D_R)` maps `e_R` to the rate
//! command. The rate law has the partitioned input `(ω, ω_ref)`:
//! `B = [B_ω  B_ω_ref]`, `D = [D_ω  D_ω_ref]`.

use super::{Definiteness, LmiBuilder, LmiError, LmiProblem, Term};
use crate::lti::StateSpace;
use nalgebra::DMatrix;

fn eye(n: usize) -> DMatrix<f64> {
    DMatrix::identity(n, n)
}

/// Attitude LMI: unknown `P = Pᵀ ≻ 0` with
/// `[[D_R, ★], [P B_R + ½ C_Rᵀ, A_RᵀP + P A_R]] ≺ 0`.
///
/// A static attitude gain has no unknowns and reduces to `D_R ≺ 0`
/// (symmetric part).
pub fn build_attitude_lmi(ctrl: &StateSpace) -> Result<LmiProblem, LmiError> {
    if ctrl.input_dim() != 3 || ctrl.output_dim() != 3 {
        return Err(LmiError::Dimension(format!(
            "attitude compensator must be 3→3, got {}→{}",
            ctrl.input_dim(),
            ctrl.output_dim()
        )));
    }
    let n = ctrl.state_dim();
    let mut b = LmiBuilder::new();
    if n == 0 {
        b.constraint(
            "Q",
            Definiteness::NegativeDefinite,
            &[3],
            vec![(0, 0, vec![Term::constant(ctrl.d().clone())])],
        );
        return b.build();
    }
    let p = b.unknown("P", n, n, true);
    b.constraint(
        "P",
        Definiteness::PositiveDefinite,
        &[n],
        vec![(0, 0, vec![Term::product(eye(n), p, eye(n))])],
    );
    b.constraint(
        "Q",
        Definiteness::NegativeDefinite,
        &[3, n],
        vec![
            (0, 0, vec![Term::constant(ctrl.d().clone())]),
            // upper block is (P B_R + ½ C_Rᵀ)ᵀ = B_Rᵀ P + ½ C_R
            (0, 1, vec![
                Term::product(ctrl.b().transpose(), p, eye(n)),
                Term::constant(ctrl.c() * 0.5),
            ]),
            (1, 1, vec![
                Term::product(ctrl.a().transpose(), p, eye(n)),
                Term::product(eye(n), p, ctrl.a().clone()),
            ]),
        ],
    );
    b.build()
}

/// Block matrices of the cascaded closed loop in `(e_R, ω_e, x_K)` with
/// `x_K = (x_R, x_ω)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CascadeMatrices {
    pub a21: DMatrix<f64>,
    pub a22: DMatrix<f64>,
    pub a23: DMatrix<f64>,
    pub a31: DMatrix<f64>,
    pub a32: DMatrix<f64>,
    pub a33: DMatrix<f64>,
}

impl CascadeMatrices {
    /// Dimension of `x_K`.
    pub fn controller_dim(&self) -> usize {
        self.a33.nrows()
    }

    /// Lower `(ω_e, x_K)` rows of the closed-loop matrix with `E(R_e)`
    /// in place of the first block row.
    pub fn closed_loop(&self, e: &DMatrix<f64>) -> DMatrix<f64> {
        let nk = self.controller_dim();
        let n = 6 + nk;
        let mut m = DMatrix::zeros(n, n);
        m.view_mut((0, 3), (3, 3)).copy_from(e);
        m.view_mut((3, 0), (3, 3)).copy_from(&self.a21);
        m.view_mut((3, 3), (3, 3)).copy_from(&self.a22);
        m.view_mut((3, 6), (3, nk)).copy_from(&self.a23);
        m.view_mut((6, 0), (nk, 3)).copy_from(&self.a31);
        m.view_mut((6, 3), (nk, 3)).copy_from(&self.a32);
        m.view_mut((6, 6), (nk, nk)).copy_from(&self.a33);
        m
    }
}

pub fn build_cascade_matrices(att: &StateSpace, rate: &StateSpace) -> Result<CascadeMatrices, LmiError> {
    if att.input_dim() != 3 || att.output_dim() != 3 {
        return Err(LmiError::Dimension(format!(
            "attitude compensator must be 3→3, got {}→{}",
            att.input_dim(),
            att.output_dim()
        )));
    }
    if rate.input_dim() != 6 || rate.output_dim() != 3 {
        return Err(LmiError::Dimension(format!(
            "rate law must take (ω, ω_ref) and return 3 outputs, got {}→{}",
            rate.input_dim(),
            rate.output_dim()
        )));
    }
    let (nr, nw) = (att.state_dim(), rate.state_dim());
    let nk = nr + nw;
    let (a_r, b_r, c_r, d_r) = (att.a(), att.b(), att.c(), att.d());
    let a_w = rate.a();
    let b_w = rate.b().columns(0, 3).into_owned();
    let b_ref = rate.b().columns(3, 3).into_owned();
    let c_w = rate.c();
    let d_w = rate.d().columns(0, 3).into_owned();
    let d_ref = rate.d().columns(3, 3).into_owned();

    let a21 = &d_ref * d_r;
    let a22 = d_w.clone();
    let mut a23 = DMatrix::zeros(3, nk);
    a23.view_mut((0, 0), (3, nr)).copy_from(&(&d_ref * c_r));
    a23.view_mut((0, nr), (3, nw)).copy_from(c_w);
    let mut a31 = DMatrix::zeros(nk, 3);
    a31.view_mut((0, 0), (nr, 3)).copy_from(b_r);
    a31.view_mut((nr, 0), (nw, 3)).copy_from(&(&b_ref * d_r));
    let mut a32 = DMatrix::zeros(nk, 3);
    a32.view_mut((nr, 0), (nw, 3)).copy_from(&b_w);
    let mut a33 = DMatrix::zeros(nk, nk);
    a33.view_mut((0, 0), (nr, nr)).copy_from(a_r);
    a33.view_mut((nr, 0), (nw, nr)).copy_from(&(&b_ref * c_r));
    a33.view_mut((nr, nr), (nw, nw)).copy_from(a_w);
    Ok(CascadeMatrices { a21, a22, a23, a31, a32, a33 })
}

/// Cascade LMIs in the unknowns `p11`, `p12` (scalars), `P22`, `P33`
/// (symmetric) and `P23` (3 × n_K):
///
/// ```text
/// 𝒫 = [[p11 I, p12 I, 0], [★, P22, P23], [★, ★, P33]] ≻ 0,   p12 > 0
/// ℳ = [[M11, M12, M13], [★, M22, M23], [★, ★, M33]] ≺ 0
/// M11 = p12 (A21 + A21ᵀ)
/// M22 = 2 p12 I + P22 A22 + A22ᵀ P22 + P23 A32 + A32ᵀ P23ᵀ
/// M33 = P23ᵀ A23 + A23ᵀ P23 + P33 A33 + A33ᵀ P33
/// M12 = p11 I + p12 A22 + A21ᵀ P22 + A31ᵀ P23ᵀ
/// M13 = p12 A23 + A21ᵀ P23 + A31ᵀ P33
/// M23 = P22 A23 + A22ᵀ P23 + A32ᵀ P33 + P23 A33
/// ```
pub fn build_cascade_lmis(m: &CascadeMatrices) -> Result<LmiProblem, LmiError> {
    let nk = m.controller_dim();
    let i3 = eye(3);
    let ik = eye(nk);
    let mut b = LmiBuilder::new();
    let p11 = b.unknown("p11", 1, 1, true);
    let p12 = b.unknown("p12", 1, 1, false);
    let p22 = b.unknown("P22", 3, 3, true);
    let p33 = b.unknown("P33", nk, nk, true);
    let p23 = b.unknown("P23", 3, nk, false);

    b.constraint(
        "Pcal",
        Definiteness::PositiveDefinite,
        &[3, 3, nk],
        vec![
            (0, 0, vec![Term::scaled(p11, i3.clone())]),
            (0, 1, vec![Term::scaled(p12, i3.clone())]),
            (1, 1, vec![Term::product(i3.clone(), p22, i3.clone())]),
            (1, 2, vec![Term::product(i3.clone(), p23, ik.clone())]),
            (2, 2, vec![Term::product(ik.clone(), p33, ik.clone())]),
        ],
    );

    // The decrease argument bounds p12·ω_eᵀ(E + Eᵀ − 2I)ω_e ≤ 0, which needs p12 ≥ 0.
    b.constraint(
        "p12",
        Definiteness::PositiveDefinite,
        &[1],
        vec![(0, 0, vec![Term::scaled(p12, DMatrix::identity(1, 1))])],
    );

    let a21t = m.a21.transpose();
    let a22t = m.a22.transpose();
    let a31t = m.a31.transpose();
    let a32t = m.a32.transpose();
    let a23t = m.a23.transpose();
    let a33t = m.a33.transpose();
    b.constraint(
        "M",
        Definiteness::NegativeDefinite,
        &[3, 3, nk],
        vec![
            (0, 0, vec![Term::scaled(p12, &m.a21 + &a21t)]),
            (0, 1, vec![
                Term::scaled(p11, i3.clone()),
                Term::scaled(p12, m.a22.clone()),
                Term::product(a21t.clone(), p22, i3.clone()),
                Term::product_t(a31t.clone(), p23, i3.clone()),
            ]),
            (0, 2, vec![
                Term::scaled(p12, m.a23.clone()),
                Term::product(a21t.clone(), p23, ik.clone()),
                Term::product(a31t.clone(), p33, ik.clone()),
            ]),
            (1, 1, vec![
                Term::scaled(p12, i3.clone() * 2.0),
                Term::product(i3.clone(), p22, m.a22.clone()),
                Term::product(a22t.clone(), p22, i3.clone()),
                Term::product(i3.clone(), p23, m.a32.clone()),
                Term::product_t(a32t.clone(), p23, i3.clone()),
            ]),
            (1, 2, vec![
                Term::product(i3.clone(), p22, m.a23.clone()),
                Term::product(a22t.clone(), p23, ik.clone()),
                Term::product(a32t.clone(), p33, ik.clone()),
                Term::product(i3.clone(), p23, m.a33.clone()),
            ]),
            (2, 2, vec![
                Term::product_t(ik.clone(), p23, m.a23.clone()),
                Term::product(a23t.clone(), p23, ik.clone()),
                Term::product(ik.clone(), p33, m.a33.clone()),
                Term::product(a33t.clone(), p33, ik.clone()),
            ]),
        ],
    );
    b.build()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lti::make_lead_lag;
    use crate::lmi::{solve_feasibility, verify_assignment, verify_certificate, SolverOptions};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn per_axis(blk: &StateSpace) -> StateSpace {
        StateSpace::diagonal(&[blk.clone(), blk.clone(), blk.clone()])
    }

    fn random_ss(rng: &mut ChaCha8Rng, n: usize, m: usize, p: usize) -> StateSpace {
        let mut r = |rows, cols| DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0));
        StateSpace::new(r(n, n), r(n, m), r(p, n), r(p, m)).unwrap()
    }

    #[test]
    fn proportional_attitude_gain() {
        let k = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![2.0, 3.0, 4.0]));
        let p = build_attitude_lmi(&StateSpace::gain(-k.clone())).unwrap();
        assert_eq!(p.scalar_count(), 0);
        let v = solve_feasibility(&p, &SolverOptions::default());
        assert!(v.is_feasible());

        let p = build_attitude_lmi(&StateSpace::gain(DMatrix::identity(3, 3))).unwrap();
        assert!(!solve_feasibility(&p, &SolverOptions::default()).is_feasible());
    }

    #[test]
    fn pid_attitude_compensator_is_certified() {
        let pid = make_lead_lag(-27.75, -1.85, -5.55, 0.001, 10.0).unwrap();
        let ctrl = per_axis(&pid);
        let p = build_attitude_lmi(&ctrl).unwrap();
        let v = solve_feasibility(&p, &SolverOptions::default());
        let cert = v.certificate().unwrap_or_else(|| panic!("{v:?}"));
        let pm = cert.block("P").unwrap();
        assert!(pm.clone().symmetric_eigenvalues().min() > 0.0);
        assert!(verify_certificate(&p, cert).unwrap().passes(1e-7));
    }

    #[test]
    fn attitude_lmi_matches_direct_assembly() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let ctrl = random_ss(&mut rng, 4, 3, 3);
        let p = build_attitude_lmi(&ctrl).unwrap();
        let m = DMatrix::from_fn(4, 4, |_, _| rng.random_range(-1.0..1.0));
        let pv = &m * m.transpose() + DMatrix::identity(4, 4);
        let x = p.flatten(std::slice::from_ref(&pv)).unwrap();
        let q = p.constraint("Q").unwrap().instantiate(&x);
        let off = &pv * ctrl.b() + ctrl.c().transpose() * 0.5;
        let mut direct = DMatrix::zeros(7, 7);
        let d = ctrl.d();
        direct.view_mut((0, 0), (3, 3)).copy_from(&((d + d.transpose()) * 0.5));
        direct.view_mut((3, 0), (4, 3)).copy_from(&off);
        direct.view_mut((0, 3), (3, 4)).copy_from(&off.transpose());
        direct
            .view_mut((3, 3), (4, 4))
            .copy_from(&(ctrl.a().transpose() * &pv + &pv * ctrl.a()));
        assert!((q - direct).amax() < 1e-13);
    }

    #[test]
    fn cascade_matrices_match_full_closed_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let att = random_ss(&mut rng, 2, 3, 3);
        let rate = random_ss(&mut rng, 4, 6, 3);
        let m = build_cascade_matrices(&att, &rate).unwrap();
        // direct assembly of the (ω_e, x_R, x_ω) rows of the closed loop
        let (a_r, b_r, c_r, d_r) = (att.a(), att.b(), att.c(), att.d());
        let b_w = rate.b().columns(0, 3);
        let b_ref = rate.b().columns(3, 3);
        let d_w = rate.d().columns(0, 3);
        let d_ref = rate.d().columns(3, 3);
        let mut full = DMatrix::zeros(12, 12);
        full.view_mut((3, 0), (3, 3)).copy_from(&(d_ref * d_r));
        full.view_mut((3, 3), (3, 3)).copy_from(&d_w);
        full.view_mut((3, 6), (3, 2)).copy_from(&(d_ref * c_r));
        full.view_mut((3, 8), (3, 4)).copy_from(rate.c());
        full.view_mut((6, 0), (2, 3)).copy_from(b_r);
        full.view_mut((6, 6), (2, 2)).copy_from(a_r);
        full.view_mut((8, 0), (4, 3)).copy_from(&(b_ref * d_r));
        full.view_mut((8, 3), (4, 3)).copy_from(&b_w);
        full.view_mut((8, 6), (4, 2)).copy_from(&(b_ref * c_r));
        full.view_mut((8, 8), (4, 4)).copy_from(rate.a());
        let e = DMatrix::identity(3, 3);
        full.view_mut((0, 3), (3, 3)).copy_from(&e);
        assert!((m.closed_loop(&e) - full).amax() < 1e-15);
        assert!(m.a32.rows(0, 2).iter().all(|v| *v == 0.0));
    }

    #[test]
    fn cascade_matrix_dimension_errors() {
        let att = StateSpace::gain(DMatrix::identity(3, 3));
        let bad_rate = StateSpace::gain(DMatrix::identity(3, 3));
        assert!(build_cascade_matrices(&att, &bad_rate).is_err());
        let bad_att = StateSpace::gain(DMatrix::identity(2, 3));
        let rate = StateSpace::gain(DMatrix::zeros(3, 6));
        assert!(build_cascade_matrices(&bad_att, &rate).is_err());
    }

    fn proportional_pair(kr: f64, kw: f64) -> (StateSpace, StateSpace) {
        let att = StateSpace::gain(-DMatrix::identity(3, 3) * kr);
        let mut d = DMatrix::zeros(3, 6);
        d.view_mut((0, 0), (3, 3)).copy_from(&(-DMatrix::identity(3, 3) * kw));
        d.view_mut((0, 3), (3, 3)).copy_from(&(DMatrix::identity(3, 3) * kw));
        (att, StateSpace::gain(d))
    }

    #[test]
    fn cascade_lmi_structure() {
        let (att, rate) = proportional_pair(4.0, 20.0);
        let m = build_cascade_matrices(&att, &rate).unwrap();
        assert!((&m.a21 - DMatrix::identity(3, 3) * -80.0).amax() < 1e-12);
        assert_eq!(m.controller_dim(), 0);
        let p = build_cascade_lmis(&m).unwrap();
        // M22 carries 2 p12 I when everything else is zero
        let blocks = vec![
            DMatrix::zeros(1, 1),
            DMatrix::from_element(1, 1, 1.5),
            DMatrix::zeros(3, 3),
            DMatrix::zeros(0, 0),
            DMatrix::zeros(3, 0),
        ];
        let x = p.flatten(&blocks).unwrap();
        let mm = p.constraint("M").unwrap().instantiate(&x);
        let m22 = mm.view((3, 3), (3, 3)).into_owned();
        assert!((m22 - DMatrix::identity(3, 3) * 3.0).amax() < 1e-15);
    }

    #[test]
    fn proportional_cascade_feasible_and_sign_flip_infeasible() {
        let (att, rate) = proportional_pair(4.0, 20.0);
        let m = build_cascade_matrices(&att, &rate).unwrap();
        let p = build_cascade_lmis(&m).unwrap();
        let v = solve_feasibility(&p, &SolverOptions::default());
        let cert = v.certificate().unwrap_or_else(|| panic!("{v:?}"));
        assert!(verify_certificate(&p, cert).unwrap().passes(1e-7));
        // homogeneous: scaling keeps feasibility
        let r = verify_assignment(&p, &cert.scaled(0.01)).unwrap();
        assert!(r.margin > 0.0);

        let (att, rate) = proportional_pair(-4.0, 20.0);
        let m = build_cascade_matrices(&att, &rate).unwrap();
        let p = build_cascade_lmis(&m).unwrap();
        let v = solve_feasibility(&p, &SolverOptions::default());
        assert!(!v.is_feasible(), "{v:?}");
    }
}
