//! Margin-maximizing LMI feasibility by a log-det barrier Newton method.
//!
//! Each constraint is oriented so it reads `G(x) ≻ 0` and scaled to unit
//! coefficient norm; scalar variables are rescaled the same way. The solver
//! then maximizes `t` subject to `Gᵢ(z) − tI ≻ 0` and `‖z‖ ≤ radius`,
//! starting from `z = 0` with `t` below every initial eigenvalue, so no
//! phase-one problem is needed. After each centering step the barrier
//! gives an upper bound `t + m/s` on the optimal margin; a bound below the
//! normalized floor proves there is no usefully feasible point inside the ball.
//!
//! Verdicts:
//! - `Feasible`: the unscaled assignment passes [`super::verify_certificate`]
//!   at `tol`.
//! - `Infeasible`: the optimal scaled margin inside the ball is below
//!   [`super::NORMALIZED_MARGIN_FLOOR`], or the converged point fails verification.
//!   For homogeneous problems the ball costs no generality.
//! - `Indeterminate`: the Newton budget ran out, or the iteration stalled,
//!   before either of the above could be established.

use super::{verify_vector, NORMALIZED_MARGIN_FLOOR, Certificate, Definiteness, LmiProblem, MarginReport};
use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Strictness tolerance on the verified margins.
    pub tol: f64,
    /// Radius of the ball bounding the rescaled variables.
    pub radius: f64,
    /// Total Newton iteration budget.
    pub max_newton: usize,
    /// Stop once the barrier duality bound `m/s` falls below this (relative to max(1, t)).
    pub gap_tol: f64,
    /// Barrier weight growth per outer iteration.
    pub mu: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-7,
            radius: 1e4,
            max_newton: 2000,
            gap_tol: 1e-9,
            mu: 10.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Verdict {
    Feasible(Certificate),
    Infeasible {
        /// Margins of the best point found.
        best: MarginReport,
        /// Upper bound on the achievable (scaled) margin inside the ball.
        upper_bound: f64,
    },
    Indeterminate {
        best: MarginReport,
        iterations: usize,
    },
}

impl Verdict {
    pub fn is_feasible(&self) -> bool {
        matches!(self, Verdict::Feasible(_))
    }

    pub fn certificate(&self) -> Option<&Certificate> {
        match self {
            Verdict::Feasible(c) => Some(c),
            _ => None,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            Verdict::Feasible(_) => "feasible",
            Verdict::Infeasible { .. } => "infeasible",
            Verdict::Indeterminate { .. } => "indeterminate",
        }
    }

    /// Margin report of the certificate or of the best point found.
    pub fn report(&self) -> &MarginReport {
        match self {
            Verdict::Feasible(c) => &c.report,
            Verdict::Infeasible { best, .. } | Verdict::Indeterminate { best, .. } => best,
        }
    }
}

/// Scaled constraint data: `G(z) = g0 + Σ z_k g[k]` over the active variables.
struct ScaledConstraint {
    g0: DMatrix<f64>,
    active: Vec<usize>,
    g: Vec<DMatrix<f64>>,
}

struct Barrier<'a> {
    cons: &'a [ScaledConstraint],
    n: usize,
    radius2: f64,
    m_total: f64,
}

impl Barrier<'_> {
    /// Cholesky factors of every `G(z) − tI`, or `None` outside the domain.
    fn factors(&self, z: &DVector<f64>, t: f64) -> Option<Vec<Cholesky<f64, Dyn>>> {
        if self.radius2 - z.norm_squared() <= 0.0 {
            return None;
        }
        self.cons
            .iter()
            .map(|c| {
                let mut s = c.g0.clone();
                for (i, &k) in c.active.iter().enumerate() {
                    if z[k] != 0.0 {
                        s += &c.g[i] * z[k];
                    }
                }
                for d in 0..s.nrows() {
                    s[(d, d)] -= t;
                }
                Cholesky::new(s)
            })
            .collect()
    }

    fn value(&self, s: f64, z: &DVector<f64>, t: f64) -> Option<f64> {
        let f = self.factors(z, t)?;
        let logdet: f64 = f
            .iter()
            .map(|ch| {
                let l = ch.l_dirty();
                (0..l.nrows()).map(|i| 2.0 * l[(i, i)].ln()).sum::<f64>()
            })
            .sum();
        Some(-s * t - logdet - (self.radius2 - z.norm_squared()).ln())
    }

    /// Gradient and Hessian in `(z, t)`.
    fn derivatives(
        &self,
        s: f64,
        z: &DVector<f64>,
        factors: &[Cholesky<f64, Dyn>],
    ) -> (DVector<f64>, DMatrix<f64>) {
        let dim = self.n + 1;
        let mut grad = DVector::zeros(dim);
        let mut hess = DMatrix::zeros(dim, dim);
        grad[self.n] = -s;

        for (c, ch) in self.cons.iter().zip(factors) {
            let size = c.g0.nrows();
            let l = ch.l();
            // W_k = L⁻¹ A_k L⁻ᵀ, stacked as columns; the last column is for t (A = −I).
            let cols = c.active.len() + 1;
            let mut w = DMatrix::zeros(size * size, cols);
            for (i, gk) in c.g.iter().enumerate() {
                let wk = sandwich(&l, gk);
                w.column_mut(i).copy_from_slice(wk.as_slice());
            }
            let wt = -sandwich(&l, &DMatrix::identity(size, size));
            w.column_mut(cols - 1).copy_from_slice(wt.as_slice());

            let gram = w.tr_mul(&w);
            let idx: Vec<usize> = c.active.iter().copied().chain([self.n]).collect();
            for (a, &ia) in idx.iter().enumerate() {
                let tr: f64 = (0..size).map(|d| w[(d * size + d, a)]).sum();
                grad[ia] -= tr;
                for (b, &ib) in idx.iter().enumerate() {
                    hess[(ia, ib)] += gram[(a, b)];
                }
            }
        }

        let slack = self.radius2 - z.norm_squared();
        for k in 0..self.n {
            grad[k] += 2.0 * z[k] / slack;
            hess[(k, k)] += 2.0 / slack;
            for j in 0..self.n {
                hess[(k, j)] += 4.0 * z[k] * z[j] / (slack * slack);
            }
        }
        (grad, hess)
    }
}

/// `L⁻¹ A L⁻ᵀ` for lower-triangular `L`.
fn sandwich(l: &DMatrix<f64>, a: &DMatrix<f64>) -> DMatrix<f64> {
    let left = l.solve_lower_triangular(a).expect("nonsingular Cholesky factor");
    let both = l
        .solve_lower_triangular(&left.transpose())
        .expect("nonsingular Cholesky factor");
    both.transpose()
}

fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return f64::INFINITY;
    }
    m.clone()
        .symmetric_eigenvalues()
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// Decides strict feasibility of `p` and returns a verified certificate on success.
pub fn solve_feasibility(p: &LmiProblem, opts: &SolverOptions) -> Verdict {
    let n = p.scalar_count();
    let constraints: Vec<_> = p.constraints().iter().filter(|c| c.size() > 0).collect();

    // orientation and constraint scaling
    let mut oriented: Vec<(DMatrix<f64>, Vec<DMatrix<f64>>)> = constraints
        .iter()
        .map(|c| {
            let sign = match c.sense {
                Definiteness::PositiveDefinite => 1.0,
                Definiteness::NegativeDefinite => -1.0,
            };
            let coeffs: Vec<DMatrix<f64>> = (0..n).map(|k| c.coefficient(k) * sign).collect();
            let g0 = c.constant() * sign;
            let norm = (g0.norm_squared() + coeffs.iter().map(|m| m.norm_squared()).sum::<f64>()).sqrt();
            let scale = if norm > 0.0 { 1.0 / norm } else { 1.0 };
            (g0 * scale, coeffs.into_iter().map(|m| m * scale).collect())
        })
        .collect();

    // variable scaling
    let sigma: Vec<f64> = (0..n)
        .map(|k| {
            let norm: f64 = oriented.iter().map(|(_, g)| g[k].norm_squared()).sum::<f64>().sqrt();
            if norm > 0.0 { 1.0 / norm } else { 1.0 }
        })
        .collect();
    let cons: Vec<ScaledConstraint> = oriented
        .drain(..)
        .map(|(g0, g)| {
            let mut active = Vec::new();
            let mut mats = Vec::new();
            for (k, m) in g.into_iter().enumerate() {
                if m.iter().any(|v| *v != 0.0) {
                    active.push(k);
                    mats.push(m * sigma[k]);
                }
            }
            ScaledConstraint { g0, active, g: mats }
        })
        .collect();

    let unscale = |z: &DVector<f64>| DVector::from_fn(n, |k, _| z[k] * sigma[k]);
    let certificate = |x: &DVector<f64>, report: MarginReport| Certificate {
        names: p.unknowns().iter().map(|u| u.name.clone()).collect(),
        blocks: p.unflatten(x),
        report,
    };

    let mut z = DVector::zeros(n);
    if n == 0 || cons.is_empty() {
        let report = verify_vector(p, &z);
        if report.passes(opts.tol) {
            return Verdict::Feasible(certificate(&z, report));
        }
        let upper_bound = report.normalized_margin;
        return Verdict::Infeasible { best: report, upper_bound };
    }

    let barrier = Barrier {
        cons: &cons,
        n,
        radius2: opts.radius * opts.radius,
        m_total: cons.iter().map(|c| c.g0.nrows() as f64).sum::<f64>() + 1.0,
    };
    let mut t = cons
        .iter()
        .map(|c| min_eigenvalue(&c.g0))
        .fold(f64::INFINITY, f64::min)
        - 1.0;

    let mut s = 1.0;
    let mut iterations = 0usize;
    let mut best_report = verify_vector(p, &unscale(&z));
    let mut stalled = false;

    loop {
        // centering
        loop {
            if iterations >= opts.max_newton {
                break;
            }
            iterations += 1;
            let Some(factors) = barrier.factors(&z, t) else {
                stalled = true;
                break;
            };
            let (grad, hess) = barrier.derivatives(s, &z, &factors);
            let step = match Cholesky::new(hess.clone()) {
                Some(ch) => ch.solve(&(-&grad)),
                None => {
                    let reg = hess.diagonal().amax().max(1.0) * 1e-12;
                    match Cholesky::new(hess + DMatrix::identity(n + 1, n + 1) * reg) {
                        Some(ch) => ch.solve(&(-&grad)),
                        None => {
                            stalled = true;
                            break;
                        }
                    }
                }
            };
            let decrement = -grad.dot(&step);
            if decrement / 2.0 <= 1e-10 {
                break;
            }
            let f0 = barrier.value(s, &z, t).unwrap_or(f64::INFINITY);
            let mut alpha = 1.0;
            let mut moved = false;
            while alpha > 1e-12 {
                let zn = &z + step.rows(0, n) * alpha;
                let tn = t + step[n] * alpha;
                if let Some(f1) = barrier.value(s, &zn, tn) {
                    if f1 <= f0 - 0.25 * alpha * decrement {
                        z = zn;
                        t = tn;
                        moved = true;
                        break;
                    }
                }
                alpha *= 0.5;
            }
            if !moved {
                break;
            }
        }

        let report = verify_vector(p, &unscale(&z));
        if report.normalized_margin > best_report.normalized_margin
            || (report.passes(opts.tol) && !best_report.passes(opts.tol))
        {
            best_report = report.clone();
        }

        let gap = barrier.m_total / s;
        let upper_bound = t + gap;
        if upper_bound < NORMALIZED_MARGIN_FLOOR {
            return Verdict::Infeasible { best: best_report, upper_bound };
        }
        if gap <= opts.gap_tol * t.abs().max(1.0) {
            let x = unscale(&z);
            let report = verify_vector(p, &x);
            if report.passes(opts.tol) {
                return Verdict::Feasible(certificate(&x, report));
            }
            return Verdict::Infeasible { best: best_report, upper_bound };
        }
        if stalled || iterations >= opts.max_newton {
            let x = unscale(&z);
            let report = verify_vector(p, &x);
            if report.passes(opts.tol) {
                return Verdict::Feasible(certificate(&x, report));
            }
            return Verdict::Indeterminate { best: best_report, iterations };
        }
        s *= opts.mu;
    }
}
