//! Linear matrix inequality problems: representation, certificate audit, a
//! small dense barrier solver, and the attitude/cascade stability LMIs.
//!
//! A problem has unknown matrix blocks, each flattened into scalar
//! variables (upper triangle for symmetric blocks, all entries otherwise),
//! and constraints `F(x) = F₀ + Σ xₖ Fₖ ≻ 0` or `≺ 0` with every `Fₖ`
//! symmetric. Constraints are assembled blockwise from [`Term`]s; only the
//! upper block triangle is given and the rest follows by symmetry.

mod solver;
mod stability;

pub use solver::{solve_feasibility, SolverOptions, Verdict};
pub use stability::{build_attitude_lmi, build_cascade_lmis, build_cascade_matrices, CascadeMatrices};

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use std::fmt::Write as _;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LmiError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("unknown block {0} is not part of this problem")]
    UnknownBlock(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Definiteness {
    PositiveDefinite,
    NegativeDefinite,
}

impl Definiteness {
    fn sign(self) -> f64 {
        match self {
            Definiteness::PositiveDefinite => 1.0,
            Definiteness::NegativeDefinite => -1.0,
        }
    }
}

/// Handle to an unknown block of an [`LmiBuilder`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VarId(usize);

#[derive(Debug, Clone, PartialEq)]
pub struct UnknownBlock {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub symmetric: bool,
    offset: usize,
}

impl UnknownBlock {
    pub fn scalar_count(&self) -> usize {
        if self.symmetric {
            self.rows * (self.rows + 1) / 2
        } else {
            self.rows * self.cols
        }
    }

    /// `(row, col)` positions of each scalar variable of this block.
    fn positions(&self) -> Vec<(usize, usize)> {
        if self.symmetric {
            (0..self.rows)
                .flat_map(|r| (r..self.rows).map(move |c| (r, c)))
                .collect()
        } else {
            (0..self.rows)
                .flat_map(|r| (0..self.cols).map(move |c| (r, c)))
                .collect()
        }
    }
}

/// One summand of a constraint block.
#[derive(Debug, Clone)]
pub enum Term {
    Const(DMatrix<f64>),
    /// A 1×1 unknown times a constant matrix.
    Scaled { var: VarId, coef: DMatrix<f64> },
    /// `left · X · right`, or `left · Xᵀ · right` when `transpose` is set.
    Product {
        left: DMatrix<f64>,
        var: VarId,
        transpose: bool,
        right: DMatrix<f64>,
    },
}

impl Term {
    pub fn constant(m: DMatrix<f64>) -> Self {
        Term::Const(m)
    }
    pub fn scaled(var: VarId, coef: DMatrix<f64>) -> Self {
        Term::Scaled { var, coef }
    }
    pub fn product(left: DMatrix<f64>, var: VarId, right: DMatrix<f64>) -> Self {
        Term::Product { left, var, transpose: false, right }
    }
    pub fn product_t(left: DMatrix<f64>, var: VarId, right: DMatrix<f64>) -> Self {
        Term::Product { left, var, transpose: true, right }
    }
}

#[derive(Debug, Clone)]
pub struct Constraint {
    pub label: String,
    pub sense: Definiteness,
    constant: DMatrix<f64>,
    /// One symmetric coefficient matrix per scalar variable.
    coeffs: Vec<DMatrix<f64>>,
}

impl Constraint {
    pub fn size(&self) -> usize {
        self.constant.nrows()
    }

    pub fn constant(&self) -> &DMatrix<f64> {
        &self.constant
    }

    pub fn coefficient(&self, k: usize) -> &DMatrix<f64> {
        &self.coeffs[k]
    }

    /// `F(x)`.
    pub fn instantiate(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let mut m = self.constant.clone();
        for (k, f) in self.coeffs.iter().enumerate() {
            if x[k] != 0.0 {
                m += f * x[k];
            }
        }
        m
    }
}

#[derive(Debug, Clone)]
pub struct LmiProblem {
    unknowns: Vec<UnknownBlock>,
    constraints: Vec<Constraint>,
    n_scalars: usize,
}

impl LmiProblem {
    pub fn unknowns(&self) -> &[UnknownBlock] {
        &self.unknowns
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }

    pub fn scalar_count(&self) -> usize {
        self.n_scalars
    }

    pub fn constraint(&self, label: &str) -> Option<&Constraint> {
        self.constraints.iter().find(|c| c.label == label)
    }

    /// Flattens per-block matrices (in unknown order) into the scalar vector.
    pub fn flatten(&self, blocks: &[DMatrix<f64>]) -> Result<DVector<f64>, LmiError> {
        if blocks.len() != self.unknowns.len() {
            return Err(LmiError::Dimension(format!(
                "{} blocks given for {} unknowns",
                blocks.len(),
                self.unknowns.len()
            )));
        }
        let mut x = DVector::zeros(self.n_scalars);
        for (u, m) in self.unknowns.iter().zip(blocks) {
            if m.shape() != (u.rows, u.cols) {
                return Err(LmiError::Dimension(format!(
                    "block {} is {}×{}, expected {}×{}",
                    u.name,
                    m.nrows(),
                    m.ncols(),
                    u.rows,
                    u.cols
                )));
            }
            for (i, (r, c)) in u.positions().into_iter().enumerate() {
                x[u.offset + i] = m[(r, c)];
            }
        }
        Ok(x)
    }

    /// Inverse of [`LmiProblem::flatten`]; symmetric blocks are filled on both triangles.
    pub fn unflatten(&self, x: &DVector<f64>) -> Vec<DMatrix<f64>> {
        self.unknowns
            .iter()
            .map(|u| {
                let mut m = DMatrix::zeros(u.rows, u.cols);
                for (i, (r, c)) in u.positions().into_iter().enumerate() {
                    m[(r, c)] = x[u.offset + i];
                    if u.symmetric {
                        m[(c, r)] = x[u.offset + i];
                    }
                }
                m
            })
            .collect()
    }

    /// Plain-text dump of the problem: unknown list, then for each
    /// constraint the constant matrix and every nonzero coefficient matrix,
    /// row-major with labeled headers.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# lmi-dump v1");
        let _ = writeln!(out, "unknowns {}", self.unknowns.len());
        for u in &self.unknowns {
            let _ = writeln!(
                out,
                "unknown {} {} {} {}",
                u.name,
                u.rows,
                u.cols,
                if u.symmetric { "symmetric" } else { "full" }
            );
        }
        let names: Vec<String> = self
            .unknowns
            .iter()
            .flat_map(|u| {
                u.positions()
                    .into_iter()
                    .map(move |(r, c)| format!("{}[{},{}]", u.name, r, c))
            })
            .collect();
        let _ = writeln!(out, "constraints {}", self.constraints.len());
        for c in &self.constraints {
            let sense = match c.sense {
                Definiteness::PositiveDefinite => "positive_definite",
                Definiteness::NegativeDefinite => "negative_definite",
            };
            let _ = writeln!(out, "constraint {} {} size {}", c.label, sense, c.size());
            write_matrix(&mut out, "constant", &c.constant);
            for (k, f) in c.coeffs.iter().enumerate() {
                if f.iter().any(|v| *v != 0.0) {
                    write_matrix(&mut out, &format!("coefficient {}", names[k]), f);
                }
            }
        }
        out
    }
}

fn write_matrix(out: &mut String, label: &str, m: &DMatrix<f64>) {
    let _ = writeln!(out, "{label} {} {}", m.nrows(), m.ncols());
    for r in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|c| format!("{:e}", m[(r, c)])).collect();
        let _ = writeln!(out, "  {}", row.join(" "));
    }
}

/// Label, sense, block sizes, and `(row, col, terms)` per nonzero block.
type PendingConstraint = (String, Definiteness, Vec<usize>, Vec<(usize, usize, Vec<Term>)>);

#[derive(Debug, Default)]
pub struct LmiBuilder {
    unknowns: Vec<UnknownBlock>,
    constraints: Vec<PendingConstraint>,
    n_scalars: usize,
}

impl LmiBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn unknown(&mut self, name: &str, rows: usize, cols: usize, symmetric: bool) -> VarId {
        assert!(!symmetric || rows == cols, "symmetric unknown {name} must be square");
        let block = UnknownBlock {
            name: name.to_string(),
            rows,
            cols,
            symmetric,
            offset: self.n_scalars,
        };
        self.n_scalars += block.scalar_count();
        self.unknowns.push(block);
        VarId(self.unknowns.len() - 1)
    }

    /// Adds a block-structured constraint. `blocks` lists upper-triangular
    /// `(row, col, terms)` entries against the partition `sizes`; missing
    /// blocks are zero. Diagonal blocks are replaced by their symmetric part.
    pub fn constraint(
        &mut self,
        label: &str,
        sense: Definiteness,
        sizes: &[usize],
        blocks: Vec<(usize, usize, Vec<Term>)>,
    ) -> &mut Self {
        self.constraints
            .push((label.to_string(), sense, sizes.to_vec(), blocks));
        self
    }

    pub fn build(self) -> Result<LmiProblem, LmiError> {
        let mut constraints = Vec::with_capacity(self.constraints.len());
        for (label, sense, sizes, blocks) in &self.constraints {
            constraints.push(self.assemble(label, *sense, sizes, blocks)?);
        }
        Ok(LmiProblem {
            unknowns: self.unknowns,
            constraints,
            n_scalars: self.n_scalars,
        })
    }

    fn assemble(
        &self,
        label: &str,
        sense: Definiteness,
        sizes: &[usize],
        blocks: &[(usize, usize, Vec<Term>)],
    ) -> Result<Constraint, LmiError> {
        let offsets: Vec<usize> = sizes
            .iter()
            .scan(0, |acc, &s| {
                let o = *acc;
                *acc += s;
                Some(o)
            })
            .collect();
        let n: usize = sizes.iter().sum();
        let mut constant = DMatrix::zeros(n, n);
        let mut coeffs = vec![DMatrix::zeros(n, n); self.n_scalars];

        for (bi, bj, terms) in blocks {
            let (bi, bj) = (*bi, *bj);
            if bi > bj || bj >= sizes.len() {
                return Err(LmiError::Dimension(format!(
                    "{label}: block ({bi},{bj}) is not in the upper triangle of a {}-block partition",
                    sizes.len()
                )));
            }
            let (r, c) = (sizes[bi], sizes[bj]);
            let mut blk_const = DMatrix::zeros(r, c);
            let mut blk_coef: Vec<(usize, DMatrix<f64>)> = Vec::new();
            for term in terms {
                self.expand_term(label, term, r, c, &mut blk_const, &mut blk_coef)?;
            }
            place(&mut constant, offsets[bi], offsets[bj], &blk_const, bi == bj);
            for (k, m) in blk_coef {
                place(&mut coeffs[k], offsets[bi], offsets[bj], &m, bi == bj);
            }
        }
        Ok(Constraint {
            label: label.to_string(),
            sense,
            constant,
            coeffs,
        })
    }

    fn expand_term(
        &self,
        label: &str,
        term: &Term,
        r: usize,
        c: usize,
        blk_const: &mut DMatrix<f64>,
        blk_coef: &mut Vec<(usize, DMatrix<f64>)>,
    ) -> Result<(), LmiError> {
        let check = |m: &DMatrix<f64>| -> Result<(), LmiError> {
            if m.shape() != (r, c) {
                return Err(LmiError::Dimension(format!(
                    "{label}: term is {}×{}, block is {r}×{c}",
                    m.nrows(),
                    m.ncols()
                )));
            }
            Ok(())
        };
        match term {
            Term::Const(m) => {
                check(m)?;
                *blk_const += m;
            }
            Term::Scaled { var, coef } => {
                check(coef)?;
                let u = &self.unknowns[var.0];
                if u.rows != 1 || u.cols != 1 {
                    return Err(LmiError::Dimension(format!(
                        "{label}: scaled term needs a 1×1 unknown, {} is {}×{}",
                        u.name, u.rows, u.cols
                    )));
                }
                blk_coef.push((u.offset, coef.clone()));
            }
            Term::Product { left, var, transpose, right } => {
                let u = &self.unknowns[var.0];
                let (xr, xc) = if *transpose { (u.cols, u.rows) } else { (u.rows, u.cols) };
                if left.ncols() != xr || right.nrows() != xc || left.nrows() != r || right.ncols() != c {
                    return Err(LmiError::Dimension(format!(
                        "{label}: product {}×{} · {}{} ({}×{}) · {}×{} does not fit a {r}×{c} block",
                        left.nrows(),
                        left.ncols(),
                        u.name,
                        if *transpose { "ᵀ" } else { "" },
                        xr,
                        xc,
                        right.nrows(),
                        right.ncols()
                    )));
                }
                for (i, (pr, pc)) in u.positions().into_iter().enumerate() {
                    // basis matrix of this scalar, possibly transposed
                    let mut pairs = vec![(pr, pc)];
                    if u.symmetric && pr != pc {
                        pairs.push((pc, pr));
                    }
                    let mut m = DMatrix::zeros(r, c);
                    for (a, b) in pairs {
                        let (a, b) = if *transpose { (b, a) } else { (a, b) };
                        m += left.column(a) * right.row(b);
                    }
                    if m.iter().any(|v| *v != 0.0) {
                        blk_coef.push((u.offset + i, m));
                    }
                }
            }
        }
        Ok(())
    }
}

fn place(target: &mut DMatrix<f64>, r0: usize, c0: usize, blk: &DMatrix<f64>, diagonal: bool) {
    let (r, c) = blk.shape();
    if diagonal {
        let sym = (blk + blk.transpose()) * 0.5;
        let mut view = target.view_mut((r0, c0), (r, c));
        view += &sym;
    } else {
        {
            let mut view = target.view_mut((r0, c0), (r, c));
            view += blk;
        }
        let mut view = target.view_mut((c0, r0), (c, r));
        view += &blk.transpose();
    }
}

/// Per-constraint definiteness gap of an instantiated certificate.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintMargin {
    pub label: String,
    /// `λ_min(F)` for `F ≻ 0`, `−λ_max(F)` for `F ≺ 0`.
    pub gap: f64,
    /// `gap / ‖F‖_F`.
    pub normalized_gap: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MarginReport {
    pub constraints: Vec<ConstraintMargin>,
    /// Minimum raw gap over all constraints.
    pub margin: f64,
    /// Minimum normalized gap over all constraints.
    pub normalized_margin: f64,
}

/// Smallest accepted `gap / ‖F‖_F`. Symmetric eigenvalues carry an absolute
/// error of order `ε‖F‖`, so gaps above this floor are not rounding artifacts.
pub const NORMALIZED_MARGIN_FLOOR: f64 = 1e-10;

impl MarginReport {
    /// The raw margin clears `tol` and the normalized margin clears
    /// [`NORMALIZED_MARGIN_FLOOR`].
    pub fn passes(&self, tol: f64) -> bool {
        self.margin >= tol && self.normalized_margin >= NORMALIZED_MARGIN_FLOOR
    }
}

/// Numeric witness: one matrix per unknown block.
#[derive(Debug, Clone, PartialEq)]
pub struct Certificate {
    pub names: Vec<String>,
    pub blocks: Vec<DMatrix<f64>>,
    pub report: MarginReport,
}

impl Certificate {
    pub fn block(&self, name: &str) -> Option<&DMatrix<f64>> {
        self.names.iter().position(|n| n == name).map(|i| &self.blocks[i])
    }

    pub fn margin(&self) -> f64 {
        self.report.margin
    }

    /// Every block multiplied by `lambda`.
    pub fn scaled(&self, lambda: f64) -> Vec<DMatrix<f64>> {
        self.blocks.iter().map(|b| b * lambda).collect()
    }
}

/// Eigenvalue audit of an assignment, independent of how it was found.
pub fn verify_assignment(p: &LmiProblem, blocks: &[DMatrix<f64>]) -> Result<MarginReport, LmiError> {
    let x = p.flatten(blocks)?;
    Ok(verify_vector(p, &x))
}

/// Eigenvalue audit of a certificate.
pub fn verify_certificate(p: &LmiProblem, c: &Certificate) -> Result<MarginReport, LmiError> {
    verify_assignment(p, &c.blocks)
}

pub(crate) fn verify_vector(p: &LmiProblem, x: &DVector<f64>) -> MarginReport {
    let mut constraints = Vec::with_capacity(p.constraints.len());
    for c in &p.constraints {
        if c.size() == 0 {
            continue;
        }
        let f = c.instantiate(x) * c.sense.sign();
        let eig = SymmetricEigen::new(f.clone()).eigenvalues;
        let gap = eig.iter().copied().fold(f64::INFINITY, f64::min);
        let norm = f.norm();
        let normalized_gap = if norm > 0.0 { gap / norm } else { 0.0 };
        constraints.push(ConstraintMargin {
            label: c.label.clone(),
            gap,
            normalized_gap,
        });
    }
    let margin = constraints.iter().map(|c| c.gap).fold(f64::INFINITY, f64::min);
    let normalized_margin = constraints
        .iter()
        .map(|c| c.normalized_gap)
        .fold(f64::INFINITY, f64::min);
    MarginReport {
        constraints,
        margin,
        normalized_margin,
    }
}
