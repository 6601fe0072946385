//! Dense conic programs over Hermitian PSD matrix blocks and real vector
//! blocks, with linear, second-order-cone and log-hypograph constraints.
//!
//! Both SCA loops in this crate emit programs of this shape. The objective
//! is linear; concave `log` terms enter through [`Constraint::LogHypograph`]
//! (`t <= ln u`), which keeps the objective linear while still expressing
//! the secrecy surrogate.

mod barrier;
mod embed;

use std::fmt;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::linalg;
use crate::metrics::HERMITIAN_TOL;
use crate::{ComplexMatrix, Error, Result};

pub use embed::{hermitian_embed, hermitian_extract};

/// Default relative duality-gap tolerance.
pub const DEFAULT_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PsdId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct VecId(pub usize);

#[derive(Debug, Clone, PartialEq)]
pub struct PsdBlock {
    pub name: String,
    pub dim: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VecBlock {
    pub name: String,
    pub dim: usize,
}

/// Affine functional `sum Re tr(C_k X_k) + sum a_i v_i + c`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LinearExpr {
    pub psd_terms: Vec<(PsdId, ComplexMatrix)>,
    pub vec_terms: Vec<(VecId, usize, f64)>,
    pub constant: f64,
}

impl LinearExpr {
    pub fn constant(c: f64) -> Self {
        Self {
            constant: c,
            ..Self::default()
        }
    }

    /// `Re tr(C X)`.
    pub fn psd(block: PsdId, coeff: ComplexMatrix) -> Self {
        Self {
            psd_terms: vec![(block, coeff)],
            ..Self::default()
        }
    }

    /// `coef * v[index]`.
    pub fn var(block: VecId, index: usize, coef: f64) -> Self {
        Self {
            vec_terms: vec![(block, index, coef)],
            ..Self::default()
        }
    }

    pub fn plus(mut self, other: LinearExpr) -> Self {
        self.psd_terms.extend(other.psd_terms);
        self.vec_terms.extend(other.vec_terms);
        self.constant += other.constant;
        self
    }

    pub fn add_psd(mut self, block: PsdId, coeff: ComplexMatrix) -> Self {
        self.psd_terms.push((block, coeff));
        self
    }

    pub fn add_var(mut self, block: VecId, index: usize, coef: f64) -> Self {
        self.vec_terms.push((block, index, coef));
        self
    }

    pub fn add_constant(mut self, c: f64) -> Self {
        self.constant += c;
        self
    }

    pub fn scaled(mut self, s: f64) -> Self {
        for (_, c) in &mut self.psd_terms {
            *c *= crate::Complex64::new(s, 0.0);
        }
        for t in &mut self.vec_terms {
            t.2 *= s;
        }
        self.constant *= s;
        self
    }

    pub fn negated(self) -> Self {
        self.scaled(-1.0)
    }

    /// Evaluate at concrete block values.
    pub fn eval(&self, psd: &[ComplexMatrix], vecs: &[DVector<f64>]) -> f64 {
        let p: f64 = self
            .psd_terms
            .iter()
            .map(|(b, c)| (c * &psd[b.0]).trace().re)
            .sum();
        let v: f64 = self.vec_terms.iter().map(|(b, i, a)| a * vecs[b.0][*i]).sum();
        p + v + self.constant
    }
}

/// Constraint rows; every expression is affine in the block entries.
#[derive(Debug, Clone, PartialEq)]
pub enum Constraint {
    /// `expr == 0`.
    Eq(LinearExpr),
    /// `expr <= 0`.
    Le(LinearExpr),
    /// `|| (terms) ||_2 <= bound`.
    Soc { terms: Vec<LinearExpr>, bound: LinearExpr },
    /// `t <= ln(u)`.
    LogHypograph { t: LinearExpr, u: LinearExpr },
}

impl Constraint {
    /// `lhs <= rhs`.
    pub fn le(lhs: LinearExpr, rhs: f64) -> Self {
        Constraint::Le(lhs.add_constant(-rhs))
    }

    /// `lhs >= rhs`.
    pub fn ge(lhs: LinearExpr, rhs: f64) -> Self {
        Constraint::Le(lhs.negated().add_constant(rhs))
    }

    pub fn eq(lhs: LinearExpr, rhs: f64) -> Self {
        Constraint::Eq(lhs.add_constant(-rhs))
    }

    fn exprs(&self) -> Vec<&LinearExpr> {
        match self {
            Constraint::Eq(e) | Constraint::Le(e) => vec![e],
            Constraint::Soc { terms, bound } => terms.iter().chain(std::iter::once(bound)).collect(),
            Constraint::LogHypograph { t, u } => vec![t, u],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sense {
    Minimize,
    Maximize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConicProgram {
    pub psd_blocks: Vec<PsdBlock>,
    pub vec_blocks: Vec<VecBlock>,
    pub sense: Sense,
    pub objective: LinearExpr,
    pub constraints: Vec<Constraint>,
}

impl Default for ConicProgram {
    fn default() -> Self {
        Self::new(Sense::Minimize)
    }
}

impl ConicProgram {
    pub fn new(sense: Sense) -> Self {
        Self {
            psd_blocks: Vec::new(),
            vec_blocks: Vec::new(),
            sense,
            objective: LinearExpr::default(),
            constraints: Vec::new(),
        }
    }

    pub fn add_psd_block(&mut self, name: impl Into<String>, dim: usize) -> PsdId {
        self.psd_blocks.push(PsdBlock {
            name: name.into(),
            dim,
        });
        PsdId(self.psd_blocks.len() - 1)
    }

    pub fn add_vec_block(&mut self, name: impl Into<String>, dim: usize) -> VecId {
        self.vec_blocks.push(VecBlock {
            name: name.into(),
            dim,
        });
        VecId(self.vec_blocks.len() - 1)
    }

    pub fn set_objective(&mut self, sense: Sense, expr: LinearExpr) {
        self.sense = sense;
        self.objective = expr;
    }

    pub fn add_constraint(&mut self, c: Constraint) {
        self.constraints.push(c);
    }

    /// Every referenced block exists, indices are in range and every PSD
    /// coefficient matrix is Hermitian of the right size.
    pub fn validate(&self) -> Result<()> {
        let check = |e: &LinearExpr| -> Result<()> {
            for (b, c) in &e.psd_terms {
                let blk = self
                    .psd_blocks
                    .get(b.0)
                    .ok_or_else(|| Error::Program(format!("unknown PSD block {}", b.0)))?;
                if c.nrows() != blk.dim || c.ncols() != blk.dim {
                    return Err(Error::Program(format!(
                        "coefficient for block {} is {}x{}, expected {}",
                        blk.name,
                        c.nrows(),
                        c.ncols(),
                        blk.dim
                    )));
                }
                let asym = linalg::relative_asymmetry(c);
                if asym > HERMITIAN_TOL {
                    return Err(Error::Program(format!(
                        "non-Hermitian coefficient on block {} (asymmetry {asym:.2e})",
                        blk.name
                    )));
                }
            }
            for (b, i, a) in &e.vec_terms {
                let blk = self
                    .vec_blocks
                    .get(b.0)
                    .ok_or_else(|| Error::Program(format!("unknown vector block {}", b.0)))?;
                if *i >= blk.dim {
                    return Err(Error::Program(format!(
                        "index {i} out of range for block {} of length {}",
                        blk.name, blk.dim
                    )));
                }
                if !a.is_finite() {
                    return Err(Error::Program("non-finite coefficient".into()));
                }
            }
            if !e.constant.is_finite() {
                return Err(Error::Program("non-finite constant".into()));
            }
            Ok(())
        };
        check(&self.objective)?;
        for c in &self.constraints {
            for e in c.exprs() {
                check(e)?;
            }
        }
        Ok(())
    }

    /// Structural boundedness test: some `<=` row puts a positive multiple of
    /// the identity on every PSD block (a total-power budget).
    pub fn has_power_bound(&self) -> bool {
        if self.psd_blocks.is_empty() {
            return true;
        }
        self.constraints.iter().any(|c| match c {
            Constraint::Le(e) => self.psd_blocks.iter().enumerate().all(|(k, blk)| {
                let mut sum = linalg::zeros::<f64>(blk.dim);
                let mut seen = false;
                for (b, coeff) in &e.psd_terms {
                    if b.0 == k {
                        sum += coeff;
                        seen = true;
                    }
                }
                let a = sum[(0, 0)].re;
                seen && a > 0.0
                    && linalg::frobenius(&(&sum - linalg::scale(&linalg::identity(blk.dim), a)))
                        <= 1e-12 * a
            }),
            _ => false,
        })
    }

    pub fn eval_objective(&self, sol: &ConicSolution) -> f64 {
        self.objective.eval(&sol.psd, &sol.vecs)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Status {
    Optimal,
    Infeasible,
    Unbounded,
    MaxIter,
}

#[derive(Debug, Clone)]
pub struct ConicSolution {
    pub psd: Vec<ComplexMatrix>,
    pub vecs: Vec<DVector<f64>>,
    pub objective: f64,
    pub status: Status,
    /// Barrier duality-gap bound `nu / t`, relative to `max(1, |objective|)`.
    pub kkt_gap: f64,
    pub newton_steps: usize,
}

impl ConicSolution {
    pub fn psd(&self, id: PsdId) -> &ComplexMatrix {
        &self.psd[id.0]
    }

    pub fn vec(&self, id: VecId) -> &DVector<f64> {
        &self.vecs[id.0]
    }

    pub fn is_optimal(&self) -> bool {
        self.status == Status::Optimal
    }
}

/// Solve to relative duality gap `tol`.
pub fn solve(p: &ConicProgram, tol: f64) -> Result<ConicSolution> {
    p.validate()?;
    Ok(barrier::solve(p, tol, None))
}

/// As [`solve`], starting from `start` when it is strictly feasible.
pub fn solve_from(p: &ConicProgram, tol: f64, start: &Start) -> Result<ConicSolution> {
    p.validate()?;
    Ok(barrier::solve(p, tol, Some(start)))
}

/// Candidate starting point, one value per block.
#[derive(Debug, Clone)]
pub struct Start {
    pub psd: Vec<ComplexMatrix>,
    pub vecs: Vec<DVector<f64>>,
}

fn fmt_expr(p: &ConicProgram, e: &LinearExpr, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    let mut first = true;
    let mut sep = |f: &mut fmt::Formatter<'_>| -> fmt::Result {
        if !first {
            write!(f, " + ")?;
        }
        first = false;
        Ok(())
    };
    for (b, c) in &e.psd_terms {
        sep(f)?;
        write!(f, "<[")?;
        for i in 0..c.nrows() {
            if i > 0 {
                write!(f, "; ")?;
            }
            for j in 0..c.ncols() {
                if j > 0 {
                    write!(f, " ")?;
                }
                write!(f, "{:.12e}{:+.12e}i", c[(i, j)].re, c[(i, j)].im)?;
            }
        }
        write!(f, "], {}>", p.psd_blocks[b.0].name)?;
    }
    for (b, i, a) in &e.vec_terms {
        sep(f)?;
        write!(f, "{a:.12e}*{}[{i}]", p.vec_blocks[b.0].name)?;
    }
    sep(f)?;
    write!(f, "{:.12e}", e.constant)
}

/// Canonical plain-text dump, stable across runs for diffing.
impl fmt::Display for ConicProgram {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in &self.psd_blocks {
            writeln!(f, "psd {} {}", b.name, b.dim)?;
        }
        for b in &self.vec_blocks {
            writeln!(f, "vec {} {}", b.name, b.dim)?;
        }
        let sense = match self.sense {
            Sense::Minimize => "minimize",
            Sense::Maximize => "maximize",
        };
        write!(f, "{sense} ")?;
        fmt_expr(self, &self.objective, f)?;
        writeln!(f)?;
        for (k, c) in self.constraints.iter().enumerate() {
            write!(f, "c{k} ")?;
            match c {
                Constraint::Eq(e) => {
                    write!(f, "eq ")?;
                    fmt_expr(self, e, f)?;
                }
                Constraint::Le(e) => {
                    write!(f, "le ")?;
                    fmt_expr(self, e, f)?;
                }
                Constraint::Soc { terms, bound } => {
                    write!(f, "soc bound ")?;
                    fmt_expr(self, bound, f)?;
                    for t in terms {
                        write!(f, " | ")?;
                        fmt_expr(self, t, f)?;
                    }
                }
                Constraint::LogHypograph { t, u } => {
                    write!(f, "loghyp t ")?;
                    fmt_expr(self, t, f)?;
                    write!(f, " | u ")?;
                    fmt_expr(self, u, f)?;
                }
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests;
