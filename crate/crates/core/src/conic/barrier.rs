//! Primal barrier (path-following) interior-point method.
//!
//! Each Hermitian block `X` of dimension `m` is parametrized by `m^2` reals:
//! the diagonal, then `(Re X_pq, Im X_pq)` for every `p < q`. The PSD
//! barrier `-ln det X` is evaluated through the real embedding; SOC rows use
//! `-ln(u^2 - |w|^2)`, log-hypograph rows use `-ln(ln u - t) - ln u`.
//! A phase-I program that shifts every cone by a scalar `s` supplies a
//! strictly feasible start.

use nalgebra::{Cholesky, DMatrix, DVector};
use num_complex::Complex;

use super::embed::{embed_unchecked, extract_unchecked};
use super::{ConicProgram, ConicSolution, Constraint, LinearExpr, Sense, Start, Status};
use crate::{ComplexMatrix, Complex64};

const MU: f64 = 12.0;
const NEWTON_EPS: f64 = 1e-10;
const MAX_NEWTON_TOTAL: usize = 600;
const MAX_NEWTON_CENTER: usize = 80;
const BLOWUP: f64 = 1e12;

type Dir = Vec<(usize, usize, Complex64)>;

/// Basis matrices of the Hermitian parametrization, as sparse entry lists.
fn hermitian_basis(m: usize) -> Vec<Dir> {
    let one = Complex64::new(1.0, 0.0);
    let j = Complex64::new(0.0, 1.0);
    let mut dirs: Vec<Dir> = (0..m).map(|p| vec![(p, p, one)]).collect();
    for p in 0..m {
        for q in p + 1..m {
            dirs.push(vec![(p, q, one), (q, p, one)]);
            dirs.push(vec![(p, q, j), (q, p, -j)]);
        }
    }
    dirs
}

/// Sparse affine row `a^T x + c`.
#[derive(Debug, Clone, Default)]
struct Row {
    idx: Vec<usize>,
    val: Vec<f64>,
    c: f64,
}

impl Row {
    fn eval(&self, x: &DVector<f64>) -> f64 {
        self.idx
            .iter()
            .zip(&self.val)
            .fold(self.c, |acc, (i, a)| acc + a * x[*i])
    }

    fn axpy_into(&self, w: f64, g: &mut DVector<f64>) {
        for (i, a) in self.idx.iter().zip(&self.val) {
            g[*i] += w * a;
        }
    }

    fn outer_into(&self, other: &Row, w: f64, h: &mut DMatrix<f64>) {
        for (i, a) in self.idx.iter().zip(&self.val) {
            for (j, b) in other.idx.iter().zip(&other.val) {
                h[(*i, *j)] += w * a * b;
            }
        }
    }

    fn push(&mut self, i: usize, a: f64) {
        if let Some(k) = self.idx.iter().position(|&j| j == i) {
            self.val[k] += a;
        } else {
            self.idx.push(i);
            self.val.push(a);
        }
    }
}

/// `X(x) = base + sum x_k F_k`.
#[derive(Debug, Clone)]
struct Lmi {
    m: usize,
    base: ComplexMatrix,
    dirs: Vec<(usize, Dir)>,
}

impl Lmi {
    fn matrix(&self, x: &DVector<f64>) -> ComplexMatrix {
        let mut out = self.base.clone();
        for (var, dir) in &self.dirs {
            let v = x[*var];
            if v == 0.0 {
                continue;
            }
            for (a, b, c) in dir {
                out[(*a, *b)] += c * v;
            }
        }
        out
    }

    fn log_det_barrier(&self, x: &DVector<f64>) -> Option<f64> {
        let chol = Cholesky::new(embed_unchecked(&self.matrix(x)))?;
        let l = chol.l_dirty();
        let mut logdet = 0.0;
        for i in 0..2 * self.m {
            let d = l[(i, i)];
            if !(d > 0.0) || !d.is_finite() {
                return None;
            }
            logdet += d.ln();
        }
        Some(-logdet)
    }

    /// `(-ln det X, X^{-1})` when `X` is positive definite.
    fn factor(&self, x: &DVector<f64>) -> Option<(f64, ComplexMatrix)> {
        let y = embed_unchecked(&self.matrix(x));
        let chol = Cholesky::new(y)?;
        let l = chol.l_dirty();
        let mut logdet = 0.0;
        for i in 0..2 * self.m {
            let d = l[(i, i)];
            if !(d > 0.0) || !d.is_finite() {
                return None;
            }
            logdet += d.ln();
        }
        // ln det X = (1/2) ln det Y = sum ln L_ii
        Some((-logdet, extract_unchecked(&chol.inverse())))
    }
}

#[derive(Debug, Clone)]
enum Cone {
    Lin(Row),
    Soc { bound: Row, terms: Vec<Row> },
    Log { t: Row, u: Row },
    Psd(Lmi),
}

impl Cone {
    fn nu(&self) -> f64 {
        match self {
            Cone::Lin(_) => 1.0,
            Cone::Soc { .. } => 2.0,
            Cone::Log { .. } => 2.0,
            Cone::Psd(l) => l.m as f64,
        }
    }

    fn value(&self, x: &DVector<f64>) -> Option<f64> {
        let v = match self {
            Cone::Lin(r) => {
                let s = -r.eval(x);
                if !(s > 0.0) {
                    return None;
                }
                -s.ln()
            }
            Cone::Soc { bound, terms } => {
                let u = bound.eval(x);
                let w2: f64 = terms.iter().map(|r| r.eval(x).powi(2)).sum();
                let f = u * u - w2;
                if !(u > 0.0) || !(f > 0.0) {
                    return None;
                }
                -f.ln()
            }
            Cone::Log { t, u } => {
                let uu = u.eval(x);
                if !(uu > 0.0) {
                    return None;
                }
                let psi = uu.ln() - t.eval(x);
                if !(psi > 0.0) {
                    return None;
                }
                -psi.ln() - uu.ln()
            }
            Cone::Psd(l) => l.log_det_barrier(x)?,
        };
        v.is_finite().then_some(v)
    }

    fn accumulate(&self, x: &DVector<f64>, g: &mut DVector<f64>, h: &mut DMatrix<f64>) {
        match self {
            Cone::Lin(r) => {
                let s = -r.eval(x);
                r.axpy_into(1.0 / s, g);
                r.outer_into(r, 1.0 / (s * s), h);
            }
            Cone::Soc { bound, terms } => {
                let u = bound.eval(x);
                let ws: Vec<f64> = terms.iter().map(|r| r.eval(x)).collect();
                let f = u * u - ws.iter().map(|w| w * w).sum::<f64>();
                // grad f = 2u grad u - 2 sum w_i grad w_i
                let mut gf = DVector::zeros(g.len());
                bound.axpy_into(2.0 * u, &mut gf);
                for (r, w) in terms.iter().zip(&ws) {
                    r.axpy_into(-2.0 * w, &mut gf);
                }
                *g -= &gf / f;
                let nz: Vec<usize> = gf
                    .iter()
                    .enumerate()
                    .filter(|(_, v)| **v != 0.0)
                    .map(|(i, _)| i)
                    .collect();
                for &i in &nz {
                    for &j in &nz {
                        h[(i, j)] += gf[i] * gf[j] / (f * f);
                    }
                }
                bound.outer_into(bound, -2.0 / f, h);
                for r in terms {
                    r.outer_into(r, 2.0 / f, h);
                }
            }
            Cone::Log { t, u } => {
                let uu = u.eval(x);
                let psi = uu.ln() - t.eval(x);
                let ft = 1.0 / psi;
                let fu = -1.0 / (uu * psi) - 1.0 / uu;
                let ftt = 1.0 / (psi * psi);
                let ftu = -1.0 / (uu * psi * psi);
                let fuu = 1.0 / (uu * uu * psi) + 1.0 / (uu * uu * psi * psi) + 1.0 / (uu * uu);
                t.axpy_into(ft, g);
                u.axpy_into(fu, g);
                t.outer_into(t, ftt, h);
                t.outer_into(u, ftu, h);
                u.outer_into(t, ftu, h);
                u.outer_into(u, fuu, h);
            }
            Cone::Psd(l) => {
                let Some((_, w)) = l.factor(x) else { return };
                let trace_wf = |dir: &Dir| -> f64 {
                    dir.iter().map(|(a, b, c)| (c * w[(*b, *a)]).re).sum()
                };
                for (var, dir) in &l.dirs {
                    g[*var] -= trace_wf(dir);
                }
                for (vk, dk) in &l.dirs {
                    for (vl, dl) in &l.dirs {
                        let mut acc = Complex::new(0.0, 0.0);
                        for (a, b, c) in dk {
                            for (a2, b2, c2) in dl {
                                acc += c * c2 * w[(*b2, *a)] * w[(*b, *a2)];
                            }
                        }
                        h[(*vk, *vl)] += acc.re;
                    }
                }
            }
        }
    }

    /// Smallest scalar shift making the cone strictly feasible, roughly.
    fn violation(&self, x: &DVector<f64>) -> f64 {
        match self {
            Cone::Lin(r) => r.eval(x),
            Cone::Soc { bound, terms } => {
                let w2: f64 = terms.iter().map(|r| r.eval(x).powi(2)).sum();
                w2.sqrt() - bound.eval(x)
            }
            Cone::Log { t, u } => {
                let uu = u.eval(x);
                if uu > 0.0 {
                    t.eval(x) - uu.ln()
                } else {
                    1.0 - uu + t.eval(x).abs()
                }
            }
            Cone::Psd(l) => -crate::linalg::min_eigenvalue(&l.matrix(x)),
        }
    }
}

struct Layout {
    psd_off: Vec<usize>,
    psd_dim: Vec<usize>,
    vec_off: Vec<usize>,
    n: usize,
}

impl Layout {
    fn new(p: &ConicProgram) -> Self {
        let mut n = 0;
        let mut psd_off = Vec::new();
        let mut psd_dim = Vec::new();
        for b in &p.psd_blocks {
            psd_off.push(n);
            psd_dim.push(b.dim);
            n += b.dim * b.dim;
        }
        let mut vec_off = Vec::new();
        for b in &p.vec_blocks {
            vec_off.push(n);
            n += b.dim;
        }
        Self {
            psd_off,
            psd_dim,
            vec_off,
            n,
        }
    }

    fn row(&self, e: &LinearExpr) -> Row {
        let mut row = Row {
            c: e.constant,
            ..Row::default()
        };
        for (b, coeff) in &e.psd_terms {
            let m = self.psd_dim[b.0];
            let off = self.psd_off[b.0];
            for (k, dir) in hermitian_basis(m).iter().enumerate() {
                let a: f64 = dir.iter().map(|(i, j, c)| (c * coeff[(*j, *i)]).re).sum();
                if a != 0.0 {
                    row.push(off + k, a);
                }
            }
        }
        for (b, i, a) in &e.vec_terms {
            row.push(self.vec_off[b.0] + i, *a);
        }
        row
    }

    fn to_x(&self, start: &Start) -> Option<DVector<f64>> {
        if start.psd.len() != self.psd_dim.len() || start.vecs.len() != self.vec_off.len() {
            return None;
        }
        let mut x = DVector::zeros(self.n);
        for (k, xm) in start.psd.iter().enumerate() {
            let m = self.psd_dim[k];
            if xm.nrows() != m || xm.ncols() != m {
                return None;
            }
            let off = self.psd_off[k];
            for p in 0..m {
                x[off + p] = xm[(p, p)].re;
            }
            let mut idx = off + m;
            for p in 0..m {
                for q in p + 1..m {
                    x[idx] = 0.5 * (xm[(p, q)].re + xm[(q, p)].re);
                    x[idx + 1] = 0.5 * (xm[(p, q)].im - xm[(q, p)].im);
                    idx += 2;
                }
            }
        }
        for (k, v) in start.vecs.iter().enumerate() {
            let off = self.vec_off[k];
            let end = self.vec_off.get(k + 1).copied().unwrap_or(self.n);
            if v.len() != end - off {
                return None;
            }
            for (i, vi) in v.iter().enumerate() {
                x[off + i] = *vi;
            }
        }
        Some(x)
    }

    fn unpack(&self, p: &ConicProgram, x: &DVector<f64>) -> (Vec<ComplexMatrix>, Vec<DVector<f64>>) {
        let psd = (0..self.psd_dim.len())
            .map(|k| {
                let m = self.psd_dim[k];
                let off = self.psd_off[k];
                let mut out = crate::linalg::zeros::<f64>(m);
                for (j, dir) in hermitian_basis(m).iter().enumerate() {
                    for (a, b, c) in dir {
                        out[(*a, *b)] += c * x[off + j];
                    }
                }
                out
            })
            .collect();
        let vecs = p
            .vec_blocks
            .iter()
            .enumerate()
            .map(|(k, b)| DVector::from_fn(b.dim, |i, _| x[self.vec_off[k] + i]))
            .collect();
        (psd, vecs)
    }
}

struct Compiled {
    n: usize,
    obj: Row,
    eq_a: DMatrix<f64>,
    eq_b: DVector<f64>,
    /// Orthonormal basis of `null(eq_a)`; `None` without equalities.
    null: Option<DMatrix<f64>>,
    cones: Vec<Cone>,
}

fn null_space(a: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    if a.nrows() == 0 {
        return None;
    }
    let n = a.ncols();
    let eig = nalgebra::SymmetricEigen::new(a.transpose() * a);
    let top = eig.eigenvalues.amax().max(1e-300);
    let cols: Vec<usize> = (0..n).filter(|&i| eig.eigenvalues[i] <= 1e-12 * top).collect();
    let mut basis = DMatrix::zeros(n, cols.len());
    for (k, &i) in cols.iter().enumerate() {
        basis.set_column(k, &eig.eigenvectors.column(i));
    }
    Some(basis)
}

impl Compiled {
    fn new(p: &ConicProgram, layout: &Layout) -> Self {
        let n = layout.n;
        let mut obj = layout.row(&p.objective);
        if p.sense == Sense::Maximize {
            obj.val.iter_mut().for_each(|v| *v = -*v);
            obj.c = -obj.c;
        }
        let mut eq_rows = Vec::new();
        let mut cones = Vec::new();
        for c in &p.constraints {
            match c {
                Constraint::Eq(e) => eq_rows.push(layout.row(e)),
                Constraint::Le(e) => cones.push(Cone::Lin(layout.row(e))),
                Constraint::Soc { terms, bound } => {
                    let bound = layout.row(bound);
                    if terms.is_empty() {
                        let mut neg = bound.clone();
                        neg.val.iter_mut().for_each(|v| *v = -*v);
                        neg.c = -neg.c;
                        cones.push(Cone::Lin(neg));
                    } else {
                        cones.push(Cone::Soc {
                            bound,
                            terms: terms.iter().map(|t| layout.row(t)).collect(),
                        });
                    }
                }
                Constraint::LogHypograph { t, u } => cones.push(Cone::Log {
                    t: layout.row(t),
                    u: layout.row(u),
                }),
            }
        }
        for (k, &m) in layout.psd_dim.iter().enumerate() {
            let off = layout.psd_off[k];
            cones.push(Cone::Psd(Lmi {
                m,
                base: crate::linalg::zeros(m),
                dirs: hermitian_basis(m)
                    .into_iter()
                    .enumerate()
                    .map(|(j, d)| (off + j, d))
                    .collect(),
            }));
        }
        let mut eq_a = DMatrix::zeros(eq_rows.len(), n);
        let mut eq_b = DVector::zeros(eq_rows.len());
        for (r, row) in eq_rows.iter().enumerate() {
            for (i, a) in row.idx.iter().zip(&row.val) {
                eq_a[(r, *i)] = *a;
            }
            eq_b[r] = -row.c;
        }
        Self {
            n,
            obj,
            null: null_space(&eq_a),
            eq_a,
            eq_b,
            cones,
        }
    }

    fn nu(&self) -> f64 {
        self.cones.iter().map(Cone::nu).sum()
    }

    fn barrier(&self, x: &DVector<f64>) -> Option<f64> {
        self.cones.iter().try_fold(0.0, |acc, c| Some(acc + c.value(x)?))
    }

    fn eq_residual(&self, x: &DVector<f64>) -> f64 {
        if self.eq_a.nrows() == 0 {
            return 0.0;
        }
        (&self.eq_a * x - &self.eq_b).amax()
    }

    /// Phase-I program over `(x, s)`: every cone shifted by `s`, `s >= -1`,
    /// minimize `s`.
    fn shifted(&self) -> Compiled {
        let s = self.n;
        let one = Complex64::new(1.0, 0.0);
        let mut cones: Vec<Cone> = self
            .cones
            .iter()
            .map(|c| match c {
                Cone::Lin(r) => {
                    let mut r = r.clone();
                    r.push(s, -1.0);
                    Cone::Lin(r)
                }
                Cone::Soc { bound, terms } => {
                    let mut b = bound.clone();
                    b.push(s, 1.0);
                    Cone::Soc {
                        bound: b,
                        terms: terms.clone(),
                    }
                }
                Cone::Log { t, u } => {
                    let mut t = t.clone();
                    let mut u = u.clone();
                    t.push(s, -1.0);
                    u.push(s, 1.0);
                    Cone::Log { t, u }
                }
                Cone::Psd(l) => {
                    let mut l = l.clone();
                    l.dirs.push((s, (0..l.m).map(|p| (p, p, one)).collect()));
                    Cone::Psd(l)
                }
            })
            .collect();
        cones.push(Cone::Lin(Row {
            idx: vec![s],
            val: vec![-1.0],
            c: -1.0,
        }));
        let mut eq_a = DMatrix::zeros(self.eq_a.nrows(), self.n + 1);
        eq_a.view_mut((0, 0), (self.eq_a.nrows(), self.n)).copy_from(&self.eq_a);
        let null = self.null.as_ref().map(|z| {
            let mut out = DMatrix::zeros(self.n + 1, z.ncols() + 1);
            out.view_mut((0, 0), (self.n, z.ncols())).copy_from(z);
            out[(self.n, z.ncols())] = 1.0;
            out
        });
        Compiled {
            null,
            n: self.n + 1,
            obj: Row {
                idx: vec![s],
                val: vec![1.0],
                c: 0.0,
            },
            eq_a,
            eq_b: self.eq_b.clone(),
            cones,
        }
    }

    /// Newton step for `t c^T x + barrier`; returns `(dx, lambda^2)`.
    fn newton_step(&self, x: &DVector<f64>, t: f64) -> Option<(DVector<f64>, f64)> {
        let n = self.n;
        let mut g = DVector::zeros(n);
        let mut h = DMatrix::zeros(n, n);
        self.obj.axpy_into(t, &mut g);
        for c in &self.cones {
            c.accumulate(x, &mut g, &mut h);
        }
        let dx = match &self.null {
            None => solve_spd(h, &(-&g))?,
            Some(z) => {
                if z.ncols() == 0 {
                    return Some((DVector::zeros(n), 0.0));
                }
                let hz = z.transpose() * &h * z;
                let gz = z.transpose() * &g;
                z * solve_spd(hz, &(-gz))?
            }
        };
        let lambda2 = -g.dot(&dx);
        dx.iter().all(|v| v.is_finite()).then_some((dx, lambda2))
    }

    /// Damped Newton centering. Returns `false` if the iterate stalls.
    fn center(&self, x: &mut DVector<f64>, t: f64, budget: &mut usize, stop: &dyn Fn(&DVector<f64>) -> bool) -> bool {
        for _ in 0..MAX_NEWTON_CENTER {
            if *budget == 0 {
                return false;
            }
            *budget -= 1;
            let Some((dx, lambda2)) = self.newton_step(x, t) else {
                return false;
            };
            if lambda2 / 2.0 <= NEWTON_EPS {
                return true;
            }
            let Some(b0) = self.barrier(x) else {
                return false;
            };
            // the linear part is differenced exactly to avoid cancellation at large t
            let lin = t * self.obj.val.iter().zip(&self.obj.idx).map(|(a, i)| a * dx[*i]).sum::<f64>();
            let slope = -lambda2;
            let mut alpha = 1.0;
            let mut accepted = false;
            for _ in 0..60 {
                let trial = &*x + &dx * alpha;
                if let Some(b1) = self.barrier(&trial) {
                    if alpha * lin + (b1 - b0) <= 0.01 * alpha * slope {
                        *x = trial;
                        accepted = true;
                        break;
                    }
                }
                alpha *= 0.5;
            }
            if !accepted {
                // no progress possible at working precision
                return lambda2 < 1e-6;
            }
            if stop(x) {
                return true;
            }
        }
        true
    }
}

fn solve_spd(mut h: DMatrix<f64>, rhs: &DVector<f64>) -> Option<DVector<f64>> {
    let n = h.nrows();
    if n == 0 {
        return Some(DVector::zeros(0));
    }
    // symmetric Jacobi scaling keeps the factorization accurate when the
    // barrier Hessian spans many orders of magnitude
    let d: Vec<f64> = (0..n)
        .map(|i| {
            let v = h[(i, i)].abs();
            if v > 0.0 && v.is_finite() {
                1.0 / v.sqrt()
            } else {
                1.0
            }
        })
        .collect();
    for j in 0..n {
        for i in 0..n {
            h[(i, j)] *= d[i] * d[j];
        }
    }
    let r = DVector::from_fn(n, |i, _| rhs[i] * d[i]);
    let mut reg = 0.0;
    let mut sol = None;
    for _ in 0..8 {
        if let Some(ch) = Cholesky::new(h.clone()) {
            sol = Some(ch.solve(&r));
            break;
        }
        reg = if reg == 0.0 { 1e-14 } else { reg * 100.0 };
        for i in 0..n {
            h[(i, i)] += reg;
        }
    }
    let y = match sol {
        Some(y) => y,
        None => h.lu().solve(&r)?,
    };
    Some(DVector::from_fn(n, |i, _| y[i] * d[i]))
}

fn least_norm_equalities(comp: &Compiled) -> DVector<f64> {
    if comp.eq_a.nrows() == 0 {
        return DVector::zeros(comp.n);
    }
    let svd = comp.eq_a.clone().svd(true, true);
    svd.solve(&comp.eq_b, 1e-12)
        .unwrap_or_else(|_| DVector::zeros(comp.n))
}

fn finish(
    p: &ConicProgram,
    layout: &Layout,
    comp: &Compiled,
    x: &DVector<f64>,
    status: Status,
    gap: f64,
    steps: usize,
) -> ConicSolution {
    let (psd, vecs) = layout.unpack(p, x);
    let raw = comp.obj.eval(x);
    let objective = if p.sense == Sense::Maximize { -raw } else { raw };
    ConicSolution {
        psd,
        vecs,
        objective,
        status,
        kkt_gap: gap / objective.abs().max(1.0),
        newton_steps: steps,
    }
}

pub(super) fn solve(p: &ConicProgram, tol: f64, start: Option<&Start>) -> ConicSolution {
    let layout = Layout::new(p);
    let comp = Compiled::new(p, &layout);
    let mut budget = MAX_NEWTON_TOTAL;
    let infeasible = |x: &DVector<f64>, budget: usize| {
        finish(p, &layout, &comp, x, Status::Infeasible, f64::INFINITY, MAX_NEWTON_TOTAL - budget)
    };

    let eq_ok = |x: &DVector<f64>| comp.eq_residual(x) <= 1e-9 * (1.0 + comp.eq_b.amax());

    let hinted = start
        .and_then(|s| layout.to_x(s))
        .filter(|x| eq_ok(x) && comp.barrier(x).is_some());

    let mut x = match hinted {
        Some(x) => x,
        None => {
            let x0 = least_norm_equalities(&comp);
            if !eq_ok(&x0) {
                return infeasible(&x0, budget);
            }
            if comp.n == 0 || comp.barrier(&x0).is_some() {
                x0
            } else {
                match phase_one(&comp, x0, &mut budget) {
                    Ok(x) => x,
                    Err(x) => return infeasible(&x, budget),
                }
            }
        }
    };

    if comp.n == 0 {
        let status = if comp.barrier(&x).is_some() || comp.cones.is_empty() {
            Status::Optimal
        } else {
            Status::Infeasible
        };
        return finish(p, &layout, &comp, &x, status, 0.0, 0);
    }

    let nu = comp.nu();
    let mut t = 1.0;
    // rescale the first barrier weight to the objective gradient
    let gnorm = comp.obj.val.iter().map(|v| v * v).sum::<f64>().sqrt();
    if gnorm > 0.0 {
        t = (1.0 / gnorm).clamp(1e-6, 1e6);
    }
    let blew_up = |x: &DVector<f64>| x.amax() > BLOWUP;
    loop {
        let ok = comp.center(&mut x, t, &mut budget, &blew_up);
        let steps = MAX_NEWTON_TOTAL - budget;
        if blew_up(&x) {
            return finish(p, &layout, &comp, &x, Status::Unbounded, f64::INFINITY, steps);
        }
        let gap = nu / t;
        let obj = comp.obj.eval(&x).abs();
        if gap <= tol * obj.max(1.0) {
            return finish(p, &layout, &comp, &x, Status::Optimal, gap, steps);
        }
        if budget == 0 || (!ok && gap > 1e3 * tol * obj.max(1.0)) {
            return finish(p, &layout, &comp, &x, Status::MaxIter, gap, steps);
        }
        if !ok {
            // stalled near the optimum at working precision
            return finish(p, &layout, &comp, &x, Status::Optimal, gap, steps);
        }
        t *= MU;
    }
}

/// Finds a strictly feasible point, or returns the best phase-I iterate when
/// the cones have no common interior.
fn phase_one(comp: &Compiled, x0: DVector<f64>, budget: &mut usize) -> Result<DVector<f64>, DVector<f64>> {
    let shifted = comp.shifted();
    let n = comp.n;
    let viol = comp
        .cones
        .iter()
        .map(|c| c.violation(&x0))
        .fold(0.0, f64::max);
    let mut s = viol.max(0.0) + 1.0;
    let mut z = DVector::zeros(n + 1);
    z.rows_mut(0, n).copy_from(&x0);
    loop {
        z[n] = s;
        if shifted.barrier(&z).is_some() {
            break;
        }
        s *= 2.0;
        if !s.is_finite() || s > 1e30 {
            return Err(x0);
        }
    }
    // keep phase I bounded: barriers with recession directions (SOC bounds,
    // log-hypograph t) would otherwise drive x to infinity
    let radius = 1e3 * (1.0 + x0.norm() + s);
    let mut shifted = shifted;
    shifted.cones.push(Cone::Soc {
        bound: Row {
            idx: vec![],
            val: vec![],
            c: radius,
        },
        terms: (0..n)
            .map(|i| Row {
                idx: vec![i],
                val: vec![1.0],
                c: -x0[i],
            })
            .collect(),
    });
    let nu = shifted.nu();
    let mut t = 1.0;
    let feasible_now = |z: &DVector<f64>| z[n] < 0.0 && comp.barrier(&z.rows(0, n).into_owned()).is_some();
    loop {
        let ok = shifted.center(&mut z, t, budget, &feasible_now);
        let x = z.rows(0, n).into_owned();
        if feasible_now(&z) {
            return Ok(x);
        }
        let gap = nu / t;
        // lower bound on the optimal shift
        if z[n] - gap > 0.0 || (gap < 1e-11 && z[n] >= 0.0) || *budget == 0 || !ok {
            return Err(x);
        }
        t *= MU;
    }
}
