//! Beamforming subproblem for a fixed trajectory.
//!
//! Each slot runs its own SCA loop: the subtracted log terms of the secrecy
//! rate are linearized at the current iterate, the relaxed program over
//! `(B, A_s)` is solved with the rank constraint dropped, and the loop stops
//! once the true per-slot secrecy rate settles. The relaxed information
//! covariance is then replaced by an explicit rank-one beam.

use std::f64::consts::{LN_2, LOG2_E};

use log::debug;
use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::conic::{self, ConicProgram, Constraint, LinearExpr, PsdId, Sense, Start, Status, VecId};
use crate::linalg::{self, hermitian_part, outer, quad_form, scale, trace_re};
use crate::metrics::{slot_metrics, SlotBeam};
use crate::scenario::{Link, Node};
use crate::{BeamPlan, Complex64, ComplexMatrix, ComplexVector, Error, Position, Result, ScenarioConfig, Trajectory};

/// Linearization of the subtracted log terms at `(B_l, A_s^l)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SurrogateCoeffs {
    /// `log2(g_u^H A_s^l g_u + sigma2)`.
    pub delta_u: f64,
    /// `log2(g_e^H (B_l + A_s^l) g_e + sigma2)`.
    pub delta_e: f64,
    pub lambda_u: ComplexMatrix,
    pub lambda_e: ComplexMatrix,
    /// `tr(Lambda_u A_s^l)`.
    pub anchor_u: f64,
    /// `tr(Lambda_e (B_l + A_s^l))`.
    pub anchor_e: f64,
}

pub fn surrogate_coeffs(
    rho: &Position,
    info_l: &ComplexMatrix,
    sense_l: &ComplexMatrix,
    cfg: &ScenarioConfig,
) -> SurrogateCoeffs {
    let gu = Link::new(rho, Node::User, cfg).channel(cfg.beta0);
    let ge = Link::new(rho, Node::Eve, cfg).channel(cfg.beta0);
    let total_l = info_l + sense_l;
    let den_u = quad_form(sense_l, &gu).max(0.0) + cfg.sigma2;
    let den_e = quad_form(&total_l, &ge).max(0.0) + cfg.sigma2;
    let lambda_u = scale(&outer(&gu), LOG2_E / den_u);
    let lambda_e = scale(&outer(&ge), LOG2_E / den_e);
    SurrogateCoeffs {
        delta_u: den_u.log2(),
        delta_e: den_e.log2(),
        anchor_u: (&lambda_u * sense_l).trace().re,
        anchor_e: (&lambda_e * &total_l).trace().re,
        lambda_u,
        lambda_e,
    }
}

/// Concave lower bound of the per-slot secrecy rate built from `coeffs`.
pub fn surrogate_objective(
    info: &ComplexMatrix,
    sense: &ComplexMatrix,
    coeffs: &SurrogateCoeffs,
    rho: &Position,
    cfg: &ScenarioConfig,
) -> f64 {
    let gu = Link::new(rho, Node::User, cfg).channel(cfg.beta0);
    let ge = Link::new(rho, Node::Eve, cfg).channel(cfg.beta0);
    let total = info + sense;
    let head = (quad_form(&total, &gu).max(0.0) + cfg.sigma2).log2()
        + (quad_form(sense, &ge).max(0.0) + cfg.sigma2).log2();
    let lin_u = (&coeffs.lambda_u * sense).trace().re - coeffs.anchor_u;
    let lin_e = (&coeffs.lambda_e * &total).trace().re - coeffs.anchor_e;
    head - (coeffs.delta_u + lin_u) - (coeffs.delta_e + lin_e)
}

/// Unclamped secrecy rate of a relaxed slot.
pub fn true_objective(info: &ComplexMatrix, sense: &ComplexMatrix, rho: &Position, cfg: &ScenarioConfig) -> f64 {
    let slot = SlotBeam {
        info: info.clone(),
        sense: sense.clone(),
        info_vector: None,
    };
    slot_metrics(rho, &slot, cfg).secrecy.unclamped
}

/// Orthonormal basis `U` (M x k, k <= 3) of the span of the user,
/// eavesdropper and target steering vectors at `rho`.
///
/// Every term of the slot program reads a covariance `X` only through
/// quadratic forms along these three vectors and through `tr X`. Replacing
/// `X` by `U U^H X U U^H` keeps the former and cannot raise the latter, so
/// the program has an optimum of the form `X = U Y U^H` with `Y` a k x k
/// PSD matrix, and the relaxed program is posed over `Y`.
pub fn signal_subspace(rho: &Position, cfg: &ScenarioConfig) -> ComplexMatrix {
    let m = cfg.n_antennas;
    let mut cols: Vec<ComplexVector> = Vec::new();
    for node in [Node::User, Node::Eve, Node::Target] {
        let mut v = Link::new(rho, node, cfg).steering;
        for q in &cols {
            let c = q.dotc(&v);
            v -= q * c;
        }
        // second pass for numerical orthogonality
        for q in &cols {
            let c = q.dotc(&v);
            v -= q * c;
        }
        let n = v.norm();
        if n > 1e-6 * (m as f64).sqrt() {
            cols.push(v / Complex64::new(n, 0.0));
        }
    }
    ComplexMatrix::from_columns(&cols)
}

/// Block handles for one slot appended to a program.
#[derive(Debug, Clone)]
pub struct SlotVars {
    pub info: PsdId,
    pub sense: PsdId,
    /// `[t_u, t_e]`, the log-hypograph variables.
    pub logs: VecId,
    /// Subspace basis; the blocks hold `U^H X U`.
    pub basis: ComplexMatrix,
}

impl SlotVars {
    /// `(B, A_s)` in antenna coordinates from a solved program.
    pub fn lift(&self, sol: &conic::ConicSolution) -> (ComplexMatrix, ComplexMatrix) {
        let up = |y: &ComplexMatrix| hermitian_part(&(&self.basis * y * self.basis.adjoint()));
        (up(sol.psd(self.info)), up(sol.psd(self.sense)))
    }

    fn project(&self, x: &ComplexMatrix) -> ComplexMatrix {
        hermitian_part(&(self.basis.adjoint() * x * &self.basis))
    }
}

/// Beampattern thresholds `(Gamma_t d_t^2, Gamma_e d_e^2)` at `rho`.
pub fn thresholds(rho: &Position, cfg: &ScenarioConfig) -> (f64, f64) {
    let dt = crate::scenario::distance(rho, &cfg.node_pos(Node::Target), cfg.altitude);
    let de = crate::scenario::distance(rho, &cfg.node_pos(Node::Eve), cfg.altitude);
    (cfg.gamma_t * dt * dt, cfg.gamma_e * de * de)
}

/// Add the variables and constraints of one slot to `p`; returns the block
/// handles and the slot's objective, whose value at any feasible point with
/// tight log variables equals [`surrogate_objective`] at the lifted point.
pub fn append_slot(
    p: &mut ConicProgram,
    tag: &str,
    rho: &Position,
    coeffs: &SurrogateCoeffs,
    cfg: &ScenarioConfig,
) -> (SlotVars, LinearExpr) {
    let basis = signal_subspace(rho, cfg);
    let k = basis.ncols();
    let info = p.add_psd_block(format!("B{tag}"), k);
    let sense = p.add_psd_block(format!("As{tag}"), k);
    let logs = p.add_vec_block(format!("t{tag}"), 2);
    let u = Link::new(rho, Node::User, cfg);
    let e = Link::new(rho, Node::Eve, cfg);
    let t = Link::new(rho, Node::Target, cfg);
    let reduce = |x: &ComplexMatrix| hermitian_part(&(basis.adjoint() * x * &basis));
    let pu = outer(&(basis.adjoint() * &u.steering));
    let pe = outer(&(basis.adjoint() * &e.steering));
    let pt = outer(&(basis.adjoint() * &t.steering));

    // t_u <= ln(Phi_u^H E Phi_u + n_u), t_e <= ln(Phi_e^H A_s Phi_e + n_e)
    p.add_constraint(Constraint::LogHypograph {
        t: LinearExpr::var(logs, 0, 1.0),
        u: LinearExpr::psd(info, pu.clone())
            .add_psd(sense, pu)
            .add_constant(u.noise),
    });
    p.add_constraint(Constraint::LogHypograph {
        t: LinearExpr::var(logs, 1, 1.0),
        u: LinearExpr::psd(sense, pe.clone()).add_constant(e.noise),
    });

    let (thr_t, thr_e) = thresholds(rho, cfg);
    p.add_constraint(Constraint::ge(
        LinearExpr::psd(info, pt.clone()).add_psd(sense, pt),
        thr_t,
    ));
    if cfg.has_eve_ceiling() {
        p.add_constraint(Constraint::le(
            LinearExpr::psd(info, pe.clone()).add_psd(sense, pe),
            thr_e,
        ));
    }
    let eye = linalg::identity::<f64>(k);
    p.add_constraint(Constraint::le(
        LinearExpr::psd(info, eye.clone()).add_psd(sense, eye),
        cfg.p_max,
    ));

    // log2(g^H X g + sigma2) = log2(Phi^H X Phi + n) + log2(beta0 / d^2)
    let offset = (cfg.beta0 / (u.distance * u.distance)).log2() + (cfg.beta0 / (e.distance * e.distance)).log2();
    let lam_u = reduce(&coeffs.lambda_u);
    let lam_e = reduce(&coeffs.lambda_e);
    let objective = LinearExpr::var(logs, 0, 1.0 / LN_2)
        .add_var(logs, 1, 1.0 / LN_2)
        .add_psd(sense, -lam_u)
        .add_psd(info, -&lam_e)
        .add_psd(sense, -lam_e)
        .add_constant(offset - coeffs.delta_u + coeffs.anchor_u - coeffs.delta_e + coeffs.anchor_e);
    (
        SlotVars {
            info,
            sense,
            logs,
            basis,
        },
        objective,
    )
}

/// Single-slot relaxed program at `rho` with coefficients `coeffs`.
pub fn slot_program(rho: &Position, coeffs: &SurrogateCoeffs, cfg: &ScenarioConfig) -> (ConicProgram, SlotVars) {
    let mut p = ConicProgram::new(Sense::Maximize);
    let (vars, obj) = append_slot(&mut p, "", rho, coeffs, cfg);
    p.set_objective(Sense::Maximize, obj);
    (p, vars)
}

/// Interior start for `slot_program` derived from a (possibly boundary)
/// iterate: project onto the subspace, shrink toward a small isotropic
/// component and set each log variable one below its bound.
fn interior_hint(rho: &Position, vars: &SlotVars, info: &ComplexMatrix, sense: &ComplexMatrix, cfg: &ScenarioConfig) -> Start {
    let k = vars.basis.ncols();
    let eps = 1e-6;
    let iso = scale(&linalg::identity(k), eps * cfg.p_max / (4.0 * k as f64));
    let b = scale(&vars.project(info), 1.0 - eps) + &iso;
    let a = scale(&vars.project(sense), 1.0 - eps) + iso;
    let u = Link::new(rho, Node::User, cfg);
    let e = Link::new(rho, Node::Eve, cfg);
    let pu = vars.basis.adjoint() * &u.steering;
    let pe = vars.basis.adjoint() * &e.steering;
    let tu = (quad_form(&(&b + &a), &pu) + u.noise).ln() - 1.0;
    let te = (quad_form(&a, &pe) + e.noise).ln() - 1.0;
    Start {
        psd: vec![b, a],
        vecs: vec![DVector::from_vec(vec![tu, te])],
    }
}

/// Solve the relaxed program linearized at `prev`.
pub fn solve_slot(
    rho: &Position,
    prev: (&ComplexMatrix, &ComplexMatrix),
    cfg: &ScenarioConfig,
) -> Result<(ComplexMatrix, ComplexMatrix)> {
    precheck(rho, cfg)?;
    let coeffs = surrogate_coeffs(rho, prev.0, prev.1, cfg);
    let (p, vars) = slot_program(rho, &coeffs, cfg);
    let sol = conic::solve_from(&p, conic::DEFAULT_TOL, &interior_hint(rho, &vars, prev.0, prev.1, cfg))?;
    match sol.status {
        Status::Optimal => Ok(vars.lift(&sol)),
        Status::Infeasible => Err(Error::SlotInfeasible { slots: vec![] }),
        s => Err(Error::Solver(format!("beamforming program ended with {s:?}"))),
    }
}

/// Array-gain ceiling test: no beam delivers more than `M P_max` anywhere.
fn precheck(rho: &Position, cfg: &ScenarioConfig) -> Result<()> {
    let (thr_t, _) = thresholds(rho, cfg);
    if thr_t > cfg.n_antennas as f64 * cfg.p_max {
        return Err(Error::SlotInfeasible { slots: vec![] });
    }
    Ok(())
}

/// Output of the rank-one reconstruction.
#[derive(Debug, Clone)]
pub struct RankOne {
    pub beam: ComplexVector,
    pub info: ComplexMatrix,
    pub sense: ComplexMatrix,
}

/// `b = B* g_u / sqrt(g_u^H B* g_u)`, `A_s = B* + A_s* - b b^H`.
///
/// Keeps `B + A_s`, both user-side quadratic forms and the total power. For
/// a full-rank `B*` the eavesdropper term `g_e^H b b^H g_e` is at most
/// `g_e^H B* g_e` (Cauchy-Schwarz in the `B*` inner product).
pub fn rank_one_reconstruct(
    info: &ComplexMatrix,
    sense: &ComplexMatrix,
    rho: &Position,
    cfg: &ScenarioConfig,
) -> RankOne {
    let m = info.nrows();
    let gu = Link::new(rho, Node::User, cfg).channel(cfg.beta0);
    let total = info + sense;
    let gain = quad_form(info, &gu);
    if !(gain > 1e-15 * trace_re(info)) {
        return RankOne {
            beam: ComplexVector::zeros(m),
            info: linalg::zeros(m),
            sense: total,
        };
    }
    let beam = (info * &gu) * Complex64::new(1.0 / gain.sqrt(), 0.0);
    let bb = outer(&beam);
    RankOne {
        sense: hermitian_part(&(total - &bb)),
        info: bb,
        beam,
    }
}

/// SCA stopping rule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BfStop {
    pub eps_obj: f64,
    pub max_iter: usize,
}

impl Default for BfStop {
    fn default() -> Self {
        Self {
            eps_obj: 1e-4,
            max_iter: 30,
        }
    }
}

/// Per-slot SCA state after the loop.
#[derive(Debug, Clone)]
pub struct ScaState {
    /// Number of relaxed solves performed.
    pub iteration: usize,
    pub info: ComplexMatrix,
    pub sense: ComplexMatrix,
    /// True unclamped secrecy rate at the start point and after every solve.
    pub history: Vec<f64>,
}

/// Feasibility-margin start: maximize `zeta_t - Gamma_t d_t^2` over `A_s`
/// with `B = 0`, then move half the power onto the user direction when the
/// beampattern constraints survive.
pub fn initial_slot(rho: &Position, cfg: &ScenarioConfig) -> Result<SlotBeam> {
    precheck(rho, cfg)?;
    let m = cfg.n_antennas;
    let u = Link::new(rho, Node::User, cfg);
    let e = Link::new(rho, Node::Eve, cfg);
    let t = Link::new(rho, Node::Target, cfg);
    let (thr_t, thr_e) = thresholds(rho, cfg);
    let basis = signal_subspace(rho, cfg);
    let k = basis.ncols();
    let mut p = ConicProgram::new(Sense::Maximize);
    let a = p.add_psd_block("As", k);
    let s = p.add_vec_block("s", 1);
    p.set_objective(Sense::Maximize, LinearExpr::var(s, 0, 1.0));
    p.add_constraint(Constraint::Le(
        LinearExpr::var(s, 0, 1.0)
            .add_psd(a, -outer(&(basis.adjoint() * &t.steering)))
            .add_constant(thr_t),
    ));
    if cfg.has_eve_ceiling() {
        p.add_constraint(Constraint::le(LinearExpr::psd(a, outer(&(basis.adjoint() * &e.steering))), thr_e));
    }
    p.add_constraint(Constraint::le(LinearExpr::psd(a, linalg::identity(k)), cfg.p_max));
    let sol = conic::solve(&p, conic::DEFAULT_TOL)?;
    if sol.status != Status::Optimal || sol.objective < 0.0 {
        return Err(Error::SlotInfeasible { slots: vec![] });
    }
    let sense = hermitian_part(&(&basis * sol.psd(a) * basis.adjoint()));
    let power = trace_re(&sense);
    let dir = &u.steering * Complex64::new(1.0 / (m as f64).sqrt(), 0.0);
    let candidate = SlotBeam::from_vector(dir * Complex64::new((0.5 * power).sqrt(), 0.0), scale(&sense, 0.5));
    let cm = slot_metrics(rho, &candidate, cfg);
    let ok = cm.zeta_target >= cm.threshold_target && (!cfg.has_eve_ceiling() || cm.zeta_eve <= cm.threshold_eve);
    if ok {
        Ok(candidate)
    } else {
        Ok(SlotBeam {
            info: linalg::zeros(m),
            sense,
            info_vector: None,
        })
    }
}

/// SCA start used when no feasible warm start exists: the better (by true
/// secrecy rate) of [`initial_slot`] and one relaxed solve linearized at the
/// all-zero plan. The zero expansion point charges AN leakage toward the
/// user at its steepest slope, which avoids starting deep in the region where
/// the linearized penalty is nearly flat.
pub fn default_start(rho: &Position, cfg: &ScenarioConfig) -> Result<SlotBeam> {
    let margin = initial_slot(rho, cfg)?;
    let m = cfg.n_antennas;
    let zero = linalg::zeros(m);
    let base = true_objective(&margin.info, &margin.sense, rho, cfg);
    match solve_slot(rho, (&zero, &zero), cfg) {
        Ok((info, sense)) if true_objective(&info, &sense, rho, cfg) > base => Ok(SlotBeam {
            info,
            sense,
            info_vector: None,
        }),
        _ => Ok(margin),
    }
}

/// Initial plan for a whole trajectory; reports every infeasible slot.
pub fn initial_plan(traj: &Trajectory, cfg: &ScenarioConfig) -> Result<BeamPlan> {
    let results: Vec<Result<SlotBeam>> = traj.positions.par_iter().map(|rho| initial_slot(rho, cfg)).collect();
    Ok(BeamPlan {
        slots: collect_slots(results)?,
    })
}

fn collect_slots<T>(results: Vec<Result<T>>) -> Result<Vec<T>> {
    let mut bad = Vec::new();
    let mut out = Vec::with_capacity(results.len());
    for (k, r) in results.into_iter().enumerate() {
        match r {
            Ok(v) => out.push(v),
            Err(Error::SlotInfeasible { .. }) => bad.push(k),
            Err(e) => return Err(e),
        }
    }
    if bad.is_empty() {
        Ok(out)
    } else {
        Err(Error::SlotInfeasible { slots: bad })
    }
}

/// Constraint check with absolute tolerance `tol`, matching
/// [`crate::metrics::check_feasibility`].
fn slot_feasible(rho: &Position, slot: &SlotBeam, cfg: &ScenarioConfig, tol: f64) -> bool {
    let m = slot_metrics(rho, slot, cfg);
    m.zeta_target >= m.threshold_target - tol
        && (!cfg.has_eve_ceiling() || m.zeta_eve <= m.threshold_eve + tol)
        && m.power <= cfg.p_max + tol
}

/// Run the SCA loop of one slot from `start`.
pub fn run_slot(rho: &Position, start: &SlotBeam, cfg: &ScenarioConfig, stop: &BfStop) -> Result<ScaState> {
    let (mut info, mut sense) = (hermitian_part(&start.info), hermitian_part(&start.sense));
    let mut current = true_objective(&info, &sense, rho, cfg);
    let mut history = vec![current];
    let mut iteration = 0;
    while iteration < stop.max_iter {
        let (b, a) = match solve_slot(rho, (&info, &sense), cfg) {
            Ok(v) => v,
            // a start on the edge of a nearly empty feasible set can leave
            // no interior for the relaxed program; the start is kept
            Err(e @ (Error::Solver(_) | Error::SlotInfeasible { .. })) => {
                debug!("slot SCA stopped after {iteration} solves: {e}");
                break;
            }
            Err(e) => return Err(e),
        };
        iteration += 1;
        let next = true_objective(&b, &a, rho, cfg);
        if next < current {
            // a solve that lost ground at working precision ends the loop
            break;
        }
        let delta = next - current;
        info = b;
        sense = a;
        current = next;
        history.push(current);
        if delta.abs() < stop.eps_obj {
            break;
        }
    }
    Ok(ScaState {
        iteration,
        info,
        sense,
        history,
    })
}

/// Result of the beamforming subproblem over a whole trajectory.
#[derive(Debug, Clone)]
pub struct BeamformingResult {
    /// Rank-one plan.
    pub plan: BeamPlan,
    pub states: Vec<ScaState>,
}

impl BeamformingResult {
    /// Mean true objective per SCA iteration, holding each slot at its last
    /// value once it has stopped.
    pub fn mean_history(&self) -> Vec<f64> {
        let len = self.states.iter().map(|s| s.history.len()).max().unwrap_or(0);
        let n = self.states.len().max(1) as f64;
        (0..len)
            .map(|k| {
                self.states
                    .iter()
                    .map(|s| s.history[k.min(s.history.len() - 1)])
                    .sum::<f64>()
                    / n
            })
            .collect()
    }

    pub fn max_iterations(&self) -> usize {
        self.states.iter().map(|s| s.iteration).max().unwrap_or(0)
    }
}

/// Per-slot SCA over the whole trajectory followed by rank-one
/// reconstruction. Slots of `init_plan` that are infeasible at the current
/// positions (or a missing plan) fall back to [`default_start`].
pub fn run_beamforming(
    traj: &Trajectory,
    init_plan: Option<&BeamPlan>,
    cfg: &ScenarioConfig,
    stop: &BfStop,
) -> Result<BeamformingResult> {
    if let Some(plan) = init_plan {
        if plan.len() != traj.len() {
            return Err(Error::LengthMismatch {
                expected: traj.len(),
                got: plan.len(),
            });
        }
    }
    let results: Vec<Result<(SlotBeam, ScaState)>> = traj
        .positions
        .par_iter()
        .enumerate()
        .map(|(k, rho)| {
            let start = match init_plan.map(|p| &p.slots[k]) {
                Some(s) if slot_feasible(rho, s, cfg, 1e-6) => s.clone(),
                _ => default_start(rho, cfg)?,
            };
            let state = run_slot(rho, &start, cfg, stop)?;
            let r1 = rank_one_reconstruct(&state.info, &state.sense, rho, cfg);
            Ok((SlotBeam::from_vector(r1.beam, r1.sense), state))
        })
        .collect();
    let (slots, states) = collect_slots(results)?.into_iter().unzip();
    Ok(BeamformingResult {
        plan: BeamPlan { slots },
        states,
    })
}
