//! Trajectory subproblem for a fixed beamforming plan.
//!
//! With the covariances held fixed, every link quantity depends on the UAV
//! position only through `d` and the cosine `D/d`. The per-slot secrecy rate
//! is `log2(eta_u/xi_u) - log2(eta_e/xi_e)`, where `eta_o` and `xi_o` are the
//! array factors of `E = B + A_s` and `A_s` toward node `o` plus the noise
//! floor. Each trust-region step linearizes the rate and the beampattern
//! ratios `Xi_o / d_o^2` at the current trajectory and solves one joint
//! program over all slots.

use std::f64::consts::LOG2_E;

use log::debug;
use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::conic::{self, ConicProgram, Constraint, LinearExpr, Sense, Start, Status};
use crate::metrics::{average_secrecy, check_feasibility, eta_closed_form, big_xi_closed_form, MatrixPolar};
use crate::scenario::{distance, Node};
use crate::{BeamPlan, Error, Position, Result, ScenarioConfig, Trajectory};

/// Finite-difference step used to verify the analytic gradients (m).
pub const FD_STEP: f64 = 1e-3;
/// Relative disagreement above which a gradient is rejected.
pub const FD_TOL: f64 = 1e-3;
/// Objective cost of one unit of constraint slack.
pub const SLACK_PENALTY: f64 = 1e4;

/// First-order data for one node at the expansion point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NodeGradient {
    /// `grad eta_o = iota * (rho - s_o)`.
    pub iota: f64,
    /// `grad xi_o = varsigma * (rho - s_o)`.
    pub varsigma: f64,
    /// `grad Xi_o`, the array-factor part of `grad eta_o`.
    pub tau: Position,
    pub eta: f64,
    pub xi: f64,
    pub big_xi: f64,
    pub distance: f64,
    pub offset: Position,
}

impl NodeGradient {
    fn at(rho: &Position, s: &Position, e: &MatrixPolar<f64>, a: &MatrixPolar<f64>, cfg: &ScenarioConfig) -> Self {
        let d = distance(rho, s, cfg.altitude);
        let noise_slope = 2.0 * cfg.sigma2 / cfg.beta0;
        let slope_e = e.array_factor_slope(cfg.altitude, d);
        let slope_a = a.array_factor_slope(cfg.altitude, d);
        let offset = rho - s;
        Self {
            iota: noise_slope + slope_e,
            varsigma: noise_slope + slope_a,
            tau: offset * slope_e,
            eta: eta_closed_form(e, rho, s, cfg),
            xi: eta_closed_form(a, rho, s, cfg),
            big_xi: big_xi_closed_form(e, rho, s, cfg),
            distance: d,
            offset,
        }
    }

    /// `grad log2(eta_o / xi_o)`.
    pub fn log_ratio_gradient(&self) -> Position {
        self.offset * (LOG2_E * (self.iota / self.eta - self.varsigma / self.xi))
    }

    /// `Xi_o / d_o^2` and its gradient.
    pub fn gain_ratio(&self) -> (f64, Position) {
        let d2 = self.distance * self.distance;
        let grad = (self.tau * d2 - self.offset * (2.0 * self.big_xi)) / (d2 * d2);
        (self.big_xi / d2, grad)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotGradients {
    pub user: NodeGradient,
    pub eve: NodeGradient,
    pub target: NodeGradient,
    pub varrho_u: Position,
    pub varrho_e: Position,
    /// Unclamped secrecy rate at the expansion point.
    pub secrecy: f64,
}

impl SlotGradients {
    /// Gradient of the slot's unclamped secrecy rate.
    pub fn secrecy_gradient(&self) -> Position {
        self.varrho_u - self.varrho_e
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryGradients {
    pub slots: Vec<SlotGradients>,
}

/// Central difference with step `FD_STEP` along each axis.
pub fn central_difference(f: impl Fn(&Position) -> f64, rho: &Position) -> Position {
    let ex = Position::new(FD_STEP, 0.0);
    let ey = Position::new(0.0, FD_STEP);
    Position::new(
        (f(&(rho + ex)) - f(&(rho - ex))) / (2.0 * FD_STEP),
        (f(&(rho + ey)) - f(&(rho - ey))) / (2.0 * FD_STEP),
    )
}

/// Richardson extrapolation of central differences at `h` and `h/2`; the
/// fourth-order error keeps the check meaningful where a beam null makes
/// the field sharply curved.
fn extrapolated_difference(f: impl Fn(&Position) -> f64, rho: &Position) -> Position {
    let at = |h: f64| {
        let ex = Position::new(h, 0.0);
        let ey = Position::new(0.0, h);
        Position::new(
            (f(&(rho + ex)) - f(&(rho - ex))) / (2.0 * h),
            (f(&(rho + ey)) - f(&(rho - ey))) / (2.0 * h),
        )
    };
    (at(0.5 * FD_STEP) * 4.0 - at(FD_STEP)) / 3.0
}

fn check_gradient(name: &str, slot: usize, analytic: &Position, f: impl Fn(&Position) -> f64, rho: &Position) -> Result<()> {
    let fd = extrapolated_difference(&f, rho);
    let floor = 1e-9 * (1.0 + f(rho).abs());
    let err = (analytic - fd).norm();
    if err > FD_TOL * analytic.norm().max(fd.norm()) + floor {
        return Err(Error::GradientMismatch(format!(
            "{name} at slot {slot}: analytic {analytic:?}, central difference {fd:?}"
        )));
    }
    Ok(())
}

fn slot_gradients(k: usize, rho: &Position, slot: &crate::SlotBeam, cfg: &ScenarioConfig) -> Result<SlotGradients> {
    let e = MatrixPolar::from_matrix(&slot.total());
    let a = MatrixPolar::from_matrix(&slot.sense);
    let node = |n: Node| NodeGradient::at(rho, &cfg.node_pos(n), &e, &a, cfg);
    let (user, eve, target) = (node(Node::User), node(Node::Eve), node(Node::Target));

    for (label, n, g) in [("user", Node::User, &user), ("eve", Node::Eve, &eve), ("target", Node::Target, &target)] {
        let s = cfg.node_pos(n);
        check_gradient(&format!("eta_{label}"), k, &(g.offset * g.iota), |r| eta_closed_form(&e, r, &s, cfg), rho)?;
        check_gradient(&format!("xi_{label}"), k, &(g.offset * g.varsigma), |r| eta_closed_form(&a, r, &s, cfg), rho)?;
        check_gradient(&format!("Xi_{label}"), k, &g.tau, |r| big_xi_closed_form(&e, r, &s, cfg), rho)?;
        check_gradient(
            &format!("log ratio {label}"),
            k,
            &g.log_ratio_gradient(),
            |r| (eta_closed_form(&e, r, &s, cfg) / eta_closed_form(&a, r, &s, cfg)).log2(),
            rho,
        )?;
        check_gradient(
            &format!("gain ratio {label}"),
            k,
            &g.gain_ratio().1,
            |r| {
                let d = distance(r, &s, cfg.altitude);
                big_xi_closed_form(&e, r, &s, cfg) / (d * d)
            },
            rho,
        )?;
    }
    let varrho_u = user.log_ratio_gradient();
    let varrho_e = eve.log_ratio_gradient();
    let secrecy = (user.eta / user.xi).log2() - (eve.eta / eve.xi).log2();
    Ok(SlotGradients {
        user,
        eve,
        target,
        varrho_u,
        varrho_e,
        secrecy,
    })
}

/// Analytic gradients at `traj_l`, each verified against central differences.
pub fn compute_gradients(traj_l: &Trajectory, plan: &BeamPlan, cfg: &ScenarioConfig) -> Result<TrajectoryGradients> {
    if plan.len() != traj_l.len() {
        return Err(Error::LengthMismatch {
            expected: traj_l.len(),
            got: plan.len(),
        });
    }
    let slots = traj_l
        .positions
        .par_iter()
        .zip(&plan.slots)
        .enumerate()
        .map(|(k, (rho, slot))| slot_gradients(k, rho, slot, cfg))
        .collect::<Result<Vec<_>>>()?;
    Ok(TrajectoryGradients { slots })
}

/// Mean of the first-order expansion of each slot's secrecy rate.
pub fn surrogate_secrecy(traj: &Trajectory, traj_l: &Trajectory, grads: &TrajectoryGradients) -> f64 {
    let n = grads.slots.len().max(1) as f64;
    grads
        .slots
        .iter()
        .zip(traj.positions.iter().zip(&traj_l.positions))
        .map(|(g, (rho, rho_l))| g.secrecy + g.secrecy_gradient().dot(&(rho - rho_l)))
        .sum::<f64>()
        / n
}

/// `value + grad . (rho - rho_l)` compared against `threshold`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AffineBound {
    pub value: f64,
    pub grad: Position,
    pub threshold: f64,
    /// `d_o^2` at the expansion point; rows are posed multiplied by it.
    pub scale: f64,
}

impl AffineBound {
    pub fn eval(&self, rho: &Position, rho_l: &Position) -> f64 {
        self.value + self.grad.dot(&(rho - rho_l))
    }
}

/// Linearized target floor and eavesdropper ceiling of one slot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlotSensingRows {
    /// `Xi_t / d_t^2 >= Gamma_t`.
    pub target: AffineBound,
    /// `Xi_e / d_e^2 <= Gamma_e`; absent when the ceiling is off.
    pub eve: Option<AffineBound>,
}

pub fn linearized_sensing_constraints(grads: &TrajectoryGradients, cfg: &ScenarioConfig) -> Vec<SlotSensingRows> {
    let bound = |g: &NodeGradient, threshold: f64| {
        let (value, grad) = g.gain_ratio();
        AffineBound {
            value,
            grad,
            threshold,
            scale: g.distance * g.distance,
        }
    };
    grads
        .slots
        .iter()
        .map(|g| SlotSensingRows {
            target: bound(&g.target, cfg.gamma_t),
            eve: cfg.has_eve_ceiling().then(|| bound(&g.eve, cfg.gamma_e)),
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrustRegion {
    pub psi: f64,
    pub shrink: f64,
    pub min_radius: f64,
}

impl Default for TrustRegion {
    fn default() -> Self {
        Self {
            psi: 20.0,
            shrink: 0.5,
            min_radius: 1e-2,
        }
    }
}

/// Candidate returned by one trust-region subproblem.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryStep {
    pub trajectory: Trajectory,
    /// Surrogate value at the candidate, without the slack penalty.
    pub surrogate: f64,
    /// Largest slack, in units of the scaled rows.
    pub max_slack: f64,
}

/// Solve the linearized program jointly over all slots.
pub fn solve_trajectory_step(
    traj_l: &Trajectory,
    grads: &TrajectoryGradients,
    tr: &TrustRegion,
    cfg: &ScenarioConfig,
) -> Result<TrajectoryStep> {
    let n = traj_l.len();
    let mut positions = traj_l.positions.clone();
    if let Some(first) = positions.first_mut() {
        *first = cfg.rho_init_pos();
    }
    if let Some(last) = positions.last_mut() {
        *last = cfg.rho_final_pos();
    }
    if n <= 2 {
        let trajectory = Trajectory::new(positions);
        return Ok(TrajectoryStep {
            surrogate: surrogate_secrecy(&trajectory, traj_l, grads),
            trajectory,
            max_slack: 0.0,
        });
    }
    // endpoints enter as constants; only interior slots are variables
    let free = 1..n - 1;
    let rows = linearized_sensing_constraints(grads, cfg);
    let n_slack = rows[free.clone()].iter().map(|r| 1 + r.eve.is_some() as usize).sum::<usize>();

    let mut p = ConicProgram::new(Sense::Maximize);
    let x = p.add_vec_block("rho", 2 * (n - 2));
    let s = p.add_vec_block("slack", n_slack);
    let idx = |k: usize, c: usize| 2 * (k - 1) + c;
    let coord = |k: usize, c: usize| {
        if free.contains(&k) {
            LinearExpr::var(x, idx(k, c), 1.0)
        } else {
            LinearExpr::constant(positions[k][c])
        }
    };

    let inv_n = 1.0 / n as f64;
    let mut objective = LinearExpr::constant(0.0);
    let mut constant = grads.slots.iter().map(|g| g.secrecy).sum::<f64>() * inv_n;
    for k in free.clone() {
        let w = grads.slots[k].secrecy_gradient() * inv_n;
        objective = objective.add_var(x, idx(k, 0), w.x).add_var(x, idx(k, 1), w.y);
        constant -= w.dot(&traj_l.positions[k]);
    }
    for j in 0..n_slack {
        objective = objective.add_var(s, j, -SLACK_PENALTY);
        p.add_constraint(Constraint::ge(LinearExpr::var(s, j, 1.0), 0.0));
    }
    p.set_objective(Sense::Maximize, objective.add_constant(constant));

    let vmax = cfg.max_displacement();
    for k in 0..n - 1 {
        p.add_constraint(Constraint::Soc {
            terms: (0..2)
                .map(|c| coord(k + 1, c).plus(coord(k, c).negated()))
                .collect(),
            bound: LinearExpr::constant(vmax),
        });
    }
    for k in free.clone() {
        let rho_l = traj_l.positions[k];
        p.add_constraint(Constraint::Soc {
            terms: (0..2).map(|c| coord(k, c).add_constant(-rho_l[c])).collect(),
            bound: LinearExpr::constant(tr.psi),
        });
    }

    // d^2 (value - threshold + grad . (rho - rho_l)) + slack >= 0, mirrored for the ceiling
    let mut j = 0;
    let mut slack_hint = Vec::with_capacity(n_slack);
    for k in free.clone() {
        let r = &rows[k];
        let rho_l = traj_l.positions[k];
        for (b, sign) in [(Some(r.target), 1.0), (r.eve, -1.0)] {
            let Some(b) = b else { continue };
            let gs = b.grad * (sign * b.scale);
            let at_l = sign * b.scale * (b.value - b.threshold);
            let row = LinearExpr::var(x, idx(k, 0), gs.x)
                .add_var(x, idx(k, 1), gs.y)
                .add_var(s, j, 1.0)
                .add_constant(at_l - gs.dot(&rho_l));
            p.add_constraint(Constraint::ge(row, 0.0));
            slack_hint.push((-at_l).max(0.0) + 1e-2);
            j += 1;
        }
    }

    let sol = conic::solve_from(&p, conic::DEFAULT_TOL, &step_hint(traj_l, tr, cfg, slack_hint))?;
    if sol.status != Status::Optimal {
        return Err(Error::Solver(format!("trajectory step ended with {:?}", sol.status)));
    }
    let xs = sol.vec(x);
    for k in free {
        positions[k] = Position::new(xs[idx(k, 0)], xs[idx(k, 1)]);
    }
    let trajectory = Trajectory::new(positions);
    let max_slack = sol.vec(s).iter().copied().fold(0.0, f64::max);
    Ok(TrajectoryStep {
        surrogate: surrogate_secrecy(&trajectory, traj_l, grads),
        trajectory,
        max_slack,
    })
}

/// Strictly interior start: pull the interior of the expansion point
/// slightly toward the straight line, whose displacement is below `V_max`
/// when the scenario is valid.
fn step_hint(traj_l: &Trajectory, tr: &TrustRegion, cfg: &ScenarioConfig, slack: Vec<f64>) -> Start {
    let line = Trajectory::straight_line(cfg);
    let n = traj_l.len();
    let far = traj_l
        .positions
        .iter()
        .zip(&line.positions)
        .map(|(a, b)| (a - b).norm())
        .fold(0.0, f64::max);
    let eps = if far > 0.0 { (0.5 * tr.psi / far).min(1e-3) } else { 0.0 };
    let mut rho = Vec::with_capacity(2 * n);
    for (a, b) in traj_l.positions[1..n - 1].iter().zip(&line.positions[1..n - 1]) {
        let h = a * (1.0 - eps) + b * eps;
        rho.extend([h.x, h.y]);
    }
    Start {
        psd: vec![],
        vecs: vec![DVector::from_vec(rho), DVector::from_vec(slack)],
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajStop {
    pub region: TrustRegion,
    /// Stop once an accepted step gains less than this (bits).
    pub eps_improve: f64,
    pub max_steps: usize,
    /// Tolerance of the true constraint check on candidates.
    pub feas_tol: f64,
    /// Slack above which a candidate is rejected.
    pub slack_tol: f64,
}

impl Default for TrajStop {
    fn default() -> Self {
        Self {
            region: TrustRegion::default(),
            eps_improve: 1e-4,
            max_steps: 200,
            feas_tol: 1e-6,
            slack_tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TrajStatus {
    /// An accepted step improved by less than `eps_improve`.
    Converged,
    /// The radius fell below its minimum.
    RadiusCollapsed,
    MaxSteps,
    /// The start violates the true constraints at these slots.
    Infeasible { slots: Vec<usize> },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryTrace {
    /// Average unclamped secrecy rate after each accepted step, starting with
    /// the initial trajectory.
    pub objective: Vec<f64>,
    /// Average clamped secrecy rate, aligned with `objective`.
    pub clamped: Vec<f64>,
    /// Radius of every attempted step.
    pub radii: Vec<f64>,
    pub accepted: usize,
    pub rejected: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryResult {
    pub trajectory: Trajectory,
    pub trace: TrajectoryTrace,
    pub status: TrajStatus,
}

/// Trust-region SCA over the trajectory for a fixed plan.
pub fn run_trajectory(plan: &BeamPlan, traj_init: &Trajectory, cfg: &ScenarioConfig, stop: &TrajStop) -> Result<TrajectoryResult> {
    traj_init.validate(cfg, 1e-6)?;
    let report = check_feasibility(traj_init, plan, cfg, stop.feas_tol)?;
    let start = average_secrecy(traj_init, plan, cfg);
    let mut trace = TrajectoryTrace {
        objective: vec![start.unclamped],
        clamped: vec![start.clamped],
        ..Default::default()
    };
    if !report.passes() {
        return Ok(TrajectoryResult {
            trajectory: traj_init.clone(),
            trace,
            status: TrajStatus::Infeasible {
                slots: report.failing_slots(),
            },
        });
    }

    let mut tr = stop.region;
    let psi0 = tr.psi;
    let mut cur = traj_init.clone();
    let mut cur_rate = start;
    let mut grads = compute_gradients(&cur, plan, cfg)?;
    let mut status = TrajStatus::MaxSteps;
    for _ in 0..stop.max_steps {
        if tr.psi < tr.min_radius {
            status = TrajStatus::RadiusCollapsed;
            break;
        }
        trace.radii.push(tr.psi);
        let accepted = match solve_trajectory_step(&cur, &grads, &tr, cfg) {
            Ok(step) if step.max_slack <= stop.slack_tol => {
                let rate = average_secrecy(&step.trajectory, plan, cfg);
                let ok = check_feasibility(&step.trajectory, plan, cfg, stop.feas_tol)?.passes();
                let predicted = step.surrogate - cur_rate.unclamped;
                let reach = step
                    .trajectory
                    .positions
                    .iter()
                    .zip(&cur.positions)
                    .map(|(a, b)| (a - b).norm())
                    .fold(0.0, f64::max);
                (ok && rate.unclamped > cur_rate.unclamped && rate.clamped >= cur_rate.clamped).then(|| {
                    // grow only when the model was trusted on a step that used the full radius
                    let ratio = (rate.unclamped - cur_rate.unclamped) / predicted;
                    let grow = ratio >= 0.75 && reach >= 0.9 * tr.psi;
                    (step.trajectory, rate, grow)
                })
            }
            Ok(step) => {
                debug!("trajectory step needs slack {:.3e} at radius {}", step.max_slack, tr.psi);
                None
            }
            Err(e) => {
                debug!("trajectory step failed at radius {}: {e}", tr.psi);
                None
            }
        };
        match accepted {
            Some((next, rate, grow)) => {
                let gain = rate.unclamped - cur_rate.unclamped;
                cur = next;
                cur_rate = rate;
                trace.objective.push(rate.unclamped);
                trace.clamped.push(rate.clamped);
                trace.accepted += 1;
                if gain < stop.eps_improve {
                    status = TrajStatus::Converged;
                    break;
                }
                grads = compute_gradients(&cur, plan, cfg)?;
                if grow {
                    tr.psi = (tr.psi * 2.0).min(psi0);
                }
            }
            None => {
                trace.rejected += 1;
                tr.psi *= tr.shrink;
            }
        }
    }
    Ok(TrajectoryResult {
        trajectory: cur,
        trace,
        status,
    })
}
