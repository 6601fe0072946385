//! Alternating optimization of beamforming and trajectory.

use std::time::Instant;

use log::{debug, warn};
use serde::{Deserialize, Serialize};

use crate::beamforming::{initial_plan, run_beamforming, true_objective, BfStop};
use crate::metrics::{average_secrecy, check_feasibility, Residuals};
use crate::trajectory::{run_trajectory, TrajStatus, TrajStop};
use crate::{BeamPlan, Error, Result, ScenarioConfig, Trajectory};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AoStop {
    /// Outer stop on the clamped average secrecy rate (bps/Hz).
    pub eps: f64,
    pub max_rounds: usize,
    pub beamforming: BfStop,
    pub trajectory: TrajStop,
    /// Freeze the trajectory and only run the beamforming subproblem.
    pub fixed_trajectory: bool,
    /// Freeze the plan and only run the trajectory subproblem.
    pub fixed_plan: bool,
    /// Let [`run`] pick its start among [`candidate_starts`].
    pub screen_starts: bool,
}

impl Default for AoStop {
    fn default() -> Self {
        Self {
            eps: 1e-3,
            max_rounds: 15,
            beamforming: BfStop::default(),
            trajectory: TrajStop::default(),
            fixed_trajectory: false,
            fixed_plan: false,
            screen_starts: true,
        }
    }
}

/// One outer round; round 0 describes the starting point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: usize,
    pub clamped: f64,
    pub unclamped: f64,
    pub residuals: Residuals,
    pub bf_iterations: usize,
    pub traj_accepted: usize,
    pub traj_rejected: usize,
    pub bf_seconds: f64,
    pub traj_seconds: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AOTrace {
    pub rounds: Vec<RoundRecord>,
}

impl AOTrace {
    pub fn clamped(&self) -> Vec<f64> {
        self.rounds.iter().map(|r| r.clamped).collect()
    }

    pub fn is_monotone(&self, tol: f64) -> bool {
        self.rounds.windows(2).all(|w| w[1].clamped >= w[0].clamped - tol)
    }
}

#[derive(Debug, Clone)]
pub struct AoResult {
    pub trajectory: Trajectory,
    pub plan: BeamPlan,
    pub trace: AOTrace,
    /// Per-round beamforming SCA means and trajectory traces, kept for the
    /// convergence reports.
    pub bf_histories: Vec<Vec<f64>>,
    pub traj_histories: Vec<Vec<f64>>,
}

/// Straight uniform-speed flight and the feasibility-margin plan on it.
pub fn initialize(cfg: &ScenarioConfig) -> Result<(Trajectory, BeamPlan)> {
    cfg.validate()?;
    let traj = Trajectory::straight_line(cfg);
    let plan = initial_plan(&traj, cfg)?;
    Ok((traj, plan))
}

fn record(round: usize, traj: &Trajectory, plan: &BeamPlan, cfg: &ScenarioConfig) -> Result<RoundRecord> {
    let rate = average_secrecy(traj, plan, cfg);
    let report = check_feasibility(traj, plan, cfg, 1e-6)?;
    Ok(RoundRecord {
        round,
        clamped: rate.clamped,
        unclamped: rate.unclamped,
        residuals: report.worst,
        bf_iterations: 0,
        traj_accepted: 0,
        traj_rejected: 0,
        bf_seconds: 0.0,
        traj_seconds: 0.0,
    })
}

/// Keep the previous slot wherever the new plan scores lower on the true
/// per-slot objective at the same position.
fn merge_plans(traj: &Trajectory, old: &BeamPlan, new: BeamPlan, cfg: &ScenarioConfig) -> BeamPlan {
    let slots = traj
        .positions
        .iter()
        .zip(old.slots.iter().zip(new.slots))
        .map(|(rho, (o, n))| {
            let keep = true_objective(&o.info, &o.sense, rho, cfg) > true_objective(&n.info, &n.sense, rho, cfg);
            if keep {
                o.clone()
            } else {
                n
            }
        })
        .collect();
    BeamPlan { slots }
}

/// Largest sideways bulge `a` of the arc `a sin(pi k / (N-1))` whose
/// per-slot displacement stays within `fill * V_max`.
fn max_bulge(cfg: &ScenarioConfig, fill: f64) -> f64 {
    let n = cfg.n_slots;
    if n < 3 {
        return 0.0;
    }
    let along = (cfg.rho_final_pos() - cfg.rho_init_pos()).norm() / (n - 1) as f64;
    let limit = fill * cfg.max_displacement();
    if along >= limit {
        return 0.0;
    }
    let worst = |a: f64| {
        (0..n - 1)
            .map(|k| {
                let s = |k: usize| (std::f64::consts::PI * k as f64 / (n - 1) as f64).sin();
                along.hypot(a * (s(k + 1) - s(k)))
            })
            .fold(0.0, f64::max)
    };
    let (mut lo, mut hi) = (0.0, 1.0);
    while worst(hi) <= limit {
        hi *= 2.0;
    }
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if worst(mid) <= limit {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

/// The straight line followed by arcs bulging to either side of it at half
/// and at the full speed headroom.
pub fn candidate_starts(cfg: &ScenarioConfig) -> Vec<Trajectory> {
    let line = Trajectory::straight_line(cfg);
    let mut out = vec![line.clone()];
    let dir = cfg.rho_final_pos() - cfg.rho_init_pos();
    if dir.norm() == 0.0 {
        return out;
    }
    let normal = crate::Position::new(-dir.y, dir.x) / dir.norm();
    let a_max = max_bulge(cfg, 0.95);
    if a_max <= 0.0 {
        return out;
    }
    let n = line.len();
    for frac in [0.5, 1.0] {
        for side in [1.0, -1.0] {
            let a = side * frac * a_max;
            let positions = line
                .positions
                .iter()
                .enumerate()
                .map(|(k, p)| p + normal * (a * (std::f64::consts::PI * k as f64 / (n - 1) as f64).sin()))
                .collect();
            out.push(Trajectory::new(positions));
        }
    }
    out
}

/// Score every candidate start by one beamforming pass and return the best
/// with its feasibility-margin plan; the straight line wins ties.
pub fn screen_start(cfg: &ScenarioConfig, stop: &AoStop) -> Result<(Trajectory, BeamPlan)> {
    let (line, line_plan) = initialize(cfg)?;
    let mut best: Option<(f64, Trajectory, BeamPlan)> = None;
    for (k, cand) in candidate_starts(cfg).into_iter().enumerate() {
        let plan = if k == 0 {
            line_plan.clone()
        } else {
            match initial_plan(&cand, cfg) {
                Ok(p) => p,
                Err(Error::SlotInfeasible { .. }) => continue,
                Err(e) => return Err(e),
            }
        };
        let score = match run_beamforming(&cand, Some(&plan), cfg, &stop.beamforming) {
            Ok(bf) => average_secrecy(&cand, &bf.plan, cfg).clamped,
            Err(Error::SlotInfeasible { .. }) => continue,
            Err(e) => return Err(e),
        };
        debug!("start candidate {k}: {score:.4}");
        if best.as_ref().is_none_or(|(b, _, _)| score > *b) {
            best = Some((score, cand, plan));
        }
    }
    Ok(best.map(|(_, t, p)| (t, p)).unwrap_or((line, line_plan)))
}

/// Run the alternation from [`initialize`], or from the best of
/// [`candidate_starts`] when `stop.screen_starts` is set.
pub fn run(cfg: &ScenarioConfig, stop: &AoStop) -> Result<AoResult> {
    let (traj, plan) = if stop.screen_starts && stop.max_rounds > 0 {
        screen_start(cfg, stop)?
    } else {
        initialize(cfg)?
    };
    run_from(traj, plan, cfg, stop)
}

/// Alternate beamforming and trajectory updates from a feasible pair.
pub fn run_from(traj: Trajectory, plan: BeamPlan, cfg: &ScenarioConfig, stop: &AoStop) -> Result<AoResult> {
    let mut traj = traj;
    let mut plan = plan;
    let mut trace = AOTrace {
        rounds: vec![record(0, &traj, &plan, cfg)?],
    };
    let mut bf_histories = Vec::new();
    let mut traj_histories = Vec::new();
    let mut have_plan = false;
    for round in 1..=stop.max_rounds {
        let prev = trace.rounds.last().map(|r| r.clamped).unwrap_or(f64::NEG_INFINITY);
        let mut bf_iterations = 0;
        let t0 = Instant::now();
        if !(stop.fixed_plan && have_plan) {
            let bf = run_beamforming(&traj, Some(&plan), cfg, &stop.beamforming)?;
            bf_iterations = bf.max_iterations();
            bf_histories.push(bf.mean_history());
            plan = if round == 1 { bf.plan } else { merge_plans(&traj, &plan, bf.plan, cfg) };
            have_plan = true;
        }
        let bf_seconds = t0.elapsed().as_secs_f64();

        let t1 = Instant::now();
        let (mut accepted, mut rejected) = (0, 0);
        if !stop.fixed_trajectory {
            let res = run_trajectory(&plan, &traj, cfg, &stop.trajectory)?;
            if let TrajStatus::Infeasible { slots } = &res.status {
                return Err(Error::SlotInfeasible { slots: slots.clone() });
            }
            accepted = res.trace.accepted;
            rejected = res.trace.rejected;
            traj_histories.push(res.trace.objective.clone());
            traj = res.trajectory;
        }
        let traj_seconds = t1.elapsed().as_secs_f64();

        let mut rec = record(round, &traj, &plan, cfg)?;
        rec.bf_iterations = bf_iterations;
        rec.traj_accepted = accepted;
        rec.traj_rejected = rejected;
        rec.bf_seconds = bf_seconds;
        rec.traj_seconds = traj_seconds;
        debug!("round {round}: clamped {:.6} ({:.2}s + {:.2}s)", rec.clamped, bf_seconds, traj_seconds);
        let gain = rec.clamped - prev;
        if gain < -1e-6 {
            warn!("outer objective fell by {:.3e} in round {round}", -gain);
        }
        trace.rounds.push(rec);
        // with one block frozen a second round repeats the first
        if gain < stop.eps || stop.fixed_trajectory || (stop.fixed_plan && round > 1) {
            break;
        }
    }
    Ok(AoResult {
        trajectory: traj,
        plan,
        trace,
        bf_histories,
        traj_histories,
    })
}
