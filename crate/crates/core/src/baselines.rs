//! The proposed design and its three comparison schemes.

use std::fmt;
use std::str::FromStr;

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ao::{self, AOTrace, AoStop, RoundRecord};
use crate::beamforming::thresholds;
use crate::linalg::{outer, scale};
use crate::metrics::{average_secrecy, check_feasibility, Residuals, SecrecyRate};
use crate::scenario::{Link, Node};
use crate::trajectory::{run_trajectory, TrajStatus};
use crate::{BeamPlan, Complex64, Error, Position, Result, ScenarioConfig, SlotBeam, Trajectory};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemeId {
    Proposed,
    StraightFlightBf,
    TrajMrt,
    NoSensingSecurity,
}

impl SchemeId {
    pub const ALL: [SchemeId; 4] = [
        SchemeId::Proposed,
        SchemeId::StraightFlightBf,
        SchemeId::TrajMrt,
        SchemeId::NoSensingSecurity,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SchemeId::Proposed => "proposed",
            SchemeId::StraightFlightBf => "straight_flight_bf",
            SchemeId::TrajMrt => "traj_mrt",
            SchemeId::NoSensingSecurity => "no_sensing_security",
        }
    }

    /// Scenario the scheme optimizes and is checked against.
    pub fn scenario(self, cfg: &ScenarioConfig) -> ScenarioConfig {
        match self {
            SchemeId::NoSensingSecurity => ScenarioConfig {
                gamma_e: f64::INFINITY,
                ..cfg.clone()
            },
            _ => cfg.clone(),
        }
    }
}

impl fmt::Display for SchemeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SchemeId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SchemeId::ALL
            .into_iter()
            .find(|id| id.name() == s.trim())
            .ok_or_else(|| Error::Manifest(format!("unknown scheme `{s}`")))
    }
}

#[derive(Debug, Clone)]
pub struct SchemeResult {
    pub scheme: SchemeId,
    pub trajectory: Trajectory,
    pub plan: BeamPlan,
    pub rate: SecrecyRate,
    pub trace: AOTrace,
    pub residuals: Residuals,
    /// Slots that violate a constraint of the scheme's scenario at 1e-6.
    pub infeasible_slots: Vec<usize>,
}

impl SchemeResult {
    pub fn feasible(&self) -> bool {
        self.infeasible_slots.is_empty()
    }

    fn assemble(
        scheme: SchemeId,
        trajectory: Trajectory,
        plan: BeamPlan,
        trace: AOTrace,
        cfg: &ScenarioConfig,
    ) -> Result<Self> {
        let report = check_feasibility(&trajectory, &plan, cfg, 1e-6)?;
        Ok(Self {
            scheme,
            rate: average_secrecy(&trajectory, &plan, cfg),
            residuals: report.worst,
            infeasible_slots: report.failing_slots(),
            trajectory,
            plan,
            trace,
        })
    }
}

/// Full alternation.
pub fn proposed(cfg: &ScenarioConfig, stop: &AoStop) -> Result<SchemeResult> {
    let res = ao::run(cfg, stop)?;
    SchemeResult::assemble(SchemeId::Proposed, res.trajectory, res.plan, res.trace, cfg)
}

/// Uniform-speed straight flight with optimized beamforming only.
pub fn straight_flight_bf(cfg: &ScenarioConfig, stop: &AoStop) -> Result<SchemeResult> {
    let frozen = AoStop {
        fixed_trajectory: true,
        screen_starts: false,
        max_rounds: stop.max_rounds.max(1),
        ..*stop
    };
    let res = ao::run(cfg, &frozen)?;
    SchemeResult::assemble(SchemeId::StraightFlightBf, res.trajectory, res.plan, res.trace, cfg)
}

/// Information power cap `Gamma_e d_e^2 M / |Phi_e^H Phi_u|^2` of the MRT
/// beam, clipped to `P_max`.
pub fn mrt_power_cap(rho: &Position, cfg: &ScenarioConfig) -> f64 {
    if !cfg.has_eve_ceiling() {
        return cfg.p_max;
    }
    let u = Link::new(rho, Node::User, cfg);
    let e = Link::new(rho, Node::Eve, cfg);
    let overlap = e.steering.dotc(&u.steering).norm_sqr();
    if overlap == 0.0 {
        return cfg.p_max;
    }
    let (_, thr_e) = thresholds(rho, cfg);
    (thr_e * cfg.n_antennas as f64 / overlap).min(cfg.p_max)
}

/// MRT information beam at [`mrt_power_cap`], with the remaining budget
/// spent on sensing toward the target up to the eavesdropper ceiling.
pub fn mrt_slot(rho: &Position, cfg: &ScenarioConfig) -> SlotBeam {
    let m = cfg.n_antennas as f64;
    let u = Link::new(rho, Node::User, cfg);
    let e = Link::new(rho, Node::Eve, cfg);
    let t = Link::new(rho, Node::Target, cfg);
    let p_info = mrt_power_cap(rho, cfg);
    let beam = &u.steering * Complex64::new((p_info / m).sqrt(), 0.0);
    let left = (cfg.p_max - p_info).max(0.0);
    let p_sense = if cfg.has_eve_ceiling() {
        let (_, thr_e) = thresholds(rho, cfg);
        let leak_info = e.steering.dotc(&beam).norm_sqr();
        let overlap = e.steering.dotc(&t.steering).norm_sqr();
        let room = (thr_e - leak_info).max(0.0);
        if overlap > 0.0 {
            left.min(room * m / overlap)
        } else {
            left
        }
    } else {
        left
    };
    SlotBeam::from_vector(beam, scale(&outer(&t.steering), p_sense / m))
}

/// Fixed MRT plan on the straight line, then the trajectory subproblem.
pub fn traj_mrt(cfg: &ScenarioConfig, stop: &AoStop) -> Result<SchemeResult> {
    cfg.validate()?;
    let line = Trajectory::straight_line(cfg);
    let plan = BeamPlan {
        slots: line.positions.par_iter().map(|rho| mrt_slot(rho, cfg)).collect(),
    };
    let start = average_secrecy(&line, &plan, cfg);
    let report = check_feasibility(&line, &plan, cfg, 1e-6)?;
    let mut rounds = vec![RoundRecord {
        round: 0,
        clamped: start.clamped,
        unclamped: start.unclamped,
        residuals: report.worst,
        bf_iterations: 0,
        traj_accepted: 0,
        traj_rejected: 0,
        bf_seconds: 0.0,
        traj_seconds: 0.0,
    }];
    let t0 = std::time::Instant::now();
    let res = run_trajectory(&plan, &line, cfg, &stop.trajectory)?;
    if let TrajStatus::Infeasible { slots } = &res.status {
        warn!("traj_mrt plan violates the beampattern constraints at slots {slots:?}");
    }
    let rate = average_secrecy(&res.trajectory, &plan, cfg);
    let after = check_feasibility(&res.trajectory, &plan, cfg, 1e-6)?;
    rounds.push(RoundRecord {
        round: 1,
        clamped: rate.clamped,
        unclamped: rate.unclamped,
        residuals: after.worst,
        bf_iterations: 0,
        traj_accepted: res.trace.accepted,
        traj_rejected: res.trace.rejected,
        bf_seconds: 0.0,
        traj_seconds: t0.elapsed().as_secs_f64(),
    });
    SchemeResult::assemble(SchemeId::TrajMrt, res.trajectory, plan, AOTrace { rounds }, cfg)
}

/// Full alternation with the eavesdropper beampattern ceiling removed,
/// started from the proposed design, which is feasible for it. When the
/// proposed design is infeasible the open scenario is solved from scratch.
pub fn no_sensing_security(cfg: &ScenarioConfig, stop: &AoStop) -> Result<SchemeResult> {
    match proposed(cfg, stop) {
        Ok(start) => no_sensing_security_from(cfg, stop, &start),
        Err(Error::SlotInfeasible { .. }) => open_from_scratch(cfg, stop),
        Err(e) => Err(e),
    }
}

pub fn no_sensing_security_from(cfg: &ScenarioConfig, stop: &AoStop, start: &SchemeResult) -> Result<SchemeResult> {
    let open = SchemeId::NoSensingSecurity.scenario(cfg);
    let res = ao::run_from(start.trajectory.clone(), start.plan.clone(), &open, stop)?;
    SchemeResult::assemble(SchemeId::NoSensingSecurity, res.trajectory, res.plan, res.trace, &open)
}

fn open_from_scratch(cfg: &ScenarioConfig, stop: &AoStop) -> Result<SchemeResult> {
    let open = SchemeId::NoSensingSecurity.scenario(cfg);
    let res = ao::run(&open, stop)?;
    SchemeResult::assemble(SchemeId::NoSensingSecurity, res.trajectory, res.plan, res.trace, &open)
}

pub fn run_scheme(id: SchemeId, cfg: &ScenarioConfig, stop: &AoStop) -> Result<SchemeResult> {
    match id {
        SchemeId::Proposed => proposed(cfg, stop),
        SchemeId::StraightFlightBf => straight_flight_bf(cfg, stop),
        SchemeId::TrajMrt => traj_mrt(cfg, stop),
        SchemeId::NoSensingSecurity => no_sensing_security(cfg, stop),
    }
}

/// Run each scheme of `ids` in order, computing the proposed design at most
/// once when it succeeds. Errors are returned per scheme.
pub fn run_schemes(ids: &[SchemeId], cfg: &ScenarioConfig, stop: &AoStop) -> Vec<(SchemeId, Result<SchemeResult>)> {
    enum Base {
        NotRun,
        Ready(Box<SchemeResult>),
        Failed,
    }
    let mut base = Base::NotRun;
    let mut out = Vec::with_capacity(ids.len());
    for &id in ids {
        let r = match (id, &base) {
            (SchemeId::Proposed, Base::Ready(p)) => Ok((**p).clone()),
            (SchemeId::Proposed, _) => {
                let r = proposed(cfg, stop);
                base = match &r {
                    Ok(p) => Base::Ready(Box::new(p.clone())),
                    Err(_) => Base::Failed,
                };
                r
            }
            (SchemeId::NoSensingSecurity, Base::NotRun) => {
                match proposed(cfg, stop) {
                    Ok(p) => {
                        let r = no_sensing_security_from(cfg, stop, &p);
                        base = Base::Ready(Box::new(p));
                        r
                    }
                    Err(Error::SlotInfeasible { .. }) => {
                        base = Base::Failed;
                        open_from_scratch(cfg, stop)
                    }
                    Err(e) => Err(e),
                }
            }
            (SchemeId::NoSensingSecurity, Base::Ready(p)) => no_sensing_security_from(cfg, stop, p),
            (SchemeId::NoSensingSecurity, Base::Failed) => open_from_scratch(cfg, stop),
            (other, _) => run_scheme(other, cfg, stop),
        };
        out.push((id, r));
    }
    out
}

/// Expected orderings between schemes that are violated by more than `tol`;
/// each violation is also logged as a warning.
pub fn dominance_violations(results: &[SchemeResult], tol: f64) -> Vec<(SchemeId, SchemeId)> {
    let rate = |id: SchemeId| results.iter().find(|r| r.scheme == id).map(|r| r.rate.clamped);
    let pairs = [
        (SchemeId::NoSensingSecurity, SchemeId::Proposed),
        (SchemeId::Proposed, SchemeId::StraightFlightBf),
        (SchemeId::Proposed, SchemeId::TrajMrt),
    ];
    pairs
        .into_iter()
        .filter(|(hi, lo)| match (rate(*hi), rate(*lo)) {
            (Some(a), Some(b)) if a + tol < b => {
                warn!("{hi} ({a:.4}) below {lo} ({b:.4})");
                true
            }
            _ => false,
        })
        .collect()
}
