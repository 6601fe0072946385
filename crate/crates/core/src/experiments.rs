//! Experiment manifests, deterministic Monte Carlo placement and CSV/JSON
//! emission for the trajectory, power, convergence, beampattern and antenna
//! sweep results.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use log::{info, warn};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ao::AoStop;
use crate::baselines::{dominance_violations, run_schemes, SchemeId, SchemeResult};
use crate::beamforming::thresholds;
use crate::metrics::{beampattern_with_steering, Residuals};
use crate::scenario::{steering_vector, Node};
use crate::{BeamPlan, Error, Position, Result, ScenarioConfig, SlotBeam, Trajectory};

pub const SUMMARY_FILE: &str = "summary.json";
pub const TRAJECTORY_FILE: &str = "trajectory.csv";
pub const POWER_FILE: &str = "power.csv";
pub const TRACE_FILE: &str = "trace.csv";
pub const SOLUTIONS_FILE: &str = "solutions.json";
pub const BEAMPATTERN_FILE: &str = "beampattern.csv";
pub const SWEEP_FILE: &str = "sweep.csv";
pub const SWEEP_RAW_FILE: &str = "sweep_raw.csv";

/// Minimum pairwise distance between sampled ground nodes.
pub const MIN_NODE_SEPARATION: f64 = 1.0;
const MAX_PLACEMENT_ATTEMPTS: usize = 10_000;

/// Axis-aligned ground rectangle `x[0]..=x[1]` by `y[0]..=y[1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub x: [f64; 2],
    pub y: [f64; 2],
}

impl Default for Region {
    fn default() -> Self {
        Self {
            x: [200.0, 400.0],
            y: [400.0, 600.0],
        }
    }
}

impl Region {
    pub fn validate(&self) -> Result<()> {
        let ok = |r: [f64; 2]| r[0].is_finite() && r[1].is_finite() && r[1] > r[0];
        if ok(self.x) && ok(self.y) {
            Ok(())
        } else {
            Err(Error::Manifest(format!("degenerate region {:?} x {:?}", self.x, self.y)))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepSpec {
    pub antennas: Vec<usize>,
    pub runs: usize,
    pub region: Region,
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self {
            antennas: vec![2, 4, 6, 8],
            runs: 20,
            region: Region::default(),
        }
    }
}

/// On-disk form of a manifest: a scenario plus optional manifest keys.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ManifestFile {
    #[serde(flatten)]
    pub scenario: ScenarioConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schemes: Option<Vec<SchemeId>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSpec>,
}

#[derive(Debug, Clone)]
pub struct RunManifest {
    pub scenario_path: Option<PathBuf>,
    pub scenario: ScenarioConfig,
    pub schemes: Vec<SchemeId>,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub sweep: SweepSpec,
    pub stop: AoStop,
}

impl Default for RunManifest {
    fn default() -> Self {
        Self {
            scenario_path: None,
            scenario: ScenarioConfig::default(),
            schemes: SchemeId::ALL.to_vec(),
            seed: 0,
            out_dir: PathBuf::from("out"),
            sweep: SweepSpec::default(),
            stop: AoStop::default(),
        }
    }
}

impl RunManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let file: ManifestFile = serde_json::from_str(&fs::read_to_string(path)?)?;
        let mut m = Self::from_file(file);
        m.scenario_path = Some(path.to_path_buf());
        Ok(m)
    }

    pub fn from_file(file: ManifestFile) -> Self {
        let d = Self::default();
        Self {
            scenario_path: None,
            scenario: file.scenario,
            schemes: file.schemes.unwrap_or(d.schemes),
            seed: file.seed.unwrap_or(d.seed),
            out_dir: file.out.unwrap_or(d.out_dir),
            sweep: file.sweep.unwrap_or(d.sweep),
            stop: d.stop,
        }
    }

    /// Schemes with repeats removed, first occurrence kept.
    pub fn scheme_list(&self) -> Vec<SchemeId> {
        let mut out = Vec::new();
        for &id in &self.schemes {
            if !out.contains(&id) {
                out.push(id);
            }
        }
        out
    }

    fn prepare_out(&self) -> Result<()> {
        fs::create_dir_all(&self.out_dir)?;
        Ok(())
    }
}

/// Comma separated scheme names.
pub fn parse_schemes(s: &str) -> Result<Vec<SchemeId>> {
    s.split(',').filter(|t| !t.trim().is_empty()).map(SchemeId::from_str).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Ok,
    /// The scheme finished but its design violates some constraint.
    ConstraintViolations,
    /// Beamforming found no feasible point at some slots.
    Infeasible,
}

impl RunStatus {
    fn name(self) -> &'static str {
        match self {
            RunStatus::Ok => "ok",
            RunStatus::ConstraintViolations => "constraint_violations",
            RunStatus::Infeasible => "infeasible",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SchemeSummary {
    pub scheme: SchemeId,
    pub status: RunStatus,
    pub clamped: Option<f64>,
    pub unclamped: Option<f64>,
    pub residuals: Option<Residuals>,
    pub infeasible_slots: Vec<usize>,
    pub rounds: usize,
    pub min_eve_distance: Option<f64>,
    pub seconds: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunSummary {
    pub seed: u64,
    pub scenario: ScenarioConfig,
    pub schemes: Vec<SchemeSummary>,
    pub dominance_warnings: Vec<String>,
    pub figures_written: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SchemeSolution {
    pub scheme: SchemeId,
    pub trajectory: Trajectory,
    pub plan: BeamPlan,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Solutions {
    pub scenario: ScenarioConfig,
    pub schemes: Vec<SchemeSolution>,
}

#[derive(Debug, Serialize)]
struct TrajectoryRow {
    scheme: &'static str,
    slot: usize,
    x: f64,
    y: f64,
}

#[derive(Debug, Serialize)]
struct PowerRow {
    scheme: &'static str,
    slot: usize,
    info_power: f64,
    sense_power: f64,
}

#[derive(Debug, Serialize)]
struct TraceRow {
    scheme: &'static str,
    round: usize,
    clamped: f64,
    unclamped: f64,
    max_residual: f64,
    bf_iterations: usize,
    traj_accepted: usize,
    traj_rejected: usize,
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

fn summarize(id: SchemeId, res: &Result<SchemeResult>, cfg: &ScenarioConfig, seconds: f64) -> SchemeSummary {
    match res {
        Ok(r) => SchemeSummary {
            scheme: id,
            status: if r.feasible() {
                RunStatus::Ok
            } else {
                RunStatus::ConstraintViolations
            },
            clamped: Some(r.rate.clamped),
            unclamped: Some(r.rate.unclamped),
            residuals: Some(r.residuals),
            infeasible_slots: r.infeasible_slots.clone(),
            rounds: r.trace.rounds.len().saturating_sub(1),
            min_eve_distance: Some(r.trajectory.min_distance_to(&cfg.node_pos(Node::Eve), cfg.altitude)),
            seconds,
        },
        Err(e) => SchemeSummary {
            scheme: id,
            status: RunStatus::Infeasible,
            clamped: None,
            unclamped: None,
            residuals: None,
            infeasible_slots: match e {
                Error::SlotInfeasible { slots } => slots.clone(),
                _ => Vec::new(),
            },
            rounds: 0,
            min_eve_distance: None,
            seconds,
        },
    }
}

/// Run the manifest's schemes one after another, timing each; only
/// `SlotInfeasible` is kept as a per-scheme outcome.
fn run_timed(m: &RunManifest, cfg: &ScenarioConfig) -> Result<Vec<(SchemeId, Result<SchemeResult>, f64)>> {
    let ids = m.scheme_list();
    let t0 = Instant::now();
    let results = run_schemes(&ids, cfg, &m.stop);
    let total = t0.elapsed().as_secs_f64();
    let n = results.len().max(1) as f64;
    let mut out = Vec::with_capacity(results.len());
    for (id, r) in results {
        let r = match r {
            Err(Error::SlotInfeasible { slots }) => Err(Error::SlotInfeasible { slots }),
            Err(e) => return Err(e),
            ok => ok,
        };
        let secs = match &r {
            Ok(res) => res.trace.rounds.iter().map(|x| x.bf_seconds + x.traj_seconds).sum(),
            Err(_) => total / n,
        };
        out.push((id, r, secs));
    }
    Ok(out)
}

/// Run every scheme of the manifest on its scenario and write
/// `trajectory.csv`, `power.csv`, `trace.csv`, `solutions.json` and
/// `summary.json`. When some scheme is infeasible only the summary is
/// written.
pub fn cmd_run(m: &RunManifest) -> Result<RunSummary> {
    m.scenario.validate()?;
    m.prepare_out()?;
    let cfg = &m.scenario;
    let results = run_timed(m, cfg)?;

    let schemes: Vec<SchemeSummary> = results.iter().map(|(id, r, s)| summarize(*id, r, cfg, *s)).collect();
    let done: Vec<SchemeResult> = results.into_iter().filter_map(|(_, r, _)| r.ok()).collect();
    let dominance_warnings = dominance_violations(&done, 1e-4)
        .into_iter()
        .map(|(hi, lo)| format!("{hi} below {lo}"))
        .collect();
    let figures = !schemes.is_empty() && schemes.iter().all(|s| s.status != RunStatus::Infeasible);

    if figures {
        let mut traj = Vec::new();
        let mut power = Vec::new();
        let mut trace = Vec::new();
        for r in &done {
            let name = r.scheme.name();
            for (k, (p, b)) in r.trajectory.positions.iter().zip(&r.plan.slots).enumerate() {
                traj.push(TrajectoryRow {
                    scheme: name,
                    slot: k + 1,
                    x: p.x,
                    y: p.y,
                });
                power.push(PowerRow {
                    scheme: name,
                    slot: k + 1,
                    info_power: b.info_power(),
                    sense_power: b.sense_power(),
                });
            }
            for rec in &r.trace.rounds {
                trace.push(TraceRow {
                    scheme: name,
                    round: rec.round,
                    clamped: rec.clamped,
                    unclamped: rec.unclamped,
                    max_residual: rec.residuals.max(),
                    bf_iterations: rec.bf_iterations,
                    traj_accepted: rec.traj_accepted,
                    traj_rejected: rec.traj_rejected,
                });
            }
        }
        write_csv(&m.out_dir.join(TRAJECTORY_FILE), &traj)?;
        write_csv(&m.out_dir.join(POWER_FILE), &power)?;
        write_csv(&m.out_dir.join(TRACE_FILE), &trace)?;
        let sol = Solutions {
            scenario: cfg.clone(),
            schemes: done
                .iter()
                .map(|r| SchemeSolution {
                    scheme: r.scheme,
                    trajectory: r.trajectory.clone(),
                    plan: r.plan.clone(),
                })
                .collect(),
        };
        fs::write(m.out_dir.join(SOLUTIONS_FILE), serde_json::to_string(&sol)?)?;
    }

    let summary = RunSummary {
        seed: m.seed,
        scenario: cfg.clone(),
        schemes,
        dominance_warnings,
        figures_written: figures,
    };
    fs::write(m.out_dir.join(SUMMARY_FILE), serde_json::to_string_pretty(&summary)?)?;
    Ok(summary)
}

/// Rectangular ground grid; a single point along an axis sits at the lower
/// bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub nx: usize,
    pub ny: usize,
    pub region: Region,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            nx: 41,
            ny: 41,
            region: Region::default(),
        }
    }
}

impl GridSpec {
    pub fn points(&self) -> Vec<Position> {
        let axis = |n: usize, r: [f64; 2]| -> Vec<f64> {
            match n {
                1 => vec![r[0]],
                _ => (0..n).map(|i| r[0] + (r[1] - r[0]) * i as f64 / (n - 1) as f64).collect(),
            }
        };
        let xs = axis(self.nx, self.region.x);
        let ys = axis(self.ny, self.region.y);
        ys.iter()
            .flat_map(|&y| xs.iter().map(move |&x| Position::new(x, y)))
            .collect()
    }
}

impl FromStr for GridSpec {
    type Err = Error;

    /// `nx,ny` or `nx,ny,x0,x1,y0,y1`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Manifest(format!("grid `{s}` is not nx,ny[,x0,x1,y0,y1]"));
        let parts: Vec<&str> = s.split(',').map(str::trim).collect();
        if parts.len() != 2 && parts.len() != 6 {
            return Err(bad());
        }
        let nx: usize = parts[0].parse().map_err(|_| bad())?;
        let ny: usize = parts[1].parse().map_err(|_| bad())?;
        if nx == 0 || ny == 0 {
            return Err(bad());
        }
        let mut region = Region::default();
        if parts.len() == 6 {
            let v: Vec<f64> = parts[2..]
                .iter()
                .map(|p| p.parse().map_err(|_| bad()))
                .collect::<Result<_>>()?;
            region = Region {
                x: [v[0], v[1]],
                y: [v[2], v[3]],
            };
            let ok = |r: [f64; 2]| r[0].is_finite() && r[1].is_finite() && r[1] >= r[0];
            if !ok(region.x) || !ok(region.y) {
                return Err(bad());
            }
        }
        Ok(Self { nx, ny, region })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PointKind {
    Grid,
    User,
    Target,
    Eve,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeamRow {
    pub scheme: SchemeId,
    pub kind: PointKind,
    pub x: f64,
    pub y: f64,
    pub zeta: f64,
    /// Floor at the target, ceiling at the eavesdropper.
    pub threshold: Option<f64>,
}

/// Beampattern gain of `slot` transmitted from `rho` over `grid`, followed by
/// one marker row per ground node.
pub fn beampattern_rows(
    scheme: SchemeId,
    rho: &Position,
    slot: &SlotBeam,
    grid: &GridSpec,
    cfg: &ScenarioConfig,
) -> Vec<BeamRow> {
    let e = slot.total();
    let zeta = |p: &Position| beampattern_with_steering(&steering_vector(rho, p, cfg.altitude, cfg.n_antennas), &e);
    let (thr_t, thr_e) = thresholds(rho, cfg);
    let mut rows: Vec<BeamRow> = grid
        .points()
        .iter()
        .map(|p| BeamRow {
            scheme,
            kind: PointKind::Grid,
            x: p.x,
            y: p.y,
            zeta: zeta(p),
            threshold: None,
        })
        .collect();
    for (kind, node, thr) in [
        (PointKind::User, Node::User, None),
        (PointKind::Target, Node::Target, Some(thr_t)),
        (PointKind::Eve, Node::Eve, cfg.has_eve_ceiling().then_some(thr_e)),
    ] {
        let p = cfg.node_pos(node);
        rows.push(BeamRow {
            scheme,
            kind,
            x: p.x,
            y: p.y,
            zeta: zeta(&p),
            threshold: thr,
        });
    }
    rows
}

#[derive(Debug, Serialize)]
struct BeamCsvRow {
    scheme: &'static str,
    kind: &'static str,
    x: f64,
    y: f64,
    zeta: f64,
    threshold: Option<f64>,
}

fn kind_name(k: PointKind) -> &'static str {
    match k {
        PointKind::Grid => "grid",
        PointKind::User => "user",
        PointKind::Target => "target",
        PointKind::Eve => "eve",
    }
}

/// Solutions stored by an earlier [`cmd_run`] in the output directory, if
/// they were computed for the same scenario.
pub fn load_solutions(m: &RunManifest) -> Result<Option<Solutions>> {
    let path = m.out_dir.join(SOLUTIONS_FILE);
    if !path.exists() {
        return Ok(None);
    }
    let sol: Solutions = serde_json::from_str(&fs::read_to_string(path)?)?;
    Ok((sol.scenario == m.scenario).then_some(sol))
}

/// Write `beampattern.csv` for 1-based `slot`, using stored solutions when
/// the output directory has matching ones and running the schemes otherwise.
pub fn cmd_beampattern(m: &RunManifest, slot: usize, grid: &GridSpec) -> Result<Vec<BeamRow>> {
    let cfg = &m.scenario;
    cfg.validate()?;
    if slot == 0 || slot > cfg.n_slots {
        return Err(Error::Manifest(format!("slot {slot} outside 1..={}", cfg.n_slots)));
    }
    m.prepare_out()?;
    let ids = m.scheme_list();
    let stored = load_solutions(m)?.filter(|s| ids.iter().all(|id| s.schemes.iter().any(|x| x.scheme == *id)));
    let solutions: Vec<SchemeSolution> = match stored {
        Some(s) => ids
            .iter()
            .filter_map(|id| s.schemes.iter().find(|x| x.scheme == *id).cloned())
            .collect(),
        None => {
            let mut out = Vec::new();
            for (id, r, _) in run_timed(m, cfg)? {
                match r {
                    Ok(r) => out.push(SchemeSolution {
                        scheme: id,
                        trajectory: r.trajectory,
                        plan: r.plan,
                    }),
                    Err(e) => warn!("{id}: {e}"),
                }
            }
            out
        }
    };
    let k = slot - 1;
    let rows: Vec<BeamRow> = solutions
        .iter()
        .flat_map(|s| {
            let scfg = s.scheme.scenario(cfg);
            beampattern_rows(s.scheme, &s.trajectory.positions[k], &s.plan.slots[k], grid, &scfg)
        })
        .collect();
    let csv_rows: Vec<BeamCsvRow> = rows
        .iter()
        .map(|r| BeamCsvRow {
            scheme: r.scheme.name(),
            kind: kind_name(r.kind),
            x: r.x,
            y: r.y,
            zeta: r.zeta,
            threshold: r.threshold,
        })
        .collect();
    write_csv(&m.out_dir.join(BEAMPATTERN_FILE), &csv_rows)?;
    Ok(rows)
}

/// Ground nodes of one Monte Carlo draw.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Placement {
    pub user: [f64; 2],
    pub target: [f64; 2],
    pub eve: [f64; 2],
}

impl Placement {
    pub fn apply(&self, cfg: &ScenarioConfig) -> ScenarioConfig {
        ScenarioConfig {
            s_user: self.user,
            s_target: self.target,
            s_eve: self.eve,
            ..cfg.clone()
        }
    }
}

/// Uniform placement of user, target and eavesdropper in `region` for draw
/// `run`, from a stream seeded by `seed ^ run`; draws with two nodes closer
/// than [`MIN_NODE_SEPARATION`] are redrawn.
pub fn sample_placement(seed: u64, run: usize, region: &Region) -> Result<Placement> {
    region.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ run as u64);
    let mut point = || [rng.gen_range(region.x[0]..=region.x[1]), rng.gen_range(region.y[0]..=region.y[1])];
    let apart = |a: [f64; 2], b: [f64; 2]| (a[0] - b[0]).hypot(a[1] - b[1]) >= MIN_NODE_SEPARATION;
    for _ in 0..MAX_PLACEMENT_ATTEMPTS {
        let (u, t, e) = (point(), point(), point());
        if apart(u, t) && apart(u, e) && apart(t, e) {
            return Ok(Placement {
                user: u,
                target: t,
                eve: e,
            });
        }
    }
    Err(Error::Manifest(format!(
        "region {:?} x {:?} too small to separate three nodes",
        region.x, region.y
    )))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRawRow {
    pub run: usize,
    pub antennas: usize,
    pub scheme: SchemeId,
    pub status: RunStatus,
    pub clamped: Option<f64>,
    pub unclamped: Option<f64>,
    pub placement: Placement,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub antennas: usize,
    pub scheme: SchemeId,
    pub mean: f64,
    pub std: f64,
    /// Draws that produced a rate.
    pub runs: usize,
    /// Draws where the scheme was infeasible.
    pub infeasible: usize,
}

#[derive(Debug, Serialize)]
struct SweepCsvRow {
    #[serde(rename = "M")]
    antennas: usize,
    scheme: &'static str,
    mean: f64,
    std: f64,
    runs: usize,
    infeasible: usize,
}

#[derive(Debug, Serialize)]
struct SweepRawCsvRow {
    run: usize,
    #[serde(rename = "M")]
    antennas: usize,
    scheme: &'static str,
    status: &'static str,
    clamped: Option<f64>,
    unclamped: Option<f64>,
    user_x: f64,
    user_y: f64,
    target_x: f64,
    target_y: f64,
    eve_x: f64,
    eve_y: f64,
}

fn sweep_draw(m: &RunManifest, run: usize) -> Result<Vec<SweepRawRow>> {
    let placement = sample_placement(m.seed, run, &m.sweep.region)?;
    let base = placement.apply(&m.scenario);
    let mut rows = Vec::new();
    for &n in &m.sweep.antennas {
        let cfg = base.with_antennas(n);
        cfg.validate()?;
        let t0 = Instant::now();
        for (id, r, _) in run_timed(m, &cfg)? {
            let (status, clamped, unclamped) = match &r {
                Ok(r) if r.feasible() => (RunStatus::Ok, Some(r.rate.clamped), Some(r.rate.unclamped)),
                Ok(r) => (RunStatus::ConstraintViolations, Some(r.rate.clamped), Some(r.rate.unclamped)),
                Err(_) => (RunStatus::Infeasible, None, None),
            };
            rows.push(SweepRawRow {
                run,
                antennas: n,
                scheme: id,
                status,
                clamped,
                unclamped,
                placement,
            });
        }
        info!("draw {run} M={n} done in {:.1}s", t0.elapsed().as_secs_f64());
    }
    Ok(rows)
}

/// Mean and sample standard deviation of the clamped rate per `(M, scheme)`
/// over the draws that produced a rate.
pub fn aggregate_sweep(raw: &[SweepRawRow], schemes: &[SchemeId], antennas: &[usize]) -> Vec<SweepRow> {
    let mut groups: BTreeMap<(usize, SchemeId), (Vec<f64>, usize)> = BTreeMap::new();
    for r in raw {
        let g = groups.entry((r.antennas, r.scheme)).or_default();
        match r.clamped {
            Some(v) => g.0.push(v),
            None => g.1 += 1,
        }
    }
    let mut out = Vec::new();
    for &n in antennas {
        for &id in schemes {
            let Some((vals, infeasible)) = groups.get(&(n, id)) else {
                continue;
            };
            let k = vals.len();
            let mean = if k > 0 { vals.iter().sum::<f64>() / k as f64 } else { f64::NAN };
            let std = if k > 1 {
                (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1) as f64).sqrt()
            } else {
                0.0
            };
            out.push(SweepRow {
                antennas: n,
                scheme: id,
                mean,
                std,
                runs: k,
                infeasible: *infeasible,
            });
        }
    }
    out
}

/// Monte Carlo antenna sweep; writes `sweep.csv` and `sweep_raw.csv`.
pub fn cmd_sweep_antennas(m: &RunManifest) -> Result<Vec<SweepRow>> {
    m.scenario.validate()?;
    m.sweep.region.validate()?;
    if m.sweep.antennas.is_empty() || m.sweep.antennas.contains(&0) {
        return Err(Error::Manifest(format!("antenna list {:?}", m.sweep.antennas)));
    }
    m.prepare_out()?;
    let draws: Vec<Result<Vec<SweepRawRow>>> = (0..m.sweep.runs).into_par_iter().map(|r| sweep_draw(m, r)).collect();
    let raw: Vec<SweepRawRow> = draws.into_iter().collect::<Result<Vec<_>>>()?.into_iter().flatten().collect();

    let ids = m.scheme_list();
    let rows = aggregate_sweep(&raw, &ids, &m.sweep.antennas);
    let csv_rows: Vec<SweepCsvRow> = rows
        .iter()
        .map(|r| SweepCsvRow {
            antennas: r.antennas,
            scheme: r.scheme.name(),
            mean: r.mean,
            std: r.std,
            runs: r.runs,
            infeasible: r.infeasible,
        })
        .collect();
    let raw_rows: Vec<SweepRawCsvRow> = raw
        .iter()
        .map(|r| SweepRawCsvRow {
            run: r.run,
            antennas: r.antennas,
            scheme: r.scheme.name(),
            status: r.status.name(),
            clamped: r.clamped,
            unclamped: r.unclamped,
            user_x: r.placement.user[0],
            user_y: r.placement.user[1],
            target_x: r.placement.target[0],
            target_y: r.placement.target[1],
            eve_x: r.placement.eve[0],
            eve_y: r.placement.eve[1],
        })
        .collect();
    write_csv(&m.out_dir.join(SWEEP_FILE), &csv_rows)?;
    write_csv(&m.out_dir.join(SWEEP_RAW_FILE), &raw_rows)?;
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::identity;
    use crate::metrics::beampattern_gain;

    #[test]
    fn identity_covariance_gives_flat_pattern() {
        let cfg = ScenarioConfig::default();
        let m = cfg.n_antennas;
        let slot = SlotBeam {
            info: identity(m),
            sense: crate::linalg::zeros(m),
            info_vector: None,
        };
        let rows = beampattern_rows(SchemeId::Proposed, &Position::new(300.0, 500.0), &slot, &GridSpec::default(), &cfg);
        assert_eq!(rows.len(), 41 * 41 + 3);
        for r in rows {
            assert!((r.zeta - m as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn single_point_grid_matches_gain() {
        let cfg = ScenarioConfig::default();
        let su = cfg.s_user;
        let grid: GridSpec = format!("1,1,{},{},{},{}", su[0], su[0], su[1], su[1]).parse().unwrap();
        let slot = crate::baselines::mrt_slot(&Position::new(300.0, 450.0), &cfg);
        let rho = Position::new(300.0, 450.0);
        let rows = beampattern_rows(SchemeId::TrajMrt, &rho, &slot, &grid, &cfg);
        let grid_rows: Vec<_> = rows.iter().filter(|r| r.kind == PointKind::Grid).collect();
        assert_eq!(grid_rows.len(), 1);
        let want = beampattern_gain(&rho, &slot, &cfg.node_pos(Node::User), &cfg).unwrap();
        assert!((grid_rows[0].zeta - want).abs() <= 1e-12 * want.max(1.0));
        assert!(rows.iter().any(|r| r.kind == PointKind::Eve && r.threshold.is_some()));
    }

    #[test]
    fn grid_parsing() {
        assert_eq!("3,4".parse::<GridSpec>().unwrap().points().len(), 12);
        assert!("0,4".parse::<GridSpec>().is_err());
        assert!("3,4,1,0,0,1".parse::<GridSpec>().is_err());
        assert!("3,4,5".parse::<GridSpec>().is_err());
    }

    #[test]
    fn placement_is_seeded_per_run() {
        let region = Region::default();
        let a = sample_placement(7, 3, &region).unwrap();
        assert_eq!(a, sample_placement(7, 3, &region).unwrap());
        assert_ne!(a, sample_placement(7, 4, &region).unwrap());
        assert_eq!(sample_placement(7 ^ 3, 0, &region).unwrap(), a);
        for p in [a.user, a.target, a.eve] {
            assert!((200.0..=400.0).contains(&p[0]) && (400.0..=600.0).contains(&p[1]));
        }
    }

    #[test]
    fn degenerate_regions_are_rejected() {
        let flat = Region {
            x: [200.0, 200.0],
            y: [400.0, 600.0],
        };
        assert!(matches!(sample_placement(0, 0, &flat), Err(Error::Manifest(_))));
        let tiny = Region {
            x: [0.0, 0.1],
            y: [0.0, 0.1],
        };
        assert!(matches!(sample_placement(0, 0, &tiny), Err(Error::Manifest(_))));
    }

    #[test]
    fn aggregate_skips_infeasible_draws() {
        let p = sample_placement(0, 0, &Region::default()).unwrap();
        let row = |run, clamped: Option<f64>| SweepRawRow {
            run,
            antennas: 4,
            scheme: SchemeId::Proposed,
            status: if clamped.is_some() {
                RunStatus::Ok
            } else {
                RunStatus::Infeasible
            },
            clamped,
            unclamped: clamped,
            placement: p,
        };
        let raw = [row(0, Some(1.0)), row(1, Some(3.0)), row(2, None)];
        let agg = aggregate_sweep(&raw, &[SchemeId::Proposed], &[4]);
        assert_eq!(agg.len(), 1);
        assert_eq!(agg[0].mean, 2.0);
        assert!((agg[0].std - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!((agg[0].runs, agg[0].infeasible), (2, 1));
    }

    #[test]
    fn manifest_file_overrides_defaults() {
        let json = r#"{"M_antennas": 6, "gamma_e": null, "seed": 9, "schemes": ["traj_mrt"],
                       "sweep": {"runs": 3}}"#;
        let m = RunManifest::from_file(serde_json::from_str(json).unwrap());
        assert_eq!(m.scenario.n_antennas, 6);
        assert!(!m.scenario.has_eve_ceiling());
        assert_eq!(m.scenario.s_user, ScenarioConfig::default().s_user);
        assert_eq!(m.seed, 9);
        assert_eq!(m.schemes, vec![SchemeId::TrajMrt]);
        assert_eq!(m.sweep.runs, 3);
        assert_eq!(m.sweep.antennas, vec![2, 4, 6, 8]);
    }

    #[test]
    fn empty_scheme_set_writes_only_the_summary() {
        let dir = tempfile::tempdir().unwrap();
        let m = RunManifest {
            schemes: Vec::new(),
            out_dir: dir.path().join("nested"),
            ..RunManifest::default()
        };
        let s = cmd_run(&m).unwrap();
        assert!(!s.figures_written);
        let names: Vec<_> = fs::read_dir(&m.out_dir)
            .unwrap()
            .map(|e| e.unwrap().file_name().into_string().unwrap())
            .collect();
        assert_eq!(names, vec![SUMMARY_FILE.to_string()]);
    }

    #[test]
    fn slot_out_of_range_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let m = RunManifest {
            out_dir: dir.path().to_path_buf(),
            ..RunManifest::default()
        };
        assert!(matches!(cmd_beampattern(&m, 0, &GridSpec::default()), Err(Error::Manifest(_))));
        assert!(matches!(cmd_beampattern(&m, 25, &GridSpec::default()), Err(Error::Manifest(_))));
    }
}
