//! End-to-end acceptance checks. Each test prints one PASS/FAIL line.

use std::fs;
use std::io::Write;
use std::path::Path;
use std::sync::OnceLock;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use secure_isac::ao::{self, AoStop};
use secure_isac::baselines::SchemeId;
use secure_isac::beamforming::{rank_one_reconstruct, surrogate_coeffs, surrogate_objective, true_objective};
use secure_isac::experiments::{
    cmd_beampattern, cmd_run, cmd_sweep_antennas, GridSpec, PointKind, RunManifest, RunStatus, SweepRow, SweepSpec,
};
use secure_isac::linalg::{min_eigenvalue, outer, quad_form, scale, second_to_first_eig_ratio, trace_re, zeros};
use secure_isac::metrics::{
    beampattern_with_steering, big_xi_closed_form, check_feasibility, eta_closed_form, xi_closed_form, MatrixPolar,
};
use secure_isac::scenario::{distance, steering_vector, Link, Node};
use secure_isac::trajectory::{central_difference, compute_gradients, linearized_sensing_constraints};
use secure_isac::{BeamPlan, Complex64, ComplexMatrix, ComplexVector, Position, ScenarioConfig, SlotBeam, Trajectory};

/// Writes to the stderr handle, which the test harness does not capture.
fn report(n: usize, name: &str, pass: bool, detail: String) {
    let line = format!("criterion {n} ({name}): {} {detail}\n", if pass { "PASS" } else { "FAIL" });
    let _ = std::io::stderr().write_all(line.as_bytes());
    assert!(pass, "criterion {n} ({name}) failed: {detail}");
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
}

fn vrel(a: &Position, b: &Position) -> f64 {
    (a - b).norm() / a.norm().max(b.norm()).max(1e-300)
}

fn random_psd(rng: &mut ChaCha8Rng, m: usize, power: f64) -> ComplexMatrix {
    let rank = rng.gen_range(1..=m);
    let mut x = zeros::<f64>(m);
    for _ in 0..rank {
        let v = ComplexVector::from_fn(m, |_, _| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
        x += outer(&v);
    }
    let tr = trace_re(&x);
    scale(&x, power / tr)
}

fn random_point(rng: &mut ChaCha8Rng) -> Position {
    Position::new(rng.gen_range(200.0..400.0), rng.gen_range(400.0..600.0))
}

fn random_geometry(rng: &mut ChaCha8Rng) -> ScenarioConfig {
    let mut p = || [rng.gen_range(150.0..450.0), rng.gen_range(350.0..650.0)];
    ScenarioConfig {
        s_user: p(),
        s_target: p(),
        s_eve: p(),
        ..ScenarioConfig::default()
    }
}

#[test]
fn criterion_1_closed_forms_match_quadratic_forms() {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let m = rng.gen_range(2..=8);
        let cfg = random_geometry(&mut rng).with_antennas(m);
        let rho = random_point(&mut rng);
        let pw = rng.gen_range(0.0..1.0);
        let b = random_psd(&mut rng, m, pw);
        let a = random_psd(&mut rng, m, 1.0 - pw);
        let e = &b + &a;
        let (ep, ap) = (MatrixPolar::from_matrix(&e), MatrixPolar::from_matrix(&a));
        for node in [Node::User, Node::Eve, Node::Target] {
            let s = cfg.node_pos(node);
            let phi = steering_vector(&rho, &s, cfg.altitude, m);
            let d = distance(&rho, &s, cfg.altitude);
            let noise = cfg.sigma2 / cfg.beta0 * d * d;
            worst = worst
                .max(rel(eta_closed_form(&ep, &rho, &s, &cfg), quad_form(&e, &phi) + noise))
                .max(rel(xi_closed_form(&ap, &rho, &s, &cfg), quad_form(&a, &phi) + noise))
                .max(rel(big_xi_closed_form(&ep, &rho, &s, &cfg), beampattern_with_steering(&phi, &e)));
        }
    }
    let secs = t0.elapsed().as_secs_f64();
    report(
        1,
        "closed forms",
        worst <= 1e-10 && secs < 5.0,
        format!("max rel err {worst:.2e}, {secs:.2}s"),
    );
}

#[test]
fn criterion_2_gradients_match_central_differences() {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut worst: f64 = 0.0;
    let mut failures = 0;
    for _ in 0..100 {
        let cfg = ScenarioConfig::default();
        let m = cfg.n_antennas;
        let rho = random_point(&mut rng);
        let slot = SlotBeam {
            info: random_psd(&mut rng, m, 0.6),
            sense: random_psd(&mut rng, m, 0.4),
            info_vector: None,
        };
        let (ep, ap) = (MatrixPolar::from_matrix(&slot.total()), MatrixPolar::from_matrix(&slot.sense));
        let plan = BeamPlan { slots: vec![slot] };
        let grads = match compute_gradients(&Trajectory::new(vec![rho]), &plan, &cfg) {
            Ok(g) => g,
            Err(e) => {
                println!("runtime gradient check rejected {rho:?}: {e}");
                failures += 1;
                continue;
            }
        };
        let g = &grads.slots[0];
        let rows = linearized_sensing_constraints(&grads, &cfg);
        for (node, ng) in [(Node::User, &g.user), (Node::Eve, &g.eve), (Node::Target, &g.target)] {
            let s = cfg.node_pos(node);
            let fd_eta = central_difference(|r| eta_closed_form(&ep, r, &s, &cfg), &rho);
            let fd_xi = central_difference(|r| xi_closed_form(&ap, r, &s, &cfg), &rho);
            let fd_big = central_difference(|r| big_xi_closed_form(&ep, r, &s, &cfg), &rho);
            let fd_log = central_difference(
                |r| (eta_closed_form(&ep, r, &s, &cfg) / xi_closed_form(&ap, r, &s, &cfg)).log2(),
                &rho,
            );
            let fd_ratio = central_difference(
                |r| {
                    let d = distance(r, &s, cfg.altitude);
                    big_xi_closed_form(&ep, r, &s, &cfg) / (d * d)
                },
                &rho,
            );
            worst = worst
                .max(vrel(&(ng.offset * ng.iota), &fd_eta))
                .max(vrel(&(ng.offset * ng.varsigma), &fd_xi))
                .max(vrel(&ng.tau, &fd_big))
                .max(vrel(&ng.log_ratio_gradient(), &fd_log));
            let row = match node {
                Node::Target => Some(rows[0].target),
                Node::Eve => rows[0].eve,
                Node::User => None,
            };
            if let Some(row) = row {
                worst = worst.max(vrel(&row.grad, &fd_ratio));
            }
        }
        worst = worst.max(vrel(&g.varrho_u, &g.user.log_ratio_gradient()));
        worst = worst.max(vrel(&g.varrho_e, &g.eve.log_ratio_gradient()));
    }
    let secs = t0.elapsed().as_secs_f64();
    report(
        2,
        "gradient suite",
        failures == 0 && worst <= 1e-4 && secs < 10.0,
        format!("max rel err {worst:.2e}, {failures} rejected points, {secs:.2}s"),
    );
}

#[test]
fn criterion_3_rank_one_reconstruction() {
    let cfg = ScenarioConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let mut worst_ratio: f64 = 0.0;
    let mut worst_eig: f64 = 0.0;
    let mut worst_pres: f64 = 0.0;
    let mut worst_sur: f64 = 0.0;
    for _ in 0..100 {
        let rho = random_point(&mut rng);
        let pw = rng.gen_range(0.05..0.95);
        let b = random_psd(&mut rng, 4, pw);
        let a = random_psd(&mut rng, 4, 1.0 - pw);
        let r = rank_one_reconstruct(&b, &a, &rho, &cfg);
        let tr = trace_re(&(&b + &a));
        worst_ratio = worst_ratio.max(second_to_first_eig_ratio(&r.info));
        worst_eig = worst_eig.max(-min_eigenvalue(&r.sense) / tr);
        let gu = Link::new(&rho, Node::User, &cfg).channel(cfg.beta0);
        let phi_t = Link::new(&rho, Node::Target, &cfg).steering;
        let phi_e = Link::new(&rho, Node::Eve, &cfg).steering;
        let (e0, e1) = (&b + &a, &r.info + &r.sense);
        worst_pres = worst_pres
            .max(rel(quad_form(&r.info, &gu), quad_form(&b, &gu)))
            .max(rel(quad_form(&r.sense, &gu), quad_form(&a, &gu)))
            .max(rel(quad_form(&e1, &phi_t), quad_form(&e0, &phi_t)))
            .max(rel(quad_form(&e1, &phi_e), quad_form(&e0, &phi_e)))
            .max(rel(trace_re(&e1), trace_re(&e0)));
        let c = surrogate_coeffs(&rho, &b, &a, &cfg);
        worst_sur = worst_sur.max(rel(
            surrogate_objective(&r.info, &r.sense, &c, &rho, &cfg),
            surrogate_objective(&b, &a, &c, &rho, &cfg),
        ));
    }
    let pass = worst_ratio <= 1e-6 && worst_eig <= 1e-9 && worst_pres <= 1e-9 && worst_sur <= 1e-9;
    report(
        3,
        "rank-one reconstruction",
        pass,
        format!(
            "eig ratio {worst_ratio:.2e}, neg eig {worst_eig:.2e}, preserved terms {worst_pres:.2e}, surrogate {worst_sur:.2e}"
        ),
    );
}

#[test]
fn criterion_4_surrogate_is_tangent_lower_bound() {
    let cfg = ScenarioConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let mut tangency: f64 = 0.0;
    let mut violation: f64 = f64::NEG_INFINITY;
    for _ in 0..500 {
        let rho = random_point(&mut rng);
        let p = rng.gen_range(0.0..1.0);
        let (bl, al) = (random_psd(&mut rng, 4, p), random_psd(&mut rng, 4, 1.0 - p));
        let c = surrogate_coeffs(&rho, &bl, &al, &cfg);
        tangency = tangency.max((surrogate_objective(&bl, &al, &c, &rho, &cfg) - true_objective(&bl, &al, &rho, &cfg)).abs());
        let q = rng.gen_range(0.0..1.0);
        let (b, a) = (random_psd(&mut rng, 4, q), random_psd(&mut rng, 4, 1.0 - q));
        violation = violation.max(surrogate_objective(&b, &a, &c, &rho, &cfg) - true_objective(&b, &a, &rho, &cfg));
    }
    report(
        4,
        "surrogate soundness",
        tangency <= 1e-10 && violation <= 1e-9,
        format!("tangency gap {tangency:.2e}, max surrogate - true {violation:.2e}"),
    );
}

fn nondecreasing(v: &[f64], tol: f64) -> bool {
    v.windows(2).all(|w| w[1] >= w[0] - tol)
}

#[test]
fn criterion_5_monotone_convergence() {
    let cfg = ScenarioConfig::default();
    let t0 = Instant::now();
    let res = ao::run(&cfg, &AoStop::default()).unwrap();
    let secs = t0.elapsed().as_secs_f64();
    let bf = res.bf_histories.iter().all(|h| nondecreasing(h, 1e-6));
    let traj = res.traj_histories.iter().all(|h| nondecreasing(h, 1e-6));
    let outer = res.trace.is_monotone(1e-6);
    let feas = check_feasibility(&res.trajectory, &res.plan, &cfg, 1e-6).unwrap();
    report(
        5,
        "monotone convergence",
        bf && traj && outer && feas.passes() && secs <= 300.0,
        format!(
            "bf {bf}, trajectory {traj}, outer {outer}, worst residual {:.2e}, final {:.4} bps/Hz after {} rounds, {secs:.1}s",
            feas.worst.max(),
            res.trace.rounds.last().unwrap().clamped,
            res.trace.rounds.len() - 1
        ),
    );
}

/// Proposed and no-security runs on the default scenario, shared by the
/// trajectory and beampattern checks.
fn default_run_dir() -> &'static Path {
    static DIR: OnceLock<tempfile::TempDir> = OnceLock::new();
    DIR.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let m = RunManifest {
            schemes: vec![SchemeId::Proposed, SchemeId::NoSensingSecurity],
            out_dir: dir.path().to_path_buf(),
            ..RunManifest::default()
        };
        let s = cmd_run(&m).unwrap();
        assert!(s.figures_written);
        dir
    })
    .path()
}

fn read_trajectory(dir: &Path, scheme: &str) -> Vec<Position> {
    let mut r = csv::Reader::from_path(dir.join("trajectory.csv")).unwrap();
    r.records()
        .map(|x| x.unwrap())
        .filter(|x| &x[0] == scheme)
        .map(|x| Position::new(x[2].parse().unwrap(), x[3].parse().unwrap()))
        .collect()
}

#[test]
fn criterion_6_trajectory_avoids_the_eavesdropper() {
    let cfg = ScenarioConfig::default();
    let dir = default_run_dir();
    let eve = cfg.node_pos(Node::Eve);
    let line = Trajectory::straight_line(&cfg);
    let d_line = line.min_distance_to(&eve, cfg.altitude);
    let (a, b) = (cfg.rho_init_pos(), cfg.rho_final_pos());
    let dir_ab = (b - a).normalize();
    let normal = Position::new(-dir_ab.y, dir_ab.x);
    let side = |p: &Position| normal.dot(&(p - a));
    let user_side = side(&cfg.node_pos(Node::User)).signum();
    let target_side = side(&cfg.node_pos(Node::Target)).signum();
    let mut detail = format!("straight line {d_line:.2} m;");
    let mut pass = user_side == target_side;
    for scheme in ["proposed", "no_sensing_security"] {
        let traj = Trajectory::new(read_trajectory(dir, scheme));
        let d = traj.min_distance_to(&eve, cfg.altitude);
        let bow = traj.positions.iter().map(|p| side(p) * user_side).sum::<f64>() / traj.len() as f64;
        if scheme == "proposed" {
            pass &= d > d_line;
        }
        pass &= bow > 0.0;
        detail += &format!(" {scheme} min distance {d:.2} m, mean offset toward user/target {bow:.2} m;");
    }
    report(6, "trajectory trend", pass, detail);
}

#[test]
fn criterion_7_beampattern_at_slot_10() {
    let dir = default_run_dir();
    let m = RunManifest {
        schemes: vec![SchemeId::Proposed, SchemeId::NoSensingSecurity],
        out_dir: dir.to_path_buf(),
        ..RunManifest::default()
    };
    let rows = cmd_beampattern(&m, 10, &GridSpec::default()).unwrap();
    let marker = |s: SchemeId, k: PointKind| rows.iter().find(|r| r.scheme == s && r.kind == k).unwrap().clone();
    let t = marker(SchemeId::Proposed, PointKind::Target);
    let e = marker(SchemeId::Proposed, PointKind::Eve);
    let e_open = marker(SchemeId::NoSensingSecurity, PointKind::Eve);
    let floor_ok = t.zeta >= t.threshold.unwrap() - 1e-6;
    let ceiling_ok = e.zeta <= e.threshold.unwrap() + 1e-6;
    let leak = e_open.zeta > e.zeta;
    report(
        7,
        "beampattern trend",
        floor_ok && ceiling_ok && leak,
        format!(
            "target {:.4} >= {:.4}, eve {:.4} <= {:.4}, no-security eve {:.4}",
            t.zeta,
            t.threshold.unwrap(),
            e.zeta,
            e.threshold.unwrap(),
            e_open.zeta
        ),
    );
}

#[test]
fn criterion_8_antenna_sweep_trends() {
    let dir = tempfile::tempdir().unwrap();
    let m = RunManifest {
        seed: 2024,
        out_dir: dir.path().to_path_buf(),
        sweep: SweepSpec {
            antennas: vec![2, 4, 6, 8],
            runs: 20,
            ..SweepSpec::default()
        },
        ..RunManifest::default()
    };
    let t0 = Instant::now();
    let rows = cmd_sweep_antennas(&m).unwrap();
    let secs = t0.elapsed().as_secs_f64();
    let slack = 0.05;
    let mean = |n: usize, s: SchemeId| rows.iter().find(|r| r.antennas == n && r.scheme == s).map(|r: &SweepRow| r.mean).unwrap();
    let mut problems = Vec::new();
    for s in SchemeId::ALL {
        for w in m.sweep.antennas.windows(2) {
            if mean(w[1], s) < mean(w[0], s) - slack {
                problems.push(format!("{s} drops from M={} to M={}", w[0], w[1]));
            }
        }
    }
    for &n in &m.sweep.antennas {
        let p = mean(n, SchemeId::Proposed);
        if mean(n, SchemeId::NoSensingSecurity) < p - slack {
            problems.push(format!("no_sensing_security below proposed at M={n}"));
        }
        for s in [SchemeId::StraightFlightBf, SchemeId::TrajMrt] {
            if p < mean(n, s) - slack {
                problems.push(format!("proposed below {s} at M={n}"));
            }
        }
    }
    for r in &rows {
        println!(
            "  M={} {:<20} mean {:.4} std {:.4} n={} infeasible={}",
            r.antennas,
            r.scheme.name(),
            r.mean,
            r.std,
            r.runs,
            r.infeasible
        );
    }
    let used_all = rows.iter().all(|r| r.runs > 0);
    report(
        8,
        "antenna sweep trends",
        problems.is_empty() && used_all && secs <= 7200.0,
        format!("{secs:.0}s; {}", if problems.is_empty() { "all orderings hold".to_string() } else { problems.join(", ") }),
    );
}

fn csv_bodies(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    out.sort();
    out
}

#[test]
fn criterion_9_determinism() {
    let dirs: Vec<tempfile::TempDir> = (0..2).map(|_| tempfile::tempdir().unwrap()).collect();
    for d in &dirs {
        let m = RunManifest {
            seed: 17,
            out_dir: d.path().to_path_buf(),
            sweep: SweepSpec {
                antennas: vec![2],
                runs: 1,
                ..SweepSpec::default()
            },
            ..RunManifest::default()
        };
        let s = cmd_run(&m).unwrap();
        assert!(s.schemes.iter().all(|x| x.status != RunStatus::Infeasible));
        // inline run, not the stored solutions
        let fresh = RunManifest {
            schemes: vec![SchemeId::Proposed],
            out_dir: d.path().join("beampattern"),
            ..m.clone()
        };
        cmd_beampattern(&fresh, 10, &"21,21".parse().unwrap()).unwrap();
        cmd_sweep_antennas(&RunManifest {
            out_dir: d.path().join("sweep"),
            ..m.clone()
        })
        .unwrap();
    }
    let mut files = 0;
    let mut same = true;
    for sub in ["", "beampattern", "sweep"] {
        let a = csv_bodies(&dirs[0].path().join(sub));
        let b = csv_bodies(&dirs[1].path().join(sub));
        files += a.len();
        same &= !a.is_empty() && a == b;
    }
    report(9, "determinism", same && files == 6, format!("{files} CSV files compared"));
}
