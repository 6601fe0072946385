use super::*;
use crate::linalg::{eigenvalues, identity, min_eigenvalue};
use crate::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn trace_program(m: usize) -> (ConicProgram, PsdId) {
    let mut p = ConicProgram::new(Sense::Maximize);
    let b = p.add_psd_block("B", m);
    p.set_objective(Sense::Maximize, LinearExpr::psd(b, identity(m)));
    p.add_constraint(Constraint::le(LinearExpr::psd(b, identity(m)), 1.0));
    (p, b)
}

#[test]
fn max_trace_under_budget() {
    let (p, b) = trace_program(2);
    assert!(p.has_power_bound());
    let sol = solve(&p, DEFAULT_TOL).unwrap();
    assert_eq!(sol.status, Status::Optimal);
    assert!((sol.objective - 1.0).abs() < 1e-7, "{}", sol.objective);
    assert!(min_eigenvalue(sol.psd(b)) > -1e-12);
    assert!(sol.kkt_gap <= DEFAULT_TOL);
}

#[test]
fn soc_projection_distance() {
    let c = [3.0, 4.0];
    let r = 2.0;
    let mut p = ConicProgram::new(Sense::Minimize);
    let x = p.add_vec_block("x", 2);
    let t = p.add_vec_block("t", 1);
    p.set_objective(Sense::Minimize, LinearExpr::var(t, 0, 1.0));
    p.add_constraint(Constraint::Soc {
        terms: (0..2).map(|i| LinearExpr::var(x, i, 1.0).add_constant(-c[i])).collect(),
        bound: LinearExpr::var(t, 0, 1.0),
    });
    p.add_constraint(Constraint::Soc {
        terms: (0..2).map(|i| LinearExpr::var(x, i, 1.0)).collect(),
        bound: LinearExpr::constant(r),
    });
    let sol = solve(&p, DEFAULT_TOL).unwrap();
    assert_eq!(sol.status, Status::Optimal);
    assert!((sol.objective - 3.0).abs() < 1e-7, "{}", sol.objective);
    let xs = sol.vec(x);
    assert!((xs[0] - 1.2).abs() < 1e-3 && (xs[1] - 1.6).abs() < 1e-3);
}

#[test]
fn min_eigenvalue_oracle_with_complex_coefficients() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..20 {
        let m = rng.gen_range(1..6);
        let a = ComplexMatrix::from_fn(m, m, |_, _| {
            Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
        });
        let c = (&a + a.adjoint()) * Complex64::new(0.5, 0.0);
        let mut p = ConicProgram::new(Sense::Minimize);
        let x = p.add_psd_block("X", m);
        p.set_objective(Sense::Minimize, LinearExpr::psd(x, c.clone()));
        p.add_constraint(Constraint::eq(LinearExpr::psd(x, identity(m)), 1.0));
        let sol = solve(&p, 1e-10).unwrap();
        assert_eq!(sol.status, Status::Optimal);
        let want = eigenvalues(&c)[0];
        assert!((sol.objective - want).abs() < 1e-7, "{} vs {want}", sol.objective);
        let re = p.eval_objective(&sol);
        assert!((re - sol.objective).abs() <= 1e-9 * sol.objective.abs().max(1.0));
    }
}

#[test]
fn equality_constrained_lp() {
    let mut p = ConicProgram::new(Sense::Minimize);
    let v = p.add_vec_block("v", 2);
    p.set_objective(
        Sense::Minimize,
        LinearExpr::var(v, 0, 1.0).add_var(v, 1, 2.0),
    );
    p.add_constraint(Constraint::eq(LinearExpr::var(v, 0, 1.0).add_var(v, 1, 1.0), 1.0));
    p.add_constraint(Constraint::ge(LinearExpr::var(v, 0, 1.0), 0.0));
    p.add_constraint(Constraint::ge(LinearExpr::var(v, 1, 1.0), 0.0));
    let sol = solve(&p, DEFAULT_TOL).unwrap();
    assert_eq!(sol.status, Status::Optimal);
    assert!((sol.objective - 1.0).abs() < 1e-7);
    let vs = sol.vec(v);
    assert!((vs[0] + vs[1] - 1.0).abs() < 1e-9, "{vs:?}");
}

#[test]
fn log_hypograph_reaches_log_of_bound() {
    let mut p = ConicProgram::new(Sense::Maximize);
    let v = p.add_vec_block("tu", 2);
    p.set_objective(Sense::Maximize, LinearExpr::var(v, 0, 1.0));
    p.add_constraint(Constraint::LogHypograph {
        t: LinearExpr::var(v, 0, 1.0),
        u: LinearExpr::var(v, 1, 1.0),
    });
    p.add_constraint(Constraint::le(LinearExpr::var(v, 1, 1.0), 3.0));
    let sol = solve(&p, DEFAULT_TOL).unwrap();
    assert_eq!(sol.status, Status::Optimal);
    assert!((sol.objective - 3f64.ln()).abs() < 1e-7, "{}", sol.objective);
}

#[test]
fn log_of_psd_quadratic_form() {
    // max ln(1 + 4 x^H a a^H x / ...) over tr X <= 1 -> ln(1 + |a|^2)
    let a = crate::ComplexVector::from_vec(vec![
        Complex64::new(1.0, 0.0),
        Complex64::new(0.0, 1.0),
        Complex64::new(-1.0, 0.5),
    ]);
    let mut p = ConicProgram::new(Sense::Maximize);
    let x = p.add_psd_block("X", 3);
    let t = p.add_vec_block("t", 1);
    p.set_objective(Sense::Maximize, LinearExpr::var(t, 0, 1.0));
    p.add_constraint(Constraint::LogHypograph {
        t: LinearExpr::var(t, 0, 1.0),
        u: LinearExpr::psd(x, crate::linalg::outer(&a)).add_constant(1.0),
    });
    p.add_constraint(Constraint::le(LinearExpr::psd(x, identity(3)), 1.0));
    let sol = solve(&p, DEFAULT_TOL).unwrap();
    assert_eq!(sol.status, Status::Optimal);
    let want = (1.0 + a.norm_squared()).ln();
    assert!((sol.objective - want).abs() < 1e-7, "{} vs {want}", sol.objective);
}

#[test]
fn infeasible_reported_by_status() {
    let (mut p, b) = trace_program(2);
    p.add_constraint(Constraint::ge(LinearExpr::psd(b, identity(2)), 2.0));
    let sol = solve(&p, DEFAULT_TOL).unwrap();
    assert_eq!(sol.status, Status::Infeasible);
}

#[test]
fn conflicting_linear_rows_infeasible() {
    let mut p = ConicProgram::new(Sense::Minimize);
    let v = p.add_vec_block("v", 1);
    p.set_objective(Sense::Minimize, LinearExpr::var(v, 0, 1.0));
    p.add_constraint(Constraint::ge(LinearExpr::var(v, 0, 1.0), 1.0));
    p.add_constraint(Constraint::le(LinearExpr::var(v, 0, 1.0), -1.0));
    assert_eq!(solve(&p, DEFAULT_TOL).unwrap().status, Status::Infeasible);
}

#[test]
fn unbounded_reported_by_status() {
    let mut p = ConicProgram::new(Sense::Maximize);
    let b = p.add_psd_block("B", 2);
    p.set_objective(Sense::Maximize, LinearExpr::psd(b, identity(2)));
    assert!(!p.has_power_bound());
    let sol = solve(&p, DEFAULT_TOL).unwrap();
    assert_eq!(sol.status, Status::Unbounded);
}

#[test]
fn deterministic_and_dump_stable() {
    let (p, _) = trace_program(3);
    let a = solve(&p, DEFAULT_TOL).unwrap();
    let b = solve(&p, DEFAULT_TOL).unwrap();
    assert_eq!(a.objective.to_bits(), b.objective.to_bits());
    assert_eq!(a.newton_steps, b.newton_steps);
    assert_eq!(p.to_string(), p.clone().to_string());
    assert!(p.to_string().starts_with("psd B 3\n"));
}

#[test]
fn feasible_start_is_used() {
    let (p, _) = trace_program(2);
    let start = Start {
        psd: vec![crate::linalg::scale(&identity(2), 0.25)],
        vecs: vec![],
    };
    let warm = solve_from(&p, DEFAULT_TOL, &start).unwrap();
    assert_eq!(warm.status, Status::Optimal);
    assert!((warm.objective - 1.0).abs() < 1e-7);
    // an infeasible hint falls back to phase I
    let bad = Start {
        psd: vec![crate::linalg::scale(&identity(2), 5.0)],
        vecs: vec![],
    };
    let cold = solve_from(&p, DEFAULT_TOL, &bad).unwrap();
    assert!((cold.objective - 1.0).abs() < 1e-7);
}

#[test]
fn validation_rejects_bad_programs() {
    let mut p = ConicProgram::new(Sense::Minimize);
    let b = p.add_psd_block("B", 2);
    let mut c = identity(2);
    c[(0, 1)] = Complex64::new(1.0, 0.0);
    p.set_objective(Sense::Minimize, LinearExpr::psd(b, c));
    assert!(matches!(solve(&p, DEFAULT_TOL), Err(Error::Program(_))));

    let mut q = ConicProgram::new(Sense::Minimize);
    let v = q.add_vec_block("v", 1);
    q.set_objective(Sense::Minimize, LinearExpr::var(v, 3, 1.0));
    assert!(q.validate().is_err());
    q.set_objective(Sense::Minimize, LinearExpr::psd(PsdId(0), identity(1)));
    assert!(q.validate().is_err());
}

#[test]
fn empty_program_is_trivially_optimal() {
    let p = ConicProgram::new(Sense::Minimize);
    let sol = solve(&p, DEFAULT_TOL).unwrap();
    assert_eq!(sol.status, Status::Optimal);
    assert_eq!(sol.objective, 0.0);
}
