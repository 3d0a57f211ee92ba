use super::*;

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

#[test]
fn minimize_x_over_nonnegatives() {
    let mut p = ConvexProgram::new(0);
    p.add_var(0.0, f64::INFINITY, 1.0);
    let r = solve(&p, 1e-9).unwrap();
    assert_eq!(r.status, Status::Optimal);
    assert!(close(r.x[0], 0.0, 1e-9));
    assert!(close(r.objective, 0.0, 1e-9));
    assert!(close(r.duals_lower[0], 1.0, 1e-8));
}

#[test]
fn projected_parabola_has_dual_four() {
    // (x − 3)² = x² − 6x + 9, i.e. Q = 2, c = −6
    let mut p = ConvexProgram::new(1);
    p.add_square(&[(0, 1.0)], -3.0, 1.0);
    p.add_ineq(&[(0, 1.0)], 1.0);
    let r = solve(&p, 1e-10).unwrap();
    assert_eq!(r.status, Status::Optimal);
    assert!(close(r.x[0], 1.0, 1e-9), "{:?}", r.x);
    assert!(close(r.duals_ineq[0], 4.0, 1e-8), "{:?}", r.duals_ineq);
    assert!(close(r.objective, 4.0, 1e-8));
}

#[test]
fn single_location_market_lp() {
    let mut p = ConvexProgram::new(0);
    let y = p.add_var(0.0, 1.0, -4.0);
    p.add_ineq(&[(y, 10.0)], 4.0);
    let r = solve(&p, 1e-10).unwrap();
    assert_eq!(r.status, Status::Optimal);
    assert!(close(r.x[0], 0.4, 1e-10));
    assert!(close(r.objective, -1.6, 1e-10));
    assert!(close(r.duals_ineq[0], 0.4, 1e-9));

    // the dual is the slope of the optimal value in the right side
    let value = |rhs: f64| {
        let mut q = p.clone();
        q.h_mut()[0] = rhs;
        solve(&q, 1e-11).unwrap().objective
    };
    let fd = (value(4.001) - value(3.999)) / 0.002;
    assert!(close(-fd, r.duals_ineq[0], 1e-6), "fd {fd}");
}

#[test]
fn equality_constrained_qp() {
    // minimize x² + y² subject to x + y = 2
    let mut p = ConvexProgram::new(2);
    p.add_quadratic(0, 0, 2.0);
    p.add_quadratic(1, 1, 2.0);
    p.add_eq(&[(0, 1.0), (1, 1.0)], 2.0);
    let r = solve(&p, 1e-10).unwrap();
    assert_eq!(r.status, Status::Optimal);
    assert!(close(r.x[0], 1.0, 1e-9) && close(r.x[1], 1.0, 1e-9));
    assert!(close(r.duals_eq[0], -2.0, 1e-8));
}

#[test]
fn fixed_variables_report_box_duals() {
    // minimize −x with x pinned at 2
    let mut p = ConvexProgram::new(0);
    p.add_var(2.0, 2.0, -1.0);
    let r = solve(&p, 1e-10).unwrap();
    assert_eq!(r.status, Status::Optimal);
    assert!(close(r.x[0], 2.0, 1e-10));
    assert!(close(r.duals_box()[0], 1.0, 1e-9));
}

#[test]
fn detects_infeasibility() {
    let mut p = ConvexProgram::new(0);
    let x = p.add_var(0.0, f64::INFINITY, 1.0);
    p.add_ineq(&[(x, 1.0)], -1.0);
    assert_eq!(solve(&p, 1e-8).unwrap().status, Status::Infeasible);

    let mut p = ConvexProgram::new(2);
    p.add_ineq(&[(0, 1.0), (1, 1.0)], 1.0);
    p.add_ineq(&[(0, -1.0), (1, -1.0)], -3.0);
    assert_eq!(solve(&p, 1e-8).unwrap().status, Status::Infeasible);

    let mut p = ConvexProgram::new(1);
    p.add_ineq(&[], -1.0);
    assert_eq!(solve(&p, 1e-8).unwrap().status, Status::Infeasible);

    // a row that only its variable's lower bound contradicts
    let mut p = ConvexProgram::new(0);
    let y = p.add_var(0.01, 1.0, -3.0);
    p.add_ineq(&[(y, 3.0)], 0.0);
    assert_eq!(solve(&p, 1e-9).unwrap().status, Status::Infeasible);
}

#[test]
fn detects_unboundedness() {
    let mut p = ConvexProgram::new(0);
    p.add_var(0.0, f64::INFINITY, -1.0);
    assert_eq!(solve(&p, 1e-8).unwrap().status, Status::Unbounded);

    let mut p = ConvexProgram::new(2);
    p.add_linear(0, -1.0);
    p.add_linear(1, -1.0);
    p.add_ineq(&[(0, 1.0), (1, -1.0)], 1.0);
    p.set_bounds(1, 0.0, f64::INFINITY);
    assert_eq!(solve(&p, 1e-8).unwrap().status, Status::Unbounded);
}

#[test]
fn empty_program_is_trivially_optimal() {
    let p = ConvexProgram::new(0);
    let r = solve(&p, 1e-8).unwrap();
    assert_eq!(r.status, Status::Optimal);
    assert!(r.x.is_empty());
}

#[test]
fn iteration_cap_is_honoured() {
    let mut p = ConvexProgram::new(0);
    let y = p.add_var(0.0, 1.0, -4.0);
    p.add_ineq(&[(y, 10.0)], 4.0);
    let opts = SolveOptions {
        tol: 1e-12,
        max_iter: 1,
        polish: false,
    };
    let r = solve_with(&p, &opts).unwrap();
    assert_eq!(r.status, Status::IterLimit);
    assert_eq!(r.iterations, 1);
}

#[test]
fn identical_programs_give_identical_bits() {
    let mut p = ConvexProgram::new(4);
    for j in 0..4 {
        p.set_bounds(j, 0.0, 1.0);
        p.add_linear(j, -(j as f64 + 1.0));
    }
    p.add_square(&[(0, 1.0), (1, -1.0)], 0.0, 0.7);
    p.add_ineq(&[(0, 1.0), (1, 2.0), (2, 1.0), (3, 3.0)], 2.5);
    p.add_eq(&[(2, 1.0), (3, -1.0)], 0.1);
    let a = solve(&p, 1e-9).unwrap();
    let b = solve(&p, 1e-9).unwrap();
    assert_eq!(a.status, Status::Optimal);
    let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&a.x), bits(&b.x));
    assert_eq!(bits(&a.duals_ineq), bits(&b.duals_ineq));
    assert!(a.dual_objective <= a.objective + 1e-8);
    assert!(a.objective - a.dual_objective <= 1e-6);
}

#[test]
fn rejects_invalid_programs() {
    let mut p = ConvexProgram::new(2);
    p.add_quadratic(0, 0, 1.0);
    p.add_quadratic(1, 1, 1.0);
    p.add_quadratic(0, 1, 2.0);
    assert!(solve(&p, 1e-8).is_err());

    let mut p = ConvexProgram::new(1);
    p.set_bounds(0, 1.0, 0.0);
    assert!(solve(&p, 1e-8).is_err());

    let mut p = ConvexProgram::new(1);
    p.add_quadratic(0, 0, -1.0);
    assert!(solve(&p, 1e-8).is_err());
    assert!(solve(&ConvexProgram::new(1), 0.0).is_err());
}

#[test]
fn accepts_singular_psd_quadratics() {
    // (x − y)² is PSD but singular
    let mut p = ConvexProgram::new(2);
    p.add_square(&[(0, 1.0), (1, -1.0)], 0.0, 1.0);
    p.set_bounds(0, 0.0, 1.0);
    p.set_bounds(1, 0.5, 1.0);
    p.add_linear(0, 0.1);
    let r = solve(&p, 1e-9).unwrap();
    assert_eq!(r.status, Status::Optimal);
}

#[test]
fn dump_uses_triplets_and_null_bounds() {
    let mut p = ConvexProgram::new(0);
    let y = p.add_var(0.0, f64::INFINITY, -4.0);
    p.add_ineq(&[(y, 10.0)], 4.0);
    let json = serde_json::to_value(p.dump()).unwrap();
    assert_eq!(json["ineq"], serde_json::json!([[0, 0, 10.0]]));
    assert_eq!(json["upper"], serde_json::json!([null]));
    assert_eq!(json["lower"], serde_json::json!([0.0]));
}
