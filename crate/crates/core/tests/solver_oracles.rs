use nalgebra::{DMatrix, DVector};
use rhp_core::expr::{Affine, Expr};
use rhp_core::nlp::NlpBuilder;
use rhp_core::solver::{solve, SolveOptions, SolveStatus};

#[test]
fn active_lower_bound() {
    // min (x-3)^2  s.t. x >= 5
    let mut b = NlpBuilder::new();
    b.add_vars("x", 1, f64::NEG_INFINITY, f64::INFINITY, 0.0);
    b.add_cost(Expr::square(&(Affine::var(0) + -3.0)));
    b.add_le("lower", None, (Affine::constant(5.0) - Affine::var(0)).into());
    let nlp = b.finish().unwrap();
    let r = solve(&nlp, &SolveOptions::default()).unwrap();
    assert_eq!(r.status, SolveStatus::Converged, "{}", r.message);
    assert!((r.solution[0] - 5.0).abs() < 1e-4);
    assert!((r.objective - 4.0).abs() < 1e-3);
}

#[test]
fn active_variable_bound() {
    let mut b = NlpBuilder::new();
    b.add_vars("x", 1, 5.0, f64::INFINITY, 0.0);
    b.add_cost(Expr::square(&(Affine::var(0) + -3.0)));
    let nlp = b.finish().unwrap();
    let r = solve(&nlp, &SolveOptions::default()).unwrap();
    assert_eq!(r.status, SolveStatus::Converged);
    assert!((r.solution[0] - 5.0).abs() < 1e-4);
}

#[test]
fn symmetric_equality() {
    // min x'x  s.t. sum x = 1
    let mut b = NlpBuilder::new();
    b.add_vars("x", 4, f64::NEG_INFINITY, f64::INFINITY, 0.0);
    for i in 0..4 {
        b.add_cost(Expr::square(&Affine::var(i)));
    }
    b.add_eq("sum", None, (Affine::dot(0, &[1.0; 4]) + -1.0).into());
    let nlp = b.finish().unwrap();
    let r = solve(&nlp, &SolveOptions::default()).unwrap();
    assert_eq!(r.status, SolveStatus::Converged);
    for v in &r.solution {
        assert!((v - 0.25).abs() < 1e-8);
    }
}

/// Equality-constrained QP against its dense KKT solution.
#[test]
fn equality_qp_matches_closed_form() {
    let q = DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 0.0, 1.0, 3.0, 0.5, 0.0, 0.5, 2.0]);
    let c = DVector::from_row_slice(&[1.0, -2.0, 0.5]);
    let a = DMatrix::from_row_slice(2, 3, &[1.0, 1.0, 1.0, 1.0, -1.0, 2.0]);
    let bvec = DVector::from_row_slice(&[1.0, 0.5]);
    let mut kkt = DMatrix::zeros(5, 5);
    kkt.view_mut((0, 0), (3, 3)).copy_from(&q);
    kkt.view_mut((3, 0), (2, 3)).copy_from(&a);
    kkt.view_mut((0, 3), (3, 2)).copy_from(&a.transpose());
    let mut rhs = DVector::zeros(5);
    rhs.rows_mut(0, 3).copy_from(&(-&c));
    rhs.rows_mut(3, 2).copy_from(&bvec);
    let exact = kkt.lu().solve(&rhs).unwrap();

    let mut b = NlpBuilder::new();
    b.add_vars("x", 3, f64::NEG_INFINITY, f64::INFINITY, 0.0);
    for i in 0..3 {
        b.add_cost(Affine::term(i, c[i]).into());
        for j in 0..3 {
            if q[(i, j)] != 0.0 {
                b.add_cost(Expr::product(&[Affine::var(i), Affine::var(j)], 0.5 * q[(i, j)]).unwrap());
            }
        }
    }
    for r in 0..2 {
        b.add_eq("lin", None, (Affine::dot(0, &[a[(r, 0)], a[(r, 1)], a[(r, 2)]]) + -bvec[r]).into());
    }
    let nlp = b.finish().unwrap();
    let opts = SolveOptions {
        optimality_tolerance: 1e-10,
        feasibility_tolerance: 1e-12,
        ..Default::default()
    };
    let r = solve(&nlp, &opts).unwrap();
    assert_eq!(r.status, SolveStatus::Converged);
    for i in 0..3 {
        assert!((r.solution[i] - exact[i]).abs() < 1e-8, "{i}: {} vs {}", r.solution[i], exact[i]);
    }
}

#[test]
fn nonconvex_rosenbrock_with_circle() {
    // min (1-x)^2 + 100 (y - x^2)^2  s.t. x^2 + y^2 <= 1.5 ; optimum near (1,1) is outside => active
    let mut b = NlpBuilder::new();
    b.add_vars("z", 3, f64::NEG_INFINITY, f64::INFINITY, 0.0);
    // w = x^2 auxiliary to stay within degree 3
    b.add_eq("aux", None, Expr::square(&Affine::var(0)) - Expr::from(Affine::var(2)));
    b.add_cost(Expr::square(&(Affine::constant(1.0) - Affine::var(0))));
    b.add_cost(Expr::square(&(Affine::var(1) - Affine::var(2))).scaled(100.0));
    b.add_le("circle", None, Expr::square(&Affine::var(0)) + Expr::square(&Affine::var(1)) + Expr::constant(-1.5));
    let nlp = b.finish().unwrap();
    let opts = SolveOptions {
        optimality_tolerance: 1e-8,
        ..Default::default()
    };
    let r = solve(&nlp, &opts).unwrap();
    assert_eq!(r.status, SolveStatus::Converged, "{}", r.message);
    let (x, y) = (r.solution[0], r.solution[1]);
    assert!((x * x + y * y - 1.5).abs() < 1e-6);
}

#[test]
fn infeasible_problem_is_reported() {
    let mut b = NlpBuilder::new();
    b.add_vars("x", 1, f64::NEG_INFINITY, f64::INFINITY, 0.0);
    b.add_cost(Expr::square(&Affine::var(0)));
    b.add_le("a", None, (Affine::var(0) + -1.0).into());
    b.add_le("b", None, (Affine::constant(2.0) - Affine::var(0)).into());
    let nlp = b.finish().unwrap();
    let r = solve(&nlp, &SolveOptions::default()).unwrap();
    assert_ne!(r.status, SolveStatus::Converged);
}

#[test]
fn deterministic_iterates() {
    let mut b = NlpBuilder::new();
    b.add_vars("x", 2, -2.0, 2.0, 0.3);
    b.add_cost(Expr::product(&[Affine::var(0), Affine::var(1), Affine::var(0)], 1.0).unwrap());
    b.add_cost(Expr::square(&(Affine::var(1) + -0.5)));
    b.add_eq("c", None, Expr::square(&Affine::var(0)) + Expr::from(Affine::var(1) + -1.0));
    let nlp = b.finish().unwrap();
    let r1 = solve(&nlp, &SolveOptions::default()).unwrap();
    let r2 = solve(&nlp, &SolveOptions::default()).unwrap();
    assert_eq!(r1.solution, r2.solution);
    assert_eq!(r1.log.len(), r2.log.len());
    for (a, b) in r1.log.iter().zip(&r2.log) {
        assert_eq!(a.objective.to_bits(), b.objective.to_bits());
    }
    assert_eq!(r1.work, r2.work);
}

#[test]
fn warm_start_length_checked() {
    let mut b = NlpBuilder::new();
    b.add_vars("x", 2, -1.0, 1.0, 0.0);
    let nlp = b.finish().unwrap();
    let opts = SolveOptions {
        warm_start: Some(vec![0.0]),
        ..Default::default()
    };
    assert!(solve(&nlp, &opts).is_err());
    assert!(SolveOptions { max_iterations: 0, ..Default::default() }.validate().is_err());
}
