use std::sync::Arc;

use goal_calib::elliptic::{EllipticCoarseParams, EllipticFineParams, Nonlinearity};
use goal_calib::goal::{
    analyze, estimate_xi1, residual, solve_errors_first_order, ErrorSource, ModelPair, SecondOrderOptions, StateVector,
};
use goal_calib::tumor::{QoISpec, TimeGrid, TumorCoarseParams, TumorFineParams};
use goal_calib::{EllipticPair, Mesh, TumorPair};

const ALL: [ErrorSource; 3] = [ErrorSource::ExactSolve, ErrorSource::FirstOrder, ErrorSource::SecondOrder];

fn elliptic(n: usize, kappa: f64, alpha: f64) -> EllipticPair {
    let mesh = Arc::new(Mesh::unit_square(n, n).unwrap());
    EllipticPair::new(
        mesh,
        EllipticCoarseParams::new(0.25).unwrap(),
        EllipticFineParams::new(kappa, alpha).unwrap(),
        Nonlinearity::Quadratic,
    )
    .unwrap()
}

fn linear_tumor() -> TumorPair {
    let mesh = Arc::new(Mesh::unit_square(12, 12).unwrap());
    TumorPair::new(
        mesh,
        TimeGrid::new(0.01, 1.0).unwrap(),
        QoISpec::table1(),
        TumorCoarseParams::new(0.2, 0.1, 0.05).unwrap(),
        // no proliferation and no double well: the fine model is linear too
        TumorFineParams::new_nonnegative(0.0, 0.3, 0.02, 0.0).unwrap(),
    )
    .unwrap()
}

fn assert_all_exact(reports: &[goal_calib::goal::ErrorEstimateReport], tol: f64) {
    for r in reports {
        let exact = r.exact_error.unwrap();
        assert!(exact.abs() > 1e-3, "mismatch too small to be a meaningful check: {exact}");
        for (name, v) in [("xi1", r.xi1), ("xi2", r.xi2), ("q_ehat", r.q_ehat)] {
            assert!((v - exact).abs() < tol, "{:?} {name}: {v} vs exact {exact}", r.error_source);
        }
    }
}

#[test]
fn linear_elliptic_models_make_every_estimate_exact() {
    let pair = elliptic(50, 0.6, 0.0);
    let a = analyze(&pair, &ALL, true, &SecondOrderOptions::default()).unwrap();
    assert_eq!(a.reports.len(), 3);
    assert_all_exact(&a.reports, 1e-8);
}

#[test]
fn linear_tumor_models_make_every_estimate_exact() {
    let pair = linear_tumor();
    let a = analyze(&pair, &ALL, true, &SecondOrderOptions::default()).unwrap();
    assert_all_exact(&a.reports, 1e-8);
}

#[test]
fn coinciding_models_give_zero_estimates() {
    let pair = elliptic(20, 0.25, 0.0);
    let a = analyze(&pair, &ALL, true, &SecondOrderOptions::default()).unwrap();
    for r in &a.reports {
        for v in [r.exact_error.unwrap(), r.xi1, r.xi2, r.q_ehat] {
            assert!(v.abs() < 1e-12, "{:?}: {v}", r.error_source);
        }
    }
}

#[test]
fn residual_splits_over_the_adjoint_error() {
    let pair = elliptic(20, 0.4, 3.0);
    let u0 = pair.solve_coarse_forward().unwrap();
    let p0 = pair.solve_coarse_adjoint(&u0).unwrap();
    let u = pair.solve_fine_forward().unwrap();
    let p = pair.solve_fine_adjoint(&u).unwrap();
    let eps = p.combine(-1.0, &p0);
    let lhs = residual(&pair, &u0, &p0).unwrap() + residual(&pair, &u0, &eps).unwrap();
    let rhs = residual(&pair, &u0, &p).unwrap();
    assert!((lhs - rhs).abs() < 1e-12 * rhs.abs().max(1.0));
    // R(u₀; p₀) vanishes only when the models coincide; Ξ₁ is R(u₀; p)
    assert!((estimate_xi1(&pair, &u0, &p).unwrap() - rhs).abs() < 1e-14);
}

#[test]
fn nonlinear_estimates_track_the_exact_error() {
    let pair = elliptic(30, 0.25, 1.0);
    let a = analyze(&pair, &ALL, true, &SecondOrderOptions::default()).unwrap();
    let exact = a.reports[0].exact_error.unwrap();
    assert!(exact < 0.0, "stiffer fine diffusion lowers the QoI");
    for r in &a.reports {
        assert!((r.q_ehat - exact).abs() < 0.05 * exact.abs(), "{:?}: {} vs {exact}", r.error_source, r.q_ehat);
        assert!(r.xi1.signum() == exact.signum());
    }
    // Q(ê₀) with the exact error field is the exact error itself
    assert!((a.reports[0].q_ehat - exact).abs() < 1e-12);
}

#[test]
fn first_order_error_fields_solve_the_linearized_problems() {
    let pair = elliptic(16, 0.3, 2.0);
    let u0 = pair.solve_coarse_forward().unwrap();
    let p0 = pair.solve_coarse_adjoint(&u0).unwrap();
    let errs = solve_errors_first_order(&pair, &u0, &p0).unwrap();
    // B′(u₀; ê₀, v) = R(u₀; v) for interior test functions
    let mesh = pair.mesh().clone();
    for node in [17, 40, 100, 150] {
        if mesh.is_boundary(node) {
            continue;
        }
        let mut v = goal_calib::Field64::zeros(mesh.clone());
        v.values_mut()[node] = 1.0;
        let lhs = pair.form_db(&u0, &errs.e_hat, &v).unwrap();
        let rhs = residual(&pair, &u0, &v).unwrap();
        assert!((lhs - rhs).abs() < 1e-10, "node {node}: {lhs} vs {rhs}");
    }
}
