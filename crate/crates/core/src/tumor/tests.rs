use super::*;
use crate::goal::{solve_error_forward, StateVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn pair_with(n: usize, dt: f64, qoi: QoISpec, coarse: TumorCoarseParams<f64>, fine: TumorFineParams<f64>) -> TumorModelPair<f64> {
    let mesh = Arc::new(StructuredMesh::unit_square(n, n).unwrap());
    let grid = TimeGrid::new(dt, 1.0).unwrap();
    TumorModelPair::new(mesh, grid, qoi, coarse, fine).unwrap()
}

fn small_pair() -> TumorModelPair<f64> {
    pair_with(8, 0.05, QoISpec::table1(), TumorCoarseParams::default(), TumorFineParams::test_values())
}

fn random_trajectory(like: &Trajectory<f64>, seed: u64, scale: f64, offset: f64) -> Trajectory<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut t = like.zeros_like();
    for n in 0..=t.n_steps() {
        for v in t.step_mut(n) {
            *v = offset + scale * rng.random_range(-1.0..1.0);
        }
    }
    t
}

#[test]
fn nutrient_values() {
    assert_eq!(nutrient(0.0, [0.0, 0.3]), 1.0);
    assert!((nutrient(0.0f64, [1.0, 0.0]) - 0.22313016014842982).abs() < 1e-15);
    assert_eq!(nutrient(0.7, [0.4, 0.1]), nutrient(0.0, [0.4, 0.9]));
}

#[test]
fn initial_disc() {
    let mesh = StructuredMesh::<f64>::unit_square(50, 50).unwrap();
    let u = initial_condition(&mesh);
    assert_eq!(u[mesh.node_index(25, 25)], 1.0);
    assert_eq!(u[mesh.node_index(0, 0)], 0.0);
    let m = mass_matrix(&mesh).unwrap();
    let integral: f64 = m.matvec(&u).iter().sum();
    assert!((integral - 0.25).abs() < 0.01, "{integral}");
}

#[test]
fn time_grid_rejects_non_dividing_steps() {
    assert!(TimeGrid::new(0.003, 1.0).is_err());
    assert!(TimeGrid::new(0.0, 1.0).is_err());
    let g = TimeGrid::new(0.005f64, 1.0).unwrap();
    assert_eq!(g.n_steps(), 200);
    assert!((g.t_final() - 1.0).abs() < 1e-12);
}

#[test]
fn qoi_weights_and_constant_trajectory() {
    let grid = TimeGrid::new(0.005, 1.0).unwrap();
    let w: Vec<f64> = QoISpec::table1().step_weights(&grid).unwrap();
    assert!((w.iter().sum::<f64>() - 5.0).abs() < 1e-12);
    assert_eq!(w[40], 0.0);
    assert!((w[41] - 0.1).abs() < 1e-15 && (w[50] - 0.1).abs() < 1e-15 && w[51] == 0.0);

    let p = small_pair();
    let mut u = Trajectory::zeros(p.mesh().clone(), *p.grid());
    for n in 0..=u.n_steps() {
        u.step_mut(n).fill(0.3);
    }
    assert!((p.qoi(&u) - 1.5).abs() < 1e-12);

    let only_final = pair_with(8, 0.05, QoISpec::final_time_only(), TumorCoarseParams::default(), TumorFineParams::test_values());
    assert!((only_final.qoi(&u) - 0.3).abs() < 1e-12);
}

#[test]
fn misaligned_windows_are_rejected() {
    let grid = TimeGrid::new(0.05, 1.0).unwrap();
    let off_grid = QoISpec {
        observation_times: vec![0.21],
        window: 0.05,
    };
    assert!(matches!(off_grid.step_weights::<f64>(&grid), Err(Error::InvalidArgument(_))));
    let past_end = QoISpec {
        observation_times: vec![0.95],
        window: 0.1,
    };
    assert!(past_end.step_weights::<f64>(&grid).is_err());
    let bad_width = QoISpec {
        observation_times: vec![0.2],
        window: 0.07,
    };
    assert!(bad_width.step_weights::<f64>(&grid).is_err());
}

#[test]
fn pure_diffusion_conserves_mass() {
    let coarse = TumorCoarseParams::new_nonnegative(0.0, 0.0, 0.05).unwrap();
    let fine = TumorFineParams::new_nonnegative(0.0, 0.0, 0.02, 0.0).unwrap();
    let p = pair_with(16, 0.01, QoISpec::table1(), coarse, fine);
    let u0 = p.solve_coarse_forward().unwrap();
    let u = p.solve_fine_forward().unwrap();
    for traj in [&u0, &u] {
        for n in 1..=traj.n_steps() {
            let d = p.total_mass(traj.step(n)) - p.total_mass(traj.step(n - 1));
            assert!(d.abs() < 1e-10, "step {n}: mass change {d}");
        }
    }
}

#[test]
fn pure_growth_follows_backward_euler_recursion() {
    let mesh = Arc::new(StructuredMesh::unit_square(6, 6).unwrap());
    let grid = TimeGrid::new(0.05, 1.0).unwrap();
    let coarse = TumorCoarseParams::new_nonnegative(0.3, 0.0, 0.0).unwrap();
    let p = TumorModelPair::with_nutrient(mesh, grid, QoISpec::table1(), coarse, TumorFineParams::test_values(), Arc::new(|_, _| 1.0))
        .unwrap();
    let u0 = p.solve_coarse_forward().unwrap();
    let ubar = p.initial_state().to_vec();
    for n in [1, 7, 20] {
        let g = (1.0 - 0.05 * 0.3f64).powi(-(n as i32));
        for (a, b) in u0.step(n).iter().zip(&ubar) {
            assert!((a - g * b).abs() < 1e-12);
        }
    }
}

#[test]
fn zero_state_is_a_fixed_point() {
    let p = small_pair().with_initial_condition(vec![0.0; 81]).unwrap();
    let u = p.solve_fine_forward().unwrap();
    assert!(u.values().iter().all(|v| *v == 0.0));
}

#[test]
fn coarse_duality() {
    let p = pair_with(12, 0.01, QoISpec::table1(), TumorCoarseParams::default(), TumorFineParams::test_values());
    let u0 = p.solve_coarse_forward().unwrap();
    let p0 = p.solve_coarse_adjoint(&u0).unwrap();
    let q = p.qoi(&u0);
    let f = p.form_f(&p0).unwrap();
    assert!((q - f).abs() < 1e-8 * q.abs(), "Q(u0) = {q}, F(p0) = {f}");
    // adjoint equation holds for arbitrary directions
    let v = random_trajectory(&u0, 3, 1.0, 0.0);
    let lhs = p.form_b0(&v, &p0).unwrap();
    assert!((lhs - p.qoi(&v)).abs() < 1e-10);
}

#[test]
fn adjoint_is_constant_without_dynamics() {
    let coarse = TumorCoarseParams::new_nonnegative(0.0, 0.0, 0.0).unwrap();
    let p = pair_with(6, 0.1, QoISpec::final_time_only(), coarse, TumorFineParams::test_values());
    let u0 = p.solve_coarse_forward().unwrap();
    let p0 = p.solve_coarse_adjoint(&u0).unwrap();
    for v in p0.values() {
        assert!((v - 1.0).abs() < 1e-12);
    }
}

#[test]
fn fine_adjoint_satisfies_linearized_duality() {
    let p = small_pair();
    let u = p.solve_fine_forward().unwrap();
    let adj = p.solve_fine_adjoint(&u).unwrap();
    let v = random_trajectory(&u, 5, 1.0, 0.0);
    let lhs = p.form_db(&u, &v, &adj).unwrap();
    assert!((lhs - p.qoi(&v)).abs() < 1e-8, "{lhs} vs {}", p.qoi(&v));

    let g = random_trajectory(&u, 6, 1e-3, 0.0);
    let x = p.solve_tangent(&u, None, &g).unwrap();
    assert!((p.qoi(&x) - g.dot(&adj)).abs() < 1e-8);
}

#[test]
fn fine_step_solution_satisfies_discrete_form() {
    let p = small_pair();
    let u = p.solve_fine_forward().unwrap();
    let mut r = p.fine_operator(&u).unwrap();
    r.axpy(-1.0, &p.load().unwrap());
    assert!(r.norm() < 1e-9, "{}", r.norm());
}

#[test]
fn tangent_and_hessian_match_finite_differences() {
    let p = small_pair();
    let u0 = p.solve_coarse_forward().unwrap();
    let u = u0.combine(1.0, &random_trajectory(&u0, 1, 0.1, 0.0));
    let v = random_trajectory(&u0, 2, 1.0, 0.0);
    let q = random_trajectory(&u0, 3, 1.0, 0.0);
    let exact = p.form_db(&u, &v, &q).unwrap();
    let b = |eta: f64| p.form_b(&u.combine(eta, &v), &q).unwrap();
    let b0 = b(0.0);
    let errs: Vec<f64> = [1e-2, 5e-3, 2.5e-3].iter().map(|&e| ((b(e) - b0) / e - exact).abs()).collect();
    let slope = (errs[0] / errs[2]).log2() / 2.0;
    assert!((slope - 1.0).abs() < 0.1, "slope {slope}");

    let s = random_trajectory(&u0, 4, 1.0, 0.0);
    let h = p.form_d2b(&u, &s, &v, &q).unwrap();
    let db = |eta: f64| p.form_db(&u.combine(eta, &s), &v, &q).unwrap();
    let fd = (db(1e-4) - db(-1e-4)) / 2e-4;
    assert!((fd - h).abs() < 1e-7 * h.abs().max(1.0), "{fd} vs {h}");
}

#[test]
fn transposed_applications_agree() {
    let p = small_pair();
    let u0 = p.solve_coarse_forward().unwrap();
    let a = random_trajectory(&u0, 7, 1.0, 0.2);
    let v = random_trajectory(&u0, 8, 1.0, 0.0);
    let w = random_trajectory(&u0, 9, 1.0, 0.0);
    let lhs = p.tangent_apply(&u0, &v).unwrap().dot(&w);
    let rhs = p.tangent_transpose_apply(&u0, &w).unwrap().dot(&v);
    assert!((lhs - rhs).abs() < 1e-12 * lhs.abs().max(1.0));
    let lhs = p.hessian_apply(&u0, &a, &v).unwrap().dot(&w);
    let rhs = p.hessian_transpose_apply(&u0, &a, &w).unwrap().dot(&v);
    assert!((lhs - rhs).abs() < 1e-12 * lhs.abs().max(1.0));
}

#[test]
fn shifted_tangent_solves_are_consistent() {
    let p = small_pair();
    let u0 = p.solve_coarse_forward().unwrap();
    let s = random_trajectory(&u0, 10, 0.1, 0.0);
    let g = random_trajectory(&u0, 11, 1e-3, 0.0);
    let x = p.solve_tangent(&u0, Some(&s), &g).unwrap();
    let mut back = p.tangent_apply(&u0, &x).unwrap();
    back.axpy(1.0, &p.hessian_apply(&u0, &s, &x).unwrap());
    back.axpy(-1.0, &g);
    assert!(back.norm() < 1e-10 * g.norm().max(1e-3));

    let y = p.solve_tangent_adjoint(&u0, Some(&s), &g).unwrap();
    let mut back = p.tangent_transpose_apply(&u0, &y).unwrap();
    back.axpy(1.0, &p.hessian_transpose_apply(&u0, &s, &y).unwrap());
    back.axpy(-1.0, &g);
    assert!(back.norm() < 1e-10 * g.norm().max(1e-3));
}

#[test]
fn specialised_error_march_matches_generic_solve() {
    let p = small_pair();
    let u0 = p.solve_coarse_forward().unwrap();
    let fast = p.solve_error_forward(&u0).unwrap();
    let generic = solve_error_forward(&p, &u0).unwrap();
    let mut d = fast.clone();
    d.axpy(-1.0, &generic);
    assert!(d.norm() < 1e-10 * fast.norm());
}

#[test]
fn coinciding_models_give_zero_error() {
    let d = TumorCoarseParams::<f64>::default();
    let coarse = TumorCoarseParams::new_nonnegative(0.0, d.lambda_d0, d.diffusivity).unwrap();
    let fine = TumorFineParams::new_nonnegative(0.0, d.lambda_d0, d.diffusivity, 0.0).unwrap();
    let p = pair_with(8, 0.05, QoISpec::table1(), coarse, fine);
    let u0 = p.solve_coarse_forward().unwrap();
    let e = p.solve_error_forward(&u0).unwrap();
    assert!(e.norm() < 1e-12);
    let u = p.solve_fine_forward().unwrap();
    assert!((p.qoi(&u) - p.qoi(&u0)).abs() < 1e-10);
}

#[test]
fn fine_trajectory_stays_bounded_at_prior_median() {
    let m = 0.16f64.exp();
    let fine = TumorFineParams::new(0.5 * m, 0.1 * m, 0.01 * m, m).unwrap();
    let p = pair_with(25, 0.005, QoISpec::table1(), TumorCoarseParams::default(), fine);
    let u = p.solve_fine_forward().unwrap();
    let (lo, hi) = u.min_max();
    assert!(lo >= -0.1 && hi <= 1.1, "range [{lo}, {hi}]");
}

#[test]
fn parameter_validation() {
    assert!(TumorFineParams::new(0.5, 0.1, 0.0, 1.0).is_err());
    assert!(TumorFineParams::new_nonnegative(0.5, 0.1, 0.0, 1.0).is_ok());
    assert!(TumorFineParams::new_nonnegative(-0.5, 0.1, 0.0, 1.0).is_err());
    assert!(TumorCoarseParams::new(0.2, f64::NAN, 0.05).is_err());
    let p = small_pair();
    assert!(p.with_fine_parameters(&[0.5, 0.1, 0.01]).is_err());
    assert!(p.with_fine_parameters(&[0.5, -0.1, 0.01, 1.0]).is_err());
    assert_eq!(p.with_fine_parameters(&[0.6, 0.1, 0.01, 1.0]).unwrap().fine_parameters()[0], 0.6);
}

#[test]
fn trajectory_export_writes_csv_and_manifest() {
    let p = small_pair();
    let u0 = p.solve_coarse_forward().unwrap();
    let dir = tempfile::tempdir().unwrap();
    let paths = u0.export(dir.path(), &[0, 10, 20], p.qoi_spec()).unwrap();
    assert_eq!(paths.len(), 4);
    let manifest: TrajectoryManifest =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest.n_steps, 20);
    assert_eq!(manifest.qoi_spec, QoISpec::table1());
    let f = crate::fem::Field::read_csv(p.mesh().clone(), std::io::BufReader::new(std::fs::File::open(&paths[1]).unwrap())).unwrap();
    assert_eq!(f.values(), u0.step(10));
    assert!(u0.export(dir.path(), &[21], p.qoi_spec()).is_err());
}
