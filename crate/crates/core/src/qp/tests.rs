use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

use super::*;

fn inf(n: usize) -> DVector<f64> {
    DVector::from_element(n, f64::INFINITY)
}

#[test]
fn clipped_scalar() {
    // (x - 3)² = ½·2x² - 6x + 9
    let sol = solve_box(
        DMatrix::from_element(1, 1, 2.0),
        DVector::from_element(1, -6.0),
        DVector::from_element(1, -1.0),
        DVector::from_element(1, 1.0),
        &SolverSettings::default(),
    )
    .unwrap();
    assert_eq!(sol.status, SolveStatus::Solved);
    assert!((sol.x[0] - 1.0).abs() < 1e-6, "{}", sol.x[0]);
    assert!(sol.y[0] > 0.0);
}

#[test]
fn unconstrained_matches_stationarity() {
    let p = DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 0.5, 1.0, 3.0, 0.2, 0.5, 0.2, 2.0]);
    let c = DVector::from_vec(vec![1.0, -2.0, 0.5]);
    let expected = -p.clone().cholesky().unwrap().solve(&c);
    let sol = solve_box(p, c, -inf(3), inf(3), &SolverSettings::default()).unwrap();
    assert_eq!(sol.status, SolveStatus::Solved);
    assert!((&sol.x - expected).amax() < 1e-6);
}

#[test]
fn zero_cost_inside_box() {
    let sol = solve_box(
        DMatrix::identity(2, 2),
        DVector::zeros(2),
        DVector::from_element(2, -1.0),
        DVector::from_element(2, 1.0),
        &SolverSettings::default(),
    )
    .unwrap();
    assert!(sol.x.amax() < 1e-9);
}

#[test]
fn separable_clip() {
    let sol = solve_box(
        DMatrix::identity(2, 2),
        DVector::from_vec(vec![-10.0, 10.0]),
        DVector::from_element(2, -1.0),
        DVector::from_element(2, 1.0),
        &SolverSettings::default(),
    )
    .unwrap();
    assert!((sol.x[0] - 1.0).abs() < 1e-6 && (sol.x[1] + 1.0).abs() < 1e-6);
}

#[test]
fn psd_hessian_with_equality() {
    // min x1 subject to x1 + x2 = 1, 0 <= x <= 1 (P = 0)
    let a = DMatrix::from_row_slice(3, 2, &[1.0, 1.0, 1.0, 0.0, 0.0, 1.0]);
    let problem = QpProblem::new(
        DMatrix::zeros(2, 2),
        DVector::from_vec(vec![1.0, 0.0]),
        a,
        DVector::from_vec(vec![1.0, 0.0, 0.0]),
        DVector::from_vec(vec![1.0, 1.0, 1.0]),
    )
    .unwrap();
    let sol = solve(&problem, &SolverSettings::default()).unwrap().into_solved().unwrap();
    assert!(sol.x[0].abs() < 1e-6 && (sol.x[1] - 1.0).abs() < 1e-6, "{:?}", sol.x);
}

#[test]
fn rejects_asymmetric_hessian_and_crossed_bounds() {
    let p = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
    assert!(QpProblem::new(p, DVector::zeros(2), DMatrix::identity(2, 2), -inf(2), inf(2)).is_err());
    let bad = QpProblem::new(
        DMatrix::identity(1, 1),
        DVector::zeros(1),
        DMatrix::identity(1, 1),
        DVector::from_element(1, 1.0),
        DVector::from_element(1, 0.0),
    );
    assert!(bad.is_err());
}

#[test]
fn invalid_settings() {
    let s = SolverSettings {
        alpha: 2.0,
        ..SolverSettings::default()
    };
    assert!(s.validate().is_err());
}

#[test]
fn max_iter_is_reported() {
    let settings = SolverSettings {
        max_iter: 3,
        polish: false,
        ..SolverSettings::default()
    };
    let sol = solve_box(
        DMatrix::from_element(1, 1, 2.0),
        DVector::from_element(1, -6.0),
        DVector::from_element(1, -1.0),
        DVector::from_element(1, 1.0),
        &settings,
    )
    .unwrap();
    assert_eq!(sol.status, SolveStatus::MaxIter);
    assert!(sol.into_solved().is_err());
}

fn random_problem(seed: u64) -> QpProblem {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let d = rng.random_range(1..=6);
    let m = rng.random_range(1..=8);
    let mut g = || rng.random_range(-1.0..1.0);
    let mm = DMatrix::from_fn(d, d, |_, _| g());
    let p = mm.transpose() * &mm + DMatrix::identity(d, d) * 0.1;
    let c = DVector::from_fn(d, |_, _| 3.0 * g());
    let a = DMatrix::from_fn(m, d, |_, _| g());
    let x0 = DVector::from_fn(d, |_, _| g());
    let ax0 = &a * &x0;
    let l = DVector::from_fn(m, |i, _| ax0[i] - 0.5 * (1.0 + g()));
    let u = DVector::from_fn(m, |i, _| ax0[i] + 0.5 * (1.0 + g()));
    QpProblem::new(p, c, a, l, u).unwrap()
}

#[test]
fn deterministic_iterates() {
    let settings = SolverSettings {
        trace: true,
        ..SolverSettings::default()
    };
    let problem = random_problem(3);
    let a = solve(&problem, &settings).unwrap();
    let b = solve(&problem, &settings).unwrap();
    assert_eq!(a.objective_trace, b.objective_trace);
    assert_eq!(a.x, b.x);
}

#[test]
fn objective_trend_is_non_increasing() {
    // the penalty is held fixed and polishing disabled so every iterate is
    // plain ADMM; windows of 100 iterations must not move the objective up
    // beyond the primal infeasibility they remove
    let settings = SolverSettings {
        trace: true,
        polish: false,
        adaptive_rho: false,
        rho: 1.0,
        max_iter: 2000,
        ..SolverSettings::default()
    };
    for seed in 0..20 {
        let problem = random_problem(seed);
        let sol = solve(&problem, &settings).unwrap();
        let t = &sol.objective_trace;
        let scale = 1.0 + sol.objective.abs();
        for w in t.chunks(100).collect::<Vec<_>>().windows(2) {
            let before = w[0].iter().sum::<f64>() / w[0].len() as f64;
            let after = w[1].iter().sum::<f64>() / w[1].len() as f64;
            assert!(after <= before + 1e-3 * scale || (after - sol.objective).abs() < 1e-6 * scale, "seed {seed}: {before} -> {after}");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn solved_solutions_are_feasible(seed in 0u64..10_000) {
        let problem = random_problem(seed);
        let sol = solve(&problem, &SolverSettings::default()).unwrap();
        prop_assert_eq!(sol.status, SolveStatus::Solved);
        let ax = &problem.a * &sol.x;
        let eps = 1e-8 + 1e-8 * ax.amax();
        for i in 0..ax.len() {
            prop_assert!(ax[i] >= problem.l[i] - eps && ax[i] <= problem.u[i] + eps);
        }
    }

    #[test]
    fn inactive_box_matches_newton_step(seed in 0u64..10_000) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let d = rng.random_range(1..=5);
        let mm = DMatrix::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
        let p = mm.transpose() * &mm + DMatrix::identity(d, d);
        let c = DVector::from_fn(d, |_, _| rng.random_range(-1.0..1.0));
        let expected = -p.clone().cholesky().unwrap().solve(&c);
        let wide = expected.amax() + 10.0;
        let sol = solve_box(p, c, DVector::from_element(d, -wide), DVector::from_element(d, wide), &SolverSettings::default()).unwrap();
        prop_assert!((&sol.x - &expected).amax() < 1e-7);
    }
}
