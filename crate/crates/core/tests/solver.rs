#![allow(clippy::field_reassign_with_default)]

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use regdfo::solver::{audit, solve_with_callback, Phase};
use regdfo::testbed::{get_problem, FnLeastSquares, NoiseModel, NoisyProblem};
use regdfo::{solve, Regularizer, SolverConfig, Termination};

/// Exact minimizer of `g^T s + s^T H s / 2` over `||s|| <= delta` for
/// positive definite `H`, by bisection on the multiplier.
fn exact_tr_step(g: &DVector<f64>, h: &DMatrix<f64>, delta: f64) -> DVector<f64> {
    let solve_shift = |lam: f64| {
        let shifted = h + DMatrix::identity(g.len(), g.len()) * lam;
        -shifted.cholesky().unwrap().solve(g)
    };
    let newton = solve_shift(0.0);
    if newton.norm() <= delta {
        return newton;
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    while solve_shift(hi).norm() > delta {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if solve_shift(mid).norm() > delta {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    solve_shift(hi)
}

#[test]
fn matches_reference_gauss_newton_on_linear_residuals() {
    // Linear residuals make the interpolation model exact, so every step is
    // the exact trust-region step, every ratio is 1 and the radius follows
    // the successful branch.
    let a = DMatrix::from_row_slice(3, 2, &[2.0, 0.5, 0.3, 1.5, 0.2, -0.4]);
    let b = DVector::from_vec(vec![1.0, -2.0, 0.5]);
    let x0 = DVector::from_vec(vec![30.0, -40.0]);
    let mut cfg = SolverConfig::default();
    cfg.delta0_init = Some(0.05);

    let mut reference = vec![x0.clone()];
    let mut x = x0.clone();
    let mut delta = cfg.initial_radius(&x0);
    let hess = a.transpose() * &a;
    for _ in 0..5 {
        let g = a.transpose() * (&a * &x - &b);
        let s = exact_tr_step(&g, &hess, delta);
        x += &s;
        delta = (cfg.gamma_inc * delta).max(cfg.gamma_inc_bar * s.norm()).min(cfg.delta_max);
        reference.push(x.clone());
    }

    let (a2, b2) = (a.clone(), b.clone());
    let mut problem = FnLeastSquares::new(2, 3, move |x: &DVector<f64>| &a2 * x - &b2);
    // Progress reports the point after the iteration.
    let mut iterates = vec![x0.clone()];
    let mut phases = Vec::new();
    solve_with_callback(&mut problem, &x0, &Regularizer::Zero, &cfg, |p| {
        if p.phase == Phase::Successful {
            iterates.push(p.x.clone());
        }
        phases.push(p.phase);
    })
    .unwrap();
    assert!(phases[..5].iter().all(|&p| p == Phase::Successful), "{phases:?}");
    for k in 0..=5 {
        let err = (&iterates[k] - &reference[k]).amax();
        assert!(err <= 1e-8, "iterate {k}: {} vs {}", iterates[k], reference[k]);
    }
}

#[test]
fn budget_is_never_exceeded() {
    for name in ["rosenbrock", "watson", "osborne2"] {
        let p = get_problem(name).unwrap();
        let mut cfg = SolverConfig::default();
        cfg.max_evals = 7 * (p.n + 1);
        let mut w = NoisyProblem::new(&p, NoiseModel::none());
        let r = solve(&mut w, &p.x0, &Regularizer::l1(1.0), &cfg).unwrap();
        assert!(r.history.len() <= cfg.max_evals, "{name}");
        assert_eq!(r.termination, Termination::Budget, "{name}");
        assert!(audit(&r, &cfg).is_empty());
    }
}

#[test]
fn box_constraint_is_respected() {
    let p = get_problem("rosenbrock").unwrap();
    let h = Regularizer::boxed(-2.0, 0.5);
    let x0 = DVector::from_vec(vec![-1.2, 0.5]);
    let mut w = NoisyProblem::new(&p, NoiseModel::none());
    let r = solve(&mut w, &x0, &h, &SolverConfig::default()).unwrap();
    assert!(r.history.iter().filter(|e| e.phi.is_finite()).all(|e| h.contains(&e.x)));
    // The constrained minimizer is (0.5, 0.25) with Phi = 0.125.
    assert!((r.phi_best - 0.125).abs() < 1e-6, "{}", r.phi_best);
}

#[test]
fn noisy_runs_stay_audit_clean() {
    let p = get_problem("beale").unwrap();
    for spec in ["mult:1e-2", "add:1e-2"] {
        let noise: NoiseModel = spec.parse().unwrap();
        let mut cfg = SolverConfig::default();
        cfg.max_evals = 100 * (p.n + 1);
        let mut w = NoisyProblem::new(&p, noise.with_seed(5));
        let r = solve(&mut w, &p.x0, &Regularizer::l1(1.0), &cfg).unwrap();
        assert!(audit(&r, &cfg).is_empty());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn random_linear_l1_runs_are_audit_clean(
        entries in prop::collection::vec(-2.0f64..2.0, 12),
        target in prop::collection::vec(-3.0f64..3.0, 4),
        start in prop::collection::vec(-2.0f64..2.0, 3),
        lambda in 0.0f64..2.0,
    ) {
        let a = DMatrix::from_row_slice(4, 3, &entries);
        let b = DVector::from_vec(target);
        let x0 = DVector::from_vec(start);
        let mut cfg = SolverConfig::default();
        cfg.max_evals = 200;
        let mut problem = FnLeastSquares::new(3, 4, move |x: &DVector<f64>| &a * x - &b);
        let r = solve(&mut problem, &x0, &Regularizer::l1(lambda), &cfg).unwrap();
        prop_assert!(audit(&r, &cfg).is_empty(), "{:?}", audit(&r, &cfg));
        prop_assert!(r.history.len() <= cfg.max_evals);
        prop_assert!(r.phi_best <= r.history[0].phi);
        let best = r.history.iter().map(|e| e.phi).fold(f64::INFINITY, f64::min);
        prop_assert_eq!(best, r.phi_best);
    }
}
