mod common;

use common::*;
use foresight::qp::{solve_qp, QpError, QpProblem, QpSettings};
use nalgebra::{dmatrix, dvector, DMatrix, DVector};
use proptest::prelude::*;

fn problem(r: RandomQp) -> QpProblem {
    QpProblem { hessian: r.hessian, linear: r.linear, constraints: r.constraints, lower: r.lower, upper: r.upper }
}

#[test]
fn clipped_scalar() {
    // min (u − 1)² s.t. u ≤ 0.5
    let qp = QpProblem {
        hessian: dmatrix![2.0],
        linear: dvector![-2.0],
        constraints: dmatrix![1.0],
        lower: dvector![f64::NEG_INFINITY],
        upper: dvector![0.5],
    };
    let sol = solve_qp(&qp, &QpSettings::default()).unwrap();
    assert!((sol.x[0] - 0.5).abs() < 1e-12);
    assert!(sol.multipliers[0] < 0.0, "upper bound active");
    assert_eq!(sol.active_rows, vec![0]);
}

#[test]
fn unconstrained_newton_step() {
    let h = dmatrix![4.0, 1.0; 1.0, 3.0];
    let g = dvector![1.0, -2.0];
    let sol = solve_qp(&QpProblem::unconstrained(h.clone(), g.clone()), &QpSettings::default()).unwrap();
    let expected = -h.clone().try_inverse().unwrap() * &g;
    assert!((sol.x - expected).amax() < 1e-12);
}

#[test]
fn contradictory_rows_are_infeasible() {
    let qp = QpProblem {
        hessian: DMatrix::identity(2, 2),
        linear: DVector::zeros(2),
        constraints: dmatrix![1.0, 0.0; 1.0, 0.0],
        lower: dvector![1.0, f64::NEG_INFINITY],
        upper: dvector![f64::INFINITY, 0.0],
    };
    assert_eq!(solve_qp(&qp, &QpSettings::default()).unwrap_err(), QpError::Infeasible);
}

#[test]
fn malformed_problems_are_rejected() {
    let mut qp = QpProblem::unconstrained(DMatrix::identity(2, 2), DVector::zeros(3));
    assert!(matches!(solve_qp(&qp, &QpSettings::default()), Err(QpError::Dimension(_))));
    qp = QpProblem::unconstrained(dmatrix![1.0, 0.0; 0.0, -1.0], DVector::zeros(2));
    assert_eq!(solve_qp(&qp, &QpSettings::default()).unwrap_err(), QpError::NotPositiveDefinite);
}

#[test]
fn solves_are_deterministic() {
    let mut rng = rng(7);
    let qp = problem(random_qp(&mut rng, 20, 40));
    let a = solve_qp(&qp, &QpSettings::default()).unwrap();
    let b = solve_qp(&qp, &QpSettings::default()).unwrap();
    assert_eq!(a, b);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn matches_dual_gradient_oracle(seed in any::<u64>()) {
        let mut rng = rng(seed);
        let r = random_qp(&mut rng, 16, 32);
        let oracle = oracle_qp(&r, 1e-10, 1_000_000);
        prop_assume!(oracle.gap < 1e-9 && oracle.violation < 1e-9);
        let qp = problem(r);
        let sol = solve_qp(&qp, &QpSettings::default()).unwrap();
        prop_assert!((sol.objective - oracle.objective).abs() <= 1e-6);
        prop_assert!(qp.max_violation(&sol.x) <= 1e-8);
        prop_assert!((&sol.x - &oracle.x).amax() <= 1e-4);
    }

    #[test]
    fn kkt_conditions_hold(seed in any::<u64>()) {
        let mut rng = rng(seed);
        let qp = problem(random_qp(&mut rng, 12, 24));
        let sol = solve_qp(&qp, &QpSettings::default()).unwrap();
        prop_assert!(sol.stationarity_residual(&qp) <= 1e-8);
        let ax = &qp.constraints * &sol.x;
        for i in 0..qp.num_rows() {
            let lam = sol.multipliers[i];
            // Complementarity: a non-zero multiplier sits on the bound its sign names.
            if lam > 1e-9 {
                prop_assert!((ax[i] - qp.lower[i]).abs() <= 1e-8);
            } else if lam < -1e-9 {
                prop_assert!((ax[i] - qp.upper[i]).abs() <= 1e-8);
            }
        }
    }
}
