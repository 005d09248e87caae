use conic::dense::{min_eig, sym_eig, Mat};
use conic::{Cmp, LinExpr, ScalarKind, Sense, SemidefiniteProgram, SolveStatus, SolverOptions};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

fn opts() -> SolverOptions {
    SolverOptions::default()
}

#[test]
fn smallest_diagonal_making_psd() {
    // min t  s.t.  [[t, 1], [1, t]] >= 0; optimum t = 1 with X rank one.
    let mut sdp = SemidefiniteProgram::new(Sense::Minimize);
    let x = sdp.add_psd_block(2);
    let t = sdp.add_scalar(ScalarKind::Free);
    sdp.set_objective(LinExpr::new().scalar(t, 1.0));
    sdp.add_constraint(LinExpr::new().psd(x, 0, 0, 1.0).scalar(t, -1.0), Cmp::Eq, 0.0);
    sdp.add_constraint(LinExpr::new().psd(x, 1, 1, 1.0).scalar(t, -1.0), Cmp::Eq, 0.0);
    sdp.add_constraint(LinExpr::new().psd(x, 0, 1, 1.0), Cmp::Eq, 1.0);
    let sol = sdp.solve(&opts()).unwrap();
    assert_eq!(sol.status, SolveStatus::Optimal);
    assert!((sol.objective - 1.0).abs() < 1e-7);
    assert!((sol.scalars[t] - 1.0).abs() < 1e-7);
    assert!(min_eig(&sol.psd[x]) > -1e-9);
}

#[test]
fn unit_trace_maximum_is_top_eigenvalue() {
    let mut rng = ChaCha12Rng::seed_from_u64(41);
    let n = 5;
    let mut c = Mat::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v = rng.random_range(-1.0..1.0);
            c[(i, j)] = v;
            c[(j, i)] = v;
        }
    }
    let (w, v) = sym_eig(&c);
    let top = w[n - 1];

    let mut sdp = SemidefiniteProgram::new(Sense::Maximize);
    let x = sdp.add_psd_block(n);
    let mut obj = LinExpr::new();
    let mut trace = LinExpr::new();
    for i in 0..n {
        trace = trace.psd(x, i, i, 1.0);
        for j in 0..n {
            obj = obj.psd(x, i, j, 0.5 * c[(i, j)]);
            obj = obj.psd(x, j, i, 0.5 * c[(i, j)]);
        }
    }
    sdp.set_objective(obj);
    sdp.add_constraint(trace, Cmp::Eq, 1.0);
    let sol = sdp.solve(&opts()).unwrap();
    assert_eq!(sol.status, SolveStatus::Optimal);
    assert!((sol.objective - top).abs() < 1e-7, "{} vs {top}", sol.objective);
    // Optimizer is the projector on the top eigenvector.
    for i in 0..n {
        for j in 0..n {
            let proj = v[(i, n - 1)] * v[(j, n - 1)];
            assert!((sol.psd[x][(i, j)] - proj).abs() < 1e-5);
        }
    }
    // The multiplier of the trace row prices the objective completely.
    assert!((sol.duals[0] - top).abs() < 1e-6);
}

#[test]
fn negative_trace_is_infeasible() {
    let mut sdp = SemidefiniteProgram::new(Sense::Minimize);
    let x = sdp.add_psd_block(3);
    let mut trace = LinExpr::new();
    for i in 0..3 {
        trace = trace.psd(x, i, i, 1.0);
    }
    sdp.set_objective(LinExpr::new().psd(x, 0, 1, 1.0));
    sdp.add_constraint(trace, Cmp::Eq, -1.0);
    let sol = sdp.solve(&opts()).unwrap();
    assert_eq!(sol.status, SolveStatus::PrimalInfeasible);
    let f = sol.farkas.expect("certificate");
    // Aggregate f0 * tr X <= f0 * (-1): over the cone the left side has
    // minimum 0 (at X = 0) when f0 > 0, while the right side is negative,
    // so a positive multiplier certifies that no PSD X satisfies the row.
    assert!(f[0] > 1e-6);
}

#[test]
fn unbounded_direction_is_reported() {
    // max X_00 with only X_01 pinned; X_00 can grow alone.
    let mut sdp = SemidefiniteProgram::new(Sense::Maximize);
    let x = sdp.add_psd_block(2);
    sdp.set_objective(LinExpr::new().psd(x, 0, 0, 1.0));
    sdp.add_constraint(LinExpr::new().psd(x, 0, 1, 2.0), Cmp::Eq, 0.0);
    let sol = sdp.solve(&opts()).unwrap();
    assert_eq!(sol.status, SolveStatus::DualInfeasible);
    assert!(sol.objective > 1e-8, "ray must improve the objective");
    assert!(min_eig(&sol.psd[x]) > -1e-9, "ray must stay in the cone");
}

#[test]
fn correlator_matrix_bound_for_two_by_two_game() {
    // Five dichotomic operators (identity, two per side). Unit diagonal,
    // positive semidefiniteness, and the objective reading off the four
    // cross correlations with signs + + + - yields 2 sqrt 2.
    let mut sdp = SemidefiniteProgram::new(Sense::Maximize);
    let g = sdp.add_psd_block(5);
    for i in 0..5 {
        sdp.add_constraint(LinExpr::new().psd(g, i, i, 1.0), Cmp::Eq, 1.0);
    }
    // Index map: 1, 2 on one side; 3, 4 on the other.
    let obj = LinExpr::new()
        .psd(g, 1, 3, 1.0)
        .psd(g, 1, 4, 1.0)
        .psd(g, 2, 3, 1.0)
        .psd(g, 2, 4, -1.0);
    sdp.set_objective(obj);
    let sol = sdp.solve(&opts()).unwrap();
    assert_eq!(sol.status, SolveStatus::Optimal);
    let expected = 2.0 * std::f64::consts::SQRT_2;
    assert!(
        (sol.objective - expected).abs() < 1e-7,
        "{} vs {expected}",
        sol.objective
    );
    // Complementarity: unit diagonal prices the whole objective.
    let priced: f64 = sol.duals.iter().sum();
    assert!((priced - expected).abs() < 1e-6);
}

#[test]
fn strong_duality_on_random_feasible_instances() {
    let mut rng = ChaCha12Rng::seed_from_u64(42);
    for trial in 0..20 {
        let n = 4;
        let m = 3;
        // A strictly feasible point X0 = R R^T + I fixes attainable rhs.
        let mut r = Mat::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                r[(i, j)] = rng.random_range(-1.0..1.0);
            }
        }
        let mut x0 = Mat::matmul(&r, &r.transpose());
        for i in 0..n {
            x0[(i, i)] += 1.0;
        }
        let mut sdp = SemidefiniteProgram::new(Sense::Minimize);
        let x = sdp.add_psd_block(n);
        let mut cmat = Mat::zeros(n, n);
        let mut obj = LinExpr::new();
        for i in 0..n {
            for j in i..n {
                let v = rng.random_range(-1.0..1.0);
                cmat[(i, j)] = v;
                cmat[(j, i)] = v;
                obj = obj.psd(x, i, j, if i == j { v } else { 2.0 * v });
            }
        }
        sdp.set_objective(obj);
        let mut amats = Vec::new();
        for _ in 0..m {
            let mut a = Mat::zeros(n, n);
            let mut expr = LinExpr::new();
            for i in 0..n {
                for j in i..n {
                    let v = rng.random_range(-1.0..1.0);
                    a[(i, j)] = v;
                    a[(j, i)] = v;
                    expr = expr.psd(x, i, j, if i == j { v } else { 2.0 * v });
                }
            }
            let rhs: f64 = (0..n)
                .map(|i| (0..n).map(|j| a[(i, j)] * x0[(i, j)]).sum::<f64>())
                .sum();
            sdp.add_constraint(expr, Cmp::Eq, rhs);
            amats.push(a);
        }
        let sol = sdp.solve(&opts()).unwrap();
        match sol.status {
            SolveStatus::Optimal => {
                // X0 is feasible, so the minimum cannot exceed its value.
                let at_x0: f64 = (0..n)
                    .map(|i| (0..n).map(|j| cmat[(i, j)] * x0[(i, j)]).sum::<f64>())
                    .sum();
                assert!(sol.objective <= at_x0 + 1e-7, "trial {trial}");
                // Dual feasibility: C - sum y_i A_i >= 0.
                let mut s = cmat.clone();
                for (yi, a) in sol.duals.iter().zip(&amats) {
                    s.axpy(-yi, a);
                }
                assert!(min_eig(&s) > -1e-7, "trial {trial}: dual slack not PSD");
                // Strong duality: b^T y equals the objective.
                let by: f64 = sol
                    .duals
                    .iter()
                    .zip(amats.iter())
                    .map(|(yi, a)| {
                        let rhs: f64 = (0..n)
                            .map(|i| (0..n).map(|j| a[(i, j)] * x0[(i, j)]).sum::<f64>())
                            .sum();
                        yi * rhs
                    })
                    .sum();
                assert!((by - sol.objective).abs() < 1e-6, "trial {trial}: gap");
            }
            SolveStatus::DualInfeasible => {
                // Legitimate for random data; the ray must improve and stay
                // feasible for the homogeneous system.
                assert!(sol.objective < -1e-8, "trial {trial}");
            }
            SolveStatus::PrimalInfeasible => {
                panic!("trial {trial}: X0 is feasible by construction");
            }
        }
    }
}

#[test]
fn scalar_kinds_are_respected() {
    // min u + v  s.t.  u + v >= -5, u >= X_00, X_00 = 2, v nonneg.
    let mut sdp = SemidefiniteProgram::new(Sense::Minimize);
    let x = sdp.add_psd_block(1);
    let u = sdp.add_scalar(ScalarKind::Free);
    let v = sdp.add_scalar(ScalarKind::Nonneg);
    sdp.set_objective(LinExpr::new().scalar(u, 1.0).scalar(v, 1.0));
    sdp.add_constraint(LinExpr::new().scalar(u, 1.0).scalar(v, 1.0), Cmp::Ge, -5.0);
    sdp.add_constraint(LinExpr::new().scalar(u, 1.0).psd(x, 0, 0, -1.0), Cmp::Ge, 0.0);
    sdp.add_constraint(LinExpr::new().psd(x, 0, 0, 1.0), Cmp::Eq, 2.0);
    let sol = sdp.solve(&opts()).unwrap();
    assert_eq!(sol.status, SolveStatus::Optimal);
    // v cannot go below zero, u cannot go below X_00 = 2.
    assert!((sol.objective - 2.0).abs() < 1e-7);
    assert!((sol.scalars[u] - 2.0).abs() < 1e-7);
    assert!(sol.scalars[v].abs() < 1e-7);
}
