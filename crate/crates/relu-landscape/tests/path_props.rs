//! Continuation properties: the leak path from consistency solutions to
//! critical points, its closed-form initial derivatives, the
//! finite-difference oracle, and the frozen endpoint anchors.

use relu_landscape::consistency_solver::{
    k_track, solve_consistency, ConsistencySeed, NewtonConfig,
};
use relu_landscape::objective_gradient::gradient_reduced;
use relu_landscape::path_continuation::{
    derivative_fd_oracle, direct_jump, initial_derivative_p0, initial_derivative_p1, lambda_path,
    lambda_step_solve, p0_coefficients, p1_sensitivities, PathError,
};
use relu_landscape::symmetry_charts::{embed, in_omega_a, isotropy_contains, Chart};
use relu_landscape::Family;

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |acc, x| acc.max(x.abs()))
}

fn seed_for(family: Family) -> ConsistencySeed {
    ConsistencySeed::defaults()
        .into_iter()
        .find(|s| s.family == family)
        .unwrap()
}

/// Consistency solution of a family at width k, tracking from the seed's
/// own width when they differ.
fn consistency_at(family: Family, k: f64) -> Vec<f64> {
    let seed = seed_for(family);
    let cfg = NewtonConfig::default();
    let start = solve_consistency(seed.chart(), seed.k as f64, &seed.values, &cfg)
        .unwrap()
        .xi;
    if (seed.k as f64 - k).abs() < 1e-12 {
        return start;
    }
    k_track(seed.chart(), &start, seed.k as f64, k, 0.1, &cfg)
        .unwrap()
        .last()
        .unwrap()
        .1
        .clone()
}

#[test]
fn initial_derivative_values_at_width_six() {
    let k = 6.0;
    let xi_a = consistency_at(Family::A, k);
    let (a1, a2) = p0_coefficients(xi_a[0] - 1.0, k).unwrap();
    assert!((a1 - 4.9889).abs() <= 1e-3, "a1 = {a1}");
    assert!((a2 + 9.7101).abs() <= 1e-3, "a2 = {a2}");
    let tangent = initial_derivative_p0(xi_a[0] - 1.0, k).unwrap();
    assert!((tangent[0] + 1.68903e-3).abs() <= 1e-6, "xi'_1 = {}", tangent[0]);
    assert!((tangent[1] + 8.67792e-4).abs() <= 1e-6, "xi'_2 = {}", tangent[1]);

    let xi_ii = consistency_at(Family::II, k);
    let seed = ConsistencySeed { family: Family::II, k: 6, values: xi_ii.clone() };
    let d_ii = initial_derivative_p1(&seed, k).unwrap();
    // Small tangent throughout; the corner coordinate moves fastest at
    // just under 8e-3. The endpoint drift doubles each component almost
    // exactly, so the two are cross-checked against each other.
    assert!(d_ii.iter().all(|v| v.abs() < 8.2e-3), "{d_ii:?}");
    let end = direct_jump(Chart::delta_sk1(), &xi_ii, k, &NewtonConfig::default()).unwrap();
    for ((e, x0), d) in end.xi.iter().zip(&xi_ii).zip(&d_ii) {
        let ratio = (e - x0) / d;
        assert!((1.8..=2.2).contains(&ratio), "drift/tangent ratio {ratio}");
    }
}

#[test]
fn p1_initial_derivative_matches_the_continuation_oracle() {
    let cfg = NewtonConfig::default();
    for family in [Family::I, Family::II] {
        for k in [6.0, 10.0] {
            let xi0 = consistency_at(family, k);
            let seed = ConsistencySeed { family, k: k as usize, values: xi0.clone() };
            let closed = initial_derivative_p1(&seed, k).unwrap();
            let oracle = derivative_fd_oracle(Chart::delta_sk1(), &xi0, k, 1e-4, &cfg).unwrap();
            for (c, o) in closed.iter().zip(&oracle) {
                assert!(
                    (c - o).abs() <= 1e-4 * o.abs().max(1e-4),
                    "{family} k={k}: {c} vs oracle {o}"
                );
            }
        }
    }
}

#[test]
fn reduced_derivative_system_grows_better_conditioned_with_width() {
    let det_at = |k: f64| {
        let xi = consistency_at(Family::II, k);
        p1_sensitivities(&xi, k).unwrap().jstar_determinant().abs()
    };
    let (d6, d100) = (det_at(6.0), det_at(100.0));
    assert!(d100 > d6, "|det| at k=100 ({d100}) vs k=6 ({d6})");
}

#[test]
fn fd_oracle_agrees_with_p0_and_scales_linearly() {
    let k = 6.0;
    let cfg = NewtonConfig::default();
    let xi0 = consistency_at(Family::A, k);
    let closed = initial_derivative_p0(xi0[0] - 1.0, k).unwrap();
    let oracle = derivative_fd_oracle(Chart::delta_sk(), &xi0, k, 1e-4, &cfg).unwrap();
    for (c, o) in closed.iter().zip(&oracle) {
        assert!((c - o).abs() <= 1e-4, "{c} vs {o}");
    }
    // First-order accuracy: halving delta halves the change between
    // successive estimates.
    let est = |d: f64| derivative_fd_oracle(Chart::delta_sk(), &xi0, k, d, &cfg).unwrap();
    let diff = |d: f64| {
        let (a, b) = (est(d), est(d / 2.0));
        inf_norm(&a.iter().zip(&b).map(|(x, y)| x - y).collect::<Vec<_>>())
    };
    let (d1, d2) = (diff(8e-3), diff(2e-3));
    let ratio = d1 / d2;
    assert!((1.7..=2.4).contains(&(ratio / 2.0)), "halving ratio {ratio}");
}

#[test]
fn direct_jump_matches_the_tracked_path_endpoint() {
    let cfg = NewtonConfig::default();
    for family in [Family::A, Family::I, Family::II] {
        let chart = seed_for(family).chart();
        for k in [6.0, 10.0, 20.0] {
            let xi0 = consistency_at(family, k);
            let jump = direct_jump(chart, &xi0, k, &cfg).unwrap();
            let path = lambda_path(chart, &xi0, k, 0.1, &cfg).unwrap();
            let end = path.last().unwrap();
            assert_eq!(end.lambda, 1.0);
            for (a, b) in jump.xi.iter().zip(&end.xi) {
                assert!((a - b).abs() <= 1e-10, "{family} k={k}: {a} vs {b}");
            }
        }
    }
    // The finer grid agrees just as well.
    let xi0 = consistency_at(Family::II, 6.0);
    let chart = Chart::delta_sk1();
    let jump = direct_jump(chart, &xi0, 6.0, &cfg).unwrap();
    let path = lambda_path(chart, &xi0, 6.0, 0.01, &cfg).unwrap();
    assert_eq!(path.len(), 100);
    for (a, b) in jump.xi.iter().zip(&path.last().unwrap().xi) {
        assert!((a - b).abs() <= 1e-10);
    }
}

#[test]
fn path_samples_stay_admissible_and_isotropic() {
    let cfg = NewtonConfig::default();
    let k = 6.0;
    for family in [Family::A, Family::I] {
        let chart = seed_for(family).chart();
        let xi0 = consistency_at(family, k);
        let path = lambda_path(chart, &xi0, k, 0.05, &cfg).unwrap();
        assert_eq!(path.len(), 20);
        for (i, sample) in path.iter().enumerate() {
            let expect = ((i + 1) as f64 * 0.05).min(1.0);
            assert!((sample.lambda - expect).abs() < 1e-12);
            assert!(sample.residual_norm <= cfg.tol_residual);
            let w = embed(chart, &sample.xi, k as usize).unwrap();
            let teacher = relu_landscape::symmetry_charts::WeightMatrix::identity(6);
            assert!(in_omega_a(&w, &teacher, 1e-8).unwrap());
            assert!(isotropy_contains(&w, chart, 1e-12));
        }
        // Drift stays small along the whole type-A path.
        if family == Family::A {
            let drift = path
                .iter()
                .flat_map(|s| s.xi.iter().zip(&xi0).map(|(a, b)| (a - b).abs()))
                .fold(0.0, f64::max);
            assert!(drift <= 5e-3, "type A drift {drift}");
        }
    }
}

#[test]
fn endpoint_critical_points_match_frozen_values() {
    let cfg = NewtonConfig::default();
    let frozen: [(Family, &[f64]); 3] = [
        (Family::A, &[-0.663397, 0.330710]),
        (Family::I, &[-0.587730, 0.391154, -0.0137989, 0.0167703, 1.0683956]),
        (Family::II, &[0.986704, -0.0504134, 0.308011, 0.224516, -0.601512]),
    ];
    for (family, expect) in frozen {
        let chart = seed_for(family).chart();
        let xi0 = consistency_at(family, 6.0);
        let sol = direct_jump(chart, &xi0, 6.0, &cfg).unwrap();
        assert!(sol.iters <= 4, "{family}: {} iterations", sol.iters);
        for (got, want) in sol.xi.iter().zip(expect) {
            assert!(
                (got - want).abs() <= 1e-6 * want.abs().max(1.0),
                "{family}: {got} vs {want}"
            );
        }
        let grad = gradient_reduced(chart, &sol.xi, 6.0, 1.0).unwrap();
        assert!(inf_norm(&grad) <= 1e-12);
        // Re-solving from a critical point is a no-op.
        let again = lambda_step_solve(chart, &sol.xi, 6.0, 1.0, &cfg).unwrap();
        assert_eq!(again.iters, 0);
        assert_eq!(again.xi, sol.xi);
    }
}

#[test]
fn block_family_jump_at_large_width() {
    let cfg = NewtonConfig::default();
    let seed = seed_for(Family::M);
    let k = seed.k as f64;
    let chart = seed.chart();
    let xi0 = solve_consistency(chart, k, &seed.values, &cfg).unwrap().xi;
    let sol = direct_jump(chart, &xi0, k, &cfg).unwrap();
    let expect = [1.000503, -2.567e-8, 1.999e-4, 1.283e-4, 1.929e-4, -0.999];
    for (got, want) in sol.xi.iter().zip(expect) {
        assert!((got - want).abs() <= 5e-3 * want.abs(), "{got} vs {want}");
    }
    // The consistency solution is already a columnwise approximation of
    // the critical point at this width.
    for (a, b) in xi0.iter().zip(&sol.xi) {
        assert!((a - b).abs() <= 1e-7, "{a} vs {b}");
    }
    let grad = gradient_reduced(chart, &sol.xi, k, 1.0).unwrap();
    assert!(inf_norm(&grad) <= 1e-12);
}

#[test]
fn endpoint_drift_magnitudes_for_the_second_family() {
    let cfg = NewtonConfig::default();
    let xi0 = consistency_at(Family::II, 6.0);
    let sol = direct_jump(Chart::delta_sk1(), &xi0, 6.0, &cfg).unwrap();
    let drift: Vec<f64> = sol.xi.iter().zip(&xi0).map(|(a, b)| (a - b).abs()).collect();
    assert!((1e-3..1e-2).contains(&drift[0]), "diag drift {}", drift[0]);
    assert!((1e-3..1e-2).contains(&drift[1]), "off-diag drift {}", drift[1]);
    assert!((1e-2..1e-1).contains(&drift[4]), "corner drift {}", drift[4]);
}

/// Diagonal-family points embed into the distinguished-row chart as
/// (a, b, b, b, a); the machinery there must reproduce the equal-angle
/// degeneracies and the diagonal tangent.
#[test]
fn diagonal_points_pass_through_the_distinguished_row_machinery() {
    let k = 6.0;
    let xi_a = consistency_at(Family::A, k);
    let lifted = vec![xi_a[0], xi_a[1], xi_a[1], xi_a[1], xi_a[0]];
    let sens = p1_sensitivities(&lifted, k).unwrap();
    assert!((sens.tau - sens.kappa).abs() < 1e-14);
    assert!((sens.theta - sens.lambda_angle).abs() < 1e-14);
    assert!((sens.alphas[0] - sens.alphas[4]).abs() < 1e-14);
    assert!((sens.alphas[1] - sens.alphas[2]).abs() < 1e-14);
    assert!((sens.alphas[1] - sens.alphas[3]).abs() < 1e-14);
    let seed = ConsistencySeed { family: Family::I, k: 6, values: lifted };
    let lifted_tangent = initial_derivative_p1(&seed, k).unwrap();
    // The tangent keeps the diagonal symmetry exactly.
    assert!((lifted_tangent[0] - lifted_tangent[4]).abs() <= 1e-10);
    assert!((lifted_tangent[1] - lifted_tangent[2]).abs() <= 1e-10);
    assert!((lifted_tangent[1] - lifted_tangent[3]).abs() <= 1e-10);
    // Against the diagonal chart's own system the agreement is limited by
    // the closed-form coefficient pair, which tracks the exact gradient
    // row to a few parts in 1e4; the tangents land within 1e-6 of each
    // other.
    let diag = initial_derivative_p0(xi_a[0] - 1.0, k).unwrap();
    let expect = [diag[0], diag[1], diag[1], diag[1], diag[0]];
    for (got, want) in lifted_tangent.iter().zip(expect) {
        assert!((got - want).abs() <= 1e-6, "{got} vs {want}");
    }
    // The distinguished-row tangent is the sharper one: it matches the
    // continuation oracle on the lifted chart to first order.
    let oracle = derivative_fd_oracle(
        Chart::delta_sk1(),
        &seed.values,
        k,
        1e-4,
        &NewtonConfig::default(),
    )
    .unwrap();
    for (got, want) in lifted_tangent.iter().zip(&oracle) {
        assert!((got - want).abs() <= 1e-6, "{got} vs oracle {want}");
    }
}

#[test]
fn stalled_paths_return_the_completed_prefix() {
    let xi0 = consistency_at(Family::II, 6.0);
    let cfg = NewtonConfig { max_iters: 1, ..NewtonConfig::default() };
    let err = lambda_path(Chart::delta_sk1(), &xi0, 6.0, 0.5, &cfg).unwrap_err();
    match err {
        PathError::PathStalled { lambda, completed } => {
            assert_eq!(lambda, 0.5);
            assert!(completed.is_empty());
        }
        other => panic!("unexpected error {other:?}"),
    }
}
