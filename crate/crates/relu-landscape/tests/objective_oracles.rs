//! Cross-checks of the chart-reduced objective and gradient against the
//! full k x k implementations and against finite differences.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use relu_landscape::objective_gradient::{
    gradient_full, gradient_reduced, objective_full, objective_reduced,
};
use relu_landscape::symmetry_charts::{
    embed, group_act, isotropy_contains, Chart, Perm, WeightMatrix,
};

fn charts_for(k: usize) -> Vec<Chart> {
    let mut out = vec![Chart::delta_sk(), Chart::delta_sk1()];
    for p in 2..=(k.saturating_sub(2)).min(4) {
        out.push(Chart::delta_block(p).unwrap());
    }
    out
}

fn random_xi(rng: &mut ChaCha8Rng, m: usize) -> Vec<f64> {
    (0..m).map(|_| rng.random_range(-1.2..1.2)).collect()
}

fn random_matrix(rng: &mut ChaCha8Rng, k: usize) -> WeightMatrix {
    let mut w = WeightMatrix::zeros(k);
    for i in 0..k {
        for j in 0..k {
            w.set(i, j, rng.sample(StandardNormal));
        }
    }
    w
}

fn random_perm(rng: &mut ChaCha8Rng, n: usize) -> Perm {
    let mut img: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        img.swap(i, rng.random_range(0..=i));
    }
    Perm::from_images(img).unwrap()
}

/// On every chart the m reduced gradient entries must equal the matching
/// entries of the full gradient, and the objectives must agree.
#[test]
fn reduced_agrees_with_full_on_random_chart_points() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut checked = 0usize;
    for k in [4usize, 7, 10, 16] {
        for chart in charts_for(k) {
            for _ in 0..8 {
                let xi = random_xi(&mut rng, chart.m());
                let Ok(w) = embed(chart, &xi, k) else { unreachable!() };
                let lambda = rng.random_range(0.0..=1.0);
                let (f_red, g_red) = match (
                    objective_reduced(chart, &xi, k as f64, lambda),
                    gradient_reduced(chart, &xi, k as f64, lambda),
                ) {
                    (Ok(f), Ok(g)) => (f, g),
                    // Random xi occasionally lands near a degenerate angle;
                    // the full machinery has no such guard, so skip.
                    _ => continue,
                };
                let f_full = objective_full(&w, lambda).unwrap();
                assert!(
                    (f_full - f_red).abs() <= 1e-12 * f_full.abs().max(1.0),
                    "objective k={k} chart={chart:?}: {f_red} vs {f_full}"
                );
                let g_full = gradient_full(&w, lambda).unwrap();
                for (c, (i, j)) in chart.entry_positions(k).into_iter().enumerate() {
                    assert!(
                        (g_red[c] - g_full.get(i, j)).abs() <= 1e-12,
                        "gradient k={k} chart={chart:?} coord {c}: {} vs {}",
                        g_red[c],
                        g_full.get(i, j)
                    );
                }
                checked += 1;
            }
        }
    }
    assert!(checked >= 100, "only {checked} admissible sample points");
}

/// Central differences of the full objective reproduce the full gradient.
#[test]
fn full_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let k = 5;
    let w = random_matrix(&mut rng, k);
    let lambda = 0.85;
    let g = gradient_full(&w, lambda).unwrap();
    let h = 1e-6;
    for _ in 0..50 {
        let (i, j) = (rng.random_range(0..k), rng.random_range(0..k));
        let mut wp = w.clone();
        wp.set(i, j, w.get(i, j) + h);
        let mut wm = w.clone();
        wm.set(i, j, w.get(i, j) - h);
        let fd =
            (objective_full(&wp, lambda).unwrap() - objective_full(&wm, lambda).unwrap())
                / (2.0 * h);
        let scale = g.get(i, j).abs().max(1.0);
        assert!(
            (fd - g.get(i, j)).abs() <= 1e-6 * scale,
            "entry ({i},{j}): fd {fd} vs {}",
            g.get(i, j)
        );
    }
}

/// The objective is invariant and the gradient equivariant under
/// simultaneous row and column permutations.
#[test]
fn permutation_invariance_and_equivariance() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let k = 6;
    for _ in 0..20 {
        let w = random_matrix(&mut rng, k);
        let rho = random_perm(&mut rng, k);
        let eta = random_perm(&mut rng, k);
        let wg = group_act(&rho, &eta, &w).unwrap();
        let lambda = rng.random_range(0.0..=1.0);
        let f = objective_full(&w, lambda).unwrap();
        let fg = objective_full(&wg, lambda).unwrap();
        assert!((f - fg).abs() <= 1e-12 * f.abs().max(1.0), "{f} vs {fg}");
        let grad_then_act = group_act(&rho, &eta, &gradient_full(&w, lambda).unwrap()).unwrap();
        let act_then_grad = gradient_full(&wg, lambda).unwrap();
        assert!(grad_then_act.sub(&act_then_grad).unwrap().max_abs() <= 1e-12);
    }
}

/// At a fixed-space point the gradient stays in the fixed space, so chart
/// coordinates capture the whole gradient.
#[test]
fn gradient_is_tangent_to_fixed_spaces() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    for k in [5usize, 8] {
        for chart in charts_for(k) {
            for _ in 0..5 {
                let xi = random_xi(&mut rng, chart.m());
                let w = embed(chart, &xi, k).unwrap();
                let g = gradient_full(&w, rng.random_range(0.0..=1.0)).unwrap();
                assert!(
                    isotropy_contains(&g, chart, 1e-12),
                    "k={k} chart={chart:?} xi={xi:?}"
                );
            }
        }
    }
}

/// The reduced gradient is affine in lambda by construction; interpolating
/// the endpoints reproduces interior values to round-off.
#[test]
fn reduced_gradient_is_linear_in_lambda() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let k = 9.0;
    for chart in charts_for(9) {
        for _ in 0..10 {
            let xi = random_xi(&mut rng, chart.m());
            let (g0, g1) = match (
                gradient_reduced(chart, &xi, k, 0.0),
                gradient_reduced(chart, &xi, k, 1.0),
            ) {
                (Ok(a), Ok(b)) => (a, b),
                _ => continue,
            };
            for lambda in [0.25, 0.5, 0.75] {
                let g = gradient_reduced(chart, &xi, k, lambda).unwrap();
                for c in 0..chart.m() {
                    let lin = g0[c] + lambda * (g1[c] - g0[c]);
                    assert!((g[c] - lin).abs() <= 1e-12, "lambda={lambda} coord {c}");
                }
            }
        }
    }
}

/// At lambda = 0 the gradient vanishes exactly on the unit-column-sum set
/// and nowhere else.
#[test]
fn leak_zero_critical_set_is_unit_column_sums() {
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    let k = 7.0;
    // p = 0: column sum xi_1 + (k-1) xi_2.
    for _ in 0..20 {
        let xi2 = rng.random_range(-0.5..0.5);
        let xi = [1.0 - (k - 1.0) * xi2, xi2];
        let Ok(g) = gradient_reduced(Chart::delta_sk(), &xi, k, 0.0) else { continue };
        assert!(g.iter().all(|v| v.abs() <= 1e-13), "on-set point not critical: {g:?}");
        let off = [xi[0] + 0.01, xi[1]];
        let g = gradient_reduced(Chart::delta_sk(), &off, k, 0.0).unwrap();
        assert!(g.iter().any(|v| v.abs() >= 1e-3), "off-set point looks critical: {g:?}");
    }
    // p = 1: both column classes must sum to one.
    for _ in 0..20 {
        let (a, c, d) = (
            rng.random_range(-0.5..0.5),
            rng.random_range(-0.5..0.5),
            rng.random_range(-0.5..0.5),
        );
        let xi = [1.0 - (k - 2.0) * a - d, a, c, d, 1.0 - (k - 1.0) * c];
        let Ok(g) = gradient_reduced(Chart::delta_sk1(), &xi, k, 0.0) else { continue };
        assert!(g.iter().all(|v| v.abs() <= 1e-13), "on-set point not critical: {g:?}");
    }
}

/// Reduced objective values stay finite and match the teacher constant at
/// the identity coordinates for every lambda.
#[test]
fn objective_at_teacher_coordinates_vanishes() {
    for lambda in [0.0, 0.3, 1.0] {
        let f = objective_reduced(Chart::delta_sk(), &[1.0, 0.0], 6.0, lambda).unwrap();
        assert!(f.abs() <= 1e-13, "lambda={lambda}: {f}");
    }
    // Interior sanity: a perturbed point has strictly positive loss.
    let f = objective_reduced(Chart::delta_sk(), &[0.9, 0.02], 6.0, 1.0).unwrap();
    assert!(f > 1e-3 && f.is_finite());
}
