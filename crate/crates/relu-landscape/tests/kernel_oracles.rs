//! Independent checks of the kernel closed form: Monte Carlo expectation,
//! finite-difference gradient, and the invariances the closed form inherits
//! from the Gaussian expectation.

#![allow(clippy::needless_range_loop)]

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use relu_landscape::kernel_geometry::{
    angle_between, kernel_f_lambda, kernel_grad_lambda, mc_kernel_estimate,
};

fn gaussian_vec(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    (0..d).map(|_| rng.sample(StandardNormal)).collect()
}

/// Random orthogonal matrix via Gram-Schmidt on a Gaussian square matrix.
fn random_rotation(rng: &mut ChaCha8Rng, d: usize) -> Vec<Vec<f64>> {
    loop {
        let mut q: Vec<Vec<f64>> = (0..d).map(|_| gaussian_vec(rng, d)).collect();
        let mut ok = true;
        for i in 0..d {
            for j in 0..i {
                let proj: f64 = q[i].iter().zip(&q[j]).map(|(a, b)| a * b).sum();
                for c in 0..d {
                    q[i][c] -= proj * q[j][c];
                }
            }
            let n: f64 = q[i].iter().map(|x| x * x).sum::<f64>().sqrt();
            if n < 1e-6 {
                ok = false;
                break;
            }
            for c in 0..d {
                q[i][c] /= n;
            }
        }
        if ok {
            return q;
        }
    }
}

fn apply(r: &[Vec<f64>], w: &[f64]) -> Vec<f64> {
    r.iter().map(|row| row.iter().zip(w).map(|(a, b)| a * b).sum()).collect()
}

#[test]
fn mc_matches_closed_form_on_orthogonal_units() {
    // Frozen target: f_1(e1, e2) = 1/(2pi). MC bound 4/sqrt(n).
    let n = 1_000_000u64;
    let bound = 4.0 / (n as f64).sqrt();
    let expect = 1.0 / (2.0 * PI);
    for seed in 0..10 {
        let est = mc_kernel_estimate(&[1.0, 0.0], &[0.0, 1.0], 1.0, n, seed).unwrap();
        assert!(
            (est - expect).abs() <= bound,
            "seed={seed} est={est} expect={expect}"
        );
    }
}

#[test]
fn mc_matches_closed_form_across_leaks_and_angles() {
    let n = 400_000u64;
    let bound = 4.0 / (n as f64).sqrt();
    let s = 0.5f64.sqrt();
    let pairs: Vec<(Vec<f64>, Vec<f64>)> = vec![
        (vec![1.0, 0.0, 0.0], vec![s, s, 0.0]),
        (vec![1.0, 0.0, 0.0], vec![-s, s, 0.0]),
        (vec![0.0, 1.0, 0.0], vec![0.0, -1.0, 0.0]),
        (vec![s, 0.0, s], vec![s, 0.0, s]),
    ];
    for (w, v) in &pairs {
        for lambda in [0.0, 0.35, 1.0] {
            let f = kernel_f_lambda(w, v, lambda).unwrap();
            for seed in [1, 7] {
                let est = mc_kernel_estimate(w, v, lambda, n, seed).unwrap();
                assert!(
                    (est - f).abs() <= bound,
                    "w={w:?} v={v:?} lambda={lambda} seed={seed}: est={est} f={f}"
                );
            }
        }
    }
}

#[test]
fn mc_is_reproducible_per_seed() {
    let a = mc_kernel_estimate(&[1.0, 2.0], &[0.5, -0.2], 0.6, 50_000, 42).unwrap();
    let b = mc_kernel_estimate(&[1.0, 2.0], &[0.5, -0.2], 0.6, 50_000, 42).unwrap();
    assert_eq!(a.to_bits(), b.to_bits());
    let c = mc_kernel_estimate(&[1.0, 2.0], &[0.5, -0.2], 0.6, 50_000, 43).unwrap();
    assert_ne!(a.to_bits(), c.to_bits());
}

#[test]
fn gradient_matches_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let h = 1e-6;
    let mut checked = 0;
    while checked < 50 {
        let d = if checked % 2 == 0 { 3 } else { 5 };
        let w = gaussian_vec(&mut rng, d);
        let v = gaussian_vec(&mut rng, d);
        let theta = match angle_between(&w, &v) {
            Ok(t) => t,
            Err(_) => continue,
        };
        // Near-parallel pairs are excluded: the gradient is C^1 there but the
        // difference quotient loses accuracy with sin t in a denominator.
        if theta.cos().abs() > 0.999 {
            continue;
        }
        for lambda in [0.25, 1.0] {
            let g = kernel_grad_lambda(&w, &v, lambda).unwrap();
            let mut g_max: f64 = 0.0;
            let mut err_max: f64 = 0.0;
            for i in 0..d {
                let mut wp = w.clone();
                let mut wm = w.clone();
                wp[i] += h;
                wm[i] -= h;
                let fd = (kernel_f_lambda(&wp, &v, lambda).unwrap()
                    - kernel_f_lambda(&wm, &v, lambda).unwrap())
                    / (2.0 * h);
                g_max = g_max.max(g[i].abs());
                err_max = err_max.max((fd - g[i]).abs());
            }
            assert!(
                err_max <= 1e-6 * g_max.max(1.0),
                "w={w:?} v={v:?} lambda={lambda}: err={err_max} scale={g_max}"
            );
        }
        checked += 1;
    }
}

#[test]
fn kernel_is_rotation_invariant() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let w = vec![0.8, -0.3, 1.1, 0.2];
    let v = vec![-0.5, 0.9, 0.4, -1.3];
    let f = kernel_f_lambda(&w, &v, 0.7).unwrap();
    let t = angle_between(&w, &v).unwrap();
    for _ in 0..100 {
        let r = random_rotation(&mut rng, 4);
        let rw = apply(&r, &w);
        let rv = apply(&r, &v);
        assert!((kernel_f_lambda(&rw, &rv, 0.7).unwrap() - f).abs() <= 1e-12);
        assert!((angle_between(&rw, &rv).unwrap() - t).abs() <= 1e-12);
    }
}

#[test]
fn kernel_is_positively_homogeneous() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let w = vec![0.4, 1.7, -0.6];
    let v = vec![-1.0, 0.3, 0.9];
    let f = kernel_f_lambda(&w, &v, 0.45).unwrap();
    for _ in 0..50 {
        let a: f64 = rng.random_range(0.1..5.0);
        let b: f64 = rng.random_range(0.1..5.0);
        let wa: Vec<f64> = w.iter().map(|x| a * x).collect();
        let vb: Vec<f64> = v.iter().map(|x| b * x).collect();
        let fab = kernel_f_lambda(&wa, &vb, 0.45).unwrap();
        assert!((fab - a * b * f).abs() <= 1e-12 * (a * b * f).abs().max(1.0));
        // The angle itself is scale invariant.
        let t0 = angle_between(&w, &v).unwrap();
        let t1 = angle_between(&wa, &vb).unwrap();
        assert!((t0 - t1).abs() <= 1e-12);
    }
}
