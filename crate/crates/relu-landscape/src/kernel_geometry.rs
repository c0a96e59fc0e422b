//! Pair kernel of the Gaussian population loss and its per-pair gradient.
//!
//! For rows w, v and leak parameter lambda in [0, 1], the kernel is
//!
//! ```text
//! f_lambda(w, v) = (lambda |w||v| / 2pi) (sin t - t cos t) + <w, v> / 2,
//! t = angle(w, v),
//! ```
//!
//! which at lambda = 1 is the arc-cosine ReLU kernel
//! `(|w||v| / 2pi)(sin t + (pi - t) cos t)`. The Monte Carlo estimator draws
//! standard Gaussian inputs and averages the leaky-ReLU activation product,
//! normalized so that it converges to `f_lambda` exactly.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::util::{dot, norm};

/// Accepted slack on |cos| beyond 1 before the dot product is considered
/// corrupted rather than merely rounded.
pub const COS_SLACK: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum KernelError {
    #[error("zero vector where a direction is required")]
    ZeroVector,
    #[error("cosine {0} out of range (|cos| > 1 + {COS_SLACK:e})")]
    DomainError(f64),
    #[error("leak parameter {0} outside [0, 1]")]
    BadLeak(f64),
}

/// Angle in [0, pi] between two nonzero vectors.
///
/// The normalized dot product is clamped to [-1, 1]; values beyond the
/// [`COS_SLACK`] guard band are rejected as corrupted input.
pub fn angle_between(w: &[f64], v: &[f64]) -> Result<f64, KernelError> {
    let nw = norm(w);
    let nv = norm(v);
    if nw == 0.0 || nv == 0.0 {
        return Err(KernelError::ZeroVector);
    }
    let c = dot(w, v) / (nw * nv);
    if c.abs() > 1.0 + COS_SLACK {
        return Err(KernelError::DomainError(c));
    }
    Ok(c.clamp(-1.0, 1.0).acos())
}

/// Kernel value from norms and the enclosed angle.
///
/// `f_lambda(a, b, t) = (lambda a b / 2pi)(sin t - t cos t) + a b cos t / 2`.
/// `sin t - t cos t` vanishes at t = 0, so coincident directions give
/// `a b / 2` for every lambda without special-casing.
pub fn kernel_f_angle(a: f64, b: f64, theta: f64, lambda: f64) -> f64 {
    let ab = a * b;
    lambda * ab / (2.0 * PI) * (theta.sin() - theta * theta.cos()) + ab * theta.cos() / 2.0
}

/// Kernel value for a pair of nonzero vectors.
pub fn kernel_f_lambda(w: &[f64], v: &[f64], lambda: f64) -> Result<f64, KernelError> {
    let theta = angle_between(w, v)?;
    Ok(kernel_f_angle(norm(w), norm(v), theta, lambda))
}

/// Gradient of `w -> kernel_f_lambda(w, v, lambda)`.
///
/// `(lambda / 2pi)(|v| sin t / |w| * w - t v) + v / 2`. The formula remains
/// the correct one-sided C^1 gradient at t = 0 and t = pi: the w-coefficient
/// vanishes with sin t and the v-coefficient degrades to `-t v`.
pub fn kernel_grad_lambda(w: &[f64], v: &[f64], lambda: f64) -> Result<Vec<f64>, KernelError> {
    let theta = angle_between(w, v)?;
    let nw = norm(w);
    let nv = norm(v);
    let cw = lambda / (2.0 * PI) * nv * theta.sin() / nw;
    let cv = -lambda / (2.0 * PI) * theta + 0.5;
    Ok(w.iter().zip(v).map(|(wi, vi)| cw * wi + cv * vi).collect())
}

/// Leak parameter of the normalized kernel for activation slope parameter
/// alpha in [0, 1] (`sigma_alpha(t) = max(t, (1 - alpha) t)`).
pub fn lambda_from_alpha(alpha: f64) -> f64 {
    alpha * alpha / (2.0 - 2.0 * alpha + alpha * alpha)
}

/// Inverse of [`lambda_from_alpha`] on [0, 1].
pub fn alpha_from_lambda(lambda: f64) -> f64 {
    if lambda >= 1.0 {
        return 1.0;
    }
    // alpha^2 (1 - lambda) + 2 lambda alpha - 2 lambda = 0, positive root.
    ((lambda * (2.0 - lambda)).sqrt() - lambda) / (1.0 - lambda)
}

fn sigma_alpha(t: f64, alpha: f64) -> f64 {
    t.max((1.0 - alpha) * t)
}

/// Monte Carlo estimate of `kernel_f_lambda` from `n` standard Gaussian
/// inputs drawn from a ChaCha8 stream seeded with `seed`.
///
/// Deterministic for a fixed (seed, n) pair on one platform and build; no
/// cross-platform bit guarantee is made. The estimator averages
/// `sigma_alpha(<w,x>) sigma_alpha(<v,x>)` and divides by the slope
/// normalizer `2 - 2 alpha + alpha^2`.
pub fn mc_kernel_estimate(
    w: &[f64],
    v: &[f64],
    lambda: f64,
    n: u64,
    seed: u64,
) -> Result<f64, KernelError> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(KernelError::BadLeak(lambda));
    }
    if norm(w) == 0.0 || norm(v) == 0.0 {
        return Err(KernelError::ZeroVector);
    }
    let alpha = alpha_from_lambda(lambda);
    let normalizer = 2.0 - 2.0 * alpha + alpha * alpha;
    let d = w.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = vec![0.0; d];
    let mut acc = 0.0;
    for _ in 0..n {
        for xi in x.iter_mut() {
            *xi = rng.sample(StandardNormal);
        }
        acc += sigma_alpha(dot(w, &x), alpha) * sigma_alpha(dot(v, &x), alpha);
    }
    Ok(acc / n as f64 / normalizer)
}
