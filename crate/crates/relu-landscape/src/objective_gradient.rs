//! Population objective and gradient, in full matrix form and reduced to
//! chart coordinates.
//!
//! With teacher `V = I_k` the objective is
//!
//! ```text
//! F_lambda(W) = 1/2 sum_ij f(w_i, w_j) - sum_ij f(w_i, v_j) + 1/2 sum_ij f(v_i, v_j)
//! ```
//!
//! and its gradient splits as `Phi_lambda = lambda S + (W - V)^S / 2`, where
//! `(.)^S` repeats the column-sum vector in every row. On a chart the
//! gradient has one value per coordinate class and costs O(1) to evaluate,
//! with the width k entering only as a real multiplicity weight.

use std::f64::consts::PI;

use thiserror::Error;

use crate::kernel_geometry::{angle_between, kernel_f_angle, KernelError};
use crate::symmetry_charts::{
    column_sums, Chart, ChartError, ChartFamily, WeightMatrix, ANGLE_NOISE_FLOOR,
};
use crate::util::norm;

/// Cap on k for the O(k^2) full-matrix operations.
pub const FULL_SIZE_LIMIT: usize = 512;

/// Row-to-row angles this close (radians) to 0 or pi make a chart point
/// degenerate for the reduced machinery.
pub const ADMISSIBLE_ANGLE_TOL: f64 = 1e-8;

#[derive(Debug, Error, PartialEq)]
pub enum ObjectiveError {
    #[error("width {0} exceeds the full-matrix cap {FULL_SIZE_LIMIT}")]
    SizeLimit(usize),
    #[error("chart point is degenerate: {0}")]
    NotAdmissible(String),
    #[error("closed critical residual is defined for the p = 0 and p = 1 charts only")]
    UnsupportedChart,
    #[error(transparent)]
    Chart(#[from] ChartError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
}

fn check_size(k: usize) -> Result<(), ObjectiveError> {
    if k > FULL_SIZE_LIMIT {
        return Err(ObjectiveError::SizeLimit(k));
    }
    Ok(())
}

/// Full-matrix objective against the identity teacher.
pub fn objective_full(w: &WeightMatrix, lambda: f64) -> Result<f64, ObjectiveError> {
    let k = w.k();
    check_size(k)?;
    let kf = k as f64;
    let norms: Vec<f64> = w.rows().map(norm).collect();
    if norms.contains(&0.0) {
        return Err(ObjectiveError::Kernel(KernelError::ZeroVector));
    }
    let mut acc = 0.0;
    for i in 0..k {
        // Student-student: the i = j kernel value is |w_i|^2 / 2 for every
        // lambda; off-diagonal pairs are counted once and doubled.
        acc += 0.5 * norms[i] * norms[i] / 2.0;
        for j in (i + 1)..k {
            let t = angle_between(w.row(i), w.row(j))?;
            acc += kernel_f_angle(norms[i], norms[j], t, lambda);
        }
        // Student-teacher: v_j = e_j, so the angle has cos = w_ij / |w_i|.
        for j in 0..k {
            let c = (w.get(i, j) / norms[i]).clamp(-1.0, 1.0);
            acc -= kernel_f_angle(norms[i], 1.0, c.acos(), lambda);
        }
    }
    // Teacher-teacher: k self pairs at 1/2 and k(k-1) orthogonal unit pairs
    // at lambda / 2pi.
    acc += kf / 4.0 + lambda * kf * (kf - 1.0) / (4.0 * PI);
    Ok(acc)
}

/// Full-matrix gradient; returns the k x k matrix of row gradients.
pub fn gradient_full(w: &WeightMatrix, lambda: f64) -> Result<WeightMatrix, ObjectiveError> {
    let k = w.k();
    check_size(k)?;
    let norms: Vec<f64> = w.rows().map(norm).collect();
    if norms.contains(&0.0) {
        return Err(ObjectiveError::Kernel(KernelError::ZeroVector));
    }
    // Column-sum part: each gradient row gets (colsum_j(W) - 1) / 2.
    let mut colsum = vec![0.0; k];
    for i in 0..k {
        for j in 0..k {
            colsum[j] += w.get(i, j);
        }
    }
    let mut out = WeightMatrix::zeros(k);
    let c = lambda / (2.0 * PI);
    for i in 0..k {
        let wi = w.row(i).to_vec();
        let mut row = vec![0.0; k];
        // Student-student interactions; the j = i term vanishes identically.
        let mut self_coef = 0.0;
        for j in 0..k {
            if j == i {
                continue;
            }
            let t = angle_between(&wi, w.row(j))?;
            self_coef += norms[j] * t.sin() / norms[i];
            for (r, wj) in row.iter_mut().zip(w.row(j)) {
                *r -= c * t * wj;
            }
        }
        // Student-teacher interactions, including j = i.
        for j in 0..k {
            let cj = (w.get(i, j) / norms[i]).clamp(-1.0, 1.0);
            let t = cj.acos();
            self_coef -= t.sin() / norms[i];
            row[j] += c * t;
        }
        for (r, (wij, cs)) in row.iter_mut().zip(wi.iter().zip(&colsum)) {
            *r += c * self_coef * wij + 0.5 * (cs - 1.0);
        }
        for (j, r) in row.into_iter().enumerate() {
            out.set(i, j, r);
        }
    }
    Ok(out)
}

/// Norms and angles of a chart point, with k as a real weight.
///
/// Angle names pair a row block with a row block or the teacher: `theta` is
/// the leading-block mutual angle, `lambda` leading-to-trailing, `mu`
/// trailing-block mutual; `alpha_xy` is row block x against teacher row
/// class y (i = leading row, k/s = trailing row, j = off column).
#[derive(Debug, Clone, PartialEq)]
pub enum ReducedGeometry {
    P0 {
        tau: f64,
        theta: f64,
        /// Angle of a row to an off-diagonal teacher row.
        alpha: f64,
        /// Angle of a row to its own teacher row.
        beta: f64,
    },
    P1 {
        tau: f64,
        kappa: f64,
        theta: f64,
        lambda: f64,
        alpha_ii: f64,
        alpha_ij: f64,
        alpha_ik: f64,
        alpha_kj: f64,
        alpha_kk: f64,
    },
    P2 {
        tau: f64,
        kappa: f64,
        theta: f64,
        lambda: f64,
        mu: f64,
        alpha_ii: f64,
        alpha_ij: f64,
        alpha_is: f64,
        alpha_sj: f64,
        alpha_ss: f64,
        alpha_ss_off: f64,
    },
}

fn acos_c(c: f64) -> f64 {
    c.clamp(-1.0, 1.0).acos()
}

fn guard_row_angle(name: &str, t: f64) -> Result<(), ObjectiveError> {
    let eff = ADMISSIBLE_ANGLE_TOL.max(ANGLE_NOISE_FLOOR);
    if !(t >= eff && t <= PI - eff) {
        return Err(ObjectiveError::NotAdmissible(format!(
            "row angle {name} = {t:e} is within {eff:e} of parallel"
        )));
    }
    Ok(())
}

/// Reduced geometry of a chart point.
///
/// Degenerate for zero block norms and for row-to-row angles at 0 or pi
/// (all-equal rows etc.); row-to-teacher angles may hit 0 or pi freely, the
/// reduced gradient is C^1 across those configurations.
pub fn reduced_geometry(chart: Chart, xi: &[f64], k: f64) -> Result<ReducedGeometry, ObjectiveError> {
    if xi.len() != chart.m() {
        return Err(ObjectiveError::Chart(ChartError::DimensionMismatch {
            expected: chart.m(),
            got: xi.len(),
        }));
    }
    let p = chart.p as f64;
    let q = k - p;
    match chart.family {
        ChartFamily::DeltaSk => {
            let tau2 = xi[0] * xi[0] + (k - 1.0) * xi[1] * xi[1];
            if tau2 <= 0.0 {
                return Err(ObjectiveError::NotAdmissible("zero row".into()));
            }
            let tau = tau2.sqrt();
            let theta = acos_c((2.0 * xi[0] * xi[1] + (k - 2.0) * xi[1] * xi[1]) / tau2);
            guard_row_angle("theta", theta)?;
            Ok(ReducedGeometry::P0 {
                tau,
                theta,
                alpha: acos_c(xi[1] / tau),
                beta: acos_c(xi[0] / tau),
            })
        }
        ChartFamily::DeltaSk1 => {
            let tau2 = xi[0] * xi[0] + (k - 2.0) * xi[1] * xi[1] + xi[2] * xi[2];
            let kappa2 = (k - 1.0) * xi[3] * xi[3] + xi[4] * xi[4];
            if tau2 <= 0.0 || kappa2 <= 0.0 {
                return Err(ObjectiveError::NotAdmissible("zero row".into()));
            }
            let (tau, kappa) = (tau2.sqrt(), kappa2.sqrt());
            let theta =
                acos_c((2.0 * xi[0] * xi[1] + (k - 3.0) * xi[1] * xi[1] + xi[2] * xi[2]) / tau2);
            let lambda = acos_c(
                ((xi[0] + (k - 2.0) * xi[1]) * xi[3] + xi[2] * xi[4]) / (tau * kappa),
            );
            guard_row_angle("theta", theta)?;
            guard_row_angle("lambda", lambda)?;
            Ok(ReducedGeometry::P1 {
                tau,
                kappa,
                theta,
                lambda,
                alpha_ii: acos_c(xi[0] / tau),
                alpha_ij: acos_c(xi[1] / tau),
                alpha_ik: acos_c(xi[2] / tau),
                alpha_kj: acos_c(xi[3] / kappa),
                alpha_kk: acos_c(xi[4] / kappa),
            })
        }
        ChartFamily::DeltaBlock => {
            let tau2 = xi[0] * xi[0] + (q - 1.0) * xi[1] * xi[1] + p * xi[2] * xi[2];
            let kappa2 = q * xi[3] * xi[3] + xi[4] * xi[4] + (p - 1.0) * xi[5] * xi[5];
            if tau2 <= 0.0 || kappa2 <= 0.0 {
                return Err(ObjectiveError::NotAdmissible("zero row".into()));
            }
            let (tau, kappa) = (tau2.sqrt(), kappa2.sqrt());
            let theta = acos_c(
                (2.0 * xi[0] * xi[1] + (q - 2.0) * xi[1] * xi[1] + p * xi[2] * xi[2]) / tau2,
            );
            let lambda = acos_c(
                ((xi[0] + (q - 1.0) * xi[1]) * xi[3] + xi[2] * (xi[4] + (p - 1.0) * xi[5]))
                    / (tau * kappa),
            );
            let mu = acos_c(
                (q * xi[3] * xi[3] + 2.0 * xi[4] * xi[5] + (p - 2.0) * xi[5] * xi[5]) / kappa2,
            );
            guard_row_angle("theta", theta)?;
            guard_row_angle("lambda", lambda)?;
            guard_row_angle("mu", mu)?;
            Ok(ReducedGeometry::P2 {
                tau,
                kappa,
                theta,
                lambda,
                mu,
                alpha_ii: acos_c(xi[0] / tau),
                alpha_ij: acos_c(xi[1] / tau),
                alpha_is: acos_c(xi[2] / tau),
                alpha_sj: acos_c(xi[3] / kappa),
                alpha_ss: acos_c(xi[4] / kappa),
                alpha_ss_off: acos_c(xi[5] / kappa),
            })
        }
    }
}

/// The 2pi-scaled leak part of the reduced gradient: one entry per chart
/// coordinate, `Phi = lambda * s + (colsum - 1)/2` per entry class.
pub fn s_entries_reduced(chart: Chart, xi: &[f64], k: f64) -> Result<Vec<f64>, ObjectiveError> {
    let geom = reduced_geometry(chart, xi, k)?;
    Ok(s_entries_from_geometry(chart, xi, k, &geom))
}

pub(crate) fn s_entries_from_geometry(
    chart: Chart,
    xi: &[f64],
    k: f64,
    geom: &ReducedGeometry,
) -> Vec<f64> {
    let two_pi = 2.0 * PI;
    match (*geom).clone() {
        ReducedGeometry::P0 { tau, theta, alpha, beta } => {
            let cw = (k - 1.0) * theta.sin() - ((k - 1.0) * alpha.sin() + beta.sin()) / tau;
            vec![
                (cw * xi[0] - (k - 1.0) * theta * xi[1] + beta) / two_pi,
                (cw * xi[1] - theta * (xi[0] + (k - 2.0) * xi[1]) + alpha) / two_pi,
            ]
        }
        ReducedGeometry::P1 {
            tau,
            kappa,
            theta,
            lambda,
            alpha_ii,
            alpha_ij,
            alpha_ik,
            alpha_kj,
            alpha_kk,
        } => {
            let cw = (k - 2.0) * theta.sin() + kappa / tau * lambda.sin()
                - ((k - 2.0) * alpha_ij.sin() + alpha_ii.sin() + alpha_ik.sin()) / tau;
            let ck = (k - 1.0) * tau / kappa * lambda.sin()
                - ((k - 1.0) * alpha_kj.sin() + alpha_kk.sin()) / kappa;
            vec![
                (cw * xi[0] - (k - 2.0) * theta * xi[1] - lambda * xi[3] + alpha_ii) / two_pi,
                (cw * xi[1] - theta * (xi[0] + (k - 3.0) * xi[1]) - lambda * xi[3] + alpha_ij)
                    / two_pi,
                (cw * xi[2] - (k - 2.0) * theta * xi[2] - lambda * xi[4] + alpha_ik) / two_pi,
                (ck * xi[3] - lambda * (xi[0] + (k - 2.0) * xi[1]) + alpha_kj) / two_pi,
                (ck * xi[4] - (k - 1.0) * lambda * xi[2] + alpha_kk) / two_pi,
            ]
        }
        ReducedGeometry::P2 {
            tau,
            kappa,
            theta,
            lambda,
            mu,
            alpha_ii,
            alpha_ij,
            alpha_is,
            alpha_sj,
            alpha_ss,
            alpha_ss_off,
        } => {
            let p = chart.p as f64;
            let q = k - p;
            let cw = (q - 1.0) * theta.sin() + p * kappa / tau * lambda.sin()
                - ((q - 1.0) * alpha_ij.sin() + alpha_ii.sin() + p * alpha_is.sin()) / tau;
            let ck = q * tau / kappa * lambda.sin() + (p - 1.0) * mu.sin()
                - (q * alpha_sj.sin() + alpha_ss.sin() + (p - 1.0) * alpha_ss_off.sin()) / kappa;
            vec![
                (cw * xi[0] - (q - 1.0) * theta * xi[1] - p * lambda * xi[3] + alpha_ii) / two_pi,
                (cw * xi[1] - theta * (xi[0] + (q - 2.0) * xi[1]) - p * lambda * xi[3] + alpha_ij)
                    / two_pi,
                (cw * xi[2]
                    - (q - 1.0) * theta * xi[2]
                    - lambda * (xi[4] + (p - 1.0) * xi[5])
                    + alpha_is)
                    / two_pi,
                (ck * xi[3] - lambda * (xi[0] + (q - 1.0) * xi[1]) - (p - 1.0) * mu * xi[3]
                    + alpha_sj)
                    / two_pi,
                (ck * xi[4] - q * lambda * xi[2] - (p - 1.0) * mu * xi[5] + alpha_ss) / two_pi,
                (ck * xi[5] - q * lambda * xi[2] - mu * (xi[4] + (p - 2.0) * xi[5])
                    + alpha_ss_off)
                    / two_pi,
            ]
        }
    }
}

/// Column class (index into `column_sums`) of each chart coordinate.
pub(crate) fn coordinate_column_class(chart: Chart) -> &'static [usize] {
    match chart.family {
        ChartFamily::DeltaSk => &[0, 0],
        ChartFamily::DeltaSk1 => &[0, 0, 1, 0, 1],
        ChartFamily::DeltaBlock => &[0, 0, 1, 0, 1, 1],
    }
}

/// Reduced gradient: the m distinct entries of `gradient_full` on the
/// embedded point, in O(1) for any real k.
pub fn gradient_reduced(
    chart: Chart,
    xi: &[f64],
    k: f64,
    lambda: f64,
) -> Result<Vec<f64>, ObjectiveError> {
    let s = s_entries_reduced(chart, xi, k)?;
    let cs = column_sums(chart, xi, k)?;
    let classes = coordinate_column_class(chart);
    Ok(s
        .iter()
        .zip(classes)
        .map(|(si, &cl)| lambda * si + 0.5 * (cs[cl] - 1.0))
        .collect())
}

/// Reduced objective: multiplicity-weighted kernel sum over the entry
/// classes, in O(1) for any real k.
pub fn objective_reduced(
    chart: Chart,
    xi: &[f64],
    k: f64,
    lambda: f64,
) -> Result<f64, ObjectiveError> {
    let geom = reduced_geometry(chart, xi, k)?;
    let p = chart.p as f64;
    let q = k - p;
    let f = |a: f64, b: f64, t: f64| kernel_f_angle(a, b, t, lambda);
    let teacher = k / 4.0 + lambda * k * (k - 1.0) / (4.0 * PI);
    Ok(match geom {
        ReducedGeometry::P0 { tau, theta, alpha, beta } => {
            k * tau * tau / 4.0 + 0.5 * k * (k - 1.0) * f(tau, tau, theta)
                - k * (f(tau, 1.0, beta) + (k - 1.0) * f(tau, 1.0, alpha))
                + teacher
        }
        ReducedGeometry::P1 {
            tau,
            kappa,
            theta,
            lambda: lam_angle,
            alpha_ii,
            alpha_ij,
            alpha_ik,
            alpha_kj,
            alpha_kk,
        } => {
            q * tau * tau / 4.0
                + kappa * kappa / 4.0
                + 0.5 * q * (q - 1.0) * f(tau, tau, theta)
                + q * f(tau, kappa, lam_angle)
                - q * (f(tau, 1.0, alpha_ii) + (q - 1.0) * f(tau, 1.0, alpha_ij)
                    + f(tau, 1.0, alpha_ik))
                - (q * f(kappa, 1.0, alpha_kj) + f(kappa, 1.0, alpha_kk))
                + teacher
        }
        ReducedGeometry::P2 {
            tau,
            kappa,
            theta,
            lambda: lam_angle,
            mu,
            alpha_ii,
            alpha_ij,
            alpha_is,
            alpha_sj,
            alpha_ss,
            alpha_ss_off,
        } => {
            q * tau * tau / 4.0
                + p * kappa * kappa / 4.0
                + 0.5 * q * (q - 1.0) * f(tau, tau, theta)
                + q * p * f(tau, kappa, lam_angle)
                + 0.5 * p * (p - 1.0) * f(kappa, kappa, mu)
                - q * (f(tau, 1.0, alpha_ii)
                    + (q - 1.0) * f(tau, 1.0, alpha_ij)
                    + p * f(tau, 1.0, alpha_is))
                - p * (q * f(kappa, 1.0, alpha_sj)
                    + f(kappa, 1.0, alpha_ss)
                    + (p - 1.0) * f(kappa, 1.0, alpha_ss_off))
                + teacher
        }
    })
}

/// One kernel pair term of the lambda = 1 objective on the p = 1 chart,
/// `Psi_t = sin t + (pi - t) cos t` scaled by the pair of norms.
#[derive(Debug, Clone, PartialEq)]
pub struct StructuredTerms {
    /// Quadratic row terms tau^2/4 and kappa^2/4.
    pub e1: f64,
    pub e2: f64,
    /// Leading-leading and leading-trailing row pair kernels.
    pub f1: f64,
    pub f2: f64,
    /// Row-to-teacher kernels by entry class.
    pub g_ii: f64,
    pub g_ij: f64,
    pub g_ik: f64,
    pub g_kj: f64,
    pub g_kk: f64,
}

fn psi(t: f64) -> f64 {
    t.sin() + (PI - t) * t.cos()
}

/// Structured lambda = 1 objective terms on the p = 1 chart.
pub fn structured_terms(chart: Chart, xi: &[f64], k: f64) -> Result<StructuredTerms, ObjectiveError> {
    let geom = reduced_geometry(chart, xi, k)?;
    let ReducedGeometry::P1 {
        tau,
        kappa,
        theta,
        lambda,
        alpha_ii,
        alpha_ij,
        alpha_ik,
        alpha_kj,
        alpha_kk,
    } = geom
    else {
        return Err(ObjectiveError::UnsupportedChart);
    };
    let two_pi = 2.0 * PI;
    Ok(StructuredTerms {
        e1: tau * tau / 4.0,
        e2: kappa * kappa / 4.0,
        f1: tau * tau / two_pi * psi(theta),
        f2: tau * kappa / two_pi * psi(lambda),
        g_ii: tau / two_pi * psi(alpha_ii),
        g_ij: tau / two_pi * psi(alpha_ij),
        g_ik: tau / two_pi * psi(alpha_ik),
        g_kj: kappa / two_pi * psi(alpha_kj),
        g_kk: kappa / two_pi * psi(alpha_kk),
    })
}

impl StructuredTerms {
    /// Assemble the lambda = 1 objective from the structured terms: pair
    /// kernels carry pair counts ((k-1)(k-2)/2 leading pairs, k-1 cross
    /// pairs), teacher kernels carry entry-class multiplicities.
    pub fn total(&self, k: f64) -> f64 {
        (k - 1.0) * self.e1
            + self.e2
            + 0.5 * (k - 1.0) * (k - 2.0) * self.f1
            + (k - 1.0) * self.f2
            - (k - 1.0) * (self.g_ii + (k - 2.0) * self.g_ij + self.g_ik)
            - ((k - 1.0) * self.g_kj + self.g_kk)
            + k / 4.0
            + k * (k - 1.0) / (4.0 * PI)
    }
}

/// The printed minimal critical-point system at lambda = 1 for p <= 1.
///
/// Validated against the reduced gradient through shared zero sets; no
/// proportionality between the two residuals is asserted.
pub fn critical_residual_lambda1(
    chart: Chart,
    xi: &[f64],
    k: f64,
) -> Result<Vec<f64>, ObjectiveError> {
    let geom = reduced_geometry(chart, xi, k)?;
    let cs = column_sums(chart, xi, k)?;
    match geom {
        ReducedGeometry::P0 { tau, theta, alpha, beta } => {
            let pq = (k - 1.0) * theta.sin() - ((k - 1.0) * alpha.sin() + beta.sin()) / tau;
            let w1 = cs[0] - 1.0;
            Ok(vec![
                pq * xi[0] + (PI - theta) * w1 + theta * xi[0] + beta - theta,
                pq * xi[1] + (PI - theta) * w1 + theta * xi[1] + alpha - theta,
            ])
        }
        ReducedGeometry::P1 {
            tau,
            kappa,
            theta,
            lambda,
            alpha_ii,
            alpha_ij,
            alpha_ik,
            alpha_kj,
            alpha_kk,
        } => {
            let pp = (k - 2.0) * theta.sin() + kappa / tau * lambda.sin()
                - ((k - 2.0) * alpha_ij.sin() + alpha_ii.sin() + alpha_ik.sin()) / tau;
            let qq = (k - 1.0) * tau / kappa * lambda.sin()
                - ((k - 1.0) * alpha_kj.sin() + alpha_kk.sin()) / kappa;
            let w1 = cs[0] - 1.0;
            let wk = cs[1] - 1.0;
            Ok(vec![
                pp * xi[0] + (PI - theta) * w1 + theta * xi[0] + (theta - lambda) * xi[3]
                    + alpha_ii
                    - theta,
                pp * xi[1] + (PI - theta) * w1 + theta * xi[1] + (theta - lambda) * xi[3]
                    + alpha_ij
                    - theta,
                pp * xi[2] + (PI - theta) * wk + theta * xi[2] + (theta - lambda) * xi[4]
                    + alpha_ik
                    - theta,
                qq * xi[3] + (PI - lambda) * w1 + lambda * xi[3] + alpha_kj - lambda,
                qq * xi[4] + (PI - lambda) * wk + lambda * xi[4] + alpha_kk - lambda,
            ])
        }
        ReducedGeometry::P2 { .. } => Err(ObjectiveError::UnsupportedChart),
    }
}
