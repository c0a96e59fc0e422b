//! Solving the consistency equations: the leak-free critical-point system
//! whose solutions seed every continuation in this crate.
//!
//! The gradient splits as `Phi_lambda = lambda S + (W - V)^S / 2`, so a
//! point is critical for every lambda at once exactly when all rows of the
//! matrix `S(W)` coincide and all column sums of `W` equal one. On a chart
//! this is a square system in the m coordinates, solved here by damped
//! Newton iteration with finite-difference Jacobians.

use std::f64::consts::PI;

use thiserror::Error;

use crate::kernel_geometry::angle_between;
use crate::objective_gradient::{s_entries_reduced, ObjectiveError, FULL_SIZE_LIMIT};
use crate::symmetry_charts::{column_sums, in_omega_a, Chart, ChartError, WeightMatrix};
use crate::util::{inf_norm, norm};
use crate::Family;

/// Tolerance below which a point counts as an exact consistency solution.
pub const CONSISTENCY_TOL: f64 = 1e-8;

#[derive(Debug, Error, PartialEq)]
pub enum SolverError {
    #[error("no convergence after {iters} iterations, residual {residual:e}")]
    NoConvergence { iters: usize, residual: f64 },
    #[error("Jacobian is numerically singular")]
    SingularJacobian,
    #[error("width tracking stalled at k = {k}; {} samples completed", completed.len())]
    PathStalled { k: f64, completed: Vec<(f64, Vec<f64>)> },
    #[error("point does not satisfy the consistency equations, residual {residual:e}")]
    NotConsistent { residual: f64 },
    #[error("malformed seed: {0}")]
    BadSeed(String),
    #[error(transparent)]
    Objective(#[from] ObjectiveError),
    #[error(transparent)]
    Chart(#[from] ChartError),
}

/// Damped Newton iteration parameters shared by every solve in the crate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonConfig {
    pub max_iters: usize,
    /// Convergence threshold on the residual sup norm.
    pub tol_residual: f64,
    /// Base finite-difference step, scaled by coordinate magnitude.
    pub fd_step: f64,
    /// Halve rejected steps (up to 20 times) instead of failing outright.
    pub damping: bool,
}

impl Default for NewtonConfig {
    fn default() -> Self {
        NewtonConfig { max_iters: 50, tol_residual: 1e-13, fd_step: 1e-7, damping: true }
    }
}

/// A converged Newton solve.
#[derive(Debug, Clone, PartialEq)]
pub struct Solved {
    pub xi: Vec<f64>,
    pub residual_norm: f64,
    pub iters: usize,
}

/// Solve the square system `f(x) = 0` by damped Newton iteration.
///
/// The residual closure returns `None` where it is undefined (degenerate
/// geometry); rejected and undefined steps are halved up to 20 times.
pub(crate) fn newton_solve<F>(
    f: F,
    x0: &[f64],
    cfg: &NewtonConfig,
) -> Result<Solved, SolverError>
where
    F: Fn(&[f64]) -> Option<Vec<f64>>,
{
    let m = x0.len();
    let mut x = x0.to_vec();
    let mut r = f(&x).ok_or_else(|| {
        SolverError::Objective(ObjectiveError::NotAdmissible(
            "initial guess is degenerate".into(),
        ))
    })?;
    let mut rnorm = inf_norm(&r);
    for iter in 0..cfg.max_iters {
        if rnorm <= cfg.tol_residual {
            return Ok(Solved { xi: x, residual_norm: rnorm, iters: iter });
        }
        // Central-difference Jacobian, column by column.
        let mut jac = vec![vec![0.0; m]; m];
        for j in 0..m {
            let h = cfg.fd_step.max(cfg.fd_step * x[j].abs());
            let mut xp = x.clone();
            xp[j] += h;
            let mut xm = x.clone();
            xm[j] -= h;
            let (rp, rm) = match (f(&xp), f(&xm)) {
                (Some(a), Some(b)) => (a, b),
                _ => {
                    return Err(SolverError::Objective(ObjectiveError::NotAdmissible(
                        "finite-difference probe hit degenerate geometry".into(),
                    )))
                }
            };
            for i in 0..m {
                jac[i][j] = (rp[i] - rm[i]) / (2.0 * h);
            }
        }
        let neg_r: Vec<f64> = r.iter().map(|v| -v).collect();
        let delta = solve_linear(&mut jac, neg_r).ok_or(SolverError::SingularJacobian)?;
        // Step control: halve until the residual drops and stays defined.
        let mut scale = 1.0;
        let mut accepted = false;
        let halvings = if cfg.damping { 20 } else { 0 };
        for _ in 0..=halvings {
            let cand: Vec<f64> =
                x.iter().zip(&delta).map(|(xi, d)| xi + scale * d).collect();
            if let Some(rc) = f(&cand) {
                let cnorm = inf_norm(&rc);
                if cnorm < rnorm || !cfg.damping {
                    x = cand;
                    r = rc;
                    rnorm = cnorm;
                    accepted = true;
                    break;
                }
            }
            scale *= 0.5;
        }
        if !accepted {
            return Err(SolverError::NoConvergence { iters: iter, residual: rnorm });
        }
    }
    if rnorm <= cfg.tol_residual {
        return Ok(Solved { xi: x, residual_norm: rnorm, iters: cfg.max_iters });
    }
    Err(SolverError::NoConvergence { iters: cfg.max_iters, residual: rnorm })
}

/// Gaussian elimination with partial pivoting; sized for m <= 6 systems.
fn solve_linear(a: &mut [Vec<f64>], mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| {
            a[i][col].abs().partial_cmp(&a[j][col].abs()).unwrap()
        })?;
        if a[pivot][col] == 0.0 {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in (col + 1)..n {
            let factor = a[row][col] / a[col][col];
            if factor == 0.0 {
                continue;
            }
            for j in col..n {
                a[row][j] -= factor * a[col][j];
            }
            b[row] -= factor * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let mut acc = b[row];
        for j in (row + 1)..n {
            acc -= a[row][j] * x[j];
        }
        if a[row][row] == 0.0 {
            return None;
        }
        x[row] = acc / a[row][row];
    }
    Some(x)
}

/// The full-matrix leak part `S(W)` of the gradient against the identity
/// teacher. Requires `W` strictly inside the admissible cone: no row may be
/// parallel or antiparallel to another row or to a teacher row, so the
/// teacher itself is rejected.
pub fn s_map(w: &WeightMatrix) -> Result<WeightMatrix, SolverError> {
    let k = w.k();
    if k > FULL_SIZE_LIMIT {
        return Err(SolverError::Objective(ObjectiveError::SizeLimit(k)));
    }
    let teacher = WeightMatrix::identity(k);
    if !in_omega_a(w, &teacher, 1e-8)? {
        return Err(SolverError::Objective(ObjectiveError::NotAdmissible(
            "a row is parallel to another row or to a teacher row".into(),
        )));
    }
    let norms: Vec<f64> = w.rows().map(norm).collect();
    let c = 1.0 / (2.0 * PI);
    let mut out = WeightMatrix::zeros(k);
    for i in 0..k {
        let mut self_coef = 0.0;
        let mut row = vec![0.0; k];
        for j in 0..k {
            if j != i {
                let t = angle_between(w.row(i), w.row(j)).map_err(ObjectiveError::from)?;
                self_coef += norms[j] * t.sin() / norms[i];
                for (r, wj) in row.iter_mut().zip(w.row(j)) {
                    *r -= c * t * wj;
                }
            }
            let cj = (w.get(i, j) / norms[i]).clamp(-1.0, 1.0);
            let t = cj.acos();
            self_coef -= t.sin() / norms[i];
            row[j] += c * t;
        }
        for (j, r) in row.iter().enumerate() {
            out.set(i, j, r + c * self_coef * w.get(i, j));
        }
    }
    Ok(out)
}

/// Chart-reduced consistency residual: the distinct row differences of
/// `S`, then the column-sum defects. Square by construction.
pub fn consistency_residual(chart: Chart, xi: &[f64], k: f64) -> Result<Vec<f64>, SolverError> {
    let s = s_entries_reduced(chart, xi, k)?;
    let mut r = match chart.m() {
        2 => vec![s[0] - s[1]],
        5 => vec![s[0] - s[1], s[0] - s[3], s[2] - s[4]],
        _ => vec![s[0] - s[1], s[0] - s[3], s[2] - s[4], s[4] - s[5]],
    };
    for cs in column_sums(chart, xi, k)? {
        r.push(cs - 1.0);
    }
    Ok(r)
}

/// Closed scalar form of the diagonal-chart consistency equation on the
/// unit-column-sum line `xi = (1 + rho, -rho / (k-1))`, scaled by 2 pi
/// relative to the first `consistency_residual` component.
pub fn consistency_residual_closed_p0(rho: f64, k: f64) -> Result<f64, SolverError> {
    let xi = [1.0 + rho, -rho / (k - 1.0)];
    let tau2 = xi[0] * xi[0] + (k - 1.0) * xi[1] * xi[1];
    let tau = tau2.sqrt();
    if tau == 0.0 {
        return Err(SolverError::Objective(ObjectiveError::NotAdmissible(
            "zero row on the diagonal chart".into(),
        )));
    }
    // No division by sin(theta) occurs, so the formula extends continuously
    // through the all-rows-equal crossing at rho = -(k-1)/k; it vanishes
    // there by symmetry.
    let cos_theta = (2.0 * xi[0] * xi[1] + (k - 2.0) * xi[1] * xi[1]) / tau2;
    let theta = cos_theta.clamp(-1.0, 1.0).acos();
    let alpha = (xi[1] / tau).clamp(-1.0, 1.0).acos();
    let beta = (xi[0] / tau).clamp(-1.0, 1.0).acos();
    let p = (k - 1.0) * theta.sin() - ((k - 1.0) * alpha.sin() + beta.sin()) / tau;
    Ok((p + theta) * (xi[0] - xi[1]) + beta - alpha)
}

/// Solve the consistency equations on a chart from an explicit seed.
pub fn solve_consistency(
    chart: Chart,
    k: f64,
    seed: &[f64],
    cfg: &NewtonConfig,
) -> Result<Solved, SolverError> {
    if seed.len() != chart.m() {
        return Err(SolverError::BadSeed(format!(
            "chart needs {} coordinates, seed has {}",
            chart.m(),
            seed.len()
        )));
    }
    newton_solve(|x| consistency_residual(chart, x, k).ok(), seed, cfg)
}

/// Continue a consistency solution across widths, treating k as a real
/// parameter. The grid steps by about `dk` but lands on `k_to` exactly;
/// every visited sample is returned, `(k_from, start)` first.
pub fn k_track(
    chart: Chart,
    start: &[f64],
    k_from: f64,
    k_to: f64,
    dk: f64,
    cfg: &NewtonConfig,
) -> Result<Vec<(f64, Vec<f64>)>, SolverError> {
    if dk <= 0.0 || dk.is_nan() {
        return Err(SolverError::BadSeed(format!("step must be positive, got {dk}")));
    }
    let first = solve_consistency(chart, k_from, start, cfg)?;
    let mut path = vec![(k_from, first.xi)];
    let n = ((k_to - k_from).abs() / dk).round().max(1.0) as usize;
    for i in 1..=n {
        let k = k_from + i as f64 * (k_to - k_from) / n as f64;
        let guess = path.last().unwrap().1.clone();
        match solve_consistency(chart, k, &guess, cfg) {
            Ok(sol) => path.push((k, sol.xi)),
            Err(SolverError::NoConvergence { .. })
            | Err(SolverError::SingularJacobian)
            | Err(SolverError::Objective(ObjectiveError::NotAdmissible(_))) => {
                return Err(SolverError::PathStalled { k, completed: path })
            }
            Err(e) => return Err(e),
        }
    }
    Ok(path)
}

/// Leak derivative of the column sums implied by the gradient equation.
///
/// Critical points satisfy `colsum_c = 1 - 2 lambda s_c`, so along any
/// critical path each column-class sum leaves the consistency point with
/// slope `-2 s_c`. One value per column class.
pub fn implied_column_derivative(
    chart: Chart,
    xi: &[f64],
    k: f64,
) -> Result<Vec<f64>, SolverError> {
    let r = consistency_residual(chart, xi, k)?;
    let rnorm = inf_norm(&r);
    if rnorm > CONSISTENCY_TOL {
        return Err(SolverError::NotConsistent { residual: rnorm });
    }
    let s = s_entries_reduced(chart, xi, k)?;
    Ok(if chart.m() == 2 { vec![-2.0 * s[0]] } else { vec![-2.0 * s[0], -2.0 * s[2]] })
}

/// A labeled starting point for `solve_consistency`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConsistencySeed {
    pub family: Family,
    pub k: usize,
    pub values: Vec<f64>,
}

impl ConsistencySeed {
    /// Parse one `family=a k=6 values=-0.66,0.33` line.
    pub fn parse_line(line: &str) -> Result<Self, SolverError> {
        let mut family = None;
        let mut k = None;
        let mut values = None;
        for field in line.split_whitespace() {
            let (key, val) = field
                .split_once('=')
                .ok_or_else(|| SolverError::BadSeed(format!("expected key=value, got {field:?}")))?;
            match key {
                "family" => {
                    family = Some(val.parse::<Family>().map_err(SolverError::BadSeed)?);
                }
                "k" => {
                    k = Some(val.parse::<usize>().map_err(|e| {
                        SolverError::BadSeed(format!("bad width {val:?}: {e}"))
                    })?);
                }
                "values" => {
                    let parsed: Result<Vec<f64>, _> =
                        val.split(',').map(str::parse::<f64>).collect();
                    values = Some(parsed.map_err(|e| {
                        SolverError::BadSeed(format!("bad values {val:?}: {e}"))
                    })?);
                }
                other => {
                    return Err(SolverError::BadSeed(format!("unknown field {other:?}")));
                }
            }
        }
        let family = family.ok_or_else(|| SolverError::BadSeed("missing family".into()))?;
        let k = k.ok_or_else(|| SolverError::BadSeed("missing k".into()))?;
        let values = values.ok_or_else(|| SolverError::BadSeed("missing values".into()))?;
        let seed = ConsistencySeed { family, k, values };
        seed.check()?;
        Ok(seed)
    }

    /// Parse a whole seed file; blank lines and `#` comments are skipped.
    pub fn parse_file(text: &str) -> Result<Vec<Self>, SolverError> {
        text.lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(Self::parse_line)
            .collect()
    }

    /// Built-in seeds, one per family, converging at the listed widths.
    pub fn defaults() -> Vec<Self> {
        Self::parse_file(DEFAULT_SEEDS).expect("built-in seeds parse")
    }

    pub fn chart(&self) -> Chart {
        match self.family {
            Family::A => Chart::delta_sk(),
            Family::I | Family::II => Chart::delta_sk1(),
            Family::M => Chart::delta_block(2).expect("p = 2 block chart"),
        }
    }

    fn check(&self) -> Result<(), SolverError> {
        let m = self.chart().m();
        if self.values.len() != m {
            return Err(SolverError::BadSeed(format!(
                "family {} needs {m} values, got {}",
                self.family,
                self.values.len()
            )));
        }
        if self.k < self.chart().min_k() {
            return Err(SolverError::BadSeed(format!(
                "family {} needs k >= {}, got {}",
                self.family,
                self.chart().min_k(),
                self.k
            )));
        }
        Ok(())
    }
}

/// Default seed table, also shipped verbatim as `seeds.txt`.
pub const DEFAULT_SEEDS: &str = "\
# family=<a|i|ii|m> k=<width> values=<chart coordinates>
family=a k=6 values=-0.66,0.33
family=i k=6 values=-0.59,0.39,0.01,0.02,1.07
family=ii k=6 values=0.99,-0.05,0.31,0.22,-0.60
family=m k=10000 values=1.0005,-2.6e-8,2.0e-4,1.28e-4,1.93e-4,-0.999
";
