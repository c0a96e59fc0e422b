//! Permutation-symmetric fixed spaces of the student weight matrix, their
//! chart coordinates, the double S_k action, and the isotypic split.
//!
//! Student rows live in `R^k` against the teacher `V = I_k` (d = k). The
//! group `S_k x S_k` acts by `(rho, eta) . W[i][j] = W[rho^-1 i][eta^-1 j]`.
//! Three diagonal-subgroup fixed spaces are charted:
//!
//! - `DeltaSk` (p = 0, m = 2): all rows alike; diagonal `xi1`, off `xi2`.
//! - `DeltaSk1` (p = 1, m = 5): one distinguished last row.
//! - `DeltaBlock` (p >= 2, m = 6): a distinguished block of p last rows.

use thiserror::Error;

use crate::kernel_geometry::{angle_between, KernelError};

/// Membership tolerance for [`extract`]: max absolute deviation of the
/// entries of one symmetry class from their class mean.
pub const FIXED_SPACE_TOL: f64 = 1e-10;

/// Default angular tolerance for [`in_omega_a`]: rows closer than this (in
/// radians) to parallel or antiparallel are treated as degenerate.
pub const OMEGA_A_TOL: f64 = 1e-8;

/// Resolution of `acos` near 0 and pi in f64: a one-ulp error on a cosine of
/// magnitude 1 already moves the angle by ~2e-8 rad, so angles below this
/// floor are indistinguishable from exact parallelism. Degeneracy tests use
/// `max(tol, ANGLE_NOISE_FLOOR)`.
pub const ANGLE_NOISE_FLOOR: f64 = 4.5e-8;

#[derive(Debug, Error, PartialEq)]
pub enum ChartError {
    #[error("coordinate vector has length {got}, chart needs {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("matrix is off the chart's fixed space by {max_dev:e} (tol {tol:e})")]
    NotInFixedSpace { max_dev: f64, tol: f64 },
    #[error("chart requires k >= {min_k}, got {k}")]
    WidthTooSmall { min_k: usize, k: usize },
    #[error("block size p = {0} needs p >= 2 in the block chart")]
    BadBlock(usize),
    #[error("not a permutation of 0..{0}")]
    BadPermutation(usize),
    #[error("matrix shapes differ or are not square")]
    ShapeMismatch,
    #[error(transparent)]
    Kernel(#[from] KernelError),
}

/// Dense square row-major weight matrix (k rows in R^k).
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMatrix {
    k: usize,
    a: Vec<f64>,
}

impl WeightMatrix {
    pub fn zeros(k: usize) -> Self {
        WeightMatrix { k, a: vec![0.0; k * k] }
    }

    pub fn identity(k: usize) -> Self {
        let mut w = Self::zeros(k);
        for i in 0..k {
            w.a[i * k + i] = 1.0;
        }
        w
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self, ChartError> {
        let k = rows.len();
        if rows.iter().any(|r| r.len() != k) {
            return Err(ChartError::ShapeMismatch);
        }
        Ok(WeightMatrix { k, a: rows.into_iter().flatten().collect() })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.a[i * self.k + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.a[i * self.k + j] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.a[i * self.k..(i + 1) * self.k]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.a.chunks(self.k)
    }

    pub fn entries(&self) -> &[f64] {
        &self.a
    }

    pub fn frobenius(&self) -> f64 {
        self.a.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.a.iter().fold(0.0f64, |m, x| m.max(x.abs()))
    }

    pub fn sub(&self, other: &WeightMatrix) -> Result<WeightMatrix, ChartError> {
        if self.k != other.k {
            return Err(ChartError::ShapeMismatch);
        }
        Ok(WeightMatrix {
            k: self.k,
            a: self.a.iter().zip(&other.a).map(|(a, b)| a - b).collect(),
        })
    }

    /// Frobenius inner product.
    pub fn dot(&self, other: &WeightMatrix) -> f64 {
        self.a.iter().zip(&other.a).map(|(a, b)| a * b).sum()
    }
}

/// Fixed-space family; see the module docs for the layouts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChartFamily {
    DeltaSk,
    DeltaSk1,
    DeltaBlock,
}

/// A chart of a symmetric fixed space: family plus distinguished-block size.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Chart {
    pub family: ChartFamily,
    pub p: usize,
}

impl Chart {
    pub fn delta_sk() -> Self {
        Chart { family: ChartFamily::DeltaSk, p: 0 }
    }

    pub fn delta_sk1() -> Self {
        Chart { family: ChartFamily::DeltaSk1, p: 1 }
    }

    pub fn delta_block(p: usize) -> Result<Self, ChartError> {
        if p < 2 {
            return Err(ChartError::BadBlock(p));
        }
        Ok(Chart { family: ChartFamily::DeltaBlock, p })
    }

    /// Number of chart coordinates.
    pub fn m(&self) -> usize {
        match self.family {
            ChartFamily::DeltaSk => 2,
            ChartFamily::DeltaSk1 => 5,
            ChartFamily::DeltaBlock => 6,
        }
    }

    /// Smallest width the chart supports (both blocks need >= 2 rows for the
    /// within-block angles to exist; p = 0 and p = 1 need k - p >= 2 too).
    pub fn min_k(&self) -> usize {
        self.p + 2
    }

    /// One representative matrix position per chart coordinate, in xi order.
    pub fn entry_positions(&self, k: usize) -> Vec<(usize, usize)> {
        let q = k - self.p;
        match self.family {
            ChartFamily::DeltaSk => vec![(0, 0), (0, 1)],
            ChartFamily::DeltaSk1 => {
                vec![(0, 0), (0, 1), (0, k - 1), (k - 1, 0), (k - 1, k - 1)]
            }
            ChartFamily::DeltaBlock => {
                vec![(0, 0), (0, 1), (0, q), (q, 0), (q, q), (q, q + 1)]
            }
        }
    }

    fn check(&self, xi_len: usize, k: usize) -> Result<(), ChartError> {
        if xi_len != self.m() {
            return Err(ChartError::DimensionMismatch { expected: self.m(), got: xi_len });
        }
        if k < self.min_k() {
            return Err(ChartError::WidthTooSmall { min_k: self.min_k(), k });
        }
        Ok(())
    }
}

/// Build the fixed-space matrix of a chart from its coordinates.
pub fn embed(chart: Chart, xi: &[f64], k: usize) -> Result<WeightMatrix, ChartError> {
    chart.check(xi.len(), k)?;
    let p = chart.p;
    let q = k - p; // rows in the leading block
    let mut w = WeightMatrix::zeros(k);
    match chart.family {
        ChartFamily::DeltaSk => {
            for i in 0..k {
                for j in 0..k {
                    w.set(i, j, if i == j { xi[0] } else { xi[1] });
                }
            }
        }
        ChartFamily::DeltaSk1 => {
            for i in 0..q {
                for j in 0..q {
                    w.set(i, j, if i == j { xi[0] } else { xi[1] });
                }
                w.set(i, k - 1, xi[2]);
            }
            for j in 0..q {
                w.set(k - 1, j, xi[3]);
            }
            w.set(k - 1, k - 1, xi[4]);
        }
        ChartFamily::DeltaBlock => {
            for i in 0..q {
                for j in 0..q {
                    w.set(i, j, if i == j { xi[0] } else { xi[1] });
                }
                for j in q..k {
                    w.set(i, j, xi[2]);
                }
            }
            for i in q..k {
                for j in 0..q {
                    w.set(i, j, xi[3]);
                }
                for j in q..k {
                    w.set(i, j, if i == j { xi[4] } else { xi[5] });
                }
            }
        }
    }
    Ok(w)
}

/// Read chart coordinates back off a fixed-space matrix.
///
/// Each symmetry class must be constant to within [`FIXED_SPACE_TOL`]; the
/// class means are returned. The largest in-class deviation is reported on
/// failure.
pub fn extract(chart: Chart, w: &WeightMatrix) -> Result<Vec<f64>, ChartError> {
    let k = w.k();
    chart.check(chart.m(), k)?;
    let p = chart.p;
    let q = k - p;
    // Class index per entry, aligned with the chart's xi ordering.
    let class = |i: usize, j: usize| -> usize {
        match chart.family {
            ChartFamily::DeltaSk => usize::from(i != j),
            ChartFamily::DeltaSk1 => {
                if i < q {
                    if j == k - 1 {
                        2
                    } else {
                        usize::from(i != j)
                    }
                } else if j == k - 1 {
                    4
                } else {
                    3
                }
            }
            ChartFamily::DeltaBlock => {
                if i < q {
                    if j >= q {
                        2
                    } else {
                        usize::from(i != j)
                    }
                } else if j < q {
                    3
                } else if i == j {
                    4
                } else {
                    5
                }
            }
        }
    };
    let m = chart.m();
    let mut sums = vec![0.0; m];
    let mut counts = vec![0usize; m];
    for i in 0..k {
        for j in 0..k {
            let c = class(i, j);
            sums[c] += w.get(i, j);
            counts[c] += 1;
        }
    }
    let xi: Vec<f64> = sums
        .iter()
        .zip(&counts)
        .map(|(s, &n)| if n > 0 { s / n as f64 } else { 0.0 })
        .collect();
    let mut max_dev = 0.0f64;
    for i in 0..k {
        for j in 0..k {
            max_dev = max_dev.max((w.get(i, j) - xi[class(i, j)]).abs());
        }
    }
    if max_dev > FIXED_SPACE_TOL {
        return Err(ChartError::NotInFixedSpace { max_dev, tol: FIXED_SPACE_TOL });
    }
    Ok(xi)
}

/// Column sums of the embedded matrix, one value per column class, with the
/// width as a real multiplicity weight.
pub fn column_sums(chart: Chart, xi: &[f64], k: f64) -> Result<Vec<f64>, ChartError> {
    if xi.len() != chart.m() {
        return Err(ChartError::DimensionMismatch { expected: chart.m(), got: xi.len() });
    }
    let p = chart.p as f64;
    Ok(match chart.family {
        ChartFamily::DeltaSk => vec![xi[0] + (k - 1.0) * xi[1]],
        ChartFamily::DeltaSk1 => {
            vec![xi[0] + (k - 2.0) * xi[1] + xi[3], (k - 1.0) * xi[2] + xi[4]]
        }
        ChartFamily::DeltaBlock => vec![
            xi[0] + (k - p - 1.0) * xi[1] + p * xi[3],
            (k - p) * xi[2] + xi[4] + (p - 1.0) * xi[5],
        ],
    })
}

/// Permutation of `0..n` stored as images: `perm[i]` is where `i` goes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Perm(Vec<usize>);

impl Perm {
    pub fn identity(n: usize) -> Self {
        Perm((0..n).collect())
    }

    pub fn from_images(images: Vec<usize>) -> Result<Self, ChartError> {
        let n = images.len();
        let mut seen = vec![false; n];
        for &x in &images {
            if x >= n || seen[x] {
                return Err(ChartError::BadPermutation(n));
            }
            seen[x] = true;
        }
        Ok(Perm(images))
    }

    pub fn transposition(n: usize, i: usize, j: usize) -> Self {
        let mut im: Vec<usize> = (0..n).collect();
        im.swap(i, j);
        Perm(im)
    }

    pub fn n(&self) -> usize {
        self.0.len()
    }

    pub fn image(&self, i: usize) -> usize {
        self.0[i]
    }

    pub fn inverse(&self) -> Perm {
        let mut inv = vec![0; self.0.len()];
        for (i, &x) in self.0.iter().enumerate() {
            inv[x] = i;
        }
        Perm(inv)
    }

    /// Composition `self * other` (apply `other` first).
    pub fn compose(&self, other: &Perm) -> Perm {
        Perm(other.0.iter().map(|&x| self.0[x]).collect())
    }
}

/// Double action `(rho, eta) . W[i][j] = W[rho^-1 i][eta^-1 j]` (rho permutes
/// student rows, eta teacher rows / columns).
pub fn group_act(rho: &Perm, eta: &Perm, w: &WeightMatrix) -> Result<WeightMatrix, ChartError> {
    let k = w.k();
    if rho.n() != k || eta.n() != k {
        return Err(ChartError::ShapeMismatch);
    }
    let rho_inv = rho.inverse();
    let eta_inv = eta.inverse();
    let mut out = WeightMatrix::zeros(k);
    for i in 0..k {
        for j in 0..k {
            out.set(i, j, w.get(rho_inv.image(i), eta_inv.image(j)));
        }
    }
    Ok(out)
}

/// Does the chart's isotropy subgroup (acting diagonally) fix `w` to within
/// `tol` in the max norm? Checked on adjacent transpositions of each block,
/// which generate the subgroup.
pub fn isotropy_contains(w: &WeightMatrix, chart: Chart, tol: f64) -> bool {
    let k = w.k();
    let q = k - chart.p;
    let mut gens: Vec<Perm> = Vec::new();
    for i in 0..q.saturating_sub(1) {
        gens.push(Perm::transposition(k, i, i + 1));
    }
    for i in q..k.saturating_sub(1) {
        gens.push(Perm::transposition(k, i, i + 1));
    }
    gens.into_iter().all(|g| match group_act(&g, &g, w) {
        Ok(gw) => gw.sub(w).map(|d| d.max_abs() <= tol).unwrap_or(false),
        Err(_) => false,
    })
}

/// Isotypic components of `M(k, k)` under the double S_k action:
/// constants (dim 1), identical-row deviations (dim k-1), identical-column
/// deviations (dim k-1), and the doubly-centered remainder (dim (k-1)^2).
#[derive(Debug, Clone)]
pub struct IsotypicParts {
    pub part_i: WeightMatrix,
    pub part_r1: WeightMatrix,
    pub part_c1: WeightMatrix,
    pub part_a: WeightMatrix,
}

pub fn isotypic_project(w: &WeightMatrix) -> IsotypicParts {
    let k = w.k();
    let kf = k as f64;
    let grand: f64 = w.entries().iter().sum::<f64>() / (kf * kf);
    let mut col_mean = vec![0.0; k];
    let mut row_mean = vec![0.0; k];
    for i in 0..k {
        for j in 0..k {
            row_mean[i] += w.get(i, j) / kf;
            col_mean[j] += w.get(i, j) / kf;
        }
    }
    let mut part_i = WeightMatrix::zeros(k);
    let mut part_r1 = WeightMatrix::zeros(k);
    let mut part_c1 = WeightMatrix::zeros(k);
    let mut part_a = WeightMatrix::zeros(k);
    for i in 0..k {
        for j in 0..k {
            part_i.set(i, j, grand);
            part_r1.set(i, j, col_mean[j] - grand);
            part_c1.set(i, j, row_mean[i] - grand);
            part_a.set(i, j, w.get(i, j) - row_mean[i] - col_mean[j] + grand);
        }
    }
    IsotypicParts { part_i, part_r1, part_c1, part_a }
}

/// Is `w` in the angular general position set: no row of `w` within `tol`
/// radians of parallel or antiparallel to another row of `w` or to a row of
/// the teacher `v`?
pub fn in_omega_a(w: &WeightMatrix, v: &WeightMatrix, tol: f64) -> Result<bool, ChartError> {
    let k = w.k();
    if v.k() != k {
        return Err(ChartError::ShapeMismatch);
    }
    let eff = tol.max(ANGLE_NOISE_FLOOR);
    let degenerate = |t: f64| t < eff || t > std::f64::consts::PI - eff;
    for i in 0..k {
        for j in (i + 1)..k {
            if degenerate(angle_between(w.row(i), w.row(j))?) {
                return Ok(false);
            }
        }
        for j in 0..k {
            if degenerate(angle_between(w.row(i), v.row(j))?) {
                return Ok(false);
            }
        }
    }
    Ok(true)
}
