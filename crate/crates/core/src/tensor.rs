//! Small dense linear algebra: row-major matrices, slice-based vector helpers,
//! extreme eigenvalues of PSD Gram matrices, and minimum-norm interpolation.

use crate::error::{Error, Result};
use crate::par::{self, Execution};

/// Dense row-major matrix with positive dimensions and finite entries.
#[derive(Clone, Debug, PartialEq)]
pub struct Mat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Mat {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 || data.len() != rows * cols {
            return Err(Error::BadShape {
                rows,
                cols,
                len: data.len(),
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("matrix entries"));
        }
        Ok(Mat { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::BadShape {
                rows: rows.len(),
                cols,
                len: rows.iter().map(Vec::len).sum(),
            });
        }
        Mat::new(rows.len(), cols, rows.concat())
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0, "matrix dimensions must be positive");
        Mat {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        Mat::diag(&vec![1.0; n])
    }

    pub fn diag(entries: &[f64]) -> Self {
        let n = entries.len();
        let mut m = Mat::zeros(n, n);
        for (i, &v) in entries.iter().enumerate() {
            m[(i, i)] = v;
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn transpose(&self) -> Mat {
        let mut t = Mat::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    /// `self · v`
    pub fn matvec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.cols, "matvec dimension mismatch");
        let exec = par::for_work(self.rows * self.cols);
        par::map_indices(self.rows, exec, |i| dot(self.row(i), v))
    }

    /// `selfᵀ · v`
    pub fn tr_matvec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.rows, "tr_matvec dimension mismatch");
        match par::for_work(self.rows * self.cols) {
            Execution::Sequential => {
                let mut out = vec![0.0; self.cols];
                for (i, &vi) in v.iter().enumerate() {
                    axpy(&mut out, vi, self.row(i));
                }
                out
            }
            exec => par::map_indices(self.cols, exec, |j| {
                (0..self.rows).map(|i| self[(i, j)] * v[i]).sum()
            }),
        }
    }

    pub fn matmul(&self, other: &Mat) -> Mat {
        assert_eq!(self.cols, other.rows, "matmul dimension mismatch");
        let ot = other.transpose();
        let exec = par::for_work(self.rows * self.cols * other.cols);
        let rows = par::map_indices(self.rows, exec, |i| {
            (0..other.cols)
                .map(|j| dot(self.row(i), ot.row(j)))
                .collect::<Vec<_>>()
        });
        Mat {
            rows: self.rows,
            cols: other.cols,
            data: rows.concat(),
        }
    }

    /// `self · selfᵀ`, exactly symmetric.
    pub fn gram_rows(&self) -> Mat {
        symmetric_products(self)
    }

    /// `selfᵀ · self`, exactly symmetric.
    pub fn gram_cols(&self) -> Mat {
        symmetric_products(&self.transpose())
    }

    /// Gram matrix on the smaller side; its spectrum carries every nonzero
    /// eigenvalue of both `X·Xᵀ` and `Xᵀ·X`.
    pub fn gram_small(&self) -> Mat {
        if self.rows <= self.cols {
            self.gram_rows()
        } else {
            self.gram_cols()
        }
    }

    pub fn max_asymmetry(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.rows {
            for j in 0..i {
                worst = worst.max((self[(i, j)] - self[(j, i)]).abs());
            }
        }
        worst
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    fn is_square(&self) -> bool {
        self.rows == self.cols
    }
}

fn symmetric_products(a: &Mat) -> Mat {
    let n = a.rows;
    let exec = par::for_work(n * n * a.cols / 2);
    let lower = par::map_indices(n, exec, |i| {
        (0..=i).map(|j| dot(a.row(i), a.row(j))).collect::<Vec<_>>()
    });
    let mut g = Mat::zeros(n, n);
    for (i, row) in lower.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            g[(i, j)] = v;
            g[(j, i)] = v;
        }
    }
    g
}

impl std::ops::Index<(usize, usize)> for Mat {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for Mat {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `y += alpha · x`
pub fn axpy(y: &mut [f64], alpha: f64, x: &[f64]) {
    debug_assert_eq!(y.len(), x.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

pub fn all_finite(a: &[f64]) -> bool {
    a.iter().all(|v| v.is_finite())
}

pub(crate) fn check_len(expected: usize, v: &[f64]) -> Result<()> {
    if v.len() == expected {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            expected,
            got: v.len(),
        })
    }
}

// ---------------------------------------------------------------------------
// Factorizations
// ---------------------------------------------------------------------------

/// Lower-triangular Cholesky factor of a symmetric positive definite matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Cholesky {
    l: Mat,
}

impl Cholesky {
    pub fn new(a: &Mat) -> Result<Self> {
        if !a.is_square() {
            return Err(Error::Singular);
        }
        let n = a.rows;
        let mut l = Mat::zeros(n, n);
        for j in 0..n {
            let mut d = a[(j, j)];
            for k in 0..j {
                d -= l[(j, k)] * l[(j, k)];
            }
            if d <= 0.0 || !d.is_finite() {
                return Err(Error::Singular);
            }
            let djj = d.sqrt();
            l[(j, j)] = djj;
            for i in j + 1..n {
                let mut s = a[(i, j)];
                for k in 0..j {
                    s -= l[(i, k)] * l[(j, k)];
                }
                l[(i, j)] = s / djj;
            }
        }
        Ok(Cholesky { l })
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        self.solve_upper(&self.solve_lower(b))
    }

    /// `L⁻¹·b`
    pub fn solve_lower(&self, b: &[f64]) -> Vec<f64> {
        let n = self.l.rows;
        let mut y = b.to_vec();
        for i in 0..n {
            let mut s = y[i];
            for k in 0..i {
                s -= self.l[(i, k)] * y[k];
            }
            y[i] = s / self.l[(i, i)];
        }
        y
    }

    /// `L⁻ᵀ·b`
    pub fn solve_upper(&self, b: &[f64]) -> Vec<f64> {
        let n = self.l.rows;
        let mut y = b.to_vec();
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in i + 1..n {
                s -= self.l[(k, i)] * y[k];
            }
            y[i] = s / self.l[(i, i)];
        }
        y
    }

    pub fn min_pivot(&self) -> f64 {
        (0..self.l.rows)
            .map(|i| self.l[(i, i)] * self.l[(i, i)])
            .fold(f64::INFINITY, f64::min)
    }
}

/// Gaussian elimination with partial pivoting; `None` when a pivot vanishes.
fn lu_solve(a: &Mat, b: &[f64]) -> Option<Vec<f64>> {
    let n = a.rows;
    let mut m = a.data.clone();
    let mut x = b.to_vec();
    for k in 0..n {
        let p = (k..n).max_by(|&i, &j| m[i * n + k].abs().total_cmp(&m[j * n + k].abs()))?;
        if m[p * n + k] == 0.0 {
            return None;
        }
        if p != k {
            for c in 0..n {
                m.swap(k * n + c, p * n + c);
            }
            x.swap(k, p);
        }
        let piv = m[k * n + k];
        for i in k + 1..n {
            let f = m[i * n + k] / piv;
            if f != 0.0 {
                for c in k..n {
                    m[i * n + c] -= f * m[k * n + c];
                }
                x[i] -= f * x[k];
            }
        }
    }
    for i in (0..n).rev() {
        let mut s = x[i];
        for c in i + 1..n {
            s -= m[i * n + c] * x[c];
        }
        x[i] = s / m[i * n + i];
    }
    all_finite(&x).then_some(x)
}

/// Outer-product Cholesky with diagonal pivoting, stopped once every remaining
/// pivot is at most `threshold`. Returns `L` (n×r) with `A ≈ L·Lᵀ`.
fn pivoted_cholesky(a: &Mat, threshold: f64) -> Result<Vec<Vec<f64>>> {
    let n = a.rows;
    let mut diag: Vec<f64> = (0..n).map(|i| a[(i, i)]).collect();
    let mut chosen = vec![false; n];
    let mut cols: Vec<Vec<f64>> = Vec::new();
    loop {
        let pick = (0..n)
            .filter(|&i| !chosen[i])
            .max_by(|&i, &j| diag[i].total_cmp(&diag[j]));
        let Some(p) = pick else { break };
        if diag[p] <= threshold {
            break;
        }
        let root = diag[p].sqrt();
        let mut col = vec![0.0; n];
        for i in 0..n {
            if chosen[i] {
                continue;
            }
            let mut s = a[(i, p)];
            for c in &cols {
                s -= c[i] * c[p];
            }
            col[i] = s / root;
        }
        col[p] = root;
        chosen[p] = true;
        for i in 0..n {
            if !chosen[i] {
                diag[i] -= col[i] * col[i];
            }
        }
        cols.push(col);
    }
    // the unfactored Schur complement of a PSD matrix is PSD and bounded by the threshold
    let slack = threshold.max(f64::MIN_POSITIVE) * (1.0 + 1e-6) + 1e-14 * a.max_abs();
    let rest: Vec<usize> = (0..n).filter(|&i| !chosen[i]).collect();
    for &i in &rest {
        for &j in &rest {
            let mut s = a[(i, j)];
            for c in &cols {
                s -= c[i] * c[j];
            }
            if s.abs() > slack {
                return Err(Error::NotPsd);
            }
        }
    }
    Ok(cols)
}

// ---------------------------------------------------------------------------
// Extreme eigenvalues
// ---------------------------------------------------------------------------

/// Largest and smallest nonzero eigenvalue of a PSD Gram matrix.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EigenExtremes {
    pub lambda_max: f64,
    pub lambda_min_nonzero: f64,
    pub rank_estimate: usize,
}

/// Default relative threshold separating "nonzero" eigenvalues from rounding noise.
pub const RANK_TOL: f64 = 1e-10;

const POWER_MAX_ITERS: usize = 20_000;
const RQI_MAX_ITERS: usize = 30;

/// Extreme eigenvalues of a symmetric PSD matrix.
///
/// `lambda_max` comes from power iteration polished by Rayleigh-quotient
/// iteration. The null space is then deflated with a pivoted Cholesky
/// factorization `G ≈ L·Lᵀ` stopped at `tol·lambda_max`; the smallest
/// eigenvalue of the nonsingular `Lᵀ·L` (same nonzero spectrum as `G`) comes from
/// inverse iteration, polished the same way.
pub fn extreme_eigenvalues(gram: &Mat, tol: f64) -> Result<EigenExtremes> {
    if !gram.is_square() {
        return Err(Error::BadShape {
            rows: gram.rows,
            cols: gram.cols,
            len: gram.data.len(),
        });
    }
    let scale = gram.max_abs();
    if scale == 0.0 {
        return Err(Error::ZeroMatrix);
    }
    let asym = gram.max_asymmetry();
    if asym > tol * scale {
        return Err(Error::NotSymmetric(asym));
    }
    let lambda_max = top_eigenvalue(gram);
    if lambda_max <= 0.0 {
        return Err(Error::NotPsd);
    }
    let cols = pivoted_cholesky(gram, tol * lambda_max)?;
    let r = cols.len();
    if r == 0 {
        return Err(Error::ZeroMatrix);
    }
    let mut reduced = Mat::zeros(r, r);
    for i in 0..r {
        for j in 0..=i {
            let v = dot(&cols[i], &cols[j]);
            reduced[(i, j)] = v;
            reduced[(j, i)] = v;
        }
    }
    let lambda_min = bottom_eigenvalue(&reduced)?.min(lambda_max);
    Ok(EigenExtremes {
        lambda_max,
        lambda_min_nonzero: lambda_min,
        rank_estimate: r,
    })
}

fn start_vector(n: usize) -> Vec<f64> {
    let mut v = crate::rng::uniform_vec(&mut crate::rng::seeded(0x5EED_E16E), n, 0.5, 1.5);
    let s = norm(&v);
    v.iter_mut().for_each(|x| *x /= s);
    v
}

fn normalize(v: &mut [f64]) -> f64 {
    let s = norm(v);
    if s > 0.0 {
        v.iter_mut().for_each(|x| *x /= s);
    }
    s
}

fn rayleigh(a: &Mat, v: &[f64]) -> f64 {
    dot(v, &a.matvec(v))
}

fn top_eigenvalue(a: &Mat) -> f64 {
    let mut v = start_vector(a.rows);
    let mut lambda = rayleigh(a, &v);
    for _ in 0..POWER_MAX_ITERS {
        let mut w = a.matvec(&v);
        if normalize(&mut w) == 0.0 {
            return 0.0;
        }
        let next = rayleigh(a, &w);
        v = w;
        let done = (next - lambda).abs() <= 1e-15 * next.abs();
        lambda = next;
        if done {
            break;
        }
    }
    let polished = rayleigh_polish(a, v, lambda);
    // the largest eigenvalue bounds every Rayleigh quotient from above
    if polished >= lambda {
        polished
    } else {
        lambda
    }
}

fn bottom_eigenvalue(a: &Mat) -> Result<f64> {
    let chol = Cholesky::new(a).map_err(|_| Error::NotPsd)?;
    let mut v = start_vector(a.rows);
    let mut lambda = rayleigh(a, &v);
    for _ in 0..POWER_MAX_ITERS {
        let mut w = chol.solve(&v);
        normalize(&mut w);
        let next = rayleigh(a, &w);
        v = w;
        let done = (next - lambda).abs() <= 1e-15 * next.abs();
        lambda = next;
        if done {
            break;
        }
    }
    let polished = rayleigh_polish(a, v, lambda);
    Ok(if polished <= lambda && polished > 0.0 {
        polished
    } else {
        lambda
    })
}

fn rayleigh_polish(a: &Mat, mut v: Vec<f64>, mut lambda: f64) -> f64 {
    let n = a.rows;
    for _ in 0..RQI_MAX_ITERS {
        let mut shifted = a.clone();
        for i in 0..n {
            shifted[(i, i)] -= lambda;
        }
        let Some(mut w) = lu_solve(&shifted, &v) else {
            break;
        };
        if normalize(&mut w) == 0.0 {
            break;
        }
        let next = rayleigh(a, &w);
        v = w;
        let done = (next - lambda).abs() <= 4.0 * f64::EPSILON * next.abs();
        lambda = next;
        if done {
            break;
        }
    }
    lambda
}

// ---------------------------------------------------------------------------
// Minimum-norm interpolation
// ---------------------------------------------------------------------------

/// Applies the pseudoinverse of a fixed design matrix through its smaller Gram.
///
/// Singular Grams get a ridge of `1e-12·λ_max`; the bias this introduces is
/// removed by a few rounds of iterative refinement.
#[derive(Clone, Debug)]
pub struct AffineProjector {
    x: Mat,
    wide: bool,
    chol: Cholesky,
}

const RIDGE: f64 = 1e-12;
const REFINE_ROUNDS: usize = 3;

impl AffineProjector {
    pub fn new(x: &Mat) -> Result<Self> {
        let gram = x.gram_small();
        let lambda_max = top_eigenvalue(&gram);
        if lambda_max <= 0.0 {
            return Err(Error::ZeroMatrix);
        }
        let chol = match Cholesky::new(&gram) {
            Ok(c) if c.min_pivot() > RANK_TOL * lambda_max => c,
            _ => {
                let mut ridged = gram;
                for i in 0..ridged.rows {
                    ridged[(i, i)] += RIDGE * lambda_max;
                }
                Cholesky::new(&ridged).map_err(|_| Error::NotPsd)?
            }
        };
        Ok(AffineProjector {
            x: x.clone(),
            wide: x.rows <= x.cols,
            chol,
        })
    }

    pub fn design(&self) -> &Mat {
        &self.x
    }

    fn pinv_once(&self, r: &[f64]) -> Vec<f64> {
        if self.wide {
            self.x.tr_matvec(&self.chol.solve(r))
        } else {
            self.chol.solve(&self.x.tr_matvec(r))
        }
    }

    /// `X⁺·r`, the minimum-norm `c` with `X·c = r` (for consistent `r`).
    pub fn pinv_apply(&self, r: &[f64]) -> Vec<f64> {
        let mut c = self.pinv_once(r);
        for _ in 0..REFINE_ROUNDS {
            let res = sub(r, &self.x.matvec(&c));
            if norm(&res) <= f64::EPSILON * norm(r) {
                break;
            }
            axpy(&mut c, 1.0, &self.pinv_once(&res));
        }
        c
    }

    /// Orthogonal projection of `w` onto `{v : X·v = y}`.
    pub fn project(&self, y: &[f64], w: &[f64]) -> Result<Vec<f64>> {
        check_len(self.x.rows, y)?;
        check_len(self.x.cols, w)?;
        let r = sub(y, &self.x.matvec(w));
        let mut out = w.to_vec();
        if norm(&r) > 0.0 {
            axpy(&mut out, 1.0, &self.pinv_apply(&r));
        }
        let residual = dist(&self.x.matvec(&out), y);
        let tolerance = 1e-8 * (1.0 + norm(y));
        if residual > tolerance || !all_finite(&out) {
            return Err(Error::Inconsistent {
                residual,
                tolerance,
            });
        }
        Ok(out)
    }

    /// Component of `v` in the null space of `X`.
    pub fn project_null(&self, v: &[f64]) -> Vec<f64> {
        let xv = self.x.matvec(v);
        sub(v, &self.pinv_apply(&xv))
    }
}

/// `w0 + Xᵀ(XXᵀ)⁺(y − X·w0)`: the interpolant closest to `w0` in ℓ2.
pub fn min_norm_interpolant(x: &Mat, y: &[f64], w0: &[f64]) -> Result<Vec<f64>> {
    AffineProjector::new(x)?.project(y, w0)
}
