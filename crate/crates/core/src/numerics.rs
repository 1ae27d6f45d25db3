//! Small dense linear algebra and a counter-based seeded generator.
//!
//! Everything here is sized for desk-scale experiments (n <= 16), so the
//! storage is plain `Vec<f64>` and every factorization is the textbook one.

use std::f64::consts::PI;
use std::fmt;
use std::ops::Index;

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Result, RvlError};

/// Pivots with magnitude at or below this are treated as zero.
pub const PIVOT_TOLERANCE: f64 = 1e-10;

/// Ridge added to a singular system in [`SolveMode::Ridge`].
pub const RIDGE_LAMBDA: f64 = 1e-8;

/// Dense column vector with finite entries.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
pub struct Vector(Vec<f64>);

impl Vector {
    /// Builds a vector, rejecting NaN and infinities.
    pub fn new(entries: Vec<f64>) -> Result<Self> {
        if entries.iter().all(|v| v.is_finite()) {
            Ok(Vector(entries))
        } else {
            Err(RvlError::NonFinite("vector entries"))
        }
    }

    /// Builds a vector from entries the caller knows to be finite.
    ///
    /// Panics in debug builds when an entry is not finite.
    pub fn from_finite(entries: Vec<f64>) -> Self {
        debug_assert!(entries.iter().all(|v| v.is_finite()));
        Vector(entries)
    }

    pub fn zeros(n: usize) -> Self {
        Vector(vec![0.0; n])
    }

    pub fn basis(n: usize, i: usize) -> Self {
        let mut v = vec![0.0; n];
        v[i] = 1.0;
        Vector(v)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    pub fn dot(&self, other: &Vector) -> Result<f64> {
        inner(self, other)
    }

    pub fn norm_sq(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn scale(&self, s: f64) -> Vector {
        Vector(self.0.iter().map(|v| v * s).collect())
    }

    pub fn add(&self, other: &Vector) -> Result<Vector> {
        check_dim(self.dim(), other.dim())?;
        Ok(Vector(
            self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect(),
        ))
    }

    pub fn sub(&self, other: &Vector) -> Result<Vector> {
        check_dim(self.dim(), other.dim())?;
        Ok(Vector(
            self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect(),
        ))
    }

    /// `self + s * other`.
    pub fn axpy(&self, s: f64, other: &Vector) -> Result<Vector> {
        check_dim(self.dim(), other.dim())?;
        Ok(Vector(
            self.0.iter().zip(&other.0).map(|(a, b)| a + s * b).collect(),
        ))
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Vector {
        Vector(self.0.iter().map(|&v| f(v)).collect())
    }

    pub fn iter(&self) -> std::slice::Iter<'_, f64> {
        self.0.iter()
    }
}

impl Index<usize> for Vector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl fmt::Debug for Vector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.0.iter()).finish()
    }
}

impl From<&[f64]> for Vector {
    fn from(v: &[f64]) -> Self {
        Vector::from_finite(v.to_vec())
    }
}

/// Σ u_i v_i.
pub fn inner(u: &Vector, v: &Vector) -> Result<f64> {
    check_dim(u.dim(), v.dim())?;
    Ok(u.0.iter().zip(&v.0).map(|(a, b)| a * b).sum())
}

/// Dense row-major matrix.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(RvlError::InvalidParameter(
                "matrix dimensions must be positive".into(),
            ));
        }
        check_dim(rows * cols, data.len())?;
        if !data.iter().all(|v| v.is_finite()) {
            return Err(RvlError::NonFinite("matrix entries"));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        for row in rows {
            check_dim(c, row.len())?;
        }
        Matrix::new(r, c, rows.concat())
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn diag(entries: &[f64]) -> Self {
        let n = entries.len();
        let mut m = Matrix::zeros(n, n);
        for (i, &v) in entries.iter().enumerate() {
            m.data[i * n + i] = v;
        }
        m
    }

    /// u vᵀ.
    pub fn outer(u: &Vector, v: &Vector) -> Self {
        let mut m = Matrix::zeros(u.dim(), v.dim());
        for i in 0..u.dim() {
            for j in 0..v.dim() {
                m.data[i * v.dim() + j] = u[i] * v[j];
            }
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn row(&self, i: usize) -> Vector {
        Vector::from_finite(self.data[i * self.cols..(i + 1) * self.cols].to_vec())
    }

    pub fn column(&self, j: usize) -> Vector {
        Vector::from_finite((0..self.rows).map(|i| self.get(i, j)).collect())
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.data[j * self.rows + i] = self.get(i, j);
            }
        }
        t
    }

    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        check_dim(self.cols, other.rows)?;
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(i, k);
                if a == 0.0 {
                    continue;
                }
                for j in 0..other.cols {
                    out.data[i * other.cols + j] += a * other.get(k, j);
                }
            }
        }
        Ok(out)
    }

    pub fn mul_vec(&self, v: &Vector) -> Result<Vector> {
        check_dim(self.cols, v.dim())?;
        Ok(Vector::from_finite(
            (0..self.rows)
                .map(|i| (0..self.cols).map(|j| self.get(i, j) * v[j]).sum())
                .collect(),
        ))
    }

    pub fn add(&self, other: &Matrix) -> Result<Matrix> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Matrix) -> Result<Matrix> {
        self.zip_with(other, |a, b| a - b)
    }

    fn zip_with(&self, other: &Matrix, f: impl Fn(f64, f64) -> f64) -> Result<Matrix> {
        check_dim(self.rows, other.rows)?;
        check_dim(self.cols, other.cols)?;
        Ok(Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn scale(&self, s: f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v * s).collect(),
        }
    }

    /// `self + s * I`.
    pub fn shift_diagonal(&self, s: f64) -> Result<Matrix> {
        if !self.is_square() {
            return Err(RvlError::NotSquare {
                rows: self.rows,
                cols: self.cols,
            });
        }
        let mut m = self.clone();
        for i in 0..self.rows {
            m.data[i * self.cols + i] += s;
        }
        Ok(m)
    }

    /// In-place `self += s * u vᵀ`.
    pub fn add_outer(&mut self, s: f64, u: &Vector, v: &Vector) -> Result<()> {
        check_dim(self.rows, u.dim())?;
        check_dim(self.cols, v.dim())?;
        for i in 0..self.rows {
            for j in 0..self.cols {
                self.data[i * self.cols + j] += s * u[i] * v[j];
            }
        }
        Ok(())
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn trace(&self) -> f64 {
        (0..self.rows.min(self.cols)).map(|i| self.get(i, i)).sum()
    }

    /// (M + Mᵀ) / 2.
    pub fn symmetrized(&self) -> Matrix {
        let mut m = self.clone();
        for i in 0..self.rows {
            for j in 0..i {
                let avg = 0.5 * (self.get(i, j) + self.get(j, i));
                m.set(i, j, avg);
                m.set(j, i, avg);
            }
        }
        m
    }

    /// Rows `r0..r1`, columns `c0..c1`.
    pub fn block(&self, r0: usize, r1: usize, c0: usize, c1: usize) -> Matrix {
        let mut b = Matrix::zeros(r1 - r0, c1 - c0);
        for i in r0..r1 {
            for j in c0..c1 {
                b.set(i - r0, j - c0, self.get(i, j));
            }
        }
        b
    }

    /// Checks |M_ij − M_ji| ≤ 1e−12·max(1, |M_ij|).
    pub fn check_symmetric(&self) -> Result<()> {
        if !self.is_square() {
            return Err(RvlError::NotSquare {
                rows: self.rows,
                cols: self.cols,
            });
        }
        for i in 0..self.rows {
            for j in 0..i {
                let a = self.get(i, j);
                let gap = (a - self.get(j, i)).abs();
                if gap > 1e-12 * a.abs().max(1.0) {
                    return Err(RvlError::Asymmetric { row: i, col: j, gap });
                }
            }
        }
        Ok(())
    }
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let rows: Vec<&[f64]> = self.data.chunks(self.cols).collect();
        f.debug_list().entries(rows).finish()
    }
}

/// Smallest LDLᵀ pivot of `M − βI`.
///
/// Pivots inside ±[`PIVOT_TOLERANCE`] are treated as zero; the remaining
/// entries of that column must then vanish (to √tolerance), otherwise a
/// 2×2 principal minor is negative and the returned margin is minus the
/// offending entry's magnitude. The first clearly negative pivot is
/// returned as is.
pub fn psd_margin(m: &Matrix, beta: f64) -> Result<f64> {
    m.check_symmetric()?;
    let n = m.rows();
    let mut a = m.shift_diagonal(-beta)?;
    let mut margin = f64::INFINITY;
    let zero_column_tol = PIVOT_TOLERANCE.sqrt();
    for k in 0..n {
        let pivot = a.get(k, k);
        margin = margin.min(pivot);
        if pivot < -PIVOT_TOLERANCE {
            return Ok(pivot);
        }
        if pivot <= PIVOT_TOLERANCE {
            let worst = ((k + 1)..n).fold(0.0_f64, |w, i| w.max(a.get(i, k).abs()));
            if worst > zero_column_tol {
                return Ok(-worst);
            }
            continue;
        }
        for i in (k + 1)..n {
            let l = a.get(i, k) / pivot;
            if l == 0.0 {
                continue;
            }
            for j in (k + 1)..=i {
                let v = a.get(i, j) - l * a.get(j, k);
                a.set(i, j, v);
                a.set(j, i, v);
            }
        }
    }
    Ok(margin)
}

/// True iff `M − βI` is positive semidefinite in the Cholesky sense: every
/// pivot is at least `−PIVOT_TOLERANCE`.
pub fn min_eig_lower_bound(m: &Matrix, beta: f64) -> Result<bool> {
    if !(beta >= 0.0) {
        return Err(RvlError::InvalidParameter(format!(
            "beta must be nonnegative, got {beta}"
        )));
    }
    Ok(psd_margin(m, beta)? >= -PIVOT_TOLERANCE)
}

/// Smallest eigenvalue of a symmetric matrix by bisection on the pivot test.
///
/// Used where a level (rather than a yes/no verdict) is needed, e.g. the
/// best PE constant of a window.
pub fn min_eigenvalue(m: &Matrix) -> Result<f64> {
    m.check_symmetric()?;
    let n = m.rows();
    // Gershgorin interval
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for i in 0..n {
        let radius: f64 = (0..n).filter(|&j| j != i).map(|j| m.get(i, j).abs()).sum();
        lo = lo.min(m.get(i, i) - radius);
        hi = hi.max(m.get(i, i) + radius);
    }
    let above = |x: f64| -> Result<bool> { Ok(psd_margin(&m.shift_diagonal(-x)?, 0.0)? >= 0.0) };
    if above(hi)? {
        return Ok(hi);
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if above(mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SolveMode {
    /// Singular systems are an error.
    Strict,
    /// Singular systems are retried as `(A + λI) x = b` with λ = [`RIDGE_LAMBDA`].
    Ridge,
}

/// Solves `A x = b` by Gaussian elimination with partial pivoting.
pub fn solve_linear(a: &Matrix, b: &Vector, mode: SolveMode) -> Result<Vector> {
    match eliminate(a, b) {
        Err(RvlError::SingularSystem) if mode == SolveMode::Ridge => {
            eliminate(&a.shift_diagonal(RIDGE_LAMBDA)?, b)
        }
        other => other,
    }
}

fn eliminate(a: &Matrix, b: &Vector) -> Result<Vector> {
    if !a.is_square() {
        return Err(RvlError::NotSquare {
            rows: a.rows(),
            cols: a.cols(),
        });
    }
    let n = a.rows();
    check_dim(n, b.dim())?;
    let tol = PIVOT_TOLERANCE * a.max_abs().max(1.0);
    let mut m = a.as_slice().to_vec();
    let mut rhs = b.as_slice().to_vec();
    for k in 0..n {
        let (p, pmax) = (k..n)
            .map(|i| (i, m[i * n + k].abs()))
            .fold((k, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
        if pmax <= tol {
            return Err(RvlError::SingularSystem);
        }
        if p != k {
            for j in 0..n {
                m.swap(k * n + j, p * n + j);
            }
            rhs.swap(k, p);
        }
        let pivot = m[k * n + k];
        for i in (k + 1)..n {
            let l = m[i * n + k] / pivot;
            if l == 0.0 {
                continue;
            }
            for j in k..n {
                m[i * n + j] -= l * m[k * n + j];
            }
            rhs[i] -= l * rhs[k];
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = ((i + 1)..n).map(|j| m[i * n + j] * x[j]).sum();
        x[i] = (rhs[i] - s) / m[i * n + i];
    }
    Vector::new(x)
}

/// Solves `A X = B` column by column.
pub fn solve_matrix(a: &Matrix, b: &Matrix, mode: SolveMode) -> Result<Matrix> {
    check_dim(a.rows(), b.rows())?;
    let mut out = Matrix::zeros(a.cols(), b.cols());
    for j in 0..b.cols() {
        let x = solve_linear(a, &b.column(j), mode)?;
        for i in 0..x.dim() {
            out.set(i, j, x[i]);
        }
    }
    Ok(out)
}

/// Spectral radius estimate from ‖M^k‖^(1/k) with k = 2^64 reached by
/// repeated normalized squaring.
pub fn spectral_radius(m: &Matrix) -> Result<f64> {
    if !m.is_square() {
        return Err(RvlError::NotSquare {
            rows: m.rows(),
            cols: m.cols(),
        });
    }
    let s = m.max_abs();
    if s == 0.0 {
        return Ok(0.0);
    }
    let mut p = m.scale(1.0 / s);
    let mut log_norm = s.ln();
    let mut k = 1.0_f64;
    for _ in 0..64 {
        let sq = p.matmul(&p)?;
        let s = sq.max_abs();
        if s == 0.0 {
            return Ok(0.0);
        }
        p = sq.scale(1.0 / s);
        log_norm = 2.0 * log_norm + s.ln();
        k *= 2.0;
    }
    Ok((log_norm / k).exp())
}

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

fn splitmix_finalize(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Counter-based SplitMix64 generator.
///
/// Draw `k` (0-based) of a generator with seed `s` is
/// `finalize(s + (k + 1)·γ)`, so the pair (seed, counter) fully determines
/// every future draw. Gaussians use the cosine branch of Box–Muller and
/// consume exactly two uniforms each.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SeededRng {
    seed: u64,
    counter: u64,
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        SeededRng { seed, counter: 0 }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn counter(&self) -> u64 {
        self.counter
    }

    /// Independent child stream keyed by `label`.
    pub fn derive(&self, label: u64) -> SeededRng {
        SeededRng::new(splitmix_finalize(
            self.seed ^ splitmix_finalize(label.wrapping_add(GOLDEN_GAMMA)),
        ))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.counter = self.counter.wrapping_add(1);
        splitmix_finalize(self.seed.wrapping_add(self.counter.wrapping_mul(GOLDEN_GAMMA)))
    }

    /// Uniform on [0, 1) with 53 random bits.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform on [lo, hi).
    pub fn uniform_in(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Standard normal draw.
    pub fn gaussian(&mut self) -> f64 {
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        (-2.0 * u1.ln()).sqrt() * (2.0 * PI * u2).cos()
    }

    pub fn gaussian_vector(&mut self, n: usize, std: f64) -> Vector {
        Vector::from_finite((0..n).map(|_| std * self.gaussian()).collect())
    }
}
