//! Small dense linear algebra used by the per-cell constructions.
//!
//! Cell matrices are at most a few dozen rows, so everything here is plain
//! row-major storage with Householder QR and one-sided Jacobi SVD.

use alloc::vec;
use alloc::vec::Vec;
use core::ops::{Index, IndexMut};

/// Row-major dense matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn from_row_slice(rows: usize, cols: usize, values: &[f64]) -> Self {
        assert_eq!(values.len(), rows * cols, "row slice has wrong length");
        Self { rows, cols, data: values.to_vec() }
    }

    pub fn from_diagonal(d: &[f64]) -> Self {
        let mut m = Self::zeros(d.len(), d.len());
        for (i, &v) in d.iter().enumerate() {
            m[(i, i)] = v;
        }
        m
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn transpose(&self) -> Matrix {
        Matrix::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    /// Leading `cols` columns.
    pub fn columns_prefix(&self, cols: usize) -> Matrix {
        assert!(cols <= self.cols);
        Matrix::from_fn(self.rows, cols, |i, j| self[(i, j)])
    }

    /// Columns `start..self.cols()`.
    pub fn columns_from(&self, start: usize) -> Matrix {
        assert!(start <= self.cols);
        Matrix::from_fn(self.rows, self.cols - start, |i, j| self[(i, start + j)])
    }

    pub fn matmul(&self, rhs: &Matrix) -> Matrix {
        assert_eq!(self.cols, rhs.rows, "matmul dimension mismatch");
        let mut out = Matrix::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            let orow = &mut out.data[i * rhs.cols..(i + 1) * rhs.cols];
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a == 0.0 {
                    continue;
                }
                let rrow = &rhs.data[k * rhs.cols..(k + 1) * rhs.cols];
                for (o, &r) in orow.iter_mut().zip(rrow) {
                    *o += a * r;
                }
            }
        }
        out
    }

    /// `selfᵀ · rhs` without forming the transpose.
    pub fn tr_matmul(&self, rhs: &Matrix) -> Matrix {
        assert_eq!(self.rows, rhs.rows, "tr_matmul dimension mismatch");
        let mut out = Matrix::zeros(self.cols, rhs.cols);
        for k in 0..self.rows {
            let lrow = self.row(k);
            let rrow = rhs.row(k);
            for (i, &a) in lrow.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                let orow = &mut out.data[i * rhs.cols..(i + 1) * rhs.cols];
                for (o, &r) in orow.iter_mut().zip(rrow) {
                    *o += a * r;
                }
            }
        }
        out
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(self.cols, x.len(), "matvec dimension mismatch");
        (0..self.rows).map(|i| dot(self.row(i), x)).collect()
    }

    /// `selfᵀ · x`.
    pub fn tr_matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(self.rows, x.len(), "tr_matvec dimension mismatch");
        let mut out = vec![0.0; self.cols];
        for (i, &xi) in x.iter().enumerate() {
            if xi == 0.0 {
                continue;
            }
            for (o, &a) in out.iter_mut().zip(self.row(i)) {
                *o += a * xi;
            }
        }
        out
    }

    pub fn scale_rows(&self, d: &[f64]) -> Matrix {
        assert_eq!(d.len(), self.rows);
        Matrix::from_fn(self.rows, self.cols, |i, j| d[i] * self[(i, j)])
    }

    pub fn add(&self, rhs: &Matrix) -> Matrix {
        self.axpy(1.0, rhs)
    }

    pub fn sub(&self, rhs: &Matrix) -> Matrix {
        self.axpy(-1.0, rhs)
    }

    /// `self + alpha · rhs`.
    pub fn axpy(&self, alpha: f64, rhs: &Matrix) -> Matrix {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols), "shape mismatch");
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a + alpha * b).collect(),
        }
    }

    pub fn scaled(&self, alpha: f64) -> Matrix {
        Matrix { rows: self.rows, cols: self.cols, data: self.data.iter().map(|a| alpha * a).collect() }
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, &v| m.max(v.abs()))
    }

    pub fn frobenius(&self) -> f64 {
        libm::sqrt(self.data.iter().map(|v| v * v).sum())
    }

    /// `(self - selfᵀ) / 2` for a square matrix.
    pub fn skew_part(&self) -> Matrix {
        assert_eq!(self.rows, self.cols);
        Matrix::from_fn(self.rows, self.cols, |i, j| 0.5 * (self[(i, j)] - self[(j, i)]))
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    libm::sqrt(dot(a, a))
}

pub fn max_abs(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, &v| m.max(v.abs()))
}

/// Householder QR of an `m × n` matrix with `m ≥ n`.
///
/// Keeps the full orthogonal factor so the trailing columns span the
/// orthogonal complement of the column space.
#[derive(Clone, Debug)]
pub struct Qr {
    /// Full `m × m` orthogonal factor.
    pub q: Matrix,
    /// `n × n` upper-triangular factor.
    pub r: Matrix,
}

impl Qr {
    pub fn new(a: &Matrix) -> Self {
        let (m, n) = (a.rows(), a.cols());
        assert!(m >= n, "QR requires rows >= cols");
        let mut work = a.clone();
        let mut reflectors: Vec<Vec<f64>> = Vec::with_capacity(n);
        for k in 0..n {
            let mut v: Vec<f64> = (k..m).map(|i| work[(i, k)]).collect();
            let alpha = norm2(&v);
            if alpha == 0.0 {
                reflectors.push(Vec::new());
                continue;
            }
            let sign = if v[0] >= 0.0 { 1.0 } else { -1.0 };
            v[0] += sign * alpha;
            let vnorm = norm2(&v);
            for x in v.iter_mut() {
                *x /= vnorm;
            }
            for j in k..n {
                let s: f64 = v.iter().enumerate().map(|(t, &vt)| vt * work[(k + t, j)]).sum();
                for (t, &vt) in v.iter().enumerate() {
                    work[(k + t, j)] -= 2.0 * vt * s;
                }
            }
            reflectors.push(v);
        }
        let r = Matrix::from_fn(n, n, |i, j| if j >= i { work[(i, j)] } else { 0.0 });
        // Q = H_0 H_1 ... H_{n-1}; apply to identity from the right-most reflector.
        let mut q = Matrix::identity(m);
        for k in (0..n).rev() {
            let v = &reflectors[k];
            if v.is_empty() {
                continue;
            }
            for j in 0..m {
                let s: f64 = v.iter().enumerate().map(|(t, &vt)| vt * q[(k + t, j)]).sum();
                if s == 0.0 {
                    continue;
                }
                for (t, &vt) in v.iter().enumerate() {
                    q[(k + t, j)] -= 2.0 * vt * s;
                }
            }
        }
        Self { q, r }
    }

    /// Thin orthogonal factor (`m × n`).
    pub fn thin_q(&self) -> Matrix {
        self.q.columns_prefix(self.r.rows())
    }

    /// Orthonormal basis of the orthogonal complement of the column space.
    pub fn null_complement(&self) -> Matrix {
        self.q.columns_from(self.r.rows())
    }

    /// Smallest `|R_ii| / max |R_jj|`; zero means rank deficient.
    pub fn diagonal_ratio(&self) -> f64 {
        let n = self.r.rows();
        let mut lo = f64::INFINITY;
        let mut hi: f64 = 0.0;
        for i in 0..n {
            let d = self.r[(i, i)].abs();
            lo = lo.min(d);
            hi = hi.max(d);
        }
        if hi == 0.0 { 0.0 } else { lo / hi }
    }
}

/// Solve `R x = b` for upper-triangular `R`.
pub fn solve_upper(r: &Matrix, b: &[f64]) -> Vec<f64> {
    let n = r.rows();
    let mut x = b.to_vec();
    for i in (0..n).rev() {
        let mut s = x[i];
        for j in i + 1..n {
            s -= r[(i, j)] * x[j];
        }
        x[i] = s / r[(i, i)];
    }
    x
}

/// Solve `Rᵀ x = b` for upper-triangular `R`.
pub fn solve_upper_transposed(r: &Matrix, b: &[f64]) -> Vec<f64> {
    let n = r.rows();
    let mut x = b.to_vec();
    for i in 0..n {
        let mut s = x[i];
        for j in 0..i {
            s -= r[(j, i)] * x[j];
        }
        x[i] = s / r[(i, i)];
    }
    x
}

/// `B · R⁻¹` for upper-triangular `R` (row-wise forward substitution).
pub fn right_solve_upper(b: &Matrix, r: &Matrix) -> Matrix {
    let n = r.rows();
    assert_eq!(b.cols(), n);
    let mut out = b.clone();
    for i in 0..b.rows() {
        // x R = b_row  <=>  Rᵀ xᵀ = b_rowᵀ
        let x = solve_upper_transposed(r, b.row(i));
        out.row_mut(i).copy_from_slice(&x);
    }
    out
}

/// Thin singular value decomposition `A = U diag(s) Vᵀ` by one-sided Jacobi.
#[derive(Clone, Debug)]
pub struct Svd {
    pub u: Matrix,
    pub singular_values: Vec<f64>,
    pub v: Matrix,
}

impl Svd {
    pub fn new(a: &Matrix) -> Self {
        if a.rows() < a.cols() {
            let t = Svd::new(&a.transpose());
            return Svd { u: t.v, singular_values: t.singular_values, v: t.u };
        }
        let (m, n) = (a.rows(), a.cols());
        // Work on columns: store Aᵀ so that each column is a contiguous row.
        let mut cols = a.transpose();
        let mut v = Matrix::identity(n);
        let eps = f64::EPSILON;
        for _sweep in 0..60 {
            let mut rotated = false;
            for p in 0..n {
                for q in p + 1..n {
                    let alpha = dot(cols.row(p), cols.row(p));
                    let beta = dot(cols.row(q), cols.row(q));
                    let gamma = dot(cols.row(p), cols.row(q));
                    if gamma == 0.0 || gamma.abs() <= eps * libm::sqrt(alpha * beta) {
                        continue;
                    }
                    rotated = true;
                    let zeta = (beta - alpha) / (2.0 * gamma);
                    let t = zeta.signum() / (zeta.abs() + libm::sqrt(1.0 + zeta * zeta));
                    let t = if zeta == 0.0 { 1.0 } else { t };
                    let c = 1.0 / libm::sqrt(1.0 + t * t);
                    let s = c * t;
                    rotate_rows(&mut cols, p, q, c, s, m);
                    rotate_rows(&mut v, p, q, c, s, n);
                }
            }
            if !rotated {
                break;
            }
        }
        let mut order: Vec<usize> = (0..n).collect();
        let norms: Vec<f64> = (0..n).map(|j| norm2(cols.row(j))).collect();
        order.sort_by(|&i, &j| norms[j].partial_cmp(&norms[i]).unwrap_or(core::cmp::Ordering::Equal));
        let mut u = Matrix::zeros(m, n);
        let mut vv = Matrix::zeros(n, n);
        let mut s = Vec::with_capacity(n);
        for (k, &j) in order.iter().enumerate() {
            let sigma = norms[j];
            s.push(sigma);
            for i in 0..m {
                u[(i, k)] = if sigma > 0.0 { cols[(j, i)] / sigma } else { 0.0 };
            }
            for i in 0..n {
                vv[(i, k)] = v[(j, i)];
            }
        }
        Svd { u, singular_values: s, v: vv }
    }

    /// 2-norm condition number; infinite when numerically rank deficient.
    pub fn condition_number(&self) -> f64 {
        let smax = self.singular_values.first().copied().unwrap_or(0.0);
        let smin = self.singular_values.last().copied().unwrap_or(0.0);
        let n = self.singular_values.len().max(self.u.rows()) as f64;
        if smax == 0.0 || smin <= smax * n * f64::EPSILON {
            f64::INFINITY
        } else {
            smax / smin
        }
    }

    /// Moore–Penrose pseudo-inverse, dropping singular values below
    /// `rel_cutoff · σ_max`.
    pub fn pseudo_inverse(&self, rel_cutoff: f64) -> Matrix {
        let smax = self.singular_values.first().copied().unwrap_or(0.0);
        let (m, n) = (self.u.rows(), self.v.rows());
        let mut out = Matrix::zeros(n, m);
        for (k, &sigma) in self.singular_values.iter().enumerate() {
            if sigma <= rel_cutoff * smax || sigma == 0.0 {
                continue;
            }
            let inv = 1.0 / sigma;
            for i in 0..n {
                let vik = self.v[(i, k)] * inv;
                if vik == 0.0 {
                    continue;
                }
                for j in 0..m {
                    out[(i, j)] += vik * self.u[(j, k)];
                }
            }
        }
        out
    }
}

fn rotate_rows(a: &mut Matrix, p: usize, q: usize, c: f64, s: f64, len: usize) {
    let cols = a.cols();
    debug_assert_eq!(cols, len);
    for k in 0..len {
        let ap = a.data[p * cols + k];
        let aq = a.data[q * cols + k];
        a.data[p * cols + k] = c * ap - s * aq;
        a.data[q * cols + k] = s * ap + c * aq;
    }
}

/// Dense LU with partial pivoting; used for small reference solves.
pub fn lu_solve(a: &Matrix, b: &[f64]) -> Option<Vec<f64>> {
    let n = a.rows();
    assert_eq!(n, a.cols());
    let mut lu = a.clone();
    let mut x = b.to_vec();
    for k in 0..n {
        let (piv, pmax) =
            (k..n).map(|i| (i, lu[(i, k)].abs())).fold((k, -1.0), |acc, v| if v.1 > acc.1 { v } else { acc });
        if pmax == 0.0 {
            return None;
        }
        if piv != k {
            for j in 0..n {
                let t = lu[(k, j)];
                lu[(k, j)] = lu[(piv, j)];
                lu[(piv, j)] = t;
            }
            x.swap(k, piv);
        }
        let d = lu[(k, k)];
        for i in k + 1..n {
            let f = lu[(i, k)] / d;
            if f == 0.0 {
                continue;
            }
            lu[(i, k)] = f;
            for j in k + 1..n {
                lu[(i, j)] -= f * lu[(k, j)];
            }
            x[i] -= f * x[k];
        }
    }
    Some(solve_upper(&Matrix::from_fn(n, n, |i, j| if j >= i { lu[(i, j)] } else { 0.0 }), &x))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(m: usize, n: usize) -> Matrix {
        Matrix::from_fn(m, n, |i, j| libm::sin((1 + i * n + j) as f64 * 0.7) + if i == j { 2.0 } else { 0.0 })
    }

    #[test]
    fn qr_reconstructs_and_is_orthogonal() {
        let a = sample(9, 5);
        let qr = Qr::new(&a);
        let back = qr.thin_q().matmul(&qr.r);
        assert!(back.sub(&a).max_abs() < 1e-13);
        let qtq = qr.q.tr_matmul(&qr.q);
        assert!(qtq.sub(&Matrix::identity(9)).max_abs() < 1e-13);
        let z = qr.null_complement();
        assert!(a.tr_matmul(&z).max_abs() < 1e-13);
    }

    #[test]
    fn svd_of_orthonormal_columns_has_unit_condition() {
        let qr = Qr::new(&sample(8, 4));
        let svd = Svd::new(&qr.thin_q());
        assert!((svd.condition_number() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn svd_reconstructs_and_pinv_solves_least_squares() {
        let a = sample(7, 4);
        let svd = Svd::new(&a);
        let us = Matrix::from_fn(7, 4, |i, k| svd.u[(i, k)] * svd.singular_values[k]);
        assert!(us.matmul(&svd.v.transpose()).sub(&a).max_abs() < 1e-12);
        let pinv = svd.pseudo_inverse(1e-12);
        // A⁺ A = I for full column rank
        assert!(pinv.matmul(&a).sub(&Matrix::identity(4)).max_abs() < 1e-12);
    }

    #[test]
    fn duplicated_rows_are_rank_deficient() {
        let a = Matrix::from_row_slice(3, 3, &[1.0, 2.0, 3.0, 1.0, 2.0, 3.0, 0.5, -1.0, 4.0]);
        assert!(Svd::new(&a).condition_number().is_infinite());
    }

    #[test]
    fn triangular_solves() {
        let qr = Qr::new(&sample(5, 5));
        let b = [1.0, -2.0, 0.5, 3.0, 1.5];
        let x = solve_upper(&qr.r, &b);
        assert!(qr.r.matvec(&x).iter().zip(&b).all(|(u, v)| (u - v).abs() < 1e-12));
        let y = solve_upper_transposed(&qr.r, &b);
        assert!(qr.r.tr_matvec(&y).iter().zip(&b).all(|(u, v)| (u - v).abs() < 1e-12));
        let bm = sample(3, 5);
        let w = right_solve_upper(&bm, &qr.r);
        assert!(w.matmul(&qr.r).sub(&bm).max_abs() < 1e-12);
    }

    #[test]
    fn lu_matches_direct() {
        let a = sample(6, 6);
        let b: Vec<f64> = (0..6).map(|i| i as f64 - 2.0).collect();
        let x = lu_solve(&a, &b).unwrap();
        let r = a.matvec(&x);
        assert!(r.iter().zip(&b).all(|(u, v)| (u - v).abs() < 1e-12));
    }
}
