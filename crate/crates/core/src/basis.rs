//! Orthonormal total-degree polynomial basis on the reference triangle
//! `{r > -1, s > -1, r + s < 0}` and Vandermonde matrices built from it.
//!
//! The collapsed-coordinate form `Q_i = ((1-s)/2)^i P_i(a)` is evaluated by
//! its own three-term recurrence, so there is no division by `1 - s` and the
//! top vertex needs no special case.

use alloc::vec;
use alloc::vec::Vec;

use crate::linalg::{Matrix, Svd};
use crate::Point;

/// Dimension of the total-degree `p` polynomial space in `d` variables.
pub fn basis_dim(p: usize, d: usize) -> usize {
    // binomial(p + d, d)
    let mut num = 1usize;
    let mut den = 1usize;
    for k in 1..=d {
        num *= p + k;
        den *= k;
    }
    num / den
}

/// Exponent pairs `(i, j)` in graded order; the degree-`q` basis is a prefix
/// of the degree-`p` basis for `q <= p`.
pub fn index_pairs(p: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::with_capacity(basis_dim(p, 2));
    for deg in 0..=p {
        for i in 0..=deg {
            out.push((i, deg - i));
        }
    }
    out
}

/// Orthonormal Jacobi polynomials `P_n^{(alpha, 0)}` and their derivatives for
/// `n = 0..=nmax`, normalized with respect to the weight `(1 - x)^alpha`.
fn jacobi(nmax: usize, alpha: f64, x: f64, vals: &mut Vec<f64>, ders: &mut Vec<f64>) {
    vals.clear();
    ders.clear();
    let gamma0 = libm::pow(2.0, alpha + 1.0) / (alpha + 1.0);
    let p0 = 1.0 / libm::sqrt(gamma0);
    vals.push(p0);
    ders.push(0.0);
    if nmax == 0 {
        return;
    }
    let gamma1 = (alpha + 1.0) / (alpha + 3.0) * gamma0;
    let s1 = 1.0 / libm::sqrt(gamma1);
    vals.push(((alpha + 2.0) * x / 2.0 + alpha / 2.0) * s1);
    ders.push((alpha + 2.0) / 2.0 * s1);
    let mut aold = 2.0 / (2.0 + alpha) * libm::sqrt((alpha + 1.0) / (alpha + 3.0));
    for i in 1..nmax {
        let fi = i as f64;
        let h1 = 2.0 * fi + alpha;
        let anew = 2.0 / (h1 + 2.0)
            * libm::sqrt((fi + 1.0) * (fi + 1.0 + alpha) * (fi + 1.0 + alpha) * (fi + 1.0) / (h1 + 1.0) / (h1 + 3.0));
        let bnew = -(alpha * alpha) / h1 / (h1 + 2.0);
        let v = (-aold * vals[i - 1] + (x - bnew) * vals[i]) / anew;
        let d = (-aold * ders[i - 1] + vals[i] + (x - bnew) * ders[i]) / anew;
        vals.push(v);
        ders.push(d);
        aold = anew;
    }
}

/// Evaluate all degree-`p` basis functions and their reference derivatives
/// at `(r, s)`. Outputs are written in [`index_pairs`] order.
pub fn eval_reference(p: usize, r: f64, s: f64, vals: &mut [f64], dr: &mut [f64], ds: &mut [f64]) {
    let n = basis_dim(p, 2);
    debug_assert!(vals.len() >= n && dr.len() >= n && ds.len() >= n);
    let a = 0.5 * (1.0 + 2.0 * r + s);
    let t = 0.5 * (1.0 - s);
    // Q_i and derivatives in r and s
    let mut q = vec![0.0; p + 1];
    let mut qr = vec![0.0; p + 1];
    let mut qs = vec![0.0; p + 1];
    q[0] = 1.0;
    if p >= 1 {
        q[1] = a;
        qr[1] = 1.0;
        qs[1] = 0.5;
    }
    for i in 1..p {
        let fi = i as f64;
        let c1 = (2.0 * fi + 1.0) / (fi + 1.0);
        let c2 = fi / (fi + 1.0);
        q[i + 1] = c1 * a * q[i] - c2 * t * t * q[i - 1];
        qr[i + 1] = c1 * (q[i] + a * qr[i]) - c2 * t * t * qr[i - 1];
        qs[i + 1] = c1 * (0.5 * q[i] + a * qs[i]) - c2 * (-t * q[i - 1] + t * t * qs[i - 1]);
    }
    let mut jv = Vec::with_capacity(p + 1);
    let mut jd = Vec::with_capacity(p + 1);
    // Fill per first index i, then scatter in graded order.
    let mut col = 0usize;
    let pairs = index_pairs(p);
    let mut table: Vec<Vec<(f64, f64, f64)>> = Vec::with_capacity(p + 1);
    for i in 0..=p {
        jacobi(p - i, 2.0 * i as f64 + 1.0, s, &mut jv, &mut jd);
        let scale = libm::sqrt(2.0) * libm::sqrt((2.0 * i as f64 + 1.0) / 2.0) * libm::pow(2.0, i as f64);
        let mut row = Vec::with_capacity(p - i + 1);
        for j in 0..=(p - i) {
            let v = scale * q[i] * jv[j];
            let d_r = scale * qr[i] * jv[j];
            let d_s = scale * (qs[i] * jv[j] + q[i] * jd[j]);
            row.push((v, d_r, d_s));
        }
        table.push(row);
    }
    for &(i, j) in &pairs {
        let (v, a_r, a_s) = table[i][j];
        vals[col] = v;
        dr[col] = a_r;
        ds[col] = a_s;
        col += 1;
    }
}

/// Affine map from a physical box onto `[-1, 0]^2`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AffineMap {
    pub lo: Point,
    /// Reference units per physical unit along each axis.
    pub scale: [f64; 2],
}

impl AffineMap {
    /// Fit to the bounding box of `points`; a degenerate extent is widened
    /// to `h0` about its center.
    pub fn fit(points: &[Point], h0: f64) -> Self {
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for p in points {
            for d in 0..2 {
                lo[d] = lo[d].min(p[d]);
                hi[d] = hi[d].max(p[d]);
            }
        }
        let mut scale = [1.0; 2];
        for d in 0..2 {
            let mut w = hi[d] - lo[d];
            if !(w > 1e-10 * h0) {
                let c = 0.5 * (lo[d] + hi[d]);
                lo[d] = c - 0.5 * h0;
                w = h0;
            }
            scale[d] = 1.0 / w;
        }
        AffineMap { lo, scale }
    }

    #[inline]
    pub fn to_reference(&self, x: Point) -> Point {
        [-1.0 + (x[0] - self.lo[0]) * self.scale[0], -1.0 + (x[1] - self.lo[1]) * self.scale[1]]
    }
}

/// Basis values and physical derivatives at a set of points.
#[derive(Clone, Debug)]
pub struct Vandermonde {
    pub values: Matrix,
    pub dx: Matrix,
    pub dy: Matrix,
    pub map: AffineMap,
}

/// Values and physical-coordinate derivatives of the degree-`p` basis.
pub fn vandermonde(points: &[Point], p: usize, map: &AffineMap) -> Vandermonde {
    let n = basis_dim(p, 2);
    let mut values = Matrix::zeros(points.len(), n);
    let mut dx = Matrix::zeros(points.len(), n);
    let mut dy = Matrix::zeros(points.len(), n);
    let mut v = vec![0.0; n];
    let mut vr = vec![0.0; n];
    let mut vs = vec![0.0; n];
    for (i, &x) in points.iter().enumerate() {
        let [r, s] = map.to_reference(x);
        eval_reference(p, r, s, &mut v, &mut vr, &mut vs);
        values.row_mut(i).copy_from_slice(&v);
        for k in 0..n {
            dx[(i, k)] = vr[k] * map.scale[0];
            dy[(i, k)] = vs[k] * map.scale[1];
        }
    }
    Vandermonde { values, dx, dy, map: *map }
}

/// Basis values only.
pub fn vandermonde_values(points: &[Point], p: usize, map: &AffineMap) -> Matrix {
    let n = basis_dim(p, 2);
    let mut values = Matrix::zeros(points.len(), n);
    let mut v = vec![0.0; n];
    let mut vr = vec![0.0; n];
    let mut vs = vec![0.0; n];
    for (i, &x) in points.iter().enumerate() {
        let [r, s] = map.to_reference(x);
        eval_reference(p, r, s, &mut v, &mut vr, &mut vs);
        values.row_mut(i).copy_from_slice(&v);
    }
    values
}

/// 2-norm condition number by SVD; `+inf` when numerically rank deficient.
pub fn cond_estimate(v: &Matrix) -> f64 {
    if v.rows() < v.cols() {
        return f64::INFINITY;
    }
    Svd::new(v).condition_number()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cutquad::gauss_legendre;
    use crate::geometry::Rng;

    #[test]
    fn dims() {
        assert_eq!(basis_dim(1, 2), 3);
        assert_eq!(basis_dim(3, 2), 10);
        assert_eq!(basis_dim(3, 2) + 1, 11);
        assert_eq!(basis_dim(2, 3), 10);
        assert_eq!(index_pairs(4).len(), 15);
    }

    #[test]
    fn orthonormal_on_reference_triangle() {
        let p = 5;
        let n = basis_dim(p, 2);
        let (x, w) = gauss_legendre(12);
        let mut gram = Matrix::zeros(n, n);
        let (mut v, mut vr, mut vs) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
        for (a, wa) in x.iter().zip(&w) {
            for (b, wb) in x.iter().zip(&w) {
                // collapsed coordinates: r = (1+a)(1-b)/2 - 1, s = b
                let r = 0.5 * (1.0 + a) * (1.0 - b) - 1.0;
                let s = *b;
                let jac = 0.5 * (1.0 - b);
                eval_reference(p, r, s, &mut v, &mut vr, &mut vs);
                for i in 0..n {
                    for j in 0..n {
                        gram[(i, j)] += wa * wb * jac * v[i] * v[j];
                    }
                }
            }
        }
        assert!(gram.sub(&Matrix::identity(n)).max_abs() < 1e-10);
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let mut rng = Rng::new(11);
        let pts: Vec<Point> = (0..12).map(|_| [rng.uniform(0.3, 0.5), rng.uniform(-0.2, 0.1)]).collect();
        let h0 = 0.1;
        let map = AffineMap::fit(&pts, h0);
        let p = 2;
        let van = vandermonde(&pts, p, &map);
        let h = 1e-6 * h0;
        for (i, &x) in pts.iter().enumerate() {
            for d in 0..2 {
                let mut a = x;
                let mut b = x;
                a[d] += h;
                b[d] -= h;
                let va = vandermonde_values(&[a], p, &map);
                let vb = vandermonde_values(&[b], p, &map);
                let an = if d == 0 { &van.dx } else { &van.dy };
                for k in 0..basis_dim(p, 2) {
                    let fd = (va[(0, k)] - vb[(0, k)]) / (2.0 * h);
                    assert!((fd - an[(i, k)]).abs() <= 1e-6 * an[(i, k)].abs().max(1.0));
                }
            }
        }
    }

    #[test]
    fn constant_column_and_single_node() {
        let pts = [[0.1, 0.2], [0.7, -0.3], [1.5, 2.0]];
        let map = AffineMap::fit(&pts, 1.0);
        let v = vandermonde_values(&pts, 3, &map);
        assert!((v[(0, 0)] - v[(1, 0)]).abs() < 1e-15 && (v[(0, 0)] - v[(2, 0)]).abs() < 1e-15);
        let single = [[0.3, 0.3]];
        let m1 = AffineMap::fit(&single, 0.5);
        let v1 = vandermonde_values(&single, 0, &m1);
        assert_eq!((v1.rows(), v1.cols()), (1, 1));
        assert!(v1[(0, 0)] != 0.0);
    }

    #[test]
    fn reproduces_polynomials_exactly() {
        // x^2 y lies in the degree-3 span: least squares fit then reevaluate
        let mut rng = Rng::new(2);
        let pts: Vec<Point> = (0..20).map(|_| [rng.uniform(-1.0, 2.0), rng.uniform(0.0, 1.0)]).collect();
        let map = AffineMap::fit(&pts, 1.0);
        let van = vandermonde(&pts, 3, &map);
        let f: Vec<f64> = pts.iter().map(|p| p[0] * p[0] * p[1]).collect();
        let coef = Svd::new(&van.values).pseudo_inverse(1e-14).matvec(&f);
        let fx = van.dx.matvec(&coef);
        for (i, p) in pts.iter().enumerate() {
            assert!((fx[i] - 2.0 * p[0] * p[1]).abs() < 1e-10);
        }
    }

    #[test]
    fn duplicated_nodes_are_singular() {
        let pts = [[0.0, 0.0], [0.0, 0.0], [1.0, 1.0]];
        let map = AffineMap::fit(&pts, 1.0);
        let v = vandermonde_values(&pts, 1, &map);
        assert!(cond_estimate(&v).is_infinite());
    }
}
