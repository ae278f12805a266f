//! Sparse storage and the direct solvers used by the norm LP and the steady
//! advection solve.

use alloc::collections::VecDeque;
use alloc::vec;
use alloc::vec::Vec;

use crate::linalg::Matrix;
use crate::{Error, Result};

/// Compressed sparse rows.
#[derive(Clone, Debug, PartialEq)]
pub struct Csr {
    pub nrows: usize,
    pub ncols: usize,
    pub indptr: Vec<usize>,
    pub indices: Vec<usize>,
    pub values: Vec<f64>,
}

impl Csr {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Csr { nrows, ncols, indptr: vec![0; nrows + 1], indices: Vec::new(), values: Vec::new() }
    }

    /// Duplicates are summed in input order, so the result depends only on
    /// the triplet sequence.
    pub fn from_triplets(nrows: usize, ncols: usize, trips: &[(usize, usize, f64)]) -> Self {
        let mut order: Vec<usize> = (0..trips.len()).collect();
        order.sort_by_key(|&k| (trips[k].0, trips[k].1));
        let mut indptr = vec![0; nrows + 1];
        let mut indices = Vec::with_capacity(trips.len());
        let mut values: Vec<f64> = Vec::with_capacity(trips.len());
        let mut last: Option<(usize, usize)> = None;
        for k in order {
            let (i, j, v) = trips[k];
            assert!(i < nrows && j < ncols, "triplet ({i}, {j}) out of range");
            if last == Some((i, j)) {
                *values.last_mut().unwrap() += v;
            } else {
                indices.push(j);
                values.push(v);
                indptr[i + 1] += 1;
                last = Some((i, j));
            }
        }
        for i in 0..nrows {
            indptr[i + 1] += indptr[i];
        }
        Csr { nrows, ncols, indptr, indices, values }
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.indptr[i]..self.indptr[i + 1];
        self.indices[r.clone()].iter().copied().zip(self.values[r].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let r = self.indptr[i]..self.indptr[i + 1];
        match self.indices[r.clone()].binary_search(&j) {
            Ok(k) => self.values[r.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.nrows];
        self.matvec_add(1.0, x, &mut y);
        y
    }

    /// `y += alpha * A x`
    pub fn matvec_add(&self, alpha: f64, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate() {
            let mut s = 0.0;
            for (j, v) in self.row(i) {
                s += v * x[j];
            }
            *yi += alpha * s;
        }
    }

    /// `y += alpha * A^T x`
    pub fn tr_matvec_add(&self, alpha: f64, x: &[f64], y: &mut [f64]) {
        for (i, &xi) in x.iter().enumerate() {
            if xi == 0.0 {
                continue;
            }
            for (j, v) in self.row(i) {
                y[j] += alpha * v * xi;
            }
        }
    }

    pub fn tr_matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.ncols];
        self.tr_matvec_add(1.0, x, &mut y);
        y
    }

    pub fn transpose(&self) -> Csr {
        let mut trips = Vec::with_capacity(self.nnz());
        for i in 0..self.nrows {
            for (j, v) in self.row(i) {
                trips.push((j, i, v));
            }
        }
        Csr::from_triplets(self.ncols, self.nrows, &trips)
    }

    pub fn to_dense(&self) -> Matrix {
        let mut m = Matrix::zeros(self.nrows, self.ncols);
        for i in 0..self.nrows {
            for (j, v) in self.row(i) {
                m[(i, j)] += v;
            }
        }
        m
    }

    pub fn to_triplets(&self) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::with_capacity(self.nnz());
        for i in 0..self.nrows {
            for (j, v) in self.row(i) {
                out.push((i, j, v));
            }
        }
        out
    }
}

/// Skew-symmetric matrix stored as its strict upper triangle.
#[derive(Clone, Debug, PartialEq)]
pub struct Skew {
    pub upper: Csr,
}

/// Accumulates `S_ij += v, S_ji -= v` contributions.
/// Duplicates are merged whenever the buffer doubles, summing in input
/// order, so the result matches a single pass over all contributions.
#[derive(Clone, Debug, Default)]
pub struct SkewBuilder {
    n: usize,
    trips: Vec<(usize, usize, f64)>,
    limit: usize,
}

impl SkewBuilder {
    pub fn new(n: usize) -> Self {
        SkewBuilder { n, trips: Vec::new(), limit: 1 << 20 }
    }

    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        if i < j {
            self.trips.push((i, j, v));
        } else if i > j {
            self.trips.push((j, i, -v));
        }
        if self.trips.len() >= self.limit {
            self.compact();
        }
    }

    fn compact(&mut self) {
        self.trips.sort_by_key(|t| (t.0, t.1));
        let mut merged: Vec<(usize, usize, f64)> = Vec::with_capacity(self.trips.len() / 2);
        for &(i, j, v) in &self.trips {
            match merged.last_mut() {
                Some(last) if (last.0, last.1) == (i, j) => last.2 += v,
                _ => merged.push((i, j, v)),
            }
        }
        self.limit = self.limit.max(2 * merged.len());
        self.trips = merged;
    }

    pub fn finish(self) -> Skew {
        Skew { upper: Csr::from_triplets(self.n, self.n, &self.trips) }
    }
}

impl Skew {
    pub fn dim(&self) -> usize {
        self.upper.nrows
    }

    pub fn nnz(&self) -> usize {
        2 * self.upper.nnz()
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = self.upper.matvec(x);
        self.upper.tr_matvec_add(-1.0, x, &mut y);
        y
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        if i < j {
            self.upper.get(i, j)
        } else if i > j {
            -self.upper.get(j, i)
        } else {
            0.0
        }
    }

    pub fn to_dense(&self) -> Matrix {
        let u = self.upper.to_dense();
        u.sub(&u.transpose())
    }

    /// Full (both triangles) CSR form.
    pub fn to_csr(&self) -> Csr {
        let mut trips = Vec::with_capacity(self.nnz());
        for (i, j, v) in self.upper.to_triplets() {
            trips.push((i, j, v));
            trips.push((j, i, -v));
        }
        Csr::from_triplets(self.dim(), self.dim(), &trips)
    }
}

/// Reverse Cuthill-McKee ordering of the symmetrized pattern. Returns
/// `perm` with `perm[new] = old`.
pub fn rcm(n: usize, adjacency: &[Vec<usize>]) -> Vec<usize> {
    let deg: Vec<usize> = adjacency.iter().map(|a| a.len()).collect();
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut by_degree: Vec<usize> = (0..n).collect();
    by_degree.sort_by_key(|&i| (deg[i], i));
    for &start in &by_degree {
        if visited[start] {
            continue;
        }
        // pseudo-peripheral start: farthest node of a BFS from `start`
        let root = farthest(start, adjacency, &deg);
        let mut queue = VecDeque::new();
        visited[root] = true;
        queue.push_back(root);
        while let Some(v) = queue.pop_front() {
            order.push(v);
            let mut nb: Vec<usize> = adjacency[v].iter().copied().filter(|&w| !visited[w]).collect();
            nb.sort_by_key(|&w| (deg[w], w));
            nb.dedup();
            for w in nb {
                if !visited[w] {
                    visited[w] = true;
                    queue.push_back(w);
                }
            }
        }
    }
    order.reverse();
    order
}

fn farthest(start: usize, adjacency: &[Vec<usize>], deg: &[usize]) -> usize {
    let mut dist: alloc::collections::BTreeMap<usize, usize> = alloc::collections::BTreeMap::new();
    let mut queue = VecDeque::new();
    dist.insert(start, 0);
    queue.push_back(start);
    let mut best = (0usize, usize::MAX, start);
    while let Some(v) = queue.pop_front() {
        let d = dist[&v];
        // prefer larger distance, then smaller degree
        if d > best.0 || (d == best.0 && deg[v] < best.1) {
            best = (d, deg[v], v);
        }
        for &w in &adjacency[v] {
            if let alloc::collections::btree_map::Entry::Vacant(e) = dist.entry(w) {
                e.insert(d + 1);
                queue.push_back(w);
            }
        }
    }
    best.2
}

/// Symmetrized adjacency lists of a square sparse pattern, without the
/// diagonal.
pub fn pattern_adjacency(a: &Csr) -> Vec<Vec<usize>> {
    let mut adj = vec![Vec::new(); a.nrows];
    for i in 0..a.nrows {
        for (j, _) in a.row(i) {
            if i != j {
                adj[i].push(j);
                adj[j].push(i);
            }
        }
    }
    for l in adj.iter_mut() {
        l.sort_unstable();
        l.dedup();
    }
    adj
}

/// LU factorization with partial pivoting of a banded matrix after
/// reordering by RCM.
#[derive(Clone, Debug)]
pub struct BandLu {
    n: usize,
    kl: usize,
    ku: usize,
    /// Row-major band: row i holds columns i-kl ..= i+ku+kl (fill from pivoting).
    band: Vec<f64>,
    width: usize,
    pivots: Vec<usize>,
    perm: Vec<usize>,
    a: Csr,
}

impl BandLu {
    pub fn new(a: &Csr) -> Result<Self> {
        if a.nrows != a.ncols {
            return Err(Error::Dimension { expected: a.nrows, got: a.ncols });
        }
        let n = a.nrows;
        let perm = rcm(n, &pattern_adjacency(a));
        let mut inv = vec![0; n];
        for (new, &old) in perm.iter().enumerate() {
            inv[old] = new;
        }
        let (mut kl, mut ku) = (0usize, 0usize);
        for i in 0..n {
            for (j, _) in a.row(i) {
                let (r, c) = (inv[i], inv[j]);
                if r > c {
                    kl = kl.max(r - c);
                } else {
                    ku = ku.max(c - r);
                }
            }
        }
        let width = kl + ku + kl + 1;
        let mut band = vec![0.0; n * width];
        // entry (r, c) stored at r*width + (c + kl - r)
        for i in 0..n {
            for (j, v) in a.row(i) {
                let (r, c) = (inv[i], inv[j]);
                band[r * width + c + kl - r] += v;
            }
        }
        let mut pivots = vec![0; n];
        let scale = a.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let upper = ku + kl;
        for k in 0..n {
            let last = (k + kl).min(n - 1);
            let mut piv = k;
            let mut best = band[k * width + kl].abs();
            for r in k + 1..=last {
                let v = band[r * width + k + kl - r].abs();
                if v > best {
                    best = v;
                    piv = r;
                }
            }
            if best <= 1e-300 || best <= scale * 1e-15 {
                return Err(Error::Singular(perm[k]));
            }
            pivots[k] = piv;
            let cmax = (k + upper).min(n - 1);
            if piv != k {
                for c in k..=cmax {
                    let (ik, ip) = (k * width + c + kl - k, piv * width + c + kl - piv);
                    // row piv may not store columns beyond piv + upper, but c <= k + upper <= piv + upper
                    band.swap(ik, ip);
                }
            }
            let d = band[k * width + kl];
            for r in k + 1..=last {
                let rk = r * width + k + kl - r;
                let l = band[rk] / d;
                band[rk] = l;
                if l != 0.0 {
                    for c in k + 1..=cmax {
                        band[r * width + c + kl - r] -= l * band[k * width + c + kl - k];
                    }
                }
            }
        }
        Ok(BandLu { n, kl, ku, band, width, pivots, perm, a: a.clone() })
    }

    pub fn bandwidth(&self) -> (usize, usize) {
        (self.kl, self.ku)
    }

    fn solve_once(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let (kl, w) = (self.kl, self.width);
        let upper = self.ku + kl;
        let mut x: Vec<f64> = self.perm.iter().map(|&o| b[o]).collect();
        for k in 0..n {
            let p = self.pivots[k];
            if p != k {
                x.swap(k, p);
            }
            let last = (k + kl).min(n - 1);
            let xk = x[k];
            for r in k + 1..=last {
                x[r] -= self.band[r * w + k + kl - r] * xk;
            }
        }
        for k in (0..n).rev() {
            let cmax = (k + upper).min(n - 1);
            let mut s = x[k];
            for c in k + 1..=cmax {
                s -= self.band[k * w + c + kl - k] * x[c];
            }
            x[k] = s / self.band[k * w + kl];
        }
        let mut out = vec![0.0; n];
        for (new, &old) in self.perm.iter().enumerate() {
            out[old] = x[new];
        }
        out
    }

    /// Solve with two steps of iterative refinement.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = self.solve_once(b);
        for _ in 0..2 {
            let mut r = b.to_vec();
            self.a.matvec_add(-1.0, &x, &mut r);
            let dx = self.solve_once(&r);
            for (xi, d) in x.iter_mut().zip(dx) {
                *xi += d;
            }
        }
        x
    }
}

/// Envelope (skyline) Cholesky of a symmetric positive definite matrix,
/// with an RCM ordering computed once per pattern.
#[derive(Clone, Debug)]
pub struct EnvelopeCholesky {
    n: usize,
    perm: Vec<usize>,
    inv: Vec<usize>,
    /// first column stored in each row of L
    first: Vec<usize>,
    start: Vec<usize>,
    vals: Vec<f64>,
}

impl EnvelopeCholesky {
    /// Prepare storage for matrices with the pattern of `a` (lower or full).
    pub fn analyze(a: &Csr) -> Self {
        let n = a.nrows;
        let perm = rcm(n, &pattern_adjacency(a));
        let mut inv = vec![0; n];
        for (new, &old) in perm.iter().enumerate() {
            inv[old] = new;
        }
        let mut first: Vec<usize> = (0..n).collect();
        for i in 0..n {
            for (j, _) in a.row(i) {
                let (r, c) = (inv[i], inv[j]);
                let (r, c) = if r >= c { (r, c) } else { (c, r) };
                first[r] = first[r].min(c);
            }
        }
        let mut start = vec![0; n + 1];
        for r in 0..n {
            start[r + 1] = start[r] + (r - first[r] + 1);
        }
        let size = start[n];
        EnvelopeCholesky { n, perm, inv, first, start, vals: vec![0.0; size] }
    }

    pub fn envelope_size(&self) -> usize {
        self.start[self.n]
    }

    /// Factor a matrix sharing the analyzed pattern. Nonpositive pivots are
    /// replaced by `pivot_floor` (a tiny regularization used by interior
    /// point methods) and counted.
    pub fn factor(&mut self, a: &Csr, pivot_floor: f64) -> Result<usize> {
        let n = self.n;
        self.vals.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..n {
            for (j, v) in a.row(i) {
                let (r, c) = (self.inv[i], self.inv[j]);
                if r >= c {
                    if c < self.first[r] {
                        return Err(Error::Dimension { expected: self.first[r], got: c });
                    }
                    self.vals[self.start[r] + c - self.first[r]] += v;
                }
            }
        }
        let mut floored = 0;
        for r in 0..n {
            let fr = self.first[r];
            let sr = self.start[r];
            for c in fr..r {
                let fc = self.first[c];
                let sc = self.start[c];
                let k0 = fr.max(fc);
                let mut s = self.vals[sr + c - fr];
                for k in k0..c {
                    s -= self.vals[sr + k - fr] * self.vals[sc + k - fc];
                }
                self.vals[sr + c - fr] = s / self.vals[sc + c - fc];
            }
            let mut d = self.vals[sr + r - fr];
            for k in fr..r {
                let l = self.vals[sr + k - fr];
                d -= l * l;
            }
            if !(d > pivot_floor) {
                if !d.is_finite() {
                    return Err(Error::NonFinite(self.perm[r]));
                }
                d = pivot_floor.max(f64::MIN_POSITIVE);
                floored += 1;
            }
            self.vals[sr + r - fr] = libm::sqrt(d);
        }
        Ok(floored)
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut x: Vec<f64> = self.perm.iter().map(|&o| b[o]).collect();
        for r in 0..n {
            let fr = self.first[r];
            let sr = self.start[r];
            let mut s = x[r];
            for k in fr..r {
                s -= self.vals[sr + k - fr] * x[k];
            }
            x[r] = s / self.vals[sr + r - fr];
        }
        for r in (0..n).rev() {
            let fr = self.first[r];
            let sr = self.start[r];
            x[r] /= self.vals[sr + r - fr];
            let xr = x[r];
            for k in fr..r {
                x[k] -= self.vals[sr + k - fr] * xr;
            }
        }
        let mut out = vec![0.0; n];
        for (new, &old) in self.perm.iter().enumerate() {
            out[old] = x[new];
        }
        out
    }
}
