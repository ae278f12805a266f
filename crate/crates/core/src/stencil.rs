//! Nearest-node cell stencils grown until the degree `2p-1` Vandermonde
//! matrix is well conditioned.

use alloc::vec;
use alloc::vec::Vec;

use crate::basis::{basis_dim, cond_estimate, vandermonde_values, AffineMap};
use crate::cutquad::Rect;
use crate::mesh::Mesh;
use crate::{Error, Point, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Stencil {
    pub cell: usize,
    /// Sorted by (distance to the uncut cell center, node index).
    pub nodes: Vec<usize>,
    pub cond: f64,
    /// Whether `cond` fell below the threshold before the growth cap.
    pub converged: bool,
}

impl Stencil {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn points(&self, nodes: &[Point]) -> Vec<Point> {
        self.nodes.iter().map(|&i| nodes[i]).collect()
    }
}

/// Uniform bucket grid for exact k-nearest queries.
#[derive(Clone, Debug)]
pub struct NodeIndex<'a> {
    points: &'a [Point],
    lo: Point,
    inv: [f64; 2],
    dims: [usize; 2],
    start: Vec<usize>,
    items: Vec<usize>,
}

impl<'a> NodeIndex<'a> {
    pub fn new(points: &'a [Point]) -> Self {
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for p in points {
            for d in 0..2 {
                lo[d] = lo[d].min(p[d]);
                hi[d] = hi[d].max(p[d]);
            }
        }
        let side = libm::ceil(libm::sqrt(points.len().max(1) as f64 / 2.0)).max(1.0) as usize;
        let mut inv = [0.0; 2];
        for d in 0..2 {
            let w = (hi[d] - lo[d]).max(1e-300);
            inv[d] = side as f64 / w;
        }
        let dims = [side, side];
        let bucket = |p: &Point| {
            let bx = (((p[0] - lo[0]) * inv[0]) as usize).min(side - 1);
            let by = (((p[1] - lo[1]) * inv[1]) as usize).min(side - 1);
            by * side + bx
        };
        let mut count = vec![0usize; side * side + 1];
        for p in points {
            count[bucket(p) + 1] += 1;
        }
        for b in 0..side * side {
            count[b + 1] += count[b];
        }
        let start = count.clone();
        let mut fill = count;
        let mut items = vec![0; points.len()];
        for (i, p) in points.iter().enumerate() {
            let b = bucket(p);
            items[fill[b]] = i;
            fill[b] += 1;
        }
        NodeIndex { points, lo, inv, dims, start, items }
    }

    /// The `k` nodes closest to `q`, ordered by (squared distance, index).
    pub fn nearest(&self, q: Point, k: usize) -> Vec<usize> {
        let k = k.min(self.points.len());
        let [nx, ny] = self.dims;
        let cx = (((q[0] - self.lo[0]) * self.inv[0]).floor() as i64).clamp(0, nx as i64 - 1);
        let cy = (((q[1] - self.lo[1]) * self.inv[1]).floor() as i64).clamp(0, ny as i64 - 1);
        let d2 = |i: usize| {
            let p = self.points[i];
            (p[0] - q[0]) * (p[0] - q[0]) + (p[1] - q[1]) * (p[1] - q[1])
        };
        let mut cand: Vec<(f64, usize)> = Vec::new();
        let mut r: i64 = 0;
        loop {
            for by in (cy - r)..=(cy + r) {
                for bx in (cx - r)..=(cx + r) {
                    let ring = (by - cy).abs() == r || (bx - cx).abs() == r;
                    if !ring || bx < 0 || by < 0 || bx >= nx as i64 || by >= ny as i64 {
                        continue;
                    }
                    let b = by as usize * nx + bx as usize;
                    for &i in &self.items[self.start[b]..self.start[b + 1]] {
                        cand.push((d2(i), i));
                    }
                }
            }
            let covers_all = cx - r <= 0 && cy - r <= 0 && cx + r >= nx as i64 - 1 && cy + r >= ny as i64 - 1;
            // every point within `safe` of q lies in the searched block
            let bw = [1.0 / self.inv[0], 1.0 / self.inv[1]];
            let mut safe = f64::INFINITY;
            for d in 0..2 {
                let c = if d == 0 { cx } else { cy };
                let n = self.dims[d] as i64;
                let q0 = q[d];
                if c - r > 0 {
                    safe = safe.min(q0 - (self.lo[d] + (c - r) as f64 * bw[d]));
                }
                if c + r < n - 1 {
                    safe = safe.min(self.lo[d] + (c + r + 1) as f64 * bw[d] - q0);
                }
            }
            let inside = cand.iter().filter(|c| c.0 <= safe * safe).count();
            if covers_all || inside >= k {
                break;
            }
            r += 1;
        }
        cand.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        cand.truncate(k);
        cand.into_iter().map(|c| c.1).collect()
    }
}

/// Affine map used for all of a cell's Vandermonde matrices: the bounding
/// box of the cell and its stencil nodes.
pub fn cell_map(rect: &Rect, points: &[Point]) -> AffineMap {
    let mut all = points.to_vec();
    all.push(rect.lo);
    all.push(rect.hi);
    AffineMap::fit(&all, rect.diagonal())
}

/// Default growth cap `4p - 1` and condition threshold `5 * 10^(2p-1)`.
pub fn default_limits(p: usize) -> (usize, f64) {
    (4 * p - 1, 5.0 * libm::pow(10.0, (2 * p - 1) as f64))
}

/// One stencil per live cell of `mesh`, in ascending cell order.
pub fn build_stencils(
    mesh: &Mesh,
    nodes: &[Point],
    p: usize,
    n_max: Option<usize>,
    tol: Option<f64>,
) -> Result<Vec<Stencil>> {
    if p == 0 {
        return Err(Error::InvalidParameter("degree must be at least 1".into()));
    }
    let (dn, dt) = default_limits(p);
    let n_max = n_max.unwrap_or(dn).max(1);
    let tol = tol.unwrap_or(dt);
    let base = basis_dim(2 * p - 1, 2);
    if nodes.len() < base + 1 {
        return Err(Error::TooSparse { available: nodes.len(), required: base + 1 });
    }
    let index = NodeIndex::new(nodes);
    let mut out = Vec::new();
    let mut warned = 0usize;
    for c in mesh.live_cells() {
        let rect = mesh.cells[c].rect;
        let near = index.nearest(rect.center(), base + n_max);
        let mut best = None;
        for n in 1..=n_max {
            let size = (base + n).min(near.len());
            let ids = &near[..size];
            let pts: Vec<Point> = ids.iter().map(|&i| nodes[i]).collect();
            let map = cell_map(&rect, &pts);
            let cond = cond_estimate(&vandermonde_values(&pts, 2 * p - 1, &map));
            let ok = cond < tol;
            best = Some(Stencil { cell: c, nodes: ids.to_vec(), cond, converged: ok });
            if ok || size == near.len() {
                break;
            }
        }
        let s = best.expect("n_max >= 1");
        if !s.converged {
            warned += 1;
        }
        out.push(s);
    }
    if warned > 0 {
        log::warn!("{warned} stencils reached the growth cap above the condition threshold");
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{make_geometry, sample_nodes, GeometryKind, Resolution, Rng, SamplerConfig};
    use crate::mesh::build_mesh;

    fn brute(points: &[Point], q: Point, k: usize) -> Vec<usize> {
        let mut v: Vec<(f64, usize)> = points
            .iter()
            .enumerate()
            .map(|(i, p)| ((p[0] - q[0]) * (p[0] - q[0]) + (p[1] - q[1]) * (p[1] - q[1]), i))
            .collect();
        v.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        v.into_iter().take(k).map(|x| x.1).collect()
    }

    #[test]
    fn knn_matches_brute_force() {
        let mut rng = Rng::new(5);
        let pts: Vec<Point> = (0..500).map(|_| [rng.unit(), rng.uniform(-0.3, 0.2)]).collect();
        let idx = NodeIndex::new(&pts);
        for _ in 0..50 {
            let q = [rng.uniform(-0.2, 1.2), rng.uniform(-0.5, 0.5)];
            for k in [1, 4, 11, 37] {
                assert_eq!(idx.nearest(q, k), brute(&pts, q, k));
            }
        }
    }

    #[test]
    fn lattice_ties_by_index() {
        let pts: Vec<Point> = (0..16).map(|i| [(i % 4) as f64, (i / 4) as f64]).collect();
        let idx = NodeIndex::new(&pts);
        assert_eq!(idx.nearest([1.5, 1.5], 4), vec![5, 6, 9, 10]);
        // equidistant from 4 nodes at distance 1: 1, 4, 6, 9
        assert_eq!(idx.nearest([1.0, 1.0], 5), vec![5, 1, 4, 6, 9]);
    }

    #[test]
    fn default_sizes() {
        assert_eq!(basis_dim(1, 2) + 1, 4);
        assert_eq!(basis_dim(3, 2) + 1, 11);
        assert_eq!(default_limits(2), (7, 5000.0));
    }

    #[test]
    fn stencils_on_box_circle() {
        let geo = make_geometry(GeometryKind::BoxCircle).unwrap();
        let ns = sample_nodes(&SamplerConfig::new(Resolution::Square(12), 1), &geo).unwrap();
        let mesh = build_mesh(&geo, &ns.coords, None).unwrap();
        for p in 1..=3 {
            let st = build_stencils(&mesh, &ns.coords, p, None, None).unwrap();
            assert_eq!(st.len(), mesh.live_cells().count());
            let base = basis_dim(2 * p - 1, 2);
            for s in &st {
                assert!(s.len() > base);
                let mut u = s.nodes.clone();
                u.sort_unstable();
                u.dedup();
                assert_eq!(u.len(), s.len());
                let c = mesh.cells[s.cell].rect.center();
                let want = brute(&ns.coords, c, s.len());
                assert_eq!(s.nodes, want);
            }
        }
    }

    #[test]
    fn too_sparse() {
        let geo = make_geometry(GeometryKind::Box).unwrap();
        let pts = [[0.2, 0.2], [0.8, 0.8]];
        let mesh = build_mesh(&geo, &pts, None).unwrap();
        assert!(matches!(build_stencils(&mesh, &pts, 1, None, None), Err(Error::TooSparse { .. })));
    }
}
