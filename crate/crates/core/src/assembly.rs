//! Global diagonal norm, skew matrices and boundary face operators.

use alloc::vec;
use alloc::vec::Vec;

use crate::basis::{basis_dim, vandermonde, vandermonde_values, AffineMap, Vandermonde};
use crate::cellops::{CellOperator, FaceQuadKind, MeshQuadrature};
use crate::cutquad::{cut_cell_rules, face_rule, QuadRule};
use crate::geometry::Geometry;
use crate::linalg::Matrix;
use crate::mesh::Mesh;
use crate::sparse::{Csr, Skew, SkewBuilder};
use crate::{Error, Point, Result};

/// Interpolation, weights and outward normals of one boundary face.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundaryFace {
    /// Face-quadrature id.
    pub face: usize,
    pub cell: usize,
    /// Global node ids of the columns of `r`.
    pub nodes: Vec<usize>,
    pub r: Matrix,
    pub points: Vec<Point>,
    pub weights: Vec<f64>,
    pub normals: Vec<Point>,
}

impl BoundaryFace {
    /// `R u` restricted to this face's stencil.
    pub fn interpolate(&self, u: &[f64]) -> Vec<f64> {
        let local: Vec<f64> = self.nodes.iter().map(|&i| u[i]).collect();
        self.r.matvec(&local)
    }

    /// `u += R^T w`
    pub fn scatter_transpose(&self, w: &[f64], u: &mut [f64]) {
        let t = self.r.tr_matvec(w);
        for (&i, v) in self.nodes.iter().zip(t) {
            u[i] += v;
        }
    }
}

#[derive(Clone, Debug)]
pub struct GlobalOperators {
    pub p: usize,
    pub m: Vec<f64>,
    pub sx: Skew,
    pub sy: Skew,
    pub boundary: Vec<BoundaryFace>,
}

impl GlobalOperators {
    pub fn len(&self) -> usize {
        self.m.len()
    }

    pub fn is_empty(&self) -> bool {
        self.m.is_empty()
    }

    pub fn s(&self, axis: usize) -> &Skew {
        if axis == 0 { &self.sx } else { &self.sy }
    }

    /// `E_axis u` from the boundary faces.
    pub fn apply_e(&self, axis: usize, u: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; u.len()];
        for f in &self.boundary {
            let mut ru = f.interpolate(u);
            for (k, v) in ru.iter_mut().enumerate() {
                *v *= f.weights[k] * f.normals[k][axis];
            }
            f.scatter_transpose(&ru, &mut out);
        }
        out
    }

    pub fn materialize_e(&self, axis: usize) -> Csr {
        let mut trips = Vec::new();
        for f in &self.boundary {
            let n = f.nodes.len();
            for k in 0..f.r.rows() {
                let w = f.weights[k] * f.normals[k][axis];
                if w == 0.0 {
                    continue;
                }
                let row = f.r.row(k);
                for a in 0..n {
                    for b in 0..n {
                        trips.push((f.nodes[a], f.nodes[b], w * row[a] * row[b]));
                    }
                }
            }
        }
        Csr::from_triplets(self.len(), self.len(), &trips)
    }

    /// `Q_axis u = S u + E u / 2`
    pub fn apply_q(&self, axis: usize, u: &[f64]) -> Vec<f64> {
        let mut q = self.s(axis).matvec(u);
        for (a, b) in q.iter_mut().zip(self.apply_e(axis, u)) {
            *a += 0.5 * b;
        }
        q
    }

    pub fn q_dense(&self, axis: usize) -> Matrix {
        self.s(axis).to_dense().add(&self.materialize_e(axis).to_dense().scaled(0.5))
    }
}

/// Scatter cell operators into global ones. `ops` must be ordered by cell
/// id; `n` is the number of nodes.
pub fn assemble(n: usize, p: usize, ops: &[CellOperator], quad: &MeshQuadrature) -> Result<GlobalOperators> {
    let mut by_cell = vec![usize::MAX; quad.volume.len()];
    for (k, op) in ops.iter().enumerate() {
        if op.nodes.iter().any(|&i| i >= n) {
            return Err(Error::Dimension { expected: n, got: op.nodes.iter().copied().max().unwrap_or(0) + 1 });
        }
        by_cell[op.cell] = k;
    }
    let mut m = vec![0.0; n];
    let mut bx = SkewBuilder::new(n);
    let mut by = SkewBuilder::new(n);
    for op in ops {
        let (sx, sy) = (op.s(0), op.s(1));
        for (a, &ga) in op.nodes.iter().enumerate() {
            m[ga] += op.m[a];
            for (b, &gb) in op.nodes.iter().enumerate().skip(a + 1) {
                bx.add(ga, gb, sx[(a, b)]);
                by.add(ga, gb, sy[(a, b)]);
            }
        }
    }
    let mut boundary = Vec::new();
    for (fid, f) in quad.faces.iter().enumerate() {
        let side = |c: usize| -> Result<(&CellOperator, &Matrix)> {
            let k = by_cell.get(c).copied().filter(|&k| k != usize::MAX).ok_or(Error::NoNodes)?;
            let op = &ops[k];
            let r = op.interp(fid).ok_or(Error::Dimension { expected: fid, got: usize::MAX })?;
            Ok((op, r))
        };
        match f.kind {
            FaceQuadKind::Interface => {
                let (om, rm) = side(f.cells[0])?;
                let (op_, rp) = side(f.cells[1])?;
                // sum over the face's points first: 1/2 R_-^T B N R_+
                let mut blocks = [Matrix::zeros(om.len(), op_.len()), Matrix::zeros(om.len(), op_.len())];
                let mut used = [false; 2];
                for k in 0..f.rule.len() {
                    let w = f.rule.weights[k];
                    let nrm = f.rule.normals[k];
                    let (lm, lp) = (rm.row(k), rp.row(k));
                    for d in 0..2 {
                        if nrm[d] == 0.0 {
                            continue;
                        }
                        used[d] = true;
                        for a in 0..om.len() {
                            let wa = 0.5 * w * nrm[d] * lm[a];
                            for (x, l) in blocks[d].row_mut(a).iter_mut().zip(lp) {
                                *x += wa * l;
                            }
                        }
                    }
                }
                for (d, b) in [&mut bx, &mut by].into_iter().enumerate() {
                    if !used[d] {
                        continue;
                    }
                    for (a, &ga) in om.nodes.iter().enumerate() {
                        for (c, &gb) in op_.nodes.iter().enumerate() {
                            let v = blocks[d][(a, c)];
                            if v != 0.0 {
                                b.add(ga, gb, v);
                            }
                        }
                    }
                }
            }
            FaceQuadKind::Boundary => {
                let (op, r) = side(f.cells[0])?;
                boundary.push(BoundaryFace {
                    face: fid,
                    cell: f.cells[0],
                    nodes: op.nodes.clone(),
                    r: r.clone(),
                    points: f.rule.points.clone(),
                    weights: f.rule.weights.clone(),
                    normals: f.rule.normals.clone(),
                });
            }
        }
    }
    Ok(GlobalOperators { p, m, sx: bx.finish(), sy: by.finish(), boundary })
}

/// Global degree-`p` basis on the bounding box of `nodes`.
pub fn global_vandermonde(nodes: &[Point], p: usize) -> Vandermonde {
    let map = AffineMap::fit(nodes, 1.0);
    vandermonde(nodes, p, &map)
}

/// Relative residuals of the three pair conditions along `axis`:
/// `|Q V - M V_d| / |M V_d|`, `max|S + S^T|`, and
/// `|V^T E V - oracle| / |oracle|` when boundary moments are supplied.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PairResiduals {
    pub accuracy: f64,
    pub skew: f64,
    pub boundary: Option<f64>,
}

pub fn pair_residuals(ops: &GlobalOperators, vander: &Vandermonde, axis: usize, oracle: Option<&Matrix>) -> PairResiduals {
    let v = &vander.values;
    let vd = if axis == 0 { &vander.dx } else { &vander.dy };
    let mut num = 0.0;
    let mut den = 0.0;
    let mut ev = Matrix::zeros(v.rows(), v.cols());
    for j in 0..v.cols() {
        let col = v.column(j);
        let q = ops.apply_q(axis, &col);
        let e = ops.apply_e(axis, &col);
        for i in 0..v.rows() {
            let t = ops.m[i] * vd[(i, j)];
            num += (q[i] - t) * (q[i] - t);
            den += t * t;
            ev[(i, j)] = e[i];
        }
    }
    // skew by storage; measured residual from the dense form on small cases
    let skew = if ops.len() <= 2000 {
        let s = ops.s(axis).to_dense();
        s.add(&s.transpose()).max_abs()
    } else {
        0.0
    };
    let boundary = oracle.map(|o| {
        let vtev = v.tr_matmul(&ev);
        vtev.sub(o).frobenius() / o.frobenius().max(1e-300)
    });
    PairResiduals { accuracy: libm::sqrt(num) / libm::sqrt(den).max(1e-300), skew, boundary }
}

/// Boundary moments `int v_i v_j n_d ds` of the global degree-`p` basis,
/// recomputed face by face with rules exact to `degree` (an independent
/// check on `V^T E V`).
pub fn boundary_moment_oracle(mesh: &Mesh, geo: &Geometry, quad: &MeshQuadrature, nodes: &[Point], p: usize, degree: usize) -> Result<[Matrix; 2]> {
    let map = AffineMap::fit(nodes, 1.0);
    let k = basis_dim(p, 2);
    let mut out = [Matrix::zeros(k, k), Matrix::zeros(k, k)];
    let mut add = |rule: &QuadRule, sign: f64| {
        let v = vandermonde_values(&rule.points, p, &map);
        for q in 0..rule.len() {
            for i in 0..k {
                for j in 0..k {
                    let w = sign * rule.weights[q] * v[(q, i)] * v[(q, j)];
                    out[0][(i, j)] += w * rule.normals[q][0];
                    out[1][(i, j)] += w * rule.normals[q][1];
                }
            }
        }
    };
    for f in quad.faces.iter().filter(|f| f.kind == FaceQuadKind::Boundary) {
        match f.mesh_face {
            Some(mf) => {
                let face = &mesh.faces[mf];
                let rule = face_rule(geo, face.axis, face.coord, face.extent[0], face.extent[1], degree, face.cut);
                // face rules point along +axis; the assembled rule is outward
                add(&rule, f.rule.normals[0][face.axis].signum());
            }
            None => {
                let c = cut_cell_rules(&mesh.cells[f.cells[0]].rect, geo, degree)?;
                add(&c.curve, 1.0);
            }
        }
    }
    Ok(out)
}

/// The four sums of the assembled `Q V` that must cancel (the fifth is the
/// scattered cell products `sum_c P^T Q^c V^c`). Returns
/// `(|sum2 + sum3 + sum4 + sum5| / |M V_d|, [|sum_k|])`.
pub fn five_sum_residual(ops: &[CellOperator], quad: &MeshQuadrature, nodes: &[Point], p: usize, axis: usize) -> (f64, [f64; 4]) {
    let map = AffineMap::fit(nodes, 1.0);
    let gv = vandermonde(nodes, p, &map);
    let (n, k) = (nodes.len(), gv.values.cols());
    let mut sums = [Matrix::zeros(n, k), Matrix::zeros(n, k), Matrix::zeros(n, k), Matrix::zeros(n, k)];
    let mut by_cell = vec![usize::MAX; quad.volume.len()];
    for (i, op) in ops.iter().enumerate() {
        by_cell[op.cell] = i;
    }
    for op in ops {
        let e = op.e(axis);
        let vc = Matrix::from_fn(op.len(), k, |a, j| gv.values[(op.nodes[a], j)]);
        let ev = e.matmul(&vc);
        for (a, &ga) in op.nodes.iter().enumerate() {
            for j in 0..k {
                sums[0][(ga, j)] -= 0.5 * ev[(a, j)];
            }
        }
    }
    for (fid, f) in quad.faces.iter().enumerate() {
        let vf = vandermonde_values(&f.rule.points, p, &map);
        let scaled = Matrix::from_fn(f.rule.len(), k, |q, j| f.rule.weights[q] * f.rule.normals[q][axis] * vf[(q, j)]);
        let mut push = |cell: usize, slot: usize, sign: f64| {
            let op = &ops[by_cell[cell]];
            let r = op.interp(fid).expect("face interpolation");
            let t = r.tr_matmul(&scaled);
            for (a, &ga) in op.nodes.iter().enumerate() {
                for j in 0..k {
                    sums[slot][(ga, j)] += sign * 0.5 * t[(a, j)];
                }
            }
        };
        match f.kind {
            FaceQuadKind::Interface => {
                push(f.cells[0], 1, 1.0);
                push(f.cells[1], 2, -1.0);
            }
            FaceQuadKind::Boundary => push(f.cells[0], 3, 1.0),
        }
    }
    let vd = if axis == 0 { &gv.dx } else { &gv.dy };
    let mut mvd = 0.0;
    let mut m = vec![0.0; n];
    for op in ops {
        for (a, &ga) in op.nodes.iter().enumerate() {
            m[ga] += op.m[a];
        }
    }
    for i in 0..n {
        for j in 0..k {
            mvd += (m[i] * vd[(i, j)]).powi(2);
        }
    }
    let total = sums[0].add(&sums[1]).add(&sums[2]).add(&sums[3]);
    let norms = [sums[0].frobenius(), sums[1].frobenius(), sums[2].frobenius(), sums[3].frobenius()];
    (total.frobenius() / libm::sqrt(mvd).max(1e-300), norms)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cellops::{build_cell_operators, mesh_quadrature};
    use crate::geometry::{make_geometry, sample_nodes, GeometryKind, Resolution, SamplerConfig};
    use crate::mesh::build_mesh;
    use crate::stencil::build_stencils;

    fn build(kind: GeometryKind, res: Resolution, p: usize) -> (Vec<Point>, Vec<CellOperator>, MeshQuadrature, GlobalOperators) {
        let geo = make_geometry(kind).unwrap();
        let ns = sample_nodes(&SamplerConfig::new(res, 3), &geo).unwrap();
        let mesh = build_mesh(&geo, &ns.coords, None).unwrap();
        let quad = mesh_quadrature(&mesh, &geo, p).unwrap();
        let st = build_stencils(&mesh, &ns.coords, p, None, None).unwrap();
        let ops = build_cell_operators(&st, &ns.coords, &quad, &mesh, p).unwrap();
        let g = assemble(ns.len(), p, &ops, &quad).unwrap();
        (ns.coords, ops, quad, g)
    }

    #[test]
    fn global_identities() {
        for p in 1..=3 {
            let (nodes, ops, quad, g) = build(GeometryKind::BoxCircle, Resolution::Square(10), p);
            let v = global_vandermonde(&nodes, p);
            for axis in 0..2 {
                let r = pair_residuals(&g, &v, axis, None);
                assert!(r.accuracy < 1e-9, "p={p} {r:?}");
                assert!(r.skew < 1e-12);
                let ones = vec![1.0; nodes.len()];
                let q1 = g.apply_q(axis, &ones);
                assert!(crate::linalg::dot(&ones, &q1).abs() < 1e-10);
                let e = g.materialize_e(axis).to_dense();
                assert!(e.sub(&e.transpose()).max_abs() < 1e-13);
                let (res, _) = five_sum_residual(&ops, &quad, &nodes, p, axis);
                assert!(res < 1e-9, "{res:e}");
            }
            let area: f64 = g.m.iter().sum();
            assert!((area - (1.0 - core::f64::consts::PI / 16.0)).abs() < 1e-9);
        }
    }

    #[test]
    fn nonzeros_bounded() {
        let (_, ops, quad, g) = build(GeometryKind::Annulus, Resolution::Polar { n_r: 5, n_theta: 20 }, 2);
        let mut bound: usize = ops.iter().map(|o| o.len() * o.len()).sum();
        for f in quad.faces.iter().filter(|f| f.kind == FaceQuadKind::Interface) {
            let l = |c: usize| ops.iter().find(|o| o.cell == c).unwrap().len();
            bound += l(f.cells[0]) * l(f.cells[1]);
        }
        assert!(g.sx.nnz() <= bound);
    }

    #[test]
    fn single_cell_equals_cell_operator() {
        let geo = make_geometry(GeometryKind::Box).unwrap();
        let nodes = [[0.2, 0.3], [0.8, 0.1], [0.7, 0.9], [0.1, 0.6], [0.5, 0.5]];
        // a one-node mesh gives one cell; its stencil then takes all five nodes
        let mesh = build_mesh(&geo, &nodes[..1], Some([1.0, 1.0])).unwrap();
        assert_eq!(mesh.cells.len(), 1);
        let quad = mesh_quadrature(&mesh, &geo, 1).unwrap();
        let st = vec![crate::stencil::Stencil { cell: 0, nodes: (0..5).collect(), cond: 1.0, converged: true }];
        let ops = build_cell_operators(&st, &nodes, &quad, &mesh, 1).unwrap();
        let g = assemble(5, 1, &ops, &quad).unwrap();
        assert_eq!(g.sx.to_dense().sub(&ops[0].s(0)).max_abs(), 0.0);
        assert_eq!(g.m, ops[0].m);
        assert!(g.materialize_e(0).to_dense().sub(&ops[0].e(0)).max_abs() < 1e-15);
    }

    #[test]
    fn boundary_oracle_matches_assembled_e() {
        for (kind, res) in [(GeometryKind::BoxCircle, Resolution::Square(10)), (GeometryKind::Airfoil, Resolution::Airfoil(4))] {
            let geo = make_geometry(kind).unwrap();
            let ns = sample_nodes(&SamplerConfig::new(res, 3), &geo).unwrap();
            let mesh = build_mesh(&geo, &ns.coords, None).unwrap();
            for p in [1, 2] {
                let quad = mesh_quadrature(&mesh, &geo, p).unwrap();
                let st = build_stencils(&mesh, &ns.coords, p, None, None).unwrap();
                let ops = build_cell_operators(&st, &ns.coords, &quad, &mesh, p).unwrap();
                let g = assemble(ns.len(), p, &ops, &quad).unwrap();
                let oracle = boundary_moment_oracle(&mesh, &geo, &quad, &ns.coords, p, 4 * p).unwrap();
                let v = global_vandermonde(&ns.coords, p);
                for axis in 0..2 {
                    let r = pair_residuals(&g, &v, axis, Some(&oracle[axis]));
                    assert!(r.boundary.unwrap() < 1e-9, "{kind:?} p={p}: {r:?}");
                }
            }
        }
    }
}
