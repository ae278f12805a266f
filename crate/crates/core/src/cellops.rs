//! Mesh quadrature and the per-cell operators: minimum-norm weights with a
//! null-space basis, face interpolation, boundary matrices and the
//! skew-symmetric part from the QR formula.

use alloc::vec;
use alloc::vec::Vec;

use crate::basis::{basis_dim, vandermonde, vandermonde_values, AffineMap, Vandermonde};
use crate::cutquad::{cut_cell_rules, face_rule, live_pieces, tensor_rule, QuadRule};
use crate::geometry::Geometry;
use crate::linalg::{right_solve_upper, solve_upper_transposed, Matrix, Qr, Svd};
use crate::mesh::{CellKind, FaceKind, Mesh};
use crate::stencil::{cell_map, Stencil};
use crate::{Error, Point, Result};

/// Relative singular value cutoff for the interpolation pseudo-inverse.
pub const PINV_CUTOFF: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FaceQuadKind {
    /// Between two live cells; normals point along `+axis`.
    Interface,
    /// On the domain boundary (box, level-set curve, or next to an immersed
    /// cell); normals point out of the live cell.
    Boundary,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FaceQuad {
    pub kind: FaceQuadKind,
    /// `[neg, pos]` for interfaces, `[cell, cell]` for boundary faces.
    pub cells: [usize; 2],
    pub rule: QuadRule,
    /// Mesh face this rule came from, `None` for a cut cell's curve.
    pub mesh_face: Option<usize>,
    /// Midpoint of the longest live piece and the total live length; used by
    /// the single-point dissipation.
    pub center: Point,
    pub live_length: f64,
}

#[derive(Clone, Debug)]
pub struct MeshQuadrature {
    pub degree: usize,
    /// Indexed by cell id; empty for immersed cells.
    pub volume: Vec<QuadRule>,
    pub faces: Vec<FaceQuad>,
    /// Face-quadrature ids touching each cell, ascending.
    pub cell_faces: Vec<Vec<usize>>,
}

/// Volume rules exact to degree `2p` and face rules exact to `2p + 1`.
pub fn mesh_quadrature(mesh: &Mesh, geo: &Geometry, p: usize) -> Result<MeshQuadrature> {
    let degree = 2 * p;
    let ncell = mesh.cells.len();
    let mut volume = vec![QuadRule::default(); ncell];
    let mut curves = Vec::new();
    for (i, c) in mesh.cells.iter().enumerate() {
        match c.kind {
            CellKind::Interior => volume[i] = tensor_rule(&c.rect, degree),
            CellKind::Cut => {
                let r = cut_cell_rules(&c.rect, geo, degree)?;
                volume[i] = r.volume;
                if !r.curve.is_empty() {
                    curves.push((i, r.curve));
                }
            }
            CellKind::Immersed => {}
        }
    }
    let mut faces = Vec::new();
    for (fi, f) in mesh.faces.iter().enumerate() {
        let (a, b) = (f.extent[0], f.extent[1]);
        let mut rule = face_rule(geo, f.axis, f.coord, a, b, degree, f.cut);
        if rule.is_empty() {
            continue;
        }
        let pieces = if f.cut { live_pieces(geo, f.axis, f.coord, a, b) } else { vec![(a, b)] };
        let live_length: f64 = pieces.iter().map(|(s, e)| e - s).sum();
        let longest = pieces.iter().copied().fold((a, a), |m, q| if q.1 - q.0 > m.1 - m.0 { q } else { m });
        let mut center = [0.0; 2];
        center[f.axis] = f.coord;
        center[1 - f.axis] = 0.5 * (longest.0 + longest.1);
        let (kind, cells) = match f.kind {
            FaceKind::Interface => (FaceQuadKind::Interface, [f.neg.unwrap(), f.pos.unwrap()]),
            _ => {
                let (c, sign) = f.boundary_side(&mesh.cells).expect("boundary face has one live side");
                if sign < 0.0 {
                    for n in rule.normals.iter_mut() {
                        n[f.axis] = -n[f.axis];
                    }
                }
                (FaceQuadKind::Boundary, [c, c])
            }
        };
        faces.push(FaceQuad { kind, cells, rule, mesh_face: Some(fi), center, live_length });
    }
    for (c, rule) in curves {
        let live_length = rule.total_weight();
        let center = mesh.cells[c].rect.center();
        faces.push(FaceQuad { kind: FaceQuadKind::Boundary, cells: [c, c], rule, mesh_face: None, center, live_length });
    }
    let mut cell_faces = vec![Vec::new(); ncell];
    for (k, f) in faces.iter().enumerate() {
        cell_faces[f.cells[0]].push(k);
        if f.cells[1] != f.cells[0] {
            cell_faces[f.cells[1]].push(k);
        }
    }
    Ok(MeshQuadrature { degree, volume, faces, cell_faces })
}

#[derive(Clone, Debug)]
pub struct CellNorm {
    pub m_min: Vec<f64>,
    /// Orthonormal basis of the null space of `V_{2p-1}^T`.
    pub z: Matrix,
    /// Cell moments of the degree `2p-1` basis.
    pub b: Vec<f64>,
}

/// Minimum 2-norm weights reproducing the cell moments, plus the null space.
pub fn cell_norm(points: &[Point], map: &AffineMap, rule: &QuadRule, p: usize, cell: usize) -> Result<CellNorm> {
    let q = 2 * p - 1;
    let n = basis_dim(q, 2);
    if points.len() < n {
        return Err(Error::RankDeficient { cell, degree: q });
    }
    let v = vandermonde_values(points, q, map);
    let vq = vandermonde_values(&rule.points, q, map);
    let b = vq.tr_matvec(&rule.weights);
    let qr = Qr::new(&v);
    if qr.diagonal_ratio() < 1e-14 {
        return Err(Error::RankDeficient { cell, degree: q });
    }
    let y = solve_upper_transposed(&qr.r, &b);
    let m_min = qr.thin_q().matvec(&y);
    Ok(CellNorm { m_min, z: qr.null_complement(), b })
}

/// Interpolation from the stencil to `points`: `V^f (V^c)^+`.
pub fn face_interpolation(pinv: &Matrix, map: &AffineMap, points: &[Point], p: usize) -> Matrix {
    vandermonde_values(points, p, map).matmul(pinv)
}

/// `e += sum_k w_k r_k r_k^T` over the rows `r_k` of the interpolation
/// operator.
fn add_boundary_matrix(e: &mut Matrix, r: &Matrix, weights: &[f64]) {
    let n = r.cols();
    for (k, &w) in weights.iter().enumerate() {
        if w == 0.0 {
            continue;
        }
        let row = r.row(k);
        for i in 0..n {
            let a = w * row[i];
            if a == 0.0 {
                continue;
            }
            for (x, rj) in e.row_mut(i).iter_mut().zip(row) {
                *x += a * rj;
            }
        }
    }
}

/// Skew-symmetric `S` with `(S + E/2) V = diag(m) V_d` from the thin QR
/// `V = U R`:  with `W = G R^{-1}`, `G = diag(m) V_d - E V / 2`,
/// `S = W U^T - U W^T + U (W^T U) U^T`, then symmetrized.
pub fn skew_from_norm(m: &[f64], v_d: &Matrix, e: &Matrix, u: &Matrix, r: &Matrix, v: &Matrix) -> Matrix {
    let g = v_d.scale_rows(m).axpy(-0.5, &e.matmul(v));
    let w = right_solve_upper(&g, r);
    let wt_u = w.tr_matmul(u);
    let s = w.matmul(&u.transpose()).sub(&u.matmul(&w.transpose())).add(&u.matmul(&wt_u).matmul(&u.transpose()));
    s.skew_part()
}

#[derive(Clone, Debug)]
pub struct CellOperator {
    pub cell: usize,
    pub nodes: Vec<usize>,
    pub map: AffineMap,
    pub norm: CellNorm,
    /// Weights the current `S` matrices were built with.
    pub m: Vec<f64>,
    pub vander: Vandermonde,
    /// Thin QR of the degree-`p` Vandermonde matrix.
    pub u: Matrix,
    pub r: Matrix,
    pub pinv: Matrix,
    /// Interpolation to each touching face's quadrature points, keyed by
    /// face-quadrature id.
    pub face_interp: Vec<(usize, Matrix)>,
    /// Quadrature weights times the outward normal components at each
    /// face's points, aligned with `face_interp`.
    pub face_wn: Vec<[Vec<f64>; 2]>,
}

impl CellOperator {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn interp(&self, face: usize) -> Option<&Matrix> {
        self.face_interp.iter().find(|(f, _)| *f == face).map(|(_, r)| r)
    }

    /// Weights used by [`CellOperator::s`] and assembly.
    pub fn set_norm(&mut self, m: &[f64]) {
        self.m = m.to_vec();
    }

    /// Cell boundary operator `E^c_axis = sum_f R_f^T B_f N_f R_f`.
    pub fn e(&self, axis: usize) -> Matrix {
        let n = self.len();
        let mut e = Matrix::zeros(n, n);
        for ((_, r), wn) in self.face_interp.iter().zip(&self.face_wn) {
            add_boundary_matrix(&mut e, r, &wn[axis]);
        }
        e
    }

    /// Skew part `S^c_axis` for the current weights. Built on demand so that
    /// large meshes do not hold two dense blocks per cell and axis.
    pub fn s(&self, axis: usize) -> Matrix {
        let d = if axis == 0 { &self.vander.dx } else { &self.vander.dy };
        skew_from_norm(&self.m, d, &self.e(axis), &self.u, &self.r, &self.vander.values)
    }

    /// Weights `m_min + Z y`.
    pub fn weights_for(&self, y: &[f64]) -> Vec<f64> {
        let mut m = self.norm.m_min.clone();
        if !y.is_empty() {
            let zy = self.norm.z.matvec(y);
            for (a, b) in m.iter_mut().zip(zy) {
                *a += b;
            }
        }
        m
    }
}

/// Operators of one live cell, built with the minimum-norm weights.
pub fn build_cell_operator(stencil: &Stencil, nodes: &[Point], quad: &MeshQuadrature, mesh: &Mesh, p: usize) -> Result<CellOperator> {
    let c = stencil.cell;
    let pts = stencil.points(nodes);
    let map = cell_map(&mesh.cells[c].rect, &pts);
    let norm = cell_norm(&pts, &map, &quad.volume[c], p, c)?;
    let vander = vandermonde(&pts, p, &map);
    let qr = Qr::new(&vander.values);
    if qr.diagonal_ratio() < 1e-14 {
        return Err(Error::RankDeficient { cell: c, degree: p });
    }
    let u = qr.thin_q();
    let r = qr.r.clone();
    let pinv = Svd::new(&vander.values).pseudo_inverse(PINV_CUTOFF);
    let mut face_interp = Vec::new();
    let mut face_wn = Vec::new();
    for &fid in &quad.cell_faces[c] {
        let f = &quad.faces[fid];
        let rf = face_interpolation(&pinv, &map, &f.rule.points, p);
        // outward orientation for this cell
        let sign = match f.kind {
            FaceQuadKind::Interface if f.cells[1] == c => -1.0,
            _ => 1.0,
        };
        let wn = |d: usize| f.rule.weights.iter().zip(&f.rule.normals).map(|(w, n)| sign * w * n[d]).collect();
        face_wn.push([wn(0), wn(1)]);
        face_interp.push((fid, rf));
    }
    let m = norm.m_min.clone();
    let mut op = CellOperator {
        cell: c,
        nodes: stencil.nodes.clone(),
        map,
        norm,
        m: Vec::new(),
        vander,
        u,
        r,
        pinv,
        face_interp,
        face_wn,
    };
    op.set_norm(&m);
    Ok(op)
}

pub fn build_cell_operators(stencils: &[Stencil], nodes: &[Point], quad: &MeshQuadrature, mesh: &Mesh, p: usize) -> Result<Vec<CellOperator>> {
    stencils.iter().map(|s| build_cell_operator(s, nodes, quad, mesh, p)).collect()
}

/// Reference solve of `S V = G` over all skew-symmetric `S`, returning the
/// minimum Frobenius norm solution of the dense least-squares system.
pub fn dense_skew_solve(v: &Matrix, g: &Matrix) -> Matrix {
    let n = v.rows();
    let k = v.cols();
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
    // row (a, b) of the system: sum_j S_aj V_jb = G_ab
    let mut a = Matrix::zeros(n * k, pairs.len());
    for (col, &(i, j)) in pairs.iter().enumerate() {
        for b in 0..k {
            a[(i * k + b, col)] += v[(j, b)];
            a[(j * k + b, col)] -= v[(i, b)];
        }
    }
    let rhs: Vec<f64> = (0..n).flat_map(|r| (0..k).map(move |b| (r, b))).map(|(r, b)| g[(r, b)]).collect();
    let sol = Svd::new(&a).pseudo_inverse(1e-13).matvec(&rhs);
    let mut s = Matrix::zeros(n, n);
    for (col, &(i, j)) in pairs.iter().enumerate() {
        s[(i, j)] = sol[col];
        s[(j, i)] = -sol[col];
    }
    s
}
