//! Single-point interface dissipation `A = eps sum_f B_f J_f^T J_f`, where
//! `J_f` is the jump between the two neighbours' interpolants at the face
//! center.

use alloc::vec;
use alloc::vec::Vec;

use crate::cellops::{face_interpolation, CellOperator, FaceQuadKind, MeshQuadrature};
use crate::sparse::Csr;
use crate::{Error, Result};

pub const DEFAULT_EPS: f64 = 0.25;

#[derive(Clone, Debug)]
pub struct DissipationOp {
    /// Symmetric positive semidefinite, stored in full.
    pub a: Csr,
    pub eps: f64,
}

impl DissipationOp {
    pub fn zero(n: usize) -> Self {
        DissipationOp { a: Csr::zeros(n, n), eps: 0.0 }
    }

    pub fn apply(&self, u: &[f64]) -> Vec<f64> {
        self.a.matvec(u)
    }

    /// `u^T A u`.
    pub fn energy(&self, u: &[f64]) -> f64 {
        crate::linalg::dot(u, &self.a.matvec(u))
    }
}

/// Jump row of one interface as sorted `(node, coefficient)` pairs.
fn jump(neg: &CellOperator, pos: &CellOperator, x: crate::Point, p: usize) -> Vec<(usize, f64)> {
    let rm = face_interpolation(&neg.pinv, &neg.map, &[x], p);
    let rp = face_interpolation(&pos.pinv, &pos.map, &[x], p);
    let mut entries: Vec<(usize, f64)> = Vec::with_capacity(neg.len() + pos.len());
    entries.extend(pos.nodes.iter().zip(rp.row(0)).map(|(&g, &v)| (g, v)));
    entries.extend(neg.nodes.iter().zip(rm.row(0)).map(|(&g, &v)| (g, -v)));
    entries.sort_by_key(|e| e.0);
    let mut out: Vec<(usize, f64)> = Vec::with_capacity(entries.len());
    for (g, v) in entries {
        match out.last_mut() {
            Some(last) if last.0 == g => last.1 += v,
            _ => out.push((g, v)),
        }
    }
    out
}

pub fn build_dissipation(n: usize, p: usize, ops: &[CellOperator], quad: &MeshQuadrature, eps: f64) -> Result<DissipationOp> {
    if !(eps >= 0.0) || !eps.is_finite() {
        return Err(Error::InvalidParameter("dissipation coefficient must be finite and nonnegative".into()));
    }
    if eps == 0.0 {
        return Ok(DissipationOp::zero(n));
    }
    let mut by_cell = vec![usize::MAX; quad.volume.len()];
    for (k, op) in ops.iter().enumerate() {
        by_cell[op.cell] = k;
    }
    let mut trips = Vec::new();
    for f in &quad.faces {
        if f.kind != FaceQuadKind::Interface || f.live_length <= 0.0 {
            continue;
        }
        let (a, b) = (by_cell[f.cells[0]], by_cell[f.cells[1]]);
        if a == usize::MAX || b == usize::MAX {
            return Err(Error::InvalidParameter("interface touches a cell without an operator".into()));
        }
        let j = jump(&ops[a], &ops[b], f.center, p);
        let w = eps * f.live_length;
        for (k, &(gi, vi)) in j.iter().enumerate() {
            for &(gj, vj) in &j[k..] {
                trips.push((gi, gj, w * vi * vj));
            }
        }
    }
    // sum the upper triangle once, then mirror so A = A^T bitwise
    let upper = Csr::from_triplets(n, n, &trips);
    let mut full = upper.to_triplets();
    full.extend(upper.to_triplets().into_iter().filter(|t| t.0 != t.1).map(|(i, j, v)| (j, i, v)));
    Ok(DissipationOp { a: Csr::from_triplets(n, n, &full), eps })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::global_vandermonde;
    use crate::cellops::{build_cell_operators, mesh_quadrature};
    use crate::geometry::{make_geometry, sample_nodes, GeometryKind, Resolution, Rng, SamplerConfig};
    use crate::mesh::build_mesh;
    use crate::stencil::build_stencils;

    fn setup(kind: GeometryKind, res: Resolution, p: usize) -> (usize, Vec<CellOperator>, MeshQuadrature, Vec<crate::Point>) {
        let geo = make_geometry(kind).unwrap();
        let ns = sample_nodes(&SamplerConfig::new(res, 3), &geo).unwrap();
        let mesh = build_mesh(&geo, &ns.coords, None).unwrap();
        let quad = mesh_quadrature(&mesh, &geo, p).unwrap();
        let st = build_stencils(&mesh, &ns.coords, p, None, None).unwrap();
        let ops = build_cell_operators(&st, &ns.coords, &quad, &mesh, p).unwrap();
        (ns.len(), ops, quad, ns.coords)
    }

    #[test]
    fn symmetric_psd_and_exact() {
        for (kind, res) in [(GeometryKind::BoxCircle, Resolution::Square(12)), (GeometryKind::Annulus, Resolution::Polar { n_r: 6, n_theta: 36 })] {
            for p in 1..=3 {
                let (n, ops, quad, nodes) = setup(kind, res, p);
                let d = build_dissipation(n, p, &ops, &quad, DEFAULT_EPS).unwrap();
                let dense = d.a.to_dense();
                for i in 0..n {
                    for j in 0..n {
                        assert_eq!(dense[(i, j)], dense[(j, i)]);
                    }
                }
                assert!(d.a.nnz() > 0);
                let v = global_vandermonde(&nodes, p).values;
                let av = dense.matmul(&v);
                assert!(av.max_abs() <= 1e-10 * v.max_abs().max(1.0), "p={p}: {}", av.max_abs());
                let ones = vec![1.0; n];
                assert!(crate::linalg::max_abs(&d.a.tr_matvec(&ones)) <= 1e-12 * dense.max_abs().max(1.0) * n as f64);
                let mut rng = Rng::new(9);
                for _ in 0..20 {
                    let u: Vec<f64> = (0..n).map(|_| rng.uniform(-1.0, 1.0)).collect();
                    assert!(d.energy(&u) >= -1e-12 * crate::linalg::dot(&u, &u));
                }
            }
        }
    }

    #[test]
    fn zero_coefficient() {
        let (n, ops, quad, _) = setup(GeometryKind::BoxCircle, Resolution::Square(8), 1);
        let d = build_dissipation(n, 1, &ops, &quad, 0.0).unwrap();
        assert_eq!(d.a.nnz(), 0);
        assert!(build_dissipation(n, 1, &ops, &quad, -1.0).is_err());
    }

    #[test]
    fn shared_stencil_has_no_jump() {
        let (_, ops, _, _) = setup(GeometryKind::BoxCircle, Resolution::Square(8), 1);
        let j = jump(&ops[0], &ops[0], [0.3, 0.4], 1);
        assert!(j.iter().all(|e| e.1.abs() < 1e-13));
    }
}
