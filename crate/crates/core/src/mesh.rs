//! Quadtree background mesh with cut-cell classification and face lists.
//!
//! Cells live on an integer dyadic grid so face matching is exact. Bounds
//! that are not square are covered by a row or column of square roots.

use alloc::vec::Vec;

use crate::cutquad::{cut_cell_rules, live_pieces, Rect};
use crate::geometry::Geometry;
use crate::{Error, Point, Result};

/// Finest level relative to a root cell.
const MAX_LEVEL: u32 = 40;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CellKind {
    Interior,
    Cut,
    Immersed,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Cell {
    pub rect: Rect,
    pub kind: CellKind,
    pub node: Option<usize>,
    pub level: u32,
    /// Integer lower-left corner and edge length in grid units.
    pub origin: [u64; 2],
    pub size: u64,
    /// Indices into [`Mesh::faces`] of the faces bounding this cell.
    pub faces: Vec<usize>,
}

impl Cell {
    pub fn is_live(&self) -> bool {
        self.kind != CellKind::Immersed
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FaceKind {
    /// Shared by two live cells.
    Interface,
    /// On the domain bounds.
    BoxBoundary,
    /// Between a live cell and an immersed one.
    LevelSetBoundary,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Face {
    /// Axis the face is perpendicular to.
    pub axis: usize,
    pub coord: f64,
    /// Extent along the other axis.
    pub extent: [f64; 2],
    /// Cell on the `-axis` side, if any (and if live or immersed).
    pub neg: Option<usize>,
    /// Cell on the `+axis` side.
    pub pos: Option<usize>,
    pub kind: FaceKind,
    /// The level set may cross this face.
    pub cut: bool,
}

impl Face {
    pub fn length(&self) -> f64 {
        self.extent[1] - self.extent[0]
    }

    /// The single live cell of a boundary face and the sign of its outward
    /// normal along `axis`.
    pub fn boundary_side(&self, cells: &[Cell]) -> Option<(usize, f64)> {
        let live = |c: Option<usize>| c.filter(|&i| cells[i].is_live());
        match (live(self.neg), live(self.pos)) {
            (Some(n), None) => Some((n, 1.0)),
            (None, Some(p)) => Some((p, -1.0)),
            _ => None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Mesh {
    pub cells: Vec<Cell>,
    pub faces: Vec<Face>,
    pub min_cut_size: [f64; 2],
    pub has_levelset: bool,
}

impl Mesh {
    pub fn live_cells(&self) -> impl Iterator<Item = usize> + '_ {
        self.cells.iter().enumerate().filter(|(_, c)| c.is_live()).map(|(i, _)| i)
    }

    pub fn interfaces(&self) -> impl Iterator<Item = usize> + '_ {
        self.faces.iter().enumerate().filter(|(_, f)| f.kind == FaceKind::Interface).map(|(i, _)| i)
    }

    pub fn boundary_faces(&self) -> impl Iterator<Item = usize> + '_ {
        self.faces.iter().enumerate().filter(|(_, f)| f.kind != FaceKind::Interface).map(|(i, _)| i)
    }
}

/// Classify a rectangle against `phi` by sampling. Nine samples (corners,
/// edge midpoints, center) decide unless every sign agrees while some
/// `|phi|` is within a Lipschitz bound of zero; then a 5x5 grid is sampled,
/// and a cell still that close to the curve is reported as cut.
pub fn classify_cell(rect: &Rect, geo: &Geometry) -> CellKind {
    if !geo.has_levelset() {
        return CellKind::Interior;
    }
    let sample = |n: usize| {
        let mut pos = false;
        let mut neg = false;
        let mut min_abs = f64::INFINITY;
        let mut lip: f64 = 0.0;
        for j in 0..n {
            for i in 0..n {
                let p = [
                    rect.lo[0] + rect.width(0) * i as f64 / (n - 1) as f64,
                    rect.lo[1] + rect.width(1) * j as f64 / (n - 1) as f64,
                ];
                let v = geo.phi(p);
                if v > 0.0 {
                    pos = true;
                } else {
                    neg = true;
                }
                min_abs = min_abs.min(v.abs());
                let g = geo.grad(p);
                lip = lip.max(libm::hypot(g[0], g[1]));
            }
        }
        (pos, neg, min_abs, lip)
    };
    let diag = rect.diagonal();
    let (pos, neg, min_abs, lip) = sample(3);
    if pos && neg {
        return CellKind::Cut;
    }
    let kind = if pos { CellKind::Interior } else { CellKind::Immersed };
    if min_abs >= diag * lip {
        return kind;
    }
    let (pos, neg, min_abs, lip2) = sample(5);
    if pos && neg {
        return CellKind::Cut;
    }
    if min_abs < 0.25 * diag * lip.max(lip2) {
        return CellKind::Cut;
    }
    kind
}

struct Grid {
    lo: Point,
    root_size: [f64; 2],
    roots: [u64; 2],
}

impl Grid {
    fn new(geo: &Geometry, roots: [usize; 2]) -> Self {
        let w = geo.width(0);
        let h = geo.width(1);
        let (nx, ny) = (roots[0] as u64, roots[1] as u64);
        Grid {
            lo: [geo.bounds[0][0], geo.bounds[1][0]],
            root_size: [w / nx as f64, h / ny as f64],
            roots: [nx, ny],
        }
    }

    fn coord(&self, d: usize, u: u64) -> f64 {
        let per_root = 1u64 << MAX_LEVEL;
        let r = u / per_root;
        let frac = (u % per_root) as f64 / per_root as f64;
        self.lo[d] + (r as f64 + frac) * self.root_size[d]
    }

    fn rect(&self, origin: [u64; 2], size: u64) -> Rect {
        Rect::new(
            [self.coord(0, origin[0]), self.coord(1, origin[1])],
            [self.coord(0, origin[0] + size), self.coord(1, origin[1] + size)],
        )
    }
}

struct Leaf {
    origin: [u64; 2],
    size: u64,
    level: u32,
    nodes: Vec<usize>,
}

fn split_leaf(grid: &Grid, leaf: Leaf, nodes: &[Point]) -> [Leaf; 4] {
    let half = leaf.size / 2;
    let mid = [grid.coord(0, leaf.origin[0] + half), grid.coord(1, leaf.origin[1] + half)];
    let mut kids: [Leaf; 4] = core::array::from_fn(|q| Leaf {
        origin: [leaf.origin[0] + half * (q as u64 % 2), leaf.origin[1] + half * (q as u64 / 2)],
        size: half,
        level: leaf.level + 1,
        nodes: Vec::new(),
    });
    for &n in &leaf.nodes {
        let p = nodes[n];
        let qx = if p[0] >= mid[0] { 1 } else { 0 };
        let qy = if p[1] >= mid[1] { 1 } else { 0 };
        kids[qx + 2 * qy].nodes.push(n);
    }
    kids
}

/// Build the quadtree: refine to at most one node per leaf, then refine cut
/// leaves until both edges are at most `min_cut_size` (default: half the
/// smallest node-containing leaf).
pub fn build_mesh(geo: &Geometry, nodes: &[Point], min_cut_size: Option<[f64; 2]>) -> Result<Mesh> {
    build_mesh_on_grid(geo, nodes, min_cut_size, default_roots(geo))
}

/// Root cells covering the bounds: one across the short side, as many as
/// keep them closest to square along the long side.
pub fn default_roots(geo: &Geometry) -> [usize; 2] {
    let w = geo.width(0);
    let h = geo.width(1);
    if w >= h {
        [libm::round(w / h).max(1.0) as usize, 1]
    } else {
        [1, libm::round(h / w).max(1.0) as usize]
    }
}

/// [`build_mesh`] over an explicit `roots[0] x roots[1]` grid of root cells.
pub fn build_mesh_on_grid(geo: &Geometry, nodes: &[Point], min_cut_size: Option<[f64; 2]>, roots: [usize; 2]) -> Result<Mesh> {
    if roots[0] == 0 || roots[1] == 0 {
        return Err(Error::InvalidParameter(alloc::format!("root grid {roots:?} is empty")));
    }
    if let Some(m) = min_cut_size {
        if !(m[0] > 0.0 && m[1] > 0.0) {
            return Err(Error::InvalidParameter(alloc::format!("min_cut_size must be positive, got {m:?}")));
        }
    }
    for (i, p) in nodes.iter().enumerate() {
        if !geo.contains_box(*p) || !p[0].is_finite() || !p[1].is_finite() {
            return Err(Error::NodeOutsideBounds { index: i });
        }
    }
    let grid = Grid::new(geo, roots);
    let per_root = 1u64 << MAX_LEVEL;

    // Root cells; nodes on the upper bound go to the last root.
    let mut roots = Vec::new();
    for ry in 0..grid.roots[1] {
        for rx in 0..grid.roots[0] {
            roots.push(Leaf { origin: [rx * per_root, ry * per_root], size: per_root, level: 0, nodes: Vec::new() });
        }
    }
    for (i, p) in nodes.iter().enumerate() {
        let rx = (((p[0] - grid.lo[0]) / grid.root_size[0]) as u64).min(grid.roots[0] - 1);
        let ry = (((p[1] - grid.lo[1]) / grid.root_size[1]) as u64).min(grid.roots[1] - 1);
        roots[(ry * grid.roots[0] + rx) as usize].nodes.push(i);
    }

    // Phase 1: one node per leaf.
    let mut leaves = Vec::new();
    let mut stack: Vec<Leaf> = roots.into_iter().rev().collect();
    while let Some(leaf) = stack.pop() {
        if leaf.nodes.len() > 1 {
            if leaf.level >= MAX_LEVEL {
                return Err(Error::InvalidParameter("coincident nodes prevent quadtree separation".into()));
            }
            let kids = split_leaf(&grid, leaf, nodes);
            stack.extend(kids.into_iter().rev());
        } else {
            leaves.push(leaf);
        }
    }

    let min_cut = match min_cut_size {
        Some(m) => m,
        None => {
            let mut m = [f64::INFINITY; 2];
            for l in leaves.iter().filter(|l| !l.nodes.is_empty()) {
                let r = grid.rect(l.origin, l.size);
                m[0] = m[0].min(0.5 * r.width(0));
                m[1] = m[1].min(0.5 * r.width(1));
            }
            if !m[0].is_finite() {
                m = [0.5 * grid.root_size[0], 0.5 * grid.root_size[1]];
            }
            m
        }
    };

    // Phase 2: refine cut leaves.
    let mut cells = Vec::new();
    let mut stack: Vec<Leaf> = leaves.into_iter().rev().collect();
    while let Some(leaf) = stack.pop() {
        let rect = grid.rect(leaf.origin, leaf.size);
        let kind = classify_cell(&rect, geo);
        let too_big = rect.width(0) > min_cut[0] * (1.0 + 1e-12) || rect.width(1) > min_cut[1] * (1.0 + 1e-12);
        if kind == CellKind::Cut && too_big && leaf.level < MAX_LEVEL {
            let kids = split_leaf(&grid, leaf, nodes);
            stack.extend(kids.into_iter().rev());
            continue;
        }
        cells.push(Cell {
            rect,
            kind,
            node: leaf.nodes.first().copied(),
            level: leaf.level,
            origin: leaf.origin,
            size: leaf.size,
            faces: Vec::new(),
        });
    }

    if geo.has_levelset() {
        // A leaf holding a node (phi >= 0) is never immersed.
        for c in cells.iter_mut() {
            if c.node.is_some() && c.kind == CellKind::Immersed {
                c.kind = CellKind::Cut;
            }
        }
        // Promote immersed leaves that share a facet with live phi > 0 length.
        loop {
            let raw = enumerate_facets(&cells);
            let mut changed = false;
            for f in &raw {
                if let (Some(a), Some(b)) = (f.neg, f.pos) {
                    let (ka, kb) = (cells[a].kind, cells[b].kind);
                    let one_live = (ka == CellKind::Immersed) != (kb == CellKind::Immersed);
                    if one_live {
                        let coord = grid.coord(f.axis, f.coord);
                        let ext = [grid.coord(1 - f.axis, f.start), grid.coord(1 - f.axis, f.end)];
                        if !live_pieces(geo, f.axis, coord, ext[0], ext[1]).is_empty() {
                            let im = if ka == CellKind::Immersed { a } else { b };
                            cells[im].kind = CellKind::Cut;
                            changed = true;
                        }
                    }
                }
            }
            if !changed {
                break;
            }
        }
        // Settle cut cells by their actual live region: slivers without a
        // node become immersed, cells the curve misses become interior.
        for c in cells.iter_mut().filter(|c| c.kind == CellKind::Cut) {
            let rules = cut_cell_rules(&c.rect, geo, 1)?;
            let vol = rules.volume.total_weight();
            if rules.volume.is_empty() {
                if c.node.is_none() {
                    c.kind = CellKind::Immersed;
                }
            } else if rules.curve.is_empty() && vol >= (1.0 - 1e-12) * c.rect.area() {
                let interior = (0..2).all(|d| {
                    let fc = |lohi: usize| {
                        let coord = if lohi == 0 { c.rect.lo[d] } else { c.rect.hi[d] };
                        let o = 1 - d;
                        let pieces = live_pieces(geo, d, coord, c.rect.lo[o], c.rect.hi[o]);
                        pieces.len() == 1 && pieces[0].0 == c.rect.lo[o] && pieces[0].1 == c.rect.hi[o]
                    };
                    fc(0) && fc(1)
                });
                if interior {
                    c.kind = CellKind::Interior;
                }
            }
        }
    }

    let faces = build_faces(&grid, &mut cells, geo.has_levelset());
    Ok(Mesh { cells, faces, min_cut_size: min_cut, has_levelset: geo.has_levelset() })
}

struct RawFacet {
    axis: usize,
    coord: u64,
    start: u64,
    end: u64,
    neg: Option<usize>,
    pos: Option<usize>,
}

/// Maximal facets with a constant pair of neighbors, from a sweep over every
/// grid line carrying leaf edges.
fn enumerate_facets(cells: &[Cell]) -> Vec<RawFacet> {
    let mut out = Vec::new();
    for axis in 0..2 {
        let o = 1 - axis;
        // (coord, start, end, side, cell); side 0 = cell on the negative side
        let mut edges: Vec<(u64, u64, u64, u8, usize)> = Vec::with_capacity(2 * cells.len());
        for (i, c) in cells.iter().enumerate() {
            let s = c.origin[o];
            let e = s + c.size;
            edges.push((c.origin[axis] + c.size, s, e, 0, i));
            edges.push((c.origin[axis], s, e, 1, i));
        }
        edges.sort_unstable();
        let mut g = 0;
        while g < edges.len() {
            let coord = edges[g].0;
            let mut h = g;
            while h < edges.len() && edges[h].0 == coord {
                h += 1;
            }
            let group = &edges[g..h];
            let negs: Vec<_> = group.iter().filter(|e| e.3 == 0).collect();
            let poss: Vec<_> = group.iter().filter(|e| e.3 == 1).collect();
            let mut knots: Vec<u64> = group.iter().flat_map(|e| [e.1, e.2]).collect();
            knots.sort_unstable();
            knots.dedup();
            let (mut in_, mut ip) = (0usize, 0usize);
            let mut current: Option<RawFacet> = None;
            for w in knots.windows(2) {
                let (s, e) = (w[0], w[1]);
                while in_ < negs.len() && negs[in_].2 <= s {
                    in_ += 1;
                }
                while ip < poss.len() && poss[ip].2 <= s {
                    ip += 1;
                }
                let n = negs.get(in_).filter(|x| x.1 <= s && x.2 >= e).map(|x| x.4);
                let p = poss.get(ip).filter(|x| x.1 <= s && x.2 >= e).map(|x| x.4);
                if n.is_none() && p.is_none() {
                    if let Some(f) = current.take() {
                        out.push(f);
                    }
                    continue;
                }
                match current.as_mut() {
                    Some(f) if f.neg == n && f.pos == p && f.end == s => f.end = e,
                    _ => {
                        if let Some(f) = current.take() {
                            out.push(f);
                        }
                        current = Some(RawFacet { axis, coord, start: s, end: e, neg: n, pos: p });
                    }
                }
            }
            if let Some(f) = current.take() {
                out.push(f);
            }
            g = h;
        }
    }
    out
}

fn build_faces(grid: &Grid, cells: &mut [Cell], has_levelset: bool) -> Vec<Face> {
    let raw = enumerate_facets(cells);
    let mut faces = Vec::new();
    for f in raw {
        let live = |c: Option<usize>| c.map(|i| cells[i].is_live()).unwrap_or(false);
        let (ln, lp) = (live(f.neg), live(f.pos));
        let kind = match (ln, lp) {
            (true, true) => FaceKind::Interface,
            (false, false) => continue,
            _ => {
                if f.neg.is_some() && f.pos.is_some() {
                    FaceKind::LevelSetBoundary
                } else {
                    FaceKind::BoxBoundary
                }
            }
        };
        let touches_cut = [f.neg, f.pos].iter().flatten().any(|&i| cells[i].kind == CellKind::Cut);
        let cut = has_levelset && (touches_cut || kind == FaceKind::LevelSetBoundary);
        faces.push(Face {
            axis: f.axis,
            coord: grid.coord(f.axis, f.coord),
            extent: [grid.coord(1 - f.axis, f.start), grid.coord(1 - f.axis, f.end)],
            neg: f.neg,
            pos: f.pos,
            kind,
            cut,
        });
    }
    for (fi, f) in faces.iter().enumerate() {
        for c in [f.neg, f.pos].into_iter().flatten() {
            if cells[c].is_live() {
                cells[c].faces.push(fi);
            }
        }
    }
    faces
}

/// Total length of the rectangle's edges where `phi > 0`.
pub fn live_perimeter(rect: &Rect, geo: &Geometry) -> f64 {
    let mut total = 0.0;
    for d in 0..2 {
        let o = 1 - d;
        for c in [rect.lo[d], rect.hi[d]] {
            total += live_pieces(geo, d, c, rect.lo[o], rect.hi[o]).iter().map(|(a, b)| b - a).sum::<f64>();
        }
    }
    total
}

/// Number of live cells adjacent to a face.
pub fn face_live_sides(face: &Face, cells: &[Cell]) -> usize {
    [face.neg, face.pos].iter().flatten().filter(|&&i| cells[i].is_live()).count()
}
