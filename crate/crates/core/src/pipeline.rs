//! End-to-end operator construction: mesh, quadrature, stencils, cell
//! operators, norm repair, assembly and dissipation.

use alloc::vec::Vec;

use crate::assembly::{assemble, GlobalOperators};
use crate::cellops::{build_cell_operators, mesh_quadrature, CellOperator, MeshQuadrature};
use crate::dissipation::{build_dissipation, DissipationOp, DEFAULT_EPS};
use crate::geometry::{Geometry, NodeSet};
use crate::mesh::{build_mesh, Mesh};
use crate::normlp::{build_problem, default_tau, finalize_norm, solve_norm, IpmOptions, NormProblem, NormSolution, NormStatus, TauRegime};
use crate::stencil::{build_stencils, Stencil};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub enum TauSpec {
    Regime(TauRegime),
    Values(Vec<f64>),
}

#[derive(Clone, Debug)]
pub struct BuildOptions {
    pub p: usize,
    pub n_max: Option<usize>,
    pub cond_tol: Option<f64>,
    pub min_cut_size: Option<[f64; 2]>,
    pub tau: TauSpec,
    /// Dissipation coefficient; zero skips the build.
    pub eps_diss: f64,
    pub ipm: IpmOptions,
}

impl BuildOptions {
    pub fn new(p: usize) -> Self {
        BuildOptions {
            p,
            n_max: None,
            cond_tol: None,
            min_cut_size: None,
            tau: TauSpec::Regime(TauRegime::Auto),
            eps_diss: DEFAULT_EPS,
            ipm: IpmOptions::default(),
        }
    }
}

/// Reported after each stage completes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Stage {
    Mesh,
    Quadrature,
    Stencils,
    CellOperators,
    NormLp,
    Assembly,
    Dissipation,
}

impl Stage {
    pub fn name(&self) -> &'static str {
        match self {
            Stage::Mesh => "mesh",
            Stage::Quadrature => "quadrature",
            Stage::Stencils => "stencil",
            Stage::CellOperators => "cell_operators",
            Stage::NormLp => "norm_lp",
            Stage::Assembly => "assembly",
            Stage::Dissipation => "dissipation",
        }
    }
}

#[derive(Clone, Debug)]
pub struct Build {
    pub p: usize,
    pub mesh: Mesh,
    pub quad: MeshQuadrature,
    pub stencils: Vec<Stencil>,
    pub ops: Vec<CellOperator>,
    pub problem: NormProblem,
    pub solution: NormSolution,
    /// Built with the repaired norm when it is feasible, otherwise with the
    /// minimum-norm weights.
    pub global: GlobalOperators,
    pub diss: DissipationOp,
}

impl Build {
    pub fn feasible(&self) -> bool {
        self.solution.status == NormStatus::Feasible
    }
}

/// Operators up to (not including) the norm LP.
pub fn build_cells(geo: &Geometry, nodes: &NodeSet, opts: &BuildOptions, hook: &mut dyn FnMut(Stage)) -> Result<(Mesh, MeshQuadrature, Vec<Stencil>, Vec<CellOperator>)> {
    if !(1..=4).contains(&opts.p) {
        return Err(Error::InvalidParameter(alloc::format!("degree {} outside 1..=4", opts.p)));
    }
    let mesh = build_mesh(geo, &nodes.coords, opts.min_cut_size)?;
    hook(Stage::Mesh);
    let quad = mesh_quadrature(&mesh, geo, opts.p)?;
    hook(Stage::Quadrature);
    let stencils = build_stencils(&mesh, &nodes.coords, opts.p, opts.n_max, opts.cond_tol)?;
    hook(Stage::Stencils);
    let ops = build_cell_operators(&stencils, &nodes.coords, &quad, &mesh, opts.p)?;
    hook(Stage::CellOperators);
    Ok((mesh, quad, stencils, ops))
}

pub fn build(geo: &Geometry, nodes: &NodeSet, opts: &BuildOptions, hook: &mut dyn FnMut(Stage)) -> Result<Build> {
    let (mesh, quad, stencils, mut ops) = build_cells(geo, nodes, opts, hook)?;
    let n = nodes.len();
    let tau = match &opts.tau {
        TauSpec::Regime(r) => default_tau(geo, nodes, *r)?,
        TauSpec::Values(v) => v.clone(),
    };
    let problem = build_problem(&ops, n, tau)?;
    let solution = solve_norm(&problem, &opts.ipm);
    hook(Stage::NormLp);
    let global = if solution.status == NormStatus::Feasible {
        finalize_norm(&mut ops, &problem, &solution.y, &quad, opts.p)?
    } else {
        assemble(n, opts.p, &ops, &quad)?
    };
    hook(Stage::Assembly);
    let diss = build_dissipation(n, opts.p, &ops, &quad, opts.eps_diss)?;
    hook(Stage::Dissipation);
    Ok(Build { p: opts.p, mesh, quad, stencils, ops, problem, solution, global, diss })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::{global_vandermonde, pair_residuals};
    use crate::geometry::{make_geometry, sample_nodes, GeometryKind, Resolution, SamplerConfig};
    use crate::linalg::max_abs;

    #[test]
    fn box_circle_builds_feasible() {
        let geo = make_geometry(GeometryKind::BoxCircle).unwrap();
        for (p, nx) in [(1, 10), (2, 14), (3, 20), (4, 24)] {
            let ns = sample_nodes(&SamplerConfig::new(Resolution::Square(nx), 2), &geo).unwrap();
            let b = build(&geo, &ns, &BuildOptions::new(p), &mut |_| {}).unwrap();
            assert!(b.feasible());
            let tmax = max_abs(&b.problem.tau);
            assert!(b.global.m.iter().zip(&b.problem.tau).all(|(m, t)| *m >= t - 1e-9 * tmax));
            let area = 1.0 - core::f64::consts::PI / 16.0;
            assert!((b.global.m.iter().sum::<f64>() - area).abs() < 1e-12);
            let v = global_vandermonde(&ns.coords, p);
            for axis in 0..2 {
                let r = pair_residuals(&b.global, &v, axis, None);
                assert!(r.accuracy < 1e-9, "p={p}: {}", r.accuracy);
            }
        }
    }
}
