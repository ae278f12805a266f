//! Pair and dissipation diagnostics surfaced in reports and tests.

use pcsbp_core::assembly::{boundary_moment_oracle, five_sum_residual, global_vandermonde, pair_residuals};
use pcsbp_core::dissipation::DissipationOp;
use pcsbp_core::geometry::{Geometry, NodeSet, Rng};
use pcsbp_core::linalg::{dot, max_abs};
use pcsbp_core::pipeline::Build;
use pcsbp_core::sparse::Skew;
use serde::Serialize;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct AxisResiduals {
    /// `|Q V - M V_d| / |M V_d|`
    pub accuracy: f64,
    /// `max |S + S^T|`
    pub skew: f64,
    /// `|V^T E V - oracle| / |oracle|` against face rules exact to `4p`.
    pub boundary: f64,
    /// Cancellation of the four interface and boundary sums, relative to `|M V_d|`.
    pub five_sum: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct DissipationChecks {
    /// `max|A V| / max|V|`
    pub annihilation: f64,
    /// `max |1^T A|`
    pub conservation: f64,
    /// Smallest `u^T A u / |u|^2` over the random probes.
    pub min_rayleigh: f64,
    /// `max|A - A^T|`
    pub asymmetry: f64,
}

/// `max |S + S^T|` from the full sparse form.
pub fn skew_defect(s: &Skew) -> f64 {
    let full = s.to_csr();
    let mut worst: f64 = 0.0;
    for i in 0..full.nrows {
        for (j, v) in full.row(i) {
            worst = worst.max((v + full.get(j, i)).abs());
        }
    }
    worst
}

pub fn pair_checks(build: &Build, geo: &Geometry, nodes: &NodeSet) -> anyhow::Result<[AxisResiduals; 2]> {
    let p = build.p;
    let vander = global_vandermonde(&nodes.coords, p);
    let oracle = boundary_moment_oracle(&build.mesh, geo, &build.quad, &nodes.coords, p, 4 * p)?;
    let mut out = [AxisResiduals::default(); 2];
    for axis in 0..2 {
        let r = pair_residuals(&build.global, &vander, axis, Some(&oracle[axis]));
        let (five, _) = five_sum_residual(&build.ops, &build.quad, &nodes.coords, p, axis);
        out[axis] = AxisResiduals {
            accuracy: r.accuracy,
            skew: skew_defect(build.global.s(axis)),
            boundary: r.boundary.unwrap_or(f64::NAN),
            five_sum: five,
        };
    }
    Ok(out)
}

pub fn dissipation_checks(diss: &DissipationOp, nodes: &[[f64; 2]], p: usize, probes: usize, seed: u64) -> DissipationChecks {
    let n = nodes.len();
    let v = global_vandermonde(nodes, p).values;
    let mut annihilation: f64 = 0.0;
    for j in 0..v.cols() {
        let col = v.column(j);
        annihilation = annihilation.max(max_abs(&diss.apply(&col)) / max_abs(&col).max(1e-300));
    }
    let at = diss.a.transpose();
    let ones = vec![1.0; n];
    let conservation = max_abs(&at.matvec(&ones));
    let mut asymmetry: f64 = 0.0;
    for i in 0..n {
        for (j, a) in diss.a.row(i) {
            asymmetry = asymmetry.max((a - at.get(i, j)).abs());
        }
    }
    let mut rng = Rng::new(seed);
    let mut min_rayleigh = f64::INFINITY;
    for _ in 0..probes {
        let u: Vec<f64> = (0..n).map(|_| rng.uniform(-1.0, 1.0)).collect();
        min_rayleigh = min_rayleigh.min(diss.energy(&u) / dot(&u, &u));
    }
    DissipationChecks { annihilation, conservation, min_rayleigh, asymmetry }
}
