//! Linear advection in skew-symmetric form with upwind boundary fluxes:
//! residual evaluation, steady solves, RK4 time stepping and error norms.

use alloc::boxed::Box;
use alloc::vec;
use alloc::vec::Vec;

use crate::assembly::GlobalOperators;
use crate::dissipation::DissipationOp;
use crate::linalg::dot;
use crate::sparse::{BandLu, Csr};
use crate::{Error, Point, Result};

pub type Field<'a> = Box<dyn Fn(Point) -> Point + 'a>;
pub type Data<'a> = Box<dyn Fn(Point, f64) -> f64 + 'a>;

/// Upwind data at one boundary quadrature point.
#[derive(Clone, Copy, Debug)]
struct FacePoint {
    x: Point,
    w: f64,
    lambda_n: f64,
}

pub struct AdvectionSystem<'a> {
    pub ops: &'a GlobalOperators,
    pub diss: Option<&'a DissipationOp>,
    pub nodes: &'a [Point],
    pub lx: Vec<f64>,
    pub ly: Vec<f64>,
    /// Inflow data `G(x, t)`.
    pub inflow: Data<'a>,
    /// Source `s(x, t)`, added as `M s`.
    pub source: Option<Data<'a>>,
    face_points: Vec<Vec<FacePoint>>,
}

impl<'a> AdvectionSystem<'a> {
    pub fn new(
        ops: &'a GlobalOperators,
        diss: Option<&'a DissipationOp>,
        nodes: &'a [Point],
        velocity: Field<'a>,
        inflow: Data<'a>,
        source: Option<Data<'a>>,
    ) -> Result<Self> {
        if nodes.len() != ops.len() {
            return Err(Error::Dimension { expected: ops.len(), got: nodes.len() });
        }
        let (lx, ly): (Vec<f64>, Vec<f64>) = nodes.iter().map(|&x| {
            let l = velocity(x);
            (l[0], l[1])
        }).unzip();
        let face_points = ops
            .boundary
            .iter()
            .map(|b| {
                b.points
                    .iter()
                    .zip(&b.weights)
                    .zip(&b.normals)
                    .map(|((&x, &w), n)| {
                        let l = velocity(x);
                        FacePoint { x, w, lambda_n: l[0] * n[0] + l[1] * n[1] }
                    })
                    .collect()
            })
            .collect();
        Ok(AdvectionSystem { ops, diss, nodes, lx, ly, inflow, source, face_points })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Terms linear in `u`: the skew volume part, `-A u` and the outflow flux.
    pub fn linear_residual(&self, u: &[f64]) -> Vec<f64> {
        let n = self.len();
        let mut r = vec![0.0; n];
        for (axis, lam) in [&self.lx, &self.ly].into_iter().enumerate() {
            let s = self.ops.s(axis);
            let su = s.matvec(u);
            let lu: Vec<f64> = lam.iter().zip(u).map(|(l, v)| l * v).collect();
            let slu = s.matvec(&lu);
            let eu = self.ops.apply_e(axis, u);
            let elu = self.ops.apply_e(axis, &lu);
            for i in 0..n {
                r[i] += -0.5 * lam[i] * su[i] - 0.5 * slu[i] - 0.25 * lam[i] * eu[i] + 0.25 * elu[i];
            }
        }
        if let Some(d) = self.diss {
            d.a.matvec_add(-1.0, u, &mut r);
        }
        for (b, pts) in self.ops.boundary.iter().zip(&self.face_points) {
            if pts.iter().all(|q| q.lambda_n <= 0.0) {
                continue;
            }
            let ub = b.interpolate(u);
            let w: Vec<f64> = pts
                .iter()
                .zip(&ub)
                .map(|(q, v)| if q.lambda_n > 0.0 { -0.5 * q.w * q.lambda_n * v } else { 0.0 })
                .collect();
            b.scatter_transpose(&w, &mut r);
        }
        r
    }

    /// Inflow flux and source at time `t`.
    pub fn forcing(&self, t: f64) -> Vec<f64> {
        let n = self.len();
        let mut r = vec![0.0; n];
        for (b, pts) in self.ops.boundary.iter().zip(&self.face_points) {
            if pts.iter().all(|q| q.lambda_n >= 0.0) {
                continue;
            }
            let w: Vec<f64> = pts
                .iter()
                .map(|q| if q.lambda_n < 0.0 { -0.5 * q.w * q.lambda_n * (self.inflow)(q.x, t) } else { 0.0 })
                .collect();
            b.scatter_transpose(&w, &mut r);
        }
        if let Some(s) = &self.source {
            for i in 0..n {
                r[i] += self.ops.m[i] * s(self.nodes[i], t);
            }
        }
        r
    }

    /// `M du/dt`.
    pub fn residual(&self, u: &[f64], t: f64) -> Result<Vec<f64>> {
        if u.len() != self.len() {
            return Err(Error::Dimension { expected: self.len(), got: u.len() });
        }
        let mut r = self.linear_residual(u);
        for (a, b) in r.iter_mut().zip(self.forcing(t)) {
            *a += b;
        }
        Ok(r)
    }

    /// Sparse matrix of [`linear_residual`](Self::linear_residual).
    pub fn linear_matrix(&self) -> Csr {
        let n = self.len();
        let mut trips = Vec::new();
        for (axis, lam) in [&self.lx, &self.ly].into_iter().enumerate() {
            for (i, row) in (0..n).map(|i| (i, self.ops.s(axis).upper.row(i))) {
                for (j, v) in row {
                    let c = -0.5 * v * (lam[i] + lam[j]);
                    trips.push((i, j, c));
                    trips.push((j, i, -c));
                }
            }
            for (i, j, e) in self.ops.materialize_e(axis).to_triplets() {
                trips.push((i, j, 0.25 * e * (lam[j] - lam[i])));
            }
        }
        if let Some(d) = self.diss {
            trips.extend(d.a.to_triplets().into_iter().map(|(i, j, v)| (i, j, -v)));
        }
        for (b, pts) in self.ops.boundary.iter().zip(&self.face_points) {
            for (k, q) in pts.iter().enumerate() {
                if q.lambda_n <= 0.0 {
                    continue;
                }
                let row = b.r.row(k);
                let c = -0.5 * q.w * q.lambda_n;
                for (a, &ga) in b.nodes.iter().enumerate() {
                    for (bb, &gb) in b.nodes.iter().enumerate() {
                        trips.push((ga, gb, c * row[a] * row[bb]));
                    }
                }
            }
        }
        Csr::from_triplets(n, n, &trips)
    }

    /// `sqrt(e^T M e)` for `e = u - exact(x_i)`; negative weights count
    /// with their sign, and a negative total is clamped to zero.
    pub fn l2_error(&self, u: &[f64], exact: impl Fn(Point) -> f64) -> f64 {
        let s: f64 = (0..self.len()).map(|i| {
            let e = u[i] - exact(self.nodes[i]);
            self.ops.m[i] * e * e
        }).sum();
        libm::sqrt(s.max(0.0))
    }

    /// `1/2 u^T M u`.
    pub fn energy(&self, u: &[f64]) -> f64 {
        0.5 * self.ops.m.iter().zip(u).map(|(m, v)| m * v * v).sum::<f64>()
    }
}

/// `sqrt(mean(m))`.
pub fn nominal_h(m: &[f64]) -> f64 {
    libm::sqrt(m.iter().sum::<f64>() / m.len().max(1) as f64)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnergySample {
    pub t: f64,
    /// `u^T r`
    pub rate: f64,
    /// `1/2 u^T M u`
    pub energy: f64,
}

#[derive(Clone, Debug, Default)]
pub struct SolveReport {
    pub l2_error: Option<f64>,
    pub h_nominal: f64,
    pub energy_trace: Vec<EnergySample>,
    pub steps: usize,
    pub dt: f64,
    pub spectral_radius: f64,
    /// `|L u + b| / |b|` for steady solves.
    pub linear_residual: f64,
}

/// Solve `L u + b = 0` for the steady problem (time argument 0).
pub fn solve_steady(sys: &AdvectionSystem) -> Result<(Vec<f64>, SolveReport)> {
    let l = sys.linear_matrix();
    let b = sys.forcing(0.0);
    let rhs: Vec<f64> = b.iter().map(|v| -v).collect();
    let bn = crate::linalg::norm2(&b);
    let mut report = SolveReport { h_nominal: nominal_h(&sys.ops.m), ..Default::default() };
    if bn == 0.0 {
        return Ok((vec![0.0; sys.len()], report));
    }
    let lu = BandLu::new(&l)?;
    let u = lu.solve(&rhs);
    let mut res = l.matvec(&u);
    for (a, v) in res.iter_mut().zip(&b) {
        *a += v;
    }
    report.linear_residual = crate::linalg::norm2(&res) / bn;
    if !report.linear_residual.is_finite() {
        return Err(Error::NonFinite(0));
    }
    Ok((u, report))
}

/// Spectral radius of `M^{-1} L` from the Ritz values of an Arnoldi
/// factorization of up to `max_dim` steps, stopping once successive
/// estimates agree to 1%.
pub fn spectral_radius(sys: &AdvectionSystem, max_dim: usize, seed: u64) -> f64 {
    let n = sys.len();
    let op = |v: &[f64]| -> Vec<f64> {
        let r = sys.linear_residual(v);
        r.iter().zip(&sys.ops.m).map(|(a, m)| a / m).collect()
    };
    let dim = max_dim.min(n).max(1);
    let mut rng = crate::geometry::Rng::new(seed);
    let mut q0: Vec<f64> = (0..n).map(|_| rng.uniform(-1.0, 1.0)).collect();
    let nrm = crate::linalg::norm2(&q0);
    q0.iter_mut().for_each(|v| *v /= nrm);
    let mut basis = vec![q0];
    let mut h = nalgebra::DMatrix::<f64>::zeros(dim + 1, dim);
    let mut last: f64 = 0.0;
    let mut rho = 0.0;
    for k in 0..dim {
        let mut w = op(&basis[k]);
        // two passes of modified Gram-Schmidt
        for _ in 0..2 {
            for (j, q) in basis.iter().enumerate() {
                let c = dot(q, &w);
                h[(j, k)] += c;
                w.iter_mut().zip(q).for_each(|(a, b)| *a -= c * b);
            }
        }
        let beta = crate::linalg::norm2(&w);
        h[(k + 1, k)] = beta;
        let m = k + 1;
        let check = m == dim || beta < 1e-12 || (m >= 20 && m % 10 == 0);
        if check {
            let hk = h.view((0, 0), (m, m)).into_owned();
            rho = hk.complex_eigenvalues().iter().map(|z| libm::hypot(z.re, z.im)).fold(0.0, f64::max);
            if beta < 1e-12 || m == dim || (m >= 40 && (rho - last).abs() <= 0.01 * rho) {
                break;
            }
            last = rho;
        }
        w.iter_mut().for_each(|v| *v /= beta);
        basis.push(w);
    }
    rho
}

#[derive(Clone, Copy, Debug)]
pub struct UnsteadyOptions {
    pub t_final: f64,
    /// Overrides `2 / rho`.
    pub dt: Option<f64>,
    pub arnoldi_dim: usize,
    pub record_energy: bool,
}

impl Default for UnsteadyOptions {
    fn default() -> Self {
        UnsteadyOptions { t_final: 1.0, dt: None, arnoldi_dim: 200, record_energy: true }
    }
}

/// Classical RK4 on `du/dt = M^{-1} r(u, t)` with `dt <= 2 / rho`.
pub fn solve_unsteady(sys: &AdvectionSystem, u0: &[f64], opts: &UnsteadyOptions) -> Result<(Vec<f64>, SolveReport)> {
    let n = sys.len();
    if u0.len() != n {
        return Err(Error::Dimension { expected: n, got: u0.len() });
    }
    if sys.ops.m.iter().any(|m| !(*m > 0.0)) {
        return Err(Error::InvalidParameter("time stepping needs a positive norm".into()));
    }
    let mut report = SolveReport { h_nominal: nominal_h(&sys.ops.m), ..Default::default() };
    let (steps, dt) = match opts.dt {
        Some(dt) if dt > 0.0 => ((opts.t_final / dt).ceil().max(1.0) as usize, dt),
        Some(_) => return Err(Error::InvalidParameter("time step must be positive".into())),
        None => {
            let rho = spectral_radius(sys, opts.arnoldi_dim, 1);
            report.spectral_radius = rho;
            if rho <= 0.0 {
                (1, opts.t_final)
            } else {
                let steps = (opts.t_final * rho / 2.0).ceil().max(1.0) as usize;
                (steps, opts.t_final / steps as f64)
            }
        }
    };
    report.steps = steps;
    report.dt = dt;
    let rate = |u: &[f64], t: f64| -> Result<Vec<f64>> {
        let r = sys.residual(u, t)?;
        Ok(r.iter().zip(&sys.ops.m).map(|(a, m)| a / m).collect())
    };
    let mut u = u0.to_vec();
    let axpy = |u: &[f64], a: f64, k: &[f64]| -> Vec<f64> { u.iter().zip(k).map(|(x, y)| x + a * y).collect() };
    for step in 0..steps {
        let t = step as f64 * dt;
        let k1 = rate(&u, t)?;
        if opts.record_energy {
            let r: f64 = (0..n).map(|i| u[i] * sys.ops.m[i] * k1[i]).sum();
            report.energy_trace.push(EnergySample { t, rate: r, energy: sys.energy(&u) });
        }
        let k2 = rate(&axpy(&u, 0.5 * dt, &k1), t + 0.5 * dt)?;
        let k3 = rate(&axpy(&u, 0.5 * dt, &k2), t + 0.5 * dt)?;
        let k4 = rate(&axpy(&u, dt, &k3), t + dt)?;
        for i in 0..n {
            u[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        if u.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(step));
        }
    }
    Ok((u, report))
}

/// Velocity of the annulus vortex, `[-y, x] / (2 r^2)`.
pub fn vortex_velocity([x, y]: Point) -> Point {
    let r2 = x * x + y * y;
    [-y / (2.0 * r2), x / (2.0 * r2)]
}

/// Gaussian bump `exp(-4 |x - (3/4, 0)|^2)`.
pub fn vortex_initial([x, y]: Point) -> f64 {
    libm::exp(-4.0 * ((x - 0.75) * (x - 0.75) + y * y))
}

/// Exact vortex solution: rotate back by `t / (2 r^2)`.
pub fn vortex_exact([x, y]: Point, t: f64) -> f64 {
    let r2 = x * x + y * y;
    let a = -t / (2.0 * r2);
    let (s, c) = (libm::sin(a), libm::cos(a));
    vortex_initial([c * x - s * y, s * x + c * y])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{make_geometry, sample_nodes, GeometryKind, Resolution, Rng, SamplerConfig};
    use crate::pipeline::{build, Build, BuildOptions};

    fn setup(kind: GeometryKind, res: Resolution, p: usize) -> (Build, Vec<Point>) {
        let geo = make_geometry(kind).unwrap();
        let ns = sample_nodes(&SamplerConfig::new(res, 4), &geo).unwrap();
        let b = build(&geo, &ns, &BuildOptions::new(p), &mut |_| {}).unwrap();
        assert!(b.feasible());
        (b, ns.coords)
    }

    fn exp_sol(x: Point) -> f64 {
        libm::exp(x[0] + x[1])
    }

    #[test]
    fn matrix_matches_residual() {
        let (b, nodes) = setup(GeometryKind::BoxCircle, Resolution::Square(10), 2);
        let sys = AdvectionSystem::new(&b.global, Some(&b.diss), &nodes, Box::new(|x| [1.0 + x[1], 0.5 - x[0]]), Box::new(|_, _| 0.0), None).unwrap();
        let l = sys.linear_matrix();
        let mut rng = Rng::new(2);
        let u: Vec<f64> = (0..nodes.len()).map(|_| rng.uniform(-1.0, 1.0)).collect();
        let a = l.matvec(&u);
        let r = sys.linear_residual(&u);
        let scale = crate::linalg::max_abs(&r);
        for (x, y) in a.iter().zip(&r) {
            assert!((x - y).abs() < 1e-12 * scale);
        }
    }

    #[test]
    fn trivial_cases() {
        let (b, nodes) = setup(GeometryKind::BoxCircle, Resolution::Square(8), 1);
        let sys = AdvectionSystem::new(&b.global, None, &nodes, Box::new(|_| [0.0, 0.0]), Box::new(|_, _| 1.0), None).unwrap();
        let u: Vec<f64> = nodes.iter().map(|&x| exp_sol(x)).collect();
        assert!(sys.residual(&u, 0.0).unwrap().iter().all(|v| *v == 0.0));
        let (us, _) = solve_steady(&sys).unwrap();
        assert!(us.iter().all(|v| *v == 0.0));
        let (uf, rep) = solve_unsteady(&sys, &u, &UnsteadyOptions { t_final: 0.3, dt: Some(0.1), ..Default::default() }).unwrap();
        assert_eq!(uf, u);
        assert_eq!(rep.steps, 3);
        assert!(sys.residual(&u[1..], 0.0).is_err());
    }

    #[test]
    fn vortex_skew_energy() {
        let (b, nodes) = setup(GeometryKind::Annulus, Resolution::Polar { n_r: 6, n_theta: 36 }, 2);
        let sys = AdvectionSystem::new(&b.global, None, &nodes, Box::new(vortex_velocity), Box::new(|_, _| 0.0), None).unwrap();
        let mut rng = Rng::new(8);
        for _ in 0..5 {
            let u: Vec<f64> = (0..nodes.len()).map(|_| rng.uniform(-1.0, 1.0)).collect();
            let r = sys.residual(&u, 0.0).unwrap();
            assert!(dot(&u, &r).abs() <= 1e-12 * dot(&u, &u), "{}", dot(&u, &r));
        }
        let sys = AdvectionSystem::new(&b.global, Some(&b.diss), &nodes, Box::new(vortex_velocity), Box::new(|_, _| 0.0), None).unwrap();
        let u: Vec<f64> = nodes.iter().map(|&x| vortex_initial(x)).collect();
        assert!(dot(&u, &sys.residual(&u, 0.0).unwrap()) < 0.0);
    }

    #[test]
    fn vortex_exact_properties() {
        assert_eq!(vortex_exact([0.7, 0.2], 0.0), vortex_initial([0.7, 0.2]));
        let r = core::f64::consts::FRAC_1_SQRT_2;
        let x = [r * 0.6, r * 0.8];
        let two_pi = 2.0 * core::f64::consts::PI;
        assert!((vortex_exact(x, two_pi) - vortex_initial(x)).abs() < 1e-14);
        let v = vortex_velocity([0.3, 0.4]);
        assert!((v[0] * 0.3 + v[1] * 0.4).abs() < 1e-16);
    }

    #[test]
    fn steady_exp_converges() {
        let geo = make_geometry(GeometryKind::BoxCircle).unwrap();
        let mut errs = Vec::new();
        for nx in [10, 20] {
            let ns = sample_nodes(&SamplerConfig::new(Resolution::Square(nx), 1), &geo).unwrap();
            let b = build(&geo, &ns, &BuildOptions::new(2), &mut |_| {}).unwrap();
            let sys = AdvectionSystem::new(
                &b.global,
                Some(&b.diss),
                &ns.coords,
                Box::new(|_| [1.0, 1.0]),
                Box::new(|x, _| exp_sol(x)),
                Some(Box::new(|x, _| 2.0 * exp_sol(x))),
            )
            .unwrap();
            let (u, rep) = solve_steady(&sys).unwrap();
            assert!(rep.linear_residual < 1e-12, "{}", rep.linear_residual);
            errs.push((rep.h_nominal, sys.l2_error(&u, exp_sol)));
        }
        let rate = libm::log(errs[0].1 / errs[1].1) / libm::log(errs[0].0 / errs[1].0);
        assert!(rate > 2.3, "{errs:?} rate {rate}");
    }
}
