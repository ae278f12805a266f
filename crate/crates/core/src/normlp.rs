//! The norm inequality `m_min + Z y >= tau` and its interior-point solve.
//!
//! The verdict comes from maximizing a margin `t <= 1` subject to
//! `m_min + Z y >= (1 + t) tau`, which is always feasible, with a tiny
//! `|y|^2` term to keep it strictly convex. A negative optimal margin
//! yields multipliers `w >= 0` with `Z^T w ~ 0` that certify infeasibility.
//! Feasible problems are then re-solved for the least-norm `y`. Every
//! Newton step is an `N x N` sparse solve with `Z Z^T + diag`.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::assembly::{assemble, GlobalOperators};
use crate::cellops::{CellOperator, MeshQuadrature};
use crate::geometry::{stretch_derivative, Geometry, NodeSet, Resolution, Shape};
use crate::linalg::{dot, max_abs};
use crate::sparse::{Csr, EnvelopeCholesky};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum TauRegime {
    /// `1 / n_x^2`
    Large,
    /// `1 / (10 n_x)^2`
    Small,
    /// `1 / (100 n_x)^2`
    Tiny,
    /// One tenth of a nominal node volume for the geometry.
    Auto,
}

impl TauRegime {
    pub fn name(&self) -> &'static str {
        match self {
            TauRegime::Large => "large",
            TauRegime::Small => "small",
            TauRegime::Tiny => "tiny",
            TauRegime::Auto => "auto",
        }
    }
}

/// Lower bounds on the weights. The `Large/Small/Tiny` regimes need a
/// square lattice; `Auto` uses the per-geometry node-volume estimates and
/// falls back to a tenth of the mean area per node.
pub fn default_tau(geo: &Geometry, nodes: &NodeSet, regime: TauRegime) -> Result<Vec<f64>> {
    let n = nodes.len();
    if n == 0 {
        return Err(Error::NoNodes);
    }
    let square = |scale: f64| -> Result<Vec<f64>> {
        match nodes.config.resolution {
            Resolution::Square(nx) => Ok(vec![1.0 / (scale * nx as f64).powi(2); n]),
            r => Err(Error::InvalidParameter(alloc::format!("tau regime needs a square lattice, got {r:?}"))),
        }
    };
    match regime {
        TauRegime::Large => return square(1.0),
        TauRegime::Small => return square(10.0),
        TauRegime::Tiny => return square(100.0),
        TauRegime::Auto => {}
    }
    match (&geo.shape, nodes.config.resolution) {
        (Shape::Annulus, Resolution::Polar { n_r, n_theta }) => {
            let drho = 1.0 / n_r as f64;
            let dtheta = 2.0 * core::f64::consts::PI / n_theta as f64;
            Ok(nodes
                .coords
                .iter()
                .zip(&nodes.lattice)
                .map(|(x, &(j, _))| {
                    let dr = stretch_derivative(nodes.config.beta, (j as f64 - 0.5) * drho) * drho;
                    0.1 * dr * libm::hypot(x[0], x[1]) * dtheta
                })
                .collect())
        }
        (Shape::Airfoil, Resolution::Airfoil(ny)) => Ok(vec![0.1 / (5.0 * ny as f64).powi(2); n]),
        (Shape::Conic { .. }, Resolution::Square(_)) => square(10.0),
        _ => {
            let area = geo.exact_area().unwrap_or(geo.width(0) * geo.width(1));
            Ok(vec![0.1 * area / n as f64; n])
        }
    }
}

#[derive(Clone, Debug)]
pub struct NormProblem {
    pub m_min: Vec<f64>,
    /// `N x N_y`, one block of columns per cell.
    pub z: Csr,
    pub tau: Vec<f64>,
    /// `(operator index, local column)` of each column of `z`.
    pub column_map: Vec<(usize, usize)>,
    /// First column of each operator's block; length `ops.len() + 1`.
    pub offsets: Vec<usize>,
}

impl NormProblem {
    pub fn n_y(&self) -> usize {
        self.z.ncols
    }

    pub fn weights(&self, y: &[f64]) -> Vec<f64> {
        let mut m = self.m_min.clone();
        if !y.is_empty() {
            self.z.matvec_add(1.0, y, &mut m);
        }
        m
    }
}

pub fn build_problem(ops: &[CellOperator], n: usize, tau: Vec<f64>) -> Result<NormProblem> {
    if tau.len() != n {
        return Err(Error::Dimension { expected: n, got: tau.len() });
    }
    if tau.iter().any(|t| !(*t >= 0.0) || !t.is_finite()) {
        return Err(Error::InvalidParameter("tolerances must be finite and nonnegative".into()));
    }
    let mut m_min = vec![0.0; n];
    let mut trips = Vec::new();
    let mut column_map = Vec::new();
    let mut offsets = vec![0];
    for (k, op) in ops.iter().enumerate() {
        let z = &op.norm.z;
        let base = column_map.len();
        for (a, &g) in op.nodes.iter().enumerate() {
            m_min[g] += op.norm.m_min[a];
            for j in 0..z.cols() {
                trips.push((g, base + j, z[(a, j)]));
            }
        }
        for j in 0..z.cols() {
            column_map.push((k, j));
        }
        offsets.push(column_map.len());
    }
    let z = Csr::from_triplets(n, column_map.len(), &trips);
    Ok(NormProblem { m_min, z, tau, column_map, offsets })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NormStatus {
    Feasible,
    /// The optimal margin is negative; see [`Certificate`].
    Infeasible,
    /// Iteration cap or numerical trouble.
    Undetermined,
}

impl NormStatus {
    pub fn name(&self) -> &'static str {
        match self {
            NormStatus::Feasible => "feasible",
            NormStatus::Infeasible => "infeasible",
            NormStatus::Undetermined => "undetermined",
        }
    }
}

/// Multipliers `w >= 0` with `Z^T w ~ 0` and positive `gap = (tau - m_min)^T w`.
/// Any feasible `y` must satisfy `|y|_2 >= gap / |Z^T w|_2 = radius`, so the
/// certificate is exact when `zt_w` is zero and rules out every `y` of
/// norm below `radius` otherwise.
#[derive(Clone, Debug)]
pub struct Certificate {
    /// Normalized to `tau^T w = 1`.
    pub w: Vec<f64>,
    /// `|Z^T w|_2`
    pub zt_w: f64,
    pub gap: f64,
    pub radius: f64,
}

#[derive(Clone, Debug)]
pub struct NormSolution {
    pub status: NormStatus,
    pub y: Vec<f64>,
    pub m: Vec<f64>,
    pub iterations: usize,
    /// `min(m / tau) - 1` when feasible; otherwise the last margin `t` of
    /// the verdict phase (`NaN` if it never ran).
    pub margin: f64,
    pub certificate: Option<Certificate>,
    pub message: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NormObjective {
    /// Feasible `y` of minimum Euclidean norm.
    MinNorm,
    /// The first feasible iterate of the margin problem.
    Margin,
}

#[derive(Clone, Copy, Debug)]
pub struct IpmOptions {
    pub max_iterations: usize,
    pub tolerance: f64,
    /// Weight of `|y|^2 / 2` in the margin problem, in units scaled by the
    /// mean tolerance.
    pub regularization: f64,
    /// Re-solves with the regularization cut 100-fold before a negative
    /// margin is reported as infeasible.
    pub continuation: usize,
    pub objective: NormObjective,
}

impl Default for IpmOptions {
    fn default() -> Self {
        IpmOptions { max_iterations: 500, tolerance: 1e-10, regularization: 1e-8, continuation: 3, objective: NormObjective::MinNorm }
    }
}

fn feasible_within(m: &[f64], tau: &[f64]) -> bool {
    let tol = 1e-9 * max_abs(tau);
    m.iter().zip(tau).all(|(a, t)| *a >= t - tol)
}

fn step_to_boundary(v: &[f64], dv: &[f64]) -> f64 {
    let mut a: f64 = 1.0;
    for (x, d) in v.iter().zip(dv) {
        if *d < 0.0 {
            a = a.min(-x / d);
        }
    }
    a
}

/// Normal matrix `K = Z Z^T / gamma + diag(s / lam)`, optionally plus the
/// rank-one margin column `u u^T / delta` with `u = (tau, 1)`.
struct Newton<'a> {
    zzt: Csr,
    diag_pos: Vec<usize>,
    chol: EnvelopeCholesky,
    gamma: f64,
    delta: f64,
    tau: &'a [f64],
}

impl<'a> Newton<'a> {
    fn new(z: &Csr, tau: &'a [f64], gamma: f64, delta: f64) -> Self {
        let n = z.nrows;
        let mut trips: Vec<(usize, usize, f64)> = (0..n).map(|i| (i, i, 0.0)).collect();
        let zt = z.transpose();
        for col in 0..zt.nrows {
            let entries: Vec<(usize, f64)> = zt.row(col).collect();
            for &(i, a) in &entries {
                for &(j, b) in &entries {
                    trips.push((i, j, a * b));
                }
            }
        }
        let zzt = Csr::from_triplets(n, n, &trips);
        let diag_pos = (0..n)
            .map(|i| {
                let r = zzt.indptr[i]..zzt.indptr[i + 1];
                r.start + zzt.indices[r].binary_search(&i).expect("diagonal present")
            })
            .collect();
        let chol = EnvelopeCholesky::analyze(&zzt);
        Newton { zzt, diag_pos, chol, gamma, delta, tau }
    }

    /// Factor `gamma K0`.
    fn factor(&mut self, s: &[f64], lam: &[f64]) -> Result<()> {
        let mut k = self.zzt.clone();
        for (i, &p) in self.diag_pos.iter().enumerate() {
            k.values[p] += self.gamma * (s[i] / lam[i]) + 1e-14;
        }
        self.chol.factor(&k, 1e-300)?;
        Ok(())
    }

    fn k0_solve(&self, v: &[f64]) -> Vec<f64> {
        let mut y = self.chol.solve(v);
        y.iter_mut().for_each(|a| *a *= self.gamma);
        y
    }

    /// Solve with `K0 + u u^T / delta`; `kr` is the slack ratio of `t <= 1`.
    fn solve_margin(&self, v: &[f64], vr: f64, kr: f64) -> (Vec<f64>, f64) {
        let a = self.k0_solve(v);
        let ar = vr / kr;
        let b = self.k0_solve(self.tau);
        let br = 1.0 / kr;
        let ua: f64 = dot(self.tau, &a) + ar;
        let ub: f64 = dot(self.tau, &b) + br;
        let f = ua / (self.delta + ub);
        let out: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x - f * y).collect();
        (out, ar - f * br)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum End {
    /// `check` accepted an iterate.
    Accepted,
    Converged,
    Cap,
    Numerical,
}

struct Run {
    y: Vec<f64>,
    t: f64,
    lam: Vec<f64>,
    iterations: usize,
    end: End,
}

/// Mehrotra predictor-corrector on
/// `min gamma/2 |y|^2 - t  s.t.  Z y - tau t >= c,  t <= 1` (`margin`) or
/// `min |y|^2 / 2  s.t.  Z y >= c`.
fn ipm(z: &Csr, tau: &[f64], c: &[f64], margin: bool, gamma: f64, opts: &IpmOptions, check: &dyn Fn(&[f64]) -> bool) -> Run {
    let n = c.len();
    let ny = z.ncols;
    let mut newton = Newton::new(z, tau, gamma, 1e-8);
    let mut y = vec![0.0; ny];
    let (mut t, mut s) = if margin {
        let worst = c.iter().zip(tau).map(|(ci, ti)| ci / ti.max(1e-300)).fold(f64::NEG_INFINITY, f64::max);
        let t = (-worst - 1.0).min(0.0);
        (t, c.iter().zip(tau).map(|(ci, ti)| (-ti * t - ci).max(1.0)).collect::<Vec<_>>())
    } else {
        (0.0, c.iter().map(|ci| (-ci).max(1.0)).collect())
    };
    let mut r = (1.0 - t).max(1.0);
    let mut lam = vec![1.0; n];
    let mut lam_r = 1.0;
    let cnorm = 1.0 + max_abs(c);
    let mf = if margin { 1.0 } else { 0.0 };
    let pairs = (n + margin as usize) as f64;
    let finish = |y: Vec<f64>, t, lam, iterations, end| Run { y, t, lam, iterations, end };

    for it in 1..=opts.max_iterations {
        let mut rp = z.matvec(&y);
        for i in 0..n {
            rp[i] -= mf * tau[i] * t + s[i] + c[i];
        }
        let rpr = mf * (-t - r + 1.0);
        let ztl = z.tr_matvec(&lam);
        let rdy: Vec<f64> = y.iter().zip(&ztl).map(|(a, b)| gamma * a - b).collect();
        let rdt = mf * (-1.0 + dot(tau, &lam) + lam_r);
        let mu = (dot(&s, &lam) + mf * r * lam_r) / pairs;

        if check(&y) {
            return finish(y, t, lam, it, End::Accepted);
        }
        let pres = max_abs(&rp).max(rpr.abs()) / cnorm;
        let dres = max_abs(&rdy).max(rdt.abs()) / (1.0 + max_abs(&ztl));
        if pres < opts.tolerance && dres < opts.tolerance && mu < opts.tolerance * (1.0 + t.abs()) {
            return finish(y, t, lam, it, End::Converged);
        }
        if newton.factor(&s, &lam).is_err() {
            return finish(y, t, lam, it, End::Numerical);
        }
        let kr = r / lam_r;
        let delta = newton.delta;

        let direction = |rcs: &[f64], rcr: f64| {
            // K dlam = Lam^{-1} rc + A H^{-1} r_d - r_p
            let zr = z.matvec(&rdy.iter().map(|v| v / gamma).collect::<Vec<_>>());
            let v: Vec<f64> = (0..n).map(|i| rcs[i] / lam[i] + zr[i] - mf * tau[i] * rdt / delta - rp[i]).collect();
            let (dl, dlr) = if margin {
                newton.solve_margin(&v, rcr / lam_r - rdt / delta - rpr, kr)
            } else {
                (newton.k0_solve(&v), 0.0)
            };
            let ztdl = z.tr_matvec(&dl);
            let dy: Vec<f64> = ztdl.iter().zip(&rdy).map(|(a, b)| (a - b) / gamma).collect();
            let dt = if margin { (-dot(tau, &dl) - dlr - rdt) / delta } else { 0.0 };
            let zdy = z.matvec(&dy);
            let ds: Vec<f64> = (0..n).map(|i| zdy[i] - mf * tau[i] * dt + rp[i]).collect();
            let dr = mf * (-dt + rpr);
            (dy, dt, ds, dr, dl, dlr)
        };
        let steps = |ds: &[f64], dr: f64, dl: &[f64], dlr: f64| {
            let mut ap = step_to_boundary(&s, ds);
            let mut ad = step_to_boundary(&lam, dl);
            if margin {
                ap = ap.min(if dr < 0.0 { -r / dr } else { 1.0 });
                ad = ad.min(if dlr < 0.0 { -lam_r / dlr } else { 1.0 });
            }
            (ap, ad)
        };

        let rcs: Vec<f64> = (0..n).map(|i| -s[i] * lam[i]).collect();
        let (_, _, ds_a, dr_a, dl_a, dlr_a) = direction(&rcs, -r * lam_r);
        let (ap, ad) = steps(&ds_a, dr_a, &dl_a, dlr_a);
        let mu_aff = ((0..n).map(|i| (s[i] + ap * ds_a[i]) * (lam[i] + ad * dl_a[i])).sum::<f64>()
            + mf * (r + ap * dr_a) * (lam_r + ad * dlr_a))
            / pairs;
        let sigma = (mu_aff / mu).powi(3).clamp(0.0, 1.0);

        let rcs: Vec<f64> = (0..n).map(|i| -s[i] * lam[i] - ds_a[i] * dl_a[i] + sigma * mu).collect();
        let rcr = -r * lam_r - dr_a * dlr_a + sigma * mu;
        let (dy, dt, ds, dr, dl, dlr) = direction(&rcs, rcr);
        let (ap, ad) = steps(&ds, dr, &dl, dlr);
        let (ap, ad) = (0.995 * ap, 0.995 * ad);
        if !(ap.is_finite() && ad.is_finite()) || dy.iter().any(|v| !v.is_finite()) {
            return finish(y, t, lam, it, End::Numerical);
        }
        y.iter_mut().zip(&dy).for_each(|(a, d)| *a += ap * d);
        s.iter_mut().zip(&ds).for_each(|(a, d)| *a += ap * d);
        lam.iter_mut().zip(&dl).for_each(|(a, d)| *a += ad * d);
        if margin {
            t += ap * dt;
            r += ap * dr;
            lam_r += ad * dlr;
        }
    }
    finish(y, t, lam, opts.max_iterations, End::Cap)
}

/// Solve the norm inequality. A returned `Feasible` status is verified
/// directly: `m >= tau - 1e-9 max(tau)` holds for the returned `m`.
///
/// The verdict comes from the margin problem, stopped at its first
/// feasible iterate. With [`NormObjective::MinNorm`] a second solve then
/// looks for the feasible `y` of least norm, which keeps the cell weights
/// `m_min^c + Z^c y^c` close to the minimum-norm ones.
pub fn solve_norm(problem: &NormProblem, opts: &IpmOptions) -> NormSolution {
    let n = problem.m_min.len();
    let ny = problem.n_y();
    let done = |status, y: Vec<f64>, iterations, margin: f64, certificate, message: &str| {
        let m = problem.weights(&y);
        // the verdict iterate's t lags its slacks; report what m achieves
        let margin = if status == NormStatus::Feasible {
            m.iter().zip(&problem.tau).map(|(m, t)| m / t - 1.0).fold(f64::INFINITY, f64::min)
        } else {
            margin
        };
        NormSolution { status, y, m, iterations, margin, certificate, message: message.into() }
    };
    if feasible_within(&problem.m_min, &problem.tau) {
        return done(NormStatus::Feasible, vec![0.0; ny], 0, f64::NAN, None, "m_min already feasible");
    }
    let scale = problem.tau.iter().sum::<f64>() / n as f64;
    if !(scale > 0.0) {
        return done(NormStatus::Undetermined, vec![0.0; ny], 0, f64::NAN, None, "tolerances are all zero");
    }
    let tau: Vec<f64> = problem.tau.iter().map(|t| t / scale).collect();
    let c: Vec<f64> = problem.tau.iter().zip(&problem.m_min).map(|(t, m)| (t - m) / scale).collect();
    let unscale = |y: &[f64]| -> Vec<f64> { y.iter().map(|v| v * scale).collect() };
    let check = |y: &[f64]| feasible_within(&problem.weights(&unscale(y)), &problem.tau);

    // A negative margin can come from the |y|^2 term alone when feasible
    // points need a large y; only a margin that stays negative as the
    // weight shrinks is taken as infeasibility.
    let mut gamma = opts.regularization;
    let mut iterations = 0;
    let mut a = ipm(&problem.z, &tau, &c, true, gamma, opts, &check);
    for _ in 0..opts.continuation {
        if !(a.end == End::Converged && a.t < -1e-6) {
            break;
        }
        gamma *= 1e-2;
        iterations += a.iterations;
        a = ipm(&problem.z, &tau, &c, true, gamma, opts, &check);
    }
    a.iterations += iterations;
    let ya = unscale(&a.y);
    match a.end {
        End::Accepted => {}
        End::Converged if a.t < -1e-6 => {
            let tw = dot(&tau, &a.lam);
            let w: Vec<f64> = a.lam.iter().map(|v| v / tw.max(1e-300)).collect();
            let zt_w = crate::linalg::norm2(&problem.z.tr_matvec(&w));
            let gap: f64 = problem.tau.iter().zip(&problem.m_min).zip(&w).map(|((t, m), w)| (t - m) * w).sum();
            let radius = if zt_w > 0.0 { gap / zt_w } else { f64::INFINITY };
            let msg = if gap > 0.0 { "negative optimal margin" } else { "negative margin, weak certificate" };
            let cert = Certificate { w, zt_w, gap, radius };
            return done(NormStatus::Infeasible, ya, a.iterations, a.t, Some(cert), msg);
        }
        End::Converged => return done(NormStatus::Undetermined, ya, a.iterations, a.t, None, "margin at zero within tolerance"),
        End::Cap => return done(NormStatus::Undetermined, ya, a.iterations, a.t, None, "iteration cap reached"),
        End::Numerical => return done(NormStatus::Undetermined, ya, a.iterations, a.t, None, "numerical breakdown"),
    }
    if opts.objective == NormObjective::Margin {
        return done(NormStatus::Feasible, ya, a.iterations, a.t, None, "feasible margin iterate");
    }
    let b = ipm(&problem.z, &tau, &c, false, 1.0, opts, &|_| false);
    let yb = unscale(&b.y);
    let iterations = a.iterations + b.iterations;
    if b.end == End::Converged && check(&b.y) {
        done(NormStatus::Feasible, yb, iterations, a.t, None, "minimum-norm feasible point")
    } else {
        done(NormStatus::Feasible, ya, iterations, a.t, None, "feasible margin iterate (minimum-norm solve failed)")
    }
}

/// Push `y` into the cell operators, rebuild their skew parts and reassemble.
pub fn finalize_norm(
    ops: &mut [CellOperator],
    problem: &NormProblem,
    y: &[f64],
    quad: &MeshQuadrature,
    p: usize,
) -> Result<GlobalOperators> {
    if y.len() != problem.n_y() {
        return Err(Error::Dimension { expected: problem.n_y(), got: y.len() });
    }
    for (k, op) in ops.iter_mut().enumerate() {
        let yk = &y[problem.offsets[k]..problem.offsets[k + 1]];
        let m = op.weights_for(yk);
        op.set_norm(&m);
    }
    assemble(problem.m_min.len(), p, ops, quad)
}
