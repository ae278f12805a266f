//! Quadrature on uncut and cut rectangles, faces and level-set curves.
//!
//! Cut rectangles use a 2D height-function reduction: pick an axis along
//! which `phi` is monotone, integrate exactly in that direction between the
//! box edge and the root, and use Gauss points along the other (base) axis.
//! The curve rule shares the base points with the volume rule, so the
//! discrete divergence theorem holds to the accuracy of the base rule.

use alloc::vec;
use alloc::vec::Vec;

use crate::geometry::LevelSet;
use crate::{Error, Point, Result};

/// Gauss–Legendre points and weights on `[-1, 1]`, by Newton iteration.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "gauss_legendre needs n >= 1");
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut z = libm::cos(core::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5));
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre(n, z);
            dp = d;
            let dz = p / d;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre(n, z);
        if d != 0.0 {
            dp = d;
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    if n % 2 == 1 {
        x[n / 2] = 0.0;
    }
    (x, w)
}

/// `P_n(z)` and `P_n'(z)`.
fn legendre(n: usize, z: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = z;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * z * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (z * p1 - p0) / (z * z - 1.0);
    (p1, d)
}

/// Gauss rule mapped to `[a, b]`.
pub fn gauss_on(n: usize, a: f64, b: f64) -> (Vec<f64>, Vec<f64>) {
    let (x, w) = gauss_legendre(n);
    let h = 0.5 * (b - a);
    let c = 0.5 * (a + b);
    (x.iter().map(|t| c + h * t).collect(), w.iter().map(|t| h * t).collect())
}

/// Axis-aligned rectangle `[lo, hi]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rect {
    pub lo: Point,
    pub hi: Point,
}

impl Rect {
    pub fn new(lo: Point, hi: Point) -> Self {
        Rect { lo, hi }
    }
    pub fn width(&self, d: usize) -> f64 {
        self.hi[d] - self.lo[d]
    }
    pub fn area(&self) -> f64 {
        self.width(0) * self.width(1)
    }
    pub fn center(&self) -> Point {
        [0.5 * (self.lo[0] + self.hi[0]), 0.5 * (self.lo[1] + self.hi[1])]
    }
    pub fn diagonal(&self) -> f64 {
        libm::hypot(self.width(0), self.width(1))
    }
    fn split(&self, d: usize) -> (Rect, Rect) {
        let mid = 0.5 * (self.lo[d] + self.hi[d]);
        let mut a = *self;
        let mut b = *self;
        a.hi[d] = mid;
        b.lo[d] = mid;
        (a, b)
    }
}

/// Points with positive weights; boundary rules also carry unit normals.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct QuadRule {
    pub points: Vec<Point>,
    pub weights: Vec<f64>,
    /// Empty for volume rules.
    pub normals: Vec<Point>,
}

impl QuadRule {
    pub fn len(&self) -> usize {
        self.points.len()
    }
    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
    pub fn integrate(&self, f: impl Fn(Point) -> f64) -> f64 {
        self.points.iter().zip(&self.weights).map(|(&p, &w)| w * f(p)).sum()
    }
    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }
    fn append(&mut self, other: QuadRule) {
        self.points.extend(other.points);
        self.weights.extend(other.weights);
        self.normals.extend(other.normals);
    }
}

/// Gauss points per axis for a rule exact to `degree`.
pub fn points_for_degree(degree: usize) -> usize {
    (degree + 2) / 2
}

/// Extra base-axis points used on cut rectangles, where the integrand in the
/// base variable is smooth but not polynomial.
pub const CUT_EXTRA_POINTS: usize = 6;

/// Tensor Gauss rule exact to total degree `degree` on an uncut rectangle.
pub fn tensor_rule(rect: &Rect, degree: usize) -> QuadRule {
    let q = points_for_degree(degree);
    let (xs, wx) = gauss_on(q, rect.lo[0], rect.hi[0]);
    let (ys, wy) = gauss_on(q, rect.lo[1], rect.hi[1]);
    let mut rule = QuadRule::default();
    for (y, wyv) in ys.iter().zip(&wy) {
        for (x, wxv) in xs.iter().zip(&wx) {
            rule.points.push([*x, *y]);
            rule.weights.push(wxv * wyv);
        }
    }
    rule
}

/// Roots of `f` on `[a, b]`: sign changes over `samples` uniform intervals,
/// bisection to `1e-8` relative width, then safeguarded Newton to `1e-13`.
pub fn roots_on_interval(f: &dyn Fn(f64) -> (f64, f64), a: f64, b: f64, samples: usize) -> Vec<f64> {
    let mut roots = Vec::new();
    let n = samples.max(1);
    let len = b - a;
    let mut t0 = a;
    let mut f0 = f(a).0;
    for i in 1..=n {
        let t1 = if i == n { b } else { a + len * i as f64 / n as f64 };
        let f1 = f(t1).0;
        if f0 == 0.0 && i == 1 {
            // root exactly at the left end: endpoint, not an interior crossing
        }
        if (f0 < 0.0 && f1 > 0.0) || (f0 > 0.0 && f1 < 0.0) {
            roots.push(refine_root(f, t0, t1, f0, len));
        } else if f1 == 0.0 && i < n {
            roots.push(t1);
        }
        t0 = t1;
        f0 = f1;
    }
    roots.dedup_by(|x, y| (*x - *y).abs() <= 1e-14 * len.abs());
    roots
}

fn refine_root(f: &dyn Fn(f64) -> (f64, f64), mut lo: f64, mut hi: f64, flo: f64, scale: f64) -> f64 {
    let neg_lo = flo < 0.0;
    while hi - lo > 1e-8 * scale.abs() {
        let mid = 0.5 * (lo + hi);
        let fm = f(mid).0;
        if fm == 0.0 {
            return mid;
        }
        if (fm < 0.0) == neg_lo {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mut t = 0.5 * (lo + hi);
    for _ in 0..30 {
        let (v, d) = f(t);
        if v == 0.0 {
            return t;
        }
        if (v < 0.0) == neg_lo {
            lo = t;
        } else {
            hi = t;
        }
        let mut next = if d != 0.0 { t - v / d } else { f64::NAN };
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        let step = (next - t).abs();
        t = next;
        if step <= 1e-13 * scale.abs() || hi - lo <= 1e-15 * scale.abs() {
            break;
        }
    }
    t
}

/// Rule on the `phi > 0` part of the segment `{x_axis = c, other in [a, b]}`.
/// Normals are the `+axis` unit vector. With `cut = false` the whole segment
/// is used.
pub fn face_rule(geo: &dyn LevelSet, axis: usize, c: f64, a: f64, b: f64, degree: usize, cut: bool) -> QuadRule {
    let n = points_for_degree(degree + 1).max(1);
    let mut unit = [0.0; 2];
    unit[axis] = 1.0;
    let other = 1 - axis;
    let at = |t: f64| {
        let mut p = [0.0; 2];
        p[axis] = c;
        p[other] = t;
        p
    };
    let mut pieces = Vec::new();
    if cut {
        let f = |t: f64| {
            let p = at(t);
            (geo.phi(p), geo.grad(p)[other])
        };
        let roots = roots_on_interval(&f, a, b, 32);
        let mut knots = vec![a];
        knots.extend(roots.iter().copied().filter(|&r| r > a && r < b));
        knots.push(b);
        for w in knots.windows(2) {
            if w[1] - w[0] <= 1e-14 * (b - a) {
                continue;
            }
            if geo.phi(at(0.5 * (w[0] + w[1]))) > 0.0 {
                pieces.push((w[0], w[1]));
            }
        }
    } else {
        pieces.push((a, b));
    }
    let mut rule = QuadRule::default();
    for (s0, s1) in pieces {
        let (ts, ws) = gauss_on(n, s0, s1);
        for (t, w) in ts.into_iter().zip(ws) {
            rule.points.push(at(t));
            rule.weights.push(w);
            rule.normals.push(unit);
        }
    }
    rule
}

/// Live `phi > 0` sub-segments of a face, used for face lengths and centers.
pub fn live_pieces(geo: &dyn LevelSet, axis: usize, c: f64, a: f64, b: f64) -> Vec<(f64, f64)> {
    let other = 1 - axis;
    let at = |t: f64| {
        let mut p = [0.0; 2];
        p[axis] = c;
        p[other] = t;
        p
    };
    let f = |t: f64| {
        let p = at(t);
        (geo.phi(p), geo.grad(p)[other])
    };
    let roots = roots_on_interval(&f, a, b, 32);
    let mut knots = vec![a];
    knots.extend(roots.iter().copied().filter(|&r| r > a && r < b));
    knots.push(b);
    knots
        .windows(2)
        .filter(|w| w[1] - w[0] > 1e-14 * (b - a) && geo.phi(at(0.5 * (w[0] + w[1]))) > 0.0)
        .map(|w| (w[0], w[1]))
        .collect()
}

/// Volume rule and level-set curve rule of a cut rectangle.
#[derive(Clone, Debug, Default)]
pub struct CutRules {
    pub volume: QuadRule,
    /// Points on `phi = 0` with outward normals `-grad phi / |grad phi|`.
    pub curve: QuadRule,
}

/// Smallest `|d phi / d h| / |grad phi|` accepted on the curve. Keeps points
/// where the curve turns parallel to the height axis (and the height
/// function stops being analytic) well away from the base interval.
const MIN_HEIGHT_RATIO: f64 = 0.6;

/// Maximum split depth before giving up on a cut rectangle.
pub const MAX_DEPTH: usize = 8;

/// Rules for the `phi > 0` part of `rect`. The volume rule integrates
/// polynomials of total degree `degree` exactly in the height direction.
pub fn cut_cell_rules(rect: &Rect, geo: &dyn LevelSet, degree: usize) -> Result<CutRules> {
    let mut out = CutRules::default();
    let nh = points_for_degree(degree);
    let nb = points_for_degree(degree + 1) + CUT_EXTRA_POINTS;
    cut_recursive(rect, geo, nh, nb, 0, &mut out)?;
    if out.volume.total_weight() < 1e-10 * rect.area() {
        return Ok(CutRules::default());
    }
    Ok(out)
}

/// Volume rule only; see [`cut_cell_rules`].
pub fn cell_volume_rule(rect: &Rect, geo: &dyn LevelSet, degree: usize, cut: bool) -> Result<QuadRule> {
    if cut {
        Ok(cut_cell_rules(rect, geo, degree)?.volume)
    } else {
        Ok(tensor_rule(rect, degree))
    }
}

/// Curve rule only; see [`cut_cell_rules`].
pub fn levelset_boundary_rule(rect: &Rect, geo: &dyn LevelSet, degree: usize) -> Result<QuadRule> {
    Ok(cut_cell_rules(rect, geo, degree)?.curve)
}

enum Attempt {
    Done(CutRules),
    Split,
}

fn cut_recursive(rect: &Rect, geo: &dyn LevelSet, nh: usize, nb: usize, depth: usize, out: &mut CutRules) -> Result<()> {
    let g = geo.grad(rect.center());
    let first = if g[1].abs() > g[0].abs() { 1 } else { 0 };
    for h in [first, 1 - first] {
        match height_rules(rect, geo, h, nh, nb) {
            Attempt::Done(r) => {
                out.volume.append(r.volume);
                out.curve.append(r.curve);
                return Ok(());
            }
            Attempt::Split => continue,
        }
    }
    if depth >= MAX_DEPTH {
        return Err(Error::QuadratureDepth { x0: rect.lo[0], x1: rect.hi[0], y0: rect.lo[1], y1: rect.hi[1] });
    }
    let d = if rect.width(1) > rect.width(0) { 1 } else { 0 };
    let (a, b) = rect.split(d);
    cut_recursive(&a, geo, nh, nb, depth + 1, out)?;
    cut_recursive(&b, geo, nh, nb, depth + 1, out)
}

fn height_rules(rect: &Rect, geo: &dyn LevelSet, h: usize, nh: usize, nb: usize) -> Attempt {
    let b = 1 - h;
    let (b0, b1) = (rect.lo[b], rect.hi[b]);
    let (h0, h1) = (rect.lo[h], rect.hi[h]);
    let pt = |bv: f64, hv: f64| {
        let mut p = [0.0; 2];
        p[b] = bv;
        p[h] = hv;
        p
    };
    // Breakpoints: where the curve meets the two height edges, plus points
    // where phi along an edge is stationary (corners of the curve touching
    // the edge, e.g. a sharp trailing edge).
    let mut knots = vec![b0, b1];
    for &hv in &[h0, h1] {
        let f = |t: f64| {
            let p = pt(t, hv);
            (geo.phi(p), geo.grad(p)[b])
        };
        knots.extend(roots_on_interval(&f, b0, b1, 32));
        let df = |t: f64| {
            let p = pt(t, hv);
            let eps = 1e-7 * (b1 - b0);
            let gp = geo.grad(pt(t + eps, hv))[b];
            let gm = geo.grad(pt(t - eps, hv))[b];
            (geo.grad(p)[b], (gp - gm) / (2.0 * eps))
        };
        knots.extend(roots_on_interval(&df, b0, b1, 32));
    }
    // Curve crossings of the base-axis edges, checked for slope below.
    let mut crossings = Vec::new();
    for &bv in &[b0, b1] {
        let f = |t: f64| {
            let p = pt(bv, t);
            (geo.phi(p), geo.grad(p)[h])
        };
        crossings.extend(roots_on_interval(&f, h0, h1, 32).into_iter().map(|t| pt(bv, t)));
    }
    for &hv in &[h0, h1] {
        let f = |t: f64| {
            let p = pt(t, hv);
            (geo.phi(p), geo.grad(p)[b])
        };
        crossings.extend(roots_on_interval(&f, b0, b1, 32).into_iter().map(|t| pt(t, hv)));
    }
    for p in crossings {
        let gr = geo.grad(p);
        let gn = libm::hypot(gr[0], gr[1]);
        if gn > 0.0 && gr[h].abs() < MIN_HEIGHT_RATIO * gn {
            return Attempt::Split;
        }
    }
    knots.retain(|&t| t >= b0 && t <= b1);
    knots.sort_by(|x, y| x.partial_cmp(y).unwrap_or(core::cmp::Ordering::Equal));
    knots.dedup_by(|x, y| (*x - *y).abs() <= 1e-13 * (b1 - b0));

    let mut vol = QuadRule::default();
    let mut curve = QuadRule::default();
    for w in knots.windows(2) {
        if w[1] - w[0] <= 1e-13 * (b1 - b0) {
            continue;
        }
        let (bs, bw) = gauss_on(nb, w[0], w[1]);
        for (bv, wb) in bs.into_iter().zip(bw) {
            let line = |t: f64| {
                let p = pt(bv, t);
                (geo.phi(p), geo.grad(p)[h])
            };
            let roots = roots_on_interval(&line, h0, h1, 32);
            let roots: Vec<f64> = roots.into_iter().filter(|&r| r > h0 && r < h1).collect();
            let live = match roots.len() {
                0 => {
                    if geo.phi(pt(bv, 0.5 * (h0 + h1))) > 0.0 {
                        Some((h0, h1))
                    } else {
                        None
                    }
                }
                1 => {
                    let r = roots[0];
                    let p = pt(bv, r);
                    let gr = geo.grad(p);
                    let gn = libm::hypot(gr[0], gr[1]);
                    if gn == 0.0 || gr[h].abs() < MIN_HEIGHT_RATIO * gn {
                        return Attempt::Split;
                    }
                    curve.points.push(p);
                    curve.weights.push(wb * gn / gr[h].abs());
                    curve.normals.push([-gr[0] / gn, -gr[1] / gn]);
                    if geo.phi(pt(bv, 0.5 * (h0 + r))) > 0.0 {
                        Some((h0, r))
                    } else {
                        Some((r, h1))
                    }
                }
                _ => return Attempt::Split,
            };
            if let Some((s0, s1)) = live {
                if s1 - s0 <= 0.0 {
                    continue;
                }
                let (hs, hw) = gauss_on(nh, s0, s1);
                for (hv, wh) in hs.into_iter().zip(hw) {
                    vol.points.push(pt(bv, hv));
                    vol.weights.push(wb * wh);
                }
            }
        }
    }
    Attempt::Done(CutRules { volume: vol, curve })
}
