//! Level-set geometries, exact reference integrals and node samplers.
//!
//! Sign convention: `phi > 0` strictly inside the domain, `phi < 0` in the
//! immersed region and `phi = 0` on the curved boundary.

use alloc::format;
use alloc::vec::Vec;
use core::f64::consts::PI;

use rand_core::{RngCore, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;

use crate::{Error, Point, Result};

/// Implicit function describing the curved part of the boundary.
pub trait LevelSet {
    fn phi(&self, x: Point) -> f64;
    fn grad(&self, x: Point) -> Point;
}

/// The analytic shapes used by the studies, plus a few simple shapes for tests.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Shape {
    /// No level set; the domain is the bounding box.
    Box,
    /// Unit square with the disk of radius 1/4 about (1/2, 1/2) removed.
    BoxCircle,
    /// Annulus 1/2 <= r <= 1 about the origin.
    Annulus,
    /// `x (x - 1)^2 - 16 y^2 >= 0` on [0,1] x [-1/10, 1/10].
    Airfoil,
    /// `1 - zeta x^2 / xi - y^2 / eta >= 0` on [-1,1]^2.
    Conic { xi: f64, eta: f64, zeta: f64 },
    /// Half plane `a x + b y + c >= 0`.
    Linear { a: f64, b: f64, c: f64 },
    /// Disk `r^2 - |x - center|^2 >= 0`.
    Disk { cx: f64, cy: f64, r: f64 },
}

impl Shape {
    pub fn phi(&self, [x, y]: Point) -> f64 {
        match *self {
            Shape::Box => 1.0,
            Shape::BoxCircle => (x - 0.5) * (x - 0.5) + (y - 0.5) * (y - 0.5) - 0.0625,
            Shape::Annulus => {
                let r2 = x * x + y * y;
                (r2 - 0.25) * (1.0 - r2)
            }
            Shape::Airfoil => x * (x - 1.0) * (x - 1.0) - 16.0 * y * y,
            Shape::Conic { xi, eta, zeta } => 1.0 - zeta * x * x / xi - y * y / eta,
            Shape::Linear { a, b, c } => a * x + b * y + c,
            Shape::Disk { cx, cy, r } => r * r - (x - cx) * (x - cx) - (y - cy) * (y - cy),
        }
    }

    pub fn grad(&self, [x, y]: Point) -> Point {
        match *self {
            Shape::Box => [0.0, 0.0],
            Shape::BoxCircle => [2.0 * (x - 0.5), 2.0 * (y - 0.5)],
            Shape::Annulus => {
                let r2 = x * x + y * y;
                // d/d(r2) of (r2 - 1/4)(1 - r2) is 5/4 - 2 r2
                let g = 2.0 * (1.25 - 2.0 * r2);
                [g * x, g * y]
            }
            Shape::Airfoil => [(x - 1.0) * (3.0 * x - 1.0), -32.0 * y],
            Shape::Conic { xi, eta, zeta } => [-2.0 * zeta * x / xi, -2.0 * y / eta],
            Shape::Linear { a, b, .. } => [a, b],
            Shape::Disk { cx, cy, .. } => [-2.0 * (x - cx), -2.0 * (y - cy)],
        }
    }
}

/// Domain bounds plus an optional level set.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Geometry {
    pub shape: Shape,
    /// `[[x_lo, x_hi], [y_lo, y_hi]]`.
    pub bounds: [[f64; 2]; 2],
}

impl LevelSet for Geometry {
    fn phi(&self, x: Point) -> f64 {
        self.shape.phi(x)
    }
    fn grad(&self, x: Point) -> Point {
        self.shape.grad(x)
    }
}

impl Geometry {
    pub fn has_levelset(&self) -> bool {
        !matches!(self.shape, Shape::Box)
    }

    pub fn phi(&self, x: Point) -> f64 {
        self.shape.phi(x)
    }

    pub fn grad(&self, x: Point) -> Point {
        self.shape.grad(x)
    }

    pub fn contains_box(&self, x: Point) -> bool {
        (0..2).all(|d| x[d] >= self.bounds[d][0] && x[d] <= self.bounds[d][1])
    }

    pub fn width(&self, axis: usize) -> f64 {
        self.bounds[axis][1] - self.bounds[axis][0]
    }

    /// Exact area of the live region where it is known in closed form.
    pub fn exact_area(&self) -> Option<f64> {
        match self.shape {
            Shape::Box => Some(self.width(0) * self.width(1)),
            Shape::BoxCircle => Some(1.0 - PI / 16.0),
            Shape::Annulus => Some(0.75 * PI),
            // 2 * int_0^1 sqrt(x) (1 - x) / 4 dx = 2/15
            Shape::Airfoil => Some(2.0 * (2.0 / 3.0 - 2.0 / 5.0) / 4.0),
            _ => None,
        }
    }
}

/// Geometry kind as named in configuration files.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum GeometryKind {
    Box,
    BoxCircle,
    Annulus,
    Airfoil,
    Conic { xi: f64, eta: f64, zeta: f64 },
}

/// Build one of the study geometries.
pub fn make_geometry(kind: GeometryKind) -> Result<Geometry> {
    let geo = match kind {
        GeometryKind::Box => Geometry { shape: Shape::Box, bounds: [[0.0, 1.0], [0.0, 1.0]] },
        GeometryKind::BoxCircle => Geometry { shape: Shape::BoxCircle, bounds: [[0.0, 1.0], [0.0, 1.0]] },
        // The outer circle would be tangent to [-1,1]^2; a small pad keeps
        // the box faces clear of it.
        GeometryKind::Annulus => Geometry { shape: Shape::Annulus, bounds: [[-1.05, 1.05], [-1.05, 1.05]] },
        GeometryKind::Airfoil => Geometry { shape: Shape::Airfoil, bounds: [[0.0, 1.0], [-0.1, 0.1]] },
        GeometryKind::Conic { xi, eta, zeta } => {
            let ok = |v: f64| (0.01..=0.99).contains(&v);
            if !ok(xi) || !ok(eta) {
                return Err(Error::InvalidParameter(format!("conic parameters ({xi}, {eta}) outside [0.01, 0.99]")));
            }
            if zeta != 1.0 && zeta != -1.0 {
                return Err(Error::InvalidParameter(format!("conic zeta must be +1 or -1, got {zeta}")));
            }
            Geometry { shape: Shape::Conic { xi, eta, zeta }, bounds: [[-1.0, 1.0], [-1.0, 1.0]] }
        }
    };
    Ok(geo)
}

/// Seedable generator shared by all samplers (xoshiro256++).
pub struct Rng(Xoshiro256PlusPlus);

impl Rng {
    pub fn new(seed: u64) -> Self {
        Rng(Xoshiro256PlusPlus::seed_from_u64(seed))
    }

    /// Uniform on `[0, 1)` with 53 random bits.
    pub fn unit(&mut self) -> f64 {
        (self.0.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.unit()
    }

    pub fn next_u64(&mut self) -> u64 {
        self.0.next_u64()
    }
}

/// Draw a conic geometry: `xi, eta ~ U[0.01, 0.99]`, `zeta = ±1` with equal odds.
pub fn random_conic(rng: &mut Rng) -> Result<Geometry> {
    let xi = rng.uniform(0.01, 0.99);
    let eta = rng.uniform(0.01, 0.99);
    let zeta = if rng.next_u64() >> 63 == 0 { 1.0 } else { -1.0 };
    make_geometry(GeometryKind::Conic { xi, eta, zeta })
}

/// Lattice resolution for a sampler.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Resolution {
    /// `n_x = n_y` nodes per direction (box-circle, conic, plain box).
    Square(usize),
    /// `n_r` radial by `n_theta` angular rings (annulus).
    Polar { n_r: usize, n_theta: usize },
    /// `n_y` nodes across, `5 n_y` along (airfoil).
    Airfoil(usize),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SamplerConfig {
    pub resolution: Resolution,
    /// Radial stretching (annulus only).
    pub beta: f64,
    pub seed: u64,
    /// Scale of the uniform perturbation relative to the spacing; the
    /// studies use 1/4, tests sometimes use 0.
    pub perturbation: f64,
}

impl SamplerConfig {
    pub fn new(resolution: Resolution, seed: u64) -> Self {
        Self { resolution, beta: 0.1, seed, perturbation: 0.25 }
    }

    fn validate(&self) -> Result<()> {
        let small = match self.resolution {
            Resolution::Square(n) | Resolution::Airfoil(n) => n < 2,
            Resolution::Polar { n_r, n_theta } => n_r < 2 || n_theta < 2,
        };
        if small {
            return Err(Error::InvalidParameter(format!("resolution {:?} below 2 per direction", self.resolution)));
        }
        if !(self.beta >= 0.0) || !self.beta.is_finite() {
            return Err(Error::InvalidParameter(format!("beta must be >= 0, got {}", self.beta)));
        }
        Ok(())
    }
}

/// Sampled nodes, all with `phi >= 0`.
#[derive(Clone, Debug, PartialEq)]
pub struct NodeSet {
    pub coords: Vec<Point>,
    pub seed: u64,
    /// Nominal spacing used by tolerance heuristics.
    pub h0: f64,
    /// 1-based lattice indices `(j, k)` each node came from.
    pub lattice: Vec<(usize, usize)>,
    /// Configuration actually used (resolution may have been increased).
    pub config: SamplerConfig,
}

impl NodeSet {
    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    /// Wrap explicit coordinates (tests and user-provided clouds).
    pub fn from_points(coords: Vec<Point>, h0: f64) -> Self {
        let n = coords.len();
        NodeSet {
            coords,
            seed: 0,
            h0,
            lattice: (1..=n).map(|i| (i, 1)).collect(),
            config: SamplerConfig::new(Resolution::Square(2), 0),
        }
    }
}

/// Radial stretching `g(z) = (e^{beta z} - 1) / (e^beta - 1)`.
pub fn stretch(beta: f64, z: f64) -> f64 {
    if beta < 1e-12 {
        z
    } else {
        libm::expm1(beta * z) / libm::expm1(beta)
    }
}

/// Derivative of [`stretch`] in `z`.
pub fn stretch_derivative(beta: f64, z: f64) -> f64 {
    if beta < 1e-12 {
        1.0
    } else {
        beta * libm::exp(beta * z) / libm::expm1(beta)
    }
}

/// Perturbed-lattice sampler. Draws are consumed node by node in lattice
/// order (x index fastest), first the x/radial then the y/angular offset.
pub fn sample_nodes(config: &SamplerConfig, geometry: &Geometry) -> Result<NodeSet> {
    config.validate()?;
    let mut rng = Rng::new(config.seed);
    let mut coords = Vec::new();
    let mut lattice = Vec::new();
    let a = config.perturbation;
    let h0;
    match config.resolution {
        Resolution::Square(n) => {
            let [[x0, x1], [y0, y1]] = geometry.bounds;
            let dx = (x1 - x0) / n as f64;
            let dy = (y1 - y0) / n as f64;
            h0 = dx.min(dy);
            for k in 1..=n {
                for j in 1..=n {
                    let xi = rng.uniform(-a * dx, a * dx);
                    let eta = rng.uniform(-a * dy, a * dy);
                    let p = [x0 + (j as f64 - 0.5) * dx + xi, y0 + (k as f64 - 0.5) * dy + eta];
                    if geometry.phi(p) >= 0.0 {
                        coords.push(p);
                        lattice.push((j, k));
                    }
                }
            }
        }
        Resolution::Airfoil(ny) => {
            let nx = 5 * ny;
            let d = 1.0 / nx as f64;
            let [[x0, _], [y0, _]] = geometry.bounds;
            h0 = d;
            for k in 1..=ny {
                for j in 1..=nx {
                    let xi = rng.uniform(-a * d, a * d);
                    let eta = rng.uniform(-a * d, a * d);
                    let p = [x0 + (j as f64 - 0.5) * d + xi, y0 + (k as f64 - 0.5) * d + eta];
                    if geometry.phi(p) >= 0.0 {
                        coords.push(p);
                        lattice.push((j, k));
                    }
                }
            }
        }
        Resolution::Polar { n_r, n_theta } => {
            let drho = 1.0 / n_r as f64;
            let dtheta = 2.0 * PI / n_theta as f64;
            h0 = 0.5 * drho * stretch_derivative(config.beta, 0.5 * drho);
            for k in 1..=n_theta {
                for j in 1..=n_r {
                    let xi = rng.uniform(-a * drho, a * drho);
                    let eta = rng.uniform(-a * dtheta, a * dtheta);
                    let rho = stretch(config.beta, (j as f64 - 0.5) * drho + xi);
                    let r = rho + 0.5 * (1.0 - rho);
                    let theta = (k as f64 - 0.5) * dtheta + eta;
                    let p = [r * libm::cos(theta), r * libm::sin(theta)];
                    if geometry.phi(p) >= 0.0 {
                        coords.push(p);
                        lattice.push((j, k));
                    }
                }
            }
        }
    }
    if coords.is_empty() {
        return Err(Error::NoNodes);
    }
    Ok(NodeSet { coords, seed: config.seed, h0, lattice, config: *config })
}

/// Square-lattice sampler that adds one to `n` until at least `min_nodes`
/// survive the level-set cut.
pub fn sample_nodes_at_least(config: &SamplerConfig, geometry: &Geometry, min_nodes: usize) -> Result<NodeSet> {
    let mut cfg = *config;
    loop {
        match sample_nodes(&cfg, geometry) {
            Ok(ns) if ns.len() >= min_nodes => return Ok(ns),
            Ok(_) | Err(Error::NoNodes) => {}
            Err(e) => return Err(e),
        }
        cfg.resolution = match cfg.resolution {
            Resolution::Square(n) if n < 4096 => Resolution::Square(n + 1),
            Resolution::Airfoil(n) if n < 4096 => Resolution::Airfoil(n + 1),
            Resolution::Polar { n_r, n_theta } if n_r < 4096 => Resolution::Polar { n_r: n_r + 1, n_theta },
            _ => return Err(Error::NoNodes),
        };
    }
}

/// Integrand used for the quadrature study on each geometry.
pub fn study_integrand(shape: &Shape, [x, y]: Point) -> f64 {
    match shape {
        Shape::BoxCircle => {
            let (dx, dy) = (x - 0.5, y - 0.5);
            let r2 = dx * dx + dy * dy;
            // cos(2 theta) / r = (dx^2 - dy^2) / r^3
            (dx * dx - dy * dy) / (r2 * libm::sqrt(r2))
        }
        Shape::Annulus => {
            let r = libm::sqrt(x * x + y * y);
            libm::exp(r) / r
        }
        Shape::Airfoil => libm::exp(x),
        _ => 1.0,
    }
}

/// `erfi(x) = 2/sqrt(pi) * sum x^(2n+1) / (n! (2n+1))`.
pub fn erfi(x: f64) -> f64 {
    let x2 = x * x;
    let mut term = x; // x^(2n+1) / n!
    let mut sum = 0.0;
    for n in 0..200 {
        let add = term / (2 * n + 1) as f64;
        sum += add;
        if add.abs() < 1e-18 * sum.abs() {
            break;
        }
        term *= x2 / (n + 1) as f64;
    }
    2.0 / libm::sqrt(PI) * sum
}

/// Exact value of the study integral for the geometry, if defined.
pub fn exact_integral(shape: &Shape) -> Option<f64> {
    let e = core::f64::consts::E;
    match shape {
        Shape::BoxCircle => Some(0.0),
        Shape::Annulus => Some(2.0 * PI * (e - libm::sqrt(e))),
        Shape::Airfoil => Some(0.75 * e - 0.625 * libm::sqrt(PI) * erfi(1.0)),
        _ => None,
    }
}
