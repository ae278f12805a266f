//! JSON run configuration.

use std::path::Path;

use anyhow::{bail, Context};
use pcsbp_core::geometry::{make_geometry, Geometry, GeometryKind, Resolution, SamplerConfig};
use pcsbp_core::normlp::{NormObjective, TauRegime};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeometryName {
    Box,
    BoxCircle,
    Annulus,
    Airfoil,
    Conic,
}

/// `n_x`, `n_y` (airfoil), `n_r` (annulus, with `n_theta = 6 n_r`) or an
/// explicit `[n_r, n_theta]` pair.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ResolutionSpec {
    One(usize),
    Pair([usize; 2]),
}

impl ResolutionSpec {
    pub fn for_geometry(&self, kind: GeometryName) -> anyhow::Result<Resolution> {
        Ok(match (kind, *self) {
            (GeometryName::Annulus, ResolutionSpec::One(n)) => Resolution::Polar { n_r: n, n_theta: 6 * n },
            (GeometryName::Annulus, ResolutionSpec::Pair([n_r, n_theta])) => Resolution::Polar { n_r, n_theta },
            (GeometryName::Airfoil, ResolutionSpec::One(n)) => Resolution::Airfoil(n),
            (_, ResolutionSpec::One(n)) => Resolution::Square(n),
            (k, ResolutionSpec::Pair(_)) => bail!("a resolution pair is only meaningful for the annulus, not {k:?}"),
        })
    }

    /// The leading count (`n_x`, `n_y` or `n_r`), used in reports.
    pub fn leading(&self) -> usize {
        match *self {
            ResolutionSpec::One(n) => n,
            ResolutionSpec::Pair([n, _]) => n,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConicParams {
    pub xi: f64,
    pub eta: f64,
    pub zeta: f64,
}

fn default_beta() -> f64 {
    0.1
}

fn default_perturbation() -> f64 {
    0.25
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryConfig {
    pub kind: GeometryName,
    pub resolution: ResolutionSpec,
    #[serde(default = "default_beta")]
    pub beta: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_perturbation")]
    pub perturbation: f64,
    /// Required for `conic`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub conic: Option<ConicParams>,
}

impl GeometryConfig {
    pub fn geometry(&self) -> anyhow::Result<Geometry> {
        let kind = match self.kind {
            GeometryName::Box => GeometryKind::Box,
            GeometryName::BoxCircle => GeometryKind::BoxCircle,
            GeometryName::Annulus => GeometryKind::Annulus,
            GeometryName::Airfoil => GeometryKind::Airfoil,
            GeometryName::Conic => {
                let c = self.conic.context("conic geometry needs \"conic\": {xi, eta, zeta}")?;
                GeometryKind::Conic { xi: c.xi, eta: c.eta, zeta: c.zeta }
            }
        };
        Ok(make_geometry(kind)?)
    }

    pub fn sampler(&self, resolution: ResolutionSpec, seed: u64) -> anyhow::Result<SamplerConfig> {
        let mut s = SamplerConfig::new(resolution.for_geometry(self.kind)?, seed);
        s.beta = self.beta;
        s.perturbation = self.perturbation;
        Ok(s)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TauChoice {
    Large,
    Small,
    Tiny,
    Auto,
}

impl From<TauChoice> for TauRegime {
    fn from(t: TauChoice) -> Self {
        match t {
            TauChoice::Large => TauRegime::Large,
            TauChoice::Small => TauRegime::Small,
            TauChoice::Tiny => TauRegime::Tiny,
            TauChoice::Auto => TauRegime::Auto,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectiveChoice {
    MinNorm,
    Margin,
}

impl From<ObjectiveChoice> for NormObjective {
    fn from(o: ObjectiveChoice) -> Self {
        match o {
            ObjectiveChoice::MinNorm => NormObjective::MinNorm,
            ObjectiveChoice::Margin => NormObjective::Margin,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StudyKind {
    Build,
    QuadAccuracy,
    Steady,
    Unsteady,
    SuccessRate,
    Timing,
}

fn default_p() -> usize {
    2
}

fn default_tau() -> TauChoice {
    TauChoice::Auto
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

fn default_eps() -> f64 {
    0.25
}

fn default_samples() -> usize {
    50
}

fn default_t_final() -> f64 {
    2.0 * std::f64::consts::PI
}

fn default_objective() -> ObjectiveChoice {
    ObjectiveChoice::MinNorm
}

fn default_study() -> StudyKind {
    StudyKind::Build
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub geometry: GeometryConfig,
    #[serde(default = "default_p")]
    pub p: usize,
    /// Degrees swept by studies; defaults to `[p]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub degrees: Option<Vec<usize>>,
    #[serde(default = "default_tau")]
    pub tau: TauChoice,
    /// Regimes swept by the success-rate study; defaults to `[tau]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau_regimes: Option<Vec<TauChoice>>,
    #[serde(default = "default_study")]
    pub study: StudyKind,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    /// Resolutions swept by studies; defaults to the geometry's.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resolutions: Option<Vec<ResolutionSpec>>,
    #[serde(default = "default_eps")]
    pub eps_diss: f64,
    /// Conic geometries drawn by the success-rate study.
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default = "default_t_final")]
    pub t_final: f64,
    #[serde(default = "default_objective")]
    pub objective: ObjectiveChoice,
}

impl RunConfig {
    pub fn from_json(text: &str) -> anyhow::Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text).context("parsing run configuration")?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        for &p in std::iter::once(&self.p).chain(self.degrees.iter().flatten()) {
            if !(1..=4).contains(&p) {
                bail!("degree {p} outside 1..=4");
            }
        }
        if self.seeds.is_empty() {
            bail!("seed list is empty");
        }
        if !(self.eps_diss >= 0.0) {
            bail!("eps_diss must be nonnegative");
        }
        if self.study == StudyKind::SuccessRate && self.samples == 0 {
            bail!("success-rate study needs at least one sample");
        }
        if self.geometry.kind == GeometryName::Conic && self.geometry.conic.is_none() && self.study != StudyKind::SuccessRate {
            bail!("conic geometry needs \"conic\": {{xi, eta, zeta}}");
        }
        self.geometry.resolution.for_geometry(self.geometry.kind)?;
        Ok(())
    }

    pub fn degrees(&self) -> Vec<usize> {
        self.degrees.clone().unwrap_or_else(|| vec![self.p])
    }

    pub fn resolutions(&self) -> Vec<ResolutionSpec> {
        self.resolutions.clone().unwrap_or_else(|| vec![self.geometry.resolution])
    }

    pub fn tau_regimes(&self) -> Vec<TauChoice> {
        self.tau_regimes.clone().unwrap_or_else(|| vec![self.tau])
    }
}
