//! The `build` command: operators, files and a report.

use std::path::Path;
use std::time::Instant;

use anyhow::Context;
use pcsbp_core::geometry::{sample_nodes, Geometry, NodeSet};
use pcsbp_core::mesh::CellKind;
use pcsbp_core::normlp::{IpmOptions, NormStatus};
use pcsbp_core::pipeline::{build, Build, BuildOptions, Stage, TauSpec};
use serde::Serialize;

use crate::checks::{dissipation_checks, pair_checks, AxisResiduals, DissipationChecks};
use crate::config::{ResolutionSpec, RunConfig};
use crate::export::{write_boundary_json, write_json, write_mtx_file, write_norm_csv};

/// Wall-clock seconds per pipeline stage, in completion order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct StageTimes(pub Vec<(Stage, f64)>);

impl StageTimes {
    pub fn get(&self, stage: Stage) -> f64 {
        self.0.iter().filter(|(s, _)| *s == stage).map(|(_, t)| t).sum()
    }
}

impl Serialize for StageTimes {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        use serde::ser::SerializeMap;
        let mut map = s.serialize_map(Some(self.0.len()))?;
        for (stage, t) in &self.0 {
            map.serialize_entry(stage.name(), t)?;
        }
        map.end()
    }
}

pub fn build_options(cfg: &RunConfig, p: usize) -> BuildOptions {
    let mut opts = BuildOptions::new(p);
    opts.tau = TauSpec::Regime(cfg.tau.into());
    opts.eps_diss = cfg.eps_diss;
    opts.ipm = IpmOptions { objective: cfg.objective.into(), ..IpmOptions::default() };
    opts
}

pub fn timed_build(geo: &Geometry, nodes: &NodeSet, opts: &BuildOptions) -> pcsbp_core::Result<(Build, StageTimes)> {
    let mut times = StageTimes::default();
    let mut last = Instant::now();
    let b = build(geo, nodes, opts, &mut |stage| {
        let now = Instant::now();
        let dt = (now - last).as_secs_f64();
        log::info!("{} finished in {dt:.3} s", stage.name());
        times.0.push((stage, dt));
        last = now;
    })?;
    Ok((b, times))
}

#[derive(Clone, Debug, Serialize)]
pub struct CertificateSummary {
    pub zt_w: f64,
    pub gap: f64,
    pub radius: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct BuildReport {
    pub geometry: crate::config::GeometryName,
    pub resolution: ResolutionSpec,
    pub seed: u64,
    pub p: usize,
    pub tau: crate::config::TauChoice,
    pub n_nodes: usize,
    /// Live cells.
    pub n_cells: usize,
    pub n_cut_cells: usize,
    pub n_free: usize,
    pub status: &'static str,
    pub message: String,
    pub iterations: usize,
    pub margin: Option<f64>,
    pub min_m: f64,
    pub min_m_min: f64,
    pub sum_m: f64,
    pub exact_area: Option<f64>,
    pub residuals_x: AxisResiduals,
    pub residuals_y: AxisResiduals,
    pub dissipation: DissipationChecks,
    pub certificate: Option<CertificateSummary>,
}

pub fn build_report(cfg: &RunConfig, resolution: ResolutionSpec, seed: u64, geo: &Geometry, nodes: &NodeSet, b: &Build) -> anyhow::Result<BuildReport> {
    let [rx, ry] = pair_checks(b, geo, nodes)?;
    let min = |v: &[f64]| v.iter().copied().fold(f64::INFINITY, f64::min);
    let sol = &b.solution;
    Ok(BuildReport {
        geometry: cfg.geometry.kind,
        resolution,
        seed,
        p: b.p,
        tau: cfg.tau,
        n_nodes: nodes.len(),
        n_cells: b.mesh.live_cells().count(),
        n_cut_cells: b.mesh.cells.iter().filter(|c| c.kind == CellKind::Cut).count(),
        n_free: b.problem.n_y(),
        status: sol.status.name(),
        message: sol.message.clone(),
        iterations: sol.iterations,
        margin: sol.margin.is_finite().then_some(sol.margin),
        min_m: min(&b.global.m),
        min_m_min: min(&b.problem.m_min),
        sum_m: b.global.m.iter().sum(),
        exact_area: geo.exact_area(),
        residuals_x: rx,
        residuals_y: ry,
        dissipation: dissipation_checks(&b.diss, &nodes.coords, b.p, 20, seed),
        certificate: sol.certificate.as_ref().map(|c| CertificateSummary { zt_w: c.zt_w, gap: c.gap, radius: c.radius }),
    })
}

/// What one `build` run produced.
pub struct BuildOutcome {
    pub report: BuildReport,
    pub times: StageTimes,
}

impl BuildOutcome {
    pub fn infeasible(&self) -> bool {
        self.report.status != NormStatus::Feasible.name()
    }
}

/// Build for one seed and write m.csv, Sx.mtx, Sy.mtx, A.mtx, boundary.json,
/// report.json and timings.json into `out`. Timings are kept out of the
/// report so reruns reproduce every other file byte for byte.
pub fn cmd_build(cfg: &RunConfig, seed: u64, out: &Path) -> anyhow::Result<BuildOutcome> {
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let geo = cfg.geometry.geometry()?;
    let resolution = cfg.geometry.resolution;
    let nodes = sample_nodes(&cfg.geometry.sampler(resolution, seed)?, &geo)?;
    let (b, times) = timed_build(&geo, &nodes, &build_options(cfg, cfg.p))?;
    let report = build_report(cfg, resolution, seed, &geo, &nodes, &b)?;
    let note = format!("p = {}, N = {}, seed = {seed}", b.p, nodes.len());
    write_norm_csv(&out.join("m.csv"), &nodes.coords, &b.global.m)?;
    write_mtx_file(&out.join("Sx.mtx"), &b.global.sx.to_csr(), &format!("S_x, {note}"))?;
    write_mtx_file(&out.join("Sy.mtx"), &b.global.sy.to_csr(), &format!("S_y, {note}"))?;
    write_mtx_file(&out.join("A.mtx"), &b.diss.a, &format!("dissipation, eps = {}, {note}", b.diss.eps))?;
    write_boundary_json(&out.join("boundary.json"), &b.global.boundary)?;
    write_json(&out.join("report.json"), &report)?;
    write_json(&out.join("timings.json"), &times)?;
    log::info!("{}: N = {}, status {}", out.display(), report.n_nodes, report.status);
    Ok(BuildOutcome { report, times })
}
