//! Study harnesses: quadrature accuracy, steady and unsteady advection,
//! norm success rates and per-component timing.

use std::path::Path;
use std::time::Instant;

use anyhow::Context;
use pcsbp_core::advection::{
    nominal_h, solve_steady, solve_unsteady, vortex_exact, vortex_initial, vortex_velocity, AdvectionSystem, UnsteadyOptions,
};
use pcsbp_core::basis::basis_dim;
use pcsbp_core::geometry::{exact_integral, random_conic, sample_nodes, sample_nodes_at_least, study_integrand, Rng, Geometry, NodeSet, SamplerConfig, Resolution};
use pcsbp_core::normlp::{build_problem, default_tau, solve_norm, IpmOptions, NormObjective, NormStatus, TauRegime};
use pcsbp_core::pipeline::{build_cells, Build, Stage};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{GeometryName, ResolutionSpec, RunConfig, StudyKind, TauChoice};
use crate::export::write_csv;
use crate::run::{build_options, timed_build};

/// One `(p, resolution, seed)` sample of an accuracy study.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AccuracyRow {
    pub geometry: GeometryName,
    pub seed: u64,
    pub p: usize,
    pub resolution: usize,
    pub n: usize,
    pub h: f64,
    pub status: String,
    pub value: f64,
    pub error: f64,
    pub note: String,
}

/// Observed order between two consecutive resolutions, from the mean
/// `log h` and mean `log error` over the samples that succeeded.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RateRow {
    pub p: usize,
    pub coarse: usize,
    pub fine: usize,
    pub samples_coarse: usize,
    pub samples_fine: usize,
    pub h_coarse: f64,
    pub h_fine: f64,
    pub error_coarse: f64,
    pub error_fine: f64,
    pub slope: f64,
}

/// Pair rates for each degree, in resolution order; the last row per
/// degree is the finest pair.
pub fn rates(rows: &[AccuracyRow]) -> Vec<RateRow> {
    let mut degrees: Vec<usize> = rows.iter().map(|r| r.p).collect();
    degrees.sort_unstable();
    degrees.dedup();
    let mut out = Vec::new();
    for p in degrees {
        let mut res: Vec<usize> = Vec::new();
        for r in rows.iter().filter(|r| r.p == p) {
            if !res.contains(&r.resolution) {
                res.push(r.resolution);
            }
        }
        let means = |k: usize| {
            let ok: Vec<&AccuracyRow> = rows
                .iter()
                .filter(|r| r.p == p && r.resolution == k && r.error.is_finite() && r.error > 0.0)
                .collect();
            let c = ok.len() as f64;
            let lh = ok.iter().map(|r| r.h.ln()).sum::<f64>() / c;
            let le = ok.iter().map(|r| r.error.ln()).sum::<f64>() / c;
            (ok.len(), lh.exp(), le.exp())
        };
        for w in res.windows(2) {
            let (nc, hc, ec) = means(w[0]);
            let (nf, hf, ef) = means(w[1]);
            let slope = if nc > 0 && nf > 0 { (ec.ln() - ef.ln()) / (hc.ln() - hf.ln()) } else { f64::NAN };
            out.push(RateRow {
                p,
                coarse: w[0],
                fine: w[1],
                samples_coarse: nc,
                samples_fine: nf,
                h_coarse: hc,
                h_fine: hf,
                error_coarse: ec,
                error_fine: ef,
                slope,
            });
        }
    }
    out
}

/// Finest-pair slope for degree `p`.
pub fn finest_slope(rates: &[RateRow], p: usize) -> Option<f64> {
    rates.iter().rev().find(|r| r.p == p).map(|r| r.slope)
}

fn accuracy_tasks(cfg: &RunConfig) -> Vec<(usize, ResolutionSpec, u64)> {
    let mut tasks = Vec::new();
    for p in cfg.degrees() {
        for r in cfg.resolutions() {
            for &s in &cfg.seeds {
                tasks.push((p, r, s));
            }
        }
    }
    tasks
}

fn sample(cfg: &RunConfig, r: ResolutionSpec, seed: u64) -> anyhow::Result<(Geometry, NodeSet)> {
    let geo = cfg.geometry.geometry()?;
    let nodes = sample_nodes(&cfg.geometry.sampler(r, seed)?, &geo)?;
    Ok((geo, nodes))
}

fn failed_row(cfg: &RunConfig, p: usize, r: ResolutionSpec, seed: u64, e: anyhow::Error) -> AccuracyRow {
    AccuracyRow {
        geometry: cfg.geometry.kind,
        seed,
        p,
        resolution: r.leading(),
        n: 0,
        h: f64::NAN,
        status: "error".into(),
        value: f64::NAN,
        error: f64::NAN,
        note: format!("{e:#}"),
    }
}

fn run_accuracy(cfg: &RunConfig, one: impl Fn(&Geometry, &NodeSet, &Build) -> anyhow::Result<(f64, f64, String)> + Sync) -> Vec<AccuracyRow> {
    accuracy_tasks(cfg)
        .par_iter()
        .map(|&(p, r, seed)| {
            let go = || -> anyhow::Result<AccuracyRow> {
                let (geo, nodes) = sample(cfg, r, seed)?;
                let (b, _) = timed_build(&geo, &nodes, &build_options(cfg, p))?;
                let (value, error, note) = one(&geo, &nodes, &b)?;
                Ok(AccuracyRow {
                    geometry: cfg.geometry.kind,
                    seed,
                    p,
                    resolution: r.leading(),
                    n: nodes.len(),
                    h: nominal_h(&b.global.m),
                    status: b.solution.status.name().into(),
                    value,
                    error,
                    note,
                })
            };
            go().unwrap_or_else(|e| failed_row(cfg, p, r, seed, e))
        })
        .collect()
}

/// `|m^T f - I|` for the geometry's study integrand.
pub fn quad_accuracy(cfg: &RunConfig) -> Vec<AccuracyRow> {
    run_accuracy(cfg, |geo, nodes, b| {
        let exact = exact_integral(&geo.shape).or(geo.exact_area()).context("geometry has no reference integral")?;
        let value: f64 = nodes.coords.iter().zip(&b.global.m).map(|(x, m)| m * study_integrand(&geo.shape, *x)).sum();
        Ok((value, (value - exact).abs(), String::new()))
    })
}

fn manufactured(x: [f64; 2]) -> f64 {
    (x[0] + x[1]).exp()
}

/// Steady `u_x + u_y = 2 exp(x + y)` with exact inflow data; the error is
/// the `M`-weighted L2 norm.
pub fn steady(cfg: &RunConfig) -> Vec<AccuracyRow> {
    run_accuracy(cfg, |_, nodes, b| {
        let sys = AdvectionSystem::new(
            &b.global,
            (b.diss.eps > 0.0).then_some(&b.diss),
            &nodes.coords,
            Box::new(|_| [1.0, 1.0]),
            Box::new(|x, _| manufactured(x)),
            Some(Box::new(|x, _| 2.0 * manufactured(x))),
        )?;
        let (u, rep) = solve_steady(&sys)?;
        let err = sys.l2_error(&u, manufactured);
        Ok((rep.linear_residual, err, String::new()))
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct UnsteadyRow {
    pub seed: u64,
    pub p: usize,
    pub resolution: usize,
    pub n: usize,
    pub dissipation: bool,
    pub status: String,
    pub steps: usize,
    pub dt: f64,
    pub spectral_radius: f64,
    pub initial_energy: f64,
    /// `max |u^T r|` over the recorded steps.
    pub max_abs_rate: f64,
    /// `max u^T r`; nonpositive with dissipation.
    pub max_rate: f64,
    pub l2_error: f64,
    pub note: String,
}

/// Vortex on the annulus to `t_final`, without and then with dissipation
/// on the same operators.
pub fn unsteady(cfg: &RunConfig) -> Vec<UnsteadyRow> {
    let variants: &[bool] = if cfg.eps_diss > 0.0 { &[false, true] } else { &[false] };
    let per: Vec<Vec<UnsteadyRow>> = accuracy_tasks(cfg)
        .par_iter()
        .map(|&(p, r, seed)| {
            let built = sample(cfg, r, seed).and_then(|(geo, nodes)| {
                let (b, _) = timed_build(&geo, &nodes, &build_options(cfg, p))?;
                Ok((b, nodes))
            });
            variants
                .iter()
                .map(|&with_diss| {
                    let run = match &built {
                        Ok((b, nodes)) => vortex_run(b, nodes, cfg.t_final, with_diss, seed, r).map_err(anyhow::Error::from),
                        Err(e) => Err(anyhow::anyhow!("{e:#}")),
                    };
                    run.unwrap_or_else(|e| UnsteadyRow {
                        seed,
                        p,
                        resolution: r.leading(),
                        n: 0,
                        dissipation: with_diss,
                        status: "error".into(),
                        steps: 0,
                        dt: f64::NAN,
                        spectral_radius: f64::NAN,
                        initial_energy: f64::NAN,
                        max_abs_rate: f64::NAN,
                        max_rate: f64::NAN,
                        l2_error: f64::NAN,
                        note: format!("{e:#}"),
                    })
                })
                .collect()
        })
        .collect();
    per.into_iter().flatten().collect()
}

/// One vortex run on an already built operator.
pub fn vortex_run(b: &Build, nodes: &NodeSet, t_final: f64, with_diss: bool, seed: u64, r: ResolutionSpec) -> pcsbp_core::Result<UnsteadyRow> {
    let sys = AdvectionSystem::new(
        &b.global,
        with_diss.then_some(&b.diss),
        &nodes.coords,
        Box::new(vortex_velocity),
        Box::new(vortex_exact),
        None,
    )?;
    let u0: Vec<f64> = nodes.coords.iter().map(|&x| vortex_initial(x)).collect();
    let opts = UnsteadyOptions { t_final, ..UnsteadyOptions::default() };
    let (u, rep) = solve_unsteady(&sys, &u0, &opts)?;
    let max_abs_rate = rep.energy_trace.iter().map(|s| s.rate.abs()).fold(0.0, f64::max);
    let max_rate = rep.energy_trace.iter().map(|s| s.rate).fold(f64::NEG_INFINITY, f64::max);
    Ok(UnsteadyRow {
        seed,
        p: b.p,
        resolution: r.leading(),
        n: nodes.len(),
        dissipation: with_diss,
        status: b.solution.status.name().into(),
        steps: rep.steps,
        dt: rep.dt,
        spectral_radius: rep.spectral_radius,
        initial_energy: sys.energy(&u0),
        max_abs_rate,
        max_rate,
        l2_error: sys.l2_error(&u, |x| vortex_exact(x, t_final)),
        note: String::new(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SuccessSample {
    pub sample: usize,
    pub xi: f64,
    pub eta: f64,
    pub zeta: f64,
    pub tau_regime: &'static str,
    pub p: usize,
    pub n_x: usize,
    /// Lattice actually used (raised until the stencils fit).
    pub n_x_used: usize,
    pub n: usize,
    pub status: &'static str,
    pub margin: f64,
    pub radius: f64,
    pub note: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SuccessSummary {
    pub tau_regime: &'static str,
    pub p: usize,
    pub n_x: usize,
    pub samples: usize,
    pub feasible_pct: f64,
    pub infeasible_pct: f64,
    pub undetermined_pct: f64,
}

/// Norm verdicts on `cfg.samples` random conic geometries. Geometries are
/// drawn in sequence from `Rng::new(seeds[0])`; the nodes of sample `k` use
/// seed `k` and are shared by every degree, so the lattice is raised until
/// the largest requested degree has enough nodes.
pub fn success_rate(cfg: &RunConfig) -> anyhow::Result<Vec<SuccessSample>> {
    let mut rng = Rng::new(cfg.seeds[0]);
    let geos: Vec<Geometry> = (0..cfg.samples).map(|_| random_conic(&mut rng)).collect::<Result<_, _>>()?;
    let degrees = cfg.degrees();
    let pmax = degrees.iter().copied().max().unwrap_or(1);
    let min_nodes = basis_dim(2 * pmax - 1, 2) + 1;
    let regimes = cfg.tau_regimes();
    let resolutions: Vec<usize> = cfg.resolutions().iter().map(|r| r.leading()).collect();
    let per: Vec<Vec<SuccessSample>> = geos
        .par_iter()
        .enumerate()
        .map(|(k, geo)| {
            let pcsbp_core::geometry::Shape::Conic { xi, eta, zeta } = geo.shape else { unreachable!() };
            let mut rows = Vec::new();
            for &nx in &resolutions {
                let mut sc = SamplerConfig::new(Resolution::Square(nx), k as u64);
                sc.perturbation = cfg.geometry.perturbation;
                let nodes = sample_nodes_at_least(&sc, geo, min_nodes);
                for &p in &degrees {
                    let row = |regime: TauChoice, n: usize, nxu: usize, status: &'static str, margin: f64, radius: f64, note: String| SuccessSample {
                        sample: k,
                        xi,
                        eta,
                        zeta,
                        tau_regime: TauRegime::from(regime).name(),
                        p,
                        n_x: nx,
                        n_x_used: nxu,
                        n,
                        status,
                        margin,
                        radius,
                        note,
                    };
                    let nodes = match &nodes {
                        Ok(ns) => ns,
                        Err(e) => {
                            for &t in &regimes {
                                rows.push(row(t, 0, 0, "error", f64::NAN, f64::NAN, e.to_string()));
                            }
                            continue;
                        }
                    };
                    let Resolution::Square(nxu) = nodes.config.resolution else { unreachable!() };
                    let opts = build_options(cfg, p);
                    let cells = build_cells(geo, nodes, &opts, &mut |_| {});
                    let ops = match cells {
                        Ok((_, _, _, ops)) => ops,
                        Err(e) => {
                            for &t in &regimes {
                                rows.push(row(t, nodes.len(), nxu, "error", f64::NAN, f64::NAN, e.to_string()));
                            }
                            continue;
                        }
                    };
                    for &t in &regimes {
                        let verdict = default_tau(geo, nodes, t.into()).and_then(|tau| build_problem(&ops, nodes.len(), tau));
                        match verdict {
                            Ok(problem) => {
                                let ipm = IpmOptions { objective: NormObjective::Margin, ..IpmOptions::default() };
                                let sol = solve_norm(&problem, &ipm);
                                let radius = sol.certificate.as_ref().map_or(f64::NAN, |c| c.radius);
                                rows.push(row(t, nodes.len(), nxu, sol.status.name(), sol.margin, radius, sol.message.clone()));
                            }
                            Err(e) => rows.push(row(t, nodes.len(), nxu, "error", f64::NAN, f64::NAN, e.to_string())),
                        }
                    }
                }
            }
            rows
        })
        .collect();
    let mut rows: Vec<SuccessSample> = per.into_iter().flatten().collect();
    rows.sort_by(|a, b| {
        (a.tau_regime, a.p, a.n_x, a.sample).cmp(&(b.tau_regime, b.p, b.n_x, b.sample))
    });
    Ok(rows)
}

pub fn success_summary(rows: &[SuccessSample]) -> Vec<SuccessSummary> {
    let mut keys: Vec<(&'static str, usize, usize)> = rows.iter().map(|r| (r.tau_regime, r.p, r.n_x)).collect();
    keys.dedup();
    keys.into_iter()
        .map(|(t, p, nx)| {
            let group: Vec<&SuccessSample> = rows.iter().filter(|r| (r.tau_regime, r.p, r.n_x) == (t, p, nx)).collect();
            let pct = |s: &str| 100.0 * group.iter().filter(|r| r.status == s).count() as f64 / group.len() as f64;
            SuccessSummary {
                tau_regime: t,
                p,
                n_x: nx,
                samples: group.len(),
                feasible_pct: pct(NormStatus::Feasible.name()),
                infeasible_pct: pct(NormStatus::Infeasible.name()),
                undetermined_pct: 100.0 - pct(NormStatus::Feasible.name()) - pct(NormStatus::Infeasible.name()),
            }
        })
        .collect()
}

/// Seconds per component, grouped as mesh (mesh and quadrature), stencil,
/// M opt. (norm LP), S&E (cell operators and assembly), A (dissipation) and
/// system (steady matrix and its factorization).
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TimingRow {
    pub geometry: GeometryName,
    pub seed: u64,
    pub p: usize,
    pub resolution: usize,
    pub n: usize,
    pub status: String,
    pub mesh: f64,
    pub stencil: f64,
    pub m_opt: f64,
    pub s_and_e: f64,
    pub a: f64,
    pub system: f64,
    pub note: String,
}

pub fn timing(cfg: &RunConfig) -> Vec<TimingRow> {
    // serial, so components do not compete for cores
    accuracy_tasks(cfg)
        .iter()
        .map(|&(p, r, seed)| {
            let go = || -> anyhow::Result<TimingRow> {
                let (geo, nodes) = sample(cfg, r, seed)?;
                let (b, t) = timed_build(&geo, &nodes, &build_options(cfg, p))?;
                let start = Instant::now();
                let sys = AdvectionSystem::new(
                    &b.global,
                    (b.diss.eps > 0.0).then_some(&b.diss),
                    &nodes.coords,
                    Box::new(|_| [1.0, 1.0]),
                    Box::new(|x, _| manufactured(x)),
                    Some(Box::new(|x, _| 2.0 * manufactured(x))),
                )?;
                solve_steady(&sys)?;
                let system = start.elapsed().as_secs_f64();
                Ok(TimingRow {
                    geometry: cfg.geometry.kind,
                    seed,
                    p,
                    resolution: r.leading(),
                    n: nodes.len(),
                    status: b.solution.status.name().into(),
                    mesh: t.get(Stage::Mesh) + t.get(Stage::Quadrature),
                    stencil: t.get(Stage::Stencils),
                    m_opt: t.get(Stage::NormLp),
                    s_and_e: t.get(Stage::CellOperators) + t.get(Stage::Assembly),
                    a: t.get(Stage::Dissipation),
                    system,
                    note: String::new(),
                })
            };
            go().unwrap_or_else(|e| TimingRow {
                geometry: cfg.geometry.kind,
                seed,
                p,
                resolution: r.leading(),
                n: 0,
                status: "error".into(),
                mesh: f64::NAN,
                stencil: f64::NAN,
                m_opt: f64::NAN,
                s_and_e: f64::NAN,
                a: f64::NAN,
                system: f64::NAN,
                note: format!("{e:#}"),
            })
        })
        .collect()
}

/// Run the configured study and write its CSV files into `out`.
pub fn cmd_study(cfg: &RunConfig, out: &Path) -> anyhow::Result<Vec<std::path::PathBuf>> {
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let mut written = Vec::new();
    let mut put = |name: &str, f: &dyn Fn(&Path) -> anyhow::Result<()>| -> anyhow::Result<()> {
        let path = out.join(name);
        f(&path)?;
        written.push(path);
        Ok(())
    };
    match cfg.study {
        StudyKind::Build => anyhow::bail!("study kind \"build\" belongs to the build command"),
        StudyKind::QuadAccuracy | StudyKind::Steady => {
            let rows = if cfg.study == StudyKind::Steady { steady(cfg) } else { quad_accuracy(cfg) };
            let stem = if cfg.study == StudyKind::Steady { "steady" } else { "quad_accuracy" };
            put(&format!("{stem}.csv"), &|p| write_csv(p, &rows))?;
            let r = rates(&rows);
            put(&format!("{stem}_rates.csv"), &|p| write_csv(p, &r))?;
        }
        StudyKind::Unsteady => {
            let rows = unsteady(cfg);
            put("unsteady.csv", &|p| write_csv(p, &rows))?;
        }
        StudyKind::SuccessRate => {
            let rows = success_rate(cfg)?;
            put("success_samples.csv", &|p| write_csv(p, &rows))?;
            let s = success_summary(&rows);
            put("success_rate.csv", &|p| write_csv(p, &s))?;
        }
        StudyKind::Timing => {
            let rows = timing(cfg);
            put("timing.csv", &|p| write_csv(p, &rows))?;
        }
    }
    Ok(written)
}
