//! Acceptance criteria 1 to 7. Prints one PASS/FAIL line per criterion
//! and exits nonzero if any fails. `ACCEPTANCE=1,7` runs a subset.

#![allow(clippy::too_many_arguments)]

use std::process::ExitCode;
use std::time::Instant;

use pcsbp::checks::{dissipation_checks, pair_checks, DissipationChecks};
use pcsbp::config::{GeometryName, RunConfig};
use pcsbp::run::timed_build;
use pcsbp::studies::{rates, success_rate, success_summary, vortex_run, AccuracyRow, RateRow};
use pcsbp_core::advection::{nominal_h, solve_steady, AdvectionSystem};
use pcsbp_core::assembly::{assemble, five_sum_residual, global_vandermonde, pair_residuals};
use pcsbp_core::cellops::{build_cell_operators, dense_skew_solve, mesh_quadrature};
use pcsbp_core::geometry::{exact_integral, make_geometry, sample_nodes, study_integrand, Geometry, GeometryKind, NodeSet, Resolution, Rng, SamplerConfig};
use pcsbp_core::mesh::{build_mesh_on_grid, CellKind};
use pcsbp_core::pipeline::{Build, BuildOptions};
use pcsbp_core::stencil::build_stencils;

const SEEDS: [u64; 3] = [0, 1, 2];

struct Verdict {
    id: usize,
    pass: bool,
    summary: String,
}

/// Dissipation checks of every operator built along the way.
#[derive(Default)]
struct Ledger {
    diss: Vec<(String, DissipationChecks)>,
}

impl Ledger {
    fn record(&mut self, label: String, b: &Build, nodes: &NodeSet) {
        self.diss.push((label, dissipation_checks(&b.diss, &nodes.coords, b.p, 20, 17)));
    }
}

fn geometry(kind: GeometryKind) -> Geometry {
    make_geometry(kind).expect("study geometry")
}

fn nodes(geo: &Geometry, res: Resolution, seed: u64) -> NodeSet {
    sample_nodes(&SamplerConfig::new(res, seed), geo).expect("node sampling")
}

fn build_case(geo: &Geometry, ns: &NodeSet, p: usize) -> Build {
    timed_build(geo, ns, &BuildOptions::new(p)).expect("operator build").0
}

fn criterion_1(ledger: &mut Ledger) -> Verdict {
    let cases = [
        ("box-circle n_x=20", GeometryKind::BoxCircle, Resolution::Square(20)),
        ("annulus n_r=12", GeometryKind::Annulus, Resolution::Polar { n_r: 12, n_theta: 72 }),
        ("airfoil n_y=8", GeometryKind::Airfoil, Resolution::Airfoil(8)),
    ];
    let mut pass = true;
    let (mut worst_acc, mut worst_skew, mut worst_bnd) = (0.0f64, 0.0f64, 0.0f64);
    for (label, kind, res) in cases {
        let geo = geometry(kind);
        let ns = nodes(&geo, res, 0);
        for p in 1..=4 {
            let start = Instant::now();
            let b = build_case(&geo, &ns, p);
            let r = pair_checks(&b, &geo, &ns).expect("pair checks");
            let acc = r[0].accuracy.max(r[1].accuracy);
            let skew = r[0].skew.max(r[1].skew);
            let bnd = r[0].boundary.max(r[1].boundary);
            let ok = acc <= 1e-9 && skew <= 1e-12 && bnd <= 1e-7;
            pass &= ok;
            worst_acc = worst_acc.max(acc);
            worst_skew = worst_skew.max(skew);
            worst_bnd = worst_bnd.max(bnd);
            println!(
                "  [1] {label} p={p} N={} norm {}: accuracy {acc:.1e}, skew {skew:.1e}, boundary {bnd:.1e} ({:.1} s)",
                ns.len(),
                b.solution.status.name(),
                start.elapsed().as_secs_f64()
            );
            ledger.record(format!("{label} p={p}"), &b, &ns);
        }
    }
    Verdict {
        id: 1,
        pass,
        summary: format!("worst accuracy {worst_acc:.1e} (<= 1e-9), skew {worst_skew:.1e} (<= 1e-12), boundary {worst_bnd:.1e} (<= 1e-7)"),
    }
}

struct Sweep {
    quad: Vec<AccuracyRow>,
    steady: Vec<AccuracyRow>,
    /// Finest-resolution `sum m |f|` per degree, for the round-off floor.
    magnitude: Vec<(GeometryName, usize, f64)>,
}

fn manufactured(x: [f64; 2]) -> f64 {
    (x[0] + x[1]).exp()
}

fn row(geometry: GeometryName, seed: u64, p: usize, resolution: usize, ns: &NodeSet, b: &Build, value: f64, error: f64) -> AccuracyRow {
    AccuracyRow {
        geometry,
        seed,
        p,
        resolution,
        n: ns.len(),
        h: nominal_h(&b.global.m),
        status: b.solution.status.name().into(),
        value,
        error,
        note: String::new(),
    }
}

/// Quadrature errors (p = 1..4) and steady errors (p = 1..3) from one build
/// per sample. Quadrature uses the last `quad_levels` resolutions, the
/// steady problem the first `steady_levels`.
fn accuracy_sweep(
    name: GeometryName,
    kind: GeometryKind,
    resolutions: &[(usize, Resolution)],
    degrees: &[usize],
    quad_levels: usize,
    steady_levels: usize,
    steady_max_p: usize,
    ledger: &mut Ledger,
) -> Sweep {
    let geo = geometry(kind);
    let mut sweep = Sweep { quad: Vec::new(), steady: Vec::new(), magnitude: Vec::new() };
    for &p in degrees {
        for (k, &(lead, res)) in resolutions.iter().enumerate() {
            let quad = k + quad_levels >= resolutions.len();
            let steady = k < steady_levels && p <= steady_max_p;
            if !quad && !steady {
                continue;
            }
            for seed in SEEDS {
                let start = Instant::now();
                let ns = nodes(&geo, res, seed);
                let b = build_case(&geo, &ns, p);
                let mut line = format!("  [2/3] {name:?} res={lead} seed={seed} p={p} N={} norm {}", ns.len(), b.solution.status.name());
                if quad {
                    let f: Vec<f64> = ns.coords.iter().map(|&x| study_integrand(&geo.shape, x)).collect();
                    let value: f64 = f.iter().zip(&b.global.m).map(|(f, m)| f * m).sum();
                    let exact = exact_integral(&geo.shape).expect("reference integral");
                    let err = (value - exact).abs();
                    line += &format!(", quad error {err:.2e}");
                    sweep.quad.push(row(name, seed, p, lead, &ns, &b, value, err));
                    if k + 1 == resolutions.len() && seed == SEEDS[0] {
                        let mag = f.iter().zip(&b.global.m).map(|(f, m)| (f * m).abs()).sum();
                        sweep.magnitude.push((name, p, mag));
                    }
                }
                if steady {
                    let sys = AdvectionSystem::new(
                        &b.global,
                        Some(&b.diss),
                        &ns.coords,
                        Box::new(|_| [1.0, 1.0]),
                        Box::new(|x, _| manufactured(x)),
                        Some(Box::new(|x, _| 2.0 * manufactured(x))),
                    )
                    .expect("advection system");
                    match solve_steady(&sys) {
                        Ok((u, rep)) => {
                            let err = sys.l2_error(&u, manufactured);
                            line += &format!(", steady error {err:.2e} (residual {:.0e})", rep.linear_residual);
                            sweep.steady.push(row(name, seed, p, lead, &ns, &b, rep.linear_residual, err));
                        }
                        Err(e) => {
                            line += &format!(", steady solve failed: {e}");
                            sweep.steady.push(row(name, seed, p, lead, &ns, &b, f64::NAN, f64::NAN));
                        }
                    }
                }
                println!("{line} ({:.1} s)", start.elapsed().as_secs_f64());
                ledger.record(format!("{name:?} res={lead} seed={seed} p={p}"), &b, &ns);
            }
        }
    }
    sweep
}

fn finest(r: &[RateRow], p: usize) -> Option<&RateRow> {
    r.iter().rev().find(|r| r.p == p)
}

fn criteria_2_3(run2: bool, run3: bool, ledger: &mut Ledger) -> Vec<Verdict> {
    // quadrature: the four finest box-circle levels; steady: the four coarsest
    let box_res: Vec<(usize, Resolution)> = [10, 20, 40, 80, 160].iter().map(|&n| (n, Resolution::Square(n))).collect();
    let ann_res: Vec<(usize, Resolution)> = [6, 12, 24, 48].iter().map(|&n| (n, Resolution::Polar { n_r: n, n_theta: 6 * n })).collect();
    let foil_res: Vec<(usize, Resolution)> = [4, 8, 16, 32].iter().map(|&n| (n, Resolution::Airfoil(n))).collect();
    let degrees: Vec<usize> = if run2 { vec![1, 2, 3, 4] } else { vec![1, 2, 3] };
    let steady_p = if run3 { 3 } else { 0 };
    let quad_levels = if run2 { 4 } else { 0 };
    let sweeps = [
        accuracy_sweep(GeometryName::BoxCircle, GeometryKind::BoxCircle, &box_res, &degrees, quad_levels, 4, steady_p, ledger),
        accuracy_sweep(GeometryName::Annulus, GeometryKind::Annulus, &ann_res, &degrees, quad_levels, 4, steady_p, ledger),
    ];
    let mut out = Vec::new();
    if run2 {
        let mut pass = true;
        let mut parts = Vec::new();
        for s in &sweeps {
            let r = rates(&s.quad);
            for p in 1..=4 {
                let f = finest(&r, p).expect("rates");
                let need = if p == 4 { 0.8 } else { 0.9 } * 2.0 * p as f64;
                let mag = s.magnitude.iter().find(|m| m.1 == p).map_or(f64::NAN, |m| m.2);
                let floor = p == 4 && f.error_fine <= 1e-10 * mag;
                let ok = f.slope >= need || floor;
                pass &= ok;
                let geo = s.quad[0].geometry;
                println!(
                    "  [2] {geo:?} p={p}: finest-pair slope {:.2} (need {need:.1}{}), errors {:.2e} -> {:.2e}",
                    f.slope,
                    if floor { ", at round-off floor" } else { "" },
                    f.error_coarse,
                    f.error_fine
                );
                parts.push(format!("{geo:?} p{p} {:.2}", f.slope));
            }
        }
        out.push(Verdict { id: 2, pass, summary: format!("slopes {}", parts.join(", ")) });
    }
    if run3 {
        let foil = accuracy_sweep(GeometryName::Airfoil, GeometryKind::Airfoil, &foil_res, &[1], 0, 4, 1, ledger);
        let mut pass = true;
        let mut parts = Vec::new();
        for s in sweeps.iter().chain(std::iter::once(&foil)) {
            let r = rates(&s.steady);
            let geo = s.steady[0].geometry;
            let degrees = if geo == GeometryName::Airfoil { 1..=1 } else { 1..=3 };
            for p in degrees {
                let f = finest(&r, p).expect("rates");
                let need = if geo == GeometryName::Airfoil { 0.9 } else { 0.85 * (p + 1) as f64 };
                let ok = f.slope >= need;
                pass &= ok;
                println!("  [3] {geo:?} p={p}: finest-pair slope {:.2} (need {need:.2}), errors {:.2e} -> {:.2e}", f.slope, f.error_coarse, f.error_fine);
                parts.push(format!("{geo:?} p{p} {:.2}", f.slope));
            }
        }
        out.push(Verdict { id: 3, pass, summary: format!("slopes {}", parts.join(", ")) });
    }
    out
}

fn criterion_4() -> Verdict {
    let cfg = RunConfig::from_json(
        r#"{"geometry": {"kind": "conic", "resolution": 8}, "study": "success-rate", "samples": 50, "seeds": [1],
            "degrees": [1, 2, 4], "resolutions": [8, 16, 32], "tau_regimes": ["small", "tiny"]}"#,
    )
    .expect("config");
    let rows = success_rate(&cfg).expect("success-rate study");
    let summary = success_summary(&rows);
    let pct = |t: &str, p: usize, nx: usize| {
        summary.iter().find(|s| s.tau_regime == t && s.p == p && s.n_x == nx).map_or(f64::NAN, |s| s.feasible_pct)
    };
    for s in &summary {
        println!(
            "  [4] tau {} p={} n_x={}: feasible {:.0}%, infeasible {:.0}%, undetermined {:.0}%",
            s.tau_regime, s.p, s.n_x, s.feasible_pct, s.infeasible_pct, s.undetermined_pct
        );
    }
    let low = [(1, 8), (1, 16), (2, 8), (2, 16)].iter().all(|&(p, nx)| pct("small", p, nx) >= 96.0);
    let trend = pct("small", 4, 32) > pct("small", 4, 8);
    let spread = summary
        .iter()
        .filter(|s| s.tau_regime == "small")
        .map(|s| (s.feasible_pct - pct("tiny", s.p, s.n_x)).abs())
        .fold(0.0, f64::max);
    Verdict {
        id: 4,
        pass: low && trend && spread <= 5.0,
        summary: format!(
            "p=1: {:.0}/{:.0}%, p=2: {:.0}/{:.0}% (>= 96), p=4: {:.0}% at n_x=32 vs {:.0}% at 8, small-tiny spread {spread:.0} points (<= 5)",
            pct("small", 1, 8),
            pct("small", 1, 16),
            pct("small", 2, 8),
            pct("small", 2, 16),
            pct("small", 4, 32),
            pct("small", 4, 8)
        ),
    }
}

fn criterion_5(ledger: &mut Ledger) -> Verdict {
    let geo = geometry(GeometryKind::Annulus);
    let res = Resolution::Polar { n_r: 24, n_theta: 144 };
    let ns = nodes(&geo, res, 0);
    let t_final = 2.0 * std::f64::consts::PI;
    let mut pass = true;
    let mut err_diss = Vec::new();
    for p in [1, 4] {
        let b = build_case(&geo, &ns, p);
        ledger.record(format!("vortex p={p}"), &b, &ns);
        for with_diss in [false, true] {
            let start = Instant::now();
            let r = vortex_run(&b, &ns, t_final, with_diss, 0, pcsbp::config::ResolutionSpec::Pair([24, 144])).expect("vortex run");
            let ok = if with_diss { r.max_rate <= 0.0 } else { r.max_abs_rate <= 1e-10 * r.initial_energy };
            pass &= ok;
            if with_diss {
                err_diss.push(r.l2_error);
            }
            println!(
                "  [5] p={p} dissipation {with_diss}: {} steps, max|u'r| {:.2e}, max u'r {:.2e}, energy {:.3e}, L2 error {:.3e} ({:.0} s)",
                r.steps,
                r.max_abs_rate,
                r.max_rate,
                r.initial_energy,
                r.l2_error,
                start.elapsed().as_secs_f64()
            );
        }
    }
    let order = err_diss[1] < err_diss[0];
    Verdict {
        id: 5,
        pass: pass && order,
        summary: format!("energy rates within bounds: {pass}; dissipative L2 error p=4 {:.3e} vs p=1 {:.3e}", err_diss[1], err_diss[0]),
    }
}

fn criterion_6(ledger: &mut Ledger) -> Verdict {
    if ledger.diss.is_empty() {
        // run alone: check the criterion-1 operators
        criterion_1(ledger);
    }
    let mut worst = DissipationChecks { min_rayleigh: f64::INFINITY, ..Default::default() };
    let mut failed = Vec::new();
    for (label, c) in &ledger.diss {
        let ok = c.annihilation <= 1e-10 && c.conservation <= 1e-12 && c.min_rayleigh >= -1e-12;
        if !ok {
            failed.push(label.clone());
        }
        worst.annihilation = worst.annihilation.max(c.annihilation);
        worst.conservation = worst.conservation.max(c.conservation);
        worst.min_rayleigh = worst.min_rayleigh.min(c.min_rayleigh);
        worst.asymmetry = worst.asymmetry.max(c.asymmetry);
    }
    for f in &failed {
        println!("  [6] failed: {f}");
    }
    Verdict {
        id: 6,
        pass: failed.is_empty(),
        summary: format!(
            "{} operators: max |AV|/|V| {:.1e}, max |1'A| {:.1e}, min u'Au/u'u {:.1e}, max |A - A'| {:.1e}",
            ledger.diss.len(),
            worst.annihilation,
            worst.conservation,
            worst.min_rayleigh,
            worst.asymmetry
        ),
    }
}

fn criterion_7() -> Verdict {
    let geo = geometry(GeometryKind::Box);
    let mut rng = Rng::new(3);
    let nodes: Vec<[f64; 2]> = (0..9)
        .map(|k| {
            let (i, j) = ((k % 3) as f64, (k / 3) as f64);
            [(i + 0.5 + rng.uniform(-0.25, 0.25)) / 3.0, (j + 0.5 + rng.uniform(-0.25, 0.25)) / 3.0]
        })
        .collect();
    let p = 1;
    let mesh = build_mesh_on_grid(&geo, &nodes, None, [3, 3]).expect("mesh");
    let uncut = mesh.cells.len() == 9 && mesh.cells.iter().all(|c| c.kind == CellKind::Interior);
    let quad = mesh_quadrature(&mesh, &geo, p).expect("quadrature");
    let stencils = build_stencils(&mesh, &nodes, p, None, None).expect("stencils");
    let ops = build_cell_operators(&stencils, &nodes, &quad, &mesh, p).expect("cell operators");
    let (mut identity, mut oracle_identity, mut diff) = (0.0f64, 0.0f64, 0.0f64);
    for op in &ops {
        let v = &op.vander.values;
        for axis in 0..2 {
            let d = if axis == 0 { &op.vander.dx } else { &op.vander.dy };
            let g = d.scale_rows(&op.m).axpy(-0.5, &op.e(axis).matmul(v));
            let s = op.s(axis);
            let dense = dense_skew_solve(v, &g);
            identity = identity.max(s.matmul(v).sub(&g).max_abs()).max(s.add(&s.transpose()).max_abs());
            oracle_identity = oracle_identity.max(dense.matmul(v).sub(&g).max_abs());
            diff = diff.max(s.sub(&dense).max_abs());
        }
    }
    let global = assemble(nodes.len(), p, &ops, &quad).expect("assembly");
    let vander = global_vandermonde(&nodes, p);
    let acc = (0..2).map(|a| pair_residuals(&global, &vander, a, None).accuracy).fold(0.0, f64::max);
    let five = (0..2).map(|a| five_sum_residual(&ops, &quad, &nodes, p, a).0).fold(0.0, f64::max);
    println!(
        "  [7] {} cells uncut: {uncut}; |S V - G| {identity:.1e}, dense |S V - G| {oracle_identity:.1e}, |S - S_dense| {diff:.1e}, global accuracy {acc:.1e}, five-sum {five:.1e}",
        mesh.cells.len()
    );
    Verdict {
        id: 7,
        pass: uncut && identity <= 1e-12 && oracle_identity <= 1e-12 && diff <= 1e-10 && five <= 1e-9,
        summary: format!("skew identity {identity:.1e} (<= 1e-12), dense cross-check {diff:.1e}, five-sum {five:.1e} (<= 1e-9)"),
    }
}

fn main() -> ExitCode {
    let selected: Vec<usize> = match std::env::var("ACCEPTANCE") {
        Ok(s) if !s.trim().is_empty() => s.split(',').filter_map(|t| t.trim().parse().ok()).collect(),
        _ => (1..=7).collect(),
    };
    let want = |k: usize| selected.contains(&k);
    let mut ledger = Ledger::default();
    let mut verdicts = Vec::new();
    let start = Instant::now();
    if want(7) {
        verdicts.push(criterion_7());
    }
    if want(1) {
        verdicts.push(criterion_1(&mut ledger));
    }
    if want(4) {
        verdicts.push(criterion_4());
    }
    if want(5) {
        verdicts.push(criterion_5(&mut ledger));
    }
    if want(2) || want(3) {
        verdicts.extend(criteria_2_3(want(2), want(3), &mut ledger));
    }
    if want(6) {
        verdicts.push(criterion_6(&mut ledger));
    }
    verdicts.sort_by_key(|v| v.id);
    println!("acceptance ({:.0} s):", start.elapsed().as_secs_f64());
    for v in &verdicts {
        println!("criterion {}: {} - {}", v.id, if v.pass { "PASS" } else { "FAIL" }, v.summary);
    }
    if verdicts.iter().all(|v| v.pass) {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
