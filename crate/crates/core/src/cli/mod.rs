//! Subcommand implementations. Each one resolves the scenario, runs the
//! library and writes tables plus a manifest into the output directory.

pub mod output;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::json;

use mgp::almost_markov::{feasible_kernel, markovize as markovize_kernel, BalancedFlux, KernelMode};
use mgp::bell::{sample_bell_ensemble, Lattice};
use mgp::currents::{edge_selection, vertex_currents, FlowField, FluxReport};
use mgp::experiments::{bell_ladder, kirchhoff_ladder, loglog_slope, ratios, reversal_experiment};
use mgp::graph::{EdgeId, MetricGraph, VertexCondition, VertexId};
use mgp::grid::Grid;
use mgp::hamiltonian::HamiltonianMatrix;
use mgp::sampler::{equivariance_distance, impossibility_scenario, sample_ensemble, EnsembleConfig, TurnRule};
use mgp::scenario::{Scenario, Simulation, BUNDLED};
use mgp::Error;

use crate::Common;
use output::{row, ManifestInfo, Output, Table};

pub enum Usage {
    Usage(String),
    Failed(Error),
}

impl From<Error> for Usage {
    fn from(e: Error) -> Self {
        Usage::Failed(e)
    }
}

type Res = std::result::Result<(), Usage>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum RuleArg {
    Minimal,
    Argmax,
    AlmostMarkov,
}

fn load(c: &Common) -> std::result::Result<Scenario, Usage> {
    let Some(name) = &c.scenario else {
        return Err(Usage::Usage("--scenario is required for this subcommand".into()));
    };
    Ok(Scenario::resolve(name)?)
}

fn out_dir(c: &Common) -> PathBuf {
    c.out.clone().unwrap_or_else(|| PathBuf::from("out"))
}

fn finish(out: Output, c: &Common, sub: &str, sc: Option<&Scenario>, parameters: serde_json::Value, seed: Option<u64>) -> Res {
    out.finish(ManifestInfo {
        subcommand: sub,
        scenario_source: c.scenario.as_deref(),
        scenario: sc,
        parameters,
        seed,
    })?;
    Ok(())
}

fn condition_name(c: &VertexCondition) -> String {
    match *c {
        VertexCondition::Dirichlet => "dirichlet".into(),
        VertexCondition::Robin { alpha, beta } if beta == 0.0 => format!("kirchhoff(alpha={alpha})"),
        VertexCondition::Robin { alpha, beta } => format!("robin(alpha={alpha}, beta={beta})"),
    }
}

fn edge_label(g: &MetricGraph, e: EdgeId) -> String {
    g.edge(e).label.clone()
}

fn vertex_label(g: &MetricGraph, q: VertexId) -> String {
    g.vertex(q).label.clone()
}

pub fn scenarios() -> Res {
    for (name, _) in BUNDLED {
        let s = Scenario::bundled(name).expect("bundled");
        println!("{name}\t{}", s.description);
    }
    Ok(())
}

#[derive(Serialize)]
struct VertexInfo {
    id: String,
    degree: usize,
    condition: String,
    edges: Vec<String>,
}

#[derive(Serialize)]
struct EdgeInfo {
    id: String,
    from: String,
    to: String,
    length: f64,
    intervals: usize,
    spacing: f64,
}

#[derive(Serialize)]
struct ValidateReport {
    scenario: String,
    vertices: Vec<VertexInfo>,
    edges: Vec<EdgeInfo>,
    total_length: f64,
    grid_points: usize,
    unknowns: usize,
    nonzeros: usize,
    symmetry_residual: f64,
    warnings: Vec<String>,
}

pub fn validate(c: &Common) -> Res {
    let sc = load(c)?;
    let g = sc.graph()?;
    let grid = Grid::build(&g, sc.numerics.h)?;
    let ham = HamiltonianMatrix::assemble(&g, &grid, sc.numerics.hbar)?;
    sc.packets(&g)?;
    let report = ValidateReport {
        scenario: sc.name.clone(),
        vertices: (0..g.vertex_count())
            .map(|i| {
                let q = VertexId(i);
                VertexInfo {
                    id: vertex_label(&g, q),
                    degree: g.degree(q),
                    condition: condition_name(&g.vertex(q).condition),
                    edges: g.incident(q).iter().map(|&(e, _)| edge_label(&g, e)).collect(),
                }
            })
            .collect(),
        edges: g
            .edges()
            .iter()
            .enumerate()
            .map(|(i, e)| EdgeInfo {
                id: e.label.clone(),
                from: vertex_label(&g, e.from),
                to: vertex_label(&g, e.to),
                length: e.length,
                intervals: grid.edge(EdgeId(i)).intervals,
                spacing: grid.edge(EdgeId(i)).spacing,
            })
            .collect(),
        total_length: g.total_length(),
        grid_points: grid.len(),
        unknowns: ham.dim(),
        nonzeros: ham.nnz(),
        symmetry_residual: ham.check_hermitian(),
        warnings: sc.warnings(&g),
    };
    match c.format {
        output::Format::Json => println!("{}", serde_json::to_string_pretty(&report).expect("serializes")),
        output::Format::Csv => {
            println!("scenario {}: {} vertices, {} edges, total length {}", report.scenario, g.vertex_count(), g.edge_count(), report.total_length);
            for v in &report.vertices {
                println!("  vertex {:<8} degree {}  {}  [{}]", v.id, v.degree, v.condition, v.edges.join(" "));
            }
            for e in &report.edges {
                println!("  edge {:<8} {} -> {}  length {}  {} intervals of {:.6}", e.id, e.from, e.to, e.length, e.intervals, e.spacing);
            }
            println!(
                "  grid points {}, unknowns {}, nonzeros {}, symmetry residual {:e}",
                report.grid_points, report.unknowns, report.nonzeros, report.symmetry_residual
            );
            for w in &report.warnings {
                println!("  warning: {w}");
            }
        }
    }
    if let Some(dir) = &c.out {
        let mut out = Output::create(dir, c.format)?;
        out.report("validate", "validate", &report)?;
        finish(out, c, "validate", Some(&sc), json!({}), None)?;
    }
    Ok(())
}

pub fn hamiltonian(c: &Common) -> Res {
    let sc = load(c)?;
    let g = sc.graph()?;
    let grid = Grid::build(&g, sc.numerics.h)?;
    let ham = HamiltonianMatrix::assemble(&g, &grid, sc.numerics.hbar)?;
    let mut out = Output::create(&out_dir(c), c.format)?;
    out.text("hamiltonian.csv", |w| {
        writeln!(w, "# schema: mgp-hamiltonian/{}", output::SCHEMA_VERSION)?;
        ham.write_triplets(w)
    })?;
    let mut map = Table::new("active_points", &["active", "global", "edge", "x"]);
    for (i, &gi) in ham.active_to_global().iter().enumerate() {
        let (e, x) = grid.location(&g, gi);
        map.push(row![i, gi, edge_label(&g, e), x]);
    }
    out.table(&map)?;
    finish(out, c, "hamiltonian", Some(&sc), json!({ "symmetry_residual": ham.check_hermitian() }), None)
}

fn state_rows(table: &mut Table, sim: &Simulation, k: usize) {
    let st = &sim.record.states[k];
    for (e, eg) in sim.grid.edges().iter().enumerate() {
        for (i, &gi) in eg.points.iter().enumerate() {
            let p = st.psi[gi];
            table.push(row![st.t, edge_label(&sim.graph, EdgeId(e)), eg.coordinate(i), p.re, p.im, p.norm_sqr()]);
        }
    }
}

pub fn evolve(c: &Common) -> Res {
    let sc = load(c)?;
    let sim = sc.simulate()?;
    let mut out = Output::create(&out_dir(c), c.format)?;
    let mut idx = vec![0];
    idx.extend(sim.record.outputs.iter().copied().filter(|&k| k != 0));
    let mut states = Table::new("states", &["t", "edge_id", "x", "re", "im", "rho"]);
    for &k in &idx {
        state_rows(&mut states, &sim, k);
    }
    out.table(&states)?;
    let mut norm = Table::new("norm", &["t", "norm_sqr"]);
    let mut drift: f64 = 0.0;
    for st in &sim.record.states {
        let n = st.norm_sqr(&sim.grid);
        drift = drift.max((n - 1.0).abs());
        norm.push(row![st.t, n]);
    }
    out.table(&norm)?;
    out.report(
        "evolve",
        "evolve",
        &json!({
            "steps": sim.record.states.len() - 1,
            "spacing": sim.record.spacing,
            "max_norm_drift": drift,
            "output_times": idx.iter().map(|&k| sim.record.states[k].t).collect::<Vec<_>>(),
        }),
    )?;
    finish(out, c, "evolve", Some(&sc), json!({}), None)
}

#[derive(Serialize)]
struct LadderReport {
    vertex: String,
    h: Vec<f64>,
    max_residual: Vec<f64>,
    ratios: Vec<f64>,
    slope: f64,
}

pub fn flux(c: &Common, refine: Option<usize>) -> Res {
    let sc = load(c)?;
    let sim = sc.simulate()?;
    let g = &sim.graph;
    let mut out = Output::create(&out_dir(c), c.format)?;
    let mut table = Table::new("flux", &["t", "vertex", "edge", "s", "s_plus", "s_minus", "residual"]);
    for st in &sim.record.states {
        for q in (0..g.vertex_count()).map(VertexId) {
            if g.vertex(q).condition.is_dirichlet() {
                continue;
            }
            let r = vertex_currents(g, &sim.grid, st, q, sim.hbar())?;
            for f in &r.edges {
                table.push(row![st.t, vertex_label(g, q), edge_label(g, f.edge), f.s, f.s_plus, f.s_minus, r.kirchhoff_residual]);
            }
        }
    }
    out.table(&table)?;
    let mut params = json!({});
    if let Some(k) = refine {
        if k < 2 {
            return Err(Usage::Usage("--refine needs at least 2 rungs".into()));
        }
        let q = sc.probe_vertex(g)?;
        let hs: Vec<f64> = (0..k).map(|i| sc.numerics.h / 2f64.powi(i as i32)).collect();
        let ladder = kirchhoff_ladder(&sc, q, &hs)?;
        let mut t = Table::new("residual_ladder", &["h", "vertex", "max_residual"]);
        for r in &ladder {
            t.push(row![r.h, vertex_label(g, q), r.max_residual]);
        }
        out.table(&t)?;
        let res: Vec<f64> = ladder.iter().map(|r| r.max_residual).collect();
        out.report(
            "residual_ladder",
            "residual-ladder",
            &LadderReport {
                vertex: vertex_label(g, q),
                slope: loglog_slope(&hs, &res),
                ratios: ratios(&res),
                h: hs,
                max_residual: res,
            },
        )?;
        params = json!({ "refine": k });
    }
    finish(out, c, "flux", Some(&sc), params, None)
}

fn output_times(sc: &Scenario) -> Vec<f64> {
    if sc.run.output_times.is_empty() {
        vec![0.5 * sc.run.t_final, sc.run.t_final]
    } else {
        sc.run.output_times.clone()
    }
}

#[derive(Serialize)]
struct EquivarianceEntry {
    t: f64,
    tv_edges: f64,
    tv_bins: f64,
    edges: Vec<String>,
    empirical_mass: Vec<f64>,
    exact_mass: Vec<f64>,
}

#[derive(Serialize)]
struct SampleReport {
    rule: RuleArg,
    paths: usize,
    seed: u64,
    bins_per_edge: usize,
    times: Vec<EquivarianceEntry>,
    terminations: BTreeMap<String, usize>,
}

pub fn sample(c: &Common, rule: RuleArg, dense: bool) -> Res {
    let sc = load(c)?;
    let paths = c.ensemble.map_or(sc.run.ensemble, |n| n as usize);
    if paths == 0 {
        return Err(Usage::Usage("--ensemble must be at least 1".into()));
    }
    let seed = c.seed.unwrap_or(sc.run.seed);
    let sim = sc.simulate()?;
    let g = &sim.graph;
    let field = FlowField::new(g, &sim.grid, &sim.record, sim.hbar());
    let mut config = EnsembleConfig::new(paths, seed, output_times(&sc));
    config.bins_per_edge = sc.run.bins_per_edge;
    config.integrator.dense = dense;
    config.rule = match rule {
        RuleArg::Minimal => TurnRule::Minimal,
        RuleArg::Argmax => TurnRule::Argmax,
        RuleArg::AlmostMarkov => TurnRule::AlmostMarkov { seed },
    };
    let run = sample_ensemble(&field, &config)?;
    let mut out = Output::create(&out_dir(c), c.format)?;

    let mut ptab = Table::new("paths", &["path_id", "t", "edge", "x"]);
    let mut ttab = Table::new("turns", &["path_id", "t", "vertex", "in_edge", "out_edge"]);
    for tr in &run.trajectories {
        for seg in &tr.segments {
            for &(t, x) in &seg.samples {
                ptab.push(row![tr.path_id, t, edge_label(g, seg.edge), x]);
            }
        }
        for ev in &tr.turns {
            ttab.push(row![tr.path_id, ev.t, vertex_label(g, ev.vertex), edge_label(g, ev.in_edge), edge_label(g, ev.out_edge)]);
        }
    }
    out.table(&ptab)?;
    out.table(&ttab)?;

    let stats = &run.stats;
    let mut stab = Table::new("stats", &["t", "edge", "empirical_mass", "exact_mass", "tv"]);
    let mut btab = Table::new("bins", &["t", "edge", "bin", "x_lo", "x_hi", "empirical", "exact"]);
    let mut times = Vec::new();
    for k in 0..stats.output_times.len() {
        let eq = equivariance_distance(stats, &field, k);
        for e in 0..g.edge_count() {
            stab.push(row![eq.t, edge_label(g, EdgeId(e)), eq.empirical_mass[e], eq.exact_mass[e], eq.tv_edges]);
            let len = g.edge(EdgeId(e)).length;
            let nb = stats.bins_per_edge;
            for b in 0..nb {
                let (lo, hi) = (len * b as f64 / nb as f64, len * (b + 1) as f64 / nb as f64);
                btab.push(row![
                    eq.t,
                    edge_label(g, EdgeId(e)),
                    b,
                    lo,
                    hi,
                    stats.bin_counts[k][e][b] as f64 / stats.paths as f64,
                    field.mass_at(EdgeId(e), lo, hi, eq.t)
                ]);
            }
        }
        times.push(EquivarianceEntry {
            t: eq.t,
            tv_edges: eq.tv_edges,
            tv_bins: eq.tv_bins,
            edges: g.edges().iter().map(|e| e.label.clone()).collect(),
            empirical_mass: eq.empirical_mass,
            exact_mass: eq.exact_mass,
        });
    }
    out.table(&stab)?;
    out.table(&btab)?;
    out.report(
        "equivariance",
        "equivariance",
        &SampleReport {
            rule,
            paths,
            seed,
            bins_per_edge: stats.bins_per_edge,
            times,
            terminations: stats.terminations.iter().map(|(t, n)| (t.as_str().to_string(), *n)).collect(),
        },
    )?;
    finish(out, c, "sample", Some(&sc), json!({ "rule": rule, "paths": paths, "dense": dense }), Some(seed))
}

/// Paths written to the lattice trace table; the exit statistics use all.
const BELL_TRACE_PATHS: usize = 200;

pub fn bell(c: &Common) -> Res {
    let sc = load(c)?;
    let probe = sc.probe.clone().unwrap_or_else(|| mgp::scenario::ProbeSpec {
        vertex: String::new(),
        time: sc.probe_time(),
        epsilons: Vec::new(),
        reference_h: None,
        lattice_dt: None,
        window: None,
    });
    let base = probe.epsilons.first().copied().unwrap_or(sc.numerics.h);
    let k = c
        .epsilon_ladder
        .map_or(if probe.epsilons.is_empty() { 3 } else { probe.epsilons.len() }, |k| k as usize);
    let epsilons: Vec<f64> = match c.epsilon_ladder {
        None if !probe.epsilons.is_empty() => probe.epsilons.clone(),
        _ => (0..k).map(|i| base / 2f64.powi(i as i32)).collect(),
    };
    let finest = epsilons.iter().copied().fold(f64::INFINITY, f64::min);
    let reference_h = probe.reference_h.unwrap_or(finest / 4.0);
    let lattice_dt = probe.lattice_dt.unwrap_or(sc.numerics.dt);
    let paths = c.ensemble.map_or(sc.run.ensemble, |n| n as usize);
    let seed = c.seed.unwrap_or(sc.run.seed);
    let ladder = bell_ladder(&sc, &epsilons, reference_h, lattice_dt, paths, seed)?;

    let mut out = Output::create(&out_dir(c), c.format)?;
    let mut t = Table::new("bell_ladder", &["epsilon", "edge", "empirical", "lattice_exact", "continuum"]);
    for r in &ladder.rungs {
        for (i, e) in ladder.edges.iter().enumerate() {
            t.push(row![r.epsilon, e.as_str(), r.empirical[i], r.lattice_exact[i], ladder.continuum[i]]);
        }
    }
    out.table(&t)?;

    // a short trace of whole lattice paths at the coarsest spacing
    let coarse = sc.with_numerics(epsilons[0], lattice_dt).simulate()?;
    let lattice = Lattice::new(&coarse.grid, &coarse.hamiltonian);
    let trace = sample_bell_ensemble(&lattice, &coarse.record, BELL_TRACE_PATHS.min(paths), seed, coarse.record.t_end());
    let mut ptab = Table::new("bell_paths", &["path_id", "t", "site_edge", "site_x"]);
    for p in &trace {
        let mut push = |t: f64, site: usize| {
            let (e, x) = coarse.grid.location(&coarse.graph, site);
            ptab.push(row![p.path_id, t, edge_label(&coarse.graph, e), x]);
        };
        push(p.start.1, p.start.0);
        for &(t, s) in &p.jumps {
            push(t, s);
        }
    }
    out.table(&ptab)?;
    out.report("bell", "bell", &ladder)?;
    finish(
        out,
        c,
        "bell",
        Some(&sc),
        json!({ "epsilons": epsilons, "reference_h": reference_h, "lattice_dt": lattice_dt, "paths": paths }),
        Some(seed),
    )
}

#[derive(Debug, Deserialize)]
struct FluxRow {
    t: f64,
    vertex: String,
    edge: String,
    s: f64,
}

/// Reports per `(vertex, t)` from a flux table, edges kept in file order.
fn read_flux_table(path: &Path) -> mgp::Result<Vec<(String, Vec<String>, FluxReport)>> {
    let mut rd = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    let mut groups: Vec<(String, f64, Vec<(String, f64)>)> = Vec::new();
    for (i, rec) in rd.deserialize::<FluxRow>().enumerate() {
        let r = rec.map_err(|e| Error::Parse(format!("{} row {}: {e}", path.display(), i + 1)))?;
        match groups.last_mut() {
            Some(g) if g.0 == r.vertex && g.1 == r.t => g.2.push((r.edge, r.s)),
            _ => groups.push((r.vertex, r.t, vec![(r.edge, r.s)])),
        }
    }
    if groups.is_empty() {
        return Err(Error::Parse(format!("{}: no rows", path.display())));
    }
    Ok(groups
        .into_iter()
        .map(|(v, t, edges)| {
            let labels = edges.iter().map(|e| e.0.clone()).collect();
            let report = FluxReport::from_signed(VertexId(0), t, edges.iter().enumerate().map(|(i, e)| (EdgeId(i), e.1)));
            (v, labels, report)
        })
        .collect())
}

fn null_dim(r: &FluxReport) -> usize {
    BalancedFlux::new(r).map_or(0, |b| b.null_dimension())
}

#[derive(Serialize)]
struct MarkovizeReport {
    vertex: String,
    t: f64,
    edges: Vec<String>,
    signed_flux: Vec<f64>,
    kirchhoff_residual: f64,
    null_dimension: usize,
    kernels: usize,
    seed: u64,
    edge_selection: Vec<f64>,
    max_deviation: f64,
    max_constraint_error: f64,
}

pub fn markovize(c: &Common, flux: Option<&Path>, vertex: Option<&str>, time: Option<f64>, kernels: usize) -> Res {
    let sc = match &c.scenario {
        Some(_) => Some(load(c)?),
        None => None,
    };
    let seed = c.seed.unwrap_or(sc.as_ref().map_or(0, |s| s.run.seed));
    let (vname, labels, report) = match flux {
        Some(path) => {
            let groups = read_flux_table(path)?;
            let want_v = vertex.map(str::to_string).or_else(|| {
                let s = sc.as_ref()?;
                let g = s.graph().ok()?;
                Some(g.vertex(s.probe_vertex(&g).ok()?).label.clone())
            });
            let want_t = time.or(sc.as_ref().map(|s| s.probe_time()));
            let candidates: Vec<_> = groups.into_iter().filter(|g| want_v.as_ref().is_none_or(|v| &g.0 == v)).collect();
            let chosen = match want_t {
                Some(t) => candidates.into_iter().min_by(|a, b| (a.2.t - t).abs().total_cmp(&(b.2.t - t).abs())),
                // the richest constraint system in the file
                None => candidates.into_iter().max_by(|a, b| {
                    (null_dim(&a.2), a.2.influx())
                        .partial_cmp(&(null_dim(&b.2), b.2.influx()))
                        .unwrap_or(std::cmp::Ordering::Equal)
                }),
            };
            chosen.ok_or_else(|| Error::Parse(format!("{}: no rows for the requested vertex", path.display())))?
        }
        None => {
            let Some(s) = &sc else {
                return Err(Usage::Usage("markovize needs --flux or --scenario".into()));
            };
            let t = time.unwrap_or(s.probe_time());
            let sim = s.simulate_until(t.min(s.run.t_final), s.numerics.stride)?;
            let q = match vertex {
                Some(v) => sim.graph.vertex_by_label(v).ok_or_else(|| Error::UnresolvedId {
                    id: v.to_string(),
                    context: "--vertex".into(),
                })?,
                None => s.probe_vertex(&sim.graph)?,
            };
            let st = sim.record.state_at(t)?;
            let r = vertex_currents(&sim.graph, &sim.grid, &st, q, sim.hbar())?;
            let labels = r.edges.iter().map(|f| edge_label(&sim.graph, f.edge)).collect();
            // renumber edges by incidence position, as for a flux table
            let r = FluxReport::from_signed(VertexId(0), t, r.edges.iter().enumerate().map(|(i, f)| (EdgeId(i), f.s)));
            (vertex_label(&sim.graph, q), labels, r)
        }
    };
    let sel = edge_selection(&report)?;
    let balanced = BalancedFlux::new(&report)?;
    let mut ktab = Table::new("kernel", &["kernel", "in_edge", "out_edge", "value"]);
    let mut mtab = Table::new("markovized", &["kernel", "edge", "markovized", "edge_selection", "difference"]);
    let mut max_dev: f64 = 0.0;
    let mut max_cons: f64 = 0.0;
    for i in 0..kernels {
        let kern = feasible_kernel(&report, KernelMode::Randomized { seed: seed.wrapping_add(i as u64) })?;
        max_cons = max_cons.max(kern.constraint_error(&balanced));
        let m = markovize_kernel(&kern, &report)?;
        for (f, rowv) in kern.matrix.iter().enumerate() {
            for (e, v) in rowv.iter().enumerate() {
                ktab.push(row![i, labels[f].as_str(), labels[e].as_str(), *v]);
            }
        }
        for (e, (p, q)) in m.probabilities.iter().zip(&sel.probabilities).enumerate() {
            max_dev = max_dev.max((p - q).abs());
            mtab.push(row![i, labels[e].as_str(), *p, *q, p - q]);
        }
    }
    let mut out = Output::create(&out_dir(c), c.format)?;
    out.table(&ktab)?;
    out.table(&mtab)?;
    out.report(
        "markovize",
        "markovize",
        &MarkovizeReport {
            vertex: vname,
            t: report.t,
            edges: labels,
            signed_flux: report.signed(),
            kirchhoff_residual: report.kirchhoff_residual,
            null_dimension: balanced.null_dimension(),
            kernels,
            seed,
            edge_selection: sel.probabilities.clone(),
            max_deviation: max_dev,
            max_constraint_error: max_cons,
        },
    )?;
    finish(
        out,
        c,
        "markovize",
        sc.as_ref(),
        json!({ "flux": flux.map(|p| p.display().to_string()), "kernels": kernels }),
        Some(seed),
    )
}

#[derive(Serialize)]
struct RuleOutcome {
    rule: &'static str,
    t: Vec<f64>,
    tv_edges: Vec<f64>,
    tv_bins: Vec<f64>,
    max_tv_edges: f64,
}

#[derive(Serialize)]
struct ImpossibilityJson {
    h: f64,
    dt: f64,
    t_final: f64,
    window: (f64, f64),
    sign_fraction: f64,
    paths: usize,
    seed: u64,
    outcomes: Vec<RuleOutcome>,
}

pub fn impossibility(c: &Common, h: f64, dt: f64, t_final: f64) -> Res {
    let r = impossibility_scenario(h, dt, t_final)?;
    let mut out = Output::create(&out_dir(c), c.format)?;
    let mut t = Table::new(
        "impossibility",
        &["t", "mass_e1", "mass_e2", "mass_e3", "flux_e1", "flux_e2", "flux_e3", "in_window"],
    );
    for (k, &tk) in r.times.iter().enumerate() {
        let m = r.masses[k];
        let f = r.fluxes[k];
        let inside = (r.window.0..=r.window.1).contains(&k) as usize;
        t.push(row![tk, m[0], m[1], m[2], f[0], f[1], f[2], inside]);
    }
    out.table(&t)?;

    let paths = c.ensemble.map_or(10_000, |n| n as usize);
    let seed = c.seed.unwrap_or(0);
    let field = r.field();
    let times = vec![0.5 * t_final, t_final];
    let mut outcomes = Vec::new();
    let mut tv = Table::new("impossibility_tv", &["rule", "t", "tv_edges", "tv_bins"]);
    for (name, rule) in [("minimal", TurnRule::Minimal), ("argmax", TurnRule::Argmax)] {
        let mut config = EnsembleConfig::new(paths, seed, times.clone());
        config.rule = rule;
        let run = sample_ensemble(&field, &config)?;
        let eqs: Vec<_> = (0..times.len()).map(|k| equivariance_distance(&run.stats, &field, k)).collect();
        for e in &eqs {
            tv.push(row![name, e.t, e.tv_edges, e.tv_bins]);
        }
        outcomes.push(RuleOutcome {
            rule: name,
            t: eqs.iter().map(|e| e.t).collect(),
            tv_edges: eqs.iter().map(|e| e.tv_edges).collect(),
            tv_bins: eqs.iter().map(|e| e.tv_bins).collect(),
            max_tv_edges: eqs.iter().map(|e| e.tv_edges).fold(0.0, f64::max),
        });
    }
    out.table(&tv)?;
    out.report(
        "impossibility",
        "impossibility",
        &ImpossibilityJson {
            h,
            dt,
            t_final,
            window: r.window_times(),
            sign_fraction: r.sign_fraction,
            paths,
            seed,
            outcomes,
        },
    )?;
    finish(out, c, "impossibility", None, json!({ "h": h, "dt": dt, "t_final": t_final, "paths": paths }), Some(seed))
}

pub fn reverse(c: &Common) -> Res {
    let sc = load(c)?;
    let paths = c.ensemble.map_or(sc.run.ensemble, |n| n as usize);
    let seed = c.seed.unwrap_or(sc.run.seed);
    let exp = reversal_experiment(&sc, paths, seed)?;
    let g = sc.graph()?;
    let chk = &exp.check;
    let mut out = Output::create(&out_dir(c), c.format)?;
    let mut sel = Table::new(
        "reverse_selection",
        &["t", "vertex", "edge", "s_plus", "s_minus", "reversed_s_plus", "reversed_s_minus", "p_forward", "p_reversed"],
    );
    for (i, (f, r)) in chk.forward.edges.iter().zip(&chk.reversed.edges).enumerate() {
        sel.push(row![
            chk.forward.t,
            vertex_label(&g, exp.vertex),
            edge_label(&g, f.edge),
            f.s_plus,
            f.s_minus,
            r.s_plus,
            r.s_minus,
            chk.forward_selection.probabilities[i],
            chk.reversed_selection.probabilities[i]
        ]);
    }
    out.table(&sel)?;
    let mut turns = Table::new("reverse_turns", &["vertex", "in_edge", "out_edge", "observed", "expected", "z"]);
    for t in &exp.turns {
        turns.push(row![vertex_label(&g, exp.vertex), t.in_edge.as_str(), t.out_edge.as_str(), t.observed, t.expected, t.z]);
    }
    out.table(&turns)?;
    let max_z = exp.turns.iter().map(|t| t.z.abs()).fold(0.0, f64::max);
    out.report(
        "reverse",
        "reverse",
        &json!({
            "vertex": vertex_label(&g, exp.vertex),
            "t": chk.forward.t,
            "swap_residual": chk.swap_residual,
            "paths": paths,
            "seed": seed,
            "max_abs_z": max_z,
            "turns": exp.turns,
        }),
    )?;
    finish(out, c, "reverse", Some(&sc), json!({ "paths": paths }), Some(seed))
}
