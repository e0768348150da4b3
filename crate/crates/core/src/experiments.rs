//! Multi-run experiments shared by the command line and the test suites.

use serde::Serialize;

use crate::bell::{vertex_exit_distribution, ExitDistribution, Lattice};
use crate::currents::{edge_selection, vertex_currents, FlowField};
use crate::error::{Error, Result};
use crate::graph::{EdgeId, VertexId};
use crate::propagator::CrankNicolson;
use crate::sampler::{
    expected_turn_counts, reversed_record, sample_ensemble, time_reversal_check, EnsembleConfig, ReversalCheck,
};
use crate::scenario::Scenario;

/// Least-squares slope of `log y` against `log x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

/// Successive ratios `y[i] / y[i + 1]`.
pub fn ratios(y: &[f64]) -> Vec<f64> {
    y.windows(2).map(|w| w[0] / w[1]).collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct ResidualRung {
    pub h: f64,
    /// `max_t |Σ_e s_e|` at the vertex over the stored states.
    pub max_residual: f64,
}

/// Kirchhoff residual at `q` for each grid spacing in `hs`.
pub fn kirchhoff_ladder(scenario: &Scenario, q: VertexId, hs: &[f64]) -> Result<Vec<ResidualRung>> {
    hs.iter()
        .map(|&h| {
            let sim = scenario.with_numerics(h, scenario.numerics.dt).simulate()?;
            let mut max_residual: f64 = 0.0;
            for st in &sim.record.states {
                let r = vertex_currents(&sim.graph, &sim.grid, st, q, sim.hbar())?;
                max_residual = max_residual.max(r.kirchhoff_residual.abs());
            }
            Ok(ResidualRung { h, max_residual })
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct BellRung {
    pub epsilon: f64,
    pub empirical: Vec<f64>,
    pub lattice_exact: Vec<f64>,
    /// `max_e |lattice_exact - continuum|`.
    pub error: f64,
    /// `max_e |empirical - continuum|`, Monte Carlo noise included.
    pub empirical_error: f64,
    /// `max_e |empirical - lattice_exact| / σ_e` with binomial `σ_e`.
    pub sampling_z: f64,
    pub unresolved: usize,
    pub mean_wait: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct BellLadder {
    pub vertex: String,
    pub t: f64,
    pub edges: Vec<String>,
    pub reference_h: f64,
    pub lattice_dt: f64,
    pub paths: usize,
    pub seed: u64,
    /// Edge selection of the finely resolved continuum state.
    pub continuum: Vec<f64>,
    pub rungs: Vec<BellRung>,
    pub errors: Vec<f64>,
    pub ratios: Vec<f64>,
    pub slope: f64,
}

/// Lattice exit distribution at the probe vertex for each spacing in
/// `epsilons`, against the edge selection computed at `reference_h`.
pub fn bell_ladder(
    scenario: &Scenario,
    epsilons: &[f64],
    reference_h: f64,
    lattice_dt: f64,
    paths: usize,
    seed: u64,
) -> Result<BellLadder> {
    if epsilons.is_empty() {
        return Err(Error::InvalidParameter {
            name: "epsilon-ladder",
            reason: "need at least one spacing".into(),
        });
    }
    let t = scenario.probe_time();
    let steps = (t / lattice_dt).round() as usize;
    if steps == 0 || ((steps as f64) * lattice_dt - t).abs() > 1e-9 * t.max(1.0) {
        return Err(Error::InvalidParameter {
            name: "lattice_dt",
            reason: format!("probe time {t} is not a multiple of {lattice_dt}"),
        });
    }
    // only the final state is needed from the reference run
    let reference = scenario.with_numerics(reference_h, lattice_dt).simulate_until(t, steps)?;
    let q = scenario.probe_vertex(&reference.graph)?;
    let last = &reference.record.states[reference.record.states.len() - 1];
    let continuum = edge_selection(&vertex_currents(&reference.graph, &reference.grid, last, q, reference.hbar())?)?;

    // paths leave within a few mean waiting times; leave generous room
    let t_end = (t + 0.01).min(scenario.run.t_final.max(t));
    let mut rungs = Vec::with_capacity(epsilons.len());
    for &epsilon in epsilons {
        let sim = scenario.with_numerics(epsilon, lattice_dt).simulate_until(t_end, 1)?;
        let lattice = Lattice::new(&sim.grid, &sim.hamiltonian);
        let exit: ExitDistribution =
            vertex_exit_distribution(&sim.graph, &sim.grid, &lattice, &sim.record, q, t, paths, seed)?;
        let max_diff = |a: &[f64]| {
            a.iter()
                .zip(&continuum.probabilities)
                .map(|(x, p)| (x - p).abs())
                .fold(0.0, f64::max)
        };
        let sampling_z = exit
            .empirical
            .iter()
            .zip(&exit.lattice_exact)
            .map(|(e, p)| {
                let sigma = (p * (1.0 - p) / paths as f64).sqrt().max(1.0 / paths as f64);
                (e - p).abs() / sigma
            })
            .fold(0.0, f64::max);
        rungs.push(BellRung {
            epsilon,
            error: max_diff(&exit.lattice_exact),
            empirical_error: max_diff(&exit.empirical),
            sampling_z,
            empirical: exit.empirical,
            lattice_exact: exit.lattice_exact,
            unresolved: exit.unresolved,
            mean_wait: exit.mean_wait,
        });
    }
    let errors: Vec<f64> = rungs.iter().map(|r| r.error).collect();
    let slope = if epsilons.len() > 1 {
        loglog_slope(epsilons, &errors)
    } else {
        f64::NAN
    };
    Ok(BellLadder {
        vertex: reference.graph.vertex(q).label.clone(),
        t,
        edges: continuum.edges.iter().map(|&e| reference.graph.edge(e).label.clone()).collect(),
        reference_h,
        lattice_dt,
        paths,
        seed,
        continuum: continuum.probabilities,
        rungs,
        ratios: ratios(&errors),
        errors,
        slope,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct TurnComparison {
    pub in_edge: String,
    pub out_edge: String,
    pub observed: usize,
    pub expected: f64,
    /// `(observed - expected) / sqrt(expected)`; 0 when nothing is expected
    /// and nothing happened.
    pub z: f64,
}

#[derive(Debug, Clone)]
pub struct ReversalExperiment {
    pub vertex: VertexId,
    pub check: ReversalCheck,
    pub turns: Vec<TurnComparison>,
    pub paths: usize,
}

/// Conjugation check at the probe, then an ensemble driven by `conj(ψ_T)`
/// whose joint turn counts at the probe vertex are compared with
/// `N ∫ s_f⁻ s_e⁺ / Σ s⁺ dt`.
pub fn reversal_experiment(scenario: &Scenario, paths: usize, seed: u64) -> Result<ReversalExperiment> {
    let sim = scenario.simulate()?;
    let q = scenario.probe_vertex(&sim.graph)?;
    let check = time_reversal_check(&sim.graph, &sim.grid, &sim.record, q, scenario.probe_time(), sim.hbar())?;
    let stepper = CrankNicolson::new(&sim.grid, &sim.hamiltonian, scenario.numerics.dt)?;
    let reversed = reversed_record(&stepper, &sim.record)?;
    let field = FlowField::new(&sim.graph, &sim.grid, &reversed, sim.hbar());
    let t_end = field.t_end();
    let mut config = EnsembleConfig::new(paths, seed, vec![t_end]);
    config.bins_per_edge = scenario.run.bins_per_edge;
    let run = sample_ensemble(&field, &config)?;
    let expected = expected_turn_counts(&field, q, field.t0(), t_end);
    let incident: Vec<EdgeId> = sim.graph.incident(q).iter().map(|&(e, _)| e).collect();
    let mut turns = Vec::new();
    for (a, &f) in incident.iter().enumerate() {
        for (b, &e) in incident.iter().enumerate() {
            let observed = run.stats.turn_count(q, f, e);
            let expected = expected[a][b] * paths as f64;
            let z = if expected > 0.0 {
                (observed as f64 - expected) / expected.sqrt()
            } else if observed == 0 {
                0.0
            } else {
                f64::INFINITY
            };
            turns.push(TurnComparison {
                in_edge: sim.graph.edge(f).label.clone(),
                out_edge: sim.graph.edge(e).label.clone(),
                observed,
                expected,
                z,
            });
        }
    }
    Ok(ReversalExperiment {
        vertex: q,
        check,
        turns,
        paths,
    })
}
