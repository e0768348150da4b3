use crate::currents::{edge_selection, vertex_currents, EdgeSelection, FlowField, FluxReport};
use crate::error::Result;
use crate::graph::{MetricGraph, VertexId};
use crate::grid::Grid;
use crate::propagator::{evolve, CrankNicolson, EvolutionRecord};

#[derive(Debug, Clone, PartialEq)]
pub struct ReversalCheck {
    pub forward: FluxReport,
    pub reversed: FluxReport,
    pub forward_selection: EdgeSelection,
    pub reversed_selection: EdgeSelection,
    /// `max_e |s_e⁺(ψ̄) - s_e⁻(ψ)| + |s_e⁻(ψ̄) - s_e⁺(ψ)|`.
    pub swap_residual: f64,
}

/// Edge selections for `ψ_t` and `conj(ψ_t)` at `q`. The second uses the
/// influx of the first as its outflux.
pub fn time_reversal_check(
    graph: &MetricGraph,
    grid: &Grid,
    record: &EvolutionRecord,
    q: VertexId,
    t: f64,
    hbar: f64,
) -> Result<ReversalCheck> {
    let psi = record.state_at(t)?;
    let forward = vertex_currents(graph, grid, &psi, q, hbar)?;
    let reversed = vertex_currents(graph, grid, &psi.conjugate(), q, hbar)?;
    let swap_residual = forward
        .edges
        .iter()
        .zip(&reversed.edges)
        .map(|(f, r)| (r.s_plus - f.s_minus).abs() + (r.s_minus - f.s_plus).abs())
        .fold(0.0, f64::max);
    Ok(ReversalCheck {
        forward_selection: edge_selection(&forward)?,
        reversed_selection: edge_selection(&reversed)?,
        forward,
        reversed,
        swap_residual,
    })
}

/// Evolution from `conj(ψ_T)` over the same span, clock restarted at 0.
/// Snapshot `k` of the result matches `T - t_k` of `record` up to the
/// scheme's time-asymmetry.
pub fn reversed_record(stepper: &CrankNicolson, record: &EvolutionRecord) -> Result<EvolutionRecord> {
    let mut start = record.states[record.states.len() - 1].conjugate();
    start.t = 0.0;
    let stride = (record.spacing / stepper.dt()).round().max(1.0) as usize;
    let steps = (record.states.len() - 1) * stride;
    let outputs: Vec<f64> = record.outputs.iter().map(|&k| record.t_end() - record.states[k].t).collect();
    evolve(stepper, &start, steps, stride, &outputs)
}

/// Expected number of `(f → e)` turns at `q` per unit ensemble size over
/// `[t0, t1]` for the minimal process: `∫ s_f⁻ s_e⁺ / Σ s⁺ dt`, indexed in
/// incidence order.
pub fn expected_turn_counts(field: &FlowField, q: VertexId, t0: f64, t1: f64) -> Vec<Vec<f64>> {
    let n = field.incident(q).len();
    let mut out = vec![vec![0.0; n]; n];
    let steps = (((t1 - t0) / field.spacing()).ceil() as usize * 8).max(16);
    let dt = (t1 - t0) / steps as f64;
    for k in 0..=steps {
        let w = if k == 0 || k == steps { 0.5 } else { 1.0 };
        let r = field.flux_report(q, t0 + k as f64 * dt);
        let total = r.outflux();
        if total <= 0.0 {
            continue;
        }
        for (f, ef) in r.edges.iter().enumerate() {
            for (e, ee) in r.edges.iter().enumerate() {
                out[f][e] += w * dt * ef.s_minus * ee.s_plus / total;
            }
        }
    }
    out
}
