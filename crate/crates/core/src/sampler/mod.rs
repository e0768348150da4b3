//! The minimal graph process: Bohmian motion along edges and random turns
//! at vertices with probabilities proportional to the outgoing currents.

mod ensemble;
mod impossibility;
mod integrate;
mod reversal;

pub use ensemble::{
    equivariance_distance, sample_ensemble, EnsembleConfig, EnsembleRun, EnsembleStats, Equivariance,
    InitialSampler, TurnCount,
};
pub use impossibility::{impossibility_scenario, ImpossibilityReport};
pub use integrate::{integrate_edge, Arrival, IntegratorOptions, Segment};
pub use reversal::{expected_turn_counts, reversed_record, time_reversal_check, ReversalCheck};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::almost_markov::{feasible_kernel, KernelMode};
use crate::currents::{edge_selection, FlowField, FluxReport};
use crate::error::{Error, Result};
use crate::graph::{EdgeId, End, VertexId};

/// Consecutive zero-duration segments after which a path is abandoned.
const MAX_IMMEDIATE_TURNS: usize = 50;

/// How the outgoing edge is chosen at a vertex.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TurnRule {
    /// `P(e) = s_e⁺ / Σ s⁺`.
    Minimal,
    /// Always the edge with the largest outgoing current. Currents within
    /// a relative `1e-9` of the largest count as tied and the first edge in
    /// incidence order wins.
    Argmax,
    /// A randomized feasible kernel depending on the incoming edge.
    AlmostMarkov { seed: u64 },
}

/// Inverse-CDF draw over `probabilities` in their given order.
pub fn turn(probabilities: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    for (i, p) in probabilities.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probabilities.iter().rposition(|p| *p > 0.0).unwrap_or(probabilities.len() - 1)
}

fn kernel_seed(seed: u64, q: VertexId) -> u64 {
    // splitmix64 finalizer
    let mut z = seed ^ (q.0 as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl TurnRule {
    /// Probabilities over the incidence order of `report`.
    pub fn probabilities(&self, report: &FluxReport, incoming: EdgeId) -> Result<Vec<f64>> {
        match *self {
            TurnRule::Minimal => Ok(edge_selection(report)?.probabilities),
            TurnRule::Argmax => {
                let sel = edge_selection(report)?;
                let top = report.edges.iter().map(|f| f.s_plus).fold(0.0, f64::max);
                let best = report
                    .edges
                    .iter()
                    .position(|f| f.s_plus >= top * (1.0 - 1e-9))
                    .unwrap_or(0);
                let mut p = vec![0.0; sel.probabilities.len()];
                p[best] = 1.0;
                Ok(p)
            }
            TurnRule::AlmostMarkov { seed } => {
                match feasible_kernel(report, KernelMode::Randomized { seed: kernel_seed(seed, report.vertex) }) {
                    Ok(k) => Ok(k.row(incoming).map(<[f64]>::to_vec).unwrap_or_else(|| k.matrix[0].clone())),
                    Err(Error::InfeasibleKernel(_)) => Ok(edge_selection(report)?.probabilities),
                    Err(e) => Err(e),
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TurnEvent {
    pub t: f64,
    pub vertex: VertexId,
    pub in_edge: EdgeId,
    pub out_edge: EdgeId,
    pub u: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Termination {
    Final,
    NodeEncounter,
    StalledVertex,
    StepUnderflow,
    TurnLoop,
}

impl Termination {
    pub fn as_str(self) -> &'static str {
        match self {
            Termination::Final => "t_final",
            Termination::NodeEncounter => "node-encounter",
            Termination::StalledVertex => "stalled-vertex",
            Termination::StepUnderflow => "step-underflow",
            Termination::TurnLoop => "turn-loop",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Start {
    pub edge: EdgeId,
    pub x: f64,
    pub t: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub path_id: u64,
    pub start: Start,
    pub segments: Vec<Segment>,
    pub turns: Vec<TurnEvent>,
    /// `(t, edge, x)` at each requested output time reached.
    pub positions: Vec<(f64, EdgeId, f64)>,
    pub termination: Termination,
    pub end_time: f64,
}

impl Trajectory {
    /// Position at output time `t`, if the path was still alive.
    pub fn position_at(&self, t: f64) -> Option<(EdgeId, f64)> {
        self.positions.iter().find(|p| p.0 == t).map(|p| (p.1, p.2))
    }
}

/// RNG for path `path_id` under `seed`: one ChaCha8 key, one stream per path.
pub fn path_rng(seed: u64, path_id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(path_id);
    rng
}

#[derive(Debug, Clone)]
pub struct PathOptions {
    pub rule: TurnRule,
    pub t_final: f64,
    pub output_times: Vec<f64>,
    pub integrator: IntegratorOptions,
}

pub fn sample_path(field: &FlowField, start: Start, path_id: u64, rng: &mut impl Rng, opts: &PathOptions) -> Trajectory {
    let mut traj = Trajectory {
        path_id,
        start,
        segments: Vec::new(),
        turns: Vec::new(),
        positions: Vec::new(),
        termination: Termination::Final,
        end_time: start.t,
    };
    let event_tol = opts.integrator.event_tol * (field.t_end() - field.t0()).max(f64::MIN_POSITIVE);
    let t_final = opts.t_final.min(field.t_end());
    let (mut edge, mut x, mut t) = (start.edge, start.x, start.t);
    let mut immediate = 0;
    loop {
        let result = integrate_edge(field, edge, x, t, t_final, &opts.integrator, &opts.output_times, |ts, xs| {
            traj.positions.push((ts, edge, xs))
        });
        let (segment, arrival) = match result {
            Ok(r) => r,
            Err(e) => {
                traj.termination = match e {
                    Error::StepUnderflow(_) => Termination::StepUnderflow,
                    _ => Termination::NodeEncounter,
                };
                traj.end_time = t;
                return traj;
            }
        };
        let entered = segment.entry_time;
        traj.segments.push(segment);
        match arrival {
            Arrival::Final { t: tf, .. } => {
                traj.end_time = tf;
                return traj;
            }
            Arrival::Vertex { end, t: ta } => {
                let q = field.vertex_at(edge, end);
                let report = field.flux_report(q, ta);
                let probs = match opts.rule.probabilities(&report, edge) {
                    Ok(p) => p,
                    Err(_) => {
                        traj.termination = Termination::StalledVertex;
                        traj.end_time = ta;
                        return traj;
                    }
                };
                let u: f64 = rng.random();
                let out = report.edges[turn(&probs, u)].edge;
                traj.turns.push(TurnEvent {
                    t: ta,
                    vertex: q,
                    in_edge: edge,
                    out_edge: out,
                    u,
                });
                immediate = if ta - entered <= event_tol { immediate + 1 } else { 0 };
                if immediate > MAX_IMMEDIATE_TURNS {
                    traj.termination = Termination::TurnLoop;
                    traj.end_time = ta;
                    return traj;
                }
                let out_end = field
                    .incident(q)
                    .iter()
                    .find(|(e, _)| *e == out)
                    .map(|&(_, end)| end)
                    .unwrap_or(End::From);
                edge = out;
                x = field.coordinate_of(out, out_end);
                t = ta;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{chain, star, MetricGraph, VertexCondition};
    use crate::grid::Grid;
    use crate::hamiltonian::HamiltonianMatrix;
    use crate::propagator::{evolve, superpose, CrankNicolson, Packet};
    use num_complex::Complex64;

    fn field_for(g: &MetricGraph, packets: &[Packet], h: f64, dt: f64, steps: usize) -> FlowField {
        let grid = Grid::build(g, h).unwrap();
        let ham = HamiltonianMatrix::assemble(g, &grid, 1.0).unwrap();
        let s = superpose(g, &grid, packets).unwrap();
        let cn = CrankNicolson::new(&grid, &ham, dt).unwrap();
        let rec = evolve(&cn, &s, steps, 1, &[]).unwrap();
        FlowField::new(g, &grid, &rec, 1.0)
    }

    fn packet(edge: usize, center: f64, width: f64, k: f64) -> Packet {
        Packet {
            edge: EdgeId(edge),
            center,
            width,
            k,
            amplitude: Complex64::new(1.0, 0.0),
        }
    }

    #[test]
    fn inverse_cdf_turns() {
        assert_eq!(turn(&[1.0, 0.0, 0.0], 0.0), 0);
        assert_eq!(turn(&[1.0, 0.0, 0.0], 0.999_999), 0);
        assert_eq!(turn(&[0.5, 0.5], 0.7), 1);
        assert_eq!(turn(&[0.5, 0.5], 0.3), 0);
        assert_eq!(turn(&[0.0, 0.3, 0.7], 0.0), 1);
        // rounding leaves cumulative sums short of 1
        assert_eq!(turn(&[0.1, 0.9 - 1e-16, 0.0], 1.0 - 1e-17), 1);
    }

    #[test]
    fn turn_frequencies_match_probabilities() {
        let p = [0.2, 0.5, 0.3];
        let mut rng = path_rng(99, 0);
        let n = 100_000;
        let mut counts = [0usize; 3];
        for _ in 0..n {
            counts[turn(&p, rng.random())] += 1;
        }
        for i in 0..3 {
            let sigma = (n as f64 * p[i] * (1.0 - p[i])).sqrt();
            assert!((counts[i] as f64 - n as f64 * p[i]).abs() < 3.0 * sigma, "{counts:?}");
        }
    }

    #[test]
    fn degree_two_crossing_is_forced() {
        let g = chain(&[0.5, 0.5], VertexCondition::Dirichlet, VertexCondition::default()).unwrap();
        let field = field_for(&g, &[packet(0, 0.3, 0.05, 12.0)], 0.005, 2e-4, 250);
        let opts = PathOptions {
            rule: TurnRule::Minimal,
            t_final: 0.05,
            output_times: vec![],
            integrator: IntegratorOptions::default(),
        };
        let mut crossed = 0;
        for id in 0..20 {
            let mut rng = path_rng(7, id);
            let start = Start {
                edge: EdgeId(0),
                x: 0.3 + 0.004 * id as f64,
                t: 0.0,
            };
            let tr = sample_path(&field, start, id, &mut rng, &opts);
            assert_eq!(tr.termination, Termination::Final);
            for ev in &tr.turns {
                assert_eq!(ev.vertex, VertexId(1));
                assert_eq!(ev.in_edge, EdgeId(0));
                assert_eq!(ev.out_edge, EdgeId(1));
                crossed += 1;
            }
        }
        assert!(crossed > 10);
    }

    #[test]
    fn dirichlet_walls_confine_paths() {
        let g = chain(&[1.0], VertexCondition::Dirichlet, VertexCondition::default()).unwrap();
        let field = field_for(&g, &[packet(0, 0.7, 0.06, 25.0)], 0.005, 1e-4, 600);
        let opts = PathOptions {
            rule: TurnRule::Minimal,
            t_final: field.t_end(),
            output_times: vec![],
            integrator: IntegratorOptions::default(),
        };
        for id in 0..10 {
            let mut rng = path_rng(1, id);
            let start = Start {
                edge: EdgeId(0),
                x: 0.65 + 0.01 * id as f64,
                t: 0.0,
            };
            let tr = sample_path(&field, start, id, &mut rng, &opts);
            assert!(tr.turns.is_empty());
            assert_eq!(tr.segments.len(), 1);
            assert_eq!(tr.termination, Termination::Final);
        }
    }

    #[test]
    fn same_seed_same_trajectory() {
        let g = star(&[1.0, 0.7, 1.3], VertexCondition::default(), VertexCondition::Dirichlet).unwrap();
        let field = field_for(&g, &[packet(0, 0.3, 0.08, -10.0)], 0.01, 2e-4, 300);
        let opts = PathOptions {
            rule: TurnRule::Minimal,
            t_final: field.t_end(),
            output_times: vec![0.03, 0.06],
            integrator: IntegratorOptions {
                dense: true,
                ..IntegratorOptions::default()
            },
        };
        let start = Start {
            edge: EdgeId(0),
            x: 0.2,
            t: 0.0,
        };
        let a = sample_path(&field, start, 3, &mut path_rng(5, 3), &opts);
        let b = sample_path(&field, start, 3, &mut path_rng(5, 3), &opts);
        assert_eq!(a, b);
        assert!(!a.turns.is_empty());
        // continuity: each segment ends where the next turn happens
        for (seg, ev) in a.segments.iter().zip(&a.turns) {
            assert_eq!(seg.exit_time, ev.t);
            let (_, x_end) = *seg.samples.last().unwrap();
            assert!(x_end == 0.0 || x_end == g.edge(seg.edge).length);
        }
        for w in a.segments.windows(2) {
            assert_eq!(w[0].exit_time, w[1].entry_time);
        }
        for ev in &a.turns {
            let p = TurnRule::Minimal.probabilities(&field.flux_report(ev.vertex, ev.t), ev.in_edge).unwrap();
            let i = g.incidence_index(ev.vertex, ev.out_edge).unwrap();
            assert!(p[i] > 0.0);
        }
        assert_eq!(a.positions.len(), 2);
    }

    #[test]
    fn argmax_rule_is_deterministic() {
        let r = FluxReport::from_signed(VertexId(0), 0.0, [(EdgeId(0), -1.0), (EdgeId(1), 0.3), (EdgeId(2), 0.7)]);
        assert_eq!(TurnRule::Argmax.probabilities(&r, EdgeId(0)).unwrap(), vec![0.0, 0.0, 1.0]);
    }

    #[test]
    fn almost_markov_rule_depends_on_incoming_edge() {
        let r = FluxReport::from_signed(
            VertexId(0),
            0.0,
            [(EdgeId(0), -0.6), (EdgeId(1), -0.4), (EdgeId(2), 0.5), (EdgeId(3), 0.5)],
        );
        let rule = TurnRule::AlmostMarkov { seed: 4 };
        let a = rule.probabilities(&r, EdgeId(0)).unwrap();
        let b = rule.probabilities(&r, EdgeId(1)).unwrap();
        assert!((a[2] - b[2]).abs() > 1e-6);
        let mix: Vec<f64> = (0..4).map(|e| 0.6 * a[e] + 0.4 * b[e]).collect();
        assert!((mix[2] - 0.5).abs() < 1e-12 && (mix[3] - 0.5).abs() < 1e-12);
    }
}
