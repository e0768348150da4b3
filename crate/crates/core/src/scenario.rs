//! JSON scenario files: graph, numerics, initial state and run parameters.

use std::collections::HashMap;
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Edge, EdgeId, MetricGraph, Potential, Vertex, VertexCondition, VertexId};
use crate::grid::Grid;
use crate::hamiltonian::HamiltonianMatrix;
use crate::propagator::{eigenstate, evolve, superpose, CrankNicolson, EvolutionRecord, Packet, WaveState};

/// Scenarios shipped with the crate, by name.
pub const BUNDLED: &[(&str, &str)] = &[
    ("interval", include_str!("../scenarios/interval.json")),
    ("chain2", include_str!("../scenarios/chain2.json")),
    ("star3-sym", include_str!("../scenarios/star3-sym.json")),
    ("star3-asym", include_str!("../scenarios/star3-asym.json")),
    ("loop-triangle", include_str!("../scenarios/loop-triangle.json")),
    ("star4-cross", include_str!("../scenarios/star4-cross.json")),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub graph: GraphSpec,
    pub numerics: Numerics,
    pub initial_state: InitialSpec,
    pub run: RunSpec,
    #[serde(default)]
    pub probe: Option<ProbeSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphSpec {
    pub vertices: Vec<String>,
    pub edges: Vec<EdgeSpec>,
    /// Vertices not listed get the Kirchhoff condition.
    #[serde(default)]
    pub conditions: Vec<ConditionSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EdgeSpec {
    pub id: String,
    pub from: String,
    pub to: String,
    pub length: f64,
    #[serde(default)]
    pub potential: PotentialSpec,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum PotentialSpec {
    #[default]
    Zero,
    Constant {
        value: f64,
    },
    /// Piecewise-linear through `(x, V)` points.
    Table {
        points: Vec<(f64, f64)>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConditionSpec {
    pub vertex: String,
    pub kind: ConditionKind,
    #[serde(default)]
    pub alpha: Option<f64>,
    #[serde(default)]
    pub beta: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConditionKind {
    Kirchhoff,
    Robin,
    Dirichlet,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Numerics {
    pub h: f64,
    pub dt: f64,
    #[serde(default = "one")]
    pub hbar: f64,
    /// Keep every `stride`-th step.
    #[serde(default = "one_usize")]
    pub stride: usize,
}

fn one() -> f64 {
    1.0
}

fn one_usize() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
pub enum InitialSpec {
    Packets(Vec<PacketSpec>),
    /// Index into the spectrum, ground state = 0.
    Eigenstate(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PacketSpec {
    pub edge: String,
    pub center: f64,
    pub width: f64,
    pub k: f64,
    /// `[re, im]`.
    #[serde(default = "unit_amplitude")]
    pub amplitude: [f64; 2],
}

fn unit_amplitude() -> [f64; 2] {
    [1.0, 0.0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSpec {
    pub t_final: f64,
    #[serde(default)]
    pub output_times: Vec<f64>,
    #[serde(default = "default_ensemble")]
    pub ensemble: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_bins")]
    pub bins_per_edge: usize,
}

fn default_ensemble() -> usize {
    1000
}

fn default_bins() -> usize {
    20
}

/// Where and when vertex diagnostics (`flux`, `bell`, `reverse`,
/// `markovize`) look.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeSpec {
    pub vertex: String,
    pub time: f64,
    #[serde(default)]
    pub epsilons: Vec<f64>,
    #[serde(default)]
    pub reference_h: Option<f64>,
    #[serde(default)]
    pub lattice_dt: Option<f64>,
    /// Window `[t0, t1]` for turn statistics.
    #[serde(default)]
    pub window: Option<(f64, f64)>,
}

fn json_error(e: serde_json::Error) -> Error {
    let msg = e.to_string();
    // serde_json appends " at line L column C"
    let message = msg.split(" at line ").next().unwrap_or(&msg).to_string();
    if let Some(rest) = message.strip_prefix("missing field ") {
        return Error::MissingField(rest.trim_matches('`').to_string());
    }
    Error::Syntax {
        line: e.line(),
        column: e.column(),
        message,
    }
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self> {
        let s: Scenario = serde_json::from_str(text).map_err(json_error)?;
        s.check()?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn bundled(name: &str) -> Option<Self> {
        BUNDLED
            .iter()
            .find(|(n, _)| *n == name)
            .map(|(_, text)| Self::from_json(text).expect("bundled scenarios are valid"))
    }

    /// A bundled name, or else a path.
    pub fn resolve(name_or_path: &str) -> Result<Self> {
        match Self::bundled(name_or_path) {
            Some(s) => Ok(s),
            None => Self::load(Path::new(name_or_path)),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    fn check(&self) -> Result<()> {
        positive("h", self.numerics.h)?;
        positive("hbar", self.numerics.hbar)?;
        positive("dt", self.numerics.dt)?;
        if !(self.run.t_final.is_finite() && self.run.t_final >= 0.0) {
            return Err(Error::InvalidParameter {
                name: "t_final",
                reason: format!("must be nonnegative, got {}", self.run.t_final),
            });
        }
        for &t in &self.run.output_times {
            if !(0.0..=self.run.t_final).contains(&t) {
                return Err(Error::InvalidParameter {
                    name: "output_times",
                    reason: format!("{t} lies outside [0, {}]", self.run.t_final),
                });
            }
        }
        Ok(())
    }

    pub fn graph(&self) -> Result<MetricGraph> {
        let g = &self.graph;
        let mut index: HashMap<&str, usize> = HashMap::new();
        for (i, v) in g.vertices.iter().enumerate() {
            if index.insert(v.as_str(), i).is_some() {
                return Err(Error::DuplicateId {
                    kind: "vertex",
                    id: v.clone(),
                });
            }
        }
        let mut vertices: Vec<Vertex> = g
            .vertices
            .iter()
            .map(|v| Vertex {
                label: v.clone(),
                condition: VertexCondition::default(),
            })
            .collect();
        let mut seen = HashMap::new();
        for c in &g.conditions {
            let &i = index.get(c.vertex.as_str()).ok_or_else(|| Error::UnresolvedId {
                id: c.vertex.clone(),
                context: "conditions".into(),
            })?;
            if seen.insert(c.vertex.as_str(), ()).is_some() {
                return Err(Error::DuplicateId {
                    kind: "condition",
                    id: c.vertex.clone(),
                });
            }
            vertices[i].condition = match c.kind {
                ConditionKind::Kirchhoff => VertexCondition::default(),
                ConditionKind::Dirichlet => VertexCondition::Dirichlet,
                ConditionKind::Robin => {
                    let (alpha, beta) = (c.alpha.unwrap_or(1.0), c.beta.unwrap_or(0.0));
                    VertexCondition::robin(alpha, beta).map_err(|reason| Error::InvalidCondition {
                        vertex: c.vertex.clone(),
                        reason,
                    })?
                }
            };
        }
        let mut edge_ids = HashMap::new();
        let mut edges = Vec::with_capacity(g.edges.len());
        for e in &g.edges {
            if edge_ids.insert(e.id.as_str(), ()).is_some() {
                return Err(Error::DuplicateId {
                    kind: "edge",
                    id: e.id.clone(),
                });
            }
            let lookup = |v: &str| {
                index.get(v).copied().map(VertexId).ok_or_else(|| Error::UnresolvedId {
                    id: v.to_string(),
                    context: format!("edge `{}`", e.id),
                })
            };
            edges.push(Edge {
                label: e.id.clone(),
                from: lookup(&e.from)?,
                to: lookup(&e.to)?,
                length: e.length,
                potential: match &e.potential {
                    PotentialSpec::Zero => Potential::Zero,
                    PotentialSpec::Constant { value } => Potential::Constant(*value),
                    PotentialSpec::Table { points } => Potential::Table(points.clone()),
                },
            });
        }
        MetricGraph::new(vertices, edges)
    }

    pub fn packets(&self, graph: &MetricGraph) -> Result<Vec<Packet>> {
        let InitialSpec::Packets(list) = &self.initial_state else {
            return Ok(Vec::new());
        };
        list.iter()
            .map(|p| {
                let edge = graph.edge_by_label(&p.edge).ok_or_else(|| Error::UnresolvedId {
                    id: p.edge.clone(),
                    context: "initial_state".into(),
                })?;
                Ok(Packet {
                    edge,
                    center: p.center,
                    width: p.width,
                    k: p.k,
                    amplitude: Complex64::new(p.amplitude[0], p.amplitude[1]),
                })
            })
            .collect()
    }

    pub fn probe_vertex(&self, graph: &MetricGraph) -> Result<VertexId> {
        let name = self.probe.as_ref().map(|p| p.vertex.as_str()).unwrap_or_else(|| {
            // highest-degree vertex
            graph
                .vertices()
                .iter()
                .enumerate()
                .max_by_key(|(i, _)| (graph.degree(VertexId(*i)), usize::MAX - i))
                .map(|(_, v)| v.label.as_str())
                .unwrap_or("")
        });
        graph.vertex_by_label(name).ok_or_else(|| Error::UnresolvedId {
            id: name.to_string(),
            context: "probe".into(),
        })
    }

    pub fn probe_time(&self) -> f64 {
        self.probe.as_ref().map_or(0.5 * self.run.t_final, |p| p.time)
    }

    /// The same scenario on a different grid and time step.
    pub fn with_numerics(&self, h: f64, dt: f64) -> Self {
        let mut s = self.clone();
        s.numerics.h = h;
        s.numerics.dt = dt;
        s
    }

    /// Build everything and propagate to `t_final`.
    pub fn simulate(&self) -> Result<Simulation> {
        self.simulate_until(self.run.t_final, self.numerics.stride)
    }

    /// Like [`Scenario::simulate`] but stopping at `t_end` and storing every
    /// `stride`-th step.
    pub fn simulate_until(&self, t_end: f64, stride: usize) -> Result<Simulation> {
        let graph = self.graph()?;
        let grid = Grid::build(&graph, self.numerics.h)?;
        let hamiltonian = HamiltonianMatrix::assemble(&graph, &grid, self.numerics.hbar)?;
        let initial = match &self.initial_state {
            InitialSpec::Packets(_) => superpose(&graph, &grid, &self.packets(&graph)?)?,
            InitialSpec::Eigenstate(n) => eigenstate(&hamiltonian, &grid, *n)?.1,
        };
        let stepper = CrankNicolson::new(&grid, &hamiltonian, self.numerics.dt)?;
        let steps = (t_end / self.numerics.dt).round() as usize;
        let outputs: Vec<f64> = self.run.output_times.iter().copied().filter(|&t| t <= t_end).collect();
        let record = evolve(&stepper, &initial, steps, stride, &outputs)?;
        Ok(Simulation {
            graph,
            grid,
            hamiltonian,
            initial,
            record,
        })
    }

    /// Packets whose tails are cut off by the end of their edge.
    pub fn warnings(&self, graph: &MetricGraph) -> Vec<String> {
        self.packets(graph)
            .unwrap_or_default()
            .iter()
            .filter(|p| p.touches_ends(graph))
            .map(|p| format!("packet on `{}` comes within 8 widths of a vertex", graph.edge(p.edge).label))
            .collect()
    }
}

fn positive(name: &'static str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter {
            name,
            reason: format!("must be positive, got {v}"),
        })
    }
}

#[derive(Debug, Clone)]
pub struct Simulation {
    pub graph: MetricGraph,
    pub grid: Grid,
    pub hamiltonian: HamiltonianMatrix,
    pub initial: WaveState,
    pub record: EvolutionRecord,
}

impl Simulation {
    pub fn hbar(&self) -> f64 {
        self.hamiltonian.hbar()
    }

    pub fn edge_label(&self, e: EdgeId) -> &str {
        &self.graph.edge(e).label
    }

    pub fn vertex_label(&self, q: VertexId) -> &str {
        &self.graph.vertex(q).label
    }
}
