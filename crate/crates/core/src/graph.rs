//! Metric graphs: vertices, finite edges with lengths, incidence and vertex
//! conditions, plus enumeration of the graph's isometries.
//!
//! Every edge `e` carries a local arc-length coordinate `x ∈ [0, length]`
//! running from its `from` vertex to its `to` vertex. The unit vector
//! `n_e(q)` pointing away from `q` into `e` is therefore `+1` when `q` is the
//! `from` end and `-1` when it is the `to` end; [`End::orientation`] returns
//! that sign.

use std::collections::VecDeque;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct VertexId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EdgeId(pub usize);

impl fmt::Display for VertexId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl fmt::Display for EdgeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Which end of an edge touches a vertex.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum End {
    From,
    To,
}

impl End {
    /// `n_e(q)` expressed in the edge's own coordinate: +1 at the `from`
    /// end, -1 at the `to` end.
    pub fn orientation(self) -> f64 {
        match self {
            End::From => 1.0,
            End::To => -1.0,
        }
    }

    pub fn opposite(self) -> End {
        match self {
            End::From => End::To,
            End::To => End::From,
        }
    }
}

/// Real potential sampled along an edge, linearly interpolated in between.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum Potential {
    #[default]
    Zero,
    Constant(f64),
    /// `(x, V)` knots sorted by `x`; flat extrapolation outside the table.
    Table(Vec<(f64, f64)>),
}

impl Potential {
    pub fn at(&self, x: f64) -> f64 {
        match self {
            Potential::Zero => 0.0,
            Potential::Constant(v) => *v,
            Potential::Table(knots) => {
                let first = knots[0];
                let last = knots[knots.len() - 1];
                if x <= first.0 {
                    return first.1;
                }
                if x >= last.0 {
                    return last.1;
                }
                let k = knots.partition_point(|&(xk, _)| xk <= x);
                let (x0, v0) = knots[k - 1];
                let (x1, v1) = knots[k];
                v0 + (v1 - v0) * (x - x0) / (x1 - x0)
            }
        }
    }

    /// The same potential seen from the other end of an edge of `length`.
    pub fn reversed(&self, length: f64) -> Potential {
        match self {
            Potential::Table(knots) => {
                Potential::Table(knots.iter().rev().map(|&(x, v)| (length - x, v)).collect())
            }
            other => other.clone(),
        }
    }
}

/// Robin condition `α Σ_e n_e·∇_e ψ(q) = β ψ(q)` with continuity, or Dirichlet `ψ(q) = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum VertexCondition {
    Robin { alpha: f64, beta: f64 },
    Dirichlet,
}

impl Default for VertexCondition {
    fn default() -> Self {
        VertexCondition::Robin {
            alpha: 1.0,
            beta: 0.0,
        }
    }
}

impl VertexCondition {
    /// Robin with `α = 0` is stored as Dirichlet; `(0, 0)` and non-finite
    /// constants are rejected.
    pub fn robin(alpha: f64, beta: f64) -> std::result::Result<Self, String> {
        if !alpha.is_finite() || !beta.is_finite() {
            return Err("alpha and beta must be finite reals".into());
        }
        if alpha == 0.0 && beta == 0.0 {
            return Err("alpha and beta cannot both be zero".into());
        }
        if alpha == 0.0 {
            return Ok(VertexCondition::Dirichlet);
        }
        Ok(VertexCondition::Robin { alpha, beta })
    }

    pub fn is_dirichlet(&self) -> bool {
        matches!(self, VertexCondition::Dirichlet)
    }

    /// `β/α` for Robin vertices.
    pub fn robin_ratio(&self) -> Option<f64> {
        match *self {
            VertexCondition::Robin { alpha, beta } => Some(beta / alpha),
            VertexCondition::Dirichlet => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Vertex {
    pub label: String,
    pub condition: VertexCondition,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    pub label: String,
    pub from: VertexId,
    pub to: VertexId,
    pub length: f64,
    pub potential: Potential,
}

impl Edge {
    pub fn vertex_at(&self, end: End) -> VertexId {
        match end {
            End::From => self.from,
            End::To => self.to,
        }
    }

    /// Coordinate of the given end in the edge's local frame.
    pub fn coordinate_of(&self, end: End) -> f64 {
        match end {
            End::From => 0.0,
            End::To => self.length,
        }
    }
}

/// A validated, connected metric graph with finitely many finite edges.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricGraph {
    vertices: Vec<Vertex>,
    edges: Vec<Edge>,
    incidence: Vec<Vec<(EdgeId, End)>>,
}

impl MetricGraph {
    /// Build and validate a graph. Edge endpoints index into `vertices`.
    pub fn new(vertices: Vec<Vertex>, edges: Vec<Edge>) -> Result<Self> {
        if edges.is_empty() {
            return Err(Error::Empty);
        }
        for e in &edges {
            if e.length.is_infinite() && e.length > 0.0 {
                return Err(Error::SemiInfinite(e.label.clone()));
            }
            if !(e.length.is_finite() && e.length > 0.0) {
                return Err(Error::InvalidLength {
                    id: e.label.clone(),
                    length: e.length,
                });
            }
            for v in [e.from, e.to] {
                if v.0 >= vertices.len() {
                    return Err(Error::UnresolvedId {
                        id: v.0.to_string(),
                        context: format!("edge `{}`", e.label),
                    });
                }
            }
            if e.from == e.to {
                return Err(Error::SelfLoop(e.label.clone()));
            }
        }

        let mut incidence = vec![Vec::new(); vertices.len()];
        for (i, e) in edges.iter().enumerate() {
            incidence[e.from.0].push((EdgeId(i), End::From));
            incidence[e.to.0].push((EdgeId(i), End::To));
        }

        let components = count_components(vertices.len(), &edges);
        if components != 1 {
            return Err(Error::Disconnected { components });
        }

        Ok(MetricGraph {
            vertices,
            edges,
            incidence,
        })
    }

    pub fn vertices(&self) -> &[Vertex] {
        &self.vertices
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn vertex(&self, v: VertexId) -> &Vertex {
        &self.vertices[v.0]
    }

    pub fn edge(&self, e: EdgeId) -> &Edge {
        &self.edges[e.0]
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// `E_q`: edges ending at `q`, in a fixed order, with the touching end.
    pub fn incident(&self, q: VertexId) -> &[(EdgeId, End)] {
        &self.incidence[q.0]
    }

    pub fn degree(&self, q: VertexId) -> usize {
        self.incidence[q.0].len()
    }

    pub fn total_length(&self) -> f64 {
        self.edges.iter().map(|e| e.length).sum()
    }

    pub fn vertex_by_label(&self, label: &str) -> Option<VertexId> {
        self.vertices
            .iter()
            .position(|v| v.label == label)
            .map(VertexId)
    }

    pub fn edge_by_label(&self, label: &str) -> Option<EdgeId> {
        self.edges.iter().position(|e| e.label == label).map(EdgeId)
    }

    /// Position of edge `e` within `E_q`, if it ends at `q`.
    pub fn incidence_index(&self, q: VertexId, e: EdgeId) -> Option<usize> {
        self.incidence[q.0].iter().position(|&(f, _)| f == e)
    }

    pub fn with_condition(mut self, q: VertexId, condition: VertexCondition) -> Self {
        self.vertices[q.0].condition = condition;
        self
    }
}

fn count_components(n: usize, edges: &[Edge]) -> usize {
    let mut adj = vec![Vec::new(); n];
    for e in edges {
        adj[e.from.0].push(e.to.0);
        adj[e.to.0].push(e.from.0);
    }
    let mut seen = vec![false; n];
    let mut components = 0;
    for start in 0..n {
        if seen[start] {
            continue;
        }
        components += 1;
        seen[start] = true;
        let mut queue = VecDeque::from([start]);
        while let Some(v) = queue.pop_front() {
            for &w in &adj[v] {
                if !seen[w] {
                    seen[w] = true;
                    queue.push_back(w);
                }
            }
        }
    }
    components
}

/// A graph automorphism preserving incidence, edge lengths and vertex
/// conditions. Edge `e` is mapped onto `edge_map[e]`, reversed when
/// `flipped[e]` is set.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Isometry {
    pub vertex_map: Vec<VertexId>,
    pub edge_map: Vec<EdgeId>,
    pub flipped: Vec<bool>,
}

impl Isometry {
    pub fn identity(graph: &MetricGraph) -> Self {
        Isometry {
            vertex_map: (0..graph.vertex_count()).map(VertexId).collect(),
            edge_map: (0..graph.edge_count()).map(EdgeId).collect(),
            flipped: vec![false; graph.edge_count()],
        }
    }

    pub fn is_identity(&self) -> bool {
        self.vertex_map.iter().enumerate().all(|(i, v)| v.0 == i)
            && self.edge_map.iter().enumerate().all(|(i, e)| e.0 == i)
            && self.flipped.iter().all(|f| !f)
    }

    pub fn inverse(&self) -> Self {
        let mut vertex_map = vec![VertexId(0); self.vertex_map.len()];
        for (i, v) in self.vertex_map.iter().enumerate() {
            vertex_map[v.0] = VertexId(i);
        }
        let mut edge_map = vec![EdgeId(0); self.edge_map.len()];
        let mut flipped = vec![false; self.flipped.len()];
        for (i, e) in self.edge_map.iter().enumerate() {
            edge_map[e.0] = EdgeId(i);
            flipped[e.0] = self.flipped[i];
        }
        Isometry {
            vertex_map,
            edge_map,
            flipped,
        }
    }

    /// `self ∘ other`: apply `other` first.
    pub fn compose(&self, other: &Isometry) -> Self {
        Isometry {
            vertex_map: other.vertex_map.iter().map(|v| self.vertex_map[v.0]).collect(),
            edge_map: other.edge_map.iter().map(|e| self.edge_map[e.0]).collect(),
            flipped: other
                .edge_map
                .iter()
                .zip(&other.flipped)
                .map(|(e, &f)| f ^ self.flipped[e.0])
                .collect(),
        }
    }

    /// Image of the point at coordinate `x` on edge `e`.
    pub fn map_point(&self, graph: &MetricGraph, e: EdgeId, x: f64) -> (EdgeId, f64) {
        let target = self.edge_map[e.0];
        if self.flipped[e.0] {
            (target, graph.edge(target).length - x)
        } else {
            (target, x)
        }
    }
}

fn lengths_match(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * a.abs().max(b.abs())
}

/// All isometries of the graph, identity first. Found by backtracking over
/// edge assignments; at most `k! 2^k` for `k` edges.
pub fn enumerate_isometries(graph: &MetricGraph) -> Vec<Isometry> {
    let k = graph.edge_count();
    let n = graph.vertex_count();
    let mut state = Search {
        graph,
        edge_map: vec![None; k],
        flipped: vec![false; k],
        used: vec![false; k],
        vmap: vec![None; n],
        vinv: vec![None; n],
        out: Vec::new(),
    };
    state.assign(0);
    let mut out = state.out;
    if let Some(pos) = out.iter().position(Isometry::is_identity) {
        out.swap(0, pos);
    }
    out
}

struct Search<'g> {
    graph: &'g MetricGraph,
    edge_map: Vec<Option<EdgeId>>,
    flipped: Vec<bool>,
    used: Vec<bool>,
    vmap: Vec<Option<VertexId>>,
    vinv: Vec<Option<VertexId>>,
    out: Vec<Isometry>,
}

impl Search<'_> {
    fn assign(&mut self, i: usize) {
        let k = self.graph.edge_count();
        if i == k {
            self.out.push(Isometry {
                vertex_map: self.vmap.iter().map(|v| v.expect("all vertices touched")).collect(),
                edge_map: self.edge_map.iter().map(|e| e.expect("complete")).collect(),
                flipped: self.flipped.clone(),
            });
            return;
        }
        let src = self.graph.edge(EdgeId(i)).clone();
        for j in 0..k {
            if self.used[j] {
                continue;
            }
            let dst = self.graph.edge(EdgeId(j));
            if !lengths_match(src.length, dst.length) {
                continue;
            }
            for flip in [false, true] {
                let (a, b) = if flip { (dst.to, dst.from) } else { (dst.from, dst.to) };
                let mut bound = Vec::new();
                if self.bind(src.from, a, &mut bound) && self.bind(src.to, b, &mut bound) {
                    self.used[j] = true;
                    self.edge_map[i] = Some(EdgeId(j));
                    self.flipped[i] = flip;
                    self.assign(i + 1);
                    self.used[j] = false;
                    self.edge_map[i] = None;
                    self.flipped[i] = false;
                }
                for v in bound {
                    let w = self.vmap[v].take().expect("bound");
                    self.vinv[w.0] = None;
                }
            }
        }
    }

    fn bind(&mut self, v: VertexId, w: VertexId, bound: &mut Vec<usize>) -> bool {
        match (self.vmap[v.0], self.vinv[w.0]) {
            (Some(x), _) => x == w,
            (None, Some(_)) => false,
            (None, None) => {
                let cv = self.graph.vertex(v).condition;
                let cw = self.graph.vertex(w).condition;
                if cv != cw || self.graph.degree(v) != self.graph.degree(w) {
                    return false;
                }
                self.vmap[v.0] = Some(w);
                self.vinv[w.0] = Some(v);
                bound.push(v.0);
                true
            }
        }
    }
}

/// Convenience constructor for tests and scenarios: `k` edges of the given
/// lengths joined at vertex 0, leaves `1..=k`. Edges run from the center
/// outwards.
pub fn star(lengths: &[f64], center: VertexCondition, leaves: VertexCondition) -> Result<MetricGraph> {
    let mut vertices = vec![Vertex {
        label: "c".into(),
        condition: center,
    }];
    let mut edges = Vec::new();
    for (i, &length) in lengths.iter().enumerate() {
        vertices.push(Vertex {
            label: format!("l{}", i + 1),
            condition: leaves,
        });
        edges.push(Edge {
            label: format!("e{}", i + 1),
            from: VertexId(0),
            to: VertexId(i + 1),
            length,
            potential: Potential::Zero,
        });
    }
    MetricGraph::new(vertices, edges)
}

/// A chain of edges `v0 - v1 - ... - vk`, oriented left to right.
pub fn chain(lengths: &[f64], ends: VertexCondition, interior: VertexCondition) -> Result<MetricGraph> {
    let k = lengths.len();
    let vertices = (0..=k)
        .map(|i| Vertex {
            label: format!("v{i}"),
            condition: if i == 0 || i == k { ends } else { interior },
        })
        .collect();
    let edges = lengths
        .iter()
        .enumerate()
        .map(|(i, &length)| Edge {
            label: format!("e{}", i + 1),
            from: VertexId(i),
            to: VertexId(i + 1),
            length,
            potential: Potential::Zero,
        })
        .collect();
    MetricGraph::new(vertices, edges)
}
