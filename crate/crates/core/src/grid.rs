//! Global grid over all edges. Each vertex owns a single grid point shared
//! by every incident edge, which is how continuity at vertices is enforced.

use crate::error::{Error, Result};
use crate::graph::{EdgeId, End, MetricGraph, VertexId};

/// Where a global grid point lives.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Site {
    Vertex(VertexId),
    /// `k`-th point of the edge, `0 < k < n`.
    Interior { edge: EdgeId, k: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct EdgeGrid {
    /// Number of intervals.
    pub intervals: usize,
    /// Effective spacing `length / intervals`.
    pub spacing: f64,
    /// Global index of point `k`, `k = 0..=intervals`; the ends are vertex points.
    pub points: Vec<usize>,
}

impl EdgeGrid {
    pub fn coordinate(&self, k: usize) -> f64 {
        k as f64 * self.spacing
    }

    /// Global index of the point `steps` away from the vertex at `end`.
    pub fn from_end(&self, end: End, steps: usize) -> usize {
        match end {
            End::From => self.points[steps],
            End::To => self.points[self.intervals - steps],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    edges: Vec<EdgeGrid>,
    vertex_points: Vec<usize>,
    sites: Vec<Site>,
    weights: Vec<f64>,
    requested_h: f64,
}

impl Grid {
    /// Vertices occupy global indices `0..V`, followed by the interior points
    /// of each edge in edge order.
    pub fn build(graph: &MetricGraph, h: f64) -> Result<Grid> {
        if !(h.is_finite() && h > 0.0) {
            return Err(Error::InvalidParameter {
                name: "h",
                reason: format!("grid spacing must be positive, got {h}"),
            });
        }
        let nv = graph.vertex_count();
        let mut sites: Vec<Site> = (0..nv).map(|v| Site::Vertex(VertexId(v))).collect();
        let mut weights = vec![0.0; nv];
        let vertex_points: Vec<usize> = (0..nv).collect();
        let mut edges = Vec::with_capacity(graph.edge_count());

        for (i, e) in graph.edges().iter().enumerate() {
            let intervals = (e.length / h).round() as usize;
            if intervals < 2 {
                return Err(Error::GridTooCoarse {
                    h,
                    edge: e.label.clone(),
                    length: e.length,
                });
            }
            let spacing = e.length / intervals as f64;
            let mut points = Vec::with_capacity(intervals + 1);
            points.push(e.from.0);
            for k in 1..intervals {
                points.push(sites.len());
                sites.push(Site::Interior { edge: EdgeId(i), k });
                weights.push(spacing);
            }
            points.push(e.to.0);
            weights[e.from.0] += 0.5 * spacing;
            weights[e.to.0] += 0.5 * spacing;
            edges.push(EdgeGrid {
                intervals,
                spacing,
                points,
            });
        }

        Ok(Grid {
            edges,
            vertex_points,
            sites,
            weights,
            requested_h: h,
        })
    }

    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    pub fn requested_spacing(&self) -> f64 {
        self.requested_h
    }

    pub fn edge(&self, e: EdgeId) -> &EdgeGrid {
        &self.edges[e.0]
    }

    pub fn edges(&self) -> &[EdgeGrid] {
        &self.edges
    }

    pub fn vertex_point(&self, q: VertexId) -> usize {
        self.vertex_points[q.0]
    }

    pub fn site(&self, i: usize) -> Site {
        self.sites[i]
    }

    /// Trapezoidal integration weights.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn min_spacing(&self) -> f64 {
        self.edges.iter().map(|e| e.spacing).fold(f64::INFINITY, f64::min)
    }

    /// A representative `(edge, x)` location of a global point. Vertex points
    /// are reported on their first incident edge.
    pub fn location(&self, graph: &MetricGraph, i: usize) -> (EdgeId, f64) {
        match self.sites[i] {
            Site::Interior { edge, k } => (edge, self.edges[edge.0].coordinate(k)),
            Site::Vertex(q) => {
                let (e, end) = graph.incident(q)[0];
                (e, graph.edge(e).coordinate_of(end))
            }
        }
    }

    /// Grid neighbours of a point, as `(neighbour, edge, spacing)`.
    pub fn neighbours(&self, graph: &MetricGraph, i: usize) -> Vec<(usize, EdgeId, f64)> {
        match self.sites[i] {
            Site::Interior { edge, k } => {
                let eg = &self.edges[edge.0];
                vec![
                    (eg.points[k - 1], edge, eg.spacing),
                    (eg.points[k + 1], edge, eg.spacing),
                ]
            }
            Site::Vertex(q) => graph
                .incident(q)
                .iter()
                .map(|&(e, end)| {
                    let eg = &self.edges[e.0];
                    (eg.from_end(end, 1), e, eg.spacing)
                })
                .collect(),
        }
    }
}
