//! Density, probability current, vertex fluxes and the edge-selection law.
//!
//! Currents on an edge are expressed in that edge's orientation (`from` to
//! `to`). At a vertex `q` the flux into edge `e` is `s_e = n_e(q)·j_e(q)`,
//! evaluated with the one-sided second-order stencil
//! `(-3ψ_q + 4ψ_{q+h} - ψ_{q+2h}) / 2h` along `e`.

use crate::error::{Error, Result};
use crate::graph::{EdgeId, End, MetricGraph, VertexId};
use crate::grid::Grid;
use crate::propagator::{EvolutionRecord, WaveState};

/// Relative density floor below which the Bohmian velocity is not evaluated.
pub const RHO_FLOOR_REL: f64 = 1e-12;
/// Absolute floor on the total outflux for the edge-selection denominator.
pub const SIGMA_FLOOR: f64 = 1e-14;

/// `ρ_i = |ψ_i|²` on every grid point.
pub fn density(state: &WaveState) -> Vec<f64> {
    state.psi.iter().map(|p| p.norm_sqr()).collect()
}

/// Central-difference current at the interior points of every edge.
/// `out[e][k - 1]` is the current at point `k`, `0 < k < n_e`.
pub fn current(grid: &Grid, state: &WaveState, hbar: f64) -> Vec<Vec<f64>> {
    grid.edges()
        .iter()
        .map(|eg| {
            (1..eg.intervals)
                .map(|k| {
                    let (a, i, b) = (eg.points[k - 1], eg.points[k], eg.points[k + 1]);
                    hbar * (state.psi[i].conj() * (state.psi[b] - state.psi[a])).im
                        / (2.0 * eg.spacing)
                })
                .collect()
        })
        .collect()
}

/// `s_e = n_e(q)·j_e(q)` with the one-sided second-order stencil.
pub fn outward_current(grid: &Grid, state: &WaveState, edge: EdgeId, end: End, hbar: f64) -> f64 {
    let eg = grid.edge(edge);
    let q = state.psi[eg.from_end(end, 0)];
    let p1 = state.psi[eg.from_end(end, 1)];
    let p2 = state.psi[eg.from_end(end, 2)];
    // Im(ψ̄_q · (-3ψ_q)) vanishes
    hbar * (q.conj() * (p1 * 4.0 - p2)).im / (2.0 * eg.spacing)
}

/// Exact lattice flux from the vertex into the first site along `edge`:
/// `(ħ/h) Im(ψ̄_q ψ_{q+h})`.
pub fn lattice_outward_flux(grid: &Grid, state: &WaveState, edge: EdgeId, end: End, hbar: f64) -> f64 {
    let eg = grid.edge(edge);
    let q = state.psi[eg.from_end(end, 0)];
    let p1 = state.psi[eg.from_end(end, 1)];
    hbar * (q.conj() * p1).im / eg.spacing
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdgeFlux {
    pub edge: EdgeId,
    /// Signed outward current `n_e·j_e`.
    pub s: f64,
    pub s_plus: f64,
    pub s_minus: f64,
}

impl EdgeFlux {
    pub fn new(edge: EdgeId, s: f64) -> Self {
        EdgeFlux {
            edge,
            s,
            s_plus: s.max(0.0),
            s_minus: (-s).max(0.0),
        }
    }
}

/// Signed vertex currents for every edge in `E_q`, in incidence order.
#[derive(Debug, Clone, PartialEq)]
pub struct FluxReport {
    pub vertex: VertexId,
    pub t: f64,
    pub edges: Vec<EdgeFlux>,
    /// `Σ_e s_e`.
    pub kirchhoff_residual: f64,
}

impl FluxReport {
    pub fn from_signed(vertex: VertexId, t: f64, signed: impl IntoIterator<Item = (EdgeId, f64)>) -> Self {
        let edges: Vec<EdgeFlux> = signed.into_iter().map(|(e, s)| EdgeFlux::new(e, s)).collect();
        let kirchhoff_residual = edges.iter().map(|f| f.s).sum();
        FluxReport {
            vertex,
            t,
            edges,
            kirchhoff_residual,
        }
    }

    pub fn influx(&self) -> f64 {
        self.edges.iter().map(|f| f.s_minus).sum()
    }

    pub fn outflux(&self) -> f64 {
        self.edges.iter().map(|f| f.s_plus).sum()
    }

    /// The report seen under time reversal: every current flips sign.
    pub fn reversed(&self) -> Self {
        FluxReport::from_signed(self.vertex, self.t, self.edges.iter().map(|f| (f.edge, -f.s)))
    }

    pub fn signed(&self) -> Vec<f64> {
        self.edges.iter().map(|f| f.s).collect()
    }
}

pub fn vertex_currents(graph: &MetricGraph, grid: &Grid, state: &WaveState, q: VertexId, hbar: f64) -> Result<FluxReport> {
    let mut signed = Vec::with_capacity(graph.degree(q));
    for &(e, end) in graph.incident(q) {
        if grid.edge(e).intervals < 2 {
            return Err(Error::EdgeTooShort(e.0));
        }
        signed.push((e, outward_current(grid, state, e, end, hbar)));
    }
    Ok(FluxReport::from_signed(q, state.t, signed))
}

/// Vertex fluxes from the exact lattice currents instead of the stencil.
pub fn lattice_vertex_currents(graph: &MetricGraph, grid: &Grid, state: &WaveState, q: VertexId, hbar: f64) -> FluxReport {
    FluxReport::from_signed(
        q,
        state.t,
        graph
            .incident(q)
            .iter()
            .map(|&(e, end)| (e, lattice_outward_flux(grid, state, e, end, hbar))),
    )
}

/// Probability of leaving a vertex along each incident edge.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeSelection {
    pub vertex: VertexId,
    pub t: f64,
    pub edges: Vec<EdgeId>,
    pub probabilities: Vec<f64>,
}

impl EdgeSelection {
    pub fn probability(&self, e: EdgeId) -> f64 {
        self.edges
            .iter()
            .position(|&f| f == e)
            .map_or(0.0, |i| self.probabilities[i])
    }
}

/// `P(e|q) = s_e⁺ / Σ_f s_f⁺`; edges with `s_e ≤ 0` get exactly zero.
pub fn edge_selection(report: &FluxReport) -> Result<EdgeSelection> {
    let total = report.outflux();
    if !(total > SIGMA_FLOOR) {
        return Err(Error::StalledVertex {
            vertex: report.vertex.0,
            t: report.t,
        });
    }
    Ok(EdgeSelection {
        vertex: report.vertex,
        t: report.t,
        edges: report.edges.iter().map(|f| f.edge).collect(),
        probabilities: report.edges.iter().map(|f| f.s_plus / total).collect(),
    })
}

/// Densities, currents and vertex fluxes of a whole evolution record,
/// precomputed for trajectory integration.
///
/// Per snapshot and edge, `rho` and `current` hold values at every grid
/// point `k = 0..=n_e` of the edge, the currents in the edge's orientation.
/// At the two end points the current is the vertex stencil value, so the
/// velocity field and the vertex fluxes agree.
#[derive(Debug, Clone)]
pub struct FlowField {
    t0: f64,
    spacing: f64,
    snapshots: usize,
    hbar: f64,
    edge_offsets: Vec<usize>,
    edge_spacing: Vec<f64>,
    edge_intervals: Vec<usize>,
    rho: Vec<Vec<f64>>,
    current: Vec<Vec<f64>>,
    rho_max: Vec<f64>,
    /// `[snapshot][vertex]` → signed outward currents in incidence order.
    vertex_flux: Vec<Vec<Vec<f64>>>,
    incidence: Vec<Vec<(EdgeId, End)>>,
    ends: Vec<(VertexId, VertexId)>,
    lengths: Vec<f64>,
}

impl FlowField {
    pub fn new(graph: &MetricGraph, grid: &Grid, record: &EvolutionRecord, hbar: f64) -> Self {
        let mut edge_offsets = Vec::with_capacity(graph.edge_count() + 1);
        let mut total = 0;
        for eg in grid.edges() {
            edge_offsets.push(total);
            total += eg.intervals + 1;
        }
        edge_offsets.push(total);
        let incidence: Vec<Vec<(EdgeId, End)>> =
            (0..graph.vertex_count()).map(|q| graph.incident(VertexId(q)).to_vec()).collect();

        let mut rho = Vec::with_capacity(record.states.len());
        let mut current_all = Vec::with_capacity(record.states.len());
        let mut rho_max = Vec::with_capacity(record.states.len());
        let mut vertex_flux = Vec::with_capacity(record.states.len());
        for st in &record.states {
            let dens = density(st);
            let inner = current(grid, st, hbar);
            let mut r = Vec::with_capacity(total);
            let mut j = Vec::with_capacity(total);
            for (e, eg) in grid.edges().iter().enumerate() {
                let id = EdgeId(e);
                for k in 0..=eg.intervals {
                    r.push(dens[eg.points[k]]);
                    j.push(if k == 0 {
                        outward_current(grid, st, id, End::From, hbar)
                    } else if k == eg.intervals {
                        -outward_current(grid, st, id, End::To, hbar)
                    } else {
                        inner[e][k - 1]
                    });
                }
            }
            rho_max.push(dens.iter().copied().fold(0.0, f64::max));
            rho.push(r);
            current_all.push(j);
            vertex_flux.push(
                incidence
                    .iter()
                    .map(|inc| {
                        inc.iter()
                            .map(|&(e, end)| outward_current(grid, st, e, end, hbar))
                            .collect()
                    })
                    .collect(),
            );
        }

        FlowField {
            t0: record.t0(),
            spacing: record.spacing,
            snapshots: record.states.len(),
            hbar,
            edge_offsets,
            edge_spacing: grid.edges().iter().map(|e| e.spacing).collect(),
            edge_intervals: grid.edges().iter().map(|e| e.intervals).collect(),
            rho,
            current: current_all,
            rho_max,
            vertex_flux,
            incidence,
            ends: graph.edges().iter().map(|e| (e.from, e.to)).collect(),
            lengths: graph.edges().iter().map(|e| e.length).collect(),
        }
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn t_end(&self) -> f64 {
        self.t0 + self.spacing * (self.snapshots - 1) as f64
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn hbar(&self) -> f64 {
        self.hbar
    }

    pub fn snapshots(&self) -> usize {
        self.snapshots
    }

    pub fn edge_count(&self) -> usize {
        self.lengths.len()
    }

    pub fn length(&self, e: EdgeId) -> f64 {
        self.lengths[e.0]
    }

    pub fn intervals(&self, e: EdgeId) -> usize {
        self.edge_intervals[e.0]
    }

    pub fn vertex_at(&self, e: EdgeId, end: End) -> VertexId {
        match end {
            End::From => self.ends[e.0].0,
            End::To => self.ends[e.0].1,
        }
    }

    pub fn coordinate_of(&self, e: EdgeId, end: End) -> f64 {
        match end {
            End::From => 0.0,
            End::To => self.lengths[e.0],
        }
    }

    pub fn vertex_count(&self) -> usize {
        self.incidence.len()
    }

    /// Mass of `[a, b]` on edge `e` at time `t`, linear in time between
    /// snapshots.
    pub fn mass_at(&self, e: EdgeId, a: f64, b: f64, t: f64) -> f64 {
        let (k, s) = self.time_slot(t);
        if self.snapshots == 1 || s == 0.0 {
            return self.interval_mass(k, e, a, b);
        }
        self.interval_mass(k, e, a, b) * (1.0 - s) + self.interval_mass(k + 1, e, a, b) * s
    }

    pub fn incident(&self, q: VertexId) -> &[(EdgeId, End)] {
        &self.incidence[q.0]
    }

    /// Snapshot index and fraction; times are clamped into the record.
    fn time_slot(&self, t: f64) -> (usize, f64) {
        if self.snapshots == 1 {
            return (0, 0.0);
        }
        let u = ((t - self.t0) / self.spacing).clamp(0.0, (self.snapshots - 1) as f64);
        let k = (u.floor() as usize).min(self.snapshots - 2);
        (k, u - k as f64)
    }

    fn space_slot(&self, e: EdgeId, x: f64) -> (usize, f64) {
        let n = self.edge_intervals[e.0];
        let u = (x / self.edge_spacing[e.0]).clamp(0.0, n as f64);
        let i = (u.floor() as usize).min(n - 1);
        (i, u - i as f64)
    }

    fn bilinear(&self, table: &[Vec<f64>], e: EdgeId, x: f64, t: f64) -> f64 {
        let (k, s) = self.time_slot(t);
        let (i, u) = self.space_slot(e, x);
        let off = self.edge_offsets[e.0] + i;
        let at = |snap: usize| table[snap][off] * (1.0 - u) + table[snap][off + 1] * u;
        if self.snapshots == 1 {
            at(0)
        } else {
            at(k) * (1.0 - s) + at(k + 1) * s
        }
    }

    pub fn density_at(&self, e: EdgeId, x: f64, t: f64) -> f64 {
        self.bilinear(&self.rho, e, x, t)
    }

    pub fn current_at(&self, e: EdgeId, x: f64, t: f64) -> f64 {
        self.bilinear(&self.current, e, x, t)
    }

    pub fn density_floor(&self, t: f64) -> f64 {
        let (k, s) = self.time_slot(t);
        let m = if self.snapshots == 1 {
            self.rho_max[0]
        } else {
            self.rho_max[k] * (1.0 - s) + self.rho_max[k + 1] * s
        };
        RHO_FLOOR_REL * m
    }

    /// Bohmian velocity `ĵ/ρ̂` in the edge's orientation.
    pub fn velocity(&self, e: EdgeId, x: f64, t: f64) -> Result<f64> {
        let rho = self.density_at(e, x, t);
        let floor = self.density_floor(t);
        if !(rho >= floor) || rho == 0.0 {
            return Err(Error::NodeEncounter {
                edge: e.0,
                x,
                t,
                density: rho,
                floor,
            });
        }
        Ok(self.current_at(e, x, t) / rho)
    }

    /// Vertex fluxes linearly interpolated in time.
    pub fn flux_report(&self, q: VertexId, t: f64) -> FluxReport {
        let (k, s) = self.time_slot(t);
        let inc = &self.incidence[q.0];
        FluxReport::from_signed(
            q,
            t,
            inc.iter().enumerate().map(|(i, &(e, _))| {
                let v = if self.snapshots == 1 {
                    self.vertex_flux[0][q.0][i]
                } else {
                    self.vertex_flux[k][q.0][i] * (1.0 - s) + self.vertex_flux[k + 1][q.0][i] * s
                };
                (e, v)
            }),
        )
    }

    /// Exact mass of `[a, b]` on edge `e` under the piecewise-linear density
    /// of snapshot `snap`.
    pub fn interval_mass(&self, snap: usize, e: EdgeId, a: f64, b: f64) -> f64 {
        let h = self.edge_spacing[e.0];
        let n = self.edge_intervals[e.0];
        let off = self.edge_offsets[e.0];
        let r = &self.rho[snap][off..=off + n];
        let mut total = 0.0;
        let first = ((a / h).floor() as usize).min(n - 1);
        let last = ((b / h).ceil() as usize).clamp(1, n);
        for i in first..last {
            let lo = (i as f64 * h).max(a);
            let hi = ((i + 1) as f64 * h).min(b);
            if hi <= lo {
                continue;
            }
            let f = |x: f64| r[i] + (r[i + 1] - r[i]) * (x / h - i as f64);
            total += 0.5 * (f(lo) + f(hi)) * (hi - lo);
        }
        total
    }

    /// Per-cell masses of edge `e` at snapshot `snap` (trapezoidal, exact for
    /// the linear interpolant).
    pub fn cell_masses(&self, snap: usize, e: EdgeId) -> Vec<f64> {
        let h = self.edge_spacing[e.0];
        let n = self.edge_intervals[e.0];
        let off = self.edge_offsets[e.0];
        let r = &self.rho[snap][off..=off + n];
        (0..n).map(|i| 0.5 * h * (r[i] + r[i + 1])).collect()
    }

    /// Grid densities at the two ends of cell `i` of edge `e`.
    pub fn cell_densities(&self, snap: usize, e: EdgeId, i: usize) -> (f64, f64) {
        let off = self.edge_offsets[e.0];
        (self.rho[snap][off + i], self.rho[snap][off + i + 1])
    }

    pub fn edge_spacing(&self, e: EdgeId) -> f64 {
        self.edge_spacing[e.0]
    }

    /// Index of the snapshot nearest to `t`.
    pub fn nearest_snapshot(&self, t: f64) -> usize {
        let (k, s) = self.time_slot(t);
        if s > 0.5 {
            (k + 1).min(self.snapshots - 1)
        } else {
            k
        }
    }

    pub fn snapshot_time(&self, k: usize) -> f64 {
        self.t0 + self.spacing * k as f64
    }
}

/// Edge currents sampled with the stencil at a vertex, linearly interpolated
/// in `ψ` between snapshots of a record.
pub fn vertex_currents_at(
    graph: &MetricGraph,
    grid: &Grid,
    record: &EvolutionRecord,
    q: VertexId,
    t: f64,
    hbar: f64,
) -> Result<FluxReport> {
    let st = record.state_at(t)?;
    vertex_currents(graph, grid, &st, q, hbar)
}

/// `|ψ|²`-mass of every edge, counting vertex points with half weight per
/// incident edge (the trapezoidal split).
pub fn edge_masses(grid: &Grid, state: &WaveState) -> Vec<f64> {
    grid.edges()
        .iter()
        .map(|eg| {
            (0..eg.intervals)
                .map(|i| {
                    0.5 * eg.spacing
                        * (state.psi[eg.points[i]].norm_sqr() + state.psi[eg.points[i + 1]].norm_sqr())
                })
                .sum()
        })
        .collect()
}
