//! A star state with influx on one edge and simultaneous outflux on the
//! other two. No deterministic turn rule can then reproduce `|ψ_t|²`.

use crate::currents::{edge_masses, vertex_currents, FlowField};
use crate::error::{Error, Result};
use crate::graph::{star, EdgeId, MetricGraph, VertexCondition, VertexId};
use crate::grid::Grid;
use crate::hamiltonian::HamiltonianMatrix;
use crate::propagator::{evolve, superpose, CrankNicolson, EvolutionRecord, Packet};
use num_complex::Complex64;

/// Currents below this magnitude count as zero when locating the window.
const FLUX_THRESHOLD: f64 = 1e-3;

#[derive(Debug, Clone)]
pub struct ImpossibilityReport {
    pub graph: MetricGraph,
    pub grid: Grid,
    pub record: EvolutionRecord,
    /// Snapshot times.
    pub times: Vec<f64>,
    /// `[snapshot][edge]` masses.
    pub masses: Vec<[f64; 3]>,
    /// `[snapshot][edge]` signed outward currents at the center.
    pub fluxes: Vec<[f64; 3]>,
    /// Snapshot index range `[start, end]` of the window.
    pub window: (usize, usize),
    /// Fraction of interior window samples where the finite-difference
    /// mass derivatives have signs `(-, +, +)`.
    pub sign_fraction: f64,
}

impl ImpossibilityReport {
    pub fn window_times(&self) -> (f64, f64) {
        (self.times[self.window.0], self.times[self.window.1])
    }

    pub fn field(&self) -> FlowField {
        FlowField::new(&self.graph, &self.grid, &self.record, 1.0)
    }
}

/// Unit 3-star, Dirichlet leaves, two packets superposed on `e1` heading
/// into the center. By symmetry `e2` and `e3` receive equal outflux for as
/// long as the packets pass.
pub fn impossibility_scenario(h: f64, dt: f64, t_final: f64) -> Result<ImpossibilityReport> {
    let graph = star(&[1.0, 1.0, 1.0], VertexCondition::default(), VertexCondition::Dirichlet)?;
    let grid = Grid::build(&graph, h)?;
    let ham = HamiltonianMatrix::assemble(&graph, &grid, 1.0)?;
    let packets = [
        Packet {
            edge: EdgeId(0),
            center: 0.5,
            width: 0.06,
            k: -10.0,
            amplitude: Complex64::new(1.0, 0.0),
        },
        Packet {
            edge: EdgeId(0),
            center: 0.7,
            width: 0.03,
            k: -14.0,
            amplitude: Complex64::new(0.5, 0.0),
        },
    ];
    let psi0 = superpose(&graph, &grid, &packets)?;
    let cn = CrankNicolson::new(&grid, &ham, dt)?;
    let steps = (t_final / dt).round() as usize;
    let record = evolve(&cn, &psi0, steps, 1, &[])?;

    let mut times = Vec::with_capacity(record.states.len());
    let mut masses = Vec::with_capacity(record.states.len());
    let mut fluxes = Vec::with_capacity(record.states.len());
    for st in &record.states {
        times.push(st.t);
        let m = edge_masses(&grid, st);
        masses.push([m[0], m[1], m[2]]);
        let r = vertex_currents(&graph, &grid, st, VertexId(0), 1.0)?;
        fluxes.push([r.edges[0].s, r.edges[1].s, r.edges[2].s]);
    }

    let peak = fluxes.iter().flat_map(|f| f.iter().map(|v| v.abs())).fold(0.0, f64::max);
    let thr = FLUX_THRESHOLD;
    let pattern = |f: &[f64; 3]| f[0] < -thr && f[1] > thr && f[2] > thr;
    let mut best = None::<(usize, usize)>;
    let mut k = 0;
    while k < fluxes.len() {
        if pattern(&fluxes[k]) {
            let s = k;
            while k + 1 < fluxes.len() && pattern(&fluxes[k + 1]) {
                k += 1;
            }
            if best.is_none_or(|(a, b)| k - s > b - a) {
                best = Some((s, k));
            }
        }
        k += 1;
    }
    let window = match best {
        Some(w) if w.1 >= w.0 + 2 => w,
        _ => {
            return Err(Error::Construction(format!(
                "no window with flux signs (-, +, +) at the center (peak |s| = {peak:.3e}, {} samples)",
                fluxes.len()
            )))
        }
    };

    let mut hits = 0usize;
    let mut total = 0usize;
    for i in window.0 + 1..window.1 {
        let d: Vec<f64> = (0..3).map(|e| masses[i + 1][e] - masses[i - 1][e]).collect();
        total += 1;
        if d[0] < 0.0 && d[1] > 0.0 && d[2] > 0.0 {
            hits += 1;
        }
    }
    Ok(ImpossibilityReport {
        graph,
        grid,
        record,
        times,
        masses,
        fluxes,
        window,
        sign_fraction: hits as f64 / total.max(1) as f64,
    })
}
