//! Initial states and unitary time evolution.
//!
//! The Crank–Nicolson step `(1 + iτH) ψ' = (1 - iτH) ψ`, `τ = dt/2ħ`, is the
//! Cayley transform of a self-adjoint matrix and therefore preserves the
//! weighted norm exactly in exact arithmetic. It is solved in stiffness form
//! `(W + iτK) ψ' = (W - iτK) ψ` with a sparse factorization computed once.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::graph::{EdgeId, MetricGraph};
use crate::grid::Grid;
use crate::hamiltonian::HamiltonianMatrix;
use crate::linalg::SymmetricLdl;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Wave function sampled on every global grid point at time `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveState {
    pub t: f64,
    pub psi: Vec<Complex64>,
}

impl WaveState {
    pub fn zeros(grid: &Grid, t: f64) -> Self {
        WaveState {
            t,
            psi: vec![ZERO; grid.len()],
        }
    }

    /// `Σ w_i |ψ_i|²`.
    pub fn norm_sqr(&self, grid: &Grid) -> f64 {
        self.psi
            .iter()
            .zip(grid.weights())
            .map(|(p, w)| w * p.norm_sqr())
            .sum()
    }

    pub fn normalize(&mut self, grid: &Grid) -> Result<()> {
        let n = self.norm_sqr(grid).sqrt();
        if !(n.is_finite() && n > 0.0) {
            return Err(Error::Construction("cannot normalize a zero state".into()));
        }
        self.psi.iter_mut().for_each(|p| *p /= n);
        Ok(())
    }

    /// Sample `f(edge, x)` on every grid point; a vertex takes the value of
    /// its first incident edge.
    pub fn from_fn<F>(graph: &MetricGraph, grid: &Grid, t: f64, f: F) -> Self
    where
        F: Fn(EdgeId, f64) -> Complex64,
    {
        let mut psi = vec![ZERO; grid.len()];
        for (i, eg) in grid.edges().iter().enumerate() {
            for k in 1..eg.intervals {
                psi[eg.points[k]] = f(EdgeId(i), eg.coordinate(k));
            }
        }
        for q in 0..graph.vertex_count() {
            let q = crate::graph::VertexId(q);
            let (e, end) = graph.incident(q)[0];
            psi[grid.vertex_point(q)] = f(e, graph.edge(e).coordinate_of(end));
        }
        WaveState { t, psi }
    }

    pub fn conjugate(&self) -> Self {
        WaveState {
            t: self.t,
            psi: self.psi.iter().map(|p| p.conj()).collect(),
        }
    }

    pub fn scaled(&self, factor: Complex64) -> Self {
        WaveState {
            t: self.t,
            psi: self.psi.iter().map(|p| p * factor).collect(),
        }
    }

    /// Weighted inner product `⟨self, other⟩`.
    pub fn inner(&self, other: &WaveState, grid: &Grid) -> Complex64 {
        self.psi
            .iter()
            .zip(&other.psi)
            .zip(grid.weights())
            .map(|((a, b), w)| a.conj() * b * *w)
            .sum()
    }

    /// Linear interpolation between two states.
    pub fn lerp(a: &WaveState, b: &WaveState, t: f64) -> WaveState {
        let span = b.t - a.t;
        let s = if span == 0.0 { 0.0 } else { (t - a.t) / span };
        WaveState {
            t,
            psi: a
                .psi
                .iter()
                .zip(&b.psi)
                .map(|(x, y)| x * (1.0 - s) + y * s)
                .collect(),
        }
    }

    /// Discrete momentum expectation `⟨ψ, -iħ ∂ψ⟩` along edge orientations,
    /// computed with central differences over interior points.
    pub fn momentum(&self, grid: &Grid, hbar: f64) -> f64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for eg in grid.edges() {
            for k in 1..eg.intervals {
                let (a, i, b) = (eg.points[k - 1], eg.points[k], eg.points[k + 1]);
                let d = (self.psi[b] - self.psi[a]) / (2.0 * eg.spacing);
                acc += self.psi[i].conj() * d * Complex64::new(0.0, -hbar) * eg.spacing;
            }
        }
        acc.re
    }
}

/// Gaussian packet `A exp(-(x - center)²/(4 width²) + i k x)` on one edge.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Packet {
    pub edge: EdgeId,
    pub center: f64,
    pub width: f64,
    pub k: f64,
    pub amplitude: Complex64,
}

impl Packet {
    fn check(&self, graph: &MetricGraph) -> Result<()> {
        if self.edge.0 >= graph.edge_count() {
            return Err(Error::UnresolvedId {
                id: self.edge.0.to_string(),
                context: "packet".into(),
            });
        }
        if !(self.width.is_finite() && self.width > 0.0) {
            return Err(Error::InvalidParameter {
                name: "width",
                reason: format!("must be positive, got {}", self.width),
            });
        }
        let length = graph.edge(self.edge).length;
        if !(0.0..=length).contains(&self.center) {
            return Err(Error::InvalidParameter {
                name: "center",
                reason: format!("{} lies outside [0, {length}]", self.center),
            });
        }
        Ok(())
    }

    fn value(&self, x: f64) -> Complex64 {
        let d = x - self.center;
        self.amplitude
            * Complex64::new(-d * d / (4.0 * self.width * self.width), self.k * x).exp()
    }

    /// Whether the packet's tails reach the ends of its edge (closer than
    /// eight widths, where the amplitude is still above `e^-16`). A cut-off
    /// tail is a kink at the vertex and seeds grid-scale waves.
    pub fn touches_ends(&self, graph: &MetricGraph) -> bool {
        let length = graph.edge(self.edge).length;
        self.center < 8.0 * self.width || length - self.center < 8.0 * self.width
    }
}

/// Normalized superposition of packets. Dirichlet vertices are pinned to 0.
pub fn superpose(graph: &MetricGraph, grid: &Grid, packets: &[Packet]) -> Result<WaveState> {
    let mut state = WaveState::zeros(grid, 0.0);
    for p in packets {
        p.check(graph)?;
        let eg = grid.edge(p.edge);
        for (k, &g) in eg.points.iter().enumerate() {
            state.psi[g] += p.value(eg.coordinate(k));
        }
    }
    for (q, v) in graph.vertices().iter().enumerate() {
        if v.condition.is_dirichlet() {
            state.psi[grid.vertex_point(crate::graph::VertexId(q))] = ZERO;
        }
    }
    state.normalize(grid)?;
    Ok(state)
}

pub fn gaussian_packet(
    graph: &MetricGraph,
    grid: &Grid,
    edge: EdgeId,
    center: f64,
    width: f64,
    k: f64,
) -> Result<WaveState> {
    superpose(
        graph,
        grid,
        &[Packet {
            edge,
            center,
            width,
            k,
            amplitude: Complex64::new(1.0, 0.0),
        }],
    )
}

/// Full eigendecomposition of `H` (dense; intended for a few thousand points
/// at most). Eigenvectors are orthonormal in the weighted inner product.
#[derive(Debug, Clone)]
pub struct Spectrum {
    pub energies: Vec<f64>,
    vectors: Vec<Vec<Complex64>>,
    hbar: f64,
}

impl Spectrum {
    pub fn compute(h: &HamiltonianMatrix) -> Result<Self> {
        let n = h.dim();
        if n == 0 {
            return Err(Error::Eigen("empty Hamiltonian".into()));
        }
        let s = h.weights().iter().map(|w| w.sqrt()).collect::<Vec<_>>();
        let mut m = DMatrix::<Complex64>::zeros(n, n);
        for i in 0..n {
            for (j, v) in h.row(i) {
                m[(i, j)] = v * s[i] / s[j];
            }
        }
        // symmetrize away rounding so the Hermitian solver sees exact symmetry
        let m = (&m + m.adjoint()) * Complex64::new(0.5, 0.0);
        let eig = m.symmetric_eigen();
        if eig.eigenvalues.iter().any(|e| !e.is_finite()) {
            return Err(Error::Eigen("non-finite eigenvalue".into()));
        }
        let mut idx: Vec<usize> = (0..n).collect();
        idx.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let energies = idx.iter().map(|&i| eig.eigenvalues[i]).collect();
        let vectors = idx
            .iter()
            .map(|&i| {
                let col = eig.eigenvectors.column(i);
                (0..n).map(|r| col[r] / s[r]).collect()
            })
            .collect();
        Ok(Spectrum {
            energies,
            vectors,
            hbar: h.hbar(),
        })
    }

    pub fn len(&self) -> usize {
        self.energies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.energies.is_empty()
    }

    pub fn state(&self, h: &HamiltonianMatrix, grid: &Grid, n: usize) -> Result<WaveState> {
        let v = self.vectors.get(n).ok_or_else(|| Error::InvalidParameter {
            name: "index",
            reason: format!("{n} >= dimension {}", self.len()),
        })?;
        Ok(WaveState {
            t: 0.0,
            psi: h.extend(v, grid.len()),
        })
    }

    /// Exact propagation by eigen-expansion, a cross-check for the stepper.
    pub fn propagate(&self, h: &HamiltonianMatrix, grid: &Grid, state: &WaveState, t: f64) -> WaveState {
        let active = h.restrict(&state.psi);
        let w = h.weights();
        let mut out = vec![ZERO; active.len()];
        for (e, v) in self.energies.iter().zip(&self.vectors) {
            let c: Complex64 = v
                .iter()
                .zip(&active)
                .zip(w)
                .map(|((a, b), w)| a.conj() * b * *w)
                .sum();
            let phase = Complex64::new(0.0, -e * (t - state.t) / self.hbar).exp();
            for (o, a) in out.iter_mut().zip(v) {
                *o += c * phase * a;
            }
        }
        WaveState {
            t,
            psi: h.extend(&out, grid.len()),
        }
    }
}

/// `n`-th lowest eigenpair.
pub fn eigenstate(h: &HamiltonianMatrix, grid: &Grid, n: usize) -> Result<(f64, WaveState)> {
    if n >= h.dim() {
        return Err(Error::InvalidParameter {
            name: "index",
            reason: format!("{n} >= dimension {}", h.dim()),
        });
    }
    let spec = Spectrum::compute(h)?;
    Ok((spec.energies[n], spec.state(h, grid, n)?))
}

/// Crank–Nicolson stepper with a cached factorization.
#[derive(Debug, Clone)]
pub struct CrankNicolson {
    dt: f64,
    tau: f64,
    weights: Vec<f64>,
    stiffness: Vec<Vec<(usize, f64)>>,
    active_to_global: Vec<usize>,
    n_global: usize,
    factor: Option<SymmetricLdl>,
}

impl CrankNicolson {
    pub fn new(grid: &Grid, h: &HamiltonianMatrix, dt: f64) -> Result<Self> {
        if !(dt.is_finite() && dt >= 0.0) {
            return Err(Error::InvalidParameter {
                name: "dt",
                reason: format!("must be non-negative, got {dt}"),
            });
        }
        let n = h.dim();
        let tau = dt / (2.0 * h.hbar());
        let stiffness: Vec<Vec<(usize, f64)>> = (0..n)
            .map(|i| h.row(i).map(|(j, v)| (j, v.re * h.weights()[i])).collect())
            .collect();
        let factor = if dt > 0.0 {
            let mut entries = Vec::with_capacity(h.nnz());
            for (i, row) in stiffness.iter().enumerate() {
                for &(j, k) in row {
                    let w = if i == j { h.weights()[i] } else { 0.0 };
                    entries.push((i, j, Complex64::new(w, tau * k)));
                }
            }
            // chains first, then the vertices: fill stays O(n)
            let g2a = h.global_to_active();
            let nv = grid.len() - grid.edges().iter().map(|e| e.intervals - 1).sum::<usize>();
            let order: Vec<usize> = (nv..grid.len())
                .chain(0..nv)
                .filter_map(|g| g2a[g])
                .collect();
            Some(SymmetricLdl::factor(n, &entries, &order)?)
        } else {
            None
        };
        Ok(CrankNicolson {
            dt,
            tau,
            weights: h.weights().to_vec(),
            stiffness,
            active_to_global: h.active_to_global().to_vec(),
            n_global: grid.len(),
            factor,
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn step(&self, state: &WaveState) -> Result<WaveState> {
        let Some(factor) = &self.factor else {
            return Ok(state.clone());
        };
        let psi: Vec<Complex64> = self.active_to_global.iter().map(|&g| state.psi[g]).collect();
        let rhs: Vec<Complex64> = self
            .stiffness
            .iter()
            .enumerate()
            .map(|(i, row)| {
                let kpsi: Complex64 = row.iter().map(|&(j, k)| psi[j] * k).sum();
                psi[i] * self.weights[i] - Complex64::new(0.0, self.tau) * kpsi
            })
            .collect();
        let next = factor.solve(&rhs);
        if next.iter().any(|z| !z.is_finite()) {
            return Err(Error::Singular(0));
        }
        let mut out = vec![ZERO; self.n_global];
        for (a, &g) in self.active_to_global.iter().enumerate() {
            out[g] = next[a];
        }
        Ok(WaveState {
            t: state.t + self.dt,
            psi: out,
        })
    }
}

/// How states between stored steps are obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Interpolation {
    Linear,
}

/// States at uniformly spaced times `t0 + k·spacing`.
#[derive(Debug, Clone)]
pub struct EvolutionRecord {
    pub states: Vec<WaveState>,
    pub spacing: f64,
    pub interpolation: Interpolation,
    /// Indices into `states` nearest to the requested output times.
    pub outputs: Vec<usize>,
}

impl EvolutionRecord {
    pub fn t0(&self) -> f64 {
        self.states[0].t
    }

    pub fn t_end(&self) -> f64 {
        self.states[self.states.len() - 1].t
    }

    /// Bracketing snapshot index and the fraction towards the next one.
    pub fn locate(&self, t: f64) -> Result<(usize, f64)> {
        let tol = 1e-9 * self.spacing.max(f64::MIN_POSITIVE);
        if t < self.t0() - tol || t > self.t_end() + tol || !t.is_finite() {
            return Err(Error::TimeOutOfRange(t));
        }
        if self.states.len() == 1 {
            return Ok((0, 0.0));
        }
        let u = ((t - self.t0()) / self.spacing).max(0.0);
        let k = (u.floor() as usize).min(self.states.len() - 2);
        Ok((k, (u - k as f64).clamp(0.0, 1.0)))
    }

    pub fn state_at(&self, t: f64) -> Result<WaveState> {
        let (k, s) = self.locate(t)?;
        if self.states.len() == 1 || s == 0.0 {
            let mut st = self.states[k].clone();
            st.t = t;
            return Ok(st);
        }
        Ok(WaveState::lerp(&self.states[k], &self.states[k + 1], t))
    }

    /// Index of the stored state nearest `t`.
    pub fn nearest(&self, t: f64) -> Result<usize> {
        let (k, s) = self.locate(t)?;
        Ok(if s > 0.5 { k + 1 } else { k }.min(self.states.len() - 1))
    }
}

/// Run `n_steps` steps, storing every `stride`-th state. Requested output
/// times are snapped to the nearest stored state.
pub fn evolve(
    stepper: &CrankNicolson,
    initial: &WaveState,
    n_steps: usize,
    stride: usize,
    output_times: &[f64],
) -> Result<EvolutionRecord> {
    let stride = stride.max(1);
    let mut states = vec![initial.clone()];
    let mut current = initial.clone();
    for s in 1..=n_steps {
        current = stepper.step(&current)?;
        if s % stride == 0 {
            // re-anchor the clock to avoid accumulating rounding in t
            current.t = initial.t + s as f64 * stepper.dt();
            states.push(current.clone());
        }
    }
    let mut record = EvolutionRecord {
        states,
        spacing: stepper.dt() * stride as f64,
        interpolation: Interpolation::Linear,
        outputs: Vec::new(),
    };
    let mut outputs = Vec::new();
    for &t in output_times {
        let t = t.clamp(record.t0(), record.t_end());
        let idx = record.nearest(t)?;
        if !outputs.contains(&idx) {
            outputs.push(idx);
        }
    }
    record.outputs = outputs;
    Ok(record)
}
