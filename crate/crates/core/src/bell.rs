//! Bell's jump process on the grid lattice.
//!
//! The rate from site `i` to a neighbour `j` is
//! `[(2/ħ) Im(ψ̄_j K_ji ψ_i)]⁺ / (w_i |ψ_i|²)`, where `K = W H` is the
//! stiffness matrix; on a uniform interior this is the familiar
//! `[(2/ħ) Im(ψ̄_j H_ji ψ_i)]⁺ / |ψ_i|²`.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Exp};
use rayon::prelude::*;

use crate::currents::{lattice_vertex_currents, FluxReport};
use crate::error::{Error, Result};
use crate::graph::{EdgeId, MetricGraph, VertexId};
use crate::grid::Grid;
use crate::hamiltonian::HamiltonianMatrix;
use crate::propagator::{EvolutionRecord, WaveState};
use crate::sampler::path_rng;

/// Sites with `w|ψ|²` below this are treated as empty.
pub const SITE_FLOOR: f64 = 1e-300;

/// Off-diagonal stiffness entries in global indices.
#[derive(Debug, Clone)]
pub struct Lattice {
    neighbours: Vec<Vec<(usize, f64)>>,
    weights: Vec<f64>,
    hbar: f64,
}

impl Lattice {
    pub fn new(grid: &Grid, h: &HamiltonianMatrix) -> Self {
        let map = h.active_to_global();
        let mut neighbours = vec![Vec::new(); grid.len()];
        for i in 0..h.dim() {
            for (j, _) in h.row(i) {
                if j != i {
                    neighbours[map[i]].push((map[j], h.stiffness(i, j).re));
                }
            }
        }
        Lattice {
            neighbours,
            weights: grid.weights().to_vec(),
            hbar: h.hbar(),
        }
    }

    pub fn neighbours(&self, site: usize) -> &[(usize, f64)] {
        &self.neighbours[site]
    }

    /// Probability current into `j` from `i`.
    fn flux(&self, psi_i: Complex64, psi_j: Complex64, k: f64) -> f64 {
        2.0 / self.hbar * (psi_j.conj() * psi_i).im * k
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateTable {
    pub site: usize,
    pub t: f64,
    /// `(neighbour, rate)` in the sparsity order of `H`.
    pub rates: Vec<(usize, f64)>,
}

impl RateTable {
    pub fn total(&self) -> f64 {
        self.rates.iter().map(|r| r.1).sum()
    }
}

pub fn jump_rates(lattice: &Lattice, state: &WaveState, site: usize) -> Result<RateTable> {
    rates_with(lattice, site, state.t, |i| state.psi[i])
}

fn rates_with(lattice: &Lattice, site: usize, t: f64, psi: impl Fn(usize) -> Complex64) -> Result<RateTable> {
    let pi = psi(site);
    let mass = lattice.weights[site] * pi.norm_sqr();
    if !(mass > SITE_FLOOR) {
        return Err(Error::ZeroDensity { site, t });
    }
    let rates = lattice.neighbours[site]
        .iter()
        .map(|&(j, k)| (j, lattice.flux(pi, psi(j), k).max(0.0) / mass))
        .collect();
    Ok(RateTable { site, t, rates })
}

/// `ψ` entries linearly interpolated in time, evaluated lazily per site.
struct Interpolated<'a> {
    record: &'a EvolutionRecord,
    k: usize,
    s: f64,
}

impl<'a> Interpolated<'a> {
    fn at(record: &'a EvolutionRecord, t: f64) -> Result<Self> {
        let (k, s) = record.locate(t)?;
        Ok(Interpolated { record, k, s })
    }

    fn psi(&self, i: usize) -> Complex64 {
        let a = self.record.states[self.k].psi[i];
        if self.s == 0.0 || self.k + 1 >= self.record.states.len() {
            a
        } else {
            a * (1.0 - self.s) + self.record.states[self.k + 1].psi[i] * self.s
        }
    }
}

fn rates_at(lattice: &Lattice, record: &EvolutionRecord, site: usize, t: f64) -> Result<RateTable> {
    let ip = Interpolated::at(record, t)?;
    rates_with(lattice, site, t, |i| ip.psi(i))
}

#[derive(Debug, Clone, PartialEq)]
pub struct LatticePath {
    pub path_id: u64,
    pub start: (usize, f64),
    /// `(t, new site)` per jump.
    pub jumps: Vec<(f64, usize)>,
    pub end_time: f64,
    /// Set when the path stopped early.
    pub error: Option<String>,
}

impl LatticePath {
    pub fn site_at(&self, t: f64) -> usize {
        let i = self.jumps.partition_point(|j| j.0 <= t);
        if i == 0 {
            self.start.0
        } else {
            self.jumps[i - 1].1
        }
    }
}

/// When to stop a path early.
pub trait StopRule {
    fn stop(&self, site: usize) -> bool;
}

impl StopRule for () {
    fn stop(&self, _: usize) -> bool {
        false
    }
}

impl<F: Fn(usize) -> bool> StopRule for F {
    fn stop(&self, site: usize) -> bool {
        self(site)
    }
}

/// Simulates the time-inhomogeneous jump process by thinning. Each window
/// between stored snapshots uses the bound `2·max` of the total rate at
/// the window's ends and midpoint; when a candidate's rate exceeds the
/// bound, the bound is raised and thinning continues from that time.
pub fn sample_bell_path(
    lattice: &Lattice,
    record: &EvolutionRecord,
    start: usize,
    t0: f64,
    t_final: f64,
    path_id: u64,
    rng: &mut impl Rng,
    stop: &impl StopRule,
) -> LatticePath {
    let mut path = LatticePath {
        path_id,
        start: (start, t0),
        jumps: Vec::new(),
        end_time: t0,
        error: None,
    };
    let t_final = t_final.min(record.t_end());
    let mut site = start;
    let mut t = t0;
    let result = (|| -> Result<()> {
        while t < t_final {
            if stop.stop(site) {
                return Ok(());
            }
            let (k, _) = record.locate(t)?;
            let w_end = if record.states.len() > 1 {
                (record.states[0].t + (k + 1) as f64 * record.spacing).min(t_final)
            } else {
                t_final
            };
            let w_end = if w_end <= t { t_final.min(t + record.spacing) } else { w_end };
            let mid = 0.5 * (t + w_end);
            let mut bound = 0.0f64;
            for s in [t, mid, w_end] {
                bound = bound.max(rates_at(lattice, record, site, s)?.total());
            }
            bound *= 2.0;
            if bound <= 0.0 {
                t = w_end;
                continue;
            }
            loop {
                let wait = Exp::new(bound).expect("positive bound").sample(rng);
                if t + wait >= w_end {
                    t = w_end;
                    break;
                }
                t += wait;
                let table = rates_at(lattice, record, site, t)?;
                let total = table.total();
                if total > bound {
                    bound = 2.0 * total;
                }
                let u: f64 = rng.random();
                if u * bound < total {
                    let mut r = rng.random::<f64>() * total;
                    let mut next = table.rates.last().map_or(site, |x| x.0);
                    for &(j, rate) in &table.rates {
                        if r < rate {
                            next = j;
                            break;
                        }
                        r -= rate;
                    }
                    site = next;
                    path.jumps.push((t, site));
                    break;
                }
            }
        }
        Ok(())
    })();
    path.end_time = t.min(t_final);
    if let Err(e) = result {
        path.error = Some(e.to_string());
    }
    path
}

/// `N` paths from `w|ψ_{t₀}|²`; path `i` uses stream `i` of the seed.
pub fn sample_bell_ensemble(
    lattice: &Lattice,
    record: &EvolutionRecord,
    paths: usize,
    seed: u64,
    t_final: f64,
) -> Vec<LatticePath> {
    let psi0 = &record.states[0];
    let mut cdf = Vec::with_capacity(psi0.psi.len());
    let mut acc = 0.0;
    for (p, w) in psi0.psi.iter().zip(&lattice.weights) {
        acc += p.norm_sqr() * w;
        cdf.push(acc);
    }
    (0..paths as u64)
        .into_par_iter()
        .map(|id| {
            let mut rng = path_rng(seed, id);
            let u = rng.random::<f64>() * acc;
            let start = cdf.partition_point(|&c| c <= u).min(cdf.len() - 1);
            sample_bell_path(lattice, record, start, psi0.t, t_final, id, &mut rng, &())
        })
        .collect()
}

/// Outcome of a set of paths started at a vertex.
#[derive(Debug, Clone, PartialEq)]
pub struct ExitDistribution {
    pub vertex: VertexId,
    pub t: f64,
    pub epsilon: f64,
    pub edges: Vec<EdgeId>,
    /// Fraction of started paths whose first arrival at distance `2ε`
    /// happened on each edge.
    pub empirical: Vec<f64>,
    /// `J⁺ / Σ J⁺` from the exact lattice currents at `t`.
    pub lattice_exact: Vec<f64>,
    /// Paths that never reached distance `2ε` before the record ended.
    pub unresolved: usize,
    pub mean_wait: f64,
    pub paths: usize,
}

/// Lattice exit ratio `J_e⁺ / Σ J⁺` at `q`.
pub fn lattice_exit_ratio(graph: &MetricGraph, grid: &Grid, state: &WaveState, q: VertexId, hbar: f64) -> Result<FluxReport> {
    let r = lattice_vertex_currents(graph, grid, state, q, hbar);
    if !(r.outflux() > 0.0) {
        return Err(Error::StalledVertex { vertex: q.0, t: state.t });
    }
    Ok(r)
}

#[allow(clippy::too_many_arguments)]
pub fn vertex_exit_distribution(
    graph: &MetricGraph,
    grid: &Grid,
    lattice: &Lattice,
    record: &EvolutionRecord,
    q: VertexId,
    t: f64,
    paths: usize,
    seed: u64,
) -> Result<ExitDistribution> {
    let state = record.state_at(t)?;
    let report = lattice_exit_ratio(graph, grid, &state, q, lattice.hbar)?;
    let out = report.outflux();
    let lattice_exact: Vec<f64> = report.edges.iter().map(|f| f.s_plus / out).collect();
    let incident = graph.incident(q);
    let targets: Vec<usize> = incident.iter().map(|&(e, end)| grid.edge(e).from_end(end, 2)).collect();
    let centre = grid.vertex_point(q);
    let results: Vec<(Option<usize>, f64)> = (0..paths as u64)
        .into_par_iter()
        .map(|id| {
            let mut rng = path_rng(seed, id);
            let stop = |s: usize| targets.contains(&s);
            let p = sample_bell_path(lattice, record, centre, t, record.t_end(), id, &mut rng, &stop);
            let wait = p.jumps.first().map_or(p.end_time - t, |j| j.0 - t);
            let hit = p.jumps.last().and_then(|&(_, s)| targets.iter().position(|&x| x == s));
            (hit, wait)
        })
        .collect();
    let mut counts = vec![0usize; incident.len()];
    let mut unresolved = 0;
    let mut wait = 0.0;
    for (hit, w) in &results {
        wait += w;
        match hit {
            Some(i) => counts[*i] += 1,
            None => unresolved += 1,
        }
    }
    Ok(ExitDistribution {
        vertex: q,
        t,
        epsilon: grid.min_spacing(),
        edges: incident.iter().map(|&(e, _)| e).collect(),
        empirical: counts.iter().map(|&c| c as f64 / paths as f64).collect(),
        lattice_exact,
        unresolved,
        mean_wait: wait / paths as f64,
        paths,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{chain, star, VertexCondition};
    use crate::propagator::{evolve, gaussian_packet, superpose, CrankNicolson, Packet};

    fn setup(g: &MetricGraph, h: f64) -> (Grid, HamiltonianMatrix, Lattice) {
        let grid = Grid::build(g, h).unwrap();
        let ham = HamiltonianMatrix::assemble(g, &grid, 1.0).unwrap();
        let lat = Lattice::new(&grid, &ham);
        (grid, ham, lat)
    }

    #[test]
    fn real_state_has_zero_rates() {
        let g = star(&[1.0; 3], VertexCondition::default(), VertexCondition::Dirichlet).unwrap();
        let (grid, _, lat) = setup(&g, 0.05);
        let s = gaussian_packet(&g, &grid, EdgeId(1), 0.5, 0.1, 0.0).unwrap();
        for i in 0..grid.len() {
            if let Ok(r) = jump_rates(&lat, &s, i) {
                assert!(r.rates.iter().all(|x| x.1 == 0.0));
            }
        }
    }

    #[test]
    fn matrix_element_magnitude() {
        let g = chain(&[1.0], VertexCondition::default(), VertexCondition::default()).unwrap();
        let hbar = 0.7;
        let grid = Grid::build(&g, 0.1).unwrap();
        let ham = HamiltonianMatrix::assemble(&g, &grid, hbar).unwrap();
        let lat = Lattice::new(&grid, &ham);
        let i = grid.edge(EdgeId(0)).points[4];
        for &(_, k) in lat.neighbours(i) {
            // K = w H with w = ε
            let hij = k / grid.weights()[i];
            assert!((hij.abs() - hbar * hbar / (2.0 * 0.01)).abs() < 1e-9);
            assert!(hij < 0.0);
        }
    }

    #[test]
    fn plane_wave_rates() {
        // forward rate ħ sin(kε)/ε², backward 0
        let g = chain(&[1.0], VertexCondition::default(), VertexCondition::default()).unwrap();
        let (k, eps) = (5.0, 0.01);
        let (grid, _, lat) = setup(&g, eps);
        let s = WaveState::from_fn(&g, &grid, 0.0, |_, x| Complex64::new(0.0, k * x).exp());
        let eg = grid.edge(EdgeId(0));
        let i = eg.points[50];
        let r = jump_rates(&lat, &s, i).unwrap();
        for &(j, rate) in &r.rates {
            if j == eg.points[51] {
                assert!((rate * eps - (k * eps).sin() / eps).abs() < 1e-9);
                assert!((rate * eps - k).abs() < 1e-3 * k);
            } else {
                assert_eq!(rate, 0.0);
            }
        }
    }

    #[test]
    fn rates_invariant_under_phase_and_scale() {
        let g = star(&[1.0, 0.7, 1.3], VertexCondition::default(), VertexCondition::Dirichlet).unwrap();
        let (grid, _, lat) = setup(&g, 0.02);
        let s = gaussian_packet(&g, &grid, EdgeId(0), 0.3, 0.05, -9.0).unwrap();
        let t = s.scaled(Complex64::from_polar(2.5, 0.4));
        for i in [0, 5, 17, 30] {
            let a = jump_rates(&lat, &s, i).unwrap();
            let b = jump_rates(&lat, &t, i).unwrap();
            for (x, y) in a.rates.iter().zip(&b.rates) {
                assert_eq!(x.0, y.0);
                assert!((x.1 - y.1).abs() <= 1e-12 * x.1.abs().max(1.0));
            }
        }
    }

    #[test]
    fn zero_density_site_is_an_error() {
        let g = chain(&[1.0], VertexCondition::default(), VertexCondition::default()).unwrap();
        let (grid, _, lat) = setup(&g, 0.1);
        let s = WaveState::zeros(&grid, 0.0);
        assert!(matches!(jump_rates(&lat, &s, 3), Err(Error::ZeroDensity { .. })));
    }

    fn star_record(h: f64, dt: f64, steps: usize) -> (MetricGraph, Grid, Lattice, EvolutionRecord) {
        let g = star(&[1.0, 0.7, 1.3], VertexCondition::default(), VertexCondition::Dirichlet).unwrap();
        let (grid, ham, lat) = setup(&g, h);
        let s = superpose(
            &g,
            &grid,
            &[Packet {
                edge: EdgeId(0),
                center: 0.5,
                width: 0.06,
                k: -10.0,
                amplitude: Complex64::new(1.0, 0.0),
            }],
        )
        .unwrap();
        let cn = CrankNicolson::new(&grid, &ham, dt).unwrap();
        let rec = evolve(&cn, &s, steps, 1, &[]).unwrap();
        (g, grid, lat, rec)
    }

    #[test]
    fn real_state_never_jumps() {
        let g = chain(&[1.0], VertexCondition::Dirichlet, VertexCondition::default()).unwrap();
        let (grid, ham, lat) = setup(&g, 0.02);
        let (_, s) = crate::propagator::eigenstate(&ham, &grid, 0).unwrap();
        let cn = CrankNicolson::new(&grid, &ham, 1e-3).unwrap();
        let rec = evolve(&cn, &s, 0, 1, &[]).unwrap();
        let mut rng = path_rng(0, 0);
        let p = sample_bell_path(&lat, &rec, grid.edge(EdgeId(0)).points[20], 0.0, 0.0, 0, &mut rng, &());
        assert!(p.jumps.is_empty());
        assert!(p.error.is_none());
    }

    #[test]
    fn paths_only_jump_to_neighbours_and_are_reproducible() {
        let (_, _, lat, rec) = star_record(0.02, 2e-4, 300);
        let mut a = path_rng(4, 2);
        let mut b = path_rng(4, 2);
        let start = 10;
        let p = sample_bell_path(&lat, &rec, start, 0.0, 0.06, 2, &mut a, &());
        let q = sample_bell_path(&lat, &rec, start, 0.0, 0.06, 2, &mut b, &());
        assert_eq!(p, q);
        assert!(!p.jumps.is_empty());
        let mut site = start;
        for &(_, next) in &p.jumps {
            assert!(lat.neighbours(site).iter().any(|n| n.0 == next));
            site = next;
        }
    }

    #[test]
    fn degree_two_exit_is_forced() {
        let g = chain(&[0.5, 0.5], VertexCondition::Dirichlet, VertexCondition::default()).unwrap();
        for eps in [0.01, 0.005] {
            let (grid, ham, lat) = setup(&g, eps);
            let s = gaussian_packet(&g, &grid, EdgeId(0), 0.2, 0.03, 15.0).unwrap();
            let cn = CrankNicolson::new(&grid, &ham, 1e-4).unwrap();
            let rec = evolve(&cn, &s, 300, 1, &[]).unwrap();
            let d = vertex_exit_distribution(&g, &grid, &lat, &rec, VertexId(1), 0.02, 200, 1).unwrap();
            assert_eq!(d.lattice_exact[1], 1.0);
            assert_eq!(d.lattice_exact[0], 0.0);
        }
    }

    #[test]
    fn symmetric_star_lattice_ratio_is_even() {
        let g = star(&[1.0; 3], VertexCondition::default(), VertexCondition::Dirichlet).unwrap();
        for eps in [0.01, 0.005] {
            let (grid, _, _) = setup(&g, eps);
            let s = WaveState::from_fn(&g, &grid, 0.0, |e, x| {
                let k = if e.0 == 0 { -6.0 } else { 3.0 };
                Complex64::from_polar((-x * x / 0.1).exp(), k * x)
            });
            let r = lattice_exit_ratio(&g, &grid, &s, VertexId(0), 1.0).unwrap();
            assert_eq!(r.edges[1].s_plus, r.edges[2].s_plus);
            assert_eq!(r.edges[0].s_plus, 0.0);
        }
    }

    #[test]
    fn lattice_ensemble_is_equivariant() {
        let (_, grid, lat, rec) = star_record(0.02, 2e-4, 400);
        let n = 10_000;
        let paths = sample_bell_ensemble(&lat, &rec, n, 11, 0.08);
        assert!(paths.iter().all(|p| p.error.is_none()));
        let psi = &rec.states[400];
        let mut counts = vec![0usize; grid.len()];
        for p in &paths {
            counts[p.site_at(0.08)] += 1;
        }
        // per-edge masses, vertices split evenly as in the trapezoid rule
        let mut emp = [0.0; 3];
        let mut exact = [0.0; 3];
        for (e, eg) in grid.edges().iter().enumerate() {
            for (k, &i) in eg.points.iter().enumerate() {
                let share = if k == 0 || k == eg.intervals { eg.spacing / 2.0 / grid.weights()[i] } else { 1.0 };
                emp[e] += share * counts[i] as f64 / n as f64;
                exact[e] += share * grid.weights()[i] * psi.psi[i].norm_sqr();
            }
        }
        for e in 0..3 {
            let sigma = (exact[e] * (1.0 - exact[e]) / n as f64).sqrt();
            assert!((emp[e] - exact[e]).abs() < 3.0 * sigma + 2e-3, "{e}: {emp:?} {exact:?}");
        }
    }
}
