use std::collections::BTreeMap;

use rand::Rng;
use rayon::prelude::*;

use super::{path_rng, sample_path, IntegratorOptions, PathOptions, Start, Termination, Trajectory, TurnRule};
use crate::currents::FlowField;
use crate::error::{Error, Result};
use crate::graph::{EdgeId, VertexId};

/// Draws positions from the piecewise-linear density of one snapshot:
/// a cell by its mass, then a point by the inverse CDF of the linear
/// profile inside the cell.
#[derive(Debug, Clone)]
pub struct InitialSampler {
    t: f64,
    cells: Vec<(EdgeId, usize, f64, f64, f64)>,
    cdf: Vec<f64>,
}

impl InitialSampler {
    pub fn new(field: &FlowField, snapshot: usize) -> Result<Self> {
        let mut cells = Vec::new();
        let mut cdf = Vec::new();
        let mut acc = 0.0;
        for e in 0..field.edge_count() {
            let edge = EdgeId(e);
            let h = field.edge_spacing(edge);
            for (i, m) in field.cell_masses(snapshot, edge).into_iter().enumerate() {
                if m <= 0.0 {
                    continue;
                }
                let (a, b) = field.cell_densities(snapshot, edge, i);
                acc += m;
                cells.push((edge, i, h, a, b));
                cdf.push(acc);
            }
        }
        if cells.is_empty() {
            return Err(Error::InvalidParameter {
                name: "initial_state",
                reason: "density vanishes everywhere".into(),
            });
        }
        for c in cdf.iter_mut() {
            *c /= acc;
        }
        Ok(InitialSampler {
            t: field.snapshot_time(snapshot),
            cells,
            cdf,
        })
    }

    pub fn sample(&self, rng: &mut impl Rng) -> Start {
        let u: f64 = rng.random();
        let i = self.cdf.partition_point(|&c| c <= u).min(self.cells.len() - 1);
        let (edge, cell, h, a, b) = self.cells[i];
        let v: f64 = rng.random();
        // density a + (b - a) y on y ∈ [0, 1]
        let y = if (b - a).abs() <= 1e-12 * (a + b) {
            v
        } else {
            let disc = a * a + (b * b - a * a) * v;
            ((disc.max(0.0).sqrt() - a) / (b - a)).clamp(0.0, 1.0)
        };
        Start {
            edge,
            x: (cell as f64 + y) * h,
            t: self.t,
        }
    }
}

#[derive(Debug, Clone)]
pub struct EnsembleConfig {
    pub paths: usize,
    pub seed: u64,
    pub rule: TurnRule,
    pub output_times: Vec<f64>,
    pub bins_per_edge: usize,
    pub integrator: IntegratorOptions,
}

impl EnsembleConfig {
    pub fn new(paths: usize, seed: u64, output_times: Vec<f64>) -> Self {
        EnsembleConfig {
            paths,
            seed,
            rule: TurnRule::Minimal,
            output_times,
            bins_per_edge: 20,
            integrator: IntegratorOptions::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TurnCount {
    pub vertex: VertexId,
    pub in_edge: EdgeId,
    pub out_edge: EdgeId,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleStats {
    pub paths: usize,
    pub output_times: Vec<f64>,
    pub bins_per_edge: usize,
    /// `[time][edge]`.
    pub edge_counts: Vec<Vec<usize>>,
    /// `[time][edge][bin]`, bins of equal length along each edge.
    pub bin_counts: Vec<Vec<Vec<usize>>>,
    pub turn_counts: Vec<TurnCount>,
    pub terminations: Vec<(Termination, usize)>,
}

impl EnsembleStats {
    pub fn from_trajectories(
        trajectories: &[Trajectory],
        field: &FlowField,
        output_times: &[f64],
        bins_per_edge: usize,
    ) -> Self {
        let ne = field.edge_count();
        let mut edge_counts = vec![vec![0; ne]; output_times.len()];
        let mut bin_counts = vec![vec![vec![0; bins_per_edge]; ne]; output_times.len()];
        let mut turns: BTreeMap<(usize, usize, usize), usize> = BTreeMap::new();
        let mut terms: BTreeMap<Termination, usize> = BTreeMap::new();
        for tr in trajectories {
            for (k, &t) in output_times.iter().enumerate() {
                if let Some((e, x)) = tr.position_at(t) {
                    edge_counts[k][e.0] += 1;
                    let b = ((x / field.length(e)) * bins_per_edge as f64).floor() as usize;
                    bin_counts[k][e.0][b.min(bins_per_edge - 1)] += 1;
                }
            }
            for ev in &tr.turns {
                *turns.entry((ev.vertex.0, ev.in_edge.0, ev.out_edge.0)).or_default() += 1;
            }
            *terms.entry(tr.termination).or_default() += 1;
        }
        EnsembleStats {
            paths: trajectories.len(),
            output_times: output_times.to_vec(),
            bins_per_edge,
            edge_counts,
            bin_counts,
            turn_counts: turns
                .into_iter()
                .map(|((q, f, e), count)| TurnCount {
                    vertex: VertexId(q),
                    in_edge: EdgeId(f),
                    out_edge: EdgeId(e),
                    count,
                })
                .collect(),
            terminations: terms.into_iter().collect(),
        }
    }

    pub fn empirical_masses(&self, k: usize) -> Vec<f64> {
        self.edge_counts[k].iter().map(|&c| c as f64 / self.paths as f64).collect()
    }

    pub fn turn_count(&self, q: VertexId, f: EdgeId, e: EdgeId) -> usize {
        self.turn_counts
            .iter()
            .find(|c| c.vertex == q && c.in_edge == f && c.out_edge == e)
            .map_or(0, |c| c.count)
    }

    pub fn terminated_early(&self) -> usize {
        self.terminations
            .iter()
            .filter(|(t, _)| *t != Termination::Final)
            .map(|(_, n)| n)
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Equivariance {
    pub t: f64,
    pub empirical_mass: Vec<f64>,
    pub exact_mass: Vec<f64>,
    pub tv_edges: f64,
    pub tv_bins: f64,
}

/// Total-variation distances between the ensemble and `|ψ_t|²` at output
/// time index `k`, over edge masses and over position bins.
pub fn equivariance_distance(stats: &EnsembleStats, field: &FlowField, k: usize) -> Equivariance {
    let t = stats.output_times[k];
    let n = stats.paths as f64;
    let mut exact_mass = Vec::with_capacity(field.edge_count());
    let mut tv_bins = 0.0;
    for e in 0..field.edge_count() {
        let edge = EdgeId(e);
        let len = field.length(edge);
        let nb = stats.bins_per_edge;
        let mut total = 0.0;
        for b in 0..nb {
            let m = field.mass_at(edge, len * b as f64 / nb as f64, len * (b + 1) as f64 / nb as f64, t);
            total += m;
            tv_bins += (stats.bin_counts[k][e][b] as f64 / n - m).abs();
        }
        exact_mass.push(total);
    }
    let empirical_mass = stats.empirical_masses(k);
    let tv_edges = 0.5 * empirical_mass.iter().zip(&exact_mass).map(|(a, b)| (a - b).abs()).sum::<f64>();
    Equivariance {
        t,
        empirical_mass,
        exact_mass,
        tv_edges: tv_edges.min(1.0),
        tv_bins: (0.5 * tv_bins).min(1.0),
    }
}

#[derive(Debug, Clone)]
pub struct EnsembleRun {
    pub trajectories: Vec<Trajectory>,
    pub stats: EnsembleStats,
}

/// `N` independent paths started from `|ψ_{t₀}|²`; path `i` uses stream `i`
/// of the root seed, so the result does not depend on scheduling.
pub fn sample_ensemble(field: &FlowField, config: &EnsembleConfig) -> Result<EnsembleRun> {
    if config.paths == 0 {
        return Err(Error::InvalidParameter {
            name: "ensemble",
            reason: "at least one path is required".into(),
        });
    }
    if config.bins_per_edge == 0 {
        return Err(Error::InvalidParameter {
            name: "bins",
            reason: "at least one bin per edge is required".into(),
        });
    }
    let initial = InitialSampler::new(field, 0)?;
    let mut output_times = config.output_times.clone();
    output_times.sort_by(f64::total_cmp);
    let opts = PathOptions {
        rule: config.rule,
        t_final: output_times.last().copied().unwrap_or(field.t_end()).min(field.t_end()),
        output_times: output_times.clone(),
        integrator: config.integrator,
    };
    let trajectories: Vec<Trajectory> = (0..config.paths as u64)
        .into_par_iter()
        .map(|id| {
            let mut rng = path_rng(config.seed, id);
            let start = initial.sample(&mut rng);
            sample_path(field, start, id, &mut rng, &opts)
        })
        .collect();
    let stats = EnsembleStats::from_trajectories(&trajectories, field, &output_times, config.bins_per_edge);
    Ok(EnsembleRun { trajectories, stats })
}
