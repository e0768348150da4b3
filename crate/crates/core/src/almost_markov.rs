//! Incoming-edge dependent vertex kernels `K[f][e] = P(leave along e | arrived along f)`
//! and their Markovization.
//!
//! A kernel is feasible when its rows are probability vectors and
//! `Σ_f s_f⁻ K[f][e] = s_e⁺` for every edge. The product kernel
//! `K[f][e] = s_e⁺ / Σ s⁺` always is; further feasible kernels differ from
//! it by an element of the null space of these constraints.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::currents::{EdgeSelection, FluxReport, SIGMA_FLOOR};
use crate::error::{Error, Result};
use crate::graph::{EdgeId, VertexId};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelMode {
    Product,
    Randomized { seed: u64 },
}

/// Influx and outflux after scaling `s⁺` so both totals agree exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct BalancedFlux {
    pub vertex: VertexId,
    pub t: f64,
    pub edges: Vec<EdgeId>,
    pub s_plus: Vec<f64>,
    pub s_minus: Vec<f64>,
    /// `Σ s⁺ - Σ s⁻` before rebalancing.
    pub residual: f64,
}

impl BalancedFlux {
    pub fn new(report: &FluxReport) -> Result<Self> {
        let out = report.outflux();
        let inn = report.influx();
        if !(out > SIGMA_FLOOR) {
            return Err(Error::StalledVertex {
                vertex: report.vertex.0,
                t: report.t,
            });
        }
        if !(inn > SIGMA_FLOOR) {
            return Err(Error::InfeasibleKernel(format!(
                "vertex {} has no influx at t = {}",
                report.vertex.0, report.t
            )));
        }
        let scale = inn / out;
        Ok(BalancedFlux {
            vertex: report.vertex,
            t: report.t,
            edges: report.edges.iter().map(|f| f.edge).collect(),
            s_plus: report.edges.iter().map(|f| f.s_plus * scale).collect(),
            s_minus: report.edges.iter().map(|f| f.s_minus).collect(),
            residual: out - inn,
        })
    }

    pub fn total(&self) -> f64 {
        self.s_minus.iter().sum()
    }

    fn incoming(&self) -> Vec<usize> {
        (0..self.edges.len()).filter(|&i| self.s_minus[i] > 0.0).collect()
    }

    fn outgoing(&self) -> Vec<usize> {
        (0..self.edges.len()).filter(|&i| self.s_plus[i] > 0.0).collect()
    }

    /// `(in - 1)(out - 1)`.
    pub fn null_dimension(&self) -> usize {
        self.incoming().len().saturating_sub(1) * self.outgoing().len().saturating_sub(1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlmostMarkovKernel {
    pub vertex: VertexId,
    pub t: f64,
    pub edges: Vec<EdgeId>,
    /// `matrix[f][e]`, indexed in incidence order.
    pub matrix: Vec<Vec<f64>>,
}

impl AlmostMarkovKernel {
    pub fn row(&self, f: EdgeId) -> Option<&[f64]> {
        self.edges.iter().position(|&g| g == f).map(|i| self.matrix[i].as_slice())
    }

    /// Largest violation of row normalization and the flux constraint.
    pub fn constraint_error(&self, flux: &BalancedFlux) -> f64 {
        let n = self.edges.len();
        let mut err: f64 = 0.0;
        for row in &self.matrix {
            err = err.max((row.iter().sum::<f64>() - 1.0).abs());
            for &v in row {
                err = err.max((-v).max(v - 1.0).max(0.0));
            }
        }
        for e in 0..n {
            let lhs: f64 = (0..n).map(|f| flux.s_minus[f] * self.matrix[f][e]).sum();
            err = err.max((lhs - flux.s_plus[e]).abs());
        }
        err
    }
}

/// Orthonormal basis (Frobenius inner product) of the null space of the
/// constraints, as `|E_q| × |E_q|` matrices supported on incoming rows and
/// outgoing columns.
pub fn null_basis(flux: &BalancedFlux) -> Vec<Vec<Vec<f64>>> {
    let n = flux.edges.len();
    let ins = flux.incoming();
    let outs = flux.outgoing();
    let mut basis: Vec<Vec<Vec<f64>>> = Vec::new();
    if ins.len() < 2 || outs.len() < 2 {
        return basis;
    }
    let (f0, e0) = (ins[0], outs[0]);
    for &a in &ins[1..] {
        for &b in &outs[1..] {
            // zero row and column sums of M = s_f⁻ N; rescale rows back to N
            let mut m = vec![vec![0.0; n]; n];
            m[a][b] += 1.0;
            m[a][e0] -= 1.0;
            m[f0][b] -= 1.0;
            m[f0][e0] += 1.0;
            for (f, row) in m.iter_mut().enumerate() {
                if flux.s_minus[f] > 0.0 {
                    for v in row.iter_mut() {
                        *v /= flux.s_minus[f];
                    }
                }
            }
            for prev in &basis {
                let d = frobenius(&m, prev);
                for (r, p) in m.iter_mut().zip(prev) {
                    for (v, q) in r.iter_mut().zip(p) {
                        *v -= d * q;
                    }
                }
            }
            let norm = frobenius(&m, &m).sqrt();
            for r in m.iter_mut() {
                for v in r.iter_mut() {
                    *v /= norm;
                }
            }
            basis.push(m);
        }
    }
    basis
}

fn frobenius(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    a.iter().zip(b).flat_map(|(r, s)| r.iter().zip(s).map(|(x, y)| x * y)).sum()
}

pub fn feasible_kernel(report: &FluxReport, mode: KernelMode) -> Result<AlmostMarkovKernel> {
    let flux = BalancedFlux::new(report)?;
    kernel_from_balanced(&flux, mode)
}

pub fn kernel_from_balanced(flux: &BalancedFlux, mode: KernelMode) -> Result<AlmostMarkovKernel> {
    let n = flux.edges.len();
    let total = flux.total();
    let product: Vec<f64> = flux.s_plus.iter().map(|s| s / total).collect();
    let mut matrix = vec![product; n];

    if let KernelMode::Randomized { seed } = mode {
        let basis = null_basis(flux);
        if !basis.is_empty() {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let coeffs: Vec<f64> = basis.iter().map(|_| rng.sample(StandardNormal)).collect();
            let mut dir = vec![vec![0.0; n]; n];
            for (c, b) in coeffs.iter().zip(&basis) {
                for (r, s) in dir.iter_mut().zip(b) {
                    for (v, w) in r.iter_mut().zip(s) {
                        *v += c * w;
                    }
                }
            }
            let mut c_max = f64::INFINITY;
            for (r, d) in matrix.iter().zip(&dir) {
                for (&p, &q) in r.iter().zip(d) {
                    if q > 0.0 {
                        c_max = c_max.min((1.0 - p) / q);
                    } else if q < 0.0 {
                        c_max = c_max.min(p / -q);
                    }
                }
            }
            if c_max.is_finite() {
                let c = rng.random::<f64>() * c_max;
                for (r, d) in matrix.iter_mut().zip(&dir) {
                    for (v, q) in r.iter_mut().zip(d) {
                        *v = (*v + c * q).clamp(0.0, 1.0);
                    }
                }
            }
        }
    }

    let kernel = AlmostMarkovKernel {
        vertex: flux.vertex,
        t: flux.t,
        edges: flux.edges.clone(),
        matrix,
    };
    let err = kernel.constraint_error(flux);
    if err > 1e-10 * total.max(1.0) {
        return Err(Error::InfeasibleKernel(format!("constraint violation {err:.3e}")));
    }
    Ok(kernel)
}

/// `P̃(e) = Σ_f K[f][e] s_f⁻ / Σ_f s_f⁻`.
pub fn markovize(kernel: &AlmostMarkovKernel, report: &FluxReport) -> Result<EdgeSelection> {
    let influx = report.influx();
    if !(influx > SIGMA_FLOOR) {
        return Err(Error::InfeasibleKernel(format!(
            "vertex {} has no influx at t = {}",
            report.vertex.0, report.t
        )));
    }
    let n = kernel.edges.len();
    let probabilities = (0..n)
        .map(|e| {
            (0..n)
                .map(|f| kernel.matrix[f][e] * report.edges[f].s_minus)
                .sum::<f64>()
                / influx
        })
        .collect();
    Ok(EdgeSelection {
        vertex: report.vertex,
        t: report.t,
        edges: kernel.edges.clone(),
        probabilities,
    })
}

/// Row-normalized transition matrix of a joint count table
/// `joint[b][c]` = number of (state b at t, state c at t + Δ).
pub fn markovization_discrete(joint: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    joint
        .iter()
        .enumerate()
        .map(|(b, row)| {
            let total: f64 = row.iter().sum();
            if !(total > 0.0) {
                return Err(Error::EmptyRow(b));
            }
            Ok(row.iter().map(|v| v / total).collect())
        })
        .collect()
}
