//! Discrete Hamiltonian `-ħ²/2 Δ + V` on the graph grid.
//!
//! Assembly goes through the quadratic form
//! `(ħ²/2) [Σ_cells |Δψ|²/h_e + Σ_q (β/α) |ψ_q|²] + Σ_i w_i V_i |ψ_i|²`,
//! so the stiffness matrix `K = W H` is real symmetric and `H` is exactly
//! self-adjoint for the weighted inner product `⟨φ, ψ⟩ = Σ w_i φ̄_i ψ_i`.
//! Robin conditions enter weakly through the vertex rows; Dirichlet vertices
//! are removed from the set of unknowns.

use std::io::Write;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::graph::{MetricGraph, VertexId};
use crate::grid::{Grid, Site};

#[derive(Debug, Clone, PartialEq)]
pub struct HamiltonianMatrix {
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<Complex64>,
    weights: Vec<f64>,
    active_to_global: Vec<usize>,
    global_to_active: Vec<Option<usize>>,
    hbar: f64,
}

impl HamiltonianMatrix {
    /// Assemble over the grid. Every vertex carries its condition from `graph`.
    pub fn assemble(graph: &MetricGraph, grid: &Grid, hbar: f64) -> Result<Self> {
        if !(hbar.is_finite() && hbar > 0.0) {
            return Err(Error::InvalidParameter {
                name: "hbar",
                reason: format!("must be positive, got {hbar}"),
            });
        }
        let n = grid.len();
        let mut global_to_active = vec![None; n];
        let mut active_to_global = Vec::with_capacity(n);
        for (i, slot) in global_to_active.iter_mut().enumerate() {
            let pinned = matches!(grid.site(i), Site::Vertex(q) if graph.vertex(q).condition.is_dirichlet());
            if !pinned {
                *slot = Some(active_to_global.len());
                active_to_global.push(i);
            }
        }

        let half_h2 = 0.5 * hbar * hbar;
        let mut row_ptr = Vec::with_capacity(active_to_global.len() + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        let mut weights = Vec::with_capacity(active_to_global.len());
        row_ptr.push(0);

        for &g in &active_to_global {
            let w = grid.weights()[g];
            let mut row: Vec<(usize, f64)> = Vec::new();
            // stiffness row: K_ii and K_ij, then divide by w
            let mut diag = 0.0;
            for (nb, _, spacing) in grid.neighbours(graph, g) {
                let c = half_h2 / spacing;
                diag += c;
                if let Some(a) = global_to_active[nb] {
                    row.push((a, -c));
                }
            }
            let potential = match grid.site(g) {
                Site::Interior { edge, k } => {
                    graph.edge(edge).potential.at(grid.edge(edge).coordinate(k))
                }
                Site::Vertex(q) => {
                    if let Some(ratio) = graph.vertex(q).condition.robin_ratio() {
                        diag += half_h2 * ratio;
                    }
                    vertex_potential(graph, q)
                }
            };
            diag += w * potential;
            row.push((global_to_active[g].expect("active"), diag));
            row.sort_by_key(|&(c, _)| c);
            // parallel edges between two vertices with a single interval each
            // cannot occur (intervals >= 2), so columns are unique
            for (c, k) in row {
                cols.push(c);
                vals.push(Complex64::new(k / w, 0.0));
            }
            weights.push(w);
            row_ptr.push(cols.len());
        }

        Ok(HamiltonianMatrix {
            row_ptr,
            cols,
            vals,
            weights,
            active_to_global,
            global_to_active,
            hbar,
        })
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    pub fn hbar(&self) -> f64 {
        self.hbar
    }

    /// Weights of the active unknowns.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn active_to_global(&self) -> &[usize] {
        &self.active_to_global
    }

    pub fn global_to_active(&self) -> &[Option<usize>] {
        &self.global_to_active
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, Complex64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[r.clone()].iter().copied().zip(self.vals[r].iter().copied())
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.cols[r.clone()].binary_search(&j) {
            Ok(p) => self.vals[r.start + p],
            Err(_) => Complex64::new(0.0, 0.0),
        }
    }

    /// Mutable access to a stored entry.
    pub fn entry_mut(&mut self, i: usize, j: usize) -> Option<&mut Complex64> {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.cols[r.clone()].binary_search(&j) {
            Ok(p) => Some(&mut self.vals[r.start + p]),
            Err(_) => None,
        }
    }

    /// `w_i H_ij`, the stiffness entry.
    pub fn stiffness(&self, i: usize, j: usize) -> Complex64 {
        self.get(i, j) * self.weights[i]
    }

    /// `Hψ` on active unknowns.
    pub fn apply(&self, psi: &[Complex64]) -> Vec<Complex64> {
        (0..self.dim())
            .map(|i| self.row(i).map(|(j, v)| v * psi[j]).sum())
            .collect()
    }

    /// `max_ij |w_i H_ij - conj(w_j H_ji)|`.
    pub fn check_hermitian(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.dim() {
            for (j, v) in self.row(i) {
                let lhs = v * self.weights[i];
                let rhs = (self.get(j, i) * self.weights[j]).conj();
                worst = worst.max((lhs - rhs).norm());
            }
        }
        worst
    }

    /// Restrict a global state vector to the active unknowns.
    pub fn restrict(&self, psi: &[Complex64]) -> Vec<Complex64> {
        self.active_to_global.iter().map(|&g| psi[g]).collect()
    }

    /// Extend an active vector to the full grid, zero at Dirichlet vertices.
    pub fn extend(&self, active: &[Complex64], n_global: usize) -> Vec<Complex64> {
        let mut out = vec![Complex64::new(0.0, 0.0); n_global];
        for (a, &g) in self.active_to_global.iter().enumerate() {
            out[g] = active[a];
        }
        out
    }

    /// Text triplets `row col re im` in global grid indices.
    pub fn write_triplets<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "row,col,re,im")?;
        for i in 0..self.dim() {
            for (j, v) in self.row(i) {
                writeln!(
                    out,
                    "{},{},{:.17e},{:.17e}",
                    self.active_to_global[i], self.active_to_global[j], v.re, v.im
                )?;
            }
        }
        Ok(())
    }

    /// Dense copy, for small eigenproblems and tests.
    pub fn to_dense(&self) -> Vec<Vec<Complex64>> {
        let n = self.dim();
        let mut m = vec![vec![Complex64::new(0.0, 0.0); n]; n];
        for (i, row) in m.iter_mut().enumerate() {
            for (j, v) in self.row(i) {
                row[j] = v;
            }
        }
        m
    }

    /// An all-zero matrix with the same active layout.
    pub fn zeroed(&self) -> Self {
        let mut z = self.clone();
        z.vals.iter_mut().for_each(|v| *v = Complex64::new(0.0, 0.0));
        z
    }
}

/// Vertex potential: mean of the incident edges' end values.
fn vertex_potential(graph: &MetricGraph, q: VertexId) -> f64 {
    let inc = graph.incident(q);
    inc.iter()
        .map(|&(e, end)| {
            let edge = graph.edge(e);
            edge.potential.at(edge.coordinate_of(end))
        })
        .sum::<f64>()
        / inc.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{chain, star, Potential, VertexCondition};
    use nalgebra::DMatrix;

    fn dense_eigenvalues(h: &HamiltonianMatrix) -> Vec<f64> {
        // symmetrized S = W^{1/2} H W^{-1/2}
        let n = h.dim();
        let w = h.weights();
        let m = DMatrix::from_fn(n, n, |i, j| h.get(i, j).re * w[i].sqrt() / w[j].sqrt());
        let mut ev: Vec<f64> = m.symmetric_eigen().eigenvalues.iter().copied().collect();
        ev.sort_by(|a, b| a.partial_cmp(b).unwrap());
        ev
    }

    #[test]
    fn dirichlet_interval_spectrum() {
        let g = chain(&[std::f64::consts::PI], VertexCondition::Dirichlet, VertexCondition::default())
            .unwrap();
        let grid = Grid::build(&g, std::f64::consts::PI / 200.0).unwrap();
        let h = HamiltonianMatrix::assemble(&g, &grid, 1.0).unwrap();
        assert_eq!(h.dim(), 199);
        let ev = dense_eigenvalues(&h);
        for n in 1..=3 {
            let exact = (n * n) as f64 / 2.0;
            assert!(((ev[n - 1] - exact) / exact).abs() < 1e-3, "{} vs {exact}", ev[n - 1]);
        }
    }

    #[test]
    fn assembled_matrix_is_weighted_symmetric() {
        let mut g = star(&[1.0, 0.7, 1.3], VertexCondition::robin(2.0, 0.5).unwrap(), VertexCondition::Dirichlet)
            .unwrap();
        g = g.with_condition(VertexId(2), VertexCondition::robin(1.0, -1.0).unwrap());
        let grid = Grid::build(&g, 0.05).unwrap();
        let h = HamiltonianMatrix::assemble(&g, &grid, 0.7).unwrap();
        assert!(h.check_hermitian() <= 1e-13);
    }

    #[test]
    fn potential_enters_diagonal() {
        let mut g = chain(&[1.0], VertexCondition::Dirichlet, VertexCondition::default()).unwrap();
        let base = HamiltonianMatrix::assemble(&g, &Grid::build(&g, 0.1).unwrap(), 1.0).unwrap();
        let mut edges = g.edges().to_vec();
        edges[0].potential = Potential::Constant(3.0);
        g = MetricGraph::new(g.vertices().to_vec(), edges).unwrap();
        let with_v = HamiltonianMatrix::assemble(&g, &Grid::build(&g, 0.1).unwrap(), 1.0).unwrap();
        for i in 0..base.dim() {
            assert!((with_v.get(i, i) - base.get(i, i) - 3.0).norm() < 1e-12);
        }
    }

    #[test]
    fn star_center_couples_to_three_neighbours() {
        let g = star(&[1.0; 3], VertexCondition::default(), VertexCondition::default()).unwrap();
        let grid = Grid::build(&g, 0.1).unwrap();
        let h = HamiltonianMatrix::assemble(&g, &grid, 1.0).unwrap();
        let c = h.global_to_active()[grid.vertex_point(VertexId(0))].unwrap();
        let off: Vec<_> = h.row(c).filter(|&(j, _)| j != c).collect();
        assert_eq!(off.len(), 3);
    }

    #[test]
    fn perturbation_shows_in_residual() {
        let g = chain(&[1.0], VertexCondition::Dirichlet, VertexCondition::default()).unwrap();
        let grid = Grid::build(&g, 0.1).unwrap();
        let mut h = HamiltonianMatrix::assemble(&g, &grid, 1.0).unwrap();
        *h.entry_mut(3, 4).unwrap() += 1e-3;
        let r = h.check_hermitian();
        let w = h.weights()[3];
        assert!((r - w * 1e-3).abs() < 1e-12, "{r}");
        assert_eq!(h.zeroed().check_hermitian(), 0.0);
    }

    #[test]
    fn eigenvalues_are_real_on_small_graphs() {
        let g = star(&[1.0, 0.6, 0.8], VertexCondition::robin(1.0, 0.3).unwrap(), VertexCondition::default())
            .unwrap();
        let grid = Grid::build(&g, 0.1).unwrap();
        let h = HamiltonianMatrix::assemble(&g, &grid, 1.0).unwrap();
        let n = h.dim();
        let m = DMatrix::from_fn(n, n, |i, j| h.get(i, j).re);
        let ev = m.complex_eigenvalues();
        let worst = ev.iter().map(|z| z.im.abs()).fold(0.0, f64::max);
        assert!(worst <= 1e-10, "{worst}");
    }

    #[test]
    fn robin_sign_moves_ground_state() {
        let energy = |beta: f64| {
            let g = chain(&[1.0], VertexCondition::robin(1.0, beta).unwrap(), VertexCondition::default())
                .unwrap();
            let grid = Grid::build(&g, 0.02).unwrap();
            dense_eigenvalues(&HamiltonianMatrix::assemble(&g, &grid, 1.0).unwrap())[0]
        };
        let e0 = energy(0.0);
        assert!(e0.abs() < 1e-10);
        assert!(energy(1.0) > e0);
        assert!(energy(-1.0) < e0);
    }

    #[test]
    fn triplets_are_written() {
        let g = chain(&[1.0], VertexCondition::Dirichlet, VertexCondition::default()).unwrap();
        let grid = Grid::build(&g, 0.25).unwrap();
        let h = HamiltonianMatrix::assemble(&g, &grid, 1.0).unwrap();
        let mut buf = Vec::new();
        h.write_triplets(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 1 + h.nnz());
    }
}
