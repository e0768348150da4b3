//! Sparse `L D Lᵀ` factorization for complex symmetric matrices.
//!
//! Used for the Crank–Nicolson system `W + iτK` with `W` positive diagonal
//! and `K` real symmetric. Its Hermitian part is `W > 0`, so every leading
//! principal minor is nonzero and elimination without pivoting is safe.

use std::collections::BTreeMap;

use num_complex::Complex64;

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct SymmetricLdl {
    /// `perm[new] = old`.
    perm: Vec<usize>,
    /// Strictly-lower column entries `(row, L_row,col)` in permuted indices.
    lower: Vec<Vec<(usize, Complex64)>>,
    diag: Vec<Complex64>,
}

impl SymmetricLdl {
    /// Factor the symmetric matrix given by `entries` (either triangle or
    /// both; duplicates of one position are an error of the caller) in the
    /// elimination order `order` (`order[new] = old`).
    pub fn factor(n: usize, entries: &[(usize, usize, Complex64)], order: &[usize]) -> Result<Self> {
        assert_eq!(order.len(), n);
        let mut inv = vec![usize::MAX; n];
        for (new, &old) in order.iter().enumerate() {
            inv[old] = new;
        }
        let mut diag = vec![Complex64::new(0.0, 0.0); n];
        let mut cols: Vec<BTreeMap<usize, Complex64>> = vec![BTreeMap::new(); n];
        for &(i, j, v) in entries {
            let (a, b) = (inv[i], inv[j]);
            if a == b {
                diag[a] = v;
            } else {
                let (r, c) = if a > b { (a, b) } else { (b, a) };
                cols[c].insert(r, v);
            }
        }

        let mut lower = Vec::with_capacity(n);
        for k in 0..n {
            let d = diag[k];
            if d.norm() == 0.0 || !d.is_finite() {
                return Err(Error::Singular(k));
            }
            let col: Vec<(usize, Complex64)> = std::mem::take(&mut cols[k])
                .into_iter()
                .map(|(r, a)| (r, a / d))
                .collect();
            for (x, &(i, li)) in col.iter().enumerate() {
                diag[i] -= li * li * d;
                for &(j, lj) in &col[x + 1..] {
                    // i < j: entry (j, i) lives in column i
                    *cols[i].entry(j).or_insert(Complex64::new(0.0, 0.0)) -= lj * li * d;
                }
            }
            lower.push(col);
        }

        Ok(SymmetricLdl {
            perm: order.to_vec(),
            lower,
            diag,
        })
    }

    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    /// Number of stored strictly-lower entries.
    pub fn fill(&self) -> usize {
        self.lower.iter().map(Vec::len).sum()
    }

    pub fn solve(&self, rhs: &[Complex64]) -> Vec<Complex64> {
        let n = self.dim();
        let mut y: Vec<Complex64> = self.perm.iter().map(|&old| rhs[old]).collect();
        for k in 0..n {
            let yk = y[k];
            for &(i, l) in &self.lower[k] {
                y[i] -= l * yk;
            }
        }
        for k in 0..n {
            y[k] /= self.diag[k];
        }
        for k in (0..n).rev() {
            let mut acc = y[k];
            for &(i, l) in &self.lower[k] {
                acc -= l * y[i];
            }
            y[k] = acc;
        }
        let mut out = vec![Complex64::new(0.0, 0.0); n];
        for (new, &old) in self.perm.iter().enumerate() {
            out[old] = y[new];
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn matvec(n: usize, entries: &[(usize, usize, Complex64)], x: &[Complex64]) -> Vec<Complex64> {
        let mut y = vec![c(0.0, 0.0); n];
        for &(i, j, v) in entries {
            y[i] += v * x[j];
        }
        y
    }

    #[test]
    fn solves_complex_symmetric_system_in_any_order() {
        // arrow-shaped pattern similar to a star graph: node 0 couples to all
        let n = 7;
        let mut entries = Vec::new();
        for i in 0..n {
            entries.push((i, i, c(2.0 + i as f64, 0.3 * i as f64)));
        }
        for i in 1..n {
            entries.push((0, i, c(-0.5, 0.1 * i as f64)));
            entries.push((i, 0, c(-0.5, 0.1 * i as f64)));
        }
        entries.push((2, 3, c(0.2, -0.7)));
        entries.push((3, 2, c(0.2, -0.7)));
        let x: Vec<Complex64> = (0..n).map(|i| c(i as f64, 1.0 - i as f64)).collect();
        let b = matvec(n, &entries, &x);
        for order in [vec![0, 1, 2, 3, 4, 5, 6], vec![6, 5, 4, 3, 2, 1, 0], vec![1, 2, 3, 4, 5, 6, 0]] {
            let f = SymmetricLdl::factor(n, &entries, &order).unwrap();
            let got = f.solve(&b);
            for (g, e) in got.iter().zip(&x) {
                assert!((g - e).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn singular_pivot_reported() {
        let entries = vec![(0, 0, c(0.0, 0.0)), (1, 1, c(1.0, 0.0))];
        assert_eq!(SymmetricLdl::factor(2, &entries, &[0, 1]).unwrap_err(), Error::Singular(0));
    }

    #[test]
    fn chain_elimination_has_no_excess_fill() {
        let n = 50;
        let mut entries = Vec::new();
        for i in 0..n {
            entries.push((i, i, c(2.0, 0.1)));
            if i + 1 < n {
                entries.push((i, i + 1, c(-1.0, 0.0)));
            }
        }
        let order: Vec<usize> = (0..n).collect();
        let f = SymmetricLdl::factor(n, &entries, &order).unwrap();
        assert_eq!(f.fill(), n - 1);
    }
}
