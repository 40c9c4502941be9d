//! Small dense square matrices over a [`Coeff`] field.
//!
//! Dimensions here are tiny (the ambient dimension d), so everything is
//! direct: Gauss-Jordan inversion with pivoting, block-pattern predicates
//! against a [`BlockStructure`], and a one-sided Jacobi routine for f64
//! singular values used by band checks.

use crate::error::{Error, Result};
use crate::jet::BlockStructure;
use crate::scalar::Coeff;

#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<S> {
    dim: usize,
    data: Vec<S>,
}

impl<S: Coeff> Matrix<S> {
    pub fn zero(dim: usize) -> Self {
        Matrix {
            dim,
            data: vec![S::zero(); dim * dim],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zero(dim);
        for i in 0..dim {
            m.set(i, i, S::one());
        }
        m
    }

    pub fn diagonal(entries: &[S]) -> Self {
        let mut m = Self::zero(entries.len());
        for (i, e) in entries.iter().enumerate() {
            m.set(i, i, e.clone());
        }
        m
    }

    pub fn from_rows(rows: Vec<Vec<S>>) -> Result<Self> {
        let dim = rows.len();
        for r in &rows {
            if r.len() != dim {
                return Err(Error::ShapeMismatch(format!(
                    "matrix row of length {} in a {dim}x{dim} matrix",
                    r.len()
                )));
            }
        }
        Ok(Matrix {
            dim,
            data: rows.into_iter().flatten().collect(),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, r: usize, c: usize) -> &S {
        &self.data[r * self.dim + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: S) {
        self.data[r * self.dim + c] = v;
    }

    pub fn row(&self, r: usize) -> &[S] {
        &self.data[r * self.dim..(r + 1) * self.dim]
    }

    pub fn scale(&self, factor: &S) -> Self {
        Matrix {
            dim: self.dim,
            data: self
                .data
                .iter()
                .map(|v| v.clone() * factor.clone())
                .collect(),
        }
    }

    pub fn mul(&self, other: &Self) -> Self {
        debug_assert_eq!(self.dim, other.dim);
        let mut out = Self::zero(self.dim);
        for i in 0..self.dim {
            for k in 0..self.dim {
                let a = self.get(i, k);
                if a.is_zero() {
                    continue;
                }
                for j in 0..self.dim {
                    let b = other.get(k, j);
                    if b.is_zero() {
                        continue;
                    }
                    let cur = out.get(i, j).clone();
                    out.set(i, j, cur + a.clone() * b.clone());
                }
            }
        }
        out
    }

    pub fn mul_vec(&self, v: &[S]) -> Vec<S> {
        debug_assert_eq!(self.dim, v.len());
        (0..self.dim)
            .map(|i| {
                let mut acc = S::zero();
                for j in 0..self.dim {
                    let a = self.get(i, j);
                    if !a.is_zero() && !v[j].is_zero() {
                        acc = acc + a.clone() * v[j].clone();
                    }
                }
                acc
            })
            .collect()
    }

    pub fn is_identity(&self) -> bool {
        for i in 0..self.dim {
            for j in 0..self.dim {
                let want = if i == j { S::one() } else { S::zero() };
                if *self.get(i, j) != want {
                    return false;
                }
            }
        }
        true
    }

    pub fn is_zero_matrix(&self) -> bool {
        self.data.iter().all(|v| v.is_zero())
    }

    /// Gauss-Jordan inverse; `None` when singular. Pivots are chosen by
    /// largest f64 magnitude, which is exact-safe for rationals as well.
    pub fn inverse(&self) -> Option<Self> {
        let n = self.dim;
        let mut a = self.clone();
        let mut inv = Self::identity(n);
        for col in 0..n {
            let pivot_row = (col..n)
                .filter(|&r| !a.get(r, col).is_zero())
                .max_by(|&r1, &r2| {
                    let m1 = a.get(r1, col).to_f64().abs();
                    let m2 = a.get(r2, col).to_f64().abs();
                    m1.partial_cmp(&m2).unwrap_or(std::cmp::Ordering::Equal)
                })?;
            if pivot_row != col {
                for j in 0..n {
                    a.data.swap(col * n + j, pivot_row * n + j);
                    inv.data.swap(col * n + j, pivot_row * n + j);
                }
            }
            let pivot = a.get(col, col).clone();
            for j in 0..n {
                let v = a.get(col, j).clone() / pivot.clone();
                a.set(col, j, v);
                let v = inv.get(col, j).clone() / pivot.clone();
                inv.set(col, j, v);
            }
            for r in 0..n {
                if r == col || a.get(r, col).is_zero() {
                    continue;
                }
                let factor = a.get(r, col).clone();
                for j in 0..n {
                    let v = a.get(r, j).clone() - factor.clone() * a.get(col, j).clone();
                    a.set(r, j, v);
                    let v = inv.get(r, j).clone() - factor.clone() * inv.get(col, j).clone();
                    inv.set(r, j, v);
                }
            }
        }
        Some(inv)
    }

    /// Inverse with the zero pattern of the input re-imposed where block
    /// structure guarantees it, so float-mode elimination dust cannot leak
    /// across blocks or below the flag.
    pub fn structured_inverse(&self, blocks: &BlockStructure) -> Option<Self> {
        let mut inv = self.inverse()?;
        let d = self.dim;
        if self.is_block_diagonal(blocks) {
            for r in 0..d {
                for c in 0..d {
                    if blocks.var_block(r) != blocks.var_block(c) {
                        inv.set(r, c, S::zero());
                    }
                }
            }
        } else if self.is_flag_upper(blocks) {
            for r in 0..d {
                for c in 0..d {
                    if blocks.var_block(r) > blocks.var_block(c) {
                        inv.set(r, c, S::zero());
                    }
                }
            }
        } else if self.preserves_stable(blocks) {
            for r in blocks.stable_dim()..d {
                for c in 0..blocks.stable_dim() {
                    inv.set(r, c, S::zero());
                }
            }
        }
        Some(inv)
    }

    /// Zero outside the diagonal blocks.
    pub fn is_block_diagonal(&self, blocks: &BlockStructure) -> bool {
        for r in 0..self.dim {
            for c in 0..self.dim {
                if blocks.var_block(r) != blocks.var_block(c) && !self.get(r, c).is_zero() {
                    return false;
                }
            }
        }
        true
    }

    /// Preserves the flag E_1 ⊂ E_1⊕E_2 ⊂ …: zero whenever the row block
    /// exceeds the column block.
    pub fn is_flag_upper(&self, blocks: &BlockStructure) -> bool {
        for r in 0..self.dim {
            for c in 0..self.dim {
                if blocks.var_block(r) > blocks.var_block(c) && !self.get(r, c).is_zero() {
                    return false;
                }
            }
        }
        true
    }

    /// Maps E_s into E_s: transversal rows carry no stable columns.
    pub fn preserves_stable(&self, blocks: &BlockStructure) -> bool {
        let ds = blocks.stable_dim();
        for r in ds..self.dim {
            for c in 0..ds {
                if !self.get(r, c).is_zero() {
                    return false;
                }
            }
        }
        true
    }

    /// The sub-block for block index `k` as an f64 matrix.
    pub fn block_f64(&self, blocks: &BlockStructure, k: usize) -> Vec<Vec<f64>> {
        let range = blocks.block_range(k);
        range
            .clone()
            .map(|r| range.clone().map(|c| self.get(r, c).to_f64()).collect())
            .collect()
    }

    pub fn to_f64(&self) -> Vec<Vec<f64>> {
        (0..self.dim)
            .map(|r| (0..self.dim).map(|c| self.get(r, c).to_f64()).collect())
            .collect()
    }
}

/// Singular values of a small square f64 matrix by one-sided Jacobi:
/// rotate column pairs until mutually orthogonal, then read column norms.
/// Returned in descending order.
pub fn singular_values(a: &[Vec<f64>]) -> Vec<f64> {
    let n = a.len();
    if n == 0 {
        return Vec::new();
    }
    let mut cols: Vec<Vec<f64>> = (0..n).map(|j| (0..n).map(|i| a[i][j]).collect()).collect();
    for _sweep in 0..60 {
        let mut rotated = false;
        for p in 0..n {
            for q in (p + 1)..n {
                let alpha: f64 = cols[p].iter().map(|x| x * x).sum();
                let beta: f64 = cols[q].iter().map(|x| x * x).sum();
                let gamma: f64 = cols[p].iter().zip(&cols[q]).map(|(x, y)| x * y).sum();
                if gamma.abs() <= 1e-15 * (alpha * beta).sqrt().max(f64::MIN_POSITIVE) {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for i in 0..n {
                    let vp = cols[p][i];
                    let vq = cols[q][i];
                    cols[p][i] = c * vp - s * vq;
                    cols[q][i] = s * vp + c * vq;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let mut sigma: Vec<f64> = cols
        .iter()
        .map(|col| col.iter().map(|x| x * x).sum::<f64>().sqrt())
        .collect();
    sigma.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
    sigma
}
