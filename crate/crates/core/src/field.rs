//! Per-node scalar, covector and symmetric 2-tensor fields on a grid.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{shape, Result};
use crate::math::sqrt;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ScalarField {
    values: Vec<f64>,
}

impl ScalarField {
    pub fn new(values: Vec<f64>) -> Self {
        Self { values }
    }

    pub fn constant(nodes: usize, value: f64) -> Self {
        Self::new(vec![value; nodes])
    }

    pub fn from_fn(nodes: usize, f: impl FnMut(usize) -> f64) -> Self {
        Self::new((0..nodes).map(f).collect())
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self::new(self.values.iter().map(|&v| f(v)).collect())
    }

    pub fn zip_with(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        check_nodes(self.len(), other.len())?;
        Ok(Self::new(
            self.values
                .iter()
                .zip(other.values.iter())
                .map(|(&a, &b)| f(a, b))
                .collect(),
        ))
    }

    /// α·self + β·other
    pub fn combine(&self, alpha: f64, other: &Self, beta: f64) -> Result<Self> {
        self.zip_with(other, |a, b| alpha * a + beta * b)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Covectors in the grid's declared frame, stored node-major.
#[derive(Debug, Clone, PartialEq)]
pub struct CovectorField {
    dim: usize,
    data: Vec<f64>,
}

impl CovectorField {
    pub fn zeros(nodes: usize, dim: usize) -> Self {
        Self {
            dim,
            data: vec![0.0; nodes * dim],
        }
    }

    pub fn from_data(dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 || data.len() % dim != 0 {
            return Err(shape("covector data length is not a multiple of the frame dimension"));
        }
        Ok(Self { dim, data })
    }

    /// Constant covector `value` at every node.
    pub fn uniform(nodes: usize, value: &[f64]) -> Self {
        let mut data = Vec::with_capacity(nodes * value.len());
        for _ in 0..nodes {
            data.extend_from_slice(value);
        }
        Self {
            dim: value.len(),
            data,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nodes(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn at(&self, node: usize) -> &[f64] {
        &self.data[node * self.dim..(node + 1) * self.dim]
    }

    pub fn at_mut(&mut self, node: usize) -> &mut [f64] {
        &mut self.data[node * self.dim..(node + 1) * self.dim]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Component `axis` as a scalar field.
    pub fn component(&self, axis: usize) -> ScalarField {
        ScalarField::new(self.data.iter().skip(axis).step_by(self.dim).copied().collect())
    }

    /// Pointwise frame inner product.
    pub fn dot(&self, other: &Self) -> Result<ScalarField> {
        self.check(other)?;
        Ok(ScalarField::new(
            self.data
                .chunks_exact(self.dim)
                .zip(other.data.chunks_exact(self.dim))
                .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x * y).sum())
                .collect(),
        ))
    }

    pub fn max_norm(&self) -> f64 {
        self.data
            .chunks_exact(self.dim)
            .map(|c| sqrt(c.iter().map(|x| x * x).sum()))
            .fold(0.0, f64::max)
    }

    fn check(&self, other: &Self) -> Result<()> {
        if self.dim != other.dim {
            return Err(shape("covector frames differ in dimension"));
        }
        check_nodes(self.nodes(), other.nodes())
    }
}

/// Number of packed upper-triangle entries for an n×n symmetric matrix.
pub const fn packed_len(dim: usize) -> usize {
    dim * (dim + 1) / 2
}

/// Packed index of entry (i, j) in row-major upper-triangle storage.
#[inline]
pub fn packed_index(dim: usize, i: usize, j: usize) -> usize {
    let (i, j) = if i <= j { (i, j) } else { (j, i) };
    i * dim - i * (i + 1) / 2 + j
}

/// Symmetric 2-tensors, stored as the packed upper triangle at every node so
/// symmetry holds by construction.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorField {
    dim: usize,
    data: Vec<f64>,
}

impl TensorField {
    pub fn zeros(nodes: usize, dim: usize) -> Self {
        Self {
            dim,
            data: vec![0.0; nodes * packed_len(dim)],
        }
    }

    pub fn identity(nodes: usize, dim: usize) -> Self {
        let mut field = Self::zeros(nodes, dim);
        for node in 0..nodes {
            for i in 0..dim {
                field.set(node, i, i, 1.0);
            }
        }
        field
    }

    pub fn from_packed(dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 || data.len() % packed_len(dim) != 0 {
            return Err(shape("tensor data length is not a multiple of the packed size"));
        }
        Ok(Self { dim, data })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nodes(&self) -> usize {
        self.data.len() / packed_len(self.dim)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn packed(&self, node: usize) -> &[f64] {
        let w = packed_len(self.dim);
        &self.data[node * w..(node + 1) * w]
    }

    pub fn packed_mut(&mut self, node: usize) -> &mut [f64] {
        let w = packed_len(self.dim);
        &mut self.data[node * w..(node + 1) * w]
    }

    pub fn get(&self, node: usize, i: usize, j: usize) -> f64 {
        self.packed(node)[packed_index(self.dim, i, j)]
    }

    pub fn set(&mut self, node: usize, i: usize, j: usize, value: f64) {
        let k = packed_index(self.dim, i, j);
        self.packed_mut(node)[k] = value;
    }

    /// T(a, b) at a node.
    pub fn contract(&self, node: usize, a: &[f64], b: &[f64]) -> f64 {
        let p = self.packed(node);
        let mut s = 0.0;
        for i in 0..self.dim {
            for j in 0..self.dim {
                s += p[packed_index(self.dim, i, j)] * a[i] * b[j];
            }
        }
        s
    }

    /// Hilbert–Schmidt inner product ⟨A, B⟩ at a node.
    pub fn inner_at(&self, other: &Self, node: usize) -> f64 {
        hs_inner(self.dim, self.packed(node), other.packed(node))
    }

    pub fn hs_norm_at(&self, node: usize) -> f64 {
        let p = self.packed(node);
        sqrt(hs_inner(self.dim, p, p))
    }

    pub fn trace_at(&self, node: usize) -> f64 {
        (0..self.dim).map(|i| self.get(node, i, i)).sum()
    }

    /// Pointwise ⟨A, B⟩ as a scalar field.
    pub fn inner(&self, other: &Self) -> Result<ScalarField> {
        self.check(other)?;
        Ok(ScalarField::from_fn(self.nodes(), |n| self.inner_at(other, n)))
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            dim: self.dim,
            data: self.data.iter().map(|v| v * s).collect(),
        }
    }

    /// Node-wise scaling by a scalar field.
    pub fn scaled_by(&self, factor: &ScalarField) -> Result<Self> {
        check_nodes(self.nodes(), factor.len())?;
        let w = packed_len(self.dim);
        let mut out = self.clone();
        for (chunk, f) in out.data.chunks_exact_mut(w).zip(factor.values()) {
            chunk.iter_mut().for_each(|v| *v *= f);
        }
        Ok(out)
    }

    pub fn difference(&self, other: &Self) -> Result<Self> {
        self.check(other)?;
        Ok(Self {
            dim: self.dim,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect(),
        })
    }

    /// Adds `weight · a ⊗ a` at a node.
    pub fn add_outer(&mut self, node: usize, a: &[f64], weight: f64) {
        let dim = self.dim;
        let p = self.packed_mut(node);
        let mut k = 0;
        for i in 0..dim {
            let wi = weight * a[i];
            for j in i..dim {
                p[k] += wi * a[j];
                k += 1;
            }
        }
    }

    pub fn min_eigenvalue_at(&self, node: usize) -> f64 {
        let m = DMatrix::from_fn(self.dim, self.dim, |i, j| self.get(node, i, j));
        SymmetricEigen::new(m).eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_eigenvalue_at(&self, node: usize) -> f64 {
        let m = DMatrix::from_fn(self.dim, self.dim, |i, j| self.get(node, i, j));
        SymmetricEigen::new(m).eigenvalues.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    fn check(&self, other: &Self) -> Result<()> {
        if self.dim != other.dim {
            return Err(shape("tensor frames differ in dimension"));
        }
        check_nodes(self.nodes(), other.nodes())
    }
}

pub(crate) fn hs_inner(dim: usize, a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    let mut k = 0;
    for i in 0..dim {
        for j in i..dim {
            let w = if i == j { 1.0 } else { 2.0 };
            s += w * a[k] * b[k];
            k += 1;
        }
    }
    s
}

pub(crate) fn check_nodes(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(shape(alloc::format!("fields live on {a} and {b} nodes")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn packed_indexing_is_symmetric() {
        for dim in 1..5 {
            let mut seen = vec![false; packed_len(dim)];
            for i in 0..dim {
                for j in i..dim {
                    let k = packed_index(dim, i, j);
                    assert_eq!(k, packed_index(dim, j, i));
                    assert!(!seen[k]);
                    seen[k] = true;
                }
            }
            assert!(seen.iter().all(|&s| s));
        }
    }

    #[test]
    fn identity_has_hs_norm_sqrt_n() {
        for dim in 1..5 {
            let g = TensorField::identity(3, dim);
            assert!((g.hs_norm_at(1) - (dim as f64).sqrt()).abs() < 1e-15);
            assert_eq!(g.trace_at(2), dim as f64);
        }
    }

    #[test]
    fn outer_products_contract_to_squares() {
        let mut t = TensorField::zeros(1, 3);
        let a = [1.0, -2.0, 0.5];
        t.add_outer(0, &a, 2.0);
        let eta = [0.3, 0.1, -1.0];
        let dot: f64 = a.iter().zip(&eta).map(|(x, y)| x * y).sum();
        assert!((t.contract(0, &eta, &eta) - 2.0 * dot * dot).abs() < 1e-14);
        assert!(t.min_eigenvalue_at(0) > -1e-12);
    }
}
