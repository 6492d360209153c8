//! Eigenpairs of −Δ and the spectral series built from them.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{capability, invalid, shape, Error, Result};
use crate::field::{packed_index, packed_len, CovectorField, ScalarField, TensorField};
use crate::linalg::{smallest_generalized, CsrMatrix, EigenOptions};
use crate::math::{cos, exp, ln, sin, sqrt, upper_gamma_half_integer, PI};
use crate::spaces::{Grid, ModelSpace, ModelVariant, PeriodicGrid, Space};

/// Tail control for the truncated series.
///
/// Remaining modes are modelled by Weyl growth beyond the largest retained
/// eigenvalue Λ, which gives the relative tail Γ(n/2, Λt)/Γ(n/2) of the heat
/// trace and Γ(n/2+1, Λt)/Γ(n/2+1) for series carrying one extra λ.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TruncationPolicy {
    pub mode_count: usize,
    pub lambda_max: f64,
    pub n: usize,
    pub tolerance: f64,
}

impl TruncationPolicy {
    pub fn tail_bound(&self, t: f64) -> f64 {
        let s = 0.5 * self.n as f64;
        upper_gamma_half_integer(s, self.lambda_max * t) / crate::math::gamma_half(self.n)
    }

    pub fn derivative_tail_bound(&self, t: f64) -> f64 {
        let s = 0.5 * self.n as f64 + 1.0;
        upper_gamma_half_integer(s, self.lambda_max * t) / crate::math::gamma_half(self.n + 2)
    }

    pub fn check(&self, t: f64) -> Result<()> {
        check_time(t)?;
        let tail = self.tail_bound(t);
        self.judge(t, tail)
    }

    pub fn check_derivative(&self, t: f64) -> Result<()> {
        check_time(t)?;
        let tail = self.derivative_tail_bound(t);
        self.judge(t, tail)
    }

    fn judge(&self, t: f64, tail: f64) -> Result<()> {
        if tail > self.tolerance {
            return Err(Error::Truncation {
                t,
                tail,
                tolerance: self.tolerance,
            });
        }
        Ok(())
    }
}

fn check_time(t: f64) -> Result<()> {
    if !(t > 0.0) || !t.is_finite() {
        return Err(invalid("t", "time must be positive and finite"));
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct BasisOptions {
    /// Grid sizes per factor on model spaces; `None` picks them from the modes.
    pub grid: Option<Vec<usize>>,
    /// Tolerance on the relative series tail.
    pub tolerance: f64,
    pub eigen: EigenOptions,
}

impl Default for BasisOptions {
    fn default() -> Self {
        Self {
            grid: None,
            tolerance: 1e-10,
            eigen: EigenOptions::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum TrigKind {
    Constant,
    Cos,
    Sin,
}

#[derive(Debug, Clone)]
struct TrigModes {
    dim: usize,
    freqs: Vec<i32>,
    kinds: Vec<TrigKind>,
    omegas: Vec<f64>,
    amplitude: f64,
    constant: f64,
    // Per axis: cos and sin of 2πki/M for k ≤ kmax, laid out k-major.
    cos_tab: Vec<Vec<f64>>,
    sin_tab: Vec<Vec<f64>>,
    sizes: Vec<usize>,
}

#[derive(Debug, Clone)]
enum Modes {
    Trig(TrigModes),
    Sampled {
        values: Vec<f64>,
        gradients: Option<Vec<f64>>,
    },
}

/// Sorted eigenpairs sampled on a grid.
#[derive(Debug, Clone)]
pub struct SpectralBasis {
    space: Space,
    grid: Grid,
    lambdas: Vec<f64>,
    modes: Modes,
    truncation: TruncationPolicy,
    residuals: Vec<f64>,
}

/// Values and optional derivatives of one mode at every node.
#[derive(Debug, Clone)]
pub struct ModeData {
    pub values: Vec<f64>,
    /// Node-major, frame dimension per node.
    pub gradients: Option<Vec<f64>>,
    /// Node-major packed upper triangles.
    pub hessians: Option<Vec<f64>>,
}

pub fn compute_basis(space: &Space, mode_count: usize) -> Result<SpectralBasis> {
    compute_basis_with(space, mode_count, &BasisOptions::default())
}

pub fn compute_basis_with(space: &Space, mode_count: usize, options: &BasisOptions) -> Result<SpectralBasis> {
    if mode_count == 0 {
        return Err(invalid("mode_count", "at least one mode is required"));
    }
    if !(options.tolerance > 0.0) {
        return Err(invalid("tolerance", "must be positive"));
    }
    match space {
        Space::Model(m) => match m.variant() {
            ModelVariant::WeightedCircle { .. } if !m.is_homogeneous() => weighted_basis(space, m, mode_count, options),
            _ => trig_basis(space, m, mode_count, options),
        },
        Space::Discrete(d) => {
            if mode_count >= d.vertex_count() {
                return Err(invalid("mode_count", "must be below the vertex count"));
            }
            let eig = smallest_generalized(d.stiffness(), d.mass(), mode_count, &options.eigen)?;
            let grid = Grid::Mesh(d.clone());
            finish_sampled(space.clone(), grid, eig.values, eig.vectors, eig.residuals, options.tolerance)
        }
    }
}

/// Mode count retaining every eigenvalue with e^{−λ t_min} ≥ 10⁻¹⁴; on model
/// spaces whole eigenspaces are kept, elsewhere Weyl's law estimates the count.
pub fn default_mode_count(space: &Space, t_min: f64) -> Result<usize> {
    check_time(t_min)?;
    let cut = 14.0 * ln(10.0) / t_min;
    Ok(match space {
        Space::Model(m) if m.is_homogeneous() => {
            let omegas: Vec<f64> = m.lengths().iter().map(|l| 2.0 * PI / l).collect();
            1 + 2 * half_lattice(&omegas, cut).len()
        }
        Space::Model(m) => {
            let k = (sqrt(cut) * m.lengths()[0] / (2.0 * PI)) as usize + 1;
            2 * k + 1
        }
        Space::Discrete(d) => {
            // N(λ) ≈ area·λ/(4π) on surfaces.
            let est = d.total_measure() * cut / (4.0 * PI);
            (1.1 * est) as usize + 1
        }
    })
}

fn half_lattice(omegas: &[f64], lambda_max: f64) -> Vec<(f64, Vec<i32>)> {
    let n = omegas.len();
    let bounds: Vec<i32> = omegas.iter().map(|w| (sqrt(lambda_max) / w) as i32 + 1).collect();
    let mut out = Vec::new();
    let mut k = vec![0i32; n];
    for (j, b) in bounds.iter().enumerate() {
        k[j] = -b;
    }
    loop {
        let first = k.iter().find(|&&x| x != 0);
        if matches!(first, Some(&x) if x > 0) {
            let lam: f64 = k.iter().zip(omegas).map(|(&kj, w)| (kj as f64 * w) * (kj as f64 * w)).sum();
            if lam <= lambda_max {
                out.push((lam, k.clone()));
            }
        }
        // odometer over the box
        let mut j = n;
        loop {
            if j == 0 {
                return out;
            }
            j -= 1;
            if k[j] < bounds[j] {
                k[j] += 1;
                break;
            }
            k[j] = -bounds[j];
        }
    }
}

fn trig_basis(space: &Space, m: &ModelSpace, mode_count: usize, options: &BasisOptions) -> Result<SpectralBasis> {
    let dim = m.dim();
    let omegas: Vec<f64> = m.lengths().iter().map(|l| 2.0 * PI / l).collect();
    let wmin = omegas.iter().copied().fold(f64::INFINITY, f64::min);
    let mut lam_max = wmin * wmin * ((mode_count / 2 + 1) as f64);
    let mut lattice = half_lattice(&omegas, lam_max);
    while 1 + 2 * lattice.len() < mode_count {
        lam_max *= 2.0;
        lattice = half_lattice(&omegas, lam_max);
    }
    lattice.sort_by(|a, b| {
        let scale = a.0.abs().max(b.0.abs());
        if (a.0 - b.0).abs() <= 1e-12 * scale {
            a.1.cmp(&b.1)
        } else {
            a.0.total_cmp(&b.0)
        }
    });
    let mut lambdas = vec![0.0];
    let mut freqs = vec![0i32; dim];
    let mut kinds = vec![TrigKind::Constant];
    'outer: for (lam, k) in &lattice {
        for kind in [TrigKind::Cos, TrigKind::Sin] {
            if lambdas.len() == mode_count {
                break 'outer;
            }
            lambdas.push(*lam);
            freqs.extend_from_slice(k);
            kinds.push(kind);
        }
    }
    let kmax: Vec<usize> = (0..dim)
        .map(|j| freqs.iter().skip(j).step_by(dim).map(|k| k.unsigned_abs() as usize).max().unwrap_or(0))
        .collect();
    let sizes = match &options.grid {
        Some(s) => {
            if s.len() != dim {
                return Err(invalid("grid", "one size per factor is required"));
            }
            for (j, (&mj, &kj)) in s.iter().zip(&kmax).enumerate() {
                if mj < 2 * kj + 1 {
                    return Err(invalid(
                        "grid",
                        alloc::format!("axis {j} needs at least {} nodes to resolve frequency {kj}", 2 * kj + 1),
                    ));
                }
            }
            s.clone()
        }
        None => kmax.iter().map(|&k| (4 * k + 1).next_power_of_two().max(8)).collect(),
    };
    let grid = PeriodicGrid::new(m, &sizes)?;
    let mut cos_tab = Vec::with_capacity(dim);
    let mut sin_tab = Vec::with_capacity(dim);
    for j in 0..dim {
        let mj = sizes[j];
        let mut c = Vec::with_capacity((kmax[j] + 1) * mj);
        let mut s = Vec::with_capacity((kmax[j] + 1) * mj);
        for k in 0..=kmax[j] {
            for i in 0..mj {
                // Reduce the integer phase first so large k stays accurate.
                let a = 2.0 * PI * ((k * i) % mj) as f64 / mj as f64;
                c.push(cos(a));
                s.push(sin(a));
            }
        }
        cos_tab.push(c);
        sin_tab.push(s);
    }
    let total = m.total_measure();
    let modes = TrigModes {
        dim,
        freqs,
        kinds,
        omegas,
        amplitude: sqrt(2.0 / total),
        constant: 1.0 / sqrt(total),
        cos_tab,
        sin_tab,
        sizes,
    };
    let lambda_max = *lambdas.last().unwrap();
    let count = lambdas.len();
    Ok(SpectralBasis {
        space: space.clone(),
        grid: Grid::Periodic(grid),
        residuals: vec![0.0; count],
        lambdas,
        modes: Modes::Trig(modes),
        truncation: TruncationPolicy {
            mode_count: count,
            lambda_max,
            n: dim,
            tolerance: options.tolerance,
        },
    })
}

/// Lumped-mass P1 elements for the weighted form ∫ f′g′ e^{−φ}.
fn weighted_basis(space: &Space, m: &ModelSpace, mode_count: usize, options: &BasisOptions) -> Result<SpectralBasis> {
    let nodes = match &options.grid {
        Some(s) if s.len() == 1 => s[0],
        Some(_) => return Err(invalid("grid", "one size per factor is required")),
        None => (32 * mode_count).max(256).next_power_of_two(),
    };
    if mode_count >= nodes {
        return Err(invalid("mode_count", "must be below the grid size"));
    }
    let grid = PeriodicGrid::new(m, &[nodes])?;
    let length = m.lengths()[0];
    let h = length / nodes as f64;
    let mut trip = Vec::with_capacity(4 * nodes);
    for i in 0..nodes {
        let j = (i + 1) % nodes;
        let w = m.density(h * (i as f64 + 0.5)) / h;
        trip.push((i, i, w));
        trip.push((j, j, w));
        trip.push((i, j, -w));
        trip.push((j, i, -w));
    }
    let stiffness = CsrMatrix::from_triplets(nodes, &trip);
    let mass = grid.weights().to_vec();
    let eig = smallest_generalized(&stiffness, &mass, mode_count, &options.eigen)?;
    finish_sampled(space.clone(), Grid::Periodic(grid), eig.values, eig.vectors, eig.residuals, options.tolerance)
}

fn finish_sampled(
    space: Space,
    grid: Grid,
    mut lambdas: Vec<f64>,
    vectors: Vec<Vec<f64>>,
    residuals: Vec<f64>,
    tolerance: f64,
) -> Result<SpectralBasis> {
    let nodes = grid.node_count();
    let total: f64 = grid.weights().iter().sum();
    let c0 = 1.0 / sqrt(total);
    let mut values = Vec::with_capacity(vectors.len() * nodes);
    for (i, v) in vectors.into_iter().enumerate() {
        if i == 0 {
            // The kernel of a connected form is exactly the constants.
            values.extend(core::iter::repeat(c0).take(nodes));
            lambdas[0] = 0.0;
            continue;
        }
        // Remove the constant component left by the iterative solver.
        let mean: f64 = v.iter().zip(grid.weights()).map(|(a, w)| a * w).sum::<f64>() * c0;
        let mut v: Vec<f64> = v.iter().map(|a| a - mean * c0).collect();
        let norm = sqrt(v.iter().zip(grid.weights()).map(|(a, w)| a * a * w).sum());
        v.iter_mut().for_each(|a| *a /= norm);
        values.extend(v);
    }
    let gradients = match &grid {
        Grid::Periodic(g) => {
            let dim = g.dim();
            let mut out = Vec::with_capacity(values.len() * dim);
            for chunk in values.chunks_exact(nodes) {
                let grad = g.gradient(&ScalarField::new(chunk.to_vec()))?;
                out.extend_from_slice(grad.data());
            }
            Some(out)
        }
        Grid::Mesh(_) => None,
    };
    let n = space.metadata().n;
    let lambda_max = lambdas.last().copied().unwrap_or(0.0);
    let count = lambdas.len();
    Ok(SpectralBasis {
        space,
        grid,
        lambdas,
        modes: Modes::Sampled { values, gradients },
        truncation: TruncationPolicy {
            mode_count: count,
            lambda_max,
            n,
            tolerance,
        },
        residuals,
    })
}

impl SpectralBasis {
    /// Basis from sampled eigenfunctions (mode-major values on `grid`).
    pub fn from_samples(space: Space, grid: Grid, lambdas: Vec<f64>, values: Vec<f64>, tolerance: f64) -> Result<Self> {
        let nodes = grid.node_count();
        if lambdas.is_empty() || values.len() != lambdas.len() * nodes {
            return Err(shape("sample table does not match mode count × grid size"));
        }
        if lambdas.windows(2).any(|w| w[1] < w[0]) || lambdas[0] < 0.0 {
            return Err(invalid("lambdas", "eigenvalues must be nonnegative and ascending"));
        }
        let gradients = match &grid {
            Grid::Periodic(g) => {
                let mut out = Vec::with_capacity(values.len() * g.dim());
                for chunk in values.chunks_exact(nodes) {
                    out.extend_from_slice(g.gradient(&ScalarField::new(chunk.to_vec()))?.data());
                }
                Some(out)
            }
            Grid::Mesh(_) => None,
        };
        let count = lambdas.len();
        let n = space.metadata().n;
        Ok(Self {
            space,
            grid,
            truncation: TruncationPolicy {
                mode_count: count,
                lambda_max: *lambdas.last().unwrap(),
                n,
                tolerance,
            },
            lambdas,
            modes: Modes::Sampled { values, gradients },
            residuals: vec![0.0; count],
        })
    }

    pub fn space(&self) -> &Space {
        &self.space
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn mode_count(&self) -> usize {
        self.lambdas.len()
    }

    pub fn lambdas(&self) -> &[f64] {
        &self.lambdas
    }

    pub fn truncation(&self) -> &TruncationPolicy {
        &self.truncation
    }

    /// Copy with a different tail tolerance.
    pub fn with_tolerance(mut self, tolerance: f64) -> Result<Self> {
        if !(tolerance > 0.0) {
            return Err(invalid("tolerance", "must be positive"));
        }
        self.truncation.tolerance = tolerance;
        Ok(self)
    }

    /// Keeps only the first `count` modes.
    pub fn truncated(&self, count: usize) -> Result<Self> {
        if count == 0 || count > self.mode_count() {
            return Err(invalid("count", "must lie in 1..=mode_count"));
        }
        let nodes = self.grid.node_count();
        let modes = match &self.modes {
            Modes::Trig(t) => {
                let mut t = t.clone();
                t.freqs.truncate(count * t.dim);
                t.kinds.truncate(count);
                Modes::Trig(t)
            }
            Modes::Sampled { values, gradients } => Modes::Sampled {
                values: values[..count * nodes].to_vec(),
                gradients: gradients
                    .as_ref()
                    .map(|g| g[..count * nodes * self.grid.frame_dim()].to_vec()),
            },
        };
        let mut out = Self {
            space: self.space.clone(),
            grid: self.grid.clone(),
            lambdas: self.lambdas[..count].to_vec(),
            modes,
            truncation: self.truncation.clone(),
            residuals: self.residuals[..count].to_vec(),
        };
        out.truncation.mode_count = count;
        out.truncation.lambda_max = out.lambdas[count - 1];
        Ok(out)
    }

    /// Solver residuals per pair (zero for closed-form modes).
    pub fn solver_residuals(&self) -> &[f64] {
        &self.residuals
    }

    pub fn is_closed_form(&self) -> bool {
        matches!(self.modes, Modes::Trig(_))
    }

    /// Integer frequency vector and kind of a closed-form mode.
    pub fn frequency(&self, i: usize) -> Option<(&[i32], TrigKind)> {
        match &self.modes {
            Modes::Trig(t) => Some((&t.freqs[i * t.dim..(i + 1) * t.dim], t.kinds[i])),
            Modes::Sampled { .. } => None,
        }
    }

    pub fn mode(&self, i: usize) -> ScalarField {
        ScalarField::new(self.mode_data(i, false, false).map(|d| d.values).unwrap_or_default())
    }

    pub fn mode_value_at(&self, i: usize, node: usize) -> f64 {
        match &self.modes {
            Modes::Trig(t) => {
                let g = self.grid.as_periodic().unwrap();
                let mut idx = vec![0usize; t.dim];
                g.multi_index(node, &mut idx);
                t.value_at(i, &idx)
            }
            Modes::Sampled { values, .. } => values[i * self.grid.node_count() + node],
        }
    }

    pub fn mode_gradient(&self, i: usize) -> Result<CovectorField> {
        let dim = self.grid.frame_dim();
        match self.mode_data(i, true, false)?.gradients {
            Some(g) => CovectorField::from_data(dim, g),
            None => unreachable!(),
        }
    }

    /// Second derivatives of a mode: closed form on trigonometric bases,
    /// spectral differentiation of the gradient on sampled periodic bases.
    pub fn mode_hessian(&self, i: usize) -> Result<TensorField> {
        let dim = self.grid.frame_dim();
        TensorField::from_packed(dim, self.mode_data(i, false, true)?.hessians.unwrap())
    }

    /// Calls `f(node, value, gradient, packed Hessian)` for every node of mode
    /// `i`. The Hessian slice is empty unless `hessians` is set.
    pub fn visit_mode(
        &self,
        i: usize,
        hessians: bool,
        mut f: impl FnMut(usize, f64, &[f64], &[f64]),
    ) -> Result<()> {
        if let Modes::Trig(t) = &self.modes {
            if i >= self.mode_count() {
                return Err(invalid("mode", "index out of range"));
            }
            t.visit(i, hessians, f);
            return Ok(());
        }
        let d = self.mode_data(i, true, hessians)?;
        let dim = self.grid.frame_dim();
        let p = packed_len(dim);
        let grads = d.gradients.unwrap();
        let hess = d.hessians.unwrap_or_default();
        for (node, v) in d.values.iter().enumerate() {
            let h = if hessians { &hess[node * p..(node + 1) * p] } else { &[][..] };
            f(node, *v, &grads[node * dim..(node + 1) * dim], h);
        }
        Ok(())
    }

    /// Values and requested derivatives of mode `i` at every node.
    pub fn mode_data(&self, i: usize, gradients: bool, hessians: bool) -> Result<ModeData> {
        if i >= self.mode_count() {
            return Err(invalid("mode", "index out of range"));
        }
        let nodes = self.grid.node_count();
        match &self.modes {
            Modes::Trig(t) => Ok(t.eval(i, nodes, gradients, hessians)),
            Modes::Sampled { values, gradients: stored } => {
                let v = values[i * nodes..(i + 1) * nodes].to_vec();
                let dim = self.grid.frame_dim();
                let grad = match (gradients || hessians, stored) {
                    (false, _) => None,
                    (true, Some(g)) => Some(g[i * nodes * dim..(i + 1) * nodes * dim].to_vec()),
                    (true, None) => Some(self.grid.gradient(&ScalarField::new(v.clone()))?.data().to_vec()),
                };
                let hess = if hessians {
                    let g = self.grid.as_periodic().ok_or_else(|| {
                        capability("pointwise second derivatives are unavailable on piecewise-linear meshes")
                    })?;
                    let grad = grad.as_ref().unwrap();
                    let mut out = vec![0.0; nodes * packed_len(dim)];
                    let mut comp = vec![0.0; nodes];
                    let mut d = vec![0.0; nodes];
                    for a in 0..dim {
                        for (node, c) in comp.iter_mut().enumerate() {
                            *c = grad[node * dim + a];
                        }
                        for b in a..dim {
                            g.partial(&comp, b, &mut d);
                            let k = packed_index(dim, a, b);
                            for node in 0..nodes {
                                out[node * packed_len(dim) + k] = d[node];
                            }
                        }
                    }
                    Some(out)
                } else {
                    None
                };
                Ok(ModeData {
                    values: v,
                    gradients: if gradients { grad } else { None },
                    hessians: hess,
                })
            }
        }
    }

    /// max_{i,j<count} |∫φ_iφ_j d𝔪 − δ_ij|.
    pub fn orthonormality_defect(&self, count: usize) -> f64 {
        let count = count.min(self.mode_count());
        let modes: Vec<ScalarField> = (0..count).map(|i| self.mode(i)).collect();
        let mut worst: f64 = 0.0;
        for i in 0..count {
            for j in i..count {
                let ip = self.grid.inner(&modes[i], &modes[j]).unwrap();
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((ip - target).abs());
            }
        }
        worst
    }

    /// Random orthogonal mixing inside every eigenspace (eigenvalue gaps below
    /// 10⁻⁸·λ), with random sign flips. The result carries sampled modes.
    pub fn remix_degenerate(&self, seed: u64) -> Result<Self> {
        let nodes = self.grid.node_count();
        let dim = self.grid.frame_dim();
        let with_grad = self.grid.as_periodic().is_some();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut values = Vec::with_capacity(self.mode_count() * nodes);
        let mut grads = Vec::with_capacity(if with_grad { self.mode_count() * nodes * dim } else { 0 });
        let mut start = 0;
        while start < self.mode_count() {
            let mut end = start + 1;
            while end < self.mode_count()
                && (self.lambdas[end] - self.lambdas[end - 1]).abs() <= 1e-8 * self.lambdas[end].abs()
            {
                end += 1;
            }
            let m = end - start;
            let data: Vec<ModeData> = (start..end)
                .map(|i| self.mode_data(i, with_grad, false))
                .collect::<Result<_>>()?;
            let raw = DMatrix::from_fn(m, m, |_, _| rng.gen::<f64>() * 2.0 - 1.0);
            let q = raw.qr().q();
            for a in 0..m {
                let flip = if rng.gen::<bool>() { -1.0 } else { 1.0 };
                let mut v = vec![0.0; nodes];
                let mut g = vec![0.0; if with_grad { nodes * dim } else { 0 }];
                for b in 0..m {
                    let c = flip * q[(a, b)];
                    v.iter_mut().zip(&data[b].values).for_each(|(x, y)| *x += c * y);
                    if with_grad {
                        let src = data[b].gradients.as_ref().unwrap();
                        g.iter_mut().zip(src).for_each(|(x, y)| *x += c * y);
                    }
                }
                values.extend(v);
                grads.extend(g);
            }
            start = end;
        }
        Ok(Self {
            space: self.space.clone(),
            grid: self.grid.clone(),
            lambdas: self.lambdas.clone(),
            modes: Modes::Sampled {
                values,
                gradients: if with_grad { Some(grads) } else { None },
            },
            truncation: self.truncation.clone(),
            residuals: self.residuals.clone(),
        })
    }
}

impl TrigModes {
    fn factor(&self, axis: usize, k: i32, i: usize) -> (f64, f64) {
        let m = self.sizes[axis];
        let a = k.unsigned_abs() as usize * m + i;
        let s = self.sin_tab[axis][a];
        (self.cos_tab[axis][a], if k < 0 { -s } else { s })
    }

    fn value_at(&self, mode: usize, idx: &[usize]) -> f64 {
        let k = &self.freqs[mode * self.dim..(mode + 1) * self.dim];
        let (mut re, mut im) = (1.0, 0.0);
        for j in 0..self.dim {
            let (c, s) = self.factor(j, k[j], idx[j]);
            let r = re * c - im * s;
            im = re * s + im * c;
            re = r;
        }
        match self.kinds[mode] {
            TrigKind::Constant => self.constant,
            TrigKind::Cos => self.amplitude * re,
            TrigKind::Sin => self.amplitude * im,
        }
    }

    /// Streams value, gradient and packed Hessian node by node without
    /// materialising whole-grid arrays. Same arithmetic as `eval`.
    fn visit(&self, mode: usize, hessians: bool, mut f: impl FnMut(usize, f64, &[f64], &[f64])) {
        let dim = self.dim;
        let p = packed_len(dim);
        let nodes: usize = self.sizes.iter().product();
        let mut g = vec![0.0; dim];
        let mut h = vec![0.0; if hessians { p } else { 0 }];
        let kind = self.kinds[mode];
        if kind == TrigKind::Constant {
            for node in 0..nodes {
                f(node, self.constant, &g, &h);
            }
            return;
        }
        let k = &self.freqs[mode * dim..(mode + 1) * dim];
        let wk: Vec<f64> = (0..dim).map(|j| k[j] as f64 * self.omegas[j]).collect();
        let amp = self.amplitude;
        let last = dim - 1;
        let m = self.sizes[last];
        let row = k[last].unsigned_abs() as usize * m;
        let cos_row = &self.cos_tab[last][row..row + m];
        let sin_row = &self.sin_tab[last][row..row + m];
        let flip = if k[last] < 0 { -1.0 } else { 1.0 };
        let (grad_scale, hess_scale): (Vec<f64>, Vec<f64>) = {
            let sign = if kind == TrigKind::Cos { -1.0 } else { 1.0 };
            let hs = (0..dim).flat_map(|a| (a..dim).map(move |b| (a, b))).map(|(a, b)| -amp * wk[a] * wk[b]).collect();
            (wk.iter().map(|w| sign * amp * w).collect(), hs)
        };
        // Outer axes: index counter and the product of their factors.
        let mut idx = vec![0usize; last];
        for base in (0..nodes).step_by(m) {
            let (mut pre_re, mut pre_im) = (1.0, 0.0);
            for j in 0..last {
                let (c, s) = self.factor(j, k[j], idx[j]);
                let r = pre_re * c - pre_im * s;
                pre_im = pre_re * s + pre_im * c;
                pre_re = r;
            }
            for (i, (&c, &s)) in cos_row.iter().zip(sin_row).enumerate() {
                let s = flip * s;
                let re = pre_re * c - pre_im * s;
                let im = pre_re * s + pre_im * c;
                let (main, other) = if kind == TrigKind::Cos { (re, im) } else { (im, re) };
                for (gj, sc) in g.iter_mut().zip(&grad_scale) {
                    *gj = sc * other;
                }
                if hessians {
                    for (hq, sc) in h.iter_mut().zip(&hess_scale) {
                        *hq = sc * main;
                    }
                }
                f(base + i, amp * main, &g, &h);
            }
            for j in (0..last).rev() {
                idx[j] += 1;
                if idx[j] < self.sizes[j] {
                    break;
                }
                idx[j] = 0;
            }
        }
    }

    fn eval(&self, mode: usize, nodes: usize, gradients: bool, hessians: bool) -> ModeData {
        let dim = self.dim;
        let kind = self.kinds[mode];
        if kind == TrigKind::Constant {
            return ModeData {
                values: vec![self.constant; nodes],
                gradients: gradients.then(|| vec![0.0; nodes * dim]),
                hessians: hessians.then(|| vec![0.0; nodes * packed_len(dim)]),
            };
        }
        let k = &self.freqs[mode * dim..(mode + 1) * dim];
        // e^{i k·ωx} on the product grid, built axis by axis.
        let mut re = vec![1.0];
        let mut im = vec![0.0];
        for j in 0..dim {
            let m = self.sizes[j];
            let mut nre = Vec::with_capacity(re.len() * m);
            let mut nim = Vec::with_capacity(re.len() * m);
            for p in 0..re.len() {
                for i in 0..m {
                    let (c, s) = self.factor(j, k[j], i);
                    nre.push(re[p] * c - im[p] * s);
                    nim.push(re[p] * s + im[p] * c);
                }
            }
            re = nre;
            im = nim;
        }
        let amp = self.amplitude;
        let (main, other, sign) = match kind {
            TrigKind::Cos => (&re, &im, -1.0),
            _ => (&im, &re, 1.0),
        };
        let values = main.iter().map(|v| amp * v).collect();
        let wk: Vec<f64> = (0..dim).map(|j| k[j] as f64 * self.omegas[j]).collect();
        let grads = gradients.then(|| {
            let mut g = Vec::with_capacity(nodes * dim);
            for o in other.iter() {
                for w in &wk {
                    g.push(sign * amp * w * o);
                }
            }
            g
        });
        let hess = hessians.then(|| {
            let p = packed_len(dim);
            let mut h = Vec::with_capacity(nodes * p);
            for v in main.iter() {
                for a in 0..dim {
                    for b in a..dim {
                        h.push(-amp * wk[a] * wk[b] * v);
                    }
                }
            }
            h
        });
        ModeData {
            values,
            gradients: grads,
            hessians: hess,
        }
    }
}

/// p(x, y, t) with x, y grid nodes.
pub fn heat_kernel(basis: &SpectralBasis, x: usize, y: usize, t: f64) -> Result<f64> {
    basis.truncation.check(t)?;
    check_node(basis, x)?;
    check_node(basis, y)?;
    let mut s = 0.0;
    for (i, lam) in basis.lambdas.iter().enumerate() {
        s += exp(-lam * t) * (basis.mode_value_at(i, x) * basis.mode_value_at(i, y));
    }
    Ok(s)
}

/// p(·, y, t) at every node.
pub fn heat_kernel_slice(basis: &SpectralBasis, y: usize, t: f64) -> Result<ScalarField> {
    basis.truncation.check(t)?;
    check_node(basis, y)?;
    let mut out = vec![0.0; basis.grid.node_count()];
    for (i, lam) in basis.lambdas.iter().enumerate() {
        let c = exp(-lam * t) * basis.mode_value_at(i, y);
        let v = basis.mode_data(i, false, false)?.values;
        out.iter_mut().zip(&v).for_each(|(o, a)| *o += c * a);
    }
    Ok(ScalarField::new(out))
}

fn check_node(basis: &SpectralBasis, x: usize) -> Result<()> {
    if x >= basis.grid.node_count() {
        return Err(invalid("x", "node index out of range"));
    }
    Ok(())
}

pub fn diag_heat(basis: &SpectralBasis, x: usize, t: f64) -> Result<f64> {
    basis.truncation.check(t)?;
    check_node(basis, x)?;
    Ok(basis
        .lambdas
        .iter()
        .enumerate()
        .map(|(i, lam)| {
            let v = basis.mode_value_at(i, x);
            exp(-lam * t) * v * v
        })
        .sum())
}

/// ∂_t p(x, x, t) = −Σ λ e^{−λt} φ(x)².
pub fn diag_heat_time_derivative(basis: &SpectralBasis, x: usize, t: f64) -> Result<f64> {
    basis.truncation.check_derivative(t)?;
    check_node(basis, x)?;
    Ok(basis
        .lambdas
        .iter()
        .enumerate()
        .map(|(i, lam)| {
            let v = basis.mode_value_at(i, x);
            -lam * exp(-lam * t) * v * v
        })
        .sum())
}

pub fn diag_laplacian(basis: &SpectralBasis, x: usize, t: f64) -> Result<f64> {
    check_node(basis, x)?;
    Ok(diag_laplacian_field(basis, t)?.values()[x])
}

pub fn diag_heat_field(basis: &SpectralBasis, t: f64) -> Result<ScalarField> {
    basis.truncation.check(t)?;
    series_field(basis, |lam, v, _| exp(-lam * t) * v * v, false)
}

pub fn diag_heat_time_derivative_field(basis: &SpectralBasis, t: f64) -> Result<ScalarField> {
    basis.truncation.check_derivative(t)?;
    series_field(basis, |lam, v, _| -lam * exp(-lam * t) * v * v, false)
}

/// Δ_x p(x, x, t) = 2Σ e^{−λt}(−λφ² + |∇φ|²).
pub fn diag_laplacian_field(basis: &SpectralBasis, t: f64) -> Result<ScalarField> {
    basis.truncation.check_derivative(t)?;
    series_field(basis, |lam, v, g2| 2.0 * exp(-lam * t) * (-lam * v * v + g2), true)
}

fn series_field(basis: &SpectralBasis, term: impl Fn(f64, f64, f64) -> f64, need_grad: bool) -> Result<ScalarField> {
    let nodes = basis.grid.node_count();
    let dim = basis.grid.frame_dim();
    let mut out = vec![0.0; nodes];
    for (i, &lam) in basis.lambdas.iter().enumerate() {
        if need_grad && basis.grid.as_mesh().is_some() {
            let v = basis.mode(i);
            let g2 = basis.grid.carre_du_champ(&v, &v)?;
            for ((o, a), b) in out.iter_mut().zip(v.values()).zip(g2.values()) {
                *o += term(lam, *a, *b);
            }
            continue;
        }
        let d = basis.mode_data(i, need_grad, false)?;
        for node in 0..nodes {
            let g2 = match &d.gradients {
                Some(g) => g[node * dim..(node + 1) * dim].iter().map(|x| x * x).sum(),
                None => 0.0,
            };
            out[node] += term(lam, d.values[node], g2);
        }
    }
    Ok(ScalarField::new(out))
}

/// Truncated diffusion coordinates x ↦ (e^{−λ_i t}φ_i(x))_{1≤i≤count}.
pub fn diffusion_coordinates(basis: &SpectralBasis, t: f64, count: usize) -> Result<Vec<ScalarField>> {
    check_time(t)?;
    if count == 0 || count >= basis.mode_count() {
        return Err(invalid("count", "must lie in 1..mode_count"));
    }
    (1..=count)
        .map(|i| Ok(basis.mode(i).map(|v| exp(-basis.lambdas[i] * t) * v)))
        .collect()
}

/// Empirical growth constants of the retained spectrum.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GrowthFit {
    /// Largest c with λ_i ≥ c·i^{2/N} over the retained nonconstant modes.
    pub weyl_constant: f64,
    /// Least-squares slope of log λ_i against log i.
    pub weyl_exponent: f64,
    /// Smallest C with max|φ_i| ≤ C·λ_i^{N/4}.
    pub sup_constant: f64,
    pub dimension_upper: f64,
}

pub fn growth_fit(basis: &SpectralBasis) -> Result<GrowthFit> {
    if basis.mode_count() < 3 {
        return Err(invalid("basis", "at least two nonconstant modes are needed"));
    }
    let big_n = basis.space.metadata().dimension_upper;
    let mut weyl = f64::INFINITY;
    let mut sup: f64 = 0.0;
    let (mut sx, mut sy, mut sxx, mut sxy, mut cnt) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for i in 1..basis.mode_count() {
        let lam = basis.lambdas[i];
        if lam <= 0.0 {
            continue;
        }
        let fi = i as f64;
        weyl = weyl.min(lam / crate::math::powf(fi, 2.0 / big_n));
        sup = sup.max(basis.mode(i).max_abs() / crate::math::powf(lam, big_n / 4.0));
        let (x, y) = (ln(fi), ln(lam));
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
        cnt += 1.0;
    }
    let slope = (cnt * sxy - sx * sy) / (cnt * sxx - sx * sx);
    Ok(GrowthFit {
        weyl_constant: weyl,
        weyl_exponent: slope,
        sup_constant: sup,
        dimension_upper: big_n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spaces::TrigPolynomial;

    fn circle() -> Space {
        ModelSpace::circle(2.0 * PI).unwrap().into()
    }

    #[test]
    fn circle_eigenvalues() {
        let b = compute_basis(&circle(), 7).unwrap();
        assert_eq!(b.lambdas(), &[0.0, 1.0, 1.0, 4.0, 4.0, 9.0, 9.0]);
        let phi0 = b.mode(0);
        assert!(phi0.values().iter().all(|v| (v - 1.0 / sqrt(2.0 * PI)).abs() < 1e-15));
        assert!(b.orthonormality_defect(7) < 1e-13);
    }

    #[test]
    fn torus_eigenvalues() {
        let s: Space = ModelSpace::flat_torus(&[2.0 * PI, 2.0 * PI]).unwrap().into();
        let b = compute_basis(&s, 5).unwrap();
        assert_eq!(b.lambdas(), &[0.0, 1.0, 1.0, 1.0, 1.0]);
        let b = compute_basis(&s, 41).unwrap();
        assert!(b.orthonormality_defect(41) < 1e-12);
        // 1 + 4 + 4 + 4 + 8 + 4 + 4 + 8 lattice points up to |k|² = 10
        assert_eq!(b.lambdas()[36], 10.0);
        assert_eq!(b.lambdas()[37], 13.0);
    }

    #[test]
    fn trig_gradients_match_spectral_differentiation() {
        let s: Space = ModelSpace::flat_torus(&[2.0 * PI, 3.0]).unwrap().into();
        let b = compute_basis(&s, 30).unwrap();
        for i in [1, 7, 29] {
            let analytic = b.mode_gradient(i).unwrap();
            let spectral = b.grid().gradient(&b.mode(i)).unwrap();
            for (a, c) in analytic.data().iter().zip(spectral.data()) {
                assert!((a - c).abs() < 1e-11);
            }
        }
    }

    #[test]
    fn tail_bound_is_monotone() {
        let p = TruncationPolicy {
            mode_count: 10,
            lambda_max: 25.0,
            n: 1,
            tolerance: 1e-10,
        };
        let q = TruncationPolicy {
            lambda_max: 36.0,
            mode_count: 12,
            ..p.clone()
        };
        let mut last = f64::INFINITY;
        for k in 1..50 {
            let t = 0.01 * k as f64;
            assert!(p.tail_bound(t) <= last);
            assert!(q.tail_bound(t) <= p.tail_bound(t));
            last = p.tail_bound(t);
        }
        assert!(matches!(p.check(1e-4), Err(Error::Truncation { .. })));
    }

    #[test]
    fn heat_kernel_mass_and_symmetry() {
        let s = circle();
        let b = compute_basis(&s, default_mode_count(&s, 0.05).unwrap()).unwrap();
        let slice = heat_kernel_slice(&b, 3, 0.05).unwrap();
        assert!((b.grid().integrate(&slice).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(heat_kernel(&b, 2, 9, 0.05).unwrap(), heat_kernel(&b, 9, 2, 0.05).unwrap());
    }

    #[test]
    fn weighted_circle_solves() {
        let phi = TrigPolynomial::new(0.0, vec![0.5], vec![]);
        let s: Space = ModelSpace::weighted_circle(2.0 * PI, phi).unwrap().into();
        let opts = BasisOptions {
            grid: Some(vec![512]),
            ..Default::default()
        };
        let b = compute_basis_with(&s, 21, &opts).unwrap();
        assert_eq!(b.lambdas()[0], 0.0);
        let defect = b.orthonormality_defect(9);
        assert!(defect < 1e-9, "{defect}");
        // Close to, but not equal to, the unweighted spectrum.
        assert!((b.lambdas()[1] - 1.0).abs() < 0.3);
        let lap = diag_laplacian_field(&b, 0.5).unwrap();
        assert!(lap.max_abs() > 1e-4);
        // Zero up to the O(h²) mismatch between the element energy and the
        // spectral gradients.
        let integral = b.grid().integrate(&lap).unwrap();
        assert!(integral.abs() < 1e-3 * lap.max_abs(), "{integral}");
    }

    #[test]
    fn remix_keeps_orthonormality() {
        let s: Space = ModelSpace::flat_torus(&[2.0 * PI, 2.0 * PI]).unwrap().into();
        let b = compute_basis(&s, 21).unwrap();
        let r = b.remix_degenerate(7).unwrap();
        assert!(r.orthonormality_defect(21) < 1e-12);
    }
}
