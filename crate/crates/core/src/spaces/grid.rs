use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{invalid, Result};
use crate::fft::SpectralDerivative;
use crate::field::{check_nodes, CovectorField, ScalarField, TensorField};
use crate::math::exp;

use super::{DiscreteSpace, Location, ModelSpace, Space};

/// Uniform product grid on a model space, with spectral differentiation.
/// Node index is row-major with the last axis fastest.
#[derive(Debug, Clone)]
pub struct PeriodicGrid {
    lengths: Vec<f64>,
    sizes: Vec<usize>,
    strides: Vec<usize>,
    weights: Vec<f64>,
    // φ′ at the nodes on weighted circles.
    log_density_slope: Option<Vec<f64>>,
    density: Option<Vec<f64>>,
    derivatives: Vec<SpectralDerivative>,
}

impl PeriodicGrid {
    pub fn new(space: &ModelSpace, sizes: &[usize]) -> Result<Self> {
        if sizes.len() != space.dim() {
            return Err(invalid("grid", "one size per factor is required"));
        }
        if sizes.iter().any(|&m| m < 2) {
            return Err(invalid("grid", "each factor needs at least 2 nodes"));
        }
        let lengths = space.lengths().to_vec();
        let mut strides = vec![1; sizes.len()];
        for j in (0..sizes.len().saturating_sub(1)).rev() {
            strides[j] = strides[j + 1] * sizes[j + 1];
        }
        let count: usize = sizes.iter().product();
        let cell: f64 = lengths.iter().zip(sizes).map(|(l, &m)| l / m as f64).product();
        let (weights, density, slope) = if space.is_homogeneous() {
            (vec![cell; count], None, None)
        } else {
            let h = lengths[0] / sizes[0] as f64;
            let mut rho = Vec::with_capacity(count);
            let mut slope = Vec::with_capacity(count);
            for i in 0..count {
                let d = space.log_density_derivatives(h * i as f64);
                rho.push(exp(-d[0]));
                slope.push(d[1]);
            }
            (rho.iter().map(|r| cell * r).collect(), Some(rho), Some(slope))
        };
        let derivatives = sizes
            .iter()
            .zip(&lengths)
            .map(|(&m, &l)| SpectralDerivative::new(m, l))
            .collect();
        Ok(Self {
            lengths,
            sizes: sizes.to_vec(),
            strides,
            weights,
            log_density_slope: slope,
            density,
            derivatives,
        })
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn lengths(&self) -> &[f64] {
        &self.lengths
    }

    pub fn dim(&self) -> usize {
        self.sizes.len()
    }

    pub fn node_count(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Per-axis lattice index of a node.
    pub fn multi_index(&self, node: usize, out: &mut [usize]) {
        for j in 0..self.dim() {
            out[j] = (node / self.strides[j]) % self.sizes[j];
        }
    }

    pub fn coords(&self, node: usize) -> Vec<f64> {
        (0..self.dim())
            .map(|j| {
                let i = (node / self.strides[j]) % self.sizes[j];
                self.lengths[j] * i as f64 / self.sizes[j] as f64
            })
            .collect()
    }

    pub fn sample(&self, f: impl Fn(&[f64]) -> f64) -> ScalarField {
        ScalarField::from_fn(self.node_count(), |i| f(&self.coords(i)))
    }

    /// e^{−φ} at nodes, when weighted.
    pub fn density(&self) -> Option<&[f64]> {
        self.density.as_deref()
    }

    /// ∇φ at nodes as a covector field (zero on unweighted grids).
    pub fn log_density_gradient(&self) -> CovectorField {
        match &self.log_density_slope {
            Some(s) => CovectorField::from_data(1, s.clone()).unwrap(),
            None => CovectorField::zeros(self.node_count(), self.dim()),
        }
    }

    /// ∂f/∂x_axis by spectral differentiation along grid lines.
    pub fn partial(&self, f: &[f64], axis: usize, out: &mut [f64]) {
        let m = self.sizes[axis];
        let stride = self.strides[axis];
        let d = &self.derivatives[axis];
        let mut line = vec![0.0; m];
        let mut dline = vec![0.0; m];
        let mut scratch = vec![0.0; 2 * m];
        let count = self.node_count();
        for base in 0..count {
            if (base / stride) % m != 0 {
                continue;
            }
            for k in 0..m {
                line[k] = f[base + k * stride];
            }
            d.apply(&line, &mut dline, &mut scratch);
            for k in 0..m {
                out[base + k * stride] = dline[k];
            }
        }
    }

    pub fn gradient(&self, f: &ScalarField) -> Result<CovectorField> {
        check_nodes(f.len(), self.node_count())?;
        let n = self.dim();
        let mut out = CovectorField::zeros(self.node_count(), n);
        let mut buf = vec![0.0; self.node_count()];
        for axis in 0..n {
            self.partial(f.values(), axis, &mut buf);
            for (node, v) in buf.iter().enumerate() {
                out.at_mut(node)[axis] = *v;
            }
        }
        Ok(out)
    }

    /// Weighted Laplacian ρ⁻¹ div(ρ∇f), ρ = e^{−φ}.
    pub fn laplacian(&self, f: &ScalarField) -> Result<ScalarField> {
        check_nodes(f.len(), self.node_count())?;
        let count = self.node_count();
        let mut out = vec![0.0; count];
        let mut d1 = vec![0.0; count];
        let mut d2 = vec![0.0; count];
        for axis in 0..self.dim() {
            self.partial(f.values(), axis, &mut d1);
            if let Some(rho) = &self.density {
                d1.iter_mut().zip(rho).for_each(|(v, r)| *v *= r);
            }
            self.partial(&d1, axis, &mut d2);
            match &self.density {
                Some(rho) => out.iter_mut().zip(&d2).zip(rho).for_each(|((o, v), r)| *o += v / r),
                None => out.iter_mut().zip(&d2).for_each(|(o, v)| *o += v),
            }
        }
        Ok(ScalarField::new(out))
    }
}

/// The nodes on which fields of a space are sampled.
#[derive(Debug, Clone)]
pub enum Grid {
    Periodic(PeriodicGrid),
    Mesh(Arc<DiscreteSpace>),
}

impl Grid {
    /// Grid for a space; `sizes` is used on model spaces only.
    pub fn for_space(space: &Space, sizes: &[usize]) -> Result<Self> {
        match space {
            Space::Model(m) => Ok(Grid::Periodic(PeriodicGrid::new(m, sizes)?)),
            Space::Discrete(d) => Ok(Grid::Mesh(d.clone())),
        }
    }

    pub fn node_count(&self) -> usize {
        match self {
            Grid::Periodic(g) => g.node_count(),
            Grid::Mesh(m) => m.vertex_count(),
        }
    }

    /// Dimension of the frame in which covectors and tensors are expressed.
    pub fn frame_dim(&self) -> usize {
        match self {
            Grid::Periodic(g) => g.dim(),
            Grid::Mesh(_) => 2,
        }
    }

    pub fn weights(&self) -> &[f64] {
        match self {
            Grid::Periodic(g) => g.weights(),
            Grid::Mesh(m) => m.mass(),
        }
    }

    pub fn as_periodic(&self) -> Option<&PeriodicGrid> {
        match self {
            Grid::Periodic(g) => Some(g),
            Grid::Mesh(_) => None,
        }
    }

    pub fn as_mesh(&self) -> Option<&DiscreteSpace> {
        match self {
            Grid::Mesh(m) => Some(m),
            Grid::Periodic(_) => None,
        }
    }

    pub fn location(&self, node: usize) -> Location {
        match self {
            Grid::Periodic(g) => Location::Point(g.coords(node)),
            Grid::Mesh(_) => Location::Vertex(node),
        }
    }

    pub fn integrate(&self, f: &ScalarField) -> Result<f64> {
        check_nodes(f.len(), self.node_count())?;
        Ok(f.values().iter().zip(self.weights()).map(|(v, w)| v * w).sum())
    }

    pub fn inner(&self, f: &ScalarField, g: &ScalarField) -> Result<f64> {
        check_nodes(f.len(), self.node_count())?;
        check_nodes(g.len(), self.node_count())?;
        Ok(f.values()
            .iter()
            .zip(g.values())
            .zip(self.weights())
            .map(|((a, b), w)| a * b * w)
            .sum())
    }

    pub fn l2_norm(&self, f: &ScalarField) -> Result<f64> {
        Ok(crate::math::sqrt(self.inner(f, f)?))
    }

    pub fn gradient(&self, f: &ScalarField) -> Result<CovectorField> {
        match self {
            Grid::Periodic(g) => g.gradient(f),
            Grid::Mesh(m) => m.gradient(f),
        }
    }

    /// Γ(f, g) = ⟨∇f, ∇g⟩.
    pub fn carre_du_champ(&self, f: &ScalarField, g: &ScalarField) -> Result<ScalarField> {
        match self {
            Grid::Periodic(p) => p.gradient(f)?.dot(&p.gradient(g)?),
            Grid::Mesh(m) => m.carre_du_champ(f, g),
        }
    }

    /// Generator of the Dirichlet form: spectral on model spaces, −M⁻¹Sf on meshes.
    pub fn laplacian(&self, f: &ScalarField) -> Result<ScalarField> {
        match self {
            Grid::Periodic(g) => g.laplacian(f),
            Grid::Mesh(m) => {
                check_nodes(f.len(), m.vertex_count())?;
                let mut y = vec![0.0; m.vertex_count()];
                m.stiffness().mul_vec(f.values(), &mut y);
                Ok(ScalarField::new(y.iter().zip(m.mass()).map(|(s, w)| -s / w).collect()))
            }
        }
    }

    /// The metric g in the grid's frame.
    pub fn canonical_metric(&self) -> TensorField {
        match self {
            Grid::Periodic(g) => TensorField::identity(g.node_count(), g.dim()),
            Grid::Mesh(m) => m.first_fundamental_form(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::{cos, sin, PI};
    use crate::spaces::TrigPolynomial;

    #[test]
    fn torus_quadrature_is_exact_for_trig_products() {
        let s = ModelSpace::flat_torus(&[2.0 * PI, 3.0]).unwrap();
        let g = Grid::Periodic(PeriodicGrid::new(&s, &[16, 12]).unwrap());
        let total: f64 = g.weights().iter().sum();
        assert!((total - 6.0 * PI).abs() < 1e-12);
        let pg = g.as_periodic().unwrap();
        let w = 2.0 * PI / 3.0;
        let f = pg.sample(|x| cos(3.0 * x[0]) * sin(2.0 * w * x[1]));
        let h = pg.sample(|x| cos(3.0 * x[0]) * sin(2.0 * w * x[1]) + 0.5);
        let ip = g.inner(&f, &h).unwrap();
        assert!((ip - 6.0 * PI / 4.0).abs() < 1e-12);
    }

    #[test]
    fn gradient_and_carre_du_champ_on_circle() {
        let s = ModelSpace::circle(2.0 * PI).unwrap();
        let g = Grid::Periodic(PeriodicGrid::new(&s, &[32]).unwrap());
        let pg = g.as_periodic().unwrap();
        let f1 = pg.sample(|x| cos(x[0]));
        let f2 = pg.sample(|x| sin(x[0]));
        let gamma = g.carre_du_champ(&f1, &f2).unwrap();
        for i in 0..32 {
            let x = pg.coords(i)[0];
            assert!((gamma.values()[i] + sin(x) * cos(x)).abs() < 1e-13);
        }
    }

    #[test]
    fn weighted_laplacian_is_sturm_liouville() {
        let phi = TrigPolynomial::new(0.0, vec![0.5], vec![]);
        let s = ModelSpace::weighted_circle(2.0 * PI, phi).unwrap();
        let pg = PeriodicGrid::new(&s, &[128]).unwrap();
        let f = pg.sample(|x| sin(2.0 * x[0]));
        let lap = pg.laplacian(&f).unwrap();
        for i in 0..128 {
            let x = pg.coords(i)[0];
            // f″ − φ′f′ with φ′ = −0.5 sin x.
            let want = -4.0 * sin(2.0 * x) + 0.5 * sin(x) * 2.0 * cos(2.0 * x);
            assert!((lap.values()[i] - want).abs() < 1e-10);
        }
    }
}
