//! Carré du champ, the polarized Hessian, the drift field, Δᵗ and the
//! integration-by-parts and Witten residuals.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{capability, Result};
use crate::field::{check_nodes, packed_index, CovectorField, ScalarField, TensorField};
use crate::math::{exp, sqrt};
use crate::metric::pullback_metric;
use crate::spaces::{Grid, PeriodicGrid};
use crate::spectral::{diag_heat_time_derivative_field, diag_laplacian_field, SpectralBasis};

pub fn carre_du_champ(grid: &Grid, f1: &ScalarField, f2: &ScalarField) -> Result<ScalarField> {
    grid.carre_du_champ(f1, f2)
}

fn periodic(grid: &Grid) -> Result<&PeriodicGrid> {
    grid.as_periodic()
        .ok_or_else(|| capability("pointwise Hessians need a grid with second derivatives; meshes only carry the weak form"))
}

/// Hess f from ⟨Hess f, da⊗db⟩ = ½(⟨∇a, ∇Γ(f,b)⟩ + ⟨∇b, ∇Γ(f,a)⟩ − ⟨∇f, ∇Γ(a,b)⟩)
/// with a, b running over the coordinate angles, whose differentials are the
/// frame covectors.
pub fn hessian(grid: &Grid, f: &ScalarField) -> Result<TensorField> {
    let g = periodic(grid)?;
    let n = g.dim();
    let nodes = g.node_count();
    let grad_f = g.gradient(f)?;
    let coords: Vec<CovectorField> = (0..n)
        .map(|j| {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            CovectorField::uniform(nodes, &e)
        })
        .collect();
    // ∇Γ(f, x_j) for every axis.
    let grad_gamma_f: Vec<CovectorField> = coords
        .iter()
        .map(|c| g.gradient(&grad_f.dot(c)?))
        .collect::<Result<_>>()?;
    let mut out = TensorField::zeros(nodes, n);
    for a in 0..n {
        for b in a..n {
            let gamma_ab = coords[a].dot(&coords[b])?;
            let grad_ab = g.gradient(&gamma_ab)?;
            let t1 = coords[a].dot(&grad_gamma_f[b])?;
            let t2 = coords[b].dot(&grad_gamma_f[a])?;
            let t3 = grad_f.dot(&grad_ab)?;
            for node in 0..nodes {
                let v = 0.5 * (t1.values()[node] + t2.values()[node] - t3.values()[node]);
                out.set(node, a, b, v);
            }
        }
    }
    Ok(out)
}

/// tr Hess f = ⟨Hess f, g⟩.
pub fn trace_hessian(grid: &Grid, f: &ScalarField) -> Result<ScalarField> {
    let h = hessian(grid, f)?;
    h.inner(&grid.canonical_metric())
}

/// Δf for the measure of the space.
pub fn laplacian(grid: &Grid, f: &ScalarField) -> Result<ScalarField> {
    grid.laplacian(f)
}

/// ¼∇_x Δ_x p(x, x, 2t), summed mode by mode as
/// Σ e^{−2λt}(−λφ∇φ + Hess φ(∇φ)).
#[derive(Debug, Clone, PartialEq)]
pub struct DriftField {
    pub t: f64,
    pub covectors: CovectorField,
}

pub fn drift_field(basis: &SpectralBasis, t: f64) -> Result<DriftField> {
    periodic(basis.grid())?;
    basis.truncation().check_derivative(2.0 * t)?;
    let grid = basis.grid();
    let n = grid.frame_dim();
    let nodes = grid.node_count();
    let mut out = CovectorField::zeros(nodes, n);
    for (i, &lam) in basis.lambdas().iter().enumerate().skip(1) {
        let w = exp(-2.0 * lam * t);
        if w == 0.0 {
            continue;
        }
        basis.visit_mode(i, true, |node, phi, gr, h| {
            let slot = out.at_mut(node);
            for a in 0..n {
                let hv: f64 = (0..n).map(|b| h[packed_index(n, a, b)] * gr[b]).sum();
                slot[a] += w * (-lam * phi * gr[a] + hv);
            }
        })?;
    }
    Ok(DriftField { t, covectors: out })
}

/// Δᵗ with g_t and the drift precomputed for one t.
#[derive(Debug, Clone)]
pub struct TwistedLaplacian {
    t: f64,
    metric: TensorField,
    drift: DriftField,
}

impl TwistedLaplacian {
    pub fn new(basis: &SpectralBasis, t: f64) -> Result<Self> {
        periodic(basis.grid())?;
        Ok(Self {
            t,
            metric: pullback_metric(basis, t)?,
            drift: drift_field(basis, t)?,
        })
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn metric(&self) -> &TensorField {
        &self.metric
    }

    pub fn drift(&self) -> &DriftField {
        &self.drift
    }

    /// Δᵗf = ⟨Hess f, g_t⟩ + ⟨drift, ∇f⟩.
    pub fn apply(&self, grid: &Grid, f: &ScalarField) -> Result<ScalarField> {
        self.apply_to_derivatives(&hessian(grid, f)?, &grid.gradient(f)?)
    }

    /// Δᵗf from precomputed Hess f and ∇f.
    pub fn apply_to_derivatives(&self, hess: &TensorField, grad: &CovectorField) -> Result<ScalarField> {
        let contraction = hess.inner(&self.metric)?;
        let pairing = self.drift.covectors.dot(grad)?;
        contraction.combine(1.0, &pairing, 1.0)
    }
}

pub fn delta_t(basis: &SpectralBasis, f: &ScalarField, t: f64) -> Result<ScalarField> {
    TwistedLaplacian::new(basis, t)?.apply(basis.grid(), f)
}

/// Two sides of an identity with the residual convention |L − R|/(|L| + |R| + 1).
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct IdentityCheck {
    pub lhs: f64,
    pub rhs: f64,
}

impl IdentityCheck {
    pub fn absolute(&self) -> f64 {
        (self.lhs - self.rhs).abs()
    }

    pub fn relative(&self) -> f64 {
        self.absolute() / (self.lhs.abs() + self.rhs.abs() + 1.0)
    }

    pub fn passes(&self, tolerance: f64) -> bool {
        self.relative() <= tolerance
    }
}

/// ∫⟨g_t, dψ⊗df⟩ d𝔪 against −∫ψ Δᵗf d𝔪.
pub fn ibp_residual(basis: &SpectralBasis, f: &ScalarField, psi: &ScalarField, t: f64) -> Result<IdentityCheck> {
    ibp_residual_with(&TwistedLaplacian::new(basis, t)?, basis.grid(), f, psi)
}

pub fn ibp_residual_with(op: &TwistedLaplacian, grid: &Grid, f: &ScalarField, psi: &ScalarField) -> Result<IdentityCheck> {
    let df = grid.gradient(f)?;
    let dpsi = grid.gradient(psi)?;
    let g = op.metric();
    let pairing = ScalarField::from_fn(grid.node_count(), |node| g.contract(node, dpsi.at(node), df.at(node)));
    let lhs = grid.integrate(&pairing)?;
    let dt = op.apply(grid, f)?;
    let rhs = -grid.inner(psi, &dt)?;
    Ok(IdentityCheck { lhs, rhs })
}

/// All mode values, mode-major, for the double-integral checks.
fn mode_table(basis: &SpectralBasis) -> Result<Vec<ScalarField>> {
    (0..basis.mode_count()).map(|i| Ok(basis.mode(i))).collect()
}

fn kernel_slice(modes: &[ScalarField], lambdas: &[f64], y: usize, t: f64) -> ScalarField {
    let nodes = modes[0].len();
    let mut out = vec![0.0; nodes];
    for (m, &lam) in modes.iter().zip(lambdas) {
        let c = exp(-lam * t) * m.values()[y];
        out.iter_mut().zip(m.values()).for_each(|(o, v)| *o += c * v);
    }
    ScalarField::new(out)
}

/// div(ψ∇f) = Γ(ψ, f) + ψΔf.
fn divergence_of_product(grid: &Grid, f: &ScalarField, psi: &ScalarField) -> Result<ScalarField> {
    let gamma = grid.carre_du_champ(psi, f)?;
    let lap = grid.laplacian(f)?;
    let prod = psi.zip_with(&lap, |a, b| a * b)?;
    gamma.combine(1.0, &prod, 1.0)
}

fn check_pairs(grid: &Grid, pairs: &[(ScalarField, ScalarField)]) -> Result<()> {
    for (f, psi) in pairs {
        check_nodes(f.len(), grid.node_count())?;
        check_nodes(psi.len(), grid.node_count())?;
    }
    Ok(())
}

/// ∫∫ψ(x)⟨∇_x p, ∇_x⟨∇_x p, ∇f⟩⟩ d𝔪(x)d𝔪(y) against
/// −∫⟨g_t, df⊗dψ⟩ d𝔪 + ¼∫div(ψ∇f) ∂_t[p(x,x,2t)] d𝔪.
/// Costs one kernel slice per node, so it is meant for one-dimensional grids.
pub fn transport_identity(basis: &SpectralBasis, f: &ScalarField, psi: &ScalarField, t: f64) -> Result<IdentityCheck> {
    Ok(transport_identities(basis, &[(f.clone(), psi.clone())], t)?[0])
}

/// [`transport_identity`] for many (f, ψ) pairs sharing the kernel slices.
pub fn transport_identities(basis: &SpectralBasis, pairs: &[(ScalarField, ScalarField)], t: f64) -> Result<Vec<IdentityCheck>> {
    let grid = basis.grid();
    periodic(grid)?;
    basis.truncation().check_derivative(2.0 * t)?;
    check_pairs(grid, pairs)?;
    let modes = mode_table(basis)?;
    let dfs: Vec<CovectorField> = pairs.iter().map(|(f, _)| grid.gradient(f)).collect::<Result<_>>()?;
    let w = grid.weights();
    let mut lhs = vec![0.0; pairs.len()];
    for y in 0..grid.node_count() {
        let p = kernel_slice(&modes, basis.lambdas(), y, t);
        let dp = grid.gradient(&p)?;
        for (k, (_, psi)) in pairs.iter().enumerate() {
            let h = dp.dot(&dfs[k])?;
            let dh = grid.gradient(&h)?;
            let inner = dp.dot(&dh)?;
            lhs[k] += w[y] * grid.inner(psi, &inner)?;
        }
    }
    let g = pullback_metric(basis, t)?;
    let ddt = diag_heat_time_derivative_field(basis, 2.0 * t)?.map(|v| 2.0 * v);
    let mut out = Vec::with_capacity(pairs.len());
    for (k, (f, psi)) in pairs.iter().enumerate() {
        let df = &dfs[k];
        let dpsi = grid.gradient(psi)?;
        let metric_term = ScalarField::from_fn(grid.node_count(), |n| g.contract(n, df.at(n), dpsi.at(n)));
        let div = divergence_of_product(grid, f, psi)?;
        let rhs = -grid.integrate(&metric_term)? + 0.25 * grid.inner(&div, &ddt)?;
        out.push(IdentityCheck { lhs: lhs[k], rhs });
    }
    Ok(out)
}

/// −½∫∫ψ(x)⟨∇f, ∇_x|∇_x p|²⟩ d𝔪(x)d𝔪(y) against
/// −¼∫div(ψ∇f) ∂_t[p(x,x,2t)] d𝔪 + ¼∫div(ψ∇f) Δ_x p(x,x,2t) d𝔪.
pub fn energy_identity(basis: &SpectralBasis, f: &ScalarField, psi: &ScalarField, t: f64) -> Result<IdentityCheck> {
    Ok(energy_identities(basis, &[(f.clone(), psi.clone())], t)?[0])
}

/// [`energy_identity`] for many (f, ψ) pairs sharing the kernel slices.
pub fn energy_identities(basis: &SpectralBasis, pairs: &[(ScalarField, ScalarField)], t: f64) -> Result<Vec<IdentityCheck>> {
    let grid = basis.grid();
    periodic(grid)?;
    basis.truncation().check_derivative(2.0 * t)?;
    check_pairs(grid, pairs)?;
    let modes = mode_table(basis)?;
    let dfs: Vec<CovectorField> = pairs.iter().map(|(f, _)| grid.gradient(f)).collect::<Result<_>>()?;
    let w = grid.weights();
    let mut lhs = vec![0.0; pairs.len()];
    for y in 0..grid.node_count() {
        let p = kernel_slice(&modes, basis.lambdas(), y, t);
        let energy = grid.carre_du_champ(&p, &p)?;
        let de = grid.gradient(&energy)?;
        for (k, (_, psi)) in pairs.iter().enumerate() {
            let pairing = dfs[k].dot(&de)?;
            lhs[k] += -0.5 * w[y] * grid.inner(psi, &pairing)?;
        }
    }
    let ddt = diag_heat_time_derivative_field(basis, 2.0 * t)?.map(|v| 2.0 * v);
    let lap = diag_laplacian_field(basis, 2.0 * t)?;
    let mut out = Vec::with_capacity(pairs.len());
    for (k, (f, psi)) in pairs.iter().enumerate() {
        let div = divergence_of_product(grid, f, psi)?;
        let rhs = -0.25 * grid.inner(&div, &ddt)? + 0.25 * grid.inner(&div, &lap)?;
        out.push(IdentityCheck { lhs: lhs[k], rhs });
    }
    Ok(out)
}

fn relative_l2(grid: &Grid, residual: &ScalarField, reference: &ScalarField) -> Result<f64> {
    let den = grid.l2_norm(reference)?;
    let num = grid.l2_norm(residual)?;
    if den <= 1e-14 * (1.0 + num) || den == 0.0 {
        // Δf vanishes (f constant): nothing to compare.
        return Ok(0.0);
    }
    Ok(num / den)
}

/// ‖Δf − tr Hess f‖ / ‖Δf‖ for a given Δf.
pub fn trace_residual(grid: &Grid, f: &ScalarField, laplacian_f: &ScalarField) -> Result<f64> {
    let tr = trace_hessian(grid, f)?;
    let diff = laplacian_f.combine(1.0, &tr, -1.0)?;
    relative_l2(grid, &diff, laplacian_f)
}

/// ‖Δf − tr Hess f + ⟨∇φ, ∇f⟩‖ / ‖Δf‖ for a given Δf, with e^{−φ} the
/// density of the measure (φ = 0 on unweighted grids).
pub fn witten_residual_with(grid: &Grid, f: &ScalarField, laplacian_f: &ScalarField) -> Result<f64> {
    let g = periodic(grid)?;
    let tr = trace_hessian(grid, f)?;
    let drift = g.log_density_gradient().dot(&g.gradient(f)?)?;
    let mut diff = laplacian_f.combine(1.0, &tr, -1.0)?;
    diff = diff.combine(1.0, &drift, 1.0)?;
    relative_l2(grid, &diff, laplacian_f)
}

/// Witten residual of a test field, Δf by spectral differentiation.
pub fn witten_residual(grid: &Grid, f: &ScalarField) -> Result<f64> {
    let lap = grid.laplacian(f)?;
    witten_residual_with(grid, f, &lap)
}

/// Witten residual of eigenfunction `mode`, using Δφ = −λφ.
pub fn witten_residual_mode(basis: &SpectralBasis, mode: usize) -> Result<f64> {
    let phi = basis.mode(mode);
    let lam = basis.lambdas()[mode];
    witten_residual_with(basis.grid(), &phi, &phi.map(|v| -lam * v))
}

/// ‖Δφ − tr Hess φ‖ / ‖Δφ‖ for eigenfunction `mode`.
pub fn trace_residual_mode(basis: &SpectralBasis, mode: usize) -> Result<f64> {
    let phi = basis.mode(mode);
    let lam = basis.lambdas()[mode];
    trace_residual(basis.grid(), &phi, &phi.map(|v| -lam * v))
}

/// ‖⟨∇φ, ∇f⟩‖ / ‖Δf‖: the gap the Witten identity predicts between Δf and tr Hess f.
pub fn witten_prediction(basis: &SpectralBasis, mode: usize) -> Result<f64> {
    let g = periodic(basis.grid())?;
    let phi = basis.mode(mode);
    let lam = basis.lambdas()[mode];
    let drift = g.log_density_gradient().dot(&basis.mode_gradient(mode)?)?;
    relative_l2(basis.grid(), &drift, &phi.map(|v| -lam * v))
}

/// ∫|Hess f|²_HS d𝔪 and ∫((Δf)² − K|∇f|²) d𝔪.
pub fn bochner_sides(grid: &Grid, f: &ScalarField, curvature_lower: f64) -> Result<(f64, f64)> {
    let h = hessian(grid, f)?;
    let hs2 = h.inner(&h)?;
    let lap = grid.laplacian(f)?;
    let gamma = grid.carre_du_champ(f, f)?;
    let rhs = lap.zip_with(&gamma, |l, g| l * l - curvature_lower * g)?;
    Ok((grid.integrate(&hs2)?, grid.integrate(&rhs)?))
}

/// L² norm helper used by reports.
pub fn l2_norm(grid: &Grid, f: &ScalarField) -> Result<f64> {
    Ok(sqrt(grid.inner(f, f)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::{cos, sin, PI};
    use crate::spaces::{ModelSpace, Space, TrigPolynomial};
    use crate::spectral::{compute_basis, compute_basis_with, default_mode_count, BasisOptions};

    fn circle_basis(t_min: f64) -> SpectralBasis {
        let s: Space = ModelSpace::circle(2.0 * PI).unwrap().into();
        compute_basis(&s, default_mode_count(&s, t_min).unwrap()).unwrap()
    }

    #[test]
    fn hessian_of_cosine() {
        let b = circle_basis(0.05);
        let pg = b.grid().as_periodic().unwrap();
        let f = pg.sample(|x| cos(x[0]));
        let h = hessian(b.grid(), &f).unwrap();
        for node in 0..h.nodes() {
            assert!((h.get(node, 0, 0) + f.values()[node]).abs() < 1e-12);
        }
    }

    #[test]
    fn delta_t_of_cosine_on_circle() {
        let b = circle_basis(0.05);
        let t = 0.05;
        let pg = b.grid().as_periodic().unwrap();
        let f = pg.sample(|x| cos(x[0]));
        let dt = delta_t(&b, &f, t).unwrap();
        let c: f64 = (1..100).map(|k| (k * k) as f64 * exp(-2.0 * (k * k) as f64 * t)).sum::<f64>() / PI;
        for node in 0..dt.len() {
            assert!((dt.values()[node] + c * f.values()[node]).abs() < 1e-11 * c);
        }
        assert!(drift_field(&b, t).unwrap().covectors.max_norm() < 1e-10);
    }

    #[test]
    fn ibp_on_circle_trig_pair() {
        let b = circle_basis(0.05);
        let pg = b.grid().as_periodic().unwrap();
        let f = pg.sample(|x| cos(x[0]));
        let psi = pg.sample(|x| cos(2.0 * x[0]));
        let check = ibp_residual(&b, &f, &psi, 0.05).unwrap();
        assert!(check.passes(1e-10), "{check:?}");
        let one = ScalarField::constant(f.len(), 1.0);
        let check = ibp_residual(&b, &f, &one, 0.05).unwrap();
        assert!(check.absolute() < 1e-10);
    }

    #[test]
    fn lemmas_on_circle() {
        let b = circle_basis(0.05);
        let pg = b.grid().as_periodic().unwrap();
        let f = pg.sample(|x| sin(x[0]) + 0.3 * cos(3.0 * x[0]));
        let psi = pg.sample(|x| cos(2.0 * x[0]) + 0.5);
        let a = transport_identity(&b, &f, &psi, 0.05).unwrap();
        assert!(a.passes(1e-10), "{a:?}");
        let c = energy_identity(&b, &f, &psi, 0.05).unwrap();
        assert!(c.passes(1e-10), "{c:?}");
    }

    #[test]
    fn witten_on_weighted_circle() {
        let phi = TrigPolynomial::new(0.0, vec![0.5], vec![]);
        let s: Space = ModelSpace::weighted_circle(2.0 * PI, phi).unwrap().into();
        let b = compute_basis_with(
            &s,
            6,
            &BasisOptions {
                grid: Some(vec![1024]),
                ..Default::default()
            },
        )
        .unwrap();
        for i in 1..6 {
            let r = witten_residual_mode(&b, i).unwrap();
            assert!(r < 1e-2, "mode {i}: {r}");
            assert!(trace_residual_mode(&b, i).unwrap() > 0.05);
        }
        assert_eq!(witten_residual_mode(&b, 0).unwrap(), 0.0);
    }
}
