//! Canonical and pull-back metrics, their rescalings and the dimensional constants.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{invalid, shape, Result};
use crate::field::{packed_len, ScalarField, TensorField};
use crate::math::{exp, powf, powi, PI};
use crate::quad;
use crate::spaces::{Grid, Space};
use crate::spectral::SpectralBasis;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Constants {
    pub n: usize,
    pub omega_n: f64,
    pub c_n: f64,
}

/// ω_n = π^{n/2}/Γ(n/2 + 1).
pub fn omega(n: usize) -> f64 {
    powf(PI, 0.5 * n as f64) / crate::math::gamma_half_plus_one(n)
}

/// ω_n and c_n = ω_n (4π)^{−n} ∫ |∂_{x₁} e^{−|x|²/4}|² dx, the integral
/// evaluated as a product of one-dimensional quadratures.
pub fn constants(n: usize) -> Result<Constants> {
    if n == 0 {
        return Err(invalid("n", "dimension must be at least 1"));
    }
    let tol = 1e-14;
    let derivative = quad::integrate_real_line(|x| 0.25 * x * x * exp(-0.5 * x * x), tol);
    let gaussian = quad::integrate_real_line(|x| exp(-0.5 * x * x), tol);
    let omega_n = omega(n);
    let integral = derivative * powi(gaussian, n as i32 - 1);
    Ok(Constants {
        n,
        omega_n,
        c_n: omega_n / powi(4.0 * PI, n as i32) * integral,
    })
}

/// g in the grid frame.
pub fn canonical_metric(grid: &Grid) -> TensorField {
    grid.canonical_metric()
}

/// g_t = Σ_{i≥1} e^{−2λ_i t} dφ_i ⊗ dφ_i.
pub fn pullback_metric(basis: &SpectralBasis, t: f64) -> Result<TensorField> {
    basis.truncation().check_derivative(2.0 * t)?;
    let grid = basis.grid();
    let nodes = grid.node_count();
    match grid {
        Grid::Periodic(_) => {
            let dim = grid.frame_dim();
            let mut out = TensorField::zeros(nodes, dim);
            for (i, &lam) in basis.lambdas().iter().enumerate().skip(1) {
                let w = exp(-2.0 * lam * t);
                if w == 0.0 {
                    continue;
                }
                basis.visit_mode(i, false, |node, _, g, _| out.add_outer(node, g, w))?;
            }
            Ok(out)
        }
        Grid::Mesh(mesh) => {
            let faces = mesh.face_count();
            let mut per_face = vec![[0.0; 6]; faces];
            for (i, &lam) in basis.lambdas().iter().enumerate().skip(1) {
                let w = exp(-2.0 * lam * t);
                if w == 0.0 {
                    continue;
                }
                let v = basis.mode(i);
                for (f, acc) in per_face.iter_mut().enumerate() {
                    let g = mesh.face_gradient(f, v.values());
                    let mut k = 0;
                    for a in 0..3 {
                        for b in a..3 {
                            acc[k] += w * g[a] * g[b];
                            k += 1;
                        }
                    }
                }
            }
            Ok(mesh.project_to_frames(&mesh.average_to_vertices(&per_face)))
        }
    }
}

/// ω_n t^{(n+2)/2} g_t.
pub fn rescaled_bgg(basis: &SpectralBasis, t: f64) -> Result<TensorField> {
    let n = basis.space().metadata().n;
    let g = pullback_metric(basis, t)?;
    Ok(g.scaled(omega(n) * powf(t, 0.5 * (n as f64 + 2.0))))
}

/// 𝔪(B_√t(x)) at every node.
pub fn ball_volume_field(space: &Space, grid: &Grid, r: f64) -> Result<ScalarField> {
    let nodes = grid.node_count();
    if space.is_homogeneous() {
        let v = space.ball_volume(&grid.location(0), r)?;
        return Ok(ScalarField::constant(nodes, v));
    }
    let values: Vec<f64> = (0..nodes)
        .map(|i| space.ball_volume(&grid.location(i), r))
        .collect::<Result<_>>()?;
    Ok(ScalarField::new(values))
}

/// t·𝔪(B_√t(x))·g_t.
pub fn rescaled_ball(basis: &SpectralBasis, t: f64) -> Result<TensorField> {
    let diameter = basis.space().metadata().diameter;
    let r = crate::math::sqrt(t);
    if !(r < 0.5 * diameter) {
        return Err(invalid("t", "√t must stay below half the diameter"));
    }
    let g = pullback_metric(basis, t)?;
    let vol = ball_volume_field(basis.space(), basis.grid(), r)?;
    g.scaled_by(&vol.map(|v| t * v))
}

/// (∫ |A − B|^p_HS d𝔪)^{1/p} with the grid quadrature weights.
pub fn hs_distance(grid: &Grid, a: &TensorField, b: &TensorField, p: f64) -> Result<f64> {
    if !(p >= 1.0) || !p.is_finite() {
        return Err(invalid("p", "exponent must be a finite number ≥ 1"));
    }
    if a.nodes() != grid.node_count() || b.nodes() != grid.node_count() || a.dim() != b.dim() {
        return Err(shape("tensor fields do not live on the same grid"));
    }
    let w = grid.weights();
    let width = packed_len(a.dim());
    let mut s = 0.0;
    let mut diff = vec![0.0; width];
    for node in 0..grid.node_count() {
        for ((d, x), y) in diff.iter_mut().zip(a.packed(node)).zip(b.packed(node)) {
            *d = x - y;
        }
        let norm = crate::math::sqrt(crate::field::hs_inner(a.dim(), &diff, &diff));
        s += w[node] * powf(norm, p);
    }
    Ok(powf(s, 1.0 / p))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spaces::ModelSpace;
    use crate::spectral::{compute_basis, default_mode_count};

    #[test]
    fn omega_small_dimensions() {
        assert!((omega(1) - 2.0).abs() < 1e-15);
        assert!((omega(2) - PI).abs() < 1e-15);
        assert!((omega(3) - 4.0 * PI / 3.0).abs() < 1e-14);
        assert!(constants(0).is_err());
    }

    #[test]
    fn circle_metric_is_constant() {
        let s: Space = ModelSpace::circle(2.0 * PI).unwrap().into();
        let b = compute_basis(&s, default_mode_count(&s, 0.1).unwrap()).unwrap();
        let g = pullback_metric(&b, 0.1).unwrap();
        let want: f64 = (1..200).map(|k| (k * k) as f64 * exp(-0.2 * (k * k) as f64)).sum::<f64>() / PI;
        for node in 0..g.nodes() {
            assert!((g.get(node, 0, 0) - want).abs() < 1e-12 * want);
        }
    }

    #[test]
    fn hs_distance_of_metric_to_zero() {
        let s: Space = ModelSpace::flat_torus(&[2.0, 3.0]).unwrap().into();
        let b = compute_basis(&s, 9).unwrap();
        let g = canonical_metric(b.grid());
        let zero = TensorField::zeros(g.nodes(), 2);
        let d = hs_distance(b.grid(), &g, &zero, 2.0).unwrap();
        assert!((d - (2.0f64 * 6.0).sqrt()).abs() < 1e-12);
        assert_eq!(hs_distance(b.grid(), &g, &g, 1.0).unwrap(), 0.0);
    }
}
