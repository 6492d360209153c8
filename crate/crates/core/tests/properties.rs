use std::f64::consts::PI;

use heatlens_core::diagnostics::{geometric_radii, loglog_slope, noncollapse_constant};
use heatlens_core::field::{packed_len, ScalarField, TensorField};
use heatlens_core::metric::{constants, hs_distance, omega, pullback_metric};
use heatlens_core::spaces::{ball_in_box, Location, ModelSpace, Space, TrigPolynomial};
use heatlens_core::spectral::{compute_basis, heat_kernel, heat_kernel_slice, SpectralBasis, TruncationPolicy};
use proptest::prelude::*;

fn circle_basis() -> SpectralBasis {
    let s: Space = ModelSpace::circle(2.0 * PI).unwrap().into();
    compute_basis(&s, 161).unwrap()
}

fn torus_basis() -> SpectralBasis {
    let s: Space = ModelSpace::flat_torus(&[2.0 * PI, 3.0]).unwrap().into();
    compute_basis(&s, 800).unwrap()
}

// Image sum on the circle of length 2π.
fn circle_kernel_images(x: f64, y: f64, t: f64) -> f64 {
    (-40..=40)
        .map(|n| {
            let d = x - y + 2.0 * PI * n as f64;
            (-d * d / (4.0 * t)).exp()
        })
        .sum::<f64>()
        / (4.0 * PI * t).sqrt()
}

// Modified Bessel I₀ by its power series.
fn bessel_i0(x: f64) -> f64 {
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..60 {
        term *= (0.5 * x) * (0.5 * x) / (k * k) as f64;
        sum += term;
    }
    sum
}

#[test]
fn circle_kernel_matches_images() {
    let b = circle_basis();
    let m = b.grid().node_count();
    for &t in &[0.05, 0.1, 0.5] {
        for &(x, y) in &[(0, 0), (0, 7), (3, m / 2), (m - 1, 1)] {
            let h = 2.0 * PI / m as f64;
            let exact = circle_kernel_images(h * x as f64, h * y as f64, t);
            let got = heat_kernel(&b, x, y, t).unwrap();
            assert!((got - exact).abs() <= 1e-12 * exact.max(1.0), "t={t} x={x} y={y}: {got} vs {exact}");
        }
    }
}

#[test]
fn weighted_circle_mass() {
    let phi = TrigPolynomial::new(0.0, vec![0.5], vec![]);
    let s = ModelSpace::weighted_circle(2.0 * PI, phi).unwrap();
    let exact = 2.0 * PI * bessel_i0(0.5);
    assert!((s.total_measure() - exact).abs() <= 1e-12 * exact, "{} vs {exact}", s.total_measure());
}

#[test]
fn omega_recurrence_and_small_values() {
    assert!((omega(1) - 2.0).abs() < 1e-15);
    assert!((omega(2) - PI).abs() < 1e-15);
    for n in 3..10 {
        let rec = 2.0 * PI / n as f64 * omega(n - 2);
        assert!((omega(n) - rec).abs() <= 1e-14 * rec);
    }
    // c_n = ω_n (2π)^{n/2} / (4 (4π)^n).
    for n in 1..=6 {
        let c = constants(n).unwrap().c_n;
        let closed = omega(n) * (2.0 * PI).powf(0.5 * n as f64) / (4.0 * (4.0 * PI).powi(n as i32));
        assert!((c - closed).abs() <= 1e-12 * closed);
    }
}

#[test]
fn thin_torus_constant_decreases_with_width() {
    let radii = geometric_radii(1.0, 1e-2, 10);
    let at = [Location::Point(vec![0.0, 0.0])];
    let mut last = f64::INFINITY;
    for eps in [0.4, 0.2, 0.1, 0.05, 0.025] {
        let s: Space = ModelSpace::flat_torus(&[2.0 * PI, 2.0 * PI * eps]).unwrap().into();
        let c = noncollapse_constant(&s, &at, 2, &radii).unwrap();
        assert!(c < last);
        last = c;
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn kernel_is_symmetric_and_conserves_mass(x in 0usize..64, y in 0usize..64, t in 0.05f64..2.0) {
        let b = circle_basis();
        let m = b.grid().node_count();
        let (x, y) = (x * m / 64, y * m / 64);
        prop_assert_eq!(heat_kernel(&b, x, y, t).unwrap().to_bits(), heat_kernel(&b, y, x, t).unwrap().to_bits());
        let slice = heat_kernel_slice(&b, y, t).unwrap();
        let mass = b.grid().integrate(&slice).unwrap();
        prop_assert!((mass - 1.0).abs() < 1e-12, "mass {}", mass);
    }

    #[test]
    fn kernel_semigroup(x in 0usize..32, y in 0usize..32, s in 0.05f64..0.5, t in 0.05f64..0.5) {
        let b = circle_basis();
        let m = b.grid().node_count();
        let (x, y) = (x * m / 32, y * m / 32);
        let px = heat_kernel_slice(&b, x, s).unwrap();
        let py = heat_kernel_slice(&b, y, t).unwrap();
        let lhs = b.grid().inner(&px, &py).unwrap();
        let rhs = heat_kernel(&b, x, y, s + t).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-12 * rhs.abs().max(1.0));
    }

    #[test]
    fn pullback_metric_is_psd(t in 0.1f64..1.0) {
        let b = torus_basis();
        let g = pullback_metric(&b, t).unwrap();
        for n in (0..g.nodes()).step_by(97) {
            prop_assert!(g.min_eigenvalue_at(n) >= -1e-14 * g.max_eigenvalue_at(n));
        }
    }

    #[test]
    fn hs_distance_is_a_metric(seed in proptest::collection::vec(-1.0f64..1.0, 3 * 16 * packed_len(2)), p in 1.0f64..4.0) {
        let b = torus_basis();
        let grid = b.grid();
        let nodes = grid.node_count();
        let w = packed_len(2);
        let field = |k: usize| {
            let data = (0..nodes * w).map(|i| seed[k * 16 * w + i % (16 * w)]).collect();
            TensorField::from_packed(2, data).unwrap()
        };
        let (a, bb, c) = (field(0), field(1), field(2));
        let dab = hs_distance(grid, &a, &bb, p).unwrap();
        let dba = hs_distance(grid, &bb, &a, p).unwrap();
        let dac = hs_distance(grid, &a, &c, p).unwrap();
        let dcb = hs_distance(grid, &c, &bb, p).unwrap();
        prop_assert!(hs_distance(grid, &a, &a, p).unwrap() == 0.0);
        prop_assert!((dab - dba).abs() <= 1e-12 * dab.max(1e-300));
        prop_assert!(dab <= dac + dcb + 1e-12 * (dac + dcb));
    }

    #[test]
    fn remix_leaves_metric_unchanged(seed in any::<u64>(), t in 0.1f64..1.0) {
        let b = torus_basis();
        let g = pullback_metric(&b, t).unwrap();
        let h = pullback_metric(&b.remix_degenerate(seed).unwrap(), t).unwrap();
        let d = h.difference(&g).unwrap();
        for n in 0..g.nodes() {
            prop_assert!(d.hs_norm_at(n) <= 1e-12 * g.hs_norm_at(n));
        }
    }

    #[test]
    fn tails_shrink_with_time_and_modes(lam in 10.0f64..1e4, n in 1usize..4, t in 1e-3f64..1.0) {
        let p = TruncationPolicy { mode_count: 10, lambda_max: lam, n, tolerance: 1e-10 };
        let q = TruncationPolicy { lambda_max: 2.0 * lam, ..p.clone() };
        prop_assert!(p.tail_bound(2.0 * t) <= p.tail_bound(t));
        prop_assert!(q.tail_bound(t) <= p.tail_bound(t));
        prop_assert!(p.derivative_tail_bound(2.0 * t) <= p.derivative_tail_bound(t));
        prop_assert!(p.tail_bound(t) <= p.derivative_tail_bound(t) + 1e-300);
    }

    #[test]
    fn ball_volume_is_monotone_and_capped(r in 0.01f64..3.0, hx in 0.1f64..3.0, hy in 0.1f64..3.0) {
        let small = ball_in_box(r, &[hx, hy]);
        let big = ball_in_box(1.1 * r, &[hx, hy]);
        prop_assert!(small <= big * (1.0 + 1e-14));
        prop_assert!(small <= 4.0 * hx * hy * (1.0 + 1e-14));
        prop_assert!(small <= PI * r * r * (1.0 + 1e-14));
    }

    #[test]
    fn slope_recovers_power_laws(k in -3.0f64..3.0, a in 0.1f64..10.0) {
        let x: Vec<f64> = (1..12).map(|i| 0.01 * 1.5f64.powi(i)).collect();
        let y: Vec<f64> = x.iter().map(|v| a * v.powf(k)).collect();
        prop_assert!((loglog_slope(&x, &y).unwrap() - k).abs() < 1e-10);
    }

    #[test]
    fn scalar_combine_is_linear(v in proptest::collection::vec(-1e3f64..1e3, 1..50), a in -5.0f64..5.0) {
        let f = ScalarField::new(v.clone());
        let g = f.combine(a, &f, 1.0 - a).unwrap();
        for (x, y) in g.values().iter().zip(&v) {
            prop_assert!((x - y).abs() <= 1e-12 * (1.0 + y.abs()) * (1.0 + a.abs()));
        }
    }
}
