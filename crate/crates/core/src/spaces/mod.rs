//! Model spaces, triangle meshes and the quadrature grids they are sampled on.

mod geodesic;
mod grid;
mod mesh;
mod primitives;

use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec::Vec;

use crate::error::{invalid, Result};
use crate::math::{cos, exp, sin, sqrt, PI};
use crate::quad;

pub use grid::{Grid, PeriodicGrid};
pub use mesh::DiscreteSpace;
pub use primitives::{icosphere, octahedron};

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SpaceMetadata {
    pub n: usize,
    pub curvature_lower: f64,
    pub dimension_upper: f64,
    pub diameter: f64,
}

impl SpaceMetadata {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(invalid("n", "dimension must be at least 1"));
        }
        if !(self.dimension_upper >= self.n as f64) {
            return Err(invalid("dimension_upper", "must be at least n"));
        }
        if !(self.diameter.is_finite() && self.diameter > 0.0) {
            return Err(invalid("diameter", "must be positive and finite"));
        }
        if self.curvature_lower.is_nan() {
            return Err(invalid("curvature_lower", "is NaN"));
        }
        Ok(())
    }
}

/// φ(θ) = a₀ + Σ_k a_k cos(kωθ) + b_k sin(kωθ) with ω = 2π/L.
#[derive(Debug, Clone, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TrigPolynomial {
    #[cfg_attr(feature = "serde", serde(default))]
    pub constant: f64,
    #[cfg_attr(feature = "serde", serde(default))]
    pub cos: Vec<f64>,
    #[cfg_attr(feature = "serde", serde(default))]
    pub sin: Vec<f64>,
}

impl TrigPolynomial {
    pub fn new(constant: f64, cos: Vec<f64>, sin: Vec<f64>) -> Self {
        Self { constant, cos, sin }
    }

    pub fn order(&self) -> usize {
        self.cos.len().max(self.sin.len())
    }

    pub fn is_constant(&self) -> bool {
        self.cos.iter().chain(&self.sin).all(|&c| c == 0.0)
    }

    /// Value and first two derivatives at θ.
    pub fn eval_with_derivatives(&self, theta: f64, omega: f64) -> [f64; 3] {
        let mut out = [self.constant, 0.0, 0.0];
        for k in 1..=self.order() {
            let a = self.cos.get(k - 1).copied().unwrap_or(0.0);
            let b = self.sin.get(k - 1).copied().unwrap_or(0.0);
            let w = k as f64 * omega;
            let (c, s) = (cos(w * theta), sin(w * theta));
            out[0] += a * c + b * s;
            out[1] += w * (-a * s + b * c);
            out[2] -= w * w * (a * c + b * s);
        }
        out
    }

    pub fn eval(&self, theta: f64, omega: f64) -> f64 {
        self.eval_with_derivatives(theta, omega)[0]
    }

    fn validate(&self) -> Result<()> {
        if !self.constant.is_finite() || self.cos.iter().chain(&self.sin).any(|c| !c.is_finite()) {
            return Err(invalid("log_density", "coefficients must be finite"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum ModelVariant {
    Circle { length: f64 },
    FlatTorus { lengths: Vec<f64> },
    WeightedCircle { length: f64, log_density: TrigPolynomial },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpace {
    variant: ModelVariant,
    lengths: Vec<f64>,
    metadata: SpaceMetadata,
    total: f64,
}

/// Where a ball is centred: coordinates on a model space or a mesh vertex.
#[derive(Debug, Clone, PartialEq)]
pub enum Location {
    Point(Vec<f64>),
    Vertex(usize),
}

const QUAD_TOL: f64 = 1e-13;

pub fn make_model_space(variant: ModelVariant) -> Result<ModelSpace> {
    let lengths = match &variant {
        ModelVariant::Circle { length } => alloc::vec![*length],
        ModelVariant::FlatTorus { lengths } => lengths.clone(),
        ModelVariant::WeightedCircle { length, log_density } => {
            log_density.validate()?;
            alloc::vec![*length]
        }
    };
    if lengths.is_empty() {
        return Err(invalid("lengths", "at least one period is required"));
    }
    if let Some(bad) = lengths.iter().find(|l| !(l.is_finite() && **l > 0.0)) {
        return Err(invalid("lengths", alloc::format!("period {bad} is not a positive finite number")));
    }
    let n = lengths.len();
    let diameter = 0.5 * sqrt(lengths.iter().map(|l| l * l).sum());
    let (curvature_lower, dimension_upper) = match &variant {
        ModelVariant::WeightedCircle { length, log_density } if !log_density.is_constant() => {
            // Bakry–Émery bound φ'' − φ'²/(N−1) ≥ K sampled with N = 2.
            let omega = 2.0 * PI / length;
            let samples = 64 * (log_density.order() + 1);
            let k = (0..samples)
                .map(|i| {
                    let d = log_density.eval_with_derivatives(length * i as f64 / samples as f64, omega);
                    d[2] - d[1] * d[1]
                })
                .fold(f64::INFINITY, f64::min);
            (k, 2.0)
        }
        _ => (0.0, n as f64),
    };
    let mut space = ModelSpace {
        variant,
        lengths,
        metadata: SpaceMetadata {
            n,
            curvature_lower,
            dimension_upper,
            diameter,
        },
        total: 0.0,
    };
    space.total = match &space.variant {
        ModelVariant::WeightedCircle { length, .. } => {
            let breaks = interval_breaks(0.0, *length, space.weight_order());
            quad::integrate_with_breaks(|x| space.density(x), &breaks, QUAD_TOL)
        }
        _ => space.lengths.iter().product(),
    };
    Ok(space)
}

impl ModelSpace {
    pub fn circle(length: f64) -> Result<Self> {
        make_model_space(ModelVariant::Circle { length })
    }

    pub fn flat_torus(lengths: &[f64]) -> Result<Self> {
        make_model_space(ModelVariant::FlatTorus {
            lengths: lengths.to_vec(),
        })
    }

    pub fn weighted_circle(length: f64, log_density: TrigPolynomial) -> Result<Self> {
        make_model_space(ModelVariant::WeightedCircle { length, log_density })
    }

    pub fn variant(&self) -> &ModelVariant {
        &self.variant
    }

    pub fn lengths(&self) -> &[f64] {
        &self.lengths
    }

    pub fn dim(&self) -> usize {
        self.lengths.len()
    }

    pub fn metadata(&self) -> &SpaceMetadata {
        &self.metadata
    }

    pub fn total_measure(&self) -> f64 {
        self.total
    }

    pub fn log_density(&self) -> Option<&TrigPolynomial> {
        match &self.variant {
            ModelVariant::WeightedCircle { log_density, .. } => Some(log_density),
            _ => None,
        }
    }

    /// Translation invariant (measure and metric both).
    pub fn is_homogeneous(&self) -> bool {
        self.log_density().map_or(true, |p| p.is_constant())
    }

    /// e^{−φ} at a point of a weighted circle, 1 otherwise.
    pub fn density(&self, theta: f64) -> f64 {
        match self.log_density() {
            Some(p) => exp(-p.eval(theta, 2.0 * PI / self.lengths[0])),
            None => 1.0,
        }
    }

    /// (φ, φ′, φ″) at θ; zero on unweighted spaces.
    pub fn log_density_derivatives(&self, theta: f64) -> [f64; 3] {
        match self.log_density() {
            Some(p) => p.eval_with_derivatives(theta, 2.0 * PI / self.lengths[0]),
            None => [0.0; 3],
        }
    }

    fn weight_order(&self) -> usize {
        self.log_density().map_or(0, |p| p.order())
    }

    pub fn distance(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        self.check_point(x)?;
        self.check_point(y)?;
        let mut s = 0.0;
        for ((a, b), l) in x.iter().zip(y).zip(&self.lengths) {
            let d = (a - b) % l;
            let d = if d < 0.0 { d + l } else { d };
            let d = d.min(l - d);
            s += d * d;
        }
        Ok(sqrt(s))
    }

    /// 𝔪(B_r(x)).
    pub fn ball_volume(&self, x: &[f64], r: f64) -> Result<f64> {
        self.check_point(x)?;
        if !(r > 0.0) || !r.is_finite() {
            return Err(invalid("r", "radius must be positive and finite"));
        }
        Ok(match &self.variant {
            ModelVariant::Circle { length } => (2.0 * r).min(*length),
            ModelVariant::FlatTorus { lengths } => {
                let halves: Vec<f64> = lengths.iter().map(|l| 0.5 * l).collect();
                ball_in_box(r, &halves)
            }
            ModelVariant::WeightedCircle { length, .. } => {
                if 2.0 * r >= *length {
                    self.total
                } else {
                    let x0 = x[0];
                    let breaks = interval_breaks(x0 - r, x0 + r, self.weight_order());
                    quad::integrate_with_breaks(|s| self.density(s), &breaks, QUAD_TOL)
                }
            }
        })
    }

    fn check_point(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() || x.iter().any(|v| !v.is_finite()) {
            return Err(invalid("x", alloc::format!("expected {} finite coordinates", self.dim())));
        }
        Ok(())
    }
}

fn interval_breaks(a: f64, b: f64, order: usize) -> Vec<f64> {
    let pieces = 4 * order.max(1);
    (0..=pieces).map(|i| a + (b - a) * i as f64 / pieces as f64).collect()
}

/// Volume of the Euclidean r-ball intersected with the centred box Π[−h_j, h_j].
/// This is the metric ball of a flat torus with half-periods h_j.
pub fn ball_in_box(r: f64, halves: &[f64]) -> f64 {
    let n = halves.len();
    if halves.iter().all(|&h| r <= h) {
        return crate::metric::omega(n) * crate::math::powi(r, n as i32);
    }
    if halves.iter().map(|h| h * h).sum::<f64>() <= r * r {
        return halves.iter().map(|h| 2.0 * h).product();
    }
    match n {
        1 => 2.0 * r.min(halves[0]),
        2 => disc_in_rectangle(r, halves[0], halves[1]),
        _ => {
            let c = r.min(halves[0]);
            let mut breaks = alloc::vec![-c, 0.0, c];
            // The slice radius crosses each remaining half-width at u = ±√(r² − h²).
            for h in &halves[1..] {
                if *h < r {
                    let u = sqrt(r * r - h * h);
                    if u < c {
                        breaks.push(u);
                        breaks.push(-u);
                    }
                }
            }
            breaks.sort_by(|a, b| a.partial_cmp(b).unwrap());
            breaks.dedup();
            let rest = &halves[1..];
            quad::integrate_with_breaks(
                |u| {
                    let rr = r * r - u * u;
                    if rr <= 0.0 {
                        0.0
                    } else {
                        ball_in_box(sqrt(rr), rest)
                    }
                },
                &breaks,
                1e-13,
            )
        }
    }
}

fn disc_in_rectangle(r: f64, a: f64, b: f64) -> f64 {
    let c = r.min(a);
    let u_star = if r > b { sqrt(r * r - b * b) } else { 0.0 };
    let m = c.min(u_star);
    let prim = |u: f64| {
        let s = sqrt((r * r - u * u).max(0.0));
        0.5 * (u * s + r * r * crate::math::asin((u / r).clamp(-1.0, 1.0)))
    };
    4.0 * (b * m + prim(c) - prim(m))
}

/// Any space the toolkit can sample.
#[derive(Debug, Clone)]
pub enum Space {
    Model(ModelSpace),
    Discrete(Arc<DiscreteSpace>),
}

impl From<ModelSpace> for Space {
    fn from(s: ModelSpace) -> Self {
        Space::Model(s)
    }
}

impl From<DiscreteSpace> for Space {
    fn from(s: DiscreteSpace) -> Self {
        Space::Discrete(Arc::new(s))
    }
}

impl Space {
    pub fn metadata(&self) -> &SpaceMetadata {
        match self {
            Space::Model(m) => m.metadata(),
            Space::Discrete(d) => d.metadata(),
        }
    }

    pub fn total_measure(&self) -> f64 {
        match self {
            Space::Model(m) => m.total_measure(),
            Space::Discrete(d) => d.total_measure(),
        }
    }

    pub fn ball_volume(&self, x: &Location, r: f64) -> Result<f64> {
        match (self, x) {
            (Space::Model(m), Location::Point(p)) => m.ball_volume(p, r),
            (Space::Discrete(d), Location::Vertex(v)) => d.ball_volume(*v, r),
            _ => Err(invalid("x", "location kind does not match the space")),
        }
    }

    pub fn is_homogeneous(&self) -> bool {
        matches!(self, Space::Model(m) if m.is_homogeneous())
    }

    pub fn as_model(&self) -> Option<&ModelSpace> {
        match self {
            Space::Model(m) => Some(m),
            Space::Discrete(_) => None,
        }
    }

    pub fn as_discrete(&self) -> Option<&DiscreteSpace> {
        match self {
            Space::Discrete(d) => Some(d),
            Space::Model(_) => None,
        }
    }

    /// Short human-readable label used in reports.
    pub fn label(&self) -> String {
        use alloc::format;
        match self {
            Space::Model(m) => match m.variant() {
                ModelVariant::Circle { length } => format!("circle(L={length})"),
                ModelVariant::FlatTorus { lengths } => format!("flat_torus(L={lengths:?})"),
                ModelVariant::WeightedCircle { length, .. } => format!("weighted_circle(L={length})"),
            },
            Space::Discrete(d) => format!("mesh(V={}, F={})", d.vertex_count(), d.face_count()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn circle_basics() {
        let s = ModelSpace::circle(2.0 * PI).unwrap();
        assert_eq!(s.metadata().n, 1);
        assert!((s.total_measure() - 2.0 * PI).abs() < 1e-15);
        assert!((s.metadata().diameter - PI).abs() < 1e-15);
        assert_eq!(s.ball_volume(&[1.0], 0.3).unwrap(), 0.6);
        assert_eq!(s.ball_volume(&[1.0], 10.0).unwrap(), 2.0 * PI);
    }

    #[test]
    fn rejects_bad_lengths() {
        assert!(ModelSpace::flat_torus(&[]).is_err());
        assert!(ModelSpace::flat_torus(&[1.0, -1.0]).is_err());
        assert!(ModelSpace::circle(0.0).is_err());
        assert!(ModelSpace::circle(f64::NAN).is_err());
        assert!(ModelSpace::circle(1.0).unwrap().ball_volume(&[0.0], 0.0).is_err());
    }

    #[test]
    fn torus_ball_is_euclidean_below_half_period() {
        let s = ModelSpace::flat_torus(&[2.0 * PI, 2.0 * PI]).unwrap();
        assert!((s.total_measure() - 4.0 * PI * PI).abs() < 1e-12);
        let v = s.ball_volume(&[0.3, 0.1], 0.5).unwrap();
        assert!((v - PI * 0.25).abs() <= 1e-12 * v);
    }

    #[test]
    fn disc_in_rectangle_limits() {
        // Whole rectangle once r exceeds the half-diagonal.
        assert!((ball_in_box(10.0, &[1.0, 2.0]) - 8.0).abs() < 1e-12);
        // Thin strip: 2r·2h minus caps.
        let h = 0.1;
        let r = 1.0;
        let exact = 4.0 * (h * sqrt(r * r - h * h) * 0.5 + 0.5 * r * r * libm::asin(h / r));
        assert!((ball_in_box(r, &[5.0, h]) - exact).abs() < 1e-12);
    }

    #[test]
    fn three_torus_ball_matches_monte_carlo_free_limits() {
        let halves = [1.0, 1.0, 1.0];
        assert!((ball_in_box(0.5, &halves) - 4.0 / 3.0 * PI * 0.125).abs() < 1e-12);
        assert!((ball_in_box(2.0, &halves) - 8.0).abs() < 1e-9);
        // A slab: all of the ball between two planes at ±h.
        let h = 0.4;
        let r = 1.0;
        let slab = PI * (2.0 * h * r * r - 2.0 * h * h * h / 3.0);
        assert!((ball_in_box(r, &[h, 5.0, 5.0]) - slab).abs() < 1e-9);
    }

    #[test]
    fn weighted_circle_measure_matches_bessel() {
        let phi = TrigPolynomial::new(0.0, vec![0.5], vec![]);
        let s = ModelSpace::weighted_circle(2.0 * PI, phi).unwrap();
        // 2π I₀(0.5) from the power series Σ (x/2)^{2k}/(k!)².
        let mut term = 1.0;
        let mut i0 = 0.0;
        for k in 0..30 {
            if k > 0 {
                term *= 0.0625 / (k * k) as f64;
            }
            i0 += term;
        }
        assert!((s.total_measure() - 2.0 * PI * i0).abs() < 1e-12);
        assert!(!s.is_homogeneous());
        let v = s.ball_volume(&[0.0], 0.1).unwrap();
        let mid: f64 = (0..2000)
            .map(|i| {
                let x = -0.1 + 0.2 * (i as f64 + 0.5) / 2000.0;
                libm::exp(-0.5 * libm::cos(x)) * 0.2 / 2000.0
            })
            .sum();
        assert!((v - mid).abs() < 1e-8);
    }

    #[test]
    fn torus_distance_wraps() {
        let s = ModelSpace::flat_torus(&[1.0, 2.0]).unwrap();
        let d = s.distance(&[0.05, 0.0], &[0.95, 1.9]).unwrap();
        assert!((d - sqrt(0.01 + 0.01)).abs() < 1e-14);
    }
}
