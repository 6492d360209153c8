//! Volume-density estimates, the non-collapse constant, the classifier and
//! convergence studies.

use alloc::string::String;
use alloc::vec::Vec;
use alloc::{format, vec};

use crate::error::{invalid, Error, Result};
use crate::field::{ScalarField, TensorField};
use crate::math::{ln, powf, powi, sqrt};
use crate::metric::{canonical_metric, constants, hs_distance, omega, rescaled_ball, rescaled_bgg};
use crate::operators::{trace_residual_mode, witten_prediction};
use crate::spaces::{Grid, Location, Space};
use crate::spectral::{diag_heat_field, SpectralBasis};

/// Ratio curves r ↦ 𝔪(B_r(x))/(ω_n rⁿ) at sampled locations and their r → 0 limits.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DensityEstimate {
    pub n: usize,
    pub radii: Vec<f64>,
    /// ratios[k][j]: location k, radius j.
    pub ratios: Vec<Vec<f64>>,
    pub theta: Vec<f64>,
    /// Number of (smallest) radii used by the linear fit.
    pub fit_points: usize,
    /// Largest rms misfit of the linear fit, relative to the intercept.
    pub fit_residual: f64,
    pub mean: f64,
    pub coefficient_of_variation: f64,
}

fn check_radii(space: &Space, radii: &[f64]) -> Result<()> {
    if radii.is_empty() {
        return Err(invalid("r_grid", "empty radius grid"));
    }
    if radii.iter().any(|r| !(*r > 0.0) || !r.is_finite()) {
        return Err(invalid("r_grid", "radii must be positive and finite"));
    }
    if radii.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(invalid("r_grid", "radii must be strictly decreasing"));
    }
    if !(radii[0] < 0.5 * space.metadata().diameter) {
        return Err(invalid("r_grid", "largest radius must stay below half the diameter"));
    }
    Ok(())
}

/// Ordinary least squares y ≈ a + b·x. Returns (a, b, rms misfit).
fn line_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let m = x.len() as f64;
    let mx = x.iter().sum::<f64>() / m;
    let my = y.iter().sum::<f64>() / m;
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let b = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let a = my - b * mx;
    let rss: f64 = x.iter().zip(y).map(|(u, v)| (v - a - b * u) * (v - a - b * u)).sum();
    (a, b, sqrt(rss / m))
}

/// Log-log slope of positive samples; `None` with fewer than two usable points.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> Option<f64> {
    let (lx, ly): (Vec<f64>, Vec<f64>) = x
        .iter()
        .zip(y)
        .filter(|(a, b)| **a > 0.0 && **b > 0.0 && b.is_finite())
        .map(|(a, b)| (ln(*a), ln(*b)))
        .unzip();
    if lx.len() < 2 {
        return None;
    }
    Some(line_fit(&lx, &ly).1)
}

/// Locations used for ball-volume sampling: every `stride`-th grid node.
pub fn sample_locations(grid: &Grid, stride: usize) -> Vec<Location> {
    (0..grid.node_count()).step_by(stride.max(1)).map(|i| grid.location(i)).collect()
}

/// Geometric radius grid from `r_max` down to `r_max·ratio`, `count` points.
pub fn geometric_radii(r_max: f64, ratio: f64, count: usize) -> Vec<f64> {
    if count < 2 {
        return vec![r_max];
    }
    let q = powf(ratio, 1.0 / (count - 1) as f64);
    (0..count).map(|k| r_max * powi(q, k as i32)).collect()
}

pub fn volume_density(space: &Space, locations: &[Location], n: usize, radii: &[f64]) -> Result<DensityEstimate> {
    check_radii(space, radii)?;
    if radii.len() < 3 {
        return Err(invalid("r_grid", "at least three radii are needed to extrapolate r → 0"));
    }
    if n == 0 {
        return Err(invalid("n", "dimension must be positive"));
    }
    if locations.is_empty() {
        return Err(invalid("locations", "no sample locations"));
    }
    let w = omega(n);
    let r_min = *radii.last().unwrap();
    let mut fit_points = radii.iter().filter(|r| **r <= 10.0 * r_min * (1.0 + 1e-12)).count();
    if fit_points < 3 {
        fit_points = 3;
    }
    let fit_r = &radii[radii.len() - fit_points..];
    let homogeneous = space.is_homogeneous();
    let mut ratios: Vec<Vec<f64>> = Vec::with_capacity(locations.len());
    let mut theta = Vec::with_capacity(locations.len());
    let mut fit_residual: f64 = 0.0;
    for (k, x) in locations.iter().enumerate() {
        if homogeneous && k > 0 {
            ratios.push(ratios[0].clone());
            theta.push(theta[0]);
            continue;
        }
        let curve: Vec<f64> = radii
            .iter()
            .map(|&r| Ok(space.ball_volume(x, r)? / (w * powi(r, n as i32))))
            .collect::<Result<_>>()?;
        let (a, _, rms) = line_fit(fit_r, &curve[radii.len() - fit_points..]);
        fit_residual = fit_residual.max(rms / a.abs().max(f64::MIN_POSITIVE));
        ratios.push(curve);
        theta.push(a);
    }
    let m = theta.len() as f64;
    let mean = theta.iter().sum::<f64>() / m;
    let var = theta.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / m;
    let coefficient_of_variation = if mean != 0.0 { sqrt(var) / mean.abs() } else { f64::INFINITY };
    Ok(DensityEstimate {
        n,
        radii: radii.to_vec(),
        ratios,
        theta,
        fit_points,
        fit_residual,
        mean,
        coefficient_of_variation,
    })
}

/// inf over sampled (x, r) of 𝔪(B_r(x))/rⁿ.
pub fn noncollapse_constant(space: &Space, locations: &[Location], n: usize, radii: &[f64]) -> Result<f64> {
    check_radii(space, radii)?;
    let homogeneous = space.is_homogeneous();
    let mut best = f64::INFINITY;
    for x in locations.iter().take(if homogeneous { 1 } else { usize::MAX }) {
        for &r in radii {
            best = best.min(space.ball_volume(x, r)? / powi(r, n as i32));
        }
    }
    if !best.is_finite() {
        return Err(invalid("locations", "no sample locations"));
    }
    Ok(best.max(0.0))
}

/// Log-log slope of the mean ball volume in r, rounded to the nearest dimension.
pub fn estimate_dimension(space: &Space, locations: &[Location], radii: &[f64]) -> Result<(f64, usize)> {
    check_radii(space, radii)?;
    if locations.is_empty() {
        return Err(invalid("locations", "no sample locations"));
    }
    let take = if space.is_homogeneous() { 1 } else { locations.len() };
    let mean: Vec<f64> = radii
        .iter()
        .map(|&r| {
            let s: Result<f64> = locations[..take].iter().map(|x| space.ball_volume(x, r)).sum();
            Ok(s? / take as f64)
        })
        .collect::<Result<_>>()?;
    let slope = loglog_slope(radii, &mean).ok_or_else(|| invalid("r_grid", "need two radii"))?;
    let rounded = (slope + 0.5) as usize;
    Ok((slope, rounded.max(1)))
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct Thresholds {
    /// (1a): ‖Δφ − tr Hess φ‖/‖Δφ‖ per eigenfunction.
    pub trace_residual: f64,
    /// Coefficient of variation of θ.
    pub density_cv: f64,
    /// (1b): noncollapse constant relative to 𝔪(X)/diamⁿ.
    pub noncollapse_relative: f64,
    /// Largest tolerated orthonormality defect of the checked modes.
    pub orthonormality: f64,
    /// Largest tolerated rms misfit of the density extrapolation.
    pub density_fit: f64,
    /// Nonconstant eigenfunctions checked for (1a).
    pub max_modes: usize,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            trace_residual: 1e-4,
            density_cv: 1e-2,
            noncollapse_relative: 1e-3,
            orthonormality: 1e-8,
            density_fit: 1e-2,
            max_modes: 20,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum Verdict {
    ConsistentWithNoncollapsed,
    CollapsedOrWeighted,
    Inconclusive,
}

impl Verdict {
    pub fn as_str(&self) -> &'static str {
        match self {
            Verdict::ConsistentWithNoncollapsed => "consistent-with-noncollapsed",
            Verdict::CollapsedOrWeighted => "collapsed-or-weighted",
            Verdict::Inconclusive => "inconclusive",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ModeEvidence {
    pub mode: usize,
    pub lambda: f64,
    pub trace_residual: f64,
    /// ‖⟨∇φ, ∇f⟩‖/‖Δf‖, zero on unweighted spaces.
    pub drift_prediction: f64,
    /// ∫ φ_i θ⁻¹ d𝔪.
    pub hausdorff_mean: f64,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ClassificationReport {
    pub space: String,
    pub n: usize,
    pub n_estimated: Option<f64>,
    pub modes: Vec<ModeEvidence>,
    pub noncollapse_constant: f64,
    pub noncollapse_relative: f64,
    pub density: DensityEstimate,
    pub orthonormality_defect: f64,
    pub thresholds: Thresholds,
    pub condition_1a: bool,
    pub condition_1b: bool,
    pub density_flat: bool,
    pub numerics_ok: bool,
    pub notes: Vec<String>,
    pub verdict: Verdict,
}

impl ClassificationReport {
    pub fn max_trace_residual(&self) -> f64 {
        self.modes.iter().map(|m| m.trace_residual).fold(0.0, f64::max)
    }
}

/// The verdict from the recorded evidence alone.
pub fn decide(numerics_ok: bool, condition_1a: bool, condition_1b: bool, density_flat: bool) -> Verdict {
    if !numerics_ok {
        Verdict::Inconclusive
    } else if condition_1a && condition_1b && density_flat {
        Verdict::ConsistentWithNoncollapsed
    } else {
        Verdict::CollapsedOrWeighted
    }
}

/// θ at every grid node, reusing one evaluation on homogeneous spaces.
fn density_on_grid(space: &Space, grid: &Grid, n: usize, radii: &[f64]) -> Result<DensityEstimate> {
    let locations = sample_locations(grid, 1);
    volume_density(space, &locations, n, radii)
}

/// Default radii: twelve geometric steps from min(1, diam/4) down by two decades.
pub fn default_radii(space: &Space) -> Vec<f64> {
    let top = space.metadata().diameter * 0.25;
    geometric_radii(if top < 1.0 { top } else { 1.0 }, 1e-2, 12)
}

pub fn classify(basis: &SpectralBasis, n: Option<usize>, radii: &[f64], thresholds: &Thresholds) -> Result<ClassificationReport> {
    let space = basis.space();
    let grid = basis.grid();
    if grid.as_periodic().is_none() {
        return Err(crate::error::capability(
            "the classifier needs pointwise Hessians for the trace identity; meshes only carry the weak form",
        ));
    }
    let mut notes = Vec::new();
    let locations = sample_locations(grid, 1);
    let (n, n_estimated) = match n {
        Some(n) => (n, None),
        None => {
            let (slope, n) = estimate_dimension(space, &locations, radii)?;
            notes.push(format!("dimension estimated from ball growth: slope {slope:.4}"));
            (n, Some(slope))
        }
    };
    let count = basis.mode_count().min(thresholds.max_modes + 1);
    if count < 2 {
        return Err(invalid("mode_count", "the classifier needs at least one nonconstant mode"));
    }
    let density = density_on_grid(space, grid, n, radii)?;
    let inv_theta = ScalarField::new(density.theta.iter().map(|v| 1.0 / v).collect());
    let mut modes = Vec::with_capacity(count - 1);
    for i in 1..count {
        let phi = basis.mode(i);
        modes.push(ModeEvidence {
            mode: i,
            lambda: basis.lambdas()[i],
            trace_residual: trace_residual_mode(basis, i)?,
            drift_prediction: witten_prediction(basis, i)?,
            hausdorff_mean: grid.inner(&phi, &inv_theta)?,
        });
    }
    let c = noncollapse_constant(space, &locations, n, radii)?;
    let scale = space.total_measure() / powi(space.metadata().diameter, n as i32);
    let noncollapse_relative = c / scale;
    let orthonormality_defect = basis.orthonormality_defect(count);

    let condition_1a = modes.iter().all(|m| m.trace_residual <= thresholds.trace_residual);
    let condition_1b = noncollapse_relative >= thresholds.noncollapse_relative;
    let density_flat = density.coefficient_of_variation <= thresholds.density_cv;
    let mut numerics_ok = true;
    if !(orthonormality_defect <= thresholds.orthonormality) {
        numerics_ok = false;
        notes.push(format!("orthonormality defect {orthonormality_defect:.3e} above threshold"));
    }
    if !(density.fit_residual <= thresholds.density_fit) || density.theta.iter().any(|v| !(*v > 0.0)) {
        numerics_ok = false;
        notes.push(format!("density extrapolation misfit {:.3e} above threshold", density.fit_residual));
    }
    notes.push(format!("checked eigenfunctions 1..{}", count - 1));
    let verdict = decide(numerics_ok, condition_1a, condition_1b, density_flat);
    Ok(ClassificationReport {
        space: space.label(),
        n,
        n_estimated,
        modes,
        noncollapse_constant: c,
        noncollapse_relative,
        density,
        orthonormality_defect,
        thresholds: *thresholds,
        condition_1a,
        condition_1b,
        density_flat,
        numerics_ok,
        notes,
        verdict,
    })
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CurvePoint {
    pub t: f64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ConvergenceCurve {
    /// "ball", "bgg" or "diag".
    pub quantity: String,
    pub p: Option<f64>,
    pub points: Vec<CurvePoint>,
    /// Log-log slope over the in-regime points.
    pub slope: Option<f64>,
}

impl ConvergenceCurve {
    pub fn values(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.value).collect()
    }

    pub fn times(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.t).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct StudyWarning {
    pub t: f64,
    pub quantity: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ConvergenceStudy {
    pub n: usize,
    pub c_n: f64,
    pub curves: Vec<ConvergenceCurve>,
    pub warnings: Vec<StudyWarning>,
    /// Times beyond diameter², kept in the curves but left out of slopes.
    pub out_of_regime: Vec<f64>,
}

impl ConvergenceStudy {
    pub fn curve(&self, quantity: &str, p: Option<f64>) -> Option<&ConvergenceCurve> {
        self.curves.iter().find(|c| c.quantity == quantity && c.p == p)
    }
}

/// dℋⁿ/d𝔪 at every node: the inverse measure density of the backend.
fn hausdorff_density(grid: &Grid) -> ScalarField {
    match grid.as_periodic().and_then(|g| g.density()) {
        Some(d) => ScalarField::new(d.iter().map(|v| 1.0 / v).collect()),
        None => ScalarField::constant(grid.node_count(), 1.0),
    }
}

fn drop_point(warnings: &mut Vec<StudyWarning>, t: f64, quantity: &str, e: &Error) {
    warnings.push(StudyWarning {
        t,
        quantity: String::from(quantity),
        message: format!("{e}"),
    });
}

/// Curves of hs_distance(rescaled_ball(t), c_n g, p), hs_distance(rescaled_bgg(t),
/// c_n θ⁻¹ g, p) and sup_x t^{(n+2)/2} p(x,x,t) over `times`. Points whose series
/// are under-resolved are dropped with a warning.
pub fn convergence_study(basis: &SpectralBasis, times: &[f64], p_list: &[f64]) -> Result<ConvergenceStudy> {
    if times.is_empty() {
        return Err(invalid("t_grid", "empty time grid"));
    }
    if times.iter().any(|t| !(*t > 0.0) || !t.is_finite()) {
        return Err(invalid("t_grid", "times must be positive and finite"));
    }
    if p_list.iter().any(|p| !(*p >= 1.0) || !p.is_finite()) {
        return Err(invalid("p_list", "exponents must be finite and ≥ 1"));
    }
    let space = basis.space();
    let grid = basis.grid();
    let n = space.metadata().n;
    let consts = constants(n)?;
    let c_n = consts.c_n;
    let g = canonical_metric(grid);
    let ball_ref = g.scaled(c_n);
    let bgg_ref: TensorField = g.scaled_by(&hausdorff_density(grid))?.scaled(c_n);
    let diameter = space.metadata().diameter;

    let mut ball: Vec<ConvergenceCurve> = p_list
        .iter()
        .map(|&p| ConvergenceCurve { quantity: "ball".into(), p: Some(p), points: Vec::new(), slope: None })
        .collect();
    let mut bgg = ball.clone();
    bgg.iter_mut().for_each(|c| c.quantity = "bgg".into());
    let mut diag = ConvergenceCurve { quantity: "diag".into(), p: None, points: Vec::new(), slope: None };
    let mut warnings = Vec::new();
    let mut out_of_regime = Vec::new();

    for &t in times {
        if t > diameter * diameter {
            out_of_regime.push(t);
        }
        match rescaled_ball(basis, t) {
            Ok(field) => {
                for (curve, &p) in ball.iter_mut().zip(p_list) {
                    let value = hs_distance(grid, &field, &ball_ref, p)?;
                    curve.points.push(CurvePoint { t, value });
                }
            }
            Err(e) => drop_point(&mut warnings, t, "ball", &e),
        }
        match rescaled_bgg(basis, t) {
            Ok(field) => {
                for (curve, &p) in bgg.iter_mut().zip(p_list) {
                    let value = hs_distance(grid, &field, &bgg_ref, p)?;
                    curve.points.push(CurvePoint { t, value });
                }
            }
            Err(e) => drop_point(&mut warnings, t, "bgg", &e),
        }
        match diag_heat_field(basis, t) {
            Ok(field) => {
                let scale = powf(t, 0.5 * (n as f64 + 2.0));
                let value = field.values().iter().fold(f64::NEG_INFINITY, |m, v| m.max(*v)) * scale;
                diag.points.push(CurvePoint { t, value });
            }
            Err(e) => drop_point(&mut warnings, t, "diag", &e),
        }
    }

    let mut curves: Vec<ConvergenceCurve> = ball.into_iter().chain(bgg).chain(core::iter::once(diag)).collect();
    for c in curves.iter_mut() {
        let (ts, vs): (Vec<f64>, Vec<f64>) = c
            .points
            .iter()
            .filter(|p| !out_of_regime.contains(&p.t))
            .map(|p| (p.t, p.value))
            .unzip();
        c.slope = loglog_slope(&ts, &vs);
    }
    Ok(ConvergenceStudy { n, c_n, curves, warnings, out_of_regime })
}

/// True when `values` never increase by more than `floor` from one entry to the next.
pub fn is_nonincreasing(values: &[f64], floor: f64) -> bool {
    values.windows(2).all(|w| w[1] <= w[0] + floor)
}
