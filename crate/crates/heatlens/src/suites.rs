//! The six experiment suites. Each writes JSON and CSV into the output
//! directory and reports whether its assertions held.

use std::path::PathBuf;

use heatlens_core::diagnostics::{
    classify, convergence_study, default_radii, is_nonincreasing, ClassificationReport, ConvergenceStudy,
};
use heatlens_core::field::{ScalarField, TensorField};
use heatlens_core::metric::{canonical_metric, constants, pullback_metric, rescaled_bgg};
use heatlens_core::operators::{
    energy_identities, hessian, transport_identities, trace_residual_mode, witten_prediction, witten_residual_mode,
    IdentityCheck, TwistedLaplacian,
};
use heatlens_core::spaces::Space;
use heatlens_core::spectral::{
    compute_basis_with, default_mode_count, growth_fit, heat_kernel_slice, BasisOptions, GrowthFit, SpectralBasis,
    TruncationPolicy,
};
use heatlens_core::Error;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::error::{CliError, CliResult};
use crate::formats::{
    export_basis, export_tensor, records_to_csv, study_to_csv, write_json, write_text, Provenance, ResidualRecord,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Suite {
    Spectrum,
    Metric,
    Converge,
    Ibp,
    Witten,
    Collapse,
}

impl Suite {
    pub fn name(&self) -> &'static str {
        match self {
            Suite::Spectrum => "spectrum",
            Suite::Metric => "metric",
            Suite::Converge => "converge",
            Suite::Ibp => "ibp",
            Suite::Witten => "witten",
            Suite::Collapse => "collapse",
        }
    }
}

/// A validated configuration with its space and resolved mode count.
pub struct Prepared {
    pub config: ExperimentConfig,
    pub space: Space,
    pub provenance: Provenance,
}

impl Prepared {
    pub fn new(mut config: ExperimentConfig) -> CliResult<Self> {
        config.validate()?;
        let space = config.space.build()?;
        if config.mode_count.is_none() {
            config.mode_count = Some(default_mode_count(&space, config.t_min())?);
        }
        if config.tolerances.truncation.is_none() {
            config.tolerances.truncation = Some(BasisOptions::default().tolerance);
        }
        let provenance = Provenance::new(config.hash());
        Ok(Self { config, space, provenance })
    }

    pub fn mode_count(&self) -> usize {
        self.config.mode_count.unwrap()
    }

    pub fn basis(&self) -> CliResult<SpectralBasis> {
        let options = BasisOptions {
            grid: self.config.grid.clone(),
            tolerance: self.config.tolerances.truncation.unwrap(),
            ..Default::default()
        };
        Ok(compute_basis_with(&self.space, self.mode_count(), &options)?)
    }

    fn require_periodic(&self, what: &str) -> CliResult<()> {
        if self.space.as_discrete().is_some() {
            return Err(Error::Capability(format!(
                "`{what}` needs pointwise Hessians; the mesh backend only carries the weak form"
            ))
            .into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default)]
pub struct Outcome {
    pub files: Vec<PathBuf>,
    pub failures: Vec<String>,
}

impl Outcome {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    #[serde(flatten)]
    provenance: &'a Provenance,
    suite: &'static str,
    config: &'a ExperimentConfig,
    passed: bool,
    failures: &'a [String],
    report: T,
}

fn finish<T: Serialize>(prepared: &Prepared, suite: Suite, report: T, mut outcome: Outcome) -> CliResult<Outcome> {
    let dir = &prepared.config.output_dir;
    let path = dir.join(format!("{}.json", suite.name()));
    let env = Envelope {
        provenance: &prepared.provenance,
        suite: suite.name(),
        config: &prepared.config,
        passed: outcome.passed(),
        failures: &outcome.failures,
        report,
    };
    write_json(&path, &env)?;
    outcome.files.push(path);
    Ok(outcome)
}

pub fn run(suite: Suite, prepared: &Prepared) -> CliResult<Outcome> {
    let dir = &prepared.config.output_dir;
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    write_json(&dir.join("config.resolved.json"), &prepared.config)?;
    match suite {
        Suite::Spectrum => spectrum(prepared),
        Suite::Metric => metric(prepared),
        Suite::Converge => converge(prepared),
        Suite::Ibp => ibp(prepared),
        Suite::Witten => witten(prepared),
        Suite::Collapse => collapse(prepared),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SpectrumReport {
    pub space: String,
    pub mode_count: usize,
    pub grid: Option<Vec<usize>>,
    pub lambdas: Vec<f64>,
    pub truncation: TruncationPolicy,
    pub growth: Option<GrowthFit>,
    pub orthonormality_defect: f64,
    pub max_solver_residual: f64,
    pub constant_mode_defect: f64,
    /// min over y of p(x₀, y, t) for each t of the time grid.
    pub kernel_minimum: Vec<(f64, Option<f64>)>,
}

pub fn spectrum_report(basis: &SpectralBasis, times: &[f64]) -> CliResult<SpectrumReport> {
    let phi0 = basis.mode(0);
    let expected = 1.0 / basis.space().total_measure().sqrt();
    let constant_mode_defect = phi0.values().iter().map(|v| (v - expected).abs() / expected).fold(0.0, f64::max);
    let kernel_minimum = times
        .iter()
        .map(|&t| {
            let v = heat_kernel_slice(basis, 0, t).ok().map(|s| s.values().iter().copied().fold(f64::INFINITY, f64::min));
            (t, v)
        })
        .collect();
    Ok(SpectrumReport {
        space: basis.space().label(),
        mode_count: basis.mode_count(),
        grid: crate::formats::grid_sizes(basis.grid()),
        lambdas: basis.lambdas().to_vec(),
        truncation: basis.truncation().clone(),
        growth: growth_fit(basis).ok(),
        orthonormality_defect: basis.orthonormality_defect(basis.mode_count()),
        max_solver_residual: basis.solver_residuals().iter().copied().fold(0.0, f64::max),
        constant_mode_defect,
        kernel_minimum,
    })
}

fn spectrum(prepared: &Prepared) -> CliResult<Outcome> {
    let basis = prepared.basis()?;
    let report = spectrum_report(&basis, &prepared.config.t_grid)?;
    let dir = &prepared.config.output_dir;
    let mut outcome = Outcome::default();
    if report.orthonormality_defect > 1e-8 {
        outcome.failures.push(format!("orthonormality defect {:.3e} exceeds 1e-8", report.orthonormality_defect));
    }
    if report.lambdas[0].abs() > 1e-10 {
        outcome.failures.push(format!("λ₀ = {:e} is not 0", report.lambdas[0]));
    }
    if report.constant_mode_defect > 1e-10 {
        outcome.failures.push(format!("φ₀ deviates from 𝔪(X)^(-1/2) by {:.3e}", report.constant_mode_defect));
    }
    let mut csv = prepared.provenance.csv_comment();
    csv.push_str("index,lambda\n");
    for (i, l) in report.lambdas.iter().enumerate() {
        csv.push_str(&format!("{i},{l:?}\n"));
    }
    let csv_path = dir.join("spectrum.csv");
    write_text(&csv_path, &csv)?;
    let (bin, side) = export_basis(&basis, &prepared.config.space, &prepared.provenance, dir, "basis")?;
    outcome.files.extend([csv_path, bin, side]);
    finish(prepared, Suite::Spectrum, report, outcome)
}

#[derive(Debug, Clone, Serialize)]
pub struct MetricSlice {
    pub t: f64,
    pub mean_hs_norm: f64,
    /// (max − min)/max of the HS norm over nodes.
    pub spread: f64,
    pub min_eigenvalue: f64,
    pub max_trace: f64,
    /// max over nodes of |ω_n t^{(n+2)/2} g_t − c_n θ⁻¹ g|_HS / c_n.
    pub bgg_max_deviation: f64,
}

/// max over nodes of |a − b|_HS.
pub fn max_node_distance(a: &TensorField, b: &TensorField) -> CliResult<f64> {
    let d = a.difference(b)?;
    Ok((0..d.nodes()).map(|n| d.hs_norm_at(n)).fold(0.0, f64::max))
}

/// c_n θ⁻¹ g with θ the backend's measure density.
pub fn bgg_reference(basis: &SpectralBasis) -> CliResult<TensorField> {
    let grid = basis.grid();
    let c = constants(basis.space().metadata().n)?.c_n;
    let g = canonical_metric(grid);
    let inv = match grid.as_periodic().and_then(|p| p.density()) {
        Some(d) => ScalarField::new(d.iter().map(|v| 1.0 / v).collect()),
        None => ScalarField::constant(grid.node_count(), 1.0),
    };
    Ok(g.scaled_by(&inv)?.scaled(c))
}

pub fn metric_slice(basis: &SpectralBasis, t: f64, reference: &TensorField) -> CliResult<(MetricSlice, TensorField)> {
    let g = pullback_metric(basis, t)?;
    let c = constants(basis.space().metadata().n)?.c_n;
    let nodes = g.nodes();
    let norms: Vec<f64> = (0..nodes).map(|n| g.hs_norm_at(n)).collect();
    let max = norms.iter().copied().fold(0.0, f64::max);
    let min = norms.iter().copied().fold(f64::INFINITY, f64::min);
    let bgg = rescaled_bgg(basis, t)?;
    let slice = MetricSlice {
        t,
        mean_hs_norm: norms.iter().sum::<f64>() / nodes as f64,
        spread: if max > 0.0 { (max - min) / max } else { 0.0 },
        min_eigenvalue: (0..nodes).map(|n| g.min_eigenvalue_at(n)).fold(f64::INFINITY, f64::min),
        max_trace: (0..nodes).map(|n| g.trace_at(n)).fold(0.0, f64::max),
        bgg_max_deviation: max_node_distance(&bgg, reference)? / c,
    };
    Ok((slice, g))
}

fn metric(prepared: &Prepared) -> CliResult<Outcome> {
    let basis = prepared.basis()?;
    let reference = bgg_reference(&basis)?;
    let dir = &prepared.config.output_dir;
    let mut outcome = Outcome::default();
    let results: Vec<CliResult<(MetricSlice, TensorField)>> =
        prepared.config.t_grid.par_iter().map(|&t| metric_slice(&basis, t, &reference)).collect();
    let mut slices = Vec::new();
    for (k, r) in results.into_iter().enumerate() {
        let (slice, g) = r?;
        if slice.min_eigenvalue < -1e-10 * slice.max_trace {
            outcome.failures.push(format!("g_t not positive semidefinite at t = {:e}", slice.t));
        }
        outcome.files.extend(export_tensor(&g, &prepared.provenance, dir, &format!("g_t{k}"))?);
        slices.push(slice);
    }
    finish(prepared, Suite::Metric, slices, outcome)
}

/// Assertions of the convergence suite: on flat model spaces every
/// in-regime rescaled-ball curve must not grow as t decreases.
pub fn converge_failures(study: &ConvergenceStudy, space: &Space) -> Vec<String> {
    let mut failures = Vec::new();
    if !space.is_homogeneous() {
        return failures;
    }
    let floor = 1e-12 * study.c_n * space.total_measure().max(1.0);
    for c in study.curves.iter().filter(|c| c.quantity == "ball") {
        let mut pts: Vec<(f64, f64)> = c
            .points
            .iter()
            .filter(|p| !study.out_of_regime.contains(&p.t))
            .map(|p| (p.t, p.value))
            .collect();
        pts.sort_by(|a, b| b.0.total_cmp(&a.0));
        let values: Vec<f64> = pts.iter().map(|p| p.1).collect();
        if !is_nonincreasing(&values, floor) {
            failures.push(format!("ball curve p = {:?} grows as t decreases", c.p));
        }
    }
    failures
}

fn converge(prepared: &Prepared) -> CliResult<Outcome> {
    let basis = prepared.basis()?;
    let study = convergence_study(&basis, &prepared.config.t_grid, &prepared.config.p_list)?;
    for w in &study.warnings {
        log::warn!("t = {:e} ({}): {}", w.t, w.quantity, w.message);
    }
    let mut outcome = Outcome { failures: converge_failures(&study, &prepared.space), ..Default::default() };
    let csv = prepared.config.output_dir.join("converge.csv");
    write_text(&csv, &study_to_csv(&study, &prepared.provenance))?;
    outcome.files.push(csv);
    finish(prepared, Suite::Converge, study, outcome)
}

fn record(
    operation: &str,
    basis: &SpectralBasis,
    t: Option<f64>,
    functions: Vec<usize>,
    check: IdentityCheck,
    tolerance: f64,
) -> ResidualRecord {
    let residual = check.relative();
    ResidualRecord {
        operation: operation.into(),
        space: basis.space().label(),
        t,
        truncation: basis.mode_count(),
        functions,
        lhs: check.lhs,
        rhs: check.rhs,
        residual,
        tolerance,
        pass: residual <= tolerance,
    }
}

/// Default bound for identity residuals: rounding level on closed-form
/// bases, discretization level on sampled ones.
pub fn default_ibp_tolerance(basis: &SpectralBasis) -> f64 {
    if basis.is_closed_form() {
        1e-10
    } else {
        1e-6
    }
}

/// Integration-by-parts residuals over every (f, ψ) among the first
/// `functions` eigenfunctions and every t.
pub fn ibp_matrix(basis: &SpectralBasis, functions: usize, times: &[f64], tolerance: f64) -> CliResult<Vec<ResidualRecord>> {
    let k = functions.min(basis.mode_count());
    let grid = basis.grid();
    let modes: Vec<ScalarField> = (0..k).map(|i| basis.mode(i)).collect();
    let grads: Vec<_> = modes.iter().map(|m| grid.gradient(m)).collect::<Result<_, _>>()?;
    let hessians: Vec<_> = modes.iter().map(|m| hessian(grid, m)).collect::<Result<_, _>>()?;
    let ops: Vec<TwistedLaplacian> = times
        .par_iter()
        .map(|&t| TwistedLaplacian::new(basis, t))
        .collect::<Result<_, _>>()?;
    let jobs: Vec<(usize, usize)> = (0..times.len()).flat_map(|ti| (0..k).map(move |f| (ti, f))).collect();
    let rows: Vec<CliResult<Vec<ResidualRecord>>> = jobs
        .par_iter()
        .map(|&(ti, f)| {
            let op = &ops[ti];
            let df = &grads[f];
            let dt = op.apply_to_derivatives(&hessians[f], df)?;
            let mut out = Vec::with_capacity(k);
            for (psi, m) in modes.iter().enumerate() {
                let dpsi = &grads[psi];
                let g = op.metric();
                let pairing = ScalarField::from_fn(grid.node_count(), |n| g.contract(n, dpsi.at(n), df.at(n)));
                let check = IdentityCheck { lhs: grid.integrate(&pairing)?, rhs: -grid.inner(m, &dt)? };
                out.push(record("ibp", basis, Some(times[ti]), vec![f, psi], check, tolerance));
            }
            Ok(out)
        })
        .collect();
    let mut all = Vec::with_capacity(jobs.len() * k);
    for r in rows {
        all.extend(r?);
    }
    Ok(all)
}

/// Transport and energy identity residuals over the same (f, ψ) matrix.
pub fn lemma_records(basis: &SpectralBasis, functions: usize, times: &[f64], tolerance: f64) -> CliResult<Vec<ResidualRecord>> {
    let k = functions.min(basis.mode_count());
    let modes: Vec<ScalarField> = (0..k).map(|i| basis.mode(i)).collect();
    let mut pairs = Vec::with_capacity(k * k);
    let mut labels = Vec::with_capacity(k * k);
    for f in 0..k {
        for psi in 0..k {
            pairs.push((modes[f].clone(), modes[psi].clone()));
            labels.push(vec![f, psi]);
        }
    }
    let jobs: Vec<(f64, bool)> = times.iter().flat_map(|&t| [(t, true), (t, false)]).collect();
    let results: Vec<CliResult<Vec<ResidualRecord>>> = jobs
        .par_iter()
        .map(|&(t, transport)| {
            let checks = if transport {
                transport_identities(basis, &pairs, t)?
            } else {
                energy_identities(basis, &pairs, t)?
            };
            let name = if transport { "transport" } else { "energy" };
            Ok(checks
                .into_iter()
                .zip(&labels)
                .map(|(c, l)| record(name, basis, Some(t), l.clone(), c, tolerance))
                .collect())
        })
        .collect();
    let mut all = Vec::new();
    for r in results {
        all.extend(r?);
    }
    Ok(all)
}

fn ibp(prepared: &Prepared) -> CliResult<Outcome> {
    prepared.require_periodic("ibp")?;
    let basis = prepared.basis()?;
    let cfg = &prepared.config;
    let tol = cfg.tolerances.ibp.unwrap_or_else(|| default_ibp_tolerance(&basis));
    let mut records = ibp_matrix(&basis, cfg.ibp_functions, &cfg.t_grid, tol)?;
    if cfg.lemmas && basis.grid().frame_dim() == 1 {
        records.extend(lemma_records(&basis, cfg.ibp_functions, &cfg.t_grid, tol)?);
    } else if cfg.lemmas {
        log::info!("transport and energy identities skipped: they are checked on one-dimensional grids only");
    }
    let mut outcome = Outcome::default();
    for r in records.iter().filter(|r| !r.pass) {
        outcome.failures.push(format!(
            "{} residual {:.3e} > {:.1e} at t = {:?}, functions {:?}",
            r.operation, r.residual, r.tolerance, r.t, r.functions
        ));
    }
    let csv = cfg.output_dir.join("ibp.csv");
    write_text(&csv, &records_to_csv(&records, &prepared.provenance))?;
    outcome.files.push(csv);
    finish(prepared, Suite::Ibp, records, outcome)
}

#[derive(Debug, Clone, Serialize)]
pub struct WittenRecord {
    pub mode: usize,
    pub lambda: f64,
    pub witten_residual: f64,
    pub trace_residual: f64,
    pub drift_prediction: f64,
    pub tolerance: f64,
    pub pass: bool,
}

pub fn default_witten_tolerance(basis: &SpectralBasis) -> f64 {
    if basis.is_closed_form() {
        1e-8
    } else {
        1e-3
    }
}

pub fn witten_records(basis: &SpectralBasis, modes: usize, tolerance: f64) -> CliResult<Vec<WittenRecord>> {
    let last = (modes + 1).min(basis.mode_count());
    (1..last)
        .into_par_iter()
        .map(|i| {
            let w = witten_residual_mode(basis, i)?;
            Ok(WittenRecord {
                mode: i,
                lambda: basis.lambdas()[i],
                witten_residual: w,
                trace_residual: trace_residual_mode(basis, i)?,
                drift_prediction: witten_prediction(basis, i)?,
                tolerance,
                pass: w <= tolerance,
            })
        })
        .collect()
}

fn witten(prepared: &Prepared) -> CliResult<Outcome> {
    prepared.require_periodic("witten")?;
    let basis = prepared.basis()?;
    let cfg = &prepared.config;
    let tol = cfg.tolerances.witten.unwrap_or_else(|| default_witten_tolerance(&basis));
    let records = witten_records(&basis, cfg.witten_modes, tol)?;
    let mut outcome = Outcome::default();
    for r in records.iter().filter(|r| !r.pass) {
        outcome.failures.push(format!("mode {} Witten residual {:.3e} > {:.1e}", r.mode, r.witten_residual, r.tolerance));
    }
    let mut csv = prepared.provenance.csv_comment();
    csv.push_str("mode,lambda,witten_residual,trace_residual,drift_prediction,pass\n");
    for r in &records {
        csv.push_str(&format!(
            "{},{:?},{:?},{:?},{:?},{}\n",
            r.mode, r.lambda, r.witten_residual, r.trace_residual, r.drift_prediction, r.pass
        ));
    }
    let path = cfg.output_dir.join("witten.csv");
    write_text(&path, &csv)?;
    outcome.files.push(path);
    finish(prepared, Suite::Witten, records, outcome)
}

pub fn classification(prepared: &Prepared, basis: &SpectralBasis) -> CliResult<ClassificationReport> {
    let radii = prepared.config.r_grid.clone().unwrap_or_else(|| default_radii(&prepared.space));
    Ok(classify(basis, prepared.config.n, &radii, &prepared.config.thresholds)?)
}

fn collapse(prepared: &Prepared) -> CliResult<Outcome> {
    prepared.require_periodic("collapse")?;
    let basis = prepared.basis()?;
    let report = classification(prepared, &basis)?;
    log::info!("verdict: {}", report.verdict.as_str());
    let mut csv = prepared.provenance.csv_comment();
    csv.push_str("mode,lambda,trace_residual,drift_prediction,hausdorff_mean\n");
    for m in &report.modes {
        csv.push_str(&format!(
            "{},{:?},{:?},{:?},{:?}\n",
            m.mode, m.lambda, m.trace_residual, m.drift_prediction, m.hausdorff_mean
        ));
    }
    let path = prepared.config.output_dir.join("collapse.csv");
    write_text(&path, &csv)?;
    let outcome = Outcome { files: vec![path], failures: Vec::new() };
    finish(prepared, Suite::Collapse, report, outcome)
}
