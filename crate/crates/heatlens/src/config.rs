//! Experiment configuration: one JSON document, with a few fields
//! overridable from the command line.

use std::path::{Path, PathBuf};

use heatlens_core::diagnostics::Thresholds;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::descriptor::SpaceDescriptor;
use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    /// Relative series tail allowed by the truncation policy.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truncation: Option<f64>,
    /// Relative residual bound for the integration-by-parts suite.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ibp: Option<f64>,
    /// Relative residual bound for the Witten suite.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub witten: Option<f64>,
}

fn default_t_grid() -> Vec<f64> {
    vec![1e-2, 3e-2, 1e-1]
}

fn default_p_list() -> Vec<f64> {
    vec![1.0, 2.0]
}

fn default_ibp_functions() -> usize {
    12
}

fn default_witten_modes() -> usize {
    5
}

fn default_true() -> bool {
    true
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("heatlens-out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub space: SpaceDescriptor,
    #[serde(default)]
    pub mode_count: Option<usize>,
    /// Grid points per axis on model spaces.
    #[serde(default)]
    pub grid: Option<Vec<usize>>,
    #[serde(default = "default_t_grid")]
    pub t_grid: Vec<f64>,
    #[serde(default)]
    pub r_grid: Option<Vec<f64>>,
    #[serde(default = "default_p_list")]
    pub p_list: Vec<f64>,
    /// Essential dimension; estimated from ball growth when absent.
    #[serde(default)]
    pub n: Option<usize>,
    #[serde(default)]
    pub thresholds: Thresholds,
    #[serde(default)]
    pub tolerances: Tolerances,
    /// Eigenfunctions used as f and ψ by the `ibp` suite.
    #[serde(default = "default_ibp_functions")]
    pub ibp_functions: usize,
    /// Also check the transport and energy identities (one-dimensional grids only).
    #[serde(default = "default_true")]
    pub lemmas: bool,
    #[serde(default = "default_witten_modes")]
    pub witten_modes: usize,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// Seed for degenerate-eigenspace remixing.
    #[serde(default)]
    pub seed: u64,
}

/// Command-line overrides applied on top of the JSON document.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub t_grid: Option<Vec<f64>>,
    pub mode_count: Option<usize>,
    pub output_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn new(space: SpaceDescriptor) -> Self {
        Self {
            space,
            mode_count: None,
            grid: None,
            t_grid: default_t_grid(),
            r_grid: None,
            p_list: default_p_list(),
            n: None,
            thresholds: Thresholds::default(),
            tolerances: Tolerances::default(),
            ibp_functions: default_ibp_functions(),
            lemmas: true,
            witten_modes: default_witten_modes(),
            output_dir: default_output_dir(),
            seed: 0,
        }
    }

    /// Parses a JSON document; errors carry the path of the offending field.
    pub fn from_json(text: &str) -> CliResult<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: Self = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            CliError::usage(format!("config field `{path}`: {}", e.inner()))
        })?;
        Ok(cfg)
    }

    /// Reads a config file; relative mesh paths resolve against its directory.
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let mut cfg = Self::from_json(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.space.resolve_paths(base);
        Ok(cfg)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(t) = &o.t_grid {
            self.t_grid = t.clone();
        }
        if let Some(m) = o.mode_count {
            self.mode_count = Some(m);
        }
        if let Some(d) = &o.output_dir {
            self.output_dir = d.clone();
        }
    }

    pub fn validate(&self) -> CliResult<()> {
        self.space.validate()?;
        if self.t_grid.is_empty() {
            return Err(CliError::usage("t_grid: must not be empty"));
        }
        for (i, t) in self.t_grid.iter().enumerate() {
            if !(*t > 0.0) || !t.is_finite() {
                return Err(CliError::usage(format!("t_grid[{i}]: times must be positive and finite")));
            }
        }
        if self.p_list.is_empty() {
            return Err(CliError::usage("p_list: must not be empty"));
        }
        for (i, p) in self.p_list.iter().enumerate() {
            if !(*p >= 1.0) || !p.is_finite() {
                return Err(CliError::usage(format!("p_list[{i}]: exponents must be finite and ≥ 1")));
            }
        }
        if self.mode_count == Some(0) {
            return Err(CliError::usage("mode_count: must be positive"));
        }
        if let Some(g) = &self.grid {
            if g.iter().any(|&m| m == 0) {
                return Err(CliError::usage("grid: sizes must be positive"));
            }
        }
        if let Some(r) = &self.r_grid {
            if r.len() < 3 {
                return Err(CliError::usage("r_grid: at least three radii are needed"));
            }
            if r.iter().any(|v| !(*v > 0.0)) || r.windows(2).any(|w| !(w[1] < w[0])) {
                return Err(CliError::usage("r_grid: radii must be positive and strictly decreasing"));
            }
        }
        if self.n == Some(0) {
            return Err(CliError::usage("n: must be positive"));
        }
        for (name, v) in [
            ("tolerances.truncation", self.tolerances.truncation),
            ("tolerances.ibp", self.tolerances.ibp),
            ("tolerances.witten", self.tolerances.witten),
        ] {
            if let Some(v) = v {
                if !(v > 0.0) {
                    return Err(CliError::usage(format!("{name}: must be positive")));
                }
            }
        }
        if self.ibp_functions == 0 {
            return Err(CliError::usage("ibp_functions: must be positive"));
        }
        if self.witten_modes == 0 {
            return Err(CliError::usage("witten_modes: must be positive"));
        }
        Ok(())
    }

    pub fn t_min(&self) -> f64 {
        self.t_grid.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// SHA-256 of the canonical JSON serialization.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(bytes))
    }
}
