//! JSON space descriptors.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use heatlens_core::spaces::{icosphere, octahedron, DiscreteSpace, ModelSpace, Space, TrigPolynomial};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};
use crate::off::load_mesh;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VariantName {
    Circle,
    FlatTorus,
    WeightedCircle,
    Mesh,
    Icosphere,
    Octahedron,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpaceDescriptor {
    pub variant: VariantName,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub lengths: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phi_coefficients: Option<TrigPolynomial>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mesh_path: Option<PathBuf>,
    /// Subdivision level for the built-in icosphere.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub level: Option<usize>,
}

impl SpaceDescriptor {
    pub fn circle(length: f64) -> Self {
        Self::model(VariantName::Circle, vec![length], None)
    }

    pub fn flat_torus(lengths: &[f64]) -> Self {
        Self::model(VariantName::FlatTorus, lengths.to_vec(), None)
    }

    pub fn weighted_circle(length: f64, phi: TrigPolynomial) -> Self {
        Self::model(VariantName::WeightedCircle, vec![length], Some(phi))
    }

    pub fn icosphere(level: usize) -> Self {
        Self { variant: VariantName::Icosphere, lengths: vec![], phi_coefficients: None, mesh_path: None, level: Some(level) }
    }

    pub fn mesh(path: impl Into<PathBuf>) -> Self {
        Self { variant: VariantName::Mesh, lengths: vec![], phi_coefficients: None, mesh_path: Some(path.into()), level: None }
    }

    fn model(variant: VariantName, lengths: Vec<f64>, phi: Option<TrigPolynomial>) -> Self {
        Self { variant, lengths, phi_coefficients: phi, mesh_path: None, level: None }
    }

    fn single_length(&self) -> CliResult<f64> {
        match self.lengths.as_slice() {
            [l] => Ok(*l),
            other => Err(CliError::usage(format!("space.lengths: expected one length, found {}", other.len()))),
        }
    }

    /// Checks the fields this variant needs, naming the offending field.
    pub fn validate(&self) -> CliResult<()> {
        let model = matches!(self.variant, VariantName::Circle | VariantName::FlatTorus | VariantName::WeightedCircle);
        if model {
            if self.lengths.is_empty() {
                return Err(CliError::usage("space.lengths: must not be empty"));
            }
            for (i, l) in self.lengths.iter().enumerate() {
                if !(*l > 0.0) || !l.is_finite() {
                    return Err(CliError::usage(format!("space.lengths[{i}]: must be positive and finite")));
                }
            }
            if self.mesh_path.is_some() {
                return Err(CliError::usage("space.mesh_path: only meaningful for the mesh variant"));
            }
        }
        match self.variant {
            VariantName::Circle | VariantName::WeightedCircle => {
                self.single_length()?;
            }
            VariantName::Mesh if self.mesh_path.is_none() => {
                return Err(CliError::usage("space.mesh_path: required for the mesh variant"));
            }
            VariantName::Icosphere if self.level.is_none() => {
                return Err(CliError::usage("space.level: required for the icosphere variant"));
            }
            _ => {}
        }
        if self.variant == VariantName::WeightedCircle && self.phi_coefficients.is_none() {
            return Err(CliError::usage("space.phi_coefficients: required for the weighted_circle variant"));
        }
        if self.variant != VariantName::WeightedCircle && self.phi_coefficients.is_some() {
            return Err(CliError::usage("space.phi_coefficients: only meaningful for the weighted_circle variant"));
        }
        Ok(())
    }

    /// Mesh paths are resolved against `base`.
    pub fn resolve_paths(&mut self, base: &Path) {
        if let Some(p) = &self.mesh_path {
            if p.is_relative() {
                self.mesh_path = Some(base.join(p));
            }
        }
    }

    pub fn build(&self) -> CliResult<Space> {
        self.validate()?;
        let space: Space = match self.variant {
            VariantName::Circle => ModelSpace::circle(self.single_length()?)?.into(),
            VariantName::FlatTorus => ModelSpace::flat_torus(&self.lengths)?.into(),
            VariantName::WeightedCircle => {
                let phi = self.phi_coefficients.clone().unwrap_or_default();
                ModelSpace::weighted_circle(self.single_length()?, phi)?.into()
            }
            VariantName::Mesh => Space::Discrete(Arc::new(load_mesh(self.mesh_path.as_deref().unwrap())?)),
            VariantName::Icosphere => {
                let (p, t) = icosphere(self.level.unwrap());
                Space::Discrete(Arc::new(DiscreteSpace::from_triangles(p, t)?))
            }
            VariantName::Octahedron => {
                let (p, t) = octahedron();
                Space::Discrete(Arc::new(DiscreteSpace::from_triangles(p, t)?))
            }
        };
        Ok(space)
    }
}
