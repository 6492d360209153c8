//! File formats: basis tables, tensor fields, curves and residual records.
//!
//! Binary layouts are little-endian. Basis table: magic `HLBASIS1`, u64 mode
//! count, u64 node count, the eigenvalues, then the samples mode by mode.
//! Tensor blob: magic `HLTENS01`, u64 node count, u64 frame dimension, then
//! the packed upper triangles node by node.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use heatlens_core::diagnostics::ConvergenceStudy;
use heatlens_core::field::{packed_len, TensorField};
use heatlens_core::spaces::Grid;
use heatlens_core::spectral::SpectralBasis;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::descriptor::SpaceDescriptor;
use crate::error::{CliError, CliResult};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
const BASIS_MAGIC: &[u8; 8] = b"HLBASIS1";
const TENSOR_MAGIC: &[u8; 8] = b"HLTENS01";

/// Toolkit version and resolved-config hash carried by every output.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub heatlens_version: String,
    pub config_hash: String,
}

impl Provenance {
    pub fn new(config_hash: impl Into<String>) -> Self {
        Self { heatlens_version: VERSION.to_string(), config_hash: config_hash.into() }
    }

    /// Leading comment line for CSV outputs.
    pub fn csv_comment(&self) -> String {
        format!("# heatlens {} config-sha256 {}\n", self.heatlens_version, self.config_hash)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BasisTable {
    pub lambdas: Vec<f64>,
    pub node_count: usize,
    /// Mode-major samples.
    pub values: Vec<f64>,
}

impl BasisTable {
    pub fn from_basis(basis: &SpectralBasis) -> Self {
        let node_count = basis.grid().node_count();
        let mut values = Vec::with_capacity(node_count * basis.mode_count());
        for i in 0..basis.mode_count() {
            values.extend_from_slice(basis.mode(i).values());
        }
        Self { lambdas: basis.lambdas().to_vec(), node_count, values }
    }

    pub fn mode_count(&self) -> usize {
        self.lambdas.len()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(24 + 8 * (self.lambdas.len() + self.values.len()));
        out.extend_from_slice(BASIS_MAGIC);
        out.extend_from_slice(&(self.lambdas.len() as u64).to_le_bytes());
        out.extend_from_slice(&(self.node_count as u64).to_le_bytes());
        for v in self.lambdas.iter().chain(&self.values) {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, String> {
        let (modes, nodes, body) = read_header(bytes, BASIS_MAGIC)?;
        let expected = modes
            .checked_add(modes.checked_mul(nodes).ok_or("size overflow")?)
            .ok_or("size overflow")?;
        let floats = read_f64s(body, expected)?;
        let (lambdas, values) = floats.split_at(modes);
        Ok(Self { lambdas: lambdas.to_vec(), node_count: nodes, values: values.to_vec() })
    }
}

fn read_header<'a>(bytes: &'a [u8], magic: &[u8; 8]) -> Result<(usize, usize, &'a [u8]), String> {
    if bytes.len() < 24 || &bytes[..8] != magic {
        return Err(format!("missing `{}` header", String::from_utf8_lossy(magic)));
    }
    let a = u64::from_le_bytes(bytes[8..16].try_into().unwrap());
    let b = u64::from_le_bytes(bytes[16..24].try_into().unwrap());
    let a = usize::try_from(a).map_err(|_| "count too large")?;
    let b = usize::try_from(b).map_err(|_| "count too large")?;
    Ok((a, b, &bytes[24..]))
}

fn read_f64s(body: &[u8], count: usize) -> Result<Vec<f64>, String> {
    if body.len() != count.checked_mul(8).ok_or("size overflow")? {
        return Err(format!("expected {count} values, found {} bytes", body.len()));
    }
    Ok(body.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
}

/// JSON sidecar describing a basis table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BasisSidecar {
    #[serde(flatten)]
    pub provenance: Provenance,
    pub space: SpaceDescriptor,
    /// Points per axis on model spaces; absent on meshes.
    pub grid: Option<Vec<usize>>,
    pub mode_count: usize,
    pub node_count: usize,
    pub truncation_tolerance: f64,
    pub table_sha256: String,
}

pub fn grid_sizes(grid: &Grid) -> Option<Vec<usize>> {
    grid.as_periodic().map(|g| g.sizes().to_vec())
}

fn write_bytes(path: &Path, bytes: &[u8]) -> CliResult<()> {
    std::fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

fn read_bytes(path: &Path) -> CliResult<Vec<u8>> {
    std::fs::read(path).map_err(|e| CliError::io(path, e))
}

/// Writes `<stem>.bin` and `<stem>.json`; returns both paths.
pub fn export_basis(
    basis: &SpectralBasis,
    descriptor: &SpaceDescriptor,
    provenance: &Provenance,
    dir: &Path,
    stem: &str,
) -> CliResult<(PathBuf, PathBuf)> {
    let table = BasisTable::from_basis(basis);
    let bytes = table.to_bytes();
    let bin = dir.join(format!("{stem}.bin"));
    write_bytes(&bin, &bytes)?;
    let sidecar = BasisSidecar {
        provenance: provenance.clone(),
        space: descriptor.clone(),
        grid: grid_sizes(basis.grid()),
        mode_count: table.mode_count(),
        node_count: table.node_count,
        truncation_tolerance: basis.truncation().tolerance,
        table_sha256: hex::encode(Sha256::digest(&bytes)),
    };
    let json = dir.join(format!("{stem}.json"));
    write_json(&json, &sidecar)?;
    Ok((bin, json))
}

/// Rebuilds a sampled basis from a table and its sidecar.
pub fn import_basis(bin: &Path, json: &Path) -> CliResult<SpectralBasis> {
    let sidecar: BasisSidecar = read_json(json)?;
    let bytes = read_bytes(bin)?;
    if hex::encode(Sha256::digest(&bytes)) != sidecar.table_sha256 {
        return Err(CliError::Malformed { path: bin.into(), reason: "checksum differs from sidecar".into() });
    }
    let table = BasisTable::from_bytes(&bytes).map_err(|reason| CliError::Malformed { path: bin.into(), reason })?;
    let space = sidecar.space.build()?;
    let grid = match &sidecar.grid {
        Some(sizes) => Grid::for_space(&space, sizes)?,
        None => Grid::for_space(&space, &[])?,
    };
    if grid.node_count() != table.node_count {
        return Err(CliError::Malformed { path: bin.into(), reason: "node count differs from the rebuilt grid".into() });
    }
    Ok(SpectralBasis::from_samples(space, grid, table.lambdas, table.values, sidecar.truncation_tolerance)?)
}

pub fn tensor_to_csv(field: &TensorField, provenance: &Provenance) -> String {
    let dim = field.dim();
    let mut s = provenance.csv_comment();
    s.push_str("node");
    for i in 0..dim {
        for j in i..dim {
            let _ = write!(s, ",g{i}{j}");
        }
    }
    s.push('\n');
    for node in 0..field.nodes() {
        let _ = write!(s, "{node}");
        for i in 0..dim {
            for j in i..dim {
                let _ = write!(s, ",{:?}", field.get(node, i, j));
            }
        }
        s.push('\n');
    }
    s
}

pub fn tensor_to_bytes(field: &TensorField) -> Vec<u8> {
    let mut out = Vec::with_capacity(24 + 8 * field.data().len());
    out.extend_from_slice(TENSOR_MAGIC);
    out.extend_from_slice(&(field.nodes() as u64).to_le_bytes());
    out.extend_from_slice(&(field.dim() as u64).to_le_bytes());
    for v in field.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn tensor_from_bytes(bytes: &[u8]) -> Result<TensorField, String> {
    let (nodes, dim, body) = read_header(bytes, TENSOR_MAGIC)?;
    let data = read_f64s(body, nodes.checked_mul(packed_len(dim)).ok_or("size overflow")?)?;
    TensorField::from_packed(dim, data).map_err(|e| e.to_string())
}

/// One row per (curve, time): quantity, p, t, value, fitted slope.
pub fn study_to_csv(study: &ConvergenceStudy, provenance: &Provenance) -> String {
    let mut s = provenance.csv_comment();
    s.push_str("quantity,p,t,value,slope,out_of_regime\n");
    for c in &study.curves {
        let p = c.p.map(|p| format!("{p:?}")).unwrap_or_default();
        let slope = c.slope.map(|v| format!("{v:?}")).unwrap_or_default();
        for pt in &c.points {
            let flag = study.out_of_regime.contains(&pt.t);
            let _ = writeln!(s, "{},{},{:?},{:?},{},{}", c.quantity, p, pt.t, pt.value, slope, flag);
        }
    }
    s
}

/// One identity check as reported by the residual suites.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualRecord {
    pub operation: String,
    pub space: String,
    pub t: Option<f64>,
    /// Retained mode count.
    pub truncation: usize,
    /// Indices of the eigenfunctions involved (f, then ψ when present).
    pub functions: Vec<usize>,
    pub lhs: f64,
    pub rhs: f64,
    pub residual: f64,
    pub tolerance: f64,
    pub pass: bool,
}

pub fn records_to_csv(records: &[ResidualRecord], provenance: &Provenance) -> String {
    let mut s = provenance.csv_comment();
    s.push_str("operation,t,functions,lhs,rhs,residual,tolerance,pass\n");
    for r in records {
        let t = r.t.map(|t| format!("{t:?}")).unwrap_or_default();
        let f: Vec<String> = r.functions.iter().map(|i| i.to_string()).collect();
        let _ = writeln!(
            s,
            "{},{},{},{:?},{:?},{:?},{:?},{}",
            r.operation,
            t,
            f.join(" "),
            r.lhs,
            r.rhs,
            r.residual,
            r.tolerance,
            r.pass
        );
    }
    s
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).expect("report serializes");
    text.push('\n');
    write_bytes(path, text.as_bytes())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> CliResult<T> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    serde_path_to_error::deserialize(de).map_err(|e| CliError::Malformed {
        path: path.into(),
        reason: format!("field `{}`: {}", e.path(), e.inner()),
    })
}

pub fn write_text(path: &Path, text: &str) -> CliResult<()> {
    write_bytes(path, text.as_bytes())
}

/// Writes a tensor field as `<stem>.csv` and `<stem>.bin`.
pub fn export_tensor(field: &TensorField, provenance: &Provenance, dir: &Path, stem: &str) -> CliResult<Vec<PathBuf>> {
    let csv = dir.join(format!("{stem}.csv"));
    write_text(&csv, &tensor_to_csv(field, provenance))?;
    let bin = dir.join(format!("{stem}.bin"));
    write_bytes(&bin, &tensor_to_bytes(field))?;
    Ok(vec![csv, bin])
}
