//! ASCII OFF meshes.

use std::fmt::Write as _;
use std::path::Path;

use heatlens_core::spaces::DiscreteSpace;
use heatlens_core::Error;

use crate::error::{CliError, CliResult};

fn format_err(msg: impl Into<String>) -> Error {
    Error::Format(msg.into())
}

/// Parses OFF text into vertex positions and triangles.
pub fn parse_off(text: &str) -> Result<(Vec<[f64; 3]>, Vec<[usize; 3]>), Error> {
    let mut tokens = text
        .lines()
        .map(|l| l.split('#').next().unwrap_or(""))
        .flat_map(str::split_whitespace);
    let head = tokens.next().ok_or_else(|| format_err("empty OFF file"))?;
    let mut counts = Vec::with_capacity(3);
    if head != "OFF" {
        return Err(format_err(format!("expected `OFF` header, found `{head}`")));
    }
    for _ in 0..3 {
        let tok = tokens.next().ok_or_else(|| format_err("missing element counts"))?;
        counts.push(
            tok.parse::<usize>()
                .map_err(|_| format_err(format!("bad element count `{tok}`")))?,
        );
    }
    let (nv, nf) = (counts[0], counts[1]);
    let mut next_f64 = |what: &str| -> Result<f64, Error> {
        let tok = tokens.next().ok_or_else(|| format_err(format!("file ends inside {what}")))?;
        tok.parse::<f64>()
            .map_err(|_| format_err(format!("bad number `{tok}` in {what}")))
    };
    let mut points = Vec::with_capacity(nv);
    for v in 0..nv {
        let what = format!("vertex {v}");
        points.push([next_f64(&what)?, next_f64(&what)?, next_f64(&what)?]);
    }
    let mut triangles = Vec::with_capacity(nf);
    for f in 0..nf {
        let what = format!("face {f}");
        let k = next_f64(&what)?;
        if k != 3.0 {
            return Err(format_err(format!("face {f} has {k} vertices; only triangles are supported")));
        }
        let mut tri = [0usize; 3];
        for slot in tri.iter_mut() {
            let x = next_f64(&what)?;
            if x < 0.0 || x.fract() != 0.0 {
                return Err(format_err(format!("face {f} has a non-integer vertex index {x}")));
            }
            *slot = x as usize;
        }
        triangles.push(tri);
    }
    Ok((points, triangles))
}

pub fn load_off(path: &Path) -> CliResult<DiscreteSpace> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let (points, triangles) = parse_off(&text)?;
    Ok(DiscreteSpace::from_triangles(points, triangles)?)
}

/// Loads a mesh by file extension; only `.off` is known.
pub fn load_mesh(path: &Path) -> CliResult<DiscreteSpace> {
    match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
        Some("off") => load_off(path),
        other => Err(Error::Format(format!("unknown mesh format {:?} for {}", other.unwrap_or(""), path.display())).into()),
    }
}

pub fn to_off(points: &[[f64; 3]], triangles: &[[usize; 3]]) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "OFF\n{} {} 0", points.len(), triangles.len());
    for p in points {
        let _ = writeln!(s, "{:?} {:?} {:?}", p[0], p[1], p[2]);
    }
    for t in triangles {
        let _ = writeln!(s, "3 {} {} {}", t[0], t[1], t[2]);
    }
    s
}
