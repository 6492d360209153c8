use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{invalid, Error, Result};
use crate::field::{CovectorField, ScalarField, TensorField};
use crate::linalg::CsrMatrix;
use crate::math::sqrt;

use super::geodesic;
use super::SpaceMetadata;

pub(crate) type Vec3 = [f64; 3];

#[inline]
pub(crate) fn sub(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

#[inline]
pub(crate) fn dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
pub(crate) fn cross(a: Vec3, b: Vec3) -> Vec3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

#[inline]
pub(crate) fn norm(a: Vec3) -> f64 {
    sqrt(dot(a, a))
}

fn scale(a: Vec3, s: f64) -> Vec3 {
    [a[0] * s, a[1] * s, a[2] * s]
}

/// Closed, consistently oriented triangle surface with piecewise-linear
/// functions, a lumped measure and the cotangent Dirichlet form.
#[derive(Debug, Clone)]
pub struct DiscreteSpace {
    points: Vec<Vec3>,
    triangles: Vec<[usize; 3]>,
    mass: Vec<f64>,
    stiffness: CsrMatrix,
    face_area: Vec<f64>,
    // ∇ of the three hat functions, per face.
    face_gradients: Vec<[Vec3; 3]>,
    // Tangent frame (e₁, e₂) at each vertex.
    frames: Vec<[Vec3; 2]>,
    vertex_faces_ptr: Vec<usize>,
    vertex_faces: Vec<usize>,
    neighbors_ptr: Vec<usize>,
    neighbors: Vec<(usize, f64)>,
    max_edge: f64,
    metadata: SpaceMetadata,
}

fn ingestion(simplex: impl Into<alloc::string::String>, reason: impl Into<alloc::string::String>) -> Error {
    Error::Ingestion {
        simplex: simplex.into(),
        reason: reason.into(),
    }
}

impl DiscreteSpace {
    pub fn from_triangles(points: Vec<Vec3>, triangles: Vec<[usize; 3]>) -> Result<Self> {
        let nv = points.len();
        if nv < 4 || triangles.len() < 4 {
            return Err(invalid("mesh", "a closed surface needs at least 4 vertices and 4 faces"));
        }
        if let Some(i) = points.iter().position(|p| p.iter().any(|c| !c.is_finite())) {
            return Err(ingestion(format!("vertex {i}"), "non-finite coordinate"));
        }
        let mut face_area = Vec::with_capacity(triangles.len());
        let mut face_normals = Vec::with_capacity(triangles.len());
        let mut face_gradients = Vec::with_capacity(triangles.len());
        let mut max_edge: f64 = 0.0;
        for (f, t) in triangles.iter().enumerate() {
            let name = || format!("face {f} ({}, {}, {})", t[0], t[1], t[2]);
            if t.iter().any(|&v| v >= nv) {
                return Err(ingestion(name(), "vertex index out of range"));
            }
            if t[0] == t[1] || t[1] == t[2] || t[0] == t[2] {
                return Err(ingestion(name(), "repeated vertex"));
            }
            let [a, b, c] = [points[t[0]], points[t[1]], points[t[2]]];
            let nrm = cross(sub(b, a), sub(c, a));
            let twice = norm(nrm);
            let longest = norm(sub(b, a)).max(norm(sub(c, b))).max(norm(sub(a, c)));
            max_edge = max_edge.max(longest);
            if !(twice > 1e-12 * longest * longest) {
                return Err(ingestion(name(), "zero-area triangle"));
            }
            let unit = scale(nrm, 1.0 / twice);
            let mut grads = [[0.0; 3]; 3];
            for i in 0..3 {
                let pj = points[t[(i + 1) % 3]];
                let pk = points[t[(i + 2) % 3]];
                grads[i] = scale(cross(unit, sub(pk, pj)), 1.0 / twice);
            }
            face_area.push(0.5 * twice);
            face_normals.push(unit);
            face_gradients.push(grads);
        }

        // Every undirected edge must be used exactly once in each direction.
        let mut directed: BTreeMap<(usize, usize), usize> = BTreeMap::new();
        for t in &triangles {
            for i in 0..3 {
                let (a, b) = (t[i], t[(i + 1) % 3]);
                *directed.entry((a, b)).or_insert(0) += 1;
            }
        }
        for (&(a, b), &count) in &directed {
            let back = directed.get(&(b, a)).copied().unwrap_or(0);
            if count + back > 2 {
                return Err(ingestion(format!("edge ({a}, {b})"), "shared by more than two faces"));
            }
            if back == 0 {
                return Err(ingestion(format!("edge ({a}, {b})"), "lies on a boundary"));
            }
            if count != 1 {
                return Err(ingestion(format!("edge ({a}, {b})"), "adjacent faces have inconsistent orientation"));
            }
        }

        let mut vertex_faces_list: Vec<Vec<usize>> = vec![Vec::new(); nv];
        for (f, t) in triangles.iter().enumerate() {
            for &v in t {
                vertex_faces_list[v].push(f);
            }
        }
        for (v, faces) in vertex_faces_list.iter().enumerate() {
            if faces.is_empty() {
                return Err(ingestion(format!("vertex {v}"), "not used by any face"));
            }
            if !link_is_connected(v, faces, &triangles) {
                return Err(ingestion(format!("vertex {v}"), "non-manifold vertex (disconnected fan)"));
            }
        }

        let mut mass = vec![0.0; nv];
        let mut trip = Vec::with_capacity(9 * triangles.len());
        let mut vertex_normals = vec![[0.0; 3]; nv];
        for (f, t) in triangles.iter().enumerate() {
            let a = face_area[f];
            for i in 0..3 {
                mass[t[i]] += a / 3.0;
                let n = &mut vertex_normals[t[i]];
                for k in 0..3 {
                    n[k] += a * face_normals[f][k];
                }
                for j in 0..3 {
                    trip.push((t[i], t[j], a * dot(face_gradients[f][i], face_gradients[f][j])));
                }
            }
        }
        let stiffness = CsrMatrix::from_triplets(nv, &trip);

        let frames = vertex_normals.iter().map(|&n| tangent_frame(n)).collect();

        let mut vertex_faces_ptr = vec![0];
        let mut vertex_faces = Vec::new();
        for faces in &vertex_faces_list {
            vertex_faces.extend_from_slice(faces);
            vertex_faces_ptr.push(vertex_faces.len());
        }
        let mut adj: Vec<Vec<(usize, f64)>> = vec![Vec::new(); nv];
        for &(a, b) in directed.keys() {
            let len = norm(sub(points[a], points[b]));
            adj[a].push((b, len));
        }
        let mut neighbors_ptr = vec![0];
        let mut neighbors = Vec::new();
        for list in &mut adj {
            list.sort_by_key(|e| e.0);
            neighbors.extend_from_slice(list);
            neighbors_ptr.push(neighbors.len());
        }

        let mut space = Self {
            points,
            triangles,
            mass,
            stiffness,
            face_area,
            face_gradients,
            frames,
            vertex_faces_ptr,
            vertex_faces,
            neighbors_ptr,
            neighbors,
            max_edge,
            metadata: SpaceMetadata {
                n: 2,
                curvature_lower: 0.0,
                dimension_upper: 2.0,
                diameter: 1.0,
            },
        };
        space.metadata.diameter = space.estimate_diameter();
        Ok(space)
    }

    /// Replaces the declared metadata (curvature bound, dimension bound).
    pub fn with_metadata(mut self, metadata: SpaceMetadata) -> Result<Self> {
        metadata.validate()?;
        self.metadata = metadata;
        Ok(self)
    }

    pub fn metadata(&self) -> &SpaceMetadata {
        &self.metadata
    }

    pub fn vertex_count(&self) -> usize {
        self.points.len()
    }

    pub fn face_count(&self) -> usize {
        self.triangles.len()
    }

    pub fn points(&self) -> &[Vec3] {
        &self.points
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    pub fn stiffness(&self) -> &CsrMatrix {
        &self.stiffness
    }

    pub fn face_areas(&self) -> &[f64] {
        &self.face_area
    }

    pub fn total_measure(&self) -> f64 {
        self.mass.iter().sum()
    }

    pub fn max_edge_length(&self) -> f64 {
        self.max_edge
    }

    /// Ambient gradients of the three hat functions on one face.
    pub fn hat_gradients(&self, face: usize) -> &[Vec3; 3] {
        &self.face_gradients[face]
    }

    /// Orthonormal tangent frame (e1, e2) in which vertex tensors are expressed.
    pub fn frame(&self, vertex: usize) -> &[Vec3; 2] {
        &self.frames[vertex]
    }

    pub(crate) fn faces_of(&self, v: usize) -> &[usize] {
        &self.vertex_faces[self.vertex_faces_ptr[v]..self.vertex_faces_ptr[v + 1]]
    }

    pub(crate) fn neighbors_of(&self, v: usize) -> &[(usize, f64)] {
        &self.neighbors[self.neighbors_ptr[v]..self.neighbors_ptr[v + 1]]
    }

    /// Ambient gradient of a piecewise-linear function on one face.
    pub fn face_gradient(&self, face: usize, values: &[f64]) -> Vec3 {
        let t = self.triangles[face];
        let g = &self.face_gradients[face];
        let mut out = [0.0; 3];
        for i in 0..3 {
            for k in 0..3 {
                out[k] += values[t[i]] * g[i][k];
            }
        }
        out
    }

    /// Σ_faces area·|∇f|², which equals fᵀSf.
    pub fn face_energy(&self, values: &[f64]) -> f64 {
        (0..self.face_count())
            .map(|f| {
                let g = self.face_gradient(f, values);
                self.face_area[f] * dot(g, g)
            })
            .sum()
    }

    /// Averages per-face quantities to vertices with weights area/3 ÷ mass.
    pub(crate) fn average_to_vertices<const K: usize>(&self, per_face: &[[f64; K]]) -> Vec<[f64; K]> {
        let mut out = vec![[0.0; K]; self.vertex_count()];
        for (f, t) in self.triangles.iter().enumerate() {
            let w = self.face_area[f] / 3.0;
            for &v in t {
                for k in 0..K {
                    out[v][k] += w * per_face[f][k];
                }
            }
        }
        for (v, o) in out.iter_mut().enumerate() {
            let m = self.mass[v];
            o.iter_mut().for_each(|x| *x /= m);
        }
        out
    }

    /// Vertex gradients in the local tangent frames (mass-averaged face gradients).
    pub fn gradient(&self, f: &ScalarField) -> Result<CovectorField> {
        crate::field::check_nodes(f.len(), self.vertex_count())?;
        let per_face: Vec<[f64; 3]> = (0..self.face_count()).map(|k| self.face_gradient(k, f.values())).collect();
        let avg = self.average_to_vertices(&per_face);
        let mut out = CovectorField::zeros(self.vertex_count(), 2);
        for (v, g) in avg.iter().enumerate() {
            let fr = &self.frames[v];
            let c = out.at_mut(v);
            c[0] = dot(*g, fr[0]);
            c[1] = dot(*g, fr[1]);
        }
        Ok(out)
    }

    /// Γ(f, g) per face, mass-averaged to vertices.
    pub fn carre_du_champ(&self, f: &ScalarField, g: &ScalarField) -> Result<ScalarField> {
        crate::field::check_nodes(f.len(), self.vertex_count())?;
        crate::field::check_nodes(g.len(), self.vertex_count())?;
        let per_face: Vec<[f64; 1]> = (0..self.face_count())
            .map(|k| [dot(self.face_gradient(k, f.values()), self.face_gradient(k, g.values()))])
            .collect();
        Ok(ScalarField::new(self.average_to_vertices(&per_face).into_iter().map(|x| x[0]).collect()))
    }

    /// Projects per-vertex ambient 3×3 symmetric tensors (packed) to the
    /// 2×2 vertex frames.
    pub(crate) fn project_to_frames(&self, ambient: &[[f64; 6]]) -> TensorField {
        let mut out = TensorField::zeros(self.vertex_count(), 2);
        for (v, a) in ambient.iter().enumerate() {
            let fr = &self.frames[v];
            let m = unpack3(a);
            for i in 0..2 {
                for j in i..2 {
                    let mut s = 0.0;
                    for p in 0..3 {
                        for q in 0..3 {
                            s += fr[i][p] * m[p][q] * fr[j][q];
                        }
                    }
                    out.set(v, i, j, s);
                }
            }
        }
        out
    }

    /// Tangent projector I − nnᵀ per face, averaged to vertices: the induced
    /// first fundamental form in the vertex frames.
    pub fn first_fundamental_form(&self) -> TensorField {
        let per_face: Vec<[f64; 6]> = (0..self.face_count())
            .map(|f| {
                let g = &self.face_gradients[f];
                // Hat gradients span the face plane; the projector is I − nnᵀ.
                let n = cross(g[0], g[1]);
                let n = scale(n, 1.0 / norm(n));
                let mut p = [0.0; 6];
                let mut k = 0;
                for i in 0..3 {
                    for j in i..3 {
                        p[k] = if i == j { 1.0 } else { 0.0 } - n[i] * n[j];
                        k += 1;
                    }
                }
                p
            })
            .collect();
        self.project_to_frames(&self.average_to_vertices(&per_face))
    }

    /// Shortest-path distances along edges from `source`, ∞ beyond `cutoff`.
    pub fn graph_distances(&self, source: usize, cutoff: f64) -> Result<Vec<f64>> {
        self.check_vertex(source)?;
        Ok(geodesic::dijkstra(self, source, cutoff))
    }

    /// Approximate geodesic distances (edge paths refined by planar unfolding
    /// across triangles), ∞ beyond `cutoff`.
    pub fn geodesic_distances(&self, source: usize, cutoff: f64) -> Result<Vec<f64>> {
        self.check_vertex(source)?;
        Ok(geodesic::fast_marching(self, source, cutoff))
    }

    /// 𝔪(B_r(v)). Inside each triangle the distance is modelled by a point
    /// source fitted to the three vertex distances, d(y)² = |y − s|² + z²,
    /// and the ball area is that of a disc clipped to the triangle. Faces
    /// where no such source fits fall back to the linear interpolant.
    pub fn ball_volume(&self, v: usize, r: f64) -> Result<f64> {
        self.check_vertex(v)?;
        if !(r > 0.0) || !r.is_finite() {
            return Err(invalid("r", "radius must be positive and finite"));
        }
        let cutoff = r + 2.0 * self.max_edge;
        let d = geodesic::fast_marching(self, v, cutoff);
        let mut total = 0.0;
        for (f, t) in self.triangles.iter().enumerate() {
            let vals = [d[t[0]], d[t[1]], d[t[2]]];
            if vals.iter().all(|x| x.is_finite()) {
                let pts = [self.points[t[0]], self.points[t[1]], self.points[t[2]]];
                total += match source_model_area(pts, vals, r) {
                    Some(a) => a,
                    None => self.face_area[f] * sublevel_fraction(vals, r),
                };
            }
        }
        Ok(total)
    }

    /// Sum of vertex masses within edge-path distance r.
    pub fn graph_ball_volume(&self, v: usize, r: f64) -> Result<f64> {
        self.check_vertex(v)?;
        if !(r > 0.0) || !r.is_finite() {
            return Err(invalid("r", "radius must be positive and finite"));
        }
        let d = geodesic::dijkstra(self, v, r);
        Ok(d.iter().zip(&self.mass).filter(|(d, _)| **d <= r).map(|(_, m)| m).sum())
    }

    fn check_vertex(&self, v: usize) -> Result<()> {
        if v >= self.vertex_count() {
            return Err(invalid("x", format!("vertex {v} out of range")));
        }
        Ok(())
    }

    fn estimate_diameter(&self) -> f64 {
        let d0 = geodesic::dijkstra(self, 0, f64::INFINITY);
        let (far, _) = d0
            .iter()
            .enumerate()
            .fold((0, 0.0), |acc, (i, &d)| if d > acc.1 { (i, d) } else { acc });
        let d1 = geodesic::fast_marching(self, far, f64::INFINITY);
        d1.iter().copied().fold(0.0, f64::max)
    }
}

/// Fraction of a triangle where the linear interpolant of `vals` is below `r`.
pub(crate) fn sublevel_fraction(mut vals: [f64; 3], r: f64) -> f64 {
    vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let [d0, d1, d2] = vals;
    if r <= d0 {
        0.0
    } else if r >= d2 {
        1.0
    } else if r <= d1 {
        (r - d0) * (r - d0) / ((d1 - d0) * (d2 - d0))
    } else {
        1.0 - (d2 - r) * (d2 - r) / ((d2 - d0) * (d2 - d1))
    }
}

/// Area of {y ∈ T : |y − s|² + z² < r²} with the virtual source (s, z)
/// reproducing the vertex distances; `None` when the distances admit no source.
fn source_model_area(p: [Vec3; 3], d: [f64; 3], r: f64) -> Option<f64> {
    if d.iter().all(|&x| x <= r) {
        return Some(0.5 * norm(cross(sub(p[1], p[0]), sub(p[2], p[0]))));
    }
    let e1 = sub(p[1], p[0]);
    let b = norm(e1);
    let u = scale(e1, 1.0 / b);
    let w = sub(p[2], p[0]);
    let cx = dot(w, u);
    let cy2 = dot(w, w) - cx * cx;
    if cy2 <= 0.0 {
        return None;
    }
    let cy = sqrt(cy2);
    let (da2, db2, dc2) = (d[0] * d[0], d[1] * d[1], d[2] * d[2]);
    let sx = (b * b + da2 - db2) / (2.0 * b);
    let sy = (cx * cx + cy2 + da2 - dc2 - 2.0 * sx * cx) / (2.0 * cy);
    let z2 = da2 - sx * sx - sy * sy;
    let scale2 = da2.max(db2).max(dc2).max(b * b);
    if z2 < -1e-9 * scale2 {
        return None;
    }
    let rho2 = r * r - z2.max(0.0);
    if rho2 <= 0.0 {
        return Some(0.0);
    }
    let rho = sqrt(rho2);
    let tri = [[-sx, -sy], [b - sx, -sy], [cx - sx, cy - sy]];
    let mut area = 0.0;
    for k in 0..3 {
        area += disc_wedge(tri[k], tri[(k + 1) % 3], rho);
    }
    Some(area.abs())
}

/// Signed area of the disc of radius r about the origin intersected with the
/// triangle (0, a, b).
fn disc_wedge(a: [f64; 2], b: [f64; 2], r: f64) -> f64 {
    let dx = [b[0] - a[0], b[1] - a[1]];
    let qa = dx[0] * dx[0] + dx[1] * dx[1];
    if qa == 0.0 {
        return 0.0;
    }
    let qb = a[0] * dx[0] + a[1] * dx[1];
    let qc = a[0] * a[0] + a[1] * a[1] - r * r;
    let disc = qb * qb - qa * qc;
    let mut cuts = [0.0, 1.0, 1.0, 1.0];
    let mut m = 1;
    if disc > 0.0 {
        let sq = sqrt(disc);
        for tt in [(-qb - sq) / qa, (-qb + sq) / qa] {
            if tt > 0.0 && tt < 1.0 {
                cuts[m] = tt;
                m += 1;
            }
        }
    }
    cuts[m] = 1.0;
    let at = |t: f64| [a[0] + t * dx[0], a[1] + t * dx[1]];
    let mut s = 0.0;
    for k in 0..m {
        let (t0, t1) = (cuts[k], cuts[k + 1]);
        if t1 <= t0 {
            continue;
        }
        let (p, q) = (at(t0), at(t1));
        let mid = at(0.5 * (t0 + t1));
        let cr = p[0] * q[1] - p[1] * q[0];
        if mid[0] * mid[0] + mid[1] * mid[1] <= r * r {
            s += 0.5 * cr;
        } else {
            let dt = p[0] * q[0] + p[1] * q[1];
            s += 0.5 * r * r * crate::math::atan2(cr, dt);
        }
    }
    s
}

fn unpack3(a: &[f64; 6]) -> [[f64; 3]; 3] {
    [[a[0], a[1], a[2]], [a[1], a[3], a[4]], [a[2], a[4], a[5]]]
}

fn tangent_frame(n: Vec3) -> [Vec3; 2] {
    let n = scale(n, 1.0 / norm(n));
    let axis = (0..3)
        .min_by(|&i, &j| n[i].abs().total_cmp(&n[j].abs()))
        .unwrap();
    let mut a = [0.0; 3];
    a[axis] = 1.0;
    let e1 = sub(a, scale(n, n[axis]));
    let e1 = scale(e1, 1.0 / norm(e1));
    [e1, cross(n, e1)]
}

fn link_is_connected(v: usize, faces: &[usize], triangles: &[[usize; 3]]) -> bool {
    // Faces around v are connected when they can be chained through shared edges.
    let mut seen = vec![false; faces.len()];
    let mut stack = vec![0];
    seen[0] = true;
    let others = |f: usize| {
        let t = triangles[f];
        let mut o = [0; 2];
        let mut k = 0;
        for &w in &t {
            if w != v && k < 2 {
                o[k] = w;
                k += 1;
            }
        }
        o
    };
    while let Some(i) = stack.pop() {
        let oi = others(faces[i]);
        for (j, s) in seen.iter_mut().enumerate() {
            if !*s {
                let oj = others(faces[j]);
                if oi.iter().any(|a| oj.contains(a)) {
                    *s = true;
                    stack.push(j);
                }
            }
        }
    }
    seen.iter().all(|&s| s)
}
