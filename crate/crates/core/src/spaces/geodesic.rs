use alloc::collections::BinaryHeap;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

use crate::math::sqrt;

use super::mesh::{norm, sub, DiscreteSpace};

#[derive(PartialEq)]
struct Entry(f64, usize);

impl Eq for Entry {}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Entry {
    // Min-heap on distance, ties by vertex index.
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.total_cmp(&self.0).then_with(|| other.1.cmp(&self.1))
    }
}

pub(crate) fn dijkstra(mesh: &DiscreteSpace, source: usize, cutoff: f64) -> Vec<f64> {
    let mut dist = vec![f64::INFINITY; mesh.vertex_count()];
    let mut heap = BinaryHeap::new();
    dist[source] = 0.0;
    heap.push(Entry(0.0, source));
    while let Some(Entry(d, v)) = heap.pop() {
        if d > dist[v] {
            continue;
        }
        for &(w, len) in mesh.neighbors_of(v) {
            let nd = d + len;
            if nd < dist[w] && nd <= cutoff {
                dist[w] = nd;
                heap.push(Entry(nd, w));
            }
        }
    }
    dist
}

/// Dijkstra ordering with a planar-unfolding update through every triangle
/// whose other two vertices are already accepted.
pub(crate) fn fast_marching(mesh: &DiscreteSpace, source: usize, cutoff: f64) -> Vec<f64> {
    let n = mesh.vertex_count();
    let mut dist = vec![f64::INFINITY; n];
    let mut accepted = vec![false; n];
    let mut heap = BinaryHeap::new();
    dist[source] = 0.0;
    heap.push(Entry(0.0, source));
    let pts = mesh.points();
    while let Some(Entry(d, v)) = heap.pop() {
        if accepted[v] || d > dist[v] {
            continue;
        }
        accepted[v] = true;
        for &f in mesh.faces_of(v) {
            let t = mesh.triangles()[f];
            for &w in &t {
                if w == v || accepted[w] {
                    continue;
                }
                let u = t.iter().copied().find(|&x| x != v && x != w).unwrap();
                let mut cand = d + norm(sub(pts[w], pts[v]));
                if accepted[u] {
                    if let Some(c) = unfold(pts[v], d, pts[u], dist[u], pts[w]) {
                        cand = cand.min(c);
                    }
                }
                if cand < dist[w] && cand <= cutoff {
                    dist[w] = cand;
                    heap.push(Entry(cand, w));
                }
            }
        }
    }
    dist
}

/// Distance at `c` from a virtual planar source seen at distances `da`, `db`
/// from `a`, `b`, if the straight ray crosses the segment ab.
fn unfold(a: [f64; 3], da: f64, b: [f64; 3], db: f64, c: [f64; 3]) -> Option<f64> {
    let ab = norm(sub(b, a));
    let ac = norm(sub(c, a));
    let bc = norm(sub(c, b));
    let xc = (ac * ac - bc * bc + ab * ab) / (2.0 * ab);
    let yc2 = ac * ac - xc * xc;
    if yc2 <= 0.0 {
        return None;
    }
    let yc = sqrt(yc2);
    let xs = (da * da - db * db + ab * ab) / (2.0 * ab);
    let ys2 = da * da - xs * xs;
    if ys2 < 0.0 {
        return None;
    }
    let ys = -sqrt(ys2);
    let cross_x = xs + (xc - xs) * (-ys) / (yc - ys);
    if cross_x < 0.0 || cross_x > ab {
        return None;
    }
    let (dx, dy) = (xc - xs, yc - ys);
    Some(sqrt(dx * dx + dy * dy))
}
