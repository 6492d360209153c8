use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use crate::math::sqrt;

/// Regular octahedron inscribed in the unit sphere, outward oriented.
pub fn octahedron() -> (Vec<[f64; 3]>, Vec<[usize; 3]>) {
    let p = vec![
        [1.0, 0.0, 0.0],
        [-1.0, 0.0, 0.0],
        [0.0, 1.0, 0.0],
        [0.0, -1.0, 0.0],
        [0.0, 0.0, 1.0],
        [0.0, 0.0, -1.0],
    ];
    let t = vec![
        [0, 2, 4],
        [2, 1, 4],
        [1, 3, 4],
        [3, 0, 4],
        [2, 0, 5],
        [1, 2, 5],
        [3, 1, 5],
        [0, 3, 5],
    ];
    (p, t)
}

/// Unit icosphere: the icosahedron subdivided `level` times, vertices pushed
/// to the sphere. Level k has 10·4ᵏ + 2 vertices.
pub fn icosphere(level: usize) -> (Vec<[f64; 3]>, Vec<[usize; 3]>) {
    let g = (1.0 + sqrt(5.0)) / 2.0;
    let mut p: Vec<[f64; 3]> = vec![
        [-1.0, g, 0.0],
        [1.0, g, 0.0],
        [-1.0, -g, 0.0],
        [1.0, -g, 0.0],
        [0.0, -1.0, g],
        [0.0, 1.0, g],
        [0.0, -1.0, -g],
        [0.0, 1.0, -g],
        [g, 0.0, -1.0],
        [g, 0.0, 1.0],
        [-g, 0.0, -1.0],
        [-g, 0.0, 1.0],
    ];
    for v in &mut p {
        normalize(v);
    }
    let mut t: Vec<[usize; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    for _ in 0..level {
        let mut mid: BTreeMap<(usize, usize), usize> = BTreeMap::new();
        let mut next = Vec::with_capacity(4 * t.len());
        let mut midpoint = |a: usize, b: usize, p: &mut Vec<[f64; 3]>| {
            let key = (a.min(b), a.max(b));
            *mid.entry(key).or_insert_with(|| {
                let mut m = [
                    0.5 * (p[a][0] + p[b][0]),
                    0.5 * (p[a][1] + p[b][1]),
                    0.5 * (p[a][2] + p[b][2]),
                ];
                normalize(&mut m);
                p.push(m);
                p.len() - 1
            })
        };
        for &[a, b, c] in &t {
            let ab = midpoint(a, b, &mut p);
            let bc = midpoint(b, c, &mut p);
            let ca = midpoint(c, a, &mut p);
            next.push([a, ab, ca]);
            next.push([b, bc, ab]);
            next.push([c, ca, bc]);
            next.push([ab, bc, ca]);
        }
        t = next;
    }
    (p, t)
}

fn normalize(v: &mut [f64; 3]) {
    let n = sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
    v.iter_mut().for_each(|x| *x /= n);
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn icosphere_counts() {
        for level in 0..4 {
            let (p, t) = icosphere(level);
            assert_eq!(p.len(), 10 * 4usize.pow(level as u32) + 2);
            assert_eq!(t.len(), 20 * 4usize.pow(level as u32));
        }
    }

    #[test]
    fn faces_point_outward() {
        for (p, t) in [octahedron(), icosphere(1)] {
            for f in &t {
                let [a, b, c] = [p[f[0]], p[f[1]], p[f[2]]];
                let u = [b[0] - a[0], b[1] - a[1], b[2] - a[2]];
                let v = [c[0] - a[0], c[1] - a[1], c[2] - a[2]];
                let n = [u[1] * v[2] - u[2] * v[1], u[2] * v[0] - u[0] * v[2], u[0] * v[1] - u[1] * v[0]];
                assert!(n[0] * a[0] + n[1] * a[1] + n[2] * a[2] > 0.0);
            }
        }
    }
}
