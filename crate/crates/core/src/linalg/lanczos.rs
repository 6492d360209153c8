//! Smallest eigenpairs of the generalized problem S v = λ M v with S sparse
//! symmetric positive semidefinite and M diagonal positive.
//!
//! Large problems run a block Lanczos iteration on the shift-inverted operator
//! (S − σM)⁻¹M, which is self-adjoint in the M-inner product, with full
//! reorthogonalization. Small problems go straight to a dense solve.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{CsrMatrix, EnvelopeCholesky};
use crate::error::{invalid, Error, Result};
use crate::math::sqrt;

#[derive(Debug, Clone)]
pub struct EigenOptions {
    pub block_size: usize,
    /// Convergence threshold on the Ritz residual relative to the Ritz value.
    pub tolerance: f64,
    /// Krylov dimension cap; `None` means min(n, 4·count + 200).
    pub max_dim: Option<usize>,
    /// Problems with at most this many unknowns use the dense solver.
    pub dense_threshold: usize,
    pub seed: u64,
}

impl Default for EigenOptions {
    fn default() -> Self {
        Self {
            block_size: 8,
            tolerance: 1e-10,
            max_dim: None,
            dense_threshold: 700,
            seed: 0x5eed,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GeneralizedEigen {
    pub values: Vec<f64>,
    /// M-orthonormal eigenvectors, one `Vec` per pair.
    pub vectors: Vec<Vec<f64>>,
    /// ‖S v − λ M v‖ / (max|S|·‖v‖ + |λ|‖M v‖) per pair.
    pub residuals: Vec<f64>,
}

pub fn smallest_generalized(
    stiffness: &CsrMatrix,
    mass: &[f64],
    count: usize,
    options: &EigenOptions,
) -> Result<GeneralizedEigen> {
    let n = stiffness.dim();
    if mass.len() != n {
        return Err(invalid("mass", "length differs from stiffness dimension"));
    }
    if count == 0 || count > n {
        return Err(invalid("count", "must lie in 1..=n"));
    }
    if mass.iter().any(|&m| !(m > 0.0)) {
        return Err(invalid("mass", "weights must be strictly positive"));
    }
    let (values, vectors) = if n <= options.dense_threshold {
        dense_solve(stiffness, mass, count)
    } else {
        block_lanczos(stiffness, mass, count, options)?
    };
    Ok(finish(stiffness, mass, values, vectors))
}

fn dense_solve(stiffness: &CsrMatrix, mass: &[f64], count: usize) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = stiffness.dim();
    let inv_sqrt: Vec<f64> = mass.iter().map(|m| 1.0 / sqrt(*m)).collect();
    let mut a = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        for (j, v) in stiffness.row(i) {
            a[(i, j)] = v * inv_sqrt[i] * inv_sqrt[j];
        }
    }
    let a = (&a + a.transpose()) * 0.5;
    let eig = symmetric_eigen(a);
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&x, &y| eig.eigenvalues[x].total_cmp(&eig.eigenvalues[y]));
    let values = idx[..count].iter().map(|&k| eig.eigenvalues[k]).collect();
    let vectors = idx[..count]
        .iter()
        .map(|&k| (0..n).map(|i| eig.eigenvectors[(i, k)] * inv_sqrt[i]).collect())
        .collect();
    (values, vectors)
}

/// Symmetric eigendecomposition whose eigenvalues are recomputed as Rayleigh
/// quotients of the returned columns. nalgebra 0.33 can hand back columns that
/// are eigenvectors but paired with the wrong eigenvalue.
fn symmetric_eigen(a: DMatrix<f64>) -> SymmetricEigen<f64, nalgebra::Dyn> {
    let mut eig = SymmetricEigen::new(a.clone());
    let av = &a * &eig.eigenvectors;
    let values: Vec<f64> = (0..a.ncols())
        .map(|k| eig.eigenvectors.column(k).dot(&av.column(k)))
        .collect();
    eig.eigenvalues = DVector::from_vec(values);
    eig
}

fn m_dot(mass: &[f64], x: &[f64], y: &[f64]) -> f64 {
    mass.iter().zip(x).zip(y).map(|((m, a), b)| m * a * b).sum()
}

fn block_lanczos(
    stiffness: &CsrMatrix,
    mass: &[f64],
    count: usize,
    options: &EigenOptions,
) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let n = stiffness.dim();
    let b = options.block_size.clamp(1, count.max(1));
    let max_dim = options
        .max_dim
        .unwrap_or(4 * count + 200)
        .min(n)
        .max(count + b);
    let max_dim = max_dim - max_dim % b;
    if max_dim < count {
        return Err(invalid("max_dim", "Krylov dimension cap below requested count"));
    }

    // Shift below the (PSD) spectrum so the shifted matrix is SPD.
    let scale = (0..n).map(|i| stiffness.get(i, i) / mass[i]).sum::<f64>() / n as f64;
    let sigma = -1e-6 * scale.max(1e-300);
    let shifted = stiffness.add_diagonal(mass, -sigma);
    let chol = EnvelopeCholesky::factor(&shifted)?;

    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let mut q = DMatrix::<f64>::zeros(n, max_dim + b);
    let mut t = DMatrix::<f64>::zeros(max_dim + b, max_dim + b);

    let mut block = DMatrix::<f64>::from_fn(n, b, |_, _| rng.gen::<f64>() - 0.5);
    m_orthonormalize(&mut block, &q, 0, mass, &mut rng);
    q.columns_mut(0, b).copy_from(&block);

    let mut work = vec![0.0; n];
    let mut column = vec![0.0; n];
    let mut dim = b;
    let mut last_beta = DMatrix::<f64>::zeros(b, b);
    let mut next_check = (count + 2 * b).min(max_dim);
    let mut worst_residual = f64::INFINITY;
    let mut converged = 0;
    let mut steps = 0;

    loop {
        steps += 1;
        let start = dim - b;
        let mut w = DMatrix::<f64>::zeros(n, b);
        for c in 0..b {
            for i in 0..n {
                column[i] = mass[i] * q[(i, start + c)];
            }
            chol.solve_in_place(&mut column, &mut work);
            w.column_mut(c).copy_from_slice(&column);
        }
        let mw = scale_rows(&w, mass);
        let qj = q.columns(start, b);
        let mut alpha = qj.tr_mul(&mw);
        alpha = (&alpha + alpha.transpose()) * 0.5;
        w -= &qj * &alpha;
        if start >= b {
            let qprev = q.columns(start - b, b);
            w -= qprev * last_beta.transpose();
        }
        // Full reorthogonalization against the whole basis, repeated when a
        // column loses more than 30% of its M-norm (DGKS criterion).
        let norms = |w: &DMatrix<f64>| -> Vec<f64> {
            (0..b)
                .map(|c| sqrt(m_dot(mass, w.column(c).as_slice(), w.column(c).as_slice())))
                .collect()
        };
        let mut before = norms(&w);
        for _ in 0..3 {
            let basis = q.columns(0, dim);
            let mw = scale_rows(&w, mass);
            let coeff = basis.tr_mul(&mw);
            w -= basis * coeff;
            let after = norms(&w);
            let kept = before.iter().zip(&after).all(|(b0, a0)| *a0 > 0.7 * b0);
            if kept {
                break;
            }
            before = after;
        }
        let beta = m_orthonormalize(&mut w, &q, dim, mass, &mut rng);

        t.view_mut((start, start), (b, b)).copy_from(&alpha);
        t.view_mut((dim, start), (b, b)).copy_from(&beta);
        t.view_mut((start, dim), (b, b)).copy_from(&beta.transpose());
        q.columns_mut(dim, b).copy_from(&w);
        last_beta = beta.clone();

        if dim >= next_check || dim + b > max_dim {
            let tm = t.view((0, 0), (dim, dim)).into_owned();
            let eig = symmetric_eigen(tm);
            let mut idx: Vec<usize> = (0..dim).collect();
            idx.sort_by(|&x, &y| eig.eigenvalues[y].total_cmp(&eig.eigenvalues[x]));
            let wanted = &idx[..count];
            converged = 0;
            worst_residual = 0.0;
            for &k in wanted {
                let nu = eig.eigenvalues[k];
                let tail = eig.eigenvectors.view((dim - b, k), (b, 1));
                let r = (&beta * tail).norm();
                let rel = r / nu.abs().max(1e-300);
                worst_residual = worst_residual.max(rel);
                if rel <= options.tolerance {
                    converged += 1;
                }
            }
            if converged == count {
                let basis = q.columns(0, dim);
                let mut y = DMatrix::<f64>::zeros(dim, count);
                for (c, &k) in wanted.iter().enumerate() {
                    y.column_mut(c).copy_from(&eig.eigenvectors.column(k));
                }
                let x = basis * y;
                let values = wanted
                    .iter()
                    .map(|&k| sigma + 1.0 / eig.eigenvalues[k])
                    .collect();
                let vectors = (0..count).map(|c| x.column(c).iter().copied().collect()).collect();
                return Ok((values, vectors));
            }
            next_check = (dim + (dim / 6).max(2 * b)).min(max_dim);
        }
        dim += b;
        if dim > max_dim {
            return Err(Error::Solver {
                requested: count,
                converged,
                iterations: steps,
                residual: worst_residual,
            });
        }
    }
}

fn scale_rows(w: &DMatrix<f64>, mass: &[f64]) -> DMatrix<f64> {
    let mut out = w.clone();
    for (i, m) in mass.iter().enumerate() {
        out.row_mut(i).scale_mut(*m);
    }
    out
}

/// M-orthonormalizes the columns of `w` in place (modified Gram–Schmidt), also
/// against the first `against` columns of `q`. Returns R with W_in = W_out R.
/// Columns that vanish are replaced by fresh random directions.
fn m_orthonormalize(
    w: &mut DMatrix<f64>,
    q: &DMatrix<f64>,
    against: usize,
    mass: &[f64],
    rng: &mut ChaCha8Rng,
) -> DMatrix<f64> {
    let (n, b) = w.shape();
    let mut r = DMatrix::<f64>::zeros(b, b);
    for c in 0..b {
        let original = sqrt(m_dot(mass, w.column(c).as_slice(), w.column(c).as_slice()));
        for p in 0..c {
            let d = m_dot(mass, w.column(p).as_slice(), w.column(c).as_slice());
            r[(p, c)] = d;
            let wp = w.column(p).clone_owned();
            w.column_mut(c).axpy(-d, &wp, 1.0);
        }
        let mut norm = sqrt(m_dot(mass, w.column(c).as_slice(), w.column(c).as_slice()));
        if norm <= 1e-10 * original.max(1e-300) {
            // Deflated direction: restart with a random vector.
            r.column_mut(c).fill(0.0);
            for _attempt in 0..4 {
                for i in 0..n {
                    w[(i, c)] = rng.gen::<f64>() - 0.5;
                }
                for _ in 0..2 {
                    for k in 0..against {
                        let d = m_dot(mass, q.column(k).as_slice(), w.column(c).as_slice());
                        w.column_mut(c).axpy(-d, &q.column(k), 1.0);
                    }
                    for p in 0..c {
                        let d = m_dot(mass, w.column(p).as_slice(), w.column(c).as_slice());
                        let wp = w.column(p).clone_owned();
                        w.column_mut(c).axpy(-d, &wp, 1.0);
                    }
                }
                norm = sqrt(m_dot(mass, w.column(c).as_slice(), w.column(c).as_slice()));
                if norm > 1e-8 {
                    break;
                }
            }
            w.column_mut(c).scale_mut(1.0 / norm);
            continue;
        }
        r[(c, c)] = norm;
        w.column_mut(c).scale_mut(1.0 / norm);
    }
    r
}

/// Rayleigh-quotient refinement, cluster orthonormalization in index order,
/// deterministic signs and true residuals.
fn finish(
    stiffness: &CsrMatrix,
    mass: &[f64],
    values: Vec<f64>,
    mut vectors: Vec<Vec<f64>>,
) -> GeneralizedEigen {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut values: Vec<f64> = order.iter().map(|&k| values[k]).collect();
    vectors = order.iter().map(|&k| core::mem::take(&mut vectors[k])).collect();

    let count = values.len();
    let mut start = 0;
    while start < count {
        let mut end = start + 1;
        while end < count
            && (values[end] - values[end - 1]).abs() <= 1e-8 * values[end].abs().max(1e-12)
        {
            end += 1;
        }
        for a in start..end {
            for p in start..a {
                let d = m_dot(mass, &vectors[p], &vectors[a]);
                let (head, tail) = vectors.split_at_mut(a);
                for (x, y) in tail[0].iter_mut().zip(head[p].iter()) {
                    *x -= d * y;
                }
            }
            let norm = sqrt(m_dot(mass, &vectors[a], &vectors[a]));
            vectors[a].iter_mut().for_each(|x| *x /= norm);
        }
        start = end;
    }

    let n = stiffness.dim();
    let s_norm = stiffness.max_abs();
    let mut sv = vec![0.0; n];
    let mut residuals = Vec::with_capacity(count);
    for (value, v) in values.iter_mut().zip(vectors.iter_mut()) {
        let pivot = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        if let Some(first) = v.iter().find(|x| x.abs() > 1e-6 * pivot) {
            if *first < 0.0 {
                v.iter_mut().for_each(|x| *x = -*x);
            }
        }
        stiffness.mul_vec(v, &mut sv);
        let rq = sv.iter().zip(v.iter()).map(|(a, b)| a * b).sum::<f64>();
        *value = if rq.abs() < 1e-13 * stiffness.max_abs() { 0.0 } else { rq };
        let mut num = 0.0;
        let mut vn = 0.0;
        let mut mn = 0.0;
        for i in 0..n {
            let mv = mass[i] * v[i];
            let r = sv[i] - *value * mv;
            num += r * r;
            vn += v[i] * v[i];
            mn += mv * mv;
        }
        let scale = s_norm * sqrt(vn) + value.abs() * sqrt(mn);
        residuals.push(sqrt(num) / scale.max(1e-300));
    }
    GeneralizedEigen {
        values,
        vectors,
        residuals,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::{cos, PI};

    /// Lumped-mass P1 Laplacian on a uniform cycle of length 2π.
    fn cycle(n: usize) -> (CsrMatrix, Vec<f64>) {
        let h = 2.0 * PI / n as f64;
        let mut t = Vec::new();
        for i in 0..n {
            let j = (i + 1) % n;
            t.push((i, i, 1.0 / h));
            t.push((j, j, 1.0 / h));
            t.push((i, j, -1.0 / h));
            t.push((j, i, -1.0 / h));
        }
        (CsrMatrix::from_triplets(n, &t), vec![h; n])
    }

    fn discrete_cycle_eigenvalue(n: usize, k: usize) -> f64 {
        let h = 2.0 * PI / n as f64;
        2.0 * (1.0 - cos(k as f64 * h)) / (h * h)
    }

    fn check(n: usize, options: &EigenOptions) {
        let (s, m) = cycle(n);
        let eig = smallest_generalized(&s, &m, 9, options).unwrap();
        let expected = [0, 1, 1, 2, 2, 3, 3, 4, 4];
        for (value, &k) in eig.values.iter().zip(expected.iter()) {
            let exact = discrete_cycle_eigenvalue(n, k);
            assert!((value - exact).abs() < 1e-9 * exact.max(1.0), "{value} vs {exact}");
        }
        for a in 0..9 {
            for b in 0..9 {
                let d = m_dot(&m, &eig.vectors[a], &eig.vectors[b]);
                let target = if a == b { 1.0 } else { 0.0 };
                assert!((d - target).abs() < 1e-9);
            }
        }
        assert!(eig.residuals.iter().all(|&r| r < 1e-8), "{:?}", eig.residuals);
    }

    #[test]
    fn dense_path_matches_closed_form() {
        check(64, &EigenOptions::default());
    }

    #[test]
    fn lanczos_path_matches_closed_form() {
        let options = EigenOptions {
            dense_threshold: 0,
            ..EigenOptions::default()
        };
        check(1500, &options);
    }

    #[test]
    fn budget_exhaustion_reports_solver_error() {
        let (s, m) = cycle(1200);
        let options = EigenOptions {
            dense_threshold: 0,
            max_dim: Some(24),
            ..EigenOptions::default()
        };
        match smallest_generalized(&s, &m, 20, &options) {
            Err(Error::Solver { requested, .. }) => assert_eq!(requested, 20),
            other => panic!("expected solver error, got {other:?}"),
        }
    }
}
