//! Sparse matrix storage, direct/iterative solvers, and a generalized
//! eigenvalue routine for inf-sup constants.

use std::io::Write;

use faer::prelude::SpSolver;
use faer::sparse::SparseColMat;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LinalgError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("singular matrix (pivot failure near row {0})")]
    Singular(usize),
    #[error("inverse iteration did not converge after {0} iterations")]
    EigNonConvergence(usize),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Coordinate-triplet accumulation buffer; duplicates are summed at finalize.
#[derive(Debug, Clone)]
pub struct Triplets {
    pub nrows: usize,
    pub ncols: usize,
    pub entries: Vec<(usize, usize, f64)>,
}

impl Triplets {
    pub fn new(nrows: usize, ncols: usize) -> Self {
        Triplets { nrows, ncols, entries: Vec::new() }
    }

    pub fn push(&mut self, i: usize, j: usize, v: f64) {
        debug_assert!(i < self.nrows && j < self.ncols);
        if v != 0.0 {
            self.entries.push((i, j, v));
        }
    }

    pub fn merge(&mut self, other: Triplets) {
        assert_eq!(self.nrows, other.nrows);
        assert_eq!(self.ncols, other.ncols);
        self.entries.extend(other.entries);
    }

    pub fn finalize(mut self) -> SparseMatrix {
        self.entries
            .sort_unstable_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut col_idx: Vec<usize> = Vec::with_capacity(self.entries.len());
        let mut vals: Vec<f64> = Vec::with_capacity(self.entries.len());
        let mut rows: Vec<usize> = Vec::with_capacity(self.entries.len());
        for (i, j, v) in self.entries {
            if let (Some(&li), Some(&lj)) = (rows.last(), col_idx.last()) {
                if li == i && lj == j {
                    *vals.last_mut().unwrap() += v;
                    continue;
                }
            }
            rows.push(i);
            col_idx.push(j);
            vals.push(v);
        }
        let mut row_ptr = vec![0usize; self.nrows + 1];
        for &i in &rows {
            row_ptr[i + 1] += 1;
        }
        for i in 0..self.nrows {
            row_ptr[i + 1] += row_ptr[i];
        }
        SparseMatrix { nrows: self.nrows, ncols: self.ncols, row_ptr, col_idx, vals }
    }
}

/// Compressed sparse row matrix, immutable after finalize.
#[derive(Debug, Clone)]
pub struct SparseMatrix {
    pub nrows: usize,
    pub ncols: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
    pub vals: Vec<f64>,
}

impl SparseMatrix {
    pub fn identity(n: usize) -> Self {
        let mut t = Triplets::new(n, n);
        for i in 0..n {
            t.push(i, i, 1.0);
        }
        t.finalize()
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.ncols);
        let mut y = vec![0.0; self.nrows];
        for i in 0..self.nrows {
            let mut s = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                s += self.vals[k] * x[self.col_idx[k]];
            }
            y[i] = s;
        }
        y
    }

    pub fn matvec_transpose(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.nrows);
        let mut y = vec![0.0; self.ncols];
        for i in 0..self.nrows {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                y[self.col_idx[k]] += self.vals[k] * x[i];
            }
        }
        y
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.vals.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        for k in self.row_ptr[i]..self.row_ptr[i + 1] {
            if self.col_idx[k] == j {
                return self.vals[k];
            }
        }
        0.0
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        for i in 0..self.nrows {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                let j = self.col_idx[k];
                if (self.vals[k] - self.get(j, i)).abs() > tol {
                    return false;
                }
            }
        }
        true
    }

    /// MatrixMarket coordinate format dump for debugging.
    pub fn write_matrix_market(&self, w: &mut impl Write) -> Result<(), LinalgError> {
        writeln!(w, "%%MatrixMarket matrix coordinate real general")?;
        writeln!(w, "{} {} {}", self.nrows, self.ncols, self.vals.len())?;
        for i in 0..self.nrows {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                writeln!(w, "{} {} {:.17e}", i + 1, self.col_idx[k] + 1, self.vals[k])?;
            }
        }
        Ok(())
    }

    fn to_faer(&self) -> Result<SparseColMat<usize, f64>, LinalgError> {
        let triplets: Vec<(usize, usize, f64)> = (0..self.nrows)
            .flat_map(|i| {
                (self.row_ptr[i]..self.row_ptr[i + 1])
                    .map(move |k| (i, self.col_idx[k], self.vals[k]))
            })
            .collect();
        SparseColMat::try_new_from_triplets(self.nrows, self.ncols, &triplets)
            .map_err(|_| LinalgError::Dimension("invalid triplets".into()))
    }

    pub fn factorize(&self) -> Result<Factorization, LinalgError> {
        if self.nrows != self.ncols {
            return Err(LinalgError::Dimension(format!(
                "square matrix required, got {}x{}",
                self.nrows, self.ncols
            )));
        }
        let mat = self.to_faer()?;
        // faer panics on numerically singular pivots instead of returning Err
        let lu = std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| mat.sp_lu()))
            .map_err(|_| LinalgError::Singular(self.nrows))?
            .map_err(|_| LinalgError::Singular(self.nrows))?;
        Ok(Factorization { lu, n: self.nrows })
    }
}

/// Reusable sparse LU factorization.
pub struct Factorization {
    lu: faer::sparse::linalg::solvers::Lu<usize, f64>,
    n: usize,
}

impl Factorization {
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        assert_eq!(b.len(), self.n);
        let rhs = faer::Mat::from_fn(self.n, 1, |i, _| b[i]);
        let x = self.lu.solve(&rhs);
        (0..self.n).map(|i| x[(i, 0)]).collect()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct LinearSolveReport {
    pub iterations: usize,
    pub residual_norm: f64,
    pub converged: bool,
}

pub fn norm2(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

/// Sparse LU solve; the residual check guards against silent pivot trouble.
pub fn solve_direct(a: &SparseMatrix, b: &[f64]) -> Result<Vec<f64>, LinalgError> {
    let fac = a.factorize()?;
    let x = fac.solve(b);
    let r: Vec<f64> = a
        .matvec(&x)
        .iter()
        .zip(b)
        .map(|(ax, bi)| ax - bi)
        .collect();
    let bound = 1e-10 * (a.frobenius_norm() * norm2(&x) + norm2(b));
    if !x.iter().all(|v| v.is_finite()) || norm2(&r) > bound.max(1e-300) {
        return Err(LinalgError::Singular(a.nrows));
    }
    Ok(x)
}

/// CG for symmetric systems, restarted GMRES otherwise.
pub fn solve_iterative(
    a: &SparseMatrix,
    b: &[f64],
    tol: f64,
) -> (Vec<f64>, LinearSolveReport) {
    if a.is_symmetric(1e-12 * (1.0 + a.frobenius_norm())) {
        conjugate_gradient(a, b, tol, 10 * a.nrows.max(100))
    } else {
        gmres(a, b, tol, 50, 40)
    }
}

fn conjugate_gradient(
    a: &SparseMatrix,
    b: &[f64],
    tol: f64,
    max_iter: usize,
) -> (Vec<f64>, LinearSolveReport) {
    let n = b.len();
    let bnorm = norm2(b).max(1e-300);
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let mut p = r.clone();
    let mut rr = dot(&r, &r);
    for it in 0..max_iter {
        if rr.sqrt() <= tol * bnorm {
            return (
                x,
                LinearSolveReport { iterations: it, residual_norm: rr.sqrt() / bnorm, converged: true },
            );
        }
        let ap = a.matvec(&p);
        let pap = dot(&p, &ap);
        if pap <= 0.0 || !pap.is_finite() {
            break;
        }
        let alpha = rr / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rr_new = dot(&r, &r);
        let beta = rr_new / rr;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
        }
        rr = rr_new;
    }
    let res = norm2(&r) / bnorm;
    (x, LinearSolveReport { iterations: max_iter, residual_norm: res, converged: res <= tol })
}

fn gmres(
    a: &SparseMatrix,
    b: &[f64],
    tol: f64,
    restart: usize,
    max_restarts: usize,
) -> (Vec<f64>, LinearSolveReport) {
    let n = b.len();
    let bnorm = norm2(b).max(1e-300);
    let mut x = vec![0.0; n];
    let mut total_iters = 0usize;
    for _ in 0..max_restarts {
        let mut r: Vec<f64> = a.matvec(&x).iter().zip(b).map(|(ax, bi)| bi - ax).collect();
        let beta = norm2(&r);
        if beta <= tol * bnorm {
            return (
                x,
                LinearSolveReport {
                    iterations: total_iters,
                    residual_norm: beta / bnorm,
                    converged: true,
                },
            );
        }
        let m = restart;
        let mut v: Vec<Vec<f64>> = Vec::with_capacity(m + 1);
        for e in r.iter_mut() {
            *e /= beta;
        }
        v.push(r);
        let mut h = vec![vec![0.0f64; m]; m + 1];
        let mut cs = vec![0.0f64; m];
        let mut sn = vec![0.0f64; m];
        let mut g = vec![0.0f64; m + 1];
        g[0] = beta;
        let mut k_used = 0;
        for k in 0..m {
            total_iters += 1;
            let mut w = a.matvec(&v[k]);
            for (i, vi) in v.iter().enumerate().take(k + 1) {
                h[i][k] = dot(&w, vi);
                for (we, ve) in w.iter_mut().zip(vi) {
                    *we -= h[i][k] * ve;
                }
            }
            h[k + 1][k] = norm2(&w);
            if h[k + 1][k] > 1e-300 {
                for e in w.iter_mut() {
                    *e /= h[k + 1][k];
                }
            }
            v.push(w);
            // apply accumulated Givens rotations
            for i in 0..k {
                let t = cs[i] * h[i][k] + sn[i] * h[i + 1][k];
                h[i + 1][k] = -sn[i] * h[i][k] + cs[i] * h[i + 1][k];
                h[i][k] = t;
            }
            let denom = (h[k][k].powi(2) + h[k + 1][k].powi(2)).sqrt();
            if denom <= 1e-300 {
                k_used = k + 1;
                break;
            }
            cs[k] = h[k][k] / denom;
            sn[k] = h[k + 1][k] / denom;
            h[k][k] = denom;
            h[k + 1][k] = 0.0;
            g[k + 1] = -sn[k] * g[k];
            g[k] *= cs[k];
            k_used = k + 1;
            if g[k + 1].abs() <= tol * bnorm {
                break;
            }
        }
        // back substitution
        let mut y = vec![0.0f64; k_used];
        for i in (0..k_used).rev() {
            let mut s = g[i];
            for j in (i + 1)..k_used {
                s -= h[i][j] * y[j];
            }
            y[i] = if h[i][i].abs() > 1e-300 { s / h[i][i] } else { 0.0 };
        }
        for (j, &yj) in y.iter().enumerate() {
            for i in 0..n {
                x[i] += yj * v[j][i];
            }
        }
        let res = norm2(
            &a.matvec(&x)
                .iter()
                .zip(b)
                .map(|(ax, bi)| bi - ax)
                .collect::<Vec<f64>>(),
        ) / bnorm;
        if res <= tol {
            return (
                x,
                LinearSolveReport { iterations: total_iters, residual_norm: res, converged: true },
            );
        }
    }
    let res = norm2(
        &a.matvec(&x)
            .iter()
            .zip(b)
            .map(|(ax, bi)| bi - ax)
            .collect::<Vec<f64>>(),
    ) / bnorm;
    (
        x,
        LinearSolveReport { iterations: total_iters, residual_norm: res, converged: res <= tol },
    )
}

/// Smallest eigenvalue of A x = lambda M x (A symmetric PSD, M SPD), with
/// optional M-orthogonal deflation of known nullspace/constraint vectors.
pub fn smallest_generalized_eig_deflated(
    a: &SparseMatrix,
    m: &SparseMatrix,
    deflate: &[Vec<f64>],
) -> Result<f64, LinalgError> {
    let n = a.nrows;
    if m.nrows != n || a.ncols != n || m.ncols != n {
        return Err(LinalgError::Dimension("A, M must be square of equal size".into()));
    }
    // shift keeps the factorization nonsingular when A itself is singular
    let tr_a: f64 = (0..n).map(|i| a.get(i, i)).sum();
    let tr_m: f64 = (0..n).map(|i| m.get(i, i)).sum();
    let sigma = 1e-8 * (tr_a / tr_m.max(1e-300)).abs().max(1e-12);
    let mut shifted = Triplets::new(n, n);
    for i in 0..n {
        for k in a.row_ptr[i]..a.row_ptr[i + 1] {
            shifted.push(i, a.col_idx[k], a.vals[k]);
        }
        for k in m.row_ptr[i]..m.row_ptr[i + 1] {
            shifted.push(i, m.col_idx[k], sigma * m.vals[k]);
        }
    }
    let fac = shifted.finalize().factorize()?;

    let m_orthogonalize = |x: &mut Vec<f64>| {
        for d in deflate {
            let md = m.matvec(d);
            let proj = dot(x, &md) / dot(d, &md).max(1e-300);
            for i in 0..n {
                x[i] -= proj * d[i];
            }
        }
    };

    let mut x: Vec<f64> = (0..n)
        .map(|i| 1.0 + ((i * 2654435761) % 1000) as f64 / 1000.0)
        .collect();
    m_orthogonalize(&mut x);
    let mut lambda_old = f64::INFINITY;
    let max_iter = 500;
    for it in 0..max_iter {
        let mx = m.matvec(&x);
        let mut y = fac.solve(&mx);
        m_orthogonalize(&mut y);
        let ynorm = norm2(&y);
        if ynorm <= 1e-300 {
            return Err(LinalgError::EigNonConvergence(it));
        }
        for e in y.iter_mut() {
            *e /= ynorm;
        }
        let ay = a.matvec(&y);
        let my = m.matvec(&y);
        let lambda = dot(&y, &ay) / dot(&y, &my).max(1e-300);
        x = y;
        if (lambda - lambda_old).abs() <= 1e-8 * (1.0 + lambda.abs()) && it > 2 {
            return Ok(lambda);
        }
        lambda_old = lambda;
    }
    Err(LinalgError::EigNonConvergence(max_iter))
}

pub fn smallest_generalized_eig(a: &SparseMatrix, m: &SparseMatrix) -> Result<f64, LinalgError> {
    smallest_generalized_eig_deflated(a, m, &[])
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn random_spd(n: usize, seed: u64) -> (SparseMatrix, Vec<Vec<f64>>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut dense = vec![vec![0.0f64; n]; n];
        for i in 0..n {
            for j in 0..n {
                dense[i][j] = rng.gen_range(-1.0..1.0);
            }
        }
        // A = B^T B + n I
        let mut spd = vec![vec![0.0f64; n]; n];
        for i in 0..n {
            for j in 0..n {
                let mut s = 0.0;
                for k in 0..n {
                    s += dense[k][i] * dense[k][j];
                }
                spd[i][j] = s + if i == j { n as f64 } else { 0.0 };
            }
        }
        let mut t = Triplets::new(n, n);
        for i in 0..n {
            for j in 0..n {
                t.push(i, j, spd[i][j]);
            }
        }
        (t.finalize(), spd)
    }

    #[test]
    fn triplets_sum_duplicates() {
        let mut t = Triplets::new(2, 2);
        t.push(0, 0, 1.0);
        t.push(0, 0, 2.0);
        t.push(1, 0, 5.0);
        t.push(0, 1, -1.0);
        let m = t.finalize();
        assert_eq!(m.get(0, 0), 3.0);
        assert_eq!(m.get(1, 0), 5.0);
        assert_eq!(m.get(0, 1), -1.0);
        assert_eq!(m.get(1, 1), 0.0);
        // sorted column indices within rows
        for i in 0..m.nrows {
            let cols = &m.col_idx[m.row_ptr[i]..m.row_ptr[i + 1]];
            assert!(cols.windows(2).all(|w| w[0] < w[1]));
        }
    }

    #[test]
    fn direct_identity_and_diag() {
        let a = SparseMatrix::identity(3);
        let b = vec![1.0, -2.0, 3.0];
        assert_eq!(solve_direct(&a, &b).unwrap(), b);

        let mut t = Triplets::new(2, 2);
        t.push(0, 0, 2.0);
        t.push(1, 1, 4.0);
        let a = t.finalize();
        let x = solve_direct(&a, &[2.0, 4.0]).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-14 && (x[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn direct_matches_dense_lu_oracle() {
        let n = 50;
        let (a, dense) = random_spd(n, 7);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let b: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let x = solve_direct(&a, &b).unwrap();

        let nd = nalgebra::DMatrix::from_fn(n, n, |i, j| dense[i][j]);
        let nb = nalgebra::DVector::from_vec(b.clone());
        let oracle = nd.lu().solve(&nb).unwrap();
        for i in 0..n {
            assert!((x[i] - oracle[i]).abs() < 1e-10);
        }
    }

    #[test]
    fn singular_matrix_reported() {
        let mut t = Triplets::new(2, 2);
        t.push(0, 0, 1.0);
        t.push(0, 1, 1.0);
        t.push(1, 0, 1.0);
        t.push(1, 1, 1.0);
        let a = t.finalize();
        assert!(solve_direct(&a, &[1.0, 0.0]).is_err());
    }

    #[test]
    fn iterative_identity_one_sweep() {
        let a = SparseMatrix::identity(4);
        let (x, rep) = solve_iterative(&a, &[1.0, 2.0, 3.0, 4.0], 1e-12);
        assert!(rep.converged);
        assert!(rep.iterations <= 1);
        assert!((x[2] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn iterative_laplacian_matches_direct() {
        // 5-point Laplacian on a 32x32 grid
        let n = 32;
        let idx = |i: usize, j: usize| i * n + j;
        let mut t = Triplets::new(n * n, n * n);
        for i in 0..n {
            for j in 0..n {
                t.push(idx(i, j), idx(i, j), 4.0);
                if i > 0 {
                    t.push(idx(i, j), idx(i - 1, j), -1.0);
                }
                if i + 1 < n {
                    t.push(idx(i, j), idx(i + 1, j), -1.0);
                }
                if j > 0 {
                    t.push(idx(i, j), idx(i, j - 1), -1.0);
                }
                if j + 1 < n {
                    t.push(idx(i, j), idx(i, j + 1), -1.0);
                }
            }
        }
        let a = t.finalize();
        let b: Vec<f64> = (0..n * n).map(|k| ((k * 13) % 7) as f64 - 3.0).collect();
        let (x, rep) = solve_iterative(&a, &b, 1e-10);
        assert!(rep.converged);
        let xd = solve_direct(&a, &b).unwrap();
        let diff: f64 = x.iter().zip(&xd).map(|(u, v)| (u - v).powi(2)).sum::<f64>().sqrt();
        assert!(diff < 1e-8 * (1.0 + norm2(&xd)));
    }

    #[test]
    fn iterative_singular_returns_unconverged() {
        let mut t = Triplets::new(2, 2);
        t.push(0, 0, 1.0);
        // second row all zero
        t.push(1, 1, 0.0);
        let a = Triplets { nrows: 2, ncols: 2, entries: t.entries }.finalize();
        let (_, rep) = solve_iterative(&a, &[1.0, 1.0], 1e-10);
        assert!(!rep.converged);
    }

    #[test]
    fn gmres_nonsymmetric() {
        let mut t = Triplets::new(3, 3);
        t.push(0, 0, 2.0);
        t.push(0, 1, 1.0);
        t.push(1, 1, 3.0);
        t.push(1, 2, -1.0);
        t.push(2, 0, 0.5);
        t.push(2, 2, 4.0);
        let a = t.finalize();
        let b = vec![1.0, 2.0, 3.0];
        let (x, rep) = solve_iterative(&a, &b, 1e-12);
        assert!(rep.converged);
        let r: Vec<f64> = a.matvec(&x).iter().zip(&b).map(|(u, v)| u - v).collect();
        assert!(norm2(&r) < 1e-10);
    }

    #[test]
    fn eig_trivial_cases() {
        let a = SparseMatrix::identity(5);
        let m = SparseMatrix::identity(5);
        let l = smallest_generalized_eig(&a, &m).unwrap();
        assert!((l - 1.0).abs() < 1e-7);

        let mut t = Triplets::new(3, 3);
        t.push(0, 0, 1.0);
        t.push(1, 1, 2.0);
        t.push(2, 2, 3.0);
        let a = t.finalize();
        let l = smallest_generalized_eig(&a, &SparseMatrix::identity(3)).unwrap();
        assert!((l - 1.0).abs() < 1e-7);
    }

    #[test]
    fn eig_matches_dense_oracle() {
        let n = 12;
        let (a, da) = random_spd(n, 21);
        let (m, dm) = random_spd(n, 22);
        let l = smallest_generalized_eig(&a, &m).unwrap();

        // oracle: eig of L^-1 A L^-T from M = L L^T
        let nm = nalgebra::DMatrix::from_fn(n, n, |i, j| dm[i][j]);
        let na = nalgebra::DMatrix::from_fn(n, n, |i, j| da[i][j]);
        let chol = nm.cholesky().unwrap();
        let linv = chol.l().try_inverse().unwrap();
        let sym = &linv * na * linv.transpose();
        let eig = nalgebra::SymmetricEigen::new(sym);
        let lmin = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!((l - lmin).abs() < 1e-6 * (1.0 + lmin.abs()));
    }

    #[test]
    fn matvec_matches_dense_reference() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (n, m) = (17, 11);
        let mut t = Triplets::new(n, m);
        let mut dense = vec![vec![0.0f64; m]; n];
        for _ in 0..60 {
            let i = rng.gen_range(0..n);
            let j = rng.gen_range(0..m);
            let v: f64 = rng.gen_range(-2.0..2.0);
            t.push(i, j, v);
            dense[i][j] += v;
        }
        let a = t.finalize();
        let x: Vec<f64> = (0..m).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let y = a.matvec(&x);
        for i in 0..n {
            let want: f64 = (0..m).map(|j| dense[i][j] * x[j]).sum();
            assert!((y[i] - want).abs() < 1e-12);
        }
    }
}
