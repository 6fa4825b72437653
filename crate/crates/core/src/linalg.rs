//! Sparse symmetric matrices, conjugate gradients and extreme eigenvalues.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};

/// Rows below this count are multiplied sequentially.
const PAR_ROWS: usize = 4096;

/// Square matrix in compressed sparse row form. Assembled matrices are symmetric.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds an `n × n` matrix from `(row, col, value)` entries, summing duplicates.
    ///
    /// The merge sorts by `(row, col)` with a stable sort, so the result does
    /// not depend on how the entries were produced.
    pub fn from_triplets(n: usize, mut triplets: Vec<(usize, usize, f64)>) -> Result<Self> {
        if let Some(&(r, c, _)) = triplets.iter().find(|(r, c, _)| *r >= n || *c >= n) {
            return Err(Error::InvalidArgument(format!("entry ({r}, {c}) outside a {n}x{n} matrix")));
        }
        triplets.sort_by_key(|&(r, c, _)| (r, c));
        let mut row_ptr = vec![0usize; n + 1];
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut values: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in triplets {
            if last == Some((r, c)) {
                *values.last_mut().expect("entry exists") += v;
            } else {
                col_idx.push(c);
                values.push(v);
                row_ptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        Ok(Self { n, row_ptr, col_idx, values })
    }

    pub fn identity(n: usize) -> Self {
        Self { n, row_ptr: (0..=n).collect(), col_idx: (0..n).collect(), values: vec![1.0; n] }
    }

    pub fn from_dense(a: &DMatrix<f64>) -> Self {
        let mut t = Vec::new();
        for r in 0..a.nrows() {
            for c in 0..a.ncols() {
                if a[(r, c)] != 0.0 {
                    t.push((r, c, a[(r, c)]));
                }
            }
        }
        Self::from_triplets(a.nrows(), t).expect("indices in range")
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        self.col_idx[span.clone()].iter().copied().zip(self.values[span].iter().copied())
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        match self.col_idx[span.clone()].binary_search(&c) {
            Ok(k) => self.values[span.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    fn row_dot(&self, r: usize, x: &[f64]) -> f64 {
        self.row(r).map(|(c, v)| v * x[c]).sum()
    }

    /// `y = A x`.
    pub fn mul_vec_into(&self, x: &[f64], y: &mut [f64]) {
        if self.n >= PAR_ROWS {
            y.par_iter_mut().enumerate().for_each(|(r, yr)| *yr = self.row_dot(r, x));
        } else {
            for (r, yr) in y.iter_mut().enumerate() {
                *yr = self.row_dot(r, x);
            }
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        self.mul_vec_into(x, &mut y);
        y
    }

    /// `xᵀ A x`.
    pub fn quadratic_form(&self, x: &[f64]) -> f64 {
        dot(x, &self.mul_vec(x))
    }

    /// Largest `|a_ij − a_ji|` over stored entries.
    pub fn asymmetry(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for r in 0..self.n {
            for (c, v) in self.row(r) {
                worst = worst.max((v - self.get(c, r)).abs());
            }
        }
        worst
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |a, v| a.max(v.abs()))
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut a = DMatrix::zeros(self.n, self.n);
        for r in 0..self.n {
            for (c, v) in self.row(r) {
                a[(r, c)] = v;
            }
        }
        a
    }

    /// Entry-wise `self + other`.
    pub fn add(&self, other: &Self) -> Result<Self> {
        if self.n != other.n {
            return Err(Error::InvalidArgument("matrix dimensions differ".into()));
        }
        let mut t = Vec::with_capacity(self.nnz() + other.nnz());
        for m in [self, other] {
            for r in 0..m.n {
                t.extend(m.row(r).map(|(c, v)| (r, c, v)));
            }
        }
        Self::from_triplets(self.n, t)
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Preconditioner {
    None,
    #[default]
    Jacobi,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CgResult {
    pub x: Vec<f64>,
    pub iterations: usize,
    /// Final `‖b − Ax‖ / ‖b‖`.
    pub residual: f64,
    pub converged: bool,
}

/// Preconditioned conjugate gradients from a zero initial guess.
pub fn cg_solve(a: &CsrMatrix, b: &[f64], rel_tol: f64, max_iter: usize, preconditioner: Preconditioner) -> Result<CgResult> {
    let n = a.dim();
    if b.len() != n {
        return Err(Error::InvalidArgument(format!("right-hand side has length {} for a {n}x{n} matrix", b.len())));
    }
    if b.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("right-hand side is not finite".into()));
    }
    let bnorm = norm(b);
    let mut x = vec![0.0; n];
    if bnorm == 0.0 {
        return Ok(CgResult { x, iterations: 0, residual: 0.0, converged: true });
    }
    let inv_diag: Vec<f64> = match preconditioner {
        Preconditioner::None => vec![1.0; n],
        Preconditioner::Jacobi => a
            .diagonal()
            .iter()
            .map(|&d| if d > 0.0 { 1.0 / d } else { 1.0 })
            .collect(),
    };
    let mut r = b.to_vec();
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(r, d)| r * d).collect();
    let mut p = z.clone();
    let mut ap = vec![0.0; n];
    let mut rz = dot(&r, &z);
    let mut res = 1.0;
    for it in 1..=max_iter {
        a.mul_vec_into(&p, &mut ap);
        let curvature = dot(&p, &ap);
        if !(curvature > 0.0) {
            return Err(Error::NumericalFailure(format!("non-positive curvature {curvature:e} in CG iteration {it}")));
        }
        let alpha = rz / curvature;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        res = norm(&r) / bnorm;
        if res <= rel_tol {
            return Ok(CgResult { x, iterations: it, residual: res, converged: true });
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Ok(CgResult { x, iterations: max_iter, residual: res, converged: false })
}

fn random_unit(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let s = norm(&v);
    v.iter_mut().for_each(|x| *x /= s);
    v
}

/// Largest eigenvalue by Lanczos with full reorthogonalization.
pub fn largest_eigenvalue(a: &CsrMatrix, rel_tol: f64, seed: u64) -> Result<f64> {
    let n = a.dim();
    if n == 0 {
        return Err(Error::InvalidArgument("empty matrix".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let max_steps = n.min(400);
    let mut q: Vec<Vec<f64>> = vec![random_unit(n, &mut rng)];
    let mut alphas = Vec::new();
    let mut betas: Vec<f64> = Vec::new();
    let mut previous = f64::NAN;
    loop {
        let k = q.len() - 1;
        let mut w = a.mul_vec(&q[k]);
        let alpha = dot(&w, &q[k]);
        alphas.push(alpha);
        for qi in &q {
            let c = dot(&w, qi);
            w.iter_mut().zip(qi).for_each(|(wj, qj)| *wj -= c * qj);
        }
        let beta = norm(&w);
        let m = alphas.len();
        let mut t = DMatrix::<f64>::zeros(m, m);
        for i in 0..m {
            t[(i, i)] = alphas[i];
            if i + 1 < m {
                t[(i, i + 1)] = betas[i];
                t[(i + 1, i)] = betas[i];
            }
        }
        let ritz = SymmetricEigen::new(t).eigenvalues.max();
        let done = beta <= 1e-14 * ritz.abs() || m >= max_steps || (ritz - previous).abs() <= rel_tol * ritz.abs();
        if done {
            return Ok(ritz);
        }
        previous = ritz;
        betas.push(beta);
        w.iter_mut().for_each(|x| *x /= beta);
        q.push(w);
    }
}

/// Smallest eigenvalue by inverse iteration with inner CG solves at `0.01 · rel_tol`.
pub fn smallest_eigenvalue(a: &CsrMatrix, rel_tol: f64, seed: u64) -> Result<f64> {
    let n = a.dim();
    if n == 0 {
        return Err(Error::InvalidArgument("empty matrix".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));
    let mut x = random_unit(n, &mut rng);
    let mut mu = a.quadratic_form(&x);
    let inner_max = 20 * n + 1000;
    for _ in 0..1000 {
        let sol = cg_solve(a, &x, 0.01 * rel_tol, inner_max, Preconditioner::Jacobi)?;
        if !sol.converged {
            return Err(Error::NumericalFailure(format!(
                "inner CG stalled at residual {:e} during inverse iteration",
                sol.residual
            )));
        }
        let s = norm(&sol.x);
        x = sol.x.iter().map(|v| v / s).collect();
        let next = a.quadratic_form(&x);
        if (next - mu).abs() <= rel_tol * next.abs() {
            return Ok(next);
        }
        mu = next;
    }
    Err(Error::NumericalFailure("inverse iteration did not converge".into()))
}

/// `(λ_min, λ_max)` of a symmetric positive definite matrix.
pub fn extreme_eigenvalues(a: &CsrMatrix, rel_tol: f64, seed: u64) -> Result<(f64, f64)> {
    let lmax = largest_eigenvalue(a, rel_tol, seed)?;
    let lmin = smallest_eigenvalue(a, rel_tol, seed)?;
    Ok((lmin, lmax))
}

/// Spectral condition number `λ_max / λ_min`.
pub fn condition_number(a: &CsrMatrix, rel_tol: f64, seed: u64) -> Result<f64> {
    let (lmin, lmax) = extreme_eigenvalues(a, rel_tol, seed)?;
    if !(lmin > 0.0) {
        return Err(Error::NumericalFailure(format!("matrix is not positive definite (lambda_min = {lmin:e})")));
    }
    Ok(lmax / lmin)
}
