//! Dense row-major matrices and the handful of kernels the crate needs.
//!
//! Reductions use a fixed eight-lane accumulation order so results are
//! bit-reproducible regardless of thread count.

use crate::error::{Error, Result};
use crate::rng::{streams, CounterRng};

#[derive(Clone, Debug, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::invalid(format!(
                "matrix data has {} entries, expected {rows}x{cols}",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != cols {
                return Err(Error::invalid(format!("row {i} has length {}, expected {cols}", r.len())));
            }
            data.extend_from_slice(r);
        }
        Ok(Self { rows: rows.len(), cols, data })
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_iter(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.cols.max(1)).take(self.rows)
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn scaled(&self, c: f64) -> Matrix {
        Matrix { rows: self.rows, cols: self.cols, data: self.data.iter().map(|x| c * x).collect() }
    }

    pub fn frobenius_sq(&self) -> f64 {
        dot(&self.data, &self.data)
    }

    pub fn frobenius(&self) -> f64 {
        self.frobenius_sq().sqrt()
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|&x| x == 0.0)
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// `self += c * other`.
    pub fn add_scaled(&mut self, c: f64, other: &Matrix) {
        assert_eq!(self.shape(), other.shape());
        axpy(c, &other.data, &mut self.data);
    }

    pub fn sub(&self, other: &Matrix) -> Matrix {
        let mut out = self.clone();
        out.add_scaled(-1.0, other);
        out
    }

    /// Frobenius inner product.
    pub fn inner(&self, other: &Matrix) -> f64 {
        assert_eq!(self.shape(), other.shape());
        dot(&self.data, &other.data)
    }

    /// `self * v`.
    pub fn matvec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.cols);
        self.row_iter().map(|r| dot(r, v)).collect()
    }

    /// `selfᵀ * v`.
    pub fn matvec_t(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.rows);
        let mut out = vec![0.0; self.cols];
        for (r, &c) in self.row_iter().zip(v) {
            axpy(c, r, &mut out);
        }
        out
    }

    /// Gram matrix of the rows, `self * selfᵀ`.
    pub fn row_gram(&self) -> Matrix {
        let n = self.rows;
        let mut g = Matrix::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let v = dot(self.row(i), self.row(j));
                g[(i, j)] = v;
                g[(j, i)] = v;
            }
        }
        g
    }

    /// The smaller of `self selfᵀ` and `selfᵀ self`.
    pub fn small_gram(&self) -> Matrix {
        if self.rows <= self.cols {
            self.row_gram()
        } else {
            self.transpose().row_gram()
        }
    }

    /// Spectral norm of the difference, used by smoothness checks.
    pub fn spectral_norm(&self) -> f64 {
        if self.is_zero() {
            return 0.0;
        }
        top_eigenpair(&self.small_gram()).value.max(0.0).sqrt()
    }
}

impl std::ops::Index<(usize, usize)> for Matrix {
    type Output = f64;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for Matrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

const LANES: usize = 8;

/// Inner product with a fixed eight-lane summation order.
#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; LANES];
    let ca = a.chunks_exact(LANES);
    let cb = b.chunks_exact(LANES);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for k in 0..LANES {
            acc[k] += x[k] * y[k];
        }
    }
    let mut tail = 0.0;
    for (x, y) in ra.iter().zip(rb) {
        tail += x * y;
    }
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
}

/// `y += a * x`.
#[inline]
pub fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn scale(a: &mut [f64], c: f64) {
    for x in a {
        *x *= c;
    }
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let den = norm(a) * norm(b);
    if den == 0.0 {
        0.0
    } else {
        dot(a, b) / den
    }
}

/// Dominant eigenpair of a symmetric positive semidefinite matrix.
#[derive(Clone, Debug)]
pub struct Eigenpair {
    pub value: f64,
    pub vector: Vec<f64>,
    pub iterations: usize,
    /// False when the iteration cap was hit before the residual tolerance.
    pub converged: bool,
}

/// Relative residual tolerance `‖Gx − ρx‖ ≤ tol·ρ` for power iteration.
pub const POWER_TOL: f64 = 1e-10;
pub const POWER_MAX_ITER: usize = 10_000;

/// Power iteration on a PSD matrix from the normalized all-ones start.
///
/// If the start vector has (numerically) no component along the top
/// eigenspace the iterate collapses; the iteration then restarts once from a
/// seeded Gaussian vector on the `FALLBACK` stream.
pub fn top_eigenpair(g: &Matrix) -> Eigenpair {
    let k = g.rows();
    assert_eq!(k, g.cols());
    let start = vec![1.0 / (k as f64).sqrt(); k];
    match power_iterate(g, start) {
        Some(p) => p,
        None => {
            let mut rng = CounterRng::new(0x5eed_5eed, streams::FALLBACK);
            let mut v = vec![0.0; k];
            rng.fill_normal(&mut v, 1.0);
            let nv = norm(&v);
            scale(&mut v, 1.0 / nv);
            power_iterate(g, v).unwrap_or(Eigenpair {
                value: 0.0,
                vector: vec![0.0; k],
                iterations: 0,
                converged: true,
            })
        }
    }
}

fn trace(g: &Matrix) -> f64 {
    (0..g.rows()).map(|i| g[(i, i)]).sum()
}

fn power_iterate(g: &Matrix, mut x: Vec<f64>) -> Option<Eigenpair> {
    let tr = trace(g).abs();
    let collapse = 1e-13 * tr.max(f64::MIN_POSITIVE);
    let mut rho = 0.0;
    for it in 1..=POWER_MAX_ITER {
        let y = g.matvec(&x);
        rho = dot(&x, &y);
        let ny = norm(&y);
        if ny <= collapse {
            return None;
        }
        let mut res = 0.0;
        for (yi, xi) in y.iter().zip(&x) {
            res += (yi - rho * xi).powi(2);
        }
        if res.sqrt() <= POWER_TOL * rho.abs() {
            return Some(Eigenpair { value: rho, vector: x, iterations: it, converged: true });
        }
        x = y;
        scale(&mut x, 1.0 / ny);
    }
    Some(Eigenpair { value: rho, vector: x, iterations: POWER_MAX_ITER, converged: false })
}

/// Top two eigenvalues of a PSD matrix by power iteration with deflation.
pub fn top_two_eigenvalues(g: &Matrix) -> (Eigenpair, Eigenpair) {
    let first = top_eigenpair(g);
    let mut deflated = g.clone();
    let k = g.rows();
    for i in 0..k {
        for j in 0..k {
            deflated[(i, j)] -= first.value * first.vector[i] * first.vector[j];
        }
    }
    let second = if k < 2 {
        Eigenpair { value: 0.0, vector: vec![0.0; k], iterations: 0, converged: true }
    } else {
        top_eigenpair(&deflated)
    };
    (first, second)
}

/// Solve a symmetric positive definite system by Cholesky factorization.
pub fn cholesky_solve(a: &Matrix, b: &[f64]) -> Option<Vec<f64>> {
    let n = a.rows();
    let mut l = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            if i == j {
                if s <= 0.0 || !s.is_finite() {
                    return None;
                }
                l[(i, i)] = s.sqrt();
            } else {
                l[(i, j)] = s / l[(j, j)];
            }
        }
    }
    let mut y = b.to_vec();
    for i in 0..n {
        for k in 0..i {
            y[i] -= l[(i, k)] * y[k];
        }
        y[i] /= l[(i, i)];
    }
    for i in (0..n).rev() {
        for k in i + 1..n {
            y[i] -= l[(k, i)] * y[k];
        }
        y[i] /= l[(i, i)];
    }
    Some(y)
}

/// Orthonormalize the rows in place (modified Gram–Schmidt, two passes).
pub fn orthonormalize_rows(m: &mut Matrix) -> Result<()> {
    let cols = m.cols;
    for i in 0..m.rows() {
        for _pass in 0..2 {
            for j in 0..i {
                let (head, tail) = m.as_mut_slice().split_at_mut(i * cols);
                let qj = &head[j * cols..(j + 1) * cols];
                let ri = &mut tail[..cols];
                let c = dot(qj, ri);
                axpy(-c, qj, ri);
            }
        }
        let r = m.row_mut(i);
        let nr = norm(r);
        if nr == 0.0 {
            return Err(Error::DegenerateInput(format!("row {i} is linearly dependent")));
        }
        scale(r, 1.0 / nr);
    }
    Ok(())
}
