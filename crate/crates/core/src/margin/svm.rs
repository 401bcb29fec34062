//! Hard-margin linear SVM through the origin: `min ‖z‖` s.t. `y_i zᵀx_i ≥ 1`.

use super::qp::{dual_residual, polish};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::linalg::{axpy, dot, norm, Matrix};

/// Convergence tolerance on the KKT residual.
pub const SVM_TOL: f64 = 1e-9;
const MAX_SWEEPS: usize = 100_000;
/// Dual mass beyond which the problem is declared unbounded.
const DIVERGENCE_MASS: f64 = 1e12;

#[derive(Clone, Debug, PartialEq)]
pub struct SvmSolution {
    pub z: Vec<f64>,
    pub alphas: Vec<f64>,
    pub residual: f64,
    pub sweeps: usize,
}

impl SvmSolution {
    pub fn norm(&self) -> f64 {
        norm(&self.z)
    }

    pub fn margins(&self, ds: &Dataset) -> Vec<f64> {
        (0..ds.n()).map(|i| ds.y(i) * dot(&self.z, ds.x(i))).collect()
    }
}

fn kernel(ds: &Dataset) -> Matrix {
    let g = ds.gram();
    let n = ds.n();
    let mut k = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            k[(i, j)] = ds.y(i) * ds.y(j) * g[(i, j)];
        }
    }
    k
}

pub fn solve_svm(ds: &Dataset) -> Result<SvmSolution> {
    let n = ds.n();
    if ds.sq_norms().iter().any(|&s| s == 0.0) {
        return Err(Error::NotSeparable { iterations: 0 });
    }
    let k = kernel(ds);
    let mut alpha = vec![0.0; n];
    let mut ka = vec![0.0; n];
    let mut sweeps = 0;
    while sweeps < MAX_SWEEPS {
        sweeps += 1;
        for i in 0..n {
            let next = (alpha[i] + (1.0 - ka[i]) / k[(i, i)]).max(0.0);
            let delta = next - alpha[i];
            if delta != 0.0 {
                alpha[i] = next;
                for (j, kj) in ka.iter_mut().enumerate() {
                    *kj += delta * k[(j, i)];
                }
            }
        }
        if alpha.iter().sum::<f64>() > DIVERGENCE_MASS {
            return Err(Error::NotSeparable { iterations: sweeps });
        }
        if sweeps % 10 == 0 && dual_residual(&k, &alpha) <= 1e-7 {
            break;
        }
    }
    if let Some(p) = polish(&k, &alpha) {
        if dual_residual(&k, &p) <= dual_residual(&k, &alpha) {
            alpha = p;
        }
    }
    let residual = dual_residual(&k, &alpha);
    if !(residual <= SVM_TOL) {
        return Err(Error::NotSeparable { iterations: sweeps });
    }
    let mut z = vec![0.0; ds.d()];
    for i in 0..n {
        if alpha[i] != 0.0 {
            axpy(alpha[i] * ds.y(i), ds.x(i), &mut z);
        }
    }
    Ok(SvmSolution { z, alphas: alpha, residual, sweeps })
}
