//! Independent reference computations shared by the integration tests.
#![allow(dead_code)]

use leakybias::dataset::Dataset;
use leakybias::linalg::{cholesky_solve, dot, Matrix};
use leakybias::model::{LossKind, TwoLayerNet};

/// Minimum-norm separating direction by enumerating candidate support sets.
/// For each subset `S` solve `K_SS α = 1`, keep it when `α ≥ 0` and every
/// margin is at least one, and return the smallest feasible norm.
pub fn svm_by_enumeration(ds: &Dataset) -> Option<(Vec<f64>, f64)> {
    let n = ds.n();
    assert!(n <= 16, "enumeration is exponential in n");
    let g = ds.gram();
    let mut best: Option<(Vec<f64>, f64)> = None;
    for mask in 1u32..(1 << n) {
        let s: Vec<usize> = (0..n).filter(|i| mask >> i & 1 == 1).collect();
        let k = s.len();
        let mut kss = Matrix::zeros(k, k);
        for (a, &i) in s.iter().enumerate() {
            for (b, &j) in s.iter().enumerate() {
                kss.row_mut(a)[b] = ds.y(i) * ds.y(j) * g.row(i)[j];
            }
        }
        let Some(alpha) = cholesky_solve(&kss, &vec![1.0; k]) else { continue };
        if alpha.iter().any(|&a| a < -1e-12) {
            continue;
        }
        let mut z = vec![0.0; ds.d()];
        for (a, &i) in alpha.iter().zip(&s) {
            for (zc, xc) in z.iter_mut().zip(ds.x(i)) {
                *zc += a * ds.y(i) * xc;
            }
        }
        if (0..n).any(|i| ds.y(i) * dot(&z, ds.x(i)) < 1.0 - 1e-9) {
            continue;
        }
        let nz = dot(&z, &z).sqrt();
        if best.as_ref().map_or(true, |(_, b)| nz < *b) {
            best = Some((z, nz));
        }
    }
    best
}

/// Singular values by one-sided Jacobi rotations on the columns.
pub fn jacobi_singular_values(w: &Matrix) -> Vec<f64> {
    let (rows, cols) = w.shape();
    // Work on the columns of W (or Wᵀ, whichever has fewer columns).
    let a = if cols <= rows { w.clone() } else { w.transpose() };
    let (r, c) = a.shape();
    let mut colv: Vec<Vec<f64>> = (0..c).map(|j| (0..r).map(|i| a.row(i)[j]).collect()).collect();
    for _sweep in 0..100 {
        let mut off = 0.0f64;
        for p in 0..c {
            for q in p + 1..c {
                let alpha = dot(&colv[p], &colv[p]);
                let beta = dot(&colv[q], &colv[q]);
                let gamma = dot(&colv[p], &colv[q]);
                if gamma == 0.0 {
                    continue;
                }
                off = off.max(gamma.abs() / (alpha * beta).sqrt());
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let t = if zeta == 0.0 { 1.0 } else { t };
                let cs = 1.0 / (1.0 + t * t).sqrt();
                let sn = cs * t;
                for i in 0..r {
                    let (xp, xq) = (colv[p][i], colv[q][i]);
                    colv[p][i] = cs * xp - sn * xq;
                    colv[q][i] = sn * xp + cs * xq;
                }
            }
        }
        if off < 1e-15 {
            break;
        }
    }
    let mut s: Vec<f64> = colv.iter().map(|v| dot(v, v).sqrt()).collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

pub fn stable_rank_by_svd(w: &Matrix) -> f64 {
    let s = jacobi_singular_values(w);
    s.iter().map(|x| x * x).sum::<f64>() / (s[0] * s[0])
}

/// Central differences of the empirical loss with respect to every weight.
pub fn finite_difference_grad(net: &TwoLayerNet, ds: &Dataset, loss: LossKind, h: f64) -> Matrix {
    let (m, d) = net.weights().shape();
    let mut out = Matrix::zeros(m, d);
    for j in 0..m {
        for k in 0..d {
            let mut plus = net.weights().clone();
            plus.row_mut(j)[k] += h;
            let mut minus = net.weights().clone();
            minus.row_mut(j)[k] -= h;
            let lp = net.with_weights(plus).unwrap().empirical_loss(ds, loss).unwrap();
            let lm = net.with_weights(minus).unwrap().empirical_loss(ds, loss).unwrap();
            out.row_mut(j)[k] = (lp - lm) / (2.0 * h);
        }
    }
    out
}

/// `‖a − b‖_F / max(‖b‖_F, floor)`.
pub fn relative_error(a: &Matrix, b: &Matrix, floor: f64) -> f64 {
    a.sub(b).frobenius() / b.frobenius().max(floor)
}
