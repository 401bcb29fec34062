//! Lawson–Hanson nonnegative least squares, `min ‖Ax − b‖` s.t. `x ≥ 0`.

use crate::error::{Error, Result};
use crate::linalg::{cholesky_solve, dot, Matrix};

#[derive(Clone, Debug, PartialEq)]
pub struct NnlsSolution {
    pub x: Vec<f64>,
    /// `‖Ax − b‖` (for the Gram form, reconstructed from `AᵀA`, `Aᵀb`, `‖b‖²`).
    pub residual_norm: f64,
    pub iterations: usize,
}

pub fn nnls(a: &Matrix, b: &[f64]) -> Result<NnlsSolution> {
    if a.rows() != b.len() {
        return Err(Error::invalid("nnls: A and b disagree in length"));
    }
    let ata = a.transpose().row_gram();
    let atb = a.matvec_t(b);
    let mut sol = nnls_gram(&ata, &atb, dot(b, b))?;
    let r: Vec<f64> = a.matvec(&sol.x).iter().zip(b).map(|(p, q)| p - q).collect();
    sol.residual_norm = dot(&r, &r).sqrt();
    Ok(sol)
}

/// Same problem given `AᵀA`, `Aᵀb` and `‖b‖²`.
pub fn nnls_gram(ata: &Matrix, atb: &[f64], b_sq: f64) -> Result<NnlsSolution> {
    let n = atb.len();
    if ata.shape() != (n, n) {
        return Err(Error::invalid("nnls: Gram matrix shape mismatch"));
    }
    let tol = 1e-13 * atb.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
    let max_iter = 3 * n + 10;
    let mut x = vec![0.0; n];
    let mut passive = vec![false; n];
    let solve_passive = |passive: &[bool]| -> Option<Vec<f64>> {
        let idx: Vec<usize> = (0..n).filter(|&i| passive[i]).collect();
        let mut sub = Matrix::zeros(idx.len(), idx.len());
        for (a, &i) in idx.iter().enumerate() {
            for (b, &k) in idx.iter().enumerate() {
                sub[(a, b)] = ata[(i, k)];
            }
        }
        let rhs: Vec<f64> = idx.iter().map(|&i| atb[i]).collect();
        let s = cholesky_solve(&sub, &rhs)?;
        let mut full = vec![0.0; n];
        for (a, &i) in idx.iter().enumerate() {
            full[i] = s[a];
        }
        Some(full)
    };
    let stalled = |iterations: usize, x: &[f64]| {
        let w: Vec<f64> = ata.matvec(x).iter().zip(atb).map(|(g, b)| b - g).collect();
        Error::SolverStalled { iterations, residual: w.iter().fold(0.0f64, |m, v| m.max(*v)) }
    };
    let mut iterations = 0;
    loop {
        let w: Vec<f64> = ata.matvec(&x).iter().zip(atb).map(|(g, b)| b - g).collect();
        let pick = (0..n).filter(|&j| !passive[j] && w[j] > tol).max_by(|&a, &b| w[a].total_cmp(&w[b]));
        let Some(j) = pick else { break };
        iterations += 1;
        if iterations > max_iter {
            return Err(stalled(iterations, &x));
        }
        passive[j] = true;
        loop {
            let s = solve_passive(&passive).ok_or_else(|| stalled(iterations, &x))?;
            if (0..n).all(|i| !passive[i] || s[i] > 0.0) {
                x = s;
                break;
            }
            let mut step = f64::INFINITY;
            let mut blocking = None;
            for i in 0..n {
                if passive[i] && s[i] <= 0.0 {
                    let t = x[i] / (x[i] - s[i]);
                    if t < step {
                        step = t;
                        blocking = Some(i);
                    }
                }
            }
            for i in 0..n {
                x[i] += step * (s[i] - x[i]);
            }
            if let Some(i) = blocking {
                x[i] = 0.0;
            }
            for i in 0..n {
                if passive[i] && x[i] <= 0.0 {
                    passive[i] = false;
                    x[i] = 0.0;
                }
            }
            if passive.iter().all(|p| !p) {
                break;
            }
        }
    }
    let ax_sq = dot(&x, &ata.matvec(&x));
    let residual_norm = (ax_sq - 2.0 * dot(&x, atb) + b_sq).max(0.0).sqrt();
    Ok(NnlsSolution { x, residual_norm, iterations })
}
