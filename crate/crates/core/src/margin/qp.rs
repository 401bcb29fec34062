//! The reduced problem
//!
//! ```text
//! min (m1/2)‖v‖² + (m2/2)‖u‖²
//! s.t. (m1/√m) vᵀx_i − γ (m2/√m) uᵀx_i ≥ 1   (y_i = +1)
//!      (m2/√m) uᵀx_i − γ (m1/√m) vᵀx_i ≥ 1   (y_i = −1)
//! ```
//!
//! solved through its dual `max Σμ − ½ μᵀQμ, μ ≥ 0` with
//! `Q_ik = c(y_i, y_k) ⟨x_i, x_k⟩`, where `c = (m1 + γ²m2)/m` for two
//! positives, `(γ²m1 + m2)/m` for two negatives and `−γ` otherwise.
//! Stationarity gives the primal back:
//! `v = (Σ_{I+} μ_i x_i − γ Σ_{I−} μ_i x_i)/√m`,
//! `u = (Σ_{I−} μ_i x_i − γ Σ_{I+} μ_i x_i)/√m`.

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::linalg::{axpy, cholesky_solve, dot, top_eigenpair, Matrix};

/// Convergence tolerance on the KKT residual.
pub const QP_TOL: f64 = 1e-9;
const MAX_PG_ITERS: usize = 200_000;
const MAX_ACTIVE_SET_ROUNDS: usize = 500;

#[derive(Clone, Debug, PartialEq)]
pub struct QpSolution {
    pub m1: usize,
    pub m2: usize,
    pub gamma: f64,
    pub v: Vec<f64>,
    pub u: Vec<f64>,
    /// Dual variables `μ_i ≥ 0`.
    pub duals: Vec<f64>,
    /// `(m1/2)‖v‖² + (m2/2)‖u‖²`
    pub objective: f64,
    /// Largest of primal infeasibility, dual infeasibility and
    /// complementarity violation, relative to the unit right-hand side.
    pub kkt_residual: f64,
    pub iterations: usize,
}

impl QpSolution {
    /// Constraint values `c_i(v, u)`; feasibility means `c_i ≥ 1`.
    pub fn constraints(&self, ds: &Dataset) -> Vec<f64> {
        constraint_values(ds, self.m1, self.m2, self.gamma, &self.v, &self.u)
    }

    /// `z = (m1 v − m2 u)/√m`.
    pub fn z(&self) -> Vec<f64> {
        let sm = ((self.m1 + self.m2) as f64).sqrt();
        self.v
            .iter()
            .zip(&self.u)
            .map(|(v, u)| (self.m1 as f64 * v - self.m2 as f64 * u) / sm)
            .collect()
    }
}

pub(crate) fn constraint_values(ds: &Dataset, m1: usize, m2: usize, gamma: f64, v: &[f64], u: &[f64]) -> Vec<f64> {
    let sm = ((m1 + m2) as f64).sqrt();
    let (a, b) = (m1 as f64 / sm, m2 as f64 / sm);
    (0..ds.n())
        .map(|i| {
            let (vx, ux) = (dot(v, ds.x(i)), dot(u, ds.x(i)));
            if ds.y(i) > 0.0 {
                a * vx - gamma * b * ux
            } else {
                b * ux - gamma * a * vx
            }
        })
        .collect()
}

pub fn problem_objective(m1: usize, m2: usize, v: &[f64], u: &[f64]) -> f64 {
    0.5 * (m1 as f64 * dot(v, v) + m2 as f64 * dot(u, u))
}

fn dual_matrix(ds: &Dataset, m1: usize, m2: usize, gamma: f64) -> Matrix {
    let g = ds.gram();
    let m = (m1 + m2) as f64;
    let pp = (m1 as f64 + gamma * gamma * m2 as f64) / m;
    let nn = (gamma * gamma * m1 as f64 + m2 as f64) / m;
    let n = ds.n();
    let mut q = Matrix::zeros(n, n);
    for i in 0..n {
        for k in 0..n {
            let c = match (ds.y(i) > 0.0, ds.y(k) > 0.0) {
                (true, true) => pp,
                (false, false) => nn,
                _ => -gamma,
            };
            q[(i, k)] = c * g[(i, k)];
        }
    }
    q
}

fn primal(ds: &Dataset, m1: usize, m2: usize, gamma: f64, mu: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let d = ds.d();
    let sm = ((m1 + m2) as f64).sqrt();
    let mut v = vec![0.0; d];
    let mut u = vec![0.0; d];
    for i in 0..ds.n() {
        let (cv, cu) = if ds.y(i) > 0.0 { (1.0, -gamma) } else { (-gamma, 1.0) };
        axpy(cv * mu[i] / sm, ds.x(i), &mut v);
        axpy(cu * mu[i] / sm, ds.x(i), &mut u);
    }
    (v, u)
}

/// KKT residual of the dual iterate: with `r = Qμ − 1` (constraint slack),
/// primal infeasibility `max(0, −r_i)` and complementarity `μ_i |r_i|`
/// scaled by the diagonal of `Q`.
pub(crate) fn dual_residual(q: &Matrix, mu: &[f64]) -> f64 {
    let qm = q.matvec(mu);
    let mut res = 0.0f64;
    for i in 0..mu.len() {
        let r = qm[i] - 1.0;
        res = res.max((-r).max(0.0)).max(mu[i].max(0.0) * r.abs() * q[(i, i)]).max((-mu[i]).max(0.0));
    }
    res
}

/// Projected gradient ascent (Nesterov-accelerated, with restarts) on the
/// dual, with a periodic exact polish of the current active set.
fn projected_gradient(q: &Matrix, start: &[f64], tol: f64) -> (Vec<f64>, usize) {
    let n = start.len();
    let l = top_eigenpair(q).value.max(f64::MIN_POSITIVE);
    let step = 1.0 / l;
    let mut x: Vec<f64> = start.iter().map(|v| v.max(0.0)).collect();
    let mut y = x.clone();
    let mut t = 1.0f64;
    let obj = |mu: &[f64]| mu.iter().sum::<f64>() - 0.5 * dot(mu, &q.matvec(mu));
    let mut prev_obj = obj(&x);
    for it in 1..=MAX_PG_ITERS {
        let qy = q.matvec(&y);
        let next: Vec<f64> = (0..n).map(|i| (y[i] + step * (1.0 - qy[i])).max(0.0)).collect();
        let cur = obj(&next);
        if cur < prev_obj - 1e-15 * prev_obj.abs() && t > 1.0 {
            // restart momentum
            y = x.clone();
            t = 1.0;
            continue;
        }
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let beta = (t - 1.0) / t_next;
        y = (0..n).map(|i| next[i] + beta * (next[i] - x[i])).collect();
        x = next;
        t = t_next;
        prev_obj = cur;
        if it % 20 == 0 {
            if let Some(p) = polish(q, &x) {
                if dual_residual(q, &p) <= tol {
                    return (p, it);
                }
            }
        }
    }
    (x, MAX_PG_ITERS)
}

/// Exact refinement: solve `Q_FF μ_F = 1` on the free set and move indices
/// in or out until the KKT conditions hold.
pub(crate) fn polish(q: &Matrix, mu: &[f64]) -> Option<Vec<f64>> {
    let n = mu.len();
    let scale = (0..n).map(|i| q[(i, i)]).fold(0.0, f64::max);
    let mut free: Vec<bool> = mu.iter().map(|&v| v > 1e-12 / scale.max(f64::MIN_POSITIVE)).collect();
    for _ in 0..MAX_ACTIVE_SET_ROUNDS {
        let idx: Vec<usize> = (0..n).filter(|&i| free[i]).collect();
        let mut sol = vec![0.0; n];
        if !idx.is_empty() {
            let mut sub = Matrix::zeros(idx.len(), idx.len());
            for (a, &i) in idx.iter().enumerate() {
                for (b, &k) in idx.iter().enumerate() {
                    sub[(a, b)] = q[(i, k)];
                }
            }
            let x = cholesky_solve(&sub, &vec![1.0; idx.len()])?;
            for (a, &i) in idx.iter().enumerate() {
                sol[i] = x[a];
            }
        }
        if let Some(&drop) = idx.iter().filter(|&&i| sol[i] <= 0.0).min_by(|&&a, &&b| sol[a].total_cmp(&sol[b])) {
            free[drop] = false;
            continue;
        }
        let qm = q.matvec(&sol);
        let add = (0..n).filter(|&i| !free[i] && qm[i] < 1.0 - 1e-14).min_by(|&a, &b| qm[a].total_cmp(&qm[b]));
        match add {
            Some(i) => free[i] = true,
            None => return Some(sol),
        }
    }
    None
}

pub fn solve_qp(ds: &Dataset, m1: usize, m2: usize, gamma: f64) -> Result<QpSolution> {
    solve_qp_from(ds, m1, m2, gamma, &vec![0.0; ds.n()])
}

/// As [`solve_qp`], starting the dual iteration at `start`.
pub fn solve_qp_from(ds: &Dataset, m1: usize, m2: usize, gamma: f64, start: &[f64]) -> Result<QpSolution> {
    if m1 == 0 || m2 == 0 {
        return Err(Error::invalid("need m1 >= 1 and m2 >= 1"));
    }
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(Error::invalid(format!("gamma must lie in (0, 1], got {gamma}")));
    }
    if start.len() != ds.n() {
        return Err(Error::invalid("dual start has the wrong length"));
    }
    let q = dual_matrix(ds, m1, m2, gamma);
    let (pg, iterations) = projected_gradient(&q, start, QP_TOL);
    let mu = match polish(&q, &pg) {
        Some(p) if dual_residual(&q, &p) <= dual_residual(&q, &pg) => p,
        _ => pg,
    };
    let (v, u) = primal(ds, m1, m2, gamma, &mu);
    let cons = constraint_values(ds, m1, m2, gamma, &v, &u);
    let mut kkt = 0.0f64;
    for i in 0..ds.n() {
        let r = cons[i] - 1.0;
        kkt = kkt.max((-r).max(0.0)).max((-mu[i]).max(0.0)).max(mu[i] * r.abs() * q[(i, i)]);
    }
    if !(kkt <= QP_TOL) {
        return Err(Error::SolverStalled { iterations, residual: kkt });
    }
    Ok(QpSolution {
        m1,
        m2,
        gamma,
        objective: problem_objective(m1, m2, &v, &u),
        v,
        u,
        duals: mu,
        kkt_residual: kkt,
        iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{gen_near_orthogonal, NearOrthogonal};
    use crate::linalg::norm;

    #[test]
    fn single_sample_reduces_to_scalars() {
        let c = 3.0;
        let xs = Matrix::from_rows(&[vec![c, 0.0, 0.0]]).unwrap();
        let ds = Dataset::new(xs, vec![1.0], 0, "").unwrap();
        let sol = solve_qp(&ds, 1, 1, 0.5).unwrap();
        // v = μx/√2, u = −μx/(2√2); the active constraint gives μ = 8/(5c²).
        let mu = 8.0 / (5.0 * c * c);
        let s = mu * c / 2f64.sqrt();
        assert!((sol.duals[0] - mu).abs() < 1e-14);
        assert!((sol.v[0] - s).abs() < 1e-14 && sol.v[1] == 0.0);
        assert!((sol.u[0] + s / 2.0).abs() < 1e-14);
        assert!((sol.constraints(&ds)[0] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn unique_from_different_starts() {
        let (n, gamma) = (10, 0.5);
        let c = NearOrthogonal::overlap_for_flow(n, 1.3, gamma, 0.5);
        let ds = gen_near_orthogonal(n, 128, 1.3, c, 5).unwrap();
        let a = solve_qp(&ds, 3, 5, gamma).unwrap();
        let b = solve_qp_from(&ds, 3, 5, gamma, &vec![1.0; n]).unwrap();
        let dv: Vec<f64> = a.v.iter().zip(&b.v).map(|(x, y)| x - y).collect();
        assert!(norm(&dv) <= 1e-7 * norm(&a.v));
        assert!(a.kkt_residual <= QP_TOL);
        assert!(a.constraints(&ds).iter().all(|&c| c >= 1.0 - 1e-8));
    }

    #[test]
    fn inactive_constraints_are_handled() {
        // Second point is a scaled copy of the first, so its constraint is slack.
        let xs = Matrix::from_rows(&[vec![1.0, 0.0], vec![3.0, 0.0]]).unwrap();
        let ds = Dataset::new(xs, vec![1.0, 1.0], 0, "").unwrap();
        let sol = solve_qp(&ds, 1, 1, 0.5).unwrap();
        assert!(sol.duals[1] == 0.0 && sol.duals[0] > 0.0);
        let cons = sol.constraints(&ds);
        assert!((cons[0] - 1.0).abs() < 1e-12 && cons[1] > 2.9);
    }
}
