//! KKT-point construction and the item-by-item verification report.

use std::fmt::Write as _;

use super::nnls::nnls_gram;
use super::qp::{solve_qp_from, QpSolution};
use super::svm::solve_svm;
use crate::analysis::rank2_residual;
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::linalg::{axpy, dot, norm, Matrix};
use crate::model::{Activation, TwoLayerNet};
use crate::rng::{streams, CounterRng};

pub const MARGIN_TOL: f64 = 1e-8;
pub const RANK_TOL: f64 = 1e-10;
pub const OBJECTIVE_TOL: f64 = 1e-8;
pub const QP_MATCH_TOL: f64 = 1e-7;
pub const NORM_TOL: f64 = 1e-8;
/// Relative stationarity misfit above which a network is flagged as not a KKT point.
pub const KKT_RESIDUAL_FLAG: f64 = 1e-2;
/// Probes with `|zᵀx| ≤ TIE_TOL ‖z‖‖x‖` count as ties and are redrawn.
pub const TIE_TOL: f64 = 1e-12;

/// Rows `0..m1` equal `v`, rows `m1..m` equal `u`.
pub fn build_kkt_network(sol: &QpSolution, m1: usize, m2: usize, activation_gamma: f64) -> Result<TwoLayerNet> {
    if (m1, m2) != (sol.m1, sol.m2) {
        return Err(Error::invalid(format!(
            "solution was computed for m1={}, m2={}, not m1={m1}, m2={m2}",
            sol.m1, sol.m2
        )));
    }
    let d = sol.v.len();
    let mut w = Matrix::zeros(m1 + m2, d);
    for j in 0..m1 + m2 {
        w.row_mut(j).copy_from_slice(if j < m1 { &sol.v } else { &sol.u });
    }
    TwoLayerNet::new(m1, m2, Activation::leaky(activation_gamma)?, w)
}

/// Rescales so that the smallest margin is exactly one.
pub fn normalize_by_margin(net: &TwoLayerNet, ds: &Dataset) -> Result<TwoLayerNet> {
    let q = net.min_margin(ds)?;
    if !(q > 0.0 && q.is_finite()) {
        return Err(Error::DegenerateInput(format!("network does not fit the data (min margin {q})")));
    }
    Ok(net.scaled(1.0 / q))
}

fn mean_rows(w: &Matrix, range: std::ops::Range<usize>) -> Vec<f64> {
    let k = range.len() as f64;
    let mut out = vec![0.0; w.cols()];
    for j in range {
        axpy(1.0 / k, w.row(j), &mut out);
    }
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct LambdaRecovery {
    pub lambda: Vec<f64>,
    /// `‖[v̄; ū] − Aλ‖ / ‖[v̄; ū]‖`.
    pub residual: f64,
    pub is_kkt: bool,
}

/// Fits `v̄ = (1/√m) Σ λ_i y_i φ'(v̄ᵀx_i) x_i` and
/// `ū = −(1/√m) Σ λ_i y_i φ'(ūᵀx_i) x_i` with `λ ≥ 0`, where `v̄`, `ū` are
/// the mean positive and negative neurons and `φ'` is 1 or `γ` by sign.
pub fn recover_lambda(net: &TwoLayerNet, ds: &Dataset, gamma: f64) -> Result<LambdaRecovery> {
    if net.d() != ds.d() {
        return Err(Error::invalid("network and dataset dimensions differ"));
    }
    let (m1, m) = (net.m1(), net.m());
    let v = mean_rows(net.weights(), 0..m1);
    let u = mean_rows(net.weights(), m1..m);
    let n = ds.n();
    let sm = (m as f64).sqrt();
    let mut pv = vec![0.0; n];
    let mut pu = vec![0.0; n];
    let mut vx = vec![0.0; n];
    let mut ux = vec![0.0; n];
    for i in 0..n {
        vx[i] = dot(&v, ds.x(i));
        ux[i] = dot(&u, ds.x(i));
        if vx[i] == 0.0 || ux[i] == 0.0 {
            return Err(Error::UndefinedInput(format!("preactivation of sample {i} is exactly zero")));
        }
        pv[i] = if vx[i] > 0.0 { 1.0 } else { gamma };
        pu[i] = if ux[i] > 0.0 { 1.0 } else { gamma };
    }
    let g = ds.gram();
    let mut ata = Matrix::zeros(n, n);
    for i in 0..n {
        for k in 0..n {
            ata[(i, k)] = ds.y(i) * ds.y(k) * g[(i, k)] * (pv[i] * pv[k] + pu[i] * pu[k]) / m as f64;
        }
    }
    let atb: Vec<f64> = (0..n).map(|i| ds.y(i) * (pv[i] * vx[i] - pu[i] * ux[i]) / sm).collect();
    let b_sq = dot(&v, &v) + dot(&u, &u);
    let sol = nnls_gram(&ata, &atb, b_sq)?;
    let mut rv = v.clone();
    let mut ru = u.clone();
    for i in 0..n {
        let c = sol.x[i] * ds.y(i) / sm;
        axpy(-c * pv[i], ds.x(i), &mut rv);
        axpy(c * pu[i], ds.x(i), &mut ru);
    }
    let residual = if b_sq > 0.0 { (dot(&rv, &rv) + dot(&ru, &ru)).sqrt() / b_sq.sqrt() } else { f64::INFINITY };
    Ok(LambdaRecovery { lambda: sol.x, residual, is_kkt: residual <= KKT_RESIDUAL_FLAG })
}

pub enum KktInput<'a> {
    Solution(&'a QpSolution),
    Network(&'a TwoLayerNet),
}

#[derive(Clone, Debug)]
pub struct VerifyOptions {
    pub probe_count: usize,
    pub perturbations: usize,
    pub seed: u64,
}

impl VerifyOptions {
    pub fn with_probes(probe_count: usize) -> Self {
        Self { probe_count, ..Self::default() }
    }
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self { probe_count: 1000, perturbations: 100, seed: 0 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct KktReport {
    pub m1: usize,
    pub m2: usize,
    pub gamma: f64,
    // item 1
    pub margin_deviation: f64,
    pub margins_equal_one: bool,
    // item 2
    pub neuron_spread: f64,
    pub rank2_residual: f64,
    pub rank_le_2: bool,
    // item 3
    pub lambda: Vec<f64>,
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub lambda_lower: f64,
    pub lambda_upper: f64,
    pub lambda_residual: f64,
    pub lambda_in_bounds: bool,
    pub sign_pattern_ok: bool,
    // item 4
    pub perturbations_checked: usize,
    /// `min_W' ½‖W'‖² − ½‖W‖²` over feasible rescaled perturbations.
    pub optimality_gap: f64,
    /// `|‖W‖² − (m1‖v‖² + m2‖u‖²)| / ‖W‖²`.
    pub objective_split_error: f64,
    pub global_optimum_ok: bool,
    // item 5
    pub qp_distance: f64,
    pub qp_match_ok: bool,
    // item 6
    pub probes_checked: usize,
    pub probes_redrawn: usize,
    pub probe_agreement: f64,
    pub linear_boundary_ok: bool,
    // item 7
    pub z_min_margin: f64,
    pub z_margin_ok: bool,
    pub z_norm: f64,
    pub z_star_norm: f64,
    pub norm_ratio: f64,
    pub norm_bound: f64,
    pub kappa: f64,
    pub norm_ratio_ok: bool,
}

impl KktReport {
    /// One entry per item, in order.
    pub fn items(&self) -> [(&'static str, bool); 7] {
        [
            ("margins_equal_one", self.margins_equal_one),
            ("rank_le_2", self.rank_le_2),
            ("lambda_in_bounds", self.lambda_in_bounds && self.sign_pattern_ok),
            ("global_optimum", self.global_optimum_ok),
            ("qp_optimum", self.qp_match_ok),
            ("linear_boundary", self.linear_boundary_ok),
            ("approx_max_margin", self.z_margin_ok && self.norm_ratio_ok),
        ]
    }

    pub fn passed(&self) -> bool {
        self.items().iter().all(|(_, ok)| *ok)
    }

    pub fn failing(&self) -> Vec<&'static str> {
        self.items().iter().filter(|(_, ok)| !ok).map(|(name, _)| *name).collect()
    }

    /// Re-derives every boolean from the stored measurements.
    pub fn is_consistent(&self) -> bool {
        let lam = self.lambda_min > self.lambda_lower && self.lambda_max < self.lambda_upper;
        self.margins_equal_one == (self.margin_deviation <= MARGIN_TOL)
            && self.rank_le_2 == (self.rank2_residual <= RANK_TOL && self.neuron_spread <= RANK_TOL)
            && self.lambda_in_bounds == lam
            && self.global_optimum_ok
                == (self.optimality_gap >= -OBJECTIVE_TOL && self.objective_split_error <= RANK_TOL)
            && self.qp_match_ok == (self.qp_distance <= QP_MATCH_TOL)
            && self.linear_boundary_ok == (self.probe_agreement == 1.0)
            && self.z_margin_ok == (self.z_min_margin >= 1.0 - MARGIN_TOL)
            && self.norm_ratio_ok == (self.norm_ratio <= self.norm_bound * (1.0 + NORM_TOL))
    }

    pub fn to_text(&self) -> String {
        let mark = |ok: bool| if ok { "PASS" } else { "FAIL" };
        let mut s = String::new();
        let _ = writeln!(s, "KKT report (m1={}, m2={}, gamma={})", self.m1, self.m2, self.gamma);
        let _ = writeln!(s, "item 1 {}  max |y f(x) - 1| = {:.3e}", mark(self.margins_equal_one), self.margin_deviation);
        let _ = writeln!(
            s,
            "item 2 {}  rank2 residual = {:.3e}, neuron spread = {:.3e}",
            mark(self.rank_le_2),
            self.rank2_residual,
            self.neuron_spread
        );
        let _ = writeln!(
            s,
            "item 3 {}  lambda in [{:.6e}, {:.6e}] vs ({:.6e}, {:.6e}); margins to ends {:.3e}, {:.3e}; stationarity residual {:.3e}; sign pattern {}",
            mark(self.lambda_in_bounds && self.sign_pattern_ok),
            self.lambda_min,
            self.lambda_max,
            self.lambda_lower,
            self.lambda_upper,
            self.lambda_min - self.lambda_lower,
            self.lambda_upper - self.lambda_max,
            self.lambda_residual,
            if self.sign_pattern_ok { "ok" } else { "violated" }
        );
        let _ = writeln!(
            s,
            "item 4 {}  min objective gap over {} perturbations = {:.3e}, split error = {:.3e}",
            mark(self.global_optimum_ok),
            self.perturbations_checked,
            self.optimality_gap,
            self.objective_split_error
        );
        let _ = writeln!(s, "item 5 {}  distance to re-solved QP = {:.3e}", mark(self.qp_match_ok), self.qp_distance);
        let _ = writeln!(
            s,
            "item 6 {}  sign agreement {:.6} over {} points ({} ties redrawn)",
            mark(self.linear_boundary_ok),
            self.probe_agreement,
            self.probes_checked,
            self.probes_redrawn
        );
        let _ = writeln!(
            s,
            "item 7 {}  min y z'x = {:.12}, |z|/|z*| = {:.9} <= {:.9} (kappa={:.6})",
            mark(self.z_margin_ok && self.norm_ratio_ok),
            self.z_min_margin,
            self.norm_ratio,
            self.norm_bound,
            self.kappa
        );
        let _ = writeln!(s, "overall {}", mark(self.passed()));
        s
    }

    pub fn to_csv(&self) -> String {
        let rows: [(&str, bool, f64, f64); 10] = [
            ("margin_deviation", self.margins_equal_one, self.margin_deviation, MARGIN_TOL),
            ("rank2_residual", self.rank_le_2, self.rank2_residual, RANK_TOL),
            ("lambda_min", self.lambda_in_bounds, self.lambda_min, self.lambda_lower),
            ("lambda_max", self.lambda_in_bounds, self.lambda_max, self.lambda_upper),
            ("sign_pattern", self.sign_pattern_ok, f64::from(self.sign_pattern_ok as u8), 1.0),
            ("optimality_gap", self.global_optimum_ok, self.optimality_gap, -OBJECTIVE_TOL),
            ("qp_distance", self.qp_match_ok, self.qp_distance, QP_MATCH_TOL),
            ("probe_agreement", self.linear_boundary_ok, self.probe_agreement, 1.0),
            ("z_min_margin", self.z_margin_ok, self.z_min_margin, 1.0 - MARGIN_TOL),
            ("norm_ratio", self.norm_ratio_ok, self.norm_ratio, self.norm_bound),
        ];
        let mut s = String::from("check,pass,value,bound\n");
        for (name, ok, value, bound) in rows {
            let _ = writeln!(s, "{name},{ok},{value:e},{bound:e}");
        }
        s
    }
}

fn sign(x: f64) -> i8 {
    if x > 0.0 {
        1
    } else if x < 0.0 {
        -1
    } else {
        0
    }
}

/// Measures items 1–7 for a QP solution or an arbitrary network.
/// Shape mismatches are the only errors; failed checks are recorded.
pub fn verify_theorem(input: KktInput<'_>, ds: &Dataset, gamma: f64, opts: &VerifyOptions) -> Result<KktReport> {
    let owned;
    let (net, lambda, lambda_residual) = match input {
        KktInput::Solution(sol) => {
            owned = build_kkt_network(sol, sol.m1, sol.m2, gamma)?;
            if sol.v.len() != ds.d() {
                return Err(Error::invalid("solution and dataset dimensions differ"));
            }
            let residual = recover_lambda(&owned, ds, gamma).map(|r| r.residual).unwrap_or(f64::NAN);
            (&owned, sol.duals.clone(), residual)
        }
        KktInput::Network(net) => {
            if net.d() != ds.d() {
                return Err(Error::invalid("network and dataset dimensions differ"));
            }
            match recover_lambda(net, ds, gamma) {
                Ok(r) => (net, r.lambda, r.residual),
                Err(_) => (net, vec![f64::NAN; ds.n()], f64::NAN),
            }
        }
    };
    let (n, m1, m2, m) = (ds.n(), net.m1(), net.m2(), net.m());
    let w = net.weights();
    let v = mean_rows(w, 0..m1);
    let u = mean_rows(w, m1..m);

    let margins = net.margins(ds)?;
    let margin_deviation = margins.iter().fold(0.0f64, |a, q| a.max((q - 1.0).abs()));

    let row_scale = (w.frobenius_sq() / m as f64).sqrt().max(f64::MIN_POSITIVE);
    let mut spread = 0.0f64;
    for j in 0..m {
        let c = if j < m1 { &v } else { &u };
        let diff: Vec<f64> = w.row(j).iter().zip(c).map(|(a, b)| a - b).collect();
        spread = spread.max(norm(&diff) / row_scale);
    }
    let r2 = rank2_residual(w).unwrap_or(f64::NAN);

    let (r_min, r_max) = (ds.r_min(), ds.r_max());
    let lambda_lower = 1.0 / (2.0 * r_max * r_max);
    let lambda_upper = 3.0 / (2.0 * gamma * gamma * r_min * r_min);
    let lambda_min = lambda.iter().copied().fold(f64::INFINITY, f64::min);
    let lambda_max = lambda.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lambda_in_bounds = lambda_min > lambda_lower && lambda_max < lambda_upper;
    let sign_pattern_ok = (0..n).all(|i| {
        (0..m).all(|j| {
            let p = ds.y(i) * dot(w.row(j), ds.x(i));
            if j < m1 {
                p > 0.0
            } else {
                p < 0.0
            }
        })
    });

    // item 4: random perturbations, rescaled onto the feasible set
    let obj = 0.5 * w.frobenius_sq();
    let mut rng = CounterRng::new(opts.seed, streams::PERTURBATIONS);
    let scales = [1e-3, 1e-2, 1e-1, 0.5];
    let fro = w.frobenius();
    let mut gap = f64::INFINITY;
    let mut checked = 0;
    let mut attempts = 0;
    while checked < opts.perturbations && attempts < 20 * opts.perturbations.max(1) {
        attempts += 1;
        let s = scales[attempts % scales.len()];
        let mut e = Matrix::zeros(m, ds.d());
        rng.fill_normal(e.as_mut_slice(), 1.0);
        let en = e.frobenius();
        let mut wp = w.clone();
        wp.add_scaled(s * fro / en, &e);
        let pert = net.with_weights(wp)?;
        let q = pert.min_margin(ds)?;
        if !(q > 0.0) {
            continue;
        }
        checked += 1;
        gap = gap.min(0.5 * pert.weights().frobenius_sq() / (q * q) - obj);
    }
    let split = m1 as f64 * dot(&v, &v) + m2 as f64 * dot(&u, &u);
    let objective_split_error = (w.frobenius_sq() - split).abs() / w.frobenius_sq().max(f64::MIN_POSITIVE);
    let global_optimum_ok = gap >= -OBJECTIVE_TOL && objective_split_error <= RANK_TOL;

    // item 5: re-solve from a different dual start
    let qp_distance = match solve_qp_from(ds, m1, m2, gamma, &vec![1.0 / (r_min * r_min); n]) {
        Ok(sol) => {
            let rel = |a: &[f64], b: &[f64]| {
                let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
                norm(&d) / norm(b).max(f64::MIN_POSITIVE)
            };
            rel(&v, &sol.v).max(rel(&u, &sol.u))
        }
        Err(_) => f64::NAN,
    };

    // item 6: sign agreement on training points and probes
    let sm = (m as f64).sqrt();
    let z: Vec<f64> = v.iter().zip(&u).map(|(a, b)| (m1 as f64 * a - m2 as f64 * b) / sm).collect();
    let z_norm = norm(&z);
    let mut agree = 0usize;
    let mut total = 0usize;
    let mut redrawn = 0usize;
    let judge = |x: &[f64], agree: &mut usize, total: &mut usize| -> bool {
        let zx = dot(&z, x);
        if zx.abs() <= TIE_TOL * z_norm * norm(x) {
            return false;
        }
        *total += 1;
        if sign(net.forward(x).unwrap_or(f64::NAN)) == sign(zx) {
            *agree += 1;
        }
        true
    };
    for i in 0..n {
        judge(ds.x(i), &mut agree, &mut total);
    }
    let mut prng = CounterRng::new(opts.seed, streams::PROBES);
    let d = ds.d();
    let mut x = vec![0.0; d];
    let mut coef = vec![0.0; n];
    let mut k = 0;
    while k < opts.probe_count {
        if k % 2 == 0 {
            prng.fill_normal(&mut x, r_max / (d as f64).sqrt());
        } else {
            prng.fill_normal(&mut coef, 1.0);
            x.iter_mut().for_each(|e| *e = 0.0);
            for i in 0..n {
                axpy(coef[i], ds.x(i), &mut x);
            }
        }
        if judge(&x, &mut agree, &mut total) {
            k += 1;
        } else {
            redrawn += 1;
            if redrawn > 10 * opts.probe_count.max(10) {
                break;
            }
        }
    }
    let probe_agreement = if total == 0 { f64::NAN } else { agree as f64 / total as f64 };

    // item 7
    let z_min_margin = (0..n).map(|i| ds.y(i) * dot(&z, ds.x(i))).fold(f64::INFINITY, f64::min);
    let z_star_norm = solve_svm(ds).map(|s| s.norm()).unwrap_or(f64::NAN);
    let kappa = ((m1.min(m2) as f64) / (m1.max(m2) as f64)).sqrt();
    let norm_bound = 2.0 / (kappa + gamma);
    let norm_ratio = z_norm / z_star_norm;

    Ok(KktReport {
        m1,
        m2,
        gamma,
        margin_deviation,
        margins_equal_one: margin_deviation <= MARGIN_TOL,
        neuron_spread: spread,
        rank2_residual: r2,
        rank_le_2: r2 <= RANK_TOL && spread <= RANK_TOL,
        lambda,
        lambda_min,
        lambda_max,
        lambda_lower,
        lambda_upper,
        lambda_residual,
        lambda_in_bounds,
        sign_pattern_ok,
        perturbations_checked: checked,
        optimality_gap: gap,
        objective_split_error,
        global_optimum_ok,
        qp_distance,
        qp_match_ok: qp_distance <= QP_MATCH_TOL,
        probes_checked: total,
        probes_redrawn: redrawn,
        probe_agreement,
        linear_boundary_ok: probe_agreement == 1.0,
        z_min_margin,
        z_margin_ok: z_min_margin >= 1.0 - MARGIN_TOL,
        z_norm,
        z_star_norm,
        norm_ratio,
        norm_bound,
        kappa,
        norm_ratio_ok: norm_ratio <= norm_bound * (1.0 + NORM_TOL),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{gen_near_orthogonal, NearOrthogonal};
    use crate::margin::solve_qp;

    fn certified(n: usize, d: usize, seed: u64) -> Dataset {
        let c = NearOrthogonal::overlap_for_flow(n, 1.2, 0.5, 0.5);
        gen_near_orthogonal(n, d, 1.2, c, seed).unwrap()
    }

    #[test]
    fn two_neuron_network_is_the_stack() {
        let ds = certified(4, 32, 1);
        let sol = solve_qp(&ds, 1, 1, 0.5).unwrap();
        let net = build_kkt_network(&sol, 1, 1, 0.5).unwrap();
        assert_eq!(net.weights().row(0), &sol.v[..]);
        assert_eq!(net.weights().row(1), &sol.u[..]);
        assert!(build_kkt_network(&sol, 2, 1, 0.5).is_err());
    }

    #[test]
    fn qp_network_passes_every_item() {
        let ds = certified(8, 256, 2);
        let sol = solve_qp(&ds, 6, 2, 0.5).unwrap();
        let rep = verify_theorem(KktInput::Solution(&sol), &ds, 0.5, &VerifyOptions::with_probes(400)).unwrap();
        assert!(rep.passed(), "{}", rep.to_text());
        assert!(rep.is_consistent());
        assert_eq!(rep.to_csv().lines().count(), 11);
    }

    #[test]
    fn recovered_lambda_matches_duals() {
        let ds = certified(10, 200, 3);
        let sol = solve_qp(&ds, 3, 4, 0.5).unwrap();
        let net = build_kkt_network(&sol, 3, 4, 0.5).unwrap();
        let rec = recover_lambda(&net, &ds, 0.5).unwrap();
        for (a, b) in rec.lambda.iter().zip(&sol.duals) {
            assert!((a - b).abs() <= 1e-6, "{a} vs {b}");
        }
        assert!(rec.residual < 1e-8 && rec.is_kkt);
    }

    #[test]
    fn random_network_is_not_kkt() {
        let ds = certified(10, 200, 4);
        let mut w = Matrix::zeros(6, 200);
        CounterRng::new(9, streams::INIT).fill_normal(w.as_mut_slice(), 1.0);
        let net = TwoLayerNet::new(3, 3, Activation::leaky(0.5).unwrap(), w).unwrap();
        let rec = recover_lambda(&net, &ds, 0.5).unwrap();
        assert!(rec.residual > 0.1 && !rec.is_kkt);
    }

    #[test]
    fn doubled_network_fails_margins() {
        let ds = certified(6, 128, 5);
        let sol = solve_qp(&ds, 2, 2, 0.5).unwrap();
        let net = build_kkt_network(&sol, 2, 2, 0.5).unwrap().scaled(2.0);
        let rep = verify_theorem(KktInput::Network(&net), &ds, 0.5, &VerifyOptions::with_probes(50)).unwrap();
        assert!(!rep.margins_equal_one);
        assert!((rep.margin_deviation - 1.0).abs() < 1e-8);
        assert!(rep.failing().contains(&"margins_equal_one"));
        let back = normalize_by_margin(&net, &ds).unwrap();
        let rep = verify_theorem(KktInput::Network(&back), &ds, 0.5, &VerifyOptions::with_probes(50)).unwrap();
        assert!(rep.passed(), "{}", rep.to_text());
    }
}
