//! Spectral and loss diagnostics, and trace-level bound checks.

use std::fmt::Write as _;

use crate::dataset::{Dataset, OrthogonalityCertificate};
use crate::error::{Error, Result};
use crate::linalg::{dot, norm, top_eigenpair, top_two_eigenvalues, Matrix};
use crate::model::{LossKind, TwoLayerNet};
use crate::training::{TraceKind, TrainingTrace};

/// Frobenius norm and the top of the spectrum of `W`.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralSummary {
    pub fro_sq: f64,
    pub sigma1_sq: f64,
    /// Present only when requested (it costs a second power iteration).
    pub sigma2_sq: Option<f64>,
    /// False if a power iteration stopped at the iteration cap.
    pub full_precision: bool,
}

impl SpectralSummary {
    pub fn stable_rank(&self) -> f64 {
        self.fro_sq / self.sigma1_sq
    }

    pub fn spec_norm(&self) -> f64 {
        self.sigma1_sq.sqrt()
    }

    pub fn fro_norm(&self) -> f64 {
        self.fro_sq.sqrt()
    }

    pub fn rank2_residual(&self) -> Option<f64> {
        self.sigma2_sq.map(|s2| (1.0 - (self.sigma1_sq + s2) / self.fro_sq).clamp(0.0, 1.0))
    }
}

fn nonzero(w: &Matrix) -> Result<()> {
    if w.is_zero() {
        Err(Error::UndefinedInput("stable rank of the zero matrix".into()))
    } else if !w.all_finite() {
        Err(Error::UndefinedInput("matrix has non-finite entries".into()))
    } else {
        Ok(())
    }
}

pub fn spectral_summary(w: &Matrix, with_second: bool) -> Result<SpectralSummary> {
    nonzero(w)?;
    let g = w.small_gram();
    let fro_sq = w.frobenius_sq();
    if with_second {
        let (a, b) = top_two_eigenvalues(&g);
        Ok(SpectralSummary {
            fro_sq,
            sigma1_sq: a.value,
            sigma2_sq: Some(b.value.max(0.0)),
            full_precision: a.converged && b.converged,
        })
    } else {
        let a = top_eigenpair(&g);
        Ok(SpectralSummary { fro_sq, sigma1_sq: a.value, sigma2_sq: None, full_precision: a.converged })
    }
}

/// `‖W‖_F² / ‖W‖₂²`.
pub fn stable_rank(w: &Matrix) -> Result<f64> {
    Ok(spectral_summary(w, false)?.stable_rank())
}

/// `1 − (σ₁² + σ₂²)/‖W‖_F²`.
pub fn rank2_residual(w: &Matrix) -> Result<f64> {
    Ok(spectral_summary(w, true)?.rank2_residual().expect("requested"))
}

/// `max_{i,j} g(q_i)/g(q_j)` for the given loss, evaluated in log space.
pub fn loss_ratio_from_margins(margins: &[f64], loss: LossKind) -> f64 {
    let (lo, hi) = margins.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &q| {
        let l = loss.log_g(q);
        (lo.min(l), hi.max(l))
    });
    (hi - lo).exp()
}

/// Sigmoid-loss ratio `max_{i,j} g_i/g_j` (logistic `g`).
pub fn loss_ratio(net: &TwoLayerNet, ds: &Dataset) -> Result<f64> {
    Ok(loss_ratio_from_margins(&net.margins(ds)?, LossKind::Logistic))
}

/// Constants `c` in the proxy-PL lower bounds `‖∇L̂‖_F ≥ c·Ĝ`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProxyPlConstants {
    /// `γ R_min / (2√2 R √n)`, the gradient-descent form.
    pub descent: f64,
    /// `√2 R_min γ / (3 R √n)`, the gradient-flow form.
    pub flow: f64,
}

pub fn proxy_pl_constants(ds: &Dataset, gamma: f64) -> ProxyPlConstants {
    let (r_min, r_max) = (ds.r_min(), ds.r_max());
    let r = r_max / r_min;
    let sn = (ds.n() as f64).sqrt();
    ProxyPlConstants {
        descent: gamma * r_min / (2.0 * 2f64.sqrt() * r * sn),
        flow: 2f64.sqrt() * r_min * gamma / (3.0 * r * sn),
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProxyPl {
    /// `‖∇L̂(W)‖_F`
    pub lhs: f64,
    pub rhs_descent: f64,
    pub rhs_flow: f64,
}

impl ProxyPl {
    pub fn holds(&self) -> bool {
        self.lhs >= self.rhs_descent && self.lhs >= self.rhs_flow
    }
}

pub fn proxy_pl(net: &TwoLayerNet, ds: &Dataset, loss: LossKind) -> Result<ProxyPl> {
    let e = net.evaluate(ds, loss)?;
    let c = proxy_pl_constants(ds, net.activation().gamma());
    Ok(ProxyPl { lhs: e.grad.frobenius(), rhs_descent: c.descent * e.risk, rhs_flow: c.flow * e.risk })
}

#[derive(Clone, Debug, PartialEq)]
pub struct MuAlignment {
    /// `⟨w_j, μ̂⟩ / (‖w_j‖ ‖μ̂‖)`; zero rows give 0.
    pub signed: Vec<f64>,
}

impl MuAlignment {
    pub fn abs(&self) -> Vec<f64> {
        self.signed.iter().map(|c| c.abs()).collect()
    }

    pub fn min_abs(&self) -> f64 {
        self.signed.iter().fold(f64::INFINITY, |m, c| m.min(c.abs()))
    }

    /// Whether every neuron's projection has the sign of its output weight.
    pub fn signs_match(&self, m1: usize) -> bool {
        self.signed.iter().enumerate().all(|(j, &c)| if j < m1 { c > 0.0 } else { c < 0.0 })
    }
}

pub fn mu_alignment(w: &Matrix, ds: &Dataset) -> Result<MuAlignment> {
    let mu = ds.mu_hat();
    let nmu = norm(&mu);
    if nmu == 0.0 {
        return Err(Error::DegenerateInput("mu_hat = sum y_i x_i is zero".into()));
    }
    let signed = w
        .row_iter()
        .map(|r| {
            let nr = norm(r);
            if nr == 0.0 {
                0.0
            } else {
                dot(r, &mu) / (nr * nmu)
            }
        })
        .collect();
    Ok(MuAlignment { signed })
}

/// `min_k ⟨μ̂/‖μ̂‖, y_k x_k⟩` and the lower bound `√2 R_min/(3 R √n)`.
pub fn mu_hat_margin(ds: &Dataset) -> Result<(f64, f64)> {
    let mu = ds.mu_hat();
    let nmu = norm(&mu);
    if nmu == 0.0 {
        return Err(Error::DegenerateInput("mu_hat = sum y_i x_i is zero".into()));
    }
    let m = (0..ds.n()).map(|k| ds.y(k) * dot(&mu, ds.x(k)) / nmu).fold(f64::INFINITY, f64::min);
    let r = ds.r_max() / ds.r_min();
    Ok((m, 2f64.sqrt() * ds.r_min() / (3.0 * r * (ds.n() as f64).sqrt())))
}

/// Which diagnostics to evaluate at recorded steps.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MonitorSet {
    pub stable_rank: bool,
    pub loss_ratio: bool,
    pub proxy_pl: bool,
    pub mu_align: bool,
    pub rank2_residual: bool,
}

impl MonitorSet {
    pub const NAMES: [&'static str; 5] = ["stable_rank", "loss_ratio", "proxy_pl", "mu_align", "rank2_residual"];

    pub fn none() -> Self {
        Self { stable_rank: false, loss_ratio: false, proxy_pl: false, mu_align: false, rank2_residual: false }
    }

    pub fn all() -> Self {
        Self { stable_rank: true, loss_ratio: true, proxy_pl: true, mu_align: true, rank2_residual: true }
    }

    /// Everything except the rank-2 residual (which needs a second,
    /// often slowly converging, power iteration).
    pub fn standard() -> Self {
        Self { rank2_residual: false, ..Self::all() }
    }

    pub fn parse(list: &str) -> Result<Self> {
        let mut s = Self::none();
        for name in list.split(',').map(str::trim).filter(|n| !n.is_empty()) {
            match name {
                "stable_rank" | "spec_norm" | "fro_norm" => s.stable_rank = true,
                "loss_ratio" => s.loss_ratio = true,
                "proxy_pl" => s.proxy_pl = true,
                "mu_align" => s.mu_align = true,
                "rank2_residual" => s.rank2_residual = true,
                "all" => s = Self::all(),
                other => {
                    return Err(Error::invalid(format!(
                        "unknown monitor `{other}` (known: {})",
                        Self::NAMES.join(", ")
                    )))
                }
            }
        }
        Ok(s)
    }
}

impl Default for MonitorSet {
    fn default() -> Self {
        Self::standard()
    }
}

/// Monitor values at one recorded step; `None` when not requested or
/// undefined (e.g. spectral quantities of `W = 0`).
#[derive(Clone, Debug, Default, PartialEq)]
pub struct MonitorSnapshot {
    pub stable_rank: Option<f64>,
    pub spec_norm: Option<f64>,
    pub fro_norm: Option<f64>,
    pub loss_ratio: Option<f64>,
    pub proxy_pl_lhs: Option<f64>,
    pub proxy_pl_rhs_descent: Option<f64>,
    pub proxy_pl_rhs_flow: Option<f64>,
    pub mu_align_min: Option<f64>,
    pub mu_signs_match: Option<bool>,
    pub rank2_residual: Option<f64>,
    pub reduced_precision: bool,
}

/// Evaluates the requested monitors given an already computed gradient and
/// margin vector for `net`.
pub fn snapshot(
    net: &TwoLayerNet,
    ds: &Dataset,
    loss: LossKind,
    margins: &[f64],
    grad: &Matrix,
    risk: f64,
    monitors: &MonitorSet,
) -> MonitorSnapshot {
    let mut s = MonitorSnapshot::default();
    let w = net.weights();
    if monitors.stable_rank || monitors.rank2_residual {
        if let Ok(sp) = spectral_summary(w, monitors.rank2_residual) {
            if monitors.stable_rank {
                s.stable_rank = Some(sp.stable_rank());
                s.spec_norm = Some(sp.spec_norm());
            }
            s.rank2_residual = sp.rank2_residual();
            s.reduced_precision = !sp.full_precision;
        } else if monitors.stable_rank {
            s.spec_norm = Some(0.0);
        }
        if monitors.stable_rank {
            s.fro_norm = Some(w.frobenius());
        }
    }
    if monitors.loss_ratio {
        s.loss_ratio = Some(loss_ratio_from_margins(margins, loss));
    }
    if monitors.proxy_pl {
        let c = proxy_pl_constants(ds, net.activation().gamma());
        s.proxy_pl_lhs = Some(grad.frobenius());
        s.proxy_pl_rhs_descent = Some(c.descent * risk);
        s.proxy_pl_rhs_flow = Some(c.flow * risk);
    }
    if monitors.mu_align {
        if let Ok(a) = mu_alignment(w, ds) {
            s.mu_align_min = Some(a.min_abs());
            s.mu_signs_match = Some(a.signs_match(net.m1()));
        }
    }
    s
}

/// One checked inequality at one step.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundCheck {
    pub bound: &'static str,
    pub step: usize,
    pub lhs: f64,
    pub rhs: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct BoundReport {
    pub checks: Vec<BoundCheck>,
    /// Bounds that could not be evaluated, with the reason.
    pub skipped: Vec<(String, String)>,
    pub c_r: f64,
    pub c2: f64,
    /// `C₁ = 64 L̂(W⁰) R²/γ²`, the constant of the loss bound.
    pub c1: f64,
}

impl BoundReport {
    pub fn violations(&self) -> impl Iterator<Item = &BoundCheck> {
        self.checks.iter().filter(|c| !c.pass)
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn count(&self, bound: &str) -> usize {
        self.checks.iter().filter(|c| c.bound == bound).count()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("bound,step,lhs,rhs,pass\n");
        for c in &self.checks {
            let _ = writeln!(out, "{},{},{:e},{:e},{}", c.bound, c.step, c.lhs, c.rhs, c.pass);
        }
        out
    }

    /// Per-bound summary table followed by any violations.
    pub fn to_text(&self) -> String {
        let mut names: Vec<&str> = Vec::new();
        for c in &self.checks {
            if !names.contains(&c.bound) {
                names.push(c.bound);
            }
        }
        let mut out = String::new();
        let _ = writeln!(out, "C_R = {:.6}   C_1 = {:.6}   C_2 = {:.6}", self.c_r, self.c1, self.c2);
        let _ = writeln!(out, "{:<26} {:>7} {:>7} {:>14}", "bound", "checked", "failed", "min slack");
        for name in names {
            let rows: Vec<&BoundCheck> = self.checks.iter().filter(|c| c.bound == name).collect();
            let failed = rows.iter().filter(|c| !c.pass).count();
            let slack = rows.iter().map(|c| slack(c)).fold(f64::INFINITY, f64::min);
            let _ = writeln!(out, "{:<26} {:>7} {:>7} {:>14.6e}", name, rows.len(), failed, slack);
        }
        for (name, why) in &self.skipped {
            let _ = writeln!(out, "{name:<26} skipped: {why}");
        }
        for v in self.violations() {
            let _ = writeln!(out, "VIOLATION {} at step {}: lhs={:e} rhs={:e}", v.bound, v.step, v.lhs, v.rhs);
        }
        out
    }
}

/// Relative slack of a check, positive when it passes.
fn slack(c: &BoundCheck) -> f64 {
    let scale = c.lhs.abs().max(c.rhs.abs()).max(f64::MIN_POSITIVE);
    let upper = matches!(
        c.bound,
        "loss_ratio" | "stable_rank_c2" | "loss_decay" | "frobenius_upper" | "descent"
    );
    if upper {
        (c.rhs - c.lhs) / scale
    } else {
        (c.lhs - c.rhs) / scale
    }
}

/// Checks the gradient-descent inequalities against a recorded trace.
///
/// Bound names in the report:
/// `loss_ratio` (`≤ C_R`), `proxy_pl` (`‖∇L̂‖_F ≥ γR_min Ĝ/(2√2 R√n)`),
/// `stable_rank_c2` (`≤ C₂`, t ≥ 1), `loss_decay` (t ≥ 2),
/// `frobenius_upper` and `spectral_lower` (t ≥ 1), `margin_step1` (t = 1),
/// `neuron_norm_monotone` (t ≥ 1) and `descent`.
pub fn check_trace_bounds(trace: &TrainingTrace, cert: &OrthogonalityCertificate, alpha: f64) -> BoundReport {
    let gamma = cert.gamma;
    let n = cert.n as f64;
    let r = cert.ratio_r;
    let r_min = cert.r_min;
    let r_max = cert.r_max;
    let c_r = cert.c_r;
    let c2 = 256.0 * c_r * r.powi(4) / (gamma * gamma);
    let rows = &trace.rows;
    let l0 = rows.first().map_or(f64::NAN, |r| r.loss);
    let c1 = 64.0 * l0 * r * r / (gamma * gamma);
    let mut rep = BoundReport { c_r, c2, c1, ..Default::default() };
    if trace.kind != TraceKind::Descent {
        rep.skipped.push(("all".into(), "trace is not a gradient-descent run".into()));
        return rep;
    }
    let fro0 = rows.first().and_then(|r| r.monitors.fro_norm);
    let sqrt_n = n.sqrt();
    let mut push = |bound, step, lhs: f64, rhs: f64, pass: bool| {
        rep.checks.push(BoundCheck { bound, step, lhs, rhs, pass });
    };
    let mut prev_loss: Option<f64> = None;
    let mut prev_neuron: Option<f64> = None;
    for row in rows {
        let t = row.step;
        let m = &row.monitors;
        if let Some(lr) = m.loss_ratio {
            push("loss_ratio", t, lr, c_r, lr <= c_r);
        }
        if let (Some(lhs), Some(rhs)) = (m.proxy_pl_lhs, m.proxy_pl_rhs_descent) {
            push("proxy_pl", t, lhs, rhs, lhs >= rhs);
        }
        if let Some(prev) = prev_loss {
            push("descent", t, row.loss, prev, row.loss <= prev);
        }
        prev_loss = Some(row.loss);
        if t >= 1 {
            if let Some(sr) = m.stable_rank {
                push("stable_rank_c2", t, sr, c2, sr <= c2);
            }
            if let (Some(f), Some(f0)) = (m.fro_norm, fro0) {
                let rhs = f0 + (2.0 * c_r).sqrt() * r_max * alpha / sqrt_n * row.cum_risk;
                push("frobenius_upper", t, f, rhs, f <= rhs);
            }
            if let Some(s) = m.spec_norm {
                let rhs = alpha * gamma * r_min / (4.0 * 2f64.sqrt() * r * sqrt_n) * row.cum_risk;
                push("spectral_lower", t, s, rhs, s >= rhs);
            }
            if let Some(nn) = row.min_neuron_norm {
                if let Some(prev) = prev_neuron {
                    push("neuron_norm_monotone", t, nn, prev, nn >= prev);
                }
                prev_neuron = Some(nn);
            }
        }
        if t == 1 {
            let rhs = gamma * gamma * alpha * r_min * r_min / (32.0 * n);
            push("margin_step1", t, row.min_margin, rhs, row.min_margin >= rhs);
        }
        if t >= 2 && alpha > 0.0 {
            let rhs = (c1 * n / (r_min * r_min * alpha * t as f64)).sqrt();
            push("loss_decay", t, row.loss, rhs, row.loss <= rhs);
        }
    }
    if alpha == 0.0 {
        rep.skipped.push(("loss_decay".into(), "alpha = 0 makes the bound vacuous".into()));
    }
    rep
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::gen_gaussian;
    use crate::rng::CounterRng;

    #[test]
    fn stable_rank_examples() {
        let mut w = Matrix::identity(5);
        w[(0, 0)] = 0.0;
        assert_eq!(stable_rank(&w).unwrap(), 4.0);
        let u = [1.0, -2.0, 0.5];
        let v = [0.3, 0.1, 4.0, -1.0];
        let mut r1 = Matrix::zeros(3, 4);
        for i in 0..3 {
            for j in 0..4 {
                r1[(i, j)] = u[i] * v[j];
            }
        }
        assert!((stable_rank(&r1).unwrap() - 1.0).abs() < 1e-12);
        assert!(matches!(stable_rank(&Matrix::zeros(2, 2)), Err(Error::UndefinedInput(_))));
    }

    #[test]
    fn rank2_residual_examples() {
        assert!((rank2_residual(&Matrix::identity(4)).unwrap() - 0.5).abs() < 1e-12);
        let w = Matrix::from_rows(&[vec![1.0, 0.0, 2.0], vec![0.0, 1.0, 1.0], vec![1.0, 1.0, 3.0]]).unwrap();
        assert!(rank2_residual(&w).unwrap() <= 1e-10);
    }

    #[test]
    fn loss_ratio_examples() {
        let ds = gen_gaussian(5, 4, &[1.0; 4], 3).unwrap();
        let net = TwoLayerNet::zeros(1, 1, 4, crate::model::Activation::smooth(0.5).unwrap()).unwrap();
        assert_eq!(loss_ratio(&net, &ds).unwrap(), 1.0);
        let r = loss_ratio_from_margins(&[1.0, -1.0], LossKind::Logistic);
        let e = std::f64::consts::E;
        assert!((r - (1.0 + e) / (1.0 + 1.0 / e)).abs() < 1e-12);
        let far = loss_ratio_from_margins(&[700.0, 690.0], LossKind::Logistic);
        assert!((far.ln() - 10.0).abs() < 1e-9);
    }

    #[test]
    fn mu_alignment_of_mu_rows() {
        let ds = gen_gaussian(4, 6, &[1.0; 6], 9).unwrap();
        let mu = ds.mu_hat();
        let w = Matrix::from_rows(&[mu.clone(), mu.clone(), mu]).unwrap();
        let a = mu_alignment(&w, &ds).unwrap();
        assert!(a.abs().iter().all(|c| (c - 1.0).abs() < 1e-12));
    }

    #[test]
    fn single_unit_sample_proxy_pl_by_hand() {
        use crate::model::Activation;
        let xs = Matrix::from_rows(&[vec![1.0, 0.0]]).unwrap();
        let ds = Dataset::new(xs, vec![1.0], 0, "").unwrap();
        let w = Matrix::from_rows(&[vec![0.7, 0.2], vec![-0.3, 0.5]]).unwrap();
        let net = TwoLayerNet::new(1, 1, Activation::leaky(1.0).unwrap(), w).unwrap();
        // γ = 1: f = (0.7 − (−0.3))/√2, φ' ≡ 1, so ‖∇L̂‖_F = g(f)·‖x‖·√(Σ a_j²) = g(f).
        let f = 1.0 / 2f64.sqrt();
        let g = 1.0 / (1.0 + f.exp());
        let pl = proxy_pl(&net, &ds, LossKind::Logistic).unwrap();
        assert!((pl.lhs - g).abs() < 1e-15);
        assert!((pl.rhs_descent - g / (2.0 * 2f64.sqrt())).abs() < 1e-15);
        assert!(pl.holds());
    }

    #[test]
    fn stable_rank_is_scale_invariant_and_bounded() {
        let mut rng = CounterRng::new(4, 77);
        for k in 1..6 {
            let mut a = Matrix::zeros(7, k);
            let mut b = Matrix::zeros(k, 9);
            rng.fill_normal(a.as_mut_slice(), 1.0);
            rng.fill_normal(b.as_mut_slice(), 1.0);
            let mut w = Matrix::zeros(7, 9);
            for i in 0..7 {
                for j in 0..9 {
                    w[(i, j)] = (0..k).map(|l| a[(i, l)] * b[(l, j)]).sum();
                }
            }
            let s = stable_rank(&w).unwrap();
            assert!(s >= 1.0 - 1e-9 && s <= k as f64 + 1e-9);
            assert!((stable_rank(&w.scaled(-3.5)).unwrap() - s).abs() < 1e-9 * s);
        }
    }
}
