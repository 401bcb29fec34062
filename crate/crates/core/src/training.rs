//! Initialization, step-size/initialization budgets, full-batch gradient
//! descent and forward-Euler emulation of gradient flow.

use std::fmt::Write as _;
use std::path::Path;

use crate::analysis::{snapshot, MonitorSet, MonitorSnapshot};
use crate::dataset::{Dataset, OrthogonalityCertificate};
use crate::error::{Error, Result};
use crate::linalg::{dot, norm, Matrix};
use crate::model::{Activation, Evaluation, LossKind, TwoLayerNet};
use crate::rng::{streams, CounterRng};

/// `[W₀]_{ij} ~ N(0, ω²)` i.i.d., drawn from the `INIT` stream of `seed`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InitScheme {
    pub omega_init: f64,
    pub seed: u64,
}

impl InitScheme {
    pub fn new(omega_init: f64, seed: u64) -> Result<Self> {
        if !(omega_init >= 0.0 && omega_init.is_finite()) {
            return Err(Error::invalid(format!("omega_init must be finite and >= 0, got {omega_init}")));
        }
        Ok(Self { omega_init, seed })
    }

    pub fn zero() -> Self {
        Self { omega_init: 0.0, seed: 0 }
    }
}

pub fn init_weights(m1: usize, m2: usize, d: usize, activation: Activation, scheme: &InitScheme) -> Result<TwoLayerNet> {
    let mut w = Matrix::zeros(m1 + m2, d);
    if scheme.omega_init > 0.0 {
        CounterRng::new(scheme.seed, streams::INIT).fill_normal(w.as_mut_slice(), scheme.omega_init);
    }
    TwoLayerNet::new(m1, m2, activation, w)
}

/// Concentration statistics of an initialization.
#[derive(Clone, Debug, PartialEq)]
pub struct InitStats {
    pub neuron_norms: Vec<f64>,
    /// `5 ω² d log(4m/δ)`
    pub neuron_norm_sq_bound: f64,
    /// `|⟨w_j⁰, μ̄⟩|` with `μ̄ = μ̂/‖μ̂‖`, when a dataset was supplied.
    pub mu_projections: Option<Vec<f64>>,
    /// `2 ω √log(4m/δ)`
    pub mu_projection_bound: f64,
    pub spec_norm: f64,
    /// `ω (√m + √d)`, the scale of the spectral-norm bound.
    pub spec_norm_scale: f64,
}

impl InitStats {
    pub fn norms_within_bound(&self) -> bool {
        self.neuron_norms.iter().all(|r| r * r <= self.neuron_norm_sq_bound)
    }

    pub fn projections_within_bound(&self) -> Option<bool> {
        self.mu_projections.as_ref().map(|p| p.iter().all(|&v| v <= self.mu_projection_bound))
    }
}

pub fn init_statistics(net: &TwoLayerNet, omega: f64, delta: f64, ds: Option<&Dataset>) -> Result<InitStats> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::invalid(format!("delta must lie in (0, 1), got {delta}")));
    }
    let (m, d) = (net.m() as f64, net.d() as f64);
    let log_term = (4.0 * m / delta).ln();
    let w = net.weights();
    let mu_projections = match ds {
        Some(ds) => {
            let mu = ds.mu_hat();
            let nmu = norm(&mu);
            if nmu == 0.0 {
                return Err(Error::DegenerateInput("mu_hat is zero".into()));
            }
            Some(w.row_iter().map(|r| (dot(r, &mu) / nmu).abs()).collect())
        }
        None => None,
    };
    Ok(InitStats {
        neuron_norms: w.row_iter().map(norm).collect(),
        neuron_norm_sq_bound: 5.0 * omega * omega * d * log_term,
        mu_projections,
        mu_projection_bound: 2.0 * omega * log_term.sqrt(),
        spec_norm: w.spectral_norm(),
        spec_norm_scale: omega * (m.sqrt() + d.sqrt()),
    })
}

/// Step-size and initialization limits for gradient descent.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HyperBudget {
    /// `γ² / (5 n R_max² R² C_R max(1, H))`
    pub alpha_max: f64,
    pub delta: f64,
    /// `γ² R_min / (72 R C_R n √(m d log(4m/δ)))`, so that `ω_max(α) = α · omega_per_alpha`.
    pub omega_per_alpha: f64,
}

impl HyperBudget {
    pub fn omega_max(&self, alpha: f64) -> f64 {
        alpha * self.omega_per_alpha
    }
}

pub fn derive_budget(cert: &OrthogonalityCertificate, m: usize, d: usize, delta: f64, h: f64) -> Result<HyperBudget> {
    if !(cert.gamma > 0.0 && cert.gamma <= 1.0) {
        return Err(Error::invalid(format!("gamma must lie in (0, 1], got {}", cert.gamma)));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::invalid(format!("delta must lie in (0, 1), got {delta}")));
    }
    if m == 0 || d == 0 || !(h >= 0.0) {
        return Err(Error::invalid("need m, d >= 1 and H >= 0"));
    }
    let (g2, n, r) = (cert.gamma * cert.gamma, cert.n as f64, cert.ratio_r);
    let alpha_max = g2 / (5.0 * n * cert.r_max * cert.r_max * r * r * cert.c_r * h.max(1.0));
    let md_log = (m as f64) * (d as f64) * (4.0 * m as f64 / delta).ln();
    let omega_per_alpha = g2 * cert.r_min / (72.0 * r * cert.c_r * n * md_log.sqrt());
    Ok(HyperBudget { alpha_max, delta, omega_per_alpha })
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub m1: usize,
    pub m2: usize,
    pub d: usize,
    pub activation: Activation,
    pub loss: LossKind,
    /// Step size; zero is accepted and leaves the weights fixed.
    pub alpha: f64,
    pub steps: usize,
    pub init: InitScheme,
    /// Steps 0, 1, every multiple of this and the final step are recorded.
    pub record_every: usize,
    pub monitors: MonitorSet,
}

impl TrainConfig {
    pub fn validate(&self, ds: &Dataset) -> Result<()> {
        if ds.d() != self.d {
            return Err(Error::invalid(format!("config has d={}, dataset has d={}", self.d, ds.d())));
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(Error::invalid(format!("alpha must be finite and >= 0, got {}", self.alpha)));
        }
        if self.steps == 0 || self.record_every == 0 {
            return Err(Error::invalid("steps and record_every must be positive"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TraceKind {
    Descent,
    Flow,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TraceRow {
    pub step: usize,
    /// `step · η` for flow runs.
    pub flow_time: Option<f64>,
    pub loss: f64,
    /// Mean of `g = −ℓ'`; the sigmoid risk for the logistic loss.
    pub sigmoid_risk: f64,
    pub min_margin: f64,
    /// `Σ_{s<t} Ĝ(W^s)` over every step, recorded or not.
    pub cum_risk: f64,
    pub min_neuron_norm: Option<f64>,
    pub monitors: MonitorSnapshot,
}

#[derive(Clone, Debug)]
pub struct TrainingTrace {
    pub kind: TraceKind,
    pub loss: LossKind,
    /// `α` for descent, `η` for flow.
    pub step_size: f64,
    pub rows: Vec<TraceRow>,
    pub final_net: TwoLayerNet,
    /// First step at which the loss fell below the flow threshold.
    pub threshold_hit: Option<(usize, f64)>,
}

pub const TRACE_HEADER: &str =
    "step,flow_time,loss,sigmoid_risk,min_margin,stable_rank,spec_norm,fro_norm,loss_ratio,proxy_pl_lhs,proxy_pl_rhs,mu_align_min,rank2_residual";

fn cell(out: &mut String, v: Option<f64>) {
    out.push(',');
    if let Some(v) = v {
        let _ = write!(out, "{v:e}");
    }
}

impl TrainingTrace {
    pub fn first(&self) -> &TraceRow {
        &self.rows[0]
    }

    pub fn last(&self) -> &TraceRow {
        self.rows.last().expect("trace has at least one row")
    }

    pub fn row_at(&self, step: usize) -> Option<&TraceRow> {
        self.rows.iter().find(|r| r.step == step)
    }

    /// Proxy-PL right-hand side matching the run type.
    pub fn proxy_rhs(&self, row: &TraceRow) -> Option<f64> {
        match self.kind {
            TraceKind::Descent => row.monitors.proxy_pl_rhs_descent,
            TraceKind::Flow => row.monitors.proxy_pl_rhs_flow,
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(TRACE_HEADER);
        out.push('\n');
        for r in &self.rows {
            let _ = write!(out, "{}", r.step);
            cell(&mut out, r.flow_time);
            cell(&mut out, Some(r.loss));
            cell(&mut out, Some(r.sigmoid_risk));
            cell(&mut out, Some(r.min_margin));
            let m = &r.monitors;
            cell(&mut out, m.stable_rank);
            cell(&mut out, m.spec_norm);
            cell(&mut out, m.fro_norm);
            cell(&mut out, m.loss_ratio);
            cell(&mut out, m.proxy_pl_lhs);
            cell(&mut out, self.proxy_rhs(r));
            cell(&mut out, m.mu_align_min);
            cell(&mut out, m.rank2_residual);
            out.push('\n');
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

/// What an observer sees at each recorded step.
pub struct Observation<'a> {
    pub step: usize,
    pub flow_time: Option<f64>,
    pub net: &'a TwoLayerNet,
    pub eval: &'a Evaluation,
}

fn check_finite(step: usize, e: &Evaluation) -> Result<()> {
    if !e.loss.is_finite() {
        return Err(Error::Diverged { step, what: "loss" });
    }
    if !e.grad.all_finite() {
        return Err(Error::Diverged { step, what: "gradient" });
    }
    Ok(())
}

fn min_neuron_norm(w: &Matrix) -> f64 {
    w.row_iter().map(norm).fold(f64::INFINITY, f64::min)
}

fn record_row(
    net: &TwoLayerNet,
    ds: &Dataset,
    loss: LossKind,
    e: &Evaluation,
    step: usize,
    flow_time: Option<f64>,
    cum_risk: f64,
    monitors: &MonitorSet,
) -> TraceRow {
    TraceRow {
        step,
        flow_time,
        loss: e.loss,
        sigmoid_risk: e.risk,
        min_margin: e.margins.iter().copied().fold(f64::INFINITY, f64::min),
        cum_risk,
        min_neuron_norm: Some(min_neuron_norm(net.weights())),
        monitors: snapshot(net, ds, loss, &e.margins, &e.grad, e.risk, monitors),
    }
}

struct RunSpec<'a> {
    kind: TraceKind,
    loss: LossKind,
    step_size: f64,
    steps: usize,
    record_every: usize,
    monitors: &'a MonitorSet,
    threshold: Option<f64>,
    stop_at_threshold: bool,
}

fn run(
    mut net: TwoLayerNet,
    ds: &Dataset,
    spec: RunSpec<'_>,
    observer: &mut dyn FnMut(&Observation<'_>),
) -> Result<TrainingTrace> {
    if net.d() != ds.d() {
        return Err(Error::invalid(format!("network has d={}, dataset has d={}", net.d(), ds.d())));
    }
    let mut rows = Vec::new();
    let mut cum_risk = 0.0;
    let mut threshold_hit = None;
    let time = |t: usize| match spec.kind {
        TraceKind::Flow => Some(t as f64 * spec.step_size),
        TraceKind::Descent => None,
    };
    for t in 0..=spec.steps {
        let e = net.evaluate(ds, spec.loss)?;
        check_finite(t, &e)?;
        let mut stop = false;
        if let (Some(th), None) = (spec.threshold, threshold_hit) {
            if e.loss < th {
                threshold_hit = Some((t, t as f64 * spec.step_size));
                stop = spec.stop_at_threshold;
            }
        }
        let last = t == spec.steps || stop;
        if t <= 1 || t % spec.record_every == 0 || last {
            rows.push(record_row(&net, ds, spec.loss, &e, t, time(t), cum_risk, spec.monitors));
            observer(&Observation { step: t, flow_time: time(t), net: &net, eval: &e });
        }
        if last {
            break;
        }
        cum_risk += e.risk;
        if spec.step_size != 0.0 {
            net.weights_mut().add_scaled(-spec.step_size, &e.grad);
            if !net.weights().all_finite() {
                return Err(Error::Diverged { step: t + 1, what: "weights" });
            }
        }
    }
    Ok(TrainingTrace {
        kind: spec.kind,
        loss: spec.loss,
        step_size: spec.step_size,
        rows,
        final_net: net,
        threshold_hit,
    })
}

/// `steps` full-batch gradient-descent updates from `init_weights(cfg)`.
pub fn train(cfg: &TrainConfig, ds: &Dataset) -> Result<TrainingTrace> {
    cfg.validate(ds)?;
    let net = init_weights(cfg.m1, cfg.m2, cfg.d, cfg.activation, &cfg.init)?;
    train_from(net, cfg, ds, &mut |_| {})
}

/// Gradient descent from a given network; `observer` runs at recorded steps.
pub fn train_from(
    net: TwoLayerNet,
    cfg: &TrainConfig,
    ds: &Dataset,
    observer: &mut dyn FnMut(&Observation<'_>),
) -> Result<TrainingTrace> {
    cfg.validate(ds)?;
    let spec = RunSpec {
        kind: TraceKind::Descent,
        loss: cfg.loss,
        step_size: cfg.alpha,
        steps: cfg.steps,
        record_every: cfg.record_every,
        monitors: &cfg.monitors,
        threshold: None,
        stop_at_threshold: false,
    };
    run(net, ds, spec, observer)
}

#[derive(Clone, Debug, PartialEq)]
pub struct FlowConfig {
    pub loss: LossKind,
    /// Euler step.
    pub eta: f64,
    /// Integrate until `step · η ≥ horizon`.
    pub horizon: f64,
    /// Loss level whose first crossing is recorded.
    pub stop_loss: Option<f64>,
    /// Stop at the first crossing of `stop_loss` (otherwise run to the horizon).
    pub stop_at_threshold: bool,
    pub record_every: usize,
    pub monitors: MonitorSet,
}

impl FlowConfig {
    pub fn steps(&self) -> usize {
        (self.horizon / self.eta).ceil() as usize
    }
}

pub fn flow_with(
    net0: TwoLayerNet,
    ds: &Dataset,
    cfg: &FlowConfig,
    observer: &mut dyn FnMut(&Observation<'_>),
) -> Result<TrainingTrace> {
    if !(cfg.eta > 0.0 && cfg.eta.is_finite()) {
        return Err(Error::invalid(format!("eta must be positive, got {}", cfg.eta)));
    }
    if !(cfg.horizon >= 0.0 && cfg.horizon.is_finite()) || cfg.record_every == 0 {
        return Err(Error::invalid("horizon must be finite and >= 0, record_every positive"));
    }
    let spec = RunSpec {
        kind: TraceKind::Flow,
        loss: cfg.loss,
        step_size: cfg.eta,
        steps: cfg.steps(),
        record_every: cfg.record_every,
        monitors: &cfg.monitors,
        threshold: cfg.stop_loss,
        stop_at_threshold: cfg.stop_at_threshold,
    };
    run(net0, ds, spec, observer)
}

/// Forward-Euler gradient flow until `horizon` or `L̂ < stop_loss`.
pub fn flow_emulate(
    net0: TwoLayerNet,
    ds: &Dataset,
    loss: LossKind,
    eta: f64,
    horizon: f64,
    stop_loss: f64,
) -> Result<TrainingTrace> {
    let cfg = FlowConfig {
        loss,
        eta,
        horizon,
        stop_loss: Some(stop_loss),
        stop_at_threshold: true,
        record_every: 1,
        monitors: MonitorSet::none(),
    };
    flow_with(net0, ds, &cfg, &mut |_| {})
}

/// `85 L̂(W(0)) R² n³ / (γ² R_min²)`.
pub fn flow_time_bound(loss0: f64, cert: &OrthogonalityCertificate) -> f64 {
    let n = cert.n as f64;
    85.0 * loss0 * cert.ratio_r.powi(2) * n.powi(3) / (cert.gamma.powi(2) * cert.r_min.powi(2))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{certify, gen_gaussian, gen_near_orthogonal, NearOrthogonal};

    fn cfg(d: usize, alpha: f64, steps: usize, omega: f64) -> TrainConfig {
        TrainConfig {
            m1: 3,
            m2: 3,
            d,
            activation: Activation::smooth(0.5).unwrap(),
            loss: LossKind::Logistic,
            alpha,
            steps,
            init: InitScheme::new(omega, 11).unwrap(),
            record_every: 1,
            monitors: MonitorSet::standard(),
        }
    }

    #[test]
    fn zero_init_is_exactly_zero() {
        let net = init_weights(4, 4, 16, Activation::leaky(0.5).unwrap(), &InitScheme::zero()).unwrap();
        assert!(net.weights().as_slice().iter().all(|v| v.to_bits() == 0));
    }

    #[test]
    fn budget_hand_value_and_scaling() {
        let cert = OrthogonalityCertificate::from_parts(1, 1.0, 1.0, 1.0, 0.0);
        assert_eq!(cert.c_r, 20.0);
        let b = derive_budget(&cert, 4, 4, 0.05, 1.0).unwrap();
        assert!((b.alpha_max - 0.01).abs() < 1e-15);
        let c2 = OrthogonalityCertificate::from_parts(2, 1.0, 1.0, 1.0, 0.0);
        let b2 = derive_budget(&c2, 4, 4, 0.05, 1.0).unwrap();
        assert!((b2.alpha_max - b.alpha_max / 2.0).abs() < 1e-17);
        assert!((b.omega_max(0.2) - 2.0 * b.omega_max(0.1)).abs() < 1e-18);
        assert!(derive_budget(&cert, 4, 4, 1.5, 1.0).is_err());
    }

    #[test]
    fn alpha_zero_keeps_weights() {
        let ds = gen_gaussian(5, 8, &[1.0; 8], 2).unwrap();
        let tr = train(&cfg(8, 0.0, 5, 0.1), &ds).unwrap();
        assert_eq!(tr.rows.len(), 6);
        let w0 = init_weights(3, 3, 8, Activation::smooth(0.5).unwrap(), &InitScheme::new(0.1, 11).unwrap()).unwrap();
        assert_eq!(tr.final_net, w0);
        for r in &tr.rows {
            assert_eq!(r.loss, tr.rows[0].loss);
            assert_eq!(r.monitors, tr.rows[0].monitors);
        }
    }

    #[test]
    fn training_is_deterministic() {
        let ds = gen_gaussian(6, 32, &[1.0; 32], 4).unwrap();
        let c = cfg(32, 0.01, 20, 0.01);
        let a = train(&c, &ds).unwrap();
        let b = train(&c, &ds).unwrap();
        assert_eq!(a.to_csv(), b.to_csv());
        assert_eq!(a.final_net, b.final_net);
    }

    #[test]
    fn trace_csv_has_fixed_header_and_empty_cells() {
        let ds = gen_gaussian(3, 4, &[1.0; 4], 4).unwrap();
        let mut c = cfg(4, 0.01, 3, 0.0);
        c.monitors = MonitorSet::none();
        let csv = train(&c, &ds).unwrap().to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some(TRACE_HEADER));
        let first = lines.next().unwrap();
        assert_eq!(first.split(',').count(), 13);
        assert!(first.starts_with("0,,"));
    }

    #[test]
    fn divergence_is_reported_with_step() {
        let ds = gen_gaussian(4, 4, &[1.0; 4], 1).unwrap();
        let mut c = cfg(4, 1e300, 10, 0.1);
        c.loss = LossKind::Exponential;
        c.monitors = MonitorSet::none();
        match train(&c, &ds) {
            Err(Error::Diverged { step, .. }) => assert!(step >= 1),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn descent_under_budget() {
        let (n, d, gamma) = (8, 256, 0.5);
        let c = NearOrthogonal::overlap_for_descent(n, 1.3, gamma, 0.5);
        let ds = gen_near_orthogonal(n, d, 1.3, c, 3).unwrap();
        let cert = certify(&ds, gamma).unwrap();
        assert!(cert.thm42_holds);
        let b = derive_budget(&cert, 6, d, 0.05, 0.25).unwrap();
        let tr = train(&cfg(d, b.alpha_max, 200, b.omega_max(b.alpha_max)), &ds).unwrap();
        for w in tr.rows.windows(2) {
            assert!(w[1].loss <= w[0].loss);
        }
    }

    #[test]
    fn one_dimensional_flow_decreases() {
        let xs = Matrix::from_rows(&[vec![1.0]]).unwrap();
        let ds = Dataset::new(xs, vec![1.0], 0, "").unwrap();
        let w = Matrix::from_rows(&[vec![0.1], vec![0.0]]).unwrap();
        let net = TwoLayerNet::new(1, 1, Activation::leaky(0.5).unwrap(), w).unwrap();
        let tr = flow_emulate(net, &ds, LossKind::Logistic, 0.1, 50.0, 0.0).unwrap();
        for w in tr.rows.windows(2) {
            assert!(w[1].loss < w[0].loss);
        }
        assert_eq!(tr.last().flow_time, Some(50.0));
    }

    #[test]
    fn flow_halving_eta_is_first_order() {
        let ds = gen_gaussian(4, 64, &[1.0; 64], 8).unwrap();
        let net = init_weights(2, 2, 64, Activation::smooth(0.5).unwrap(), &InitScheme::new(0.05, 1).unwrap()).unwrap();
        let loss_at = |eta: f64| {
            let cfg = FlowConfig {
                loss: LossKind::Logistic,
                eta,
                horizon: 0.2,
                stop_loss: None,
                stop_at_threshold: false,
                record_every: 1,
                monitors: MonitorSet::none(),
            };
            flow_with(net.clone(), &ds, &cfg, &mut |_| {}).unwrap().last().loss
        };
        let (a, b, c) = (loss_at(4e-3), loss_at(2e-3), loss_at(1e-3));
        // Errors of a first-order scheme halve with the step.
        let ratio = (a - b) / (b - c);
        assert!((ratio - 2.0).abs() < 0.2, "ratio {ratio}");
        assert!((b - c).abs() <= 1e-3);
    }
}
