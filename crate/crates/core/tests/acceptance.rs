//! Acceptance run: one PASS/FAIL line per criterion, with the measured
//! values and wall time. Exits non-zero when any criterion fails.

mod common;

use std::time::{Duration, Instant};

use leakybias::analysis::{check_trace_bounds, stable_rank, MonitorSet};
use leakybias::dataset::{certify, Dataset, GaussianDesign, NearOrthogonal};
use leakybias::experiment::{run_preset, ExperimentConfig, Params, Preset};
use leakybias::linalg::{cosine, dot, Matrix};
use leakybias::margin::{
    build_kkt_network, counterexample, solve_qp, solve_svm, verify_theorem, KktInput, VerifyOptions,
};
use leakybias::model::{Activation, LossKind};
use leakybias::rng::CounterRng;
use leakybias::training::{
    derive_budget, flow_emulate, flow_time_bound, flow_with, init_weights, train, FlowConfig, InitScheme,
    TrainConfig,
};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn run(k: usize, name: &str, budget: Duration, f: impl FnOnce() -> Outcome) -> bool {
    run_after(k, name, budget, Duration::ZERO, f)
}

/// As [`run`], charging `shared` (time spent on inputs reused across
/// criteria) against the budget.
fn run_after(k: usize, name: &str, budget: Duration, shared: Duration, f: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let o = f();
    let took = start.elapsed() + shared;
    let in_time = took <= budget;
    let pass = o.pass && in_time;
    println!(
        "criterion {k} {} {name}: {} [{:.1}s of {:.0}s{}]",
        if pass { "PASS" } else { "FAIL" },
        o.detail,
        took.as_secs_f64(),
        budget.as_secs_f64(),
        if in_time { "" } else { ", over budget" }
    );
    pass
}

fn c1_closed_form() -> Outcome {
    let mut worst: f64 = 0.0;
    for &eps in &[1e-3, 1e-2, 1.0 / 72.0] {
        let cx = match counterexample(eps) {
            Ok(c) => c,
            Err(e) => return outcome(false, format!("eps={eps}: {e}")),
        };
        let sol = match solve_qp(&cx.dataset, 1, 1, cx.gamma) {
            Ok(s) => s,
            Err(e) => return outcome(false, format!("eps={eps}: {e}")),
        };
        let l12 = 8.0 / (4.0 * eps + 5.0);
        let expect = [l12, l12, 8.0 / 5.0];
        for k in 0..3 {
            worst = worst.max((sol.duals[k] - expect[k]).abs());
        }
        let z = sol.z();
        worst = worst.max((dot(&z, cx.dataset.x(1)) - 6.0 * (eps + 1.0) / (4.0 * eps + 5.0)).abs());
        worst = worst.max((dot(&z, cx.dataset.x(2)) - 6.0 / 5.0).abs());
    }
    outcome(worst <= 1e-8, format!("max abs error {worst:.2e} (tol 1e-8)"))
}

fn c2_full_verification() -> Outcome {
    let (n, d, gamma, ratio) = (10, 1024, 0.5, 1.2);
    let overlap = NearOrthogonal::overlap_for_flow(n, ratio, gamma, 0.5);
    let gen = NearOrthogonal::new(d, ratio, overlap).unwrap();
    let gaussian_certified = (0..20)
        .filter(|&s| {
            let ds = GaussianDesign::isotropic(d).sample(n, s).unwrap();
            certify(&ds, gamma).unwrap().thm32_holds
        })
        .count();
    let mut passed = 0;
    let mut total = 0;
    let mut failures = Vec::new();
    let (mut lam_lo_slack, mut lam_hi_slack) = (f64::INFINITY, f64::INFINITY);
    for seed in 0..20u64 {
        let ds = gen.sample(n, seed).unwrap();
        if !certify(&ds, gamma).unwrap().thm32_holds {
            failures.push(format!("seed {seed} uncertified"));
            continue;
        }
        for (m1, m2) in [(4, 4), (6, 2)] {
            total += 1;
            let sol = match solve_qp(&ds, m1, m2, gamma) {
                Ok(s) => s,
                Err(e) => {
                    failures.push(format!("seed {seed} ({m1},{m2}): {e}"));
                    continue;
                }
            };
            let opts = VerifyOptions { probe_count: 10_000, seed, ..VerifyOptions::default() };
            let rep = verify_theorem(KktInput::Solution(&sol), &ds, gamma, &opts).unwrap();
            lam_lo_slack = lam_lo_slack.min(rep.lambda_min / rep.lambda_lower);
            lam_hi_slack = lam_hi_slack.min(rep.lambda_upper / rep.lambda_max);
            let strict = rep.lambda_min > rep.lambda_lower && rep.lambda_max < rep.lambda_upper;
            let all_probes = rep.probe_agreement == 1.0 && rep.probes_checked >= 10_000;
            if rep.passed() && strict && all_probes && rep.margin_deviation <= 1e-8 && rep.rank2_residual <= 1e-10 {
                passed += 1;
            } else {
                failures.push(format!("seed {seed} ({m1},{m2}): {:?}", rep.failing()));
            }
        }
    }
    outcome(
        passed == 40 && total == 40,
        format!(
            "{passed}/{total} QP networks pass all seven items over 20 near-orthogonal datasets; \
             lambda bound ratios >= {lam_lo_slack:.3}/{lam_hi_slack:.3}; isotropic Gaussian certified {gaussian_certified}/20{}",
            if failures.is_empty() { String::new() } else { format!("; {}", failures.join("; ")) }
        ),
    )
}

struct FlowRun {
    label: String,
    hit: Option<f64>,
    bound: f64,
    cos_final: f64,
    cos_tail: Vec<f64>,
    error: Option<String>,
}

fn flow_datasets() -> Vec<Dataset> {
    let (n, ratio, gamma) = (8, 1.2, 0.5);
    let gen = NearOrthogonal::new(512, ratio, NearOrthogonal::overlap_for_flow(n, ratio, gamma, 0.5)).unwrap();
    (0..5).map(|s| gen.sample(n, s).unwrap()).collect()
}

/// Threshold time for one configuration, then continuation to 10³ times it
/// while recording the cosine to the KKT direction.
fn flow_run(ds: &Dataset, seed: u64, loss: LossKind, eta: f64) -> FlowRun {
    let gamma = 0.5;
    let (m1, m2) = (4, 4);
    let label = format!("seed {seed} {} eta={eta}", loss.name());
    let fail = |e: String| FlowRun {
        label: label.clone(),
        hit: None,
        bound: f64::NAN,
        cos_final: f64::NAN,
        cos_tail: vec![],
        error: Some(e),
    };
    let cert = certify(ds, gamma).unwrap();
    if !cert.thm32_holds {
        return fail("uncertified".into());
    }
    let act = Activation::leaky(gamma).unwrap();
    let omega = Params::base(Preset::FlowToKkt).omega();
    let net0 = init_weights(m1, m2, ds.d(), act, &InitScheme::new(omega, seed).unwrap()).unwrap();
    let loss0 = net0.empirical_loss(ds, loss).unwrap();
    let bound = flow_time_bound(loss0, &cert);
    let threshold = 2f64.ln() / ds.n() as f64;
    let probe = match flow_emulate(net0.clone(), ds, loss, eta, bound, threshold) {
        Ok(t) => t,
        Err(e) => return fail(e.to_string()),
    };
    let Some((_, t_hit)) = probe.threshold_hit else {
        return FlowRun { hit: None, bound, ..fail("threshold not reached by the bound".into()) };
    };
    let kkt = match solve_qp(ds, m1, m2, gamma).and_then(|s| build_kkt_network(&s, m1, m2, gamma)) {
        Ok(k) => k,
        Err(e) => return fail(e.to_string()),
    };
    let horizon = 1000.0 * t_hit;
    let cfg = FlowConfig {
        loss,
        eta,
        horizon,
        stop_loss: None,
        stop_at_threshold: false,
        record_every: 1,
        monitors: MonitorSet::none(),
    };
    let steps = cfg.steps();
    // Log-spaced checkpoints across the last decade [100 t*, 1000 t*].
    let marks: Vec<usize> = (0..=10)
        .map(|k| (((100.0 * t_hit * 10f64.powf(k as f64 / 10.0)) / eta).round() as usize).min(steps))
        .collect();
    let mut cos_tail = Vec::new();
    let mut next = 0;
    let observed = flow_with(net0, ds, &cfg, &mut |obs| {
        while next < marks.len() && obs.step >= marks[next] {
            cos_tail.push(cosine(obs.net.weights().as_slice(), kkt.weights().as_slice()));
            next += 1;
        }
    });
    if let Err(e) = observed {
        return fail(e.to_string());
    }
    let cos_final = *cos_tail.last().unwrap_or(&f64::NAN);
    FlowRun { label, hit: Some(t_hit), bound, cos_final, cos_tail, error: None }
}

fn flow_runs() -> Vec<FlowRun> {
    let mut out = Vec::new();
    for (seed, ds) in flow_datasets().iter().enumerate() {
        for loss in [LossKind::Exponential, LossKind::Logistic] {
            for eta in [0.01, 0.005] {
                out.push(flow_run(ds, seed as u64, loss, eta));
            }
        }
    }
    out
}

fn c3_threshold_time(runs: &[FlowRun]) -> Outcome {
    let mut ok = 0;
    let mut bad = Vec::new();
    let mut worst_ratio: f64 = 0.0;
    for r in runs {
        match (r.hit, &r.error) {
            (Some(t), None) if t <= r.bound => {
                ok += 1;
                worst_ratio = worst_ratio.max(t / r.bound);
            }
            _ => bad.push(format!("{}: {:?} bound {:.3e} {}", r.label, r.hit, r.bound, r.error.clone().unwrap_or_default())),
        }
    }
    outcome(
        ok == runs.len() && !runs.is_empty(),
        format!(
            "{ok}/{} runs (5 datasets x 2 losses x eta in {{0.01, 0.005}}) reach log(2)/n; max t*/bound {worst_ratio:.2e}{}",
            runs.len(),
            if bad.is_empty() { String::new() } else { format!("; {}", bad.join("; ")) }
        ),
    )
}

fn c4_kkt_direction(runs: &[FlowRun]) -> Outcome {
    let mut ok = 0;
    let mut min_cos = f64::INFINITY;
    let mut bad = Vec::new();
    for r in runs {
        let monotone = r.cos_tail.windows(2).all(|w| w[1] >= w[0]);
        let high = r.cos_tail.first().is_some_and(|&c| c >= 0.99) && r.cos_tail.iter().all(|&c| c >= 0.99);
        min_cos = min_cos.min(r.cos_tail.iter().copied().fold(f64::INFINITY, f64::min));
        if r.error.is_none() && monotone && high && r.cos_tail.len() == 11 {
            ok += 1;
        } else {
            bad.push(format!("{}: tail {:?}", r.label, r.cos_tail.iter().map(|c| format!("{c:.5}")).collect::<Vec<_>>()));
        }
    }
    let final_min = runs.iter().map(|r| r.cos_final).fold(f64::INFINITY, f64::min);
    outcome(
        ok == runs.len() && !runs.is_empty(),
        format!(
            "{ok}/{} runs keep cosine >= 0.99 and nondecreasing on [100t*, 1000t*]; min cosine {min_cos:.5}, min final {final_min:.5}{}",
            runs.len(),
            if bad.is_empty() { String::new() } else { format!("; {}", bad.join("; ")) }
        ),
    )
}

struct DescentRun {
    srank0: f64,
    srank1: f64,
    m: usize,
    d: usize,
    report: Result<leakybias::analysis::BoundReport, String>,
    alpha: f64,
    omega: f64,
}

fn descent_run() -> DescentRun {
    let (n, d, m, gamma, delta, ratio) = (16, 2048, 32, 0.5, 0.05, 1.2);
    let act = Activation::smooth(gamma).unwrap();
    let gen = NearOrthogonal::new(d, ratio, NearOrthogonal::overlap_for_descent(n, ratio, gamma, 0.5)).unwrap();
    let ds = gen.sample(n, 0).unwrap();
    let cert = certify(&ds, gamma).unwrap();
    let budget = derive_budget(&cert, m, d, delta, act.smoothness().unwrap()).unwrap();
    let alpha = budget.alpha_max;
    let omega = budget.omega_max(alpha);
    let cfg = TrainConfig {
        m1: m / 2,
        m2: m / 2,
        d,
        activation: act,
        loss: LossKind::Logistic,
        alpha,
        steps: 20_000,
        init: InitScheme::new(omega, 0).unwrap(),
        record_every: 20,
        monitors: MonitorSet::standard(),
    };
    let mut out = DescentRun { srank0: f64::NAN, srank1: f64::NAN, m, d, report: Err(String::new()), alpha, omega };
    if !cert.thm42_holds {
        out.report = Err("dataset not certified for descent".into());
        return out;
    }
    match train(&cfg, &ds) {
        Ok(trace) => {
            out.srank0 = trace.row_at(0).and_then(|r| r.monitors.stable_rank).unwrap_or(f64::NAN);
            out.srank1 = trace.row_at(1).and_then(|r| r.monitors.stable_rank).unwrap_or(f64::NAN);
            out.report = Ok(check_trace_bounds(&trace, &cert, alpha));
        }
        Err(e) => out.report = Err(e.to_string()),
    }
    out
}

fn c5_monitors(run: &DescentRun) -> Outcome {
    let required = ["loss_ratio", "proxy_pl", "stable_rank_c2", "loss_decay", "margin_step1", "neuron_norm_monotone"];
    match &run.report {
        Err(e) => outcome(false, e.clone()),
        Ok(rep) => {
            let missing: Vec<&str> = required.iter().copied().filter(|b| rep.count(b) == 0).collect();
            let violations: Vec<String> =
                rep.violations().take(5).map(|v| format!("{}@{} lhs={:e} rhs={:e}", v.bound, v.step, v.lhs, v.rhs)).collect();
            let counts: Vec<String> = required.iter().map(|b| format!("{b}={}", rep.count(b))).collect();
            outcome(
                missing.is_empty() && rep.passed(),
                format!(
                    "alpha={:.3e} omega={:.3e}; {} checks [{}], {} violations{}{}",
                    run.alpha,
                    run.omega,
                    rep.checks.len(),
                    counts.join(" "),
                    rep.violations().count(),
                    if violations.is_empty() { String::new() } else { format!(": {}", violations.join("; ")) },
                    if missing.is_empty() { String::new() } else { format!("; never evaluated: {missing:?}") }
                ),
            )
        }
    }
}

fn c6_rank_collapse(run: &DescentRun) -> Outcome {
    let (m, d) = (run.m as f64, run.d as f64);
    let floor = 0.5 * m * d / (m.sqrt() + d.sqrt()).powi(2);
    let collapse = run.srank1 <= 0.2 * run.srank0;
    let spread = run.srank0 >= floor;
    outcome(
        collapse && spread,
        format!(
            "srank(W0)={:.3} (floor {floor:.3}), srank(W1)={:.4} (limit {:.3})",
            run.srank0,
            run.srank1,
            0.2 * run.srank0
        ),
    )
}

fn c7_oracles() -> Outcome {
    // (a) SVM against support-set enumeration.
    let mut svm_err: f64 = 0.0;
    let mut svm_ok = 0;
    for seed in 0..20u64 {
        let n = 4 + (seed as usize % 9);
        let d = n + 3 + seed as usize % 5;
        let ds = GaussianDesign::isotropic(d).sample(n, seed).unwrap();
        let (Ok(sol), Some((z_ref, _))) = (solve_svm(&ds), common::svm_by_enumeration(&ds)) else { continue };
        let e = sol.z.iter().zip(&z_ref).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        svm_err = svm_err.max(e);
        svm_ok += 1;
    }
    // (b) Stable rank against a Jacobi SVD.
    let mut sr_err: f64 = 0.0;
    let mut rng = CounterRng::new(7, 0);
    for k in 0..100 {
        let rows = 1 + k % 16;
        let cols = 1 + (k * 7) % 16;
        let mut w = Matrix::zeros(rows, cols);
        rng.fill_normal(w.as_mut_slice(), 1.0);
        if k % 5 == 0 && rows > 1 {
            // Nearly rank-one instances stress the power iteration.
            let first = w.row(0).to_vec();
            for i in 1..rows {
                let s = 1.0 + i as f64;
                for (x, f) in w.row_mut(i).iter_mut().zip(&first) {
                    *x = s * f + 1e-3 * *x;
                }
            }
        }
        let got = stable_rank(&w).unwrap();
        let want = common::stable_rank_by_svd(&w);
        sr_err = sr_err.max((got - want).abs());
    }
    // (c) Gradients against central differences.
    let mut gd_err: f64 = 0.0;
    for k in 0..20u64 {
        let (n, d) = (3 + k as usize % 4, 4 + k as usize % 5);
        let gamma = 0.1 + 0.045 * k as f64;
        let ds = GaussianDesign::isotropic(d).sample(n, 100 + k).unwrap();
        let act = Activation::smooth(gamma).unwrap();
        let net = init_weights(1 + k as usize % 3, 1 + (k as usize / 3) % 3, d, act, &InitScheme::new(0.7, k).unwrap()).unwrap();
        let loss = if k % 2 == 0 { LossKind::Logistic } else { LossKind::Exponential };
        let g = net.grad(&ds, loss).unwrap();
        let fd = common::finite_difference_grad(&net, &ds, loss, 1e-5);
        gd_err = gd_err.max(common::relative_error(&g, &fd, 1e-12));
    }
    outcome(
        svm_ok == 20 && svm_err <= 1e-7 && sr_err <= 1e-8 && gd_err <= 1e-6,
        format!(
            "(a) {svm_ok}/20 SVM instances, max |z - z_enum| {svm_err:.2e}; (b) max stable-rank error {sr_err:.2e} over 100 matrices; (c) max relative gradient error {gd_err:.2e} over 20 configs"
        ),
    )
}

fn c8_presets() -> Outcome {
    let root = tempfile::tempdir().unwrap();
    let mut parts = Vec::new();
    let mut all = true;
    let mut reduced = |preset: Preset, edit: &dyn Fn(&mut ExperimentConfig)| {
        let mut cfg = ExperimentConfig::preset(preset);
        cfg.seeds = vec![0, 1, 2];
        cfg.output_dir = root.path().join(preset.name());
        edit(&mut cfg);
        match run_preset(&cfg, 1, false) {
            Ok(s) => {
                let t = s.trend.as_ref();
                let holds = t.is_some_and(|t| t.holds) && s.failed_cells() == 0;
                all &= holds;
                let vals = t
                    .map(|t| t.values.iter().map(|(l, v)| format!("{l}:{v:.4}")).collect::<Vec<_>>().join(" "))
                    .unwrap_or_default();
                parts.push(format!("{} {} [{vals}]", preset.name(), if holds { "ok" } else { "violated" }));
            }
            Err(e) => {
                all = false;
                parts.push(format!("{}: {e}", preset.name()));
            }
        }
    };
    reduced(Preset::RankVsDimension, &|c| c.params.m = 64);
    reduced(Preset::RankVsInit, &|c| c.params.m = 64);
    reduced(Preset::XorFailure, &|_| {});
    outcome(all, parts.join("; "))
}

fn main() {
    let mut results = Vec::new();
    results.push(run(1, "counterexample closed form", Duration::from_secs(1), c1_closed_form));
    results.push(run(2, "seven-item verification", Duration::from_secs(30), c2_full_verification));
    let start = Instant::now();
    let runs = flow_runs();
    let flow_time = start.elapsed();
    results.push(run_after(3, "flow threshold time", Duration::from_secs(120), flow_time, || c3_threshold_time(&runs)));
    results.push(run_after(4, "flow to KKT direction", Duration::from_secs(120), flow_time, || c4_kkt_direction(&runs)));
    let start = Instant::now();
    let gd = descent_run();
    let gd_time = start.elapsed();
    results.push(run_after(5, "descent monitors", Duration::from_secs(300), gd_time, || c5_monitors(&gd)));
    results.push(run_after(6, "rank collapse after one step", Duration::from_secs(300), gd_time, || c6_rank_collapse(&gd)));
    results.push(run(7, "oracle equivalences", Duration::from_secs(60), c7_oracles));
    results.push(run(8, "preset trends (reduced grid)", Duration::from_secs(900), c8_presets));
    let passed = results.iter().filter(|&&p| p).count();
    println!("acceptance: {passed}/{} criteria pass", results.len());
    if passed != results.len() {
        std::process::exit(1);
    }
}
