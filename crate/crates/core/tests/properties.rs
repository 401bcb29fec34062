mod common;

use leakybias::analysis::{proxy_pl, rank2_residual, stable_rank};
use leakybias::dataset::{self, certify, GaussianDesign, Mixture, NearOrthogonal};
use leakybias::experiment::plot::LineChart;
use leakybias::linalg::{dot, Matrix};
use leakybias::margin::{
    build_kkt_network, solve_qp, solve_qp_from, solve_svm, verify_theorem, KktInput, VerifyOptions,
};
use leakybias::model::{Activation, LossKind, TwoLayerNet};
use leakybias::rng::CounterRng;
use leakybias::training::{init_weights, train, InitScheme, TrainConfig};
use leakybias::analysis::MonitorSet;
use proptest::prelude::*;

fn random_matrix(rows: usize, cols: usize, seed: u64, scale: f64) -> Matrix {
    let mut w = Matrix::zeros(rows, cols);
    CounterRng::new(seed, 99).fill_normal(w.as_mut_slice(), scale);
    w
}

fn near_orthogonal(n: usize, d: usize, gamma: f64, seed: u64) -> leakybias::dataset::Dataset {
    let c = NearOrthogonal::overlap_for_flow(n, 1.2, gamma, 0.5);
    NearOrthogonal::new(d, 1.2, c).unwrap().sample(n, seed).unwrap()
}

// ---- dataset -------------------------------------------------------------

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn save_load_is_bit_exact(n in 1usize..12, d in 1usize..20, seed in any::<u64>(), beta in 0.05f64..0.45) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ds.txt");
        for ds in [GaussianDesign::isotropic(d).sample(n, seed).unwrap(), Mixture::new(d, beta, 0.1).unwrap().sample(n, seed).unwrap()] {
            dataset::save(&ds, &path).unwrap();
            let back = dataset::load(&path).unwrap();
            prop_assert_eq!(&back, &ds);
            prop_assert_eq!(certify(&back, 0.5).unwrap(), certify(&ds, 0.5).unwrap());
        }
    }

    #[test]
    fn generators_are_deterministic(n in 1usize..10, d in 12usize..40, seed in any::<u64>()) {
        let a = near_orthogonal(n, d, 0.5, seed);
        let b = near_orthogonal(n, d, 0.5, seed);
        prop_assert_eq!(a, b);
    }
}

#[test]
fn certification_rate_is_nondecreasing_in_d() {
    let (n, gamma) = (20, 0.9);
    let rates: Vec<usize> = [1usize << 8, 1 << 12, 1 << 16]
        .iter()
        .map(|&d| {
            let g = GaussianDesign::isotropic(d);
            (0..50).filter(|&s| certify(&g.sample(n, s).unwrap(), gamma).unwrap().thm32_holds).count()
        })
        .collect();
    assert!(rates.windows(2).all(|w| w[1] >= w[0]), "{rates:?}");
    assert!(rates[2] > rates[0], "{rates:?}");
}

/// Two-sample Kolmogorov–Smirnov statistic.
fn ks(mut a: Vec<f64>, mut b: Vec<f64>) -> f64 {
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (mut i, mut j, mut best) = (0, 0, 0.0f64);
    while i < a.len() && j < b.len() {
        if a[i] <= b[j] {
            i += 1;
        } else {
            j += 1;
        }
        best = best.max((i as f64 / a.len() as f64 - j as f64 / b.len() as f64).abs());
    }
    best
}

#[test]
fn weak_mixture_matches_gaussian_norms() {
    let (n, d) = (600, 50);
    let mix = Mixture::with_mean_norm(d, 1e-9, 0.0).unwrap().sample(n, 1).unwrap();
    let gau = GaussianDesign::isotropic(d).sample(n, 2).unwrap();
    let stat = ks(mix.sq_norms(), gau.sq_norms());
    // 1% critical value for equal sample sizes: 1.63 √(2/n).
    assert!(stat < 1.63 * (2.0 / n as f64).sqrt(), "KS statistic {stat}");
}

// ---- model -----------------------------------------------------------------

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn leaky_is_positively_homogeneous(m1 in 1usize..5, m2 in 1usize..5, d in 1usize..8, seed in any::<u64>(),
                                       gamma in 0.01f64..1.0, beta in 1e-3f64..1e3) {
        let w = random_matrix(m1 + m2, d, seed, 1.0);
        let net = TwoLayerNet::new(m1, m2, Activation::leaky(gamma).unwrap(), w).unwrap();
        let x = random_matrix(1, d, seed ^ 1, 1.0).into_vec();
        let f = net.forward(&x).unwrap();
        let fb = net.scaled(beta).forward(&x).unwrap();
        prop_assert!((fb - beta * f).abs() <= 1e-12 * (beta * f).abs().max(1e-300) + 1e-300, "{} vs {}", fb, beta * f);
    }

    #[test]
    fn smooth_output_is_h_smooth(m1 in 1usize..5, m2 in 1usize..5, d in 1usize..8, seed in any::<u64>(),
                                 gamma in 0.01f64..1.0, step in 1e-3f64..3.0) {
        let act = Activation::smooth(gamma).unwrap();
        let h = act.smoothness().unwrap();
        let v = TwoLayerNet::new(m1, m2, act, random_matrix(m1 + m2, d, seed, 1.0)).unwrap();
        let diff = random_matrix(m1 + m2, d, seed ^ 2, step);
        let mut ww = v.weights().clone();
        ww.add_scaled(1.0, &diff);
        let w = v.with_weights(ww).unwrap();
        let x = random_matrix(1, d, seed ^ 3, 1.0).into_vec();
        let lin = w.forward(&x).unwrap() - v.forward(&x).unwrap() - v.output_grad(&x).unwrap().inner(&diff);
        let s = diff.spectral_norm();
        let bound = h * dot(&x, &x) / (2.0 * ((m1 + m2) as f64).sqrt()) * s * s;
        prop_assert!(lin.abs() <= bound * (1.0 + 1e-9) + 1e-14, "{} > {}", lin.abs(), bound);
    }

    #[test]
    fn smooth_loss_gradient_is_lipschitz(m1 in 1usize..4, m2 in 1usize..4, n in 1usize..6, d in 1usize..8,
                                         seed in any::<u64>(), gamma in 0.05f64..1.0, step in 1e-3f64..2.0) {
        let act = Activation::smooth(gamma).unwrap();
        let h = act.smoothness().unwrap();
        let ds = GaussianDesign::isotropic(d).sample(n, seed).unwrap();
        let v = TwoLayerNet::new(m1, m2, act, random_matrix(m1 + m2, d, seed ^ 4, 1.0)).unwrap();
        let diff = random_matrix(m1 + m2, d, seed ^ 5, step);
        let mut ww = v.weights().clone();
        ww.add_scaled(1.0, &diff);
        let w = v.with_weights(ww).unwrap();
        let gdiff = w.grad(&ds, LossKind::Logistic).unwrap().sub(&v.grad(&ds, LossKind::Logistic).unwrap()).frobenius();
        let r2 = ds.r_max().powi(2);
        let bound = r2 * (1.0 + h / ((m1 + m2) as f64).sqrt()) * diff.spectral_norm();
        prop_assert!(gdiff <= bound * (1.0 + 1e-9), "{} > {}", gdiff, bound);
    }

    #[test]
    fn sigmoid_risk_is_bounded_by_logistic_loss(m1 in 1usize..4, m2 in 1usize..4, n in 1usize..8, d in 1usize..8,
                                                seed in any::<u64>(), scale in 1e-3f64..5.0, smooth in any::<bool>()) {
        let act = if smooth { Activation::smooth(0.3).unwrap() } else { Activation::leaky(0.3).unwrap() };
        let ds = GaussianDesign::isotropic(d).sample(n, seed).unwrap();
        let net = TwoLayerNet::new(m1, m2, act, random_matrix(m1 + m2, d, seed ^ 6, scale)).unwrap();
        let g = net.sigmoid_risk(&ds).unwrap();
        let l = net.empirical_loss(&ds, LossKind::Logistic).unwrap();
        prop_assert!(g > 0.0 && g < 1.0 && g <= l, "G={} L={}", g, l);
    }
}

#[test]
fn gradient_matches_finite_differences_for_both_losses() {
    for seed in 0..6u64 {
        let ds = GaussianDesign::isotropic(6).sample(5, seed).unwrap();
        let net = init_weights(2, 3, 6, Activation::smooth(0.4).unwrap(), &InitScheme::new(0.5, seed).unwrap()).unwrap();
        for loss in [LossKind::Logistic, LossKind::Exponential] {
            let fd = common::finite_difference_grad(&net, &ds, loss, 1e-5);
            let g = net.grad(&ds, loss).unwrap();
            assert!(common::relative_error(&g, &fd, 1e-12) < 1e-6);
        }
    }
}

// ---- training --------------------------------------------------------------

fn gd_config(d: usize, alpha: f64, steps: usize, omega: f64) -> TrainConfig {
    TrainConfig {
        m1: 4,
        m2: 4,
        d,
        activation: Activation::smooth(0.5).unwrap(),
        loss: LossKind::Logistic,
        alpha,
        steps,
        init: InitScheme::new(omega, 3).unwrap(),
        record_every: 10,
        monitors: MonitorSet::standard(),
    }
}

#[test]
fn identical_inputs_give_identical_traces() {
    let ds = GaussianDesign::isotropic(32).sample(8, 5).unwrap();
    let cfg = gd_config(32, 0.05, 60, 0.1);
    let a = train(&cfg, &ds).unwrap();
    let b = train(&cfg, &ds).unwrap();
    assert_eq!(a.to_csv(), b.to_csv());
    assert_eq!(a.final_net, b.final_net);
}

#[test]
fn certified_descent_grows_neuron_norms() {
    use leakybias::training::derive_budget;
    let (n, d, gamma) = (8, 256, 0.5);
    let c = NearOrthogonal::overlap_for_descent(n, 1.2, gamma, 0.5);
    let ds = NearOrthogonal::new(d, 1.2, c).unwrap().sample(n, 4).unwrap();
    let cert = certify(&ds, gamma).unwrap();
    assert!(cert.thm42_holds);
    let budget = derive_budget(&cert, 8, d, 0.05, 0.25).unwrap();
    let alpha = budget.alpha_max;
    let mut cfg = gd_config(d, alpha, 100_000, budget.omega_max(alpha));
    cfg.record_every = 1000;
    cfg.monitors = MonitorSet::none();
    let trace = train(&cfg, &ds).unwrap();
    let norms: Vec<f64> = trace.rows.iter().filter(|r| r.step >= 1).map(|r| r.min_neuron_norm.unwrap()).collect();
    assert!(norms.windows(2).all(|w| w[1] >= w[0]));
    assert!(trace.rows.windows(2).all(|w| w[1].loss <= w[0].loss));
    let first = norms[0];
    let last = *norms.last().unwrap();
    assert!(last > 2.0 * first, "min neuron norm {first:e} -> {last:e}");
}

// ---- analysis --------------------------------------------------------------

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn stable_rank_is_scale_invariant(rows in 1usize..10, cols in 1usize..10, seed in any::<u64>(), c in -1e3f64..1e3) {
        prop_assume!(c.abs() > 1e-3);
        let w = random_matrix(rows, cols, seed, 1.0);
        let a = stable_rank(&w).unwrap();
        let b = stable_rank(&w.scaled(c)).unwrap();
        prop_assert!((a - b).abs() <= 1e-8 * a);
    }

    #[test]
    fn stable_rank_at_most_rank(rows in 1usize..12, cols in 1usize..12, r in 1usize..5, seed in any::<u64>()) {
        let r = r.min(rows).min(cols);
        let w = {
            let a = random_matrix(rows, r, seed, 1.0);
            let b = random_matrix(r, cols, seed ^ 7, 1.0);
            let mut out = Matrix::zeros(rows, cols);
            for i in 0..rows {
                for k in 0..r {
                    let aik = a.row(i)[k];
                    for (o, bk) in out.row_mut(i).iter_mut().zip(b.row(k)) {
                        *o += aik * bk;
                    }
                }
            }
            out
        };
        let s = stable_rank(&w).unwrap();
        prop_assert!(s >= 1.0 - 1e-9 && s <= r as f64 + 1e-8, "srank {} rank {}", s, r);
        prop_assert!((s - common::stable_rank_by_svd(&w)).abs() <= 1e-8 * s.max(1.0));
        if r <= 2 {
            prop_assert!(rank2_residual(&w).unwrap() <= 1e-8);
        }
    }
}

#[test]
fn proxy_pl_holds_along_a_certified_run() {
    let (n, d, gamma) = (8, 256, 0.5);
    let c = NearOrthogonal::overlap_for_descent(n, 1.2, gamma, 0.5);
    let ds = NearOrthogonal::new(d, 1.2, c).unwrap().sample(n, 9).unwrap();
    let cfg = gd_config(d, 1e-3, 200, 1e-4);
    let mut ok = true;
    let mut seen = 0;
    leakybias::training::train_from(
        init_weights(4, 4, d, cfg.activation, &cfg.init).unwrap(),
        &cfg,
        &ds,
        &mut |obs| {
            if obs.net.weights().is_zero() {
                return;
            }
            let p = proxy_pl(obs.net, &ds, LossKind::Logistic).unwrap();
            seen += 1;
            ok &= p.holds();
        },
    )
    .unwrap();
    assert!(ok && seen > 10);
}

// ---- margin ----------------------------------------------------------------

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn qp_network_properties(seed in any::<u64>(), n in 2usize..9, m1 in 1usize..5, m2 in 1usize..5, gamma in 0.2f64..1.0) {
        let d = 64 + 8 * n;
        let ds = near_orthogonal(n, d, gamma, seed);
        prop_assume!(certify(&ds, gamma).unwrap().thm32_holds);
        let sol = solve_qp(&ds, m1, m2, gamma).unwrap();

        // Uniqueness from a different dual start.
        let start: Vec<f64> = (0..n).map(|i| 0.1 + i as f64).collect();
        let other = solve_qp_from(&ds, m1, m2, gamma, &start).unwrap();
        let dist = sol.v.iter().zip(&other.v).chain(sol.u.iter().zip(&other.u)).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        prop_assert!(dist <= 1e-7, "solutions differ by {}", dist);

        // Margin bound on z.
        let z = sol.z();
        for i in 0..n {
            prop_assert!(ds.y(i) * dot(&z, ds.x(i)) >= 1.0 - 1e-8);
        }

        let rep = verify_theorem(KktInput::Solution(&sol), &ds, gamma, &VerifyOptions::with_probes(500)).unwrap();
        // Sign equivalence is exact on every probe.
        prop_assert!(rep.linear_boundary_ok && rep.probe_agreement == 1.0);
        prop_assert!(rep.norm_ratio_ok, "norm ratio {} bound {}", rep.norm_ratio, rep.norm_bound);
        prop_assert!(rep.is_consistent());

        // Direct sign check on fresh probes.
        let net = build_kkt_network(&sol, m1, m2, gamma).unwrap();
        let mut rng = CounterRng::new(seed, 1234);
        for _ in 0..200 {
            let mut x = vec![0.0; d];
            rng.fill_normal(&mut x, 1.0);
            let lin = dot(&z, &x);
            if lin != 0.0 {
                prop_assert_eq!(net.forward(&x).unwrap().signum(), lin.signum());
            }
        }
    }

    #[test]
    fn svm_matches_enumeration(seed in any::<u64>(), n in 1usize..9) {
        let ds = GaussianDesign::isotropic(n + 4).sample(n, seed).unwrap();
        let sol = solve_svm(&ds).unwrap();
        let (z, norm) = common::svm_by_enumeration(&ds).unwrap();
        prop_assert!((sol.norm() - norm).abs() <= 1e-7);
        for (a, b) in sol.z.iter().zip(&z) {
            prop_assert!((a - b).abs() <= 1e-7);
        }
    }
}

// ---- experiment ------------------------------------------------------------

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn svg_regenerates_identically(points in prop::collection::vec((-1e6f64..1e6, -1e6f64..1e6), 0..30),
                                   series in 1usize..4, log_x in any::<bool>()) {
        let mut c = LineChart::new("t", "x", "y");
        c.log_x = log_x;
        for s in 0..series {
            c.push(format!("s{s}"), points.iter().map(|&(x, y)| (x.abs() + s as f64, y)).collect());
        }
        let back = LineChart::from_csv(&c.to_csv()).unwrap();
        prop_assert_eq!(back.to_svg(), c.to_svg());
    }
}

#[test]
fn summary_has_one_row_per_cell_and_seed() {
    use leakybias::experiment::{read_summary, run_preset, ExperimentConfig};
    let dir = tempfile::tempdir().unwrap();
    let text = format!(
        r#"
preset = "custom"
seeds = [0, 1, 2]
output_dir = "{}"

[params]
n = 6
d = 32
m = 4
steps = 5
test_n = 10

[grid]
d = [16, 32]
alpha = [0.01, 0.02]
"#,
        dir.path().join("out").display()
    );
    let cfg = ExperimentConfig::parse(&text).unwrap();
    let summary = run_preset(&cfg, 2, false).unwrap();
    assert_eq!(summary.rows.len(), 4 * 3);
    assert_eq!(read_summary(dir.path().join("out/summary.csv")).unwrap().len(), 12);
}
