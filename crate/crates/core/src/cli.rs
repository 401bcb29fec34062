//! Command-line front end. Exit codes: 0 all checks pass, 1 a check failed
//! (or a run-time error), 2 usage error.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::analysis::{check_trace_bounds, MonitorSet};
use crate::dataset::{self, certify, Dataset, GaussianDesign, Mixture, NearOrthogonal, NoisyXor};
use crate::error::{Error, Result};
use crate::experiment::{self, ExperimentConfig, Preset};
use crate::margin::{
    build_kkt_network, counterexample, solve_qp, solve_svm, verify_theorem, KktInput, VerifyOptions,
};
use crate::model::{Activation, LossKind, TwoLayerNet};
use crate::training::{derive_budget, flow_with, init_weights, train, FlowConfig, InitScheme, TrainConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Parser, Debug)]
#[command(name = "leakybias", version, about = "Implicit-bias laboratory for two-layer leaky networks")]
pub struct Cli {
    /// Experiment config (TOML); used by `sweep`.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output file or directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Overwrite existing output.
    #[arg(long, global = true)]
    pub force: bool,
    /// Worker threads for `sweep` (defaults to the number of cores).
    #[arg(long, global = true, env = "LEAKYBIAS_JOBS")]
    pub jobs: Option<usize>,
    /// Emit SVG charts.
    #[arg(long, global = true)]
    pub plot: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum DataArg {
    Gaussian,
    Mixture,
    Xor,
    NearOrthogonal,
    Counterexample,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum ActArg {
    Leaky,
    Smooth,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum LossArg {
    Logistic,
    Exponential,
}

impl From<LossArg> for LossKind {
    fn from(l: LossArg) -> Self {
        match l {
            LossArg::Logistic => LossKind::Logistic,
            LossArg::Exponential => LossKind::Exponential,
        }
    }
}

#[derive(Args, Debug)]
pub struct GenerateArgs {
    #[arg(long, value_enum)]
    pub kind: DataArg,
    #[arg(long, default_value_t = 10)]
    pub n: usize,
    #[arg(long, default_value_t = 1024)]
    pub d: usize,
    /// Mean norm exponent, `‖μ‖ = d^beta` (mixture, xor).
    #[arg(long, default_value_t = 0.26)]
    pub beta: f64,
    #[arg(long, default_value_t = 0.0)]
    pub noise_rate: f64,
    /// `R_max / R_min` (near-orthogonal).
    #[arg(long, default_value_t = 1.2)]
    pub radius_ratio: f64,
    /// Overlap as a fraction of the flow hypothesis limit at `--gamma` (near-orthogonal).
    #[arg(long, default_value_t = 0.5)]
    pub overlap_fraction: f64,
    /// Measure `--overlap-fraction` against the gradient-descent limit instead.
    #[arg(long)]
    pub for_descent: bool,
    #[arg(long, default_value_t = 0.5)]
    pub gamma: f64,
    /// Counterexample parameter in (0, 1/72].
    #[arg(long, default_value_t = 1.0 / 72.0)]
    pub epsilon: f64,
    /// Draw from the held-out streams.
    #[arg(long)]
    pub held_out: bool,
}

#[derive(Args, Debug)]
pub struct NetArgs {
    #[arg(long, default_value_t = 4)]
    pub m1: usize,
    #[arg(long, default_value_t = 4)]
    pub m2: usize,
    #[arg(long, default_value_t = 0.5)]
    pub gamma: f64,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    pub data: PathBuf,
    #[command(flatten)]
    pub net: NetArgs,
    #[arg(long, value_enum, default_value = "smooth")]
    pub activation: ActArg,
    #[arg(long, value_enum, default_value = "logistic")]
    pub loss: LossArg,
    /// Step size; defaults to the certified budget `alpha_max`.
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long, default_value_t = 1000)]
    pub steps: usize,
    /// Initialization scale; defaults to `omega_max(alpha)` when the data are certified.
    #[arg(long)]
    pub omega: Option<f64>,
    #[arg(long, default_value_t = 0.05)]
    pub delta: f64,
    #[arg(long, default_value_t = 10)]
    pub record_every: usize,
    /// Comma-separated monitors (stable_rank, loss_ratio, proxy_pl, mu_align, rank2_residual, all).
    #[arg(long, default_value = "stable_rank,loss_ratio,proxy_pl,mu_align")]
    pub monitors: String,
    /// Check the trace against the certified bounds; exit 1 on a violation.
    #[arg(long)]
    pub check_bounds: bool,
    /// Save the final network here.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct FlowArgs {
    pub data: PathBuf,
    #[command(flatten)]
    pub net: NetArgs,
    #[arg(long, value_enum, default_value = "exponential")]
    pub loss: LossArg,
    #[arg(long, default_value_t = 0.01)]
    pub eta: f64,
    #[arg(long, default_value_t = 10.0)]
    pub horizon: f64,
    #[arg(long, default_value_t = 0.0)]
    pub omega: f64,
    /// Stop once the loss falls below `log(2)/n`.
    #[arg(long)]
    pub stop_at_threshold: bool,
    #[arg(long, default_value_t = 100)]
    pub record_every: usize,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct VerifyArgs {
    pub data: PathBuf,
    #[command(flatten)]
    pub net: NetArgs,
    #[arg(long, default_value_t = 10_000)]
    pub probes: usize,
    /// Verify this checkpoint instead of the QP-built network.
    #[arg(long)]
    pub network: Option<PathBuf>,
    /// Rescale the checkpoint to unit minimum margin first.
    #[arg(long)]
    pub normalize: bool,
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    /// Run a preset with its defaults when no `--config` is given.
    #[arg(long)]
    pub preset: Option<String>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Draw a dataset and write it in the text format.
    Generate(GenerateArgs),
    /// Print the near-orthogonality certificate of a dataset.
    Certify {
        data: PathBuf,
        #[arg(long, default_value_t = 0.5)]
        gamma: f64,
        /// Exit 1 unless the named hypothesis holds.
        #[arg(long, value_parser = ["thm32", "thm42"])]
        require: Option<String>,
    },
    /// Gradient descent; writes the trace CSV.
    Train(TrainArgs),
    /// Forward-Euler gradient flow; writes the trace CSV.
    Flow(FlowArgs),
    /// Solve the reduced margin problem and save the rank-2 network.
    SolveQp {
        data: PathBuf,
        #[command(flatten)]
        net: NetArgs,
    },
    /// Hard-margin linear SVM through the origin.
    SolveSvm { data: PathBuf },
    /// Solve, build the KKT network and check all seven items.
    Verify(VerifyArgs),
    /// Run an experiment grid.
    Sweep(SweepArgs),
    /// Re-render charts and summarize a sweep directory.
    Report { dir: PathBuf },
}

enum Failure {
    Usage(String),
    Check(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidParameter(_) | Error::Parse { .. } | Error::OutputExists(_) => Failure::Usage(e.to_string()),
            _ => Failure::Runtime(e.to_string()),
        }
    }
}

type CliResult = std::result::Result<(), Failure>;

fn ensure_writable(path: &Path, force: bool) -> Result<()> {
    if path.exists() && !force {
        return Err(Error::OutputExists(path.to_path_buf()));
    }
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    Ok(())
}

fn write_text(path: &Path, text: &str, force: bool) -> Result<()> {
    ensure_writable(path, force)?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn generate(cli: &Cli, a: &GenerateArgs) -> Result<Dataset> {
    let seed = cli.seed.unwrap_or(0);
    macro_rules! draw {
        ($g:expr) => {
            if a.held_out {
                $g.sample_held_out(a.n, seed)
            } else {
                $g.sample(a.n, seed)
            }
        };
    }
    match a.kind {
        DataArg::Gaussian => draw!(GaussianDesign::isotropic(a.d)),
        DataArg::Mixture => draw!(Mixture::new(a.d, a.beta, a.noise_rate)?),
        DataArg::Xor => draw!(NoisyXor::new(a.d, (a.d as f64).powf(a.beta))?),
        DataArg::NearOrthogonal => {
            let c = if a.for_descent {
                NearOrthogonal::overlap_for_descent(a.n, a.radius_ratio, a.gamma, a.overlap_fraction)
            } else {
                NearOrthogonal::overlap_for_flow(a.n, a.radius_ratio, a.gamma, a.overlap_fraction)
            };
            draw!(NearOrthogonal::new(a.d, a.radius_ratio, c)?)
        }
        DataArg::Counterexample => Ok(counterexample(a.epsilon)?.dataset),
    }
}

fn run_train(cli: &Cli, a: &TrainArgs) -> CliResult {
    let ds = dataset::load(&a.data)?;
    let seed = cli.seed.unwrap_or(0);
    let activation = match a.activation {
        ActArg::Leaky => Activation::leaky(a.net.gamma)?,
        ActArg::Smooth => Activation::smooth(a.net.gamma)?,
    };
    let cert = certify(&ds, a.net.gamma)?;
    let m = a.net.m1 + a.net.m2;
    let budget = if cert.thm42_holds {
        Some(derive_budget(&cert, m, ds.d(), a.delta, activation.smoothness().unwrap_or(1.0))?)
    } else {
        None
    };
    let alpha = match (a.alpha, budget) {
        (Some(x), _) => x,
        (None, Some(b)) => b.alpha_max,
        (None, None) => return Err(Failure::Usage("data are not certified; pass --alpha explicitly".into())),
    };
    match budget {
        Some(b) if alpha > b.alpha_max => eprintln!(
            "warning: alpha={alpha:e} exceeds the certified budget alpha_max={:e}; proceeding without guarantees",
            b.alpha_max
        ),
        None => eprintln!("warning: data are not certified at gamma={}; no step-size budget applies", a.net.gamma),
        _ => {}
    }
    let omega = match (a.omega, budget) {
        (Some(w), _) => w,
        (None, Some(b)) => b.omega_max(alpha),
        (None, None) => 0.0,
    };
    let cfg = TrainConfig {
        m1: a.net.m1,
        m2: a.net.m2,
        d: ds.d(),
        activation,
        loss: a.loss.into(),
        alpha,
        steps: a.steps,
        init: InitScheme::new(omega, seed)?,
        record_every: a.record_every,
        monitors: MonitorSet::parse(&a.monitors)?,
    };
    let out = cli.out.clone().unwrap_or_else(|| PathBuf::from("trace.csv"));
    ensure_writable(&out, cli.force)?;
    let trace = train(&cfg, &ds)?;
    trace.write_csv(&out)?;
    let last = trace.last();
    println!("steps={} loss={:e} min_margin={:e} trace={}", last.step, last.loss, last.min_margin, out.display());
    if let Some(s) = last.monitors.stable_rank {
        println!("stable_rank={s}");
    }
    if let Some(path) = &a.checkpoint {
        ensure_writable(path, cli.force)?;
        trace.final_net.save(path, Some("train"))?;
    }
    if a.check_bounds {
        if !cert.thm42_holds {
            return Err(Failure::Check("bounds: data are not certified for gradient descent".into()));
        }
        let report = check_trace_bounds(&trace, &cert, alpha);
        print!("{}", report.to_text());
        if !report.passed() {
            let names: Vec<String> = report.violations().map(|c| format!("{}@{}", c.bound, c.step)).collect();
            return Err(Failure::Check(format!("bound violations: {}", names.join(", "))));
        }
    }
    Ok(())
}

fn run_flow(cli: &Cli, a: &FlowArgs) -> CliResult {
    let ds = dataset::load(&a.data)?;
    let act = Activation::leaky(a.net.gamma)?;
    let net0 = init_weights(a.net.m1, a.net.m2, ds.d(), act, &InitScheme::new(a.omega, cli.seed.unwrap_or(0))?)?;
    let cfg = FlowConfig {
        loss: a.loss.into(),
        eta: a.eta,
        horizon: a.horizon,
        stop_loss: Some(std::f64::consts::LN_2 / ds.n() as f64),
        stop_at_threshold: a.stop_at_threshold,
        record_every: a.record_every,
        monitors: MonitorSet::standard(),
    };
    let out = cli.out.clone().unwrap_or_else(|| PathBuf::from("flow.csv"));
    ensure_writable(&out, cli.force)?;
    let trace = flow_with(net0, &ds, &cfg, &mut |_| {})?;
    trace.write_csv(&out)?;
    match trace.threshold_hit {
        Some((step, t)) => println!("threshold log(2)/n reached at step {step}, flow time {t}"),
        None => println!("threshold log(2)/n not reached by flow time {}", a.horizon),
    }
    println!("final loss={:e} trace={}", trace.last().loss, out.display());
    if let Some(path) = &a.checkpoint {
        ensure_writable(path, cli.force)?;
        trace.final_net.save(path, Some("flow"))?;
    }
    Ok(())
}

fn run_verify(cli: &Cli, a: &VerifyArgs) -> CliResult {
    let ds = dataset::load(&a.data)?;
    let opts = VerifyOptions { probe_count: a.probes, seed: cli.seed.unwrap_or(0), ..VerifyOptions::default() };
    let report = match &a.network {
        Some(path) => {
            let (mut net, _) = TwoLayerNet::load(path)?;
            if a.normalize {
                net = crate::margin::normalize_by_margin(&net, &ds)?;
            }
            verify_theorem(KktInput::Network(&net), &ds, a.net.gamma, &opts)?
        }
        None => {
            let sol = solve_qp(&ds, a.net.m1, a.net.m2, a.net.gamma)?;
            verify_theorem(KktInput::Solution(&sol), &ds, a.net.gamma, &opts)?
        }
    };
    print!("{}", report.to_text());
    if let Some(out) = &cli.out {
        write_text(out, &report.to_csv(), cli.force)?;
    }
    if report.passed() {
        Ok(())
    } else {
        Err(Failure::Check(format!("failing items: {}", report.failing().join(", "))))
    }
}

fn run_sweep(cli: &Cli, a: &SweepArgs) -> CliResult {
    let mut cfg = match (&cli.config, &a.preset) {
        (Some(path), _) => ExperimentConfig::load(path)?,
        (None, Some(name)) => ExperimentConfig::preset(Preset::from_name(name)?),
        (None, None) => return Err(Failure::Usage("sweep needs --config or --preset".into())),
    };
    if let Some(out) = &cli.out {
        cfg.output_dir = out.clone();
    }
    if let Some(seed) = cli.seed {
        cfg.seeds = vec![seed];
    }
    cfg.plot |= cli.plot;
    let jobs = cli.jobs.unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1));
    let summary = experiment::run_preset(&cfg, jobs, cli.force)?;
    println!(
        "{} cells x {} seeds -> {} rows ({} failed) in {}",
        cfg.cells()?.len(),
        cfg.seeds.len(),
        summary.rows.len(),
        summary.failed_cells(),
        cfg.output_dir.display()
    );
    for c in &summary.charts {
        println!("chart {}", c.display());
    }
    match &summary.trend {
        Some(t) => {
            for (label, v) in &t.values {
                println!("  {label}: {v}");
            }
            println!("{}: {}", t.description, if t.holds { "holds" } else { "VIOLATED" });
            if t.holds {
                Ok(())
            } else {
                Err(Failure::Check(format!("trend violated: {}", t.description)))
            }
        }
        None if summary.failed_cells() > 0 => Err(Failure::Check(format!("{} cells failed", summary.failed_cells()))),
        None => Ok(()),
    }
}

fn run_report(dir: &Path) -> CliResult {
    let charts = experiment::rerender_charts(dir)?;
    for c in &charts {
        println!("rendered {}", c.display());
    }
    let rows = experiment::read_summary(dir.join("summary.csv"))?;
    println!("cell,seed,status,rel_srank,final_loss,cosine_kkt,clean_accuracy");
    let opt = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_default();
    for r in &rows {
        println!(
            "{},{},{},{},{},{},{}",
            r.cell,
            r.seed,
            r.status,
            opt(r.rel_srank),
            opt(r.final_loss),
            opt(r.cosine_kkt),
            opt(r.clean_accuracy)
        );
    }
    let failed = rows.iter().filter(|r| r.status != "ok").count();
    if failed > 0 {
        return Err(Failure::Check(format!("{failed} cells failed")));
    }
    Ok(())
}

fn dispatch(cli: &Cli) -> CliResult {
    match &cli.command {
        Command::Generate(a) => {
            let ds = generate(cli, a)?;
            let out = cli.out.clone().ok_or_else(|| Failure::Usage("generate needs --out".into()))?;
            write_text(&out, &dataset::to_text(&ds), cli.force)?;
            println!("wrote n={} d={} to {}", ds.n(), ds.d(), out.display());
            Ok(())
        }
        Command::Certify { data, gamma, require } => {
            let cert = certify(&dataset::load(data)?, *gamma)?;
            print!("{}", cert.render());
            match require.as_deref() {
                Some("thm32") if !cert.thm32_holds => Err(Failure::Check("thm32 hypothesis fails".into())),
                Some("thm42") if !cert.thm42_holds => Err(Failure::Check("thm42 hypothesis fails".into())),
                _ => Ok(()),
            }
        }
        Command::Train(a) => run_train(cli, a),
        Command::Flow(a) => run_flow(cli, a),
        Command::SolveQp { data, net } => {
            let ds = dataset::load(data)?;
            let sol = solve_qp(&ds, net.m1, net.m2, net.gamma)?;
            println!("objective={:e} kkt_residual={:e} iterations={}", sol.objective, sol.kkt_residual, sol.iterations);
            let duals: Vec<String> = sol.duals.iter().map(|v| format!("{v:e}")).collect();
            println!("duals={}", duals.join(","));
            if let Some(out) = &cli.out {
                ensure_writable(out, cli.force)?;
                build_kkt_network(&sol, net.m1, net.m2, net.gamma)?.save(out, Some("qp"))?;
            }
            Ok(())
        }
        Command::SolveSvm { data } => {
            let ds = dataset::load(data)?;
            let s = solve_svm(&ds)?;
            println!("norm={:e} residual={:e} sweeps={}", s.norm(), s.residual, s.sweeps);
            if let Some(out) = &cli.out {
                let mut text = String::from("z\n");
                for v in &s.z {
                    text.push_str(&format!("{v:e}\n"));
                }
                write_text(out, &text, cli.force)?;
            }
            Ok(())
        }
        Command::Verify(a) => run_verify(cli, a),
        Command::Sweep(a) => run_sweep(cli, a),
        Command::Report { dir } => run_report(dir),
    }
}

/// Parses `args` (including the program name), runs, and returns the exit code.
pub fn run_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match dispatch(&cli) {
        Ok(()) => EXIT_OK,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            EXIT_USAGE
        }
        Err(Failure::Check(msg)) => {
            eprintln!("check failed: {msg}");
            EXIT_CHECK_FAILED
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            EXIT_CHECK_FAILED
        }
    }
}
