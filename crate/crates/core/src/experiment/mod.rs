//! Experiment presets and the parallel sweep harness.
//!
//! A config is a TOML file:
//!
//! ```toml
//! preset = "rank_vs_dimension"   # or rank_vs_init, flow_to_kkt, xor_failure, custom
//! seeds = [0, 1, 2, 3, 4]
//! output_dir = "runs/rank_vs_dimension"
//! plot = true
//!
//! [params]        # overrides of the preset's base parameters
//! m = 64
//! steps = 100
//!
//! [grid]          # swept parameters; cells are the cartesian product
//! d = [1024, 4096, 16384]
//! ```
//!
//! Every numeric field of [`Params`] may appear under `[params]` or `[grid]`.
//! `data`, `activation` and `loss` are strings and may only appear under
//! `[params]`.

pub mod plot;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{stable_rank, MonitorSet};
use crate::dataset::{Dataset, GaussianDesign, Mixture, NearOrthogonal, NoisyXor};
use crate::error::{Error, Result};
use crate::margin::{build_kkt_network, solve_qp};
use crate::model::{Activation, LossKind, TwoLayerNet};
use crate::training::{flow_emulate, flow_with, init_weights, train, FlowConfig, InitScheme, TrainConfig};
use plot::LineChart;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    RankVsDimension,
    RankVsInit,
    FlowToKkt,
    XorFailure,
    Custom,
}

impl Preset {
    pub const ALL: [Preset; 5] =
        [Preset::RankVsDimension, Preset::RankVsInit, Preset::FlowToKkt, Preset::XorFailure, Preset::Custom];

    pub fn name(&self) -> &'static str {
        match self {
            Preset::RankVsDimension => "rank_vs_dimension",
            Preset::RankVsInit => "rank_vs_init",
            Preset::FlowToKkt => "flow_to_kkt",
            Preset::XorFailure => "xor_failure",
            Preset::Custom => "custom",
        }
    }

    pub fn from_name(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown preset `{s}`")))
    }

    fn uses_flow(&self) -> bool {
        matches!(self, Preset::FlowToKkt | Preset::XorFailure)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DataKind {
    Mixture,
    Gaussian,
    Xor,
    NearOrthogonal,
}

impl DataKind {
    pub fn name(&self) -> &'static str {
        match self {
            DataKind::Mixture => "mixture",
            DataKind::Gaussian => "gaussian",
            DataKind::Xor => "xor",
            DataKind::NearOrthogonal => "near_orthogonal",
        }
    }

    pub fn from_name(s: &str) -> Result<Self> {
        match s {
            "mixture" => Ok(DataKind::Mixture),
            "gaussian" => Ok(DataKind::Gaussian),
            "xor" => Ok(DataKind::Xor),
            "near_orthogonal" => Ok(DataKind::NearOrthogonal),
            _ => Err(Error::invalid(format!("unknown data kind `{s}`"))),
        }
    }
}

/// Fully specified parameters of one grid cell.
#[derive(Clone, Debug, PartialEq)]
pub struct Params {
    pub data: DataKind,
    pub n: usize,
    pub d: usize,
    /// Exponent in `‖μ‖ = d^beta` (mixture and xor data).
    pub beta: f64,
    pub noise_rate: f64,
    pub radius_ratio: f64,
    /// Overlap as a fraction of the gradient-flow hypothesis limit (near-orthogonal data).
    pub overlap_fraction: f64,
    pub m: usize,
    /// Fraction of neurons with positive output weight.
    pub positive_fraction: f64,
    pub activation: String,
    pub gamma: f64,
    pub loss: LossKind,
    pub alpha: f64,
    pub steps: usize,
    /// Initialization standard deviation in units of `√(2/(m+d))`.
    pub omega_mult: f64,
    pub record_every: usize,
    /// Euler step for flow presets.
    pub eta: f64,
    /// Flow horizon in units of the time the loss first drops below `log(2)/n`.
    pub horizon_mult: f64,
    pub test_n: usize,
}

impl Params {
    pub const NUMERIC: [&'static str; 16] = [
        "n",
        "d",
        "beta",
        "noise_rate",
        "radius_ratio",
        "overlap_fraction",
        "m",
        "positive_fraction",
        "gamma",
        "alpha",
        "steps",
        "omega_mult",
        "record_every",
        "eta",
        "horizon_mult",
        "test_n",
    ];

    pub fn base(preset: Preset) -> Self {
        let gd = Params {
            data: DataKind::Mixture,
            n: 100,
            d: 4096,
            beta: 0.26,
            noise_rate: 0.15,
            radius_ratio: 1.2,
            overlap_fraction: 0.5,
            m: 512,
            positive_fraction: 0.5,
            activation: "smooth".into(),
            gamma: 0.1,
            loss: LossKind::Logistic,
            alpha: 0.01,
            steps: 100,
            omega_mult: 0.02,
            record_every: 5,
            eta: 0.01,
            horizon_mult: 1000.0,
            test_n: 2000,
        };
        match preset {
            Preset::RankVsDimension | Preset::Custom => gd,
            Preset::RankVsInit => Params { d: 10_000, alpha: 0.16, omega_mult: 1.0, ..gd },
            Preset::FlowToKkt => Params {
                data: DataKind::NearOrthogonal,
                n: 8,
                d: 512,
                m: 8,
                activation: "leaky".into(),
                gamma: 0.5,
                loss: LossKind::Exponential,
                omega_mult: 0.02,
                eta: 0.01,
                horizon_mult: 1000.0,
                ..gd
            },
            Preset::XorFailure => Params {
                data: DataKind::Xor,
                n: 20,
                d: 4096,
                beta: 0.3,
                m: 16,
                activation: "leaky".into(),
                gamma: 0.5,
                loss: LossKind::Logistic,
                omega_mult: 0.02,
                eta: 0.002,
                horizon_mult: 100.0,
                ..gd
            },
        }
    }

    pub fn m1(&self) -> usize {
        ((self.m as f64 * self.positive_fraction).round() as usize).clamp(1, self.m.saturating_sub(1).max(1))
    }

    pub fn m2(&self) -> usize {
        self.m - self.m1()
    }

    pub fn omega_tf(&self) -> f64 {
        (2.0 / (self.m + self.d) as f64).sqrt()
    }

    pub fn omega(&self) -> f64 {
        self.omega_mult * self.omega_tf()
    }

    pub fn activation(&self) -> Result<Activation> {
        Activation::from_name(&self.activation, self.gamma)
    }

    pub fn set(&mut self, key: &str, value: f64) -> Result<()> {
        let count = |v: f64| -> Result<usize> {
            if v >= 0.0 && v.fract() == 0.0 && v < 1e15 {
                Ok(v as usize)
            } else {
                Err(Error::invalid(format!("`{key}` must be a nonnegative integer, got {v}")))
            }
        };
        match key {
            "n" => self.n = count(value)?,
            "d" => self.d = count(value)?,
            "beta" => self.beta = value,
            "noise_rate" => self.noise_rate = value,
            "radius_ratio" => self.radius_ratio = value,
            "overlap_fraction" => self.overlap_fraction = value,
            "m" => self.m = count(value)?,
            "positive_fraction" => self.positive_fraction = value,
            "gamma" => self.gamma = value,
            "alpha" => self.alpha = value,
            "steps" => self.steps = count(value)?,
            "omega_mult" => self.omega_mult = value,
            "record_every" => self.record_every = count(value)?,
            "eta" => self.eta = value,
            "horizon_mult" => self.horizon_mult = value,
            "test_n" => self.test_n = count(value)?,
            _ => return Err(Error::invalid(format!("unknown parameter `{key}`"))),
        }
        Ok(())
    }

    fn set_toml(&mut self, key: &str, value: &toml::Value) -> Result<()> {
        match (key, value) {
            ("data", toml::Value::String(s)) => self.data = DataKind::from_name(s)?,
            ("activation", toml::Value::String(s)) => {
                Activation::from_name(s, 0.5)?;
                self.activation = s.clone();
            }
            ("loss", toml::Value::String(s)) => self.loss = LossKind::from_name(s)?,
            (_, toml::Value::Integer(i)) => self.set(key, *i as f64)?,
            (_, toml::Value::Float(f)) => self.set(key, *f)?,
            _ => return Err(Error::invalid(format!("parameter `{key}` has an unsupported value `{value}`"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.m < 2 {
            return Err(Error::invalid("m must be at least 2"));
        }
        if self.n == 0 || self.d == 0 || self.steps == 0 || self.record_every == 0 {
            return Err(Error::invalid("n, d, steps and record_every must be positive"));
        }
        self.activation()?;
        Ok(())
    }

    pub fn dataset(&self, seed: u64) -> Result<Dataset> {
        self.draw(seed, false, self.n)
    }

    pub fn held_out(&self, seed: u64) -> Result<Dataset> {
        self.draw(seed, true, self.test_n)
    }

    fn draw(&self, seed: u64, held_out: bool, n: usize) -> Result<Dataset> {
        macro_rules! draw {
            ($g:expr) => {
                if held_out {
                    $g.sample_held_out(n, seed)
                } else {
                    $g.sample(n, seed)
                }
            };
        }
        match self.data {
            DataKind::Mixture => draw!(Mixture::new(self.d, self.beta, self.noise_rate)?),
            DataKind::Gaussian => draw!(GaussianDesign::isotropic(self.d)),
            DataKind::Xor => draw!(NoisyXor::new(self.d, (self.d as f64).powf(self.beta))?),
            DataKind::NearOrthogonal => {
                let c = NearOrthogonal::overlap_for_flow(self.n, self.radius_ratio, self.gamma, self.overlap_fraction);
                draw!(NearOrthogonal::new(self.d, self.radius_ratio, c)?)
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub preset: Preset,
    pub params: Params,
    /// Swept parameters; order of keys fixes the cell order.
    pub grid: BTreeMap<String, Vec<f64>>,
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
    pub plot: bool,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    preset: String,
    seeds: Option<Vec<u64>>,
    output_dir: Option<PathBuf>,
    plot: Option<bool>,
    params: Option<toml::Table>,
    grid: Option<BTreeMap<String, Vec<f64>>>,
}

impl ExperimentConfig {
    /// The preset with its default grid and five seeds.
    pub fn preset(preset: Preset) -> Self {
        let mut grid = BTreeMap::new();
        match preset {
            Preset::RankVsDimension => {
                grid.insert("d".into(), vec![1024.0, 4096.0, 16384.0]);
            }
            Preset::RankVsInit => {
                grid.insert("omega_mult".into(), vec![1e-2, 1e-1, 1.0, 1e1, 1e2]);
            }
            Preset::FlowToKkt => {
                grid.insert("gamma".into(), vec![0.5]);
            }
            Preset::XorFailure => {
                grid.insert("d".into(), vec![4096.0]);
            }
            Preset::Custom => {
                grid.insert("alpha".into(), vec![0.01]);
            }
        }
        Self {
            preset,
            params: Params::base(preset),
            grid,
            seeds: (0..5).collect(),
            output_dir: PathBuf::from("runs").join(preset.name()),
            plot: true,
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| {
            let loc = e.span().map(|s| format!("offset {}", s.start)).unwrap_or_else(|| "config".into());
            Error::parse(loc, e.message().to_string())
        })?;
        let mut cfg = Self::preset(Preset::from_name(&raw.preset)?);
        if let Some(s) = raw.seeds {
            cfg.seeds = s;
        }
        if let Some(o) = raw.output_dir {
            cfg.output_dir = o;
        }
        if let Some(p) = raw.plot {
            cfg.plot = p;
        }
        for (k, v) in raw.params.unwrap_or_default() {
            cfg.params.set_toml(&k, &v)?;
        }
        if let Some(g) = raw.grid {
            cfg.grid = g;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid.is_empty() || self.grid.values().any(|v| v.is_empty()) {
            return Err(Error::invalid("grid must be nonempty and every swept list nonempty"));
        }
        if self.seeds.is_empty() {
            return Err(Error::invalid("at least one seed is required"));
        }
        for cell in self.cells()? {
            cell.validate()?;
        }
        Ok(())
    }

    /// Cartesian product of the grid, each applied over the base parameters.
    pub fn cells(&self) -> Result<Vec<Params>> {
        let mut cells = vec![self.params.clone()];
        for (key, values) in &self.grid {
            let mut next = Vec::with_capacity(cells.len() * values.len());
            for c in &cells {
                for &v in values {
                    let mut p = c.clone();
                    p.set(key, v)?;
                    next.push(p);
                }
            }
            cells = next;
        }
        Ok(cells)
    }

    /// `key=value` labels matching [`ExperimentConfig::cells`].
    pub fn cell_labels(&self) -> Vec<String> {
        let mut labels = vec![String::new()];
        for (key, values) in &self.grid {
            labels = labels
                .iter()
                .flat_map(|l| {
                    values.iter().map(move |v| {
                        if l.is_empty() {
                            format!("{key}={v}")
                        } else {
                            format!("{l};{key}={v}")
                        }
                    })
                })
                .collect();
        }
        labels
    }
}

/// One row of `summary.csv`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub cell: usize,
    pub seed: u64,
    pub params: String,
    pub status: String,
    pub srank0: Option<f64>,
    pub srank_final: Option<f64>,
    pub rel_srank: Option<f64>,
    pub final_loss: Option<f64>,
    pub threshold_time: Option<f64>,
    pub cosine_kkt: Option<f64>,
    pub clean_accuracy: Option<f64>,
    pub error: String,
}

/// Expected monotone trend or range for a preset, evaluated on seed means.
#[derive(Clone, Debug, PartialEq)]
pub struct TrendCheck {
    pub description: String,
    /// `(cell label, mean metric)` in grid order.
    pub values: Vec<(String, f64)>,
    pub holds: bool,
}

#[derive(Clone, Debug)]
pub struct Summary {
    pub preset: Preset,
    pub rows: Vec<SummaryRow>,
    pub trend: Option<TrendCheck>,
    pub charts: Vec<PathBuf>,
}

impl Summary {
    pub fn failed_cells(&self) -> usize {
        self.rows.iter().filter(|r| r.status != "ok").count()
    }
}

struct CellOutput {
    row: SummaryRow,
    curve: Vec<(f64, f64)>,
}

fn kkt_direction(ds: &Dataset, p: &Params) -> Result<crate::linalg::Matrix> {
    let sol = solve_qp(ds, p.m1(), p.m2(), p.gamma)?;
    Ok(build_kkt_network(&sol, p.m1(), p.m2(), p.gamma)?.into_weights())
}

fn clean_accuracy(net: &TwoLayerNet, test: &Dataset) -> Result<f64> {
    let labels = test.clean_labels();
    let outs = net.outputs(test)?;
    let hits = outs.iter().zip(&labels).filter(|(f, y)| (**f > 0.0) == (**y > 0.0)).count();
    Ok(hits as f64 / test.n() as f64)
}

fn run_descent(p: &Params, seed: u64, trace_path: &Path, row: &mut SummaryRow) -> Result<Vec<(f64, f64)>> {
    let ds = p.dataset(seed)?;
    let cfg = TrainConfig {
        m1: p.m1(),
        m2: p.m2(),
        d: p.d,
        activation: p.activation()?,
        loss: p.loss,
        alpha: p.alpha,
        steps: p.steps,
        init: InitScheme::new(p.omega(), seed)?,
        record_every: p.record_every,
        monitors: MonitorSet { stable_rank: true, ..MonitorSet::none() },
    };
    let trace = train(&cfg, &ds)?;
    trace.write_csv(trace_path)?;
    let s0 = trace.first().monitors.stable_rank.ok_or_else(|| Error::UndefinedInput("stable rank at step 0".into()))?;
    let sf = stable_rank(trace.final_net.weights())?;
    row.srank0 = Some(s0);
    row.srank_final = Some(sf);
    row.rel_srank = Some(sf / s0);
    row.final_loss = Some(trace.last().loss);
    if matches!(p.data, DataKind::Mixture | DataKind::Xor | DataKind::Gaussian) && p.test_n > 0 {
        row.clean_accuracy = Some(clean_accuracy(&trace.final_net, &p.held_out(seed)?)?);
    }
    Ok(trace.rows.iter().filter_map(|r| r.monitors.stable_rank.map(|s| (r.step as f64, s / s0))).collect())
}

fn run_flow(p: &Params, seed: u64, trace_path: &Path, row: &mut SummaryRow, with_kkt: bool) -> Result<Vec<(f64, f64)>> {
    let ds = p.dataset(seed)?;
    let net0 = init_weights(p.m1(), p.m2(), p.d, p.activation()?, &InitScheme::new(p.omega(), seed)?)?;
    let threshold = std::f64::consts::LN_2 / p.n as f64;
    let probe = flow_emulate(net0.clone(), &ds, p.loss, p.eta, p.eta * 1e8, threshold)?;
    let (_, t_star) = probe
        .threshold_hit
        .ok_or_else(|| Error::DegenerateInput("flow never reached the loss threshold".into()))?;
    let t_star = t_star.max(p.eta);
    row.threshold_time = Some(t_star);
    let kkt = if with_kkt { Some(kkt_direction(&ds, p)?) } else { None };
    let horizon = p.horizon_mult * t_star;
    let steps = (horizon / p.eta).ceil() as usize;
    let cfg = FlowConfig {
        loss: p.loss,
        eta: p.eta,
        horizon,
        stop_loss: Some(threshold),
        stop_at_threshold: false,
        record_every: (steps / 50).max(1),
        monitors: MonitorSet { stable_rank: true, ..MonitorSet::none() },
    };
    let mut curve = Vec::new();
    let trace = flow_with(net0, &ds, &cfg, &mut |o| {
        if let Some(k) = &kkt {
            let w = o.net.weights();
            let c = w.inner(k) / (w.frobenius() * k.frobenius());
            curve.push((o.flow_time.unwrap_or(0.0) / t_star, c));
        } else {
            curve.push((o.flow_time.unwrap_or(0.0) / t_star, o.eval.loss));
        }
    })?;
    trace.write_csv(trace_path)?;
    let s0 = trace.first().monitors.stable_rank;
    let sf = stable_rank(trace.final_net.weights())?;
    row.srank0 = s0;
    row.srank_final = Some(sf);
    row.rel_srank = s0.map(|s| sf / s);
    row.final_loss = Some(trace.last().loss);
    if kkt.is_some() {
        row.cosine_kkt = curve.last().map(|c| c.1);
    }
    if p.test_n > 0 && p.data != DataKind::NearOrthogonal {
        row.clean_accuracy = Some(clean_accuracy(&trace.final_net, &p.held_out(seed)?)?);
    }
    Ok(curve)
}

fn run_cell(preset: Preset, p: &Params, cell: usize, label: &str, seed: u64, dir: &Path) -> CellOutput {
    let mut row = SummaryRow { cell, seed, params: label.to_string(), ..SummaryRow::default() };
    let trace_path = dir.join("cells").join(format!("cell{cell:03}_seed{seed}.csv"));
    let result = if preset.uses_flow() {
        run_flow(p, seed, &trace_path, &mut row, preset == Preset::FlowToKkt)
    } else {
        run_descent(p, seed, &trace_path, &mut row)
    };
    match result {
        Ok(curve) => {
            row.status = "ok".into();
            CellOutput { row, curve }
        }
        Err(e) => {
            row.status = "error".into();
            row.error = e.to_string();
            CellOutput { row, curve: Vec::new() }
        }
    }
}

fn prepare_dir(dir: &Path, force: bool) -> Result<()> {
    if dir.exists() {
        let nonempty = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?.next().is_some();
        if nonempty && !force {
            return Err(Error::OutputExists(dir.to_path_buf()));
        }
        if nonempty {
            std::fs::remove_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
    }
    let cells = dir.join("cells");
    std::fs::create_dir_all(&cells).map_err(|e| Error::io(&cells, e))
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (s, k) = xs.fold((0.0, 0usize), |(s, k), x| (s + x, k + 1));
    if k == 0 {
        f64::NAN
    } else {
        s / k as f64
    }
}

/// Averages curves index-wise over seeds (x taken from the first seed).
fn mean_curve(curves: &[&Vec<(f64, f64)>]) -> Vec<(f64, f64)> {
    let len = curves.iter().map(|c| c.len()).min().unwrap_or(0);
    (0..len).map(|i| (curves[0][i].0, mean(curves.iter().map(|c| c[i].1)))).collect()
}

fn evaluate_trend(cfg: &ExperimentConfig, labels: &[String], rows: &[SummaryRow]) -> Option<TrendCheck> {
    let per_cell = |f: fn(&SummaryRow) -> Option<f64>| -> Vec<(String, f64)> {
        labels
            .iter()
            .enumerate()
            .map(|(c, l)| (l.clone(), mean(rows.iter().filter(|r| r.cell == c).filter_map(f))))
            .collect()
    };
    let ordered = |v: &[(String, f64)], up: bool| {
        v.windows(2).all(|w| if up { w[1].1 >= w[0].1 } else { w[1].1 <= w[0].1 }) && v.iter().all(|x| x.1.is_finite())
    };
    let single_axis = cfg.grid.len() == 1;
    match cfg.preset {
        Preset::RankVsDimension if single_axis && cfg.grid.contains_key("d") => {
            let values = per_cell(|r| r.rel_srank);
            let holds = ordered(&values, false);
            Some(TrendCheck { description: "final relative stable rank nonincreasing in d".into(), values, holds })
        }
        Preset::RankVsInit if single_axis && cfg.grid.contains_key("omega_mult") => {
            let values = per_cell(|r| r.rel_srank);
            let holds = ordered(&values, true);
            Some(TrendCheck {
                description: "final relative stable rank nondecreasing in omega".into(),
                values,
                holds,
            })
        }
        Preset::XorFailure => {
            let values = per_cell(|r| r.clean_accuracy);
            let holds = values.iter().all(|v| (v.1 - 0.5).abs() <= 0.05);
            Some(TrendCheck { description: "held-out clean accuracy within 0.5 +- 0.05".into(), values, holds })
        }
        Preset::FlowToKkt => {
            let values = per_cell(|r| r.cosine_kkt);
            let holds = values.iter().all(|v| v.1 >= 0.99);
            Some(TrendCheck { description: "final cosine to the KKT direction >= 0.99".into(), values, holds })
        }
        _ => None,
    }
}

fn chart_for(cfg: &ExperimentConfig) -> LineChart {
    let (title, x, y) = match cfg.preset {
        Preset::FlowToKkt => ("Alignment with the KKT direction", "flow time / threshold time", "cosine"),
        Preset::XorFailure => ("Flow on XOR data", "flow time / threshold time", "training loss"),
        Preset::RankVsDimension => ("Stable rank vs dimension", "step", "stable rank / initial"),
        Preset::RankVsInit => ("Stable rank vs initialization scale", "step", "stable rank / initial"),
        Preset::Custom => ("Stable rank", "step", "stable rank / initial"),
    };
    let mut c = LineChart::new(title, x, y);
    c.log_x = cfg.preset.uses_flow();
    c
}

/// Runs every `(cell, seed)` pair on a pool of `jobs` threads, writes one
/// trace per pair under `cells/`, then `summary.csv` and (if `plot`) a
/// chart CSV and SVG.
pub fn run_preset(cfg: &ExperimentConfig, jobs: usize, force: bool) -> Result<Summary> {
    cfg.validate()?;
    let cells = cfg.cells()?;
    let labels = cfg.cell_labels();
    let dir = &cfg.output_dir;
    prepare_dir(dir, force)?;
    let tasks: Vec<(usize, u64)> =
        (0..cells.len()).flat_map(|c| cfg.seeds.iter().map(move |&s| (c, s))).collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::invalid(format!("thread pool: {e}")))?;
    let outputs: Vec<CellOutput> = pool.install(|| {
        tasks
            .par_iter()
            .map(|&(c, s)| run_cell(cfg.preset, &cells[c], c, &labels[c], s, dir))
            .collect()
    });

    let summary_path = dir.join("summary.csv");
    let mut w = csv::Writer::from_path(&summary_path)?;
    for o in &outputs {
        w.serialize(&o.row)?;
    }
    w.flush().map_err(|e| Error::io(&summary_path, e))?;

    let rows: Vec<SummaryRow> = outputs.iter().map(|o| o.row.clone()).collect();
    let mut charts = Vec::new();
    if cfg.plot {
        let mut chart = chart_for(cfg);
        for (c, label) in labels.iter().enumerate() {
            let curves: Vec<&Vec<(f64, f64)>> =
                outputs.iter().filter(|o| o.row.cell == c && !o.curve.is_empty()).map(|o| &o.curve).collect();
            if !curves.is_empty() {
                let pts = mean_curve(&curves);
                let pts = if chart.log_x { pts.into_iter().filter(|p| p.0 > 0.0).collect() } else { pts };
                chart.push(label.clone(), pts);
            }
        }
        let csv_path = dir.join(format!("{}.chart.csv", cfg.preset.name()));
        std::fs::write(&csv_path, chart.to_csv()).map_err(|e| Error::io(&csv_path, e))?;
        charts.push(plot::render_csv_file(&csv_path)?);
    }
    let trend = evaluate_trend(cfg, &labels, &rows);
    Ok(Summary { preset: cfg.preset, rows, trend, charts })
}

pub fn read_summary(path: impl AsRef<Path>) -> Result<Vec<SummaryRow>> {
    let mut r = csv::Reader::from_path(path.as_ref())?;
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

/// Re-renders every `*.chart.csv` in `dir`; returns the SVG paths.
pub fn rerender_charts(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.to_string_lossy().ends_with(".chart.csv"))
        .collect();
    paths.sort();
    paths.iter().map(|p| plot::render_csv_file(p)).collect()
}
