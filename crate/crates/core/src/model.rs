//! Two-layer networks `f(x; W) = Σ_j a_j φ(⟨w_j, x⟩)` with a fixed second
//! layer `a_j = ±1/√m`, plus the two classification losses.
//!
//! Rows `0..m1` of `W` are the positive neurons and rows `m1..m` the negative
//! ones.

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::linalg::{axpy, dot, Matrix};

const LN_2: f64 = std::f64::consts::LN_2;

/// `log(1 + e^z)` without overflow.
#[inline]
pub fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

/// Logistic function `1/(1 + e^{-z})`.
#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Activation {
    /// `max(γz, z)`; the derivative at 0 is taken to be `γ`.
    LeakyRelu { gamma: f64 },
    /// `γz + (1−γ) log((1 + e^z)/2)`.
    SmoothLeaky { gamma: f64 },
}

/// Value, first and (when it exists) second derivative of an activation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ActValue {
    pub value: f64,
    pub deriv: f64,
    pub second: Option<f64>,
}

impl Activation {
    pub fn leaky(gamma: f64) -> Result<Self> {
        check_gamma(gamma)?;
        Ok(Activation::LeakyRelu { gamma })
    }

    pub fn smooth(gamma: f64) -> Result<Self> {
        check_gamma(gamma)?;
        Ok(Activation::SmoothLeaky { gamma })
    }

    pub fn gamma(&self) -> f64 {
        match *self {
            Activation::LeakyRelu { gamma } | Activation::SmoothLeaky { gamma } => gamma,
        }
    }

    /// Bound `H` on `|φ''|`; `None` for the nonsmooth leaky ReLU.
    pub fn smoothness(&self) -> Option<f64> {
        match self {
            Activation::LeakyRelu { .. } => None,
            Activation::SmoothLeaky { .. } => Some(0.25),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Activation::LeakyRelu { .. } => "leaky",
            Activation::SmoothLeaky { .. } => "smooth",
        }
    }

    pub fn from_name(name: &str, gamma: f64) -> Result<Self> {
        match name {
            "leaky" => Self::leaky(gamma),
            "smooth" => Self::smooth(gamma),
            other => Err(Error::invalid(format!("unknown activation `{other}` (expected leaky|smooth)"))),
        }
    }

    #[inline]
    pub fn value(&self, z: f64) -> f64 {
        match *self {
            Activation::LeakyRelu { gamma } => {
                if z > 0.0 {
                    z
                } else {
                    gamma * z
                }
            }
            Activation::SmoothLeaky { gamma } => gamma * z + (1.0 - gamma) * (softplus(z) - LN_2),
        }
    }

    #[inline]
    pub fn deriv(&self, z: f64) -> f64 {
        match *self {
            Activation::LeakyRelu { gamma } => {
                if z > 0.0 {
                    1.0
                } else {
                    gamma
                }
            }
            Activation::SmoothLeaky { gamma } => gamma + (1.0 - gamma) * sigmoid(z),
        }
    }

    pub fn eval(&self, z: f64) -> ActValue {
        let second = match *self {
            Activation::LeakyRelu { .. } => None,
            Activation::SmoothLeaky { gamma } => {
                let s = sigmoid(z);
                Some((1.0 - gamma) * s * (1.0 - s))
            }
        };
        ActValue { value: self.value(z), deriv: self.deriv(z), second }
    }
}

fn check_gamma(gamma: f64) -> Result<()> {
    if gamma > 0.0 && gamma <= 1.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!("leak gamma must lie in (0, 1], got {gamma}")))
    }
}

pub fn act_eval(a: Activation, z: f64) -> (f64, f64, Option<f64>) {
    let v = a.eval(z);
    (v.value, v.deriv, v.second)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LossKind {
    /// `e^{-q}`
    Exponential,
    /// `log(1 + e^{-q})`
    Logistic,
}

impl LossKind {
    #[inline]
    pub fn value(&self, q: f64) -> f64 {
        match self {
            LossKind::Exponential => (-q).exp(),
            LossKind::Logistic => softplus(-q),
        }
    }

    /// `g(q) = −ℓ'(q)`; for the logistic loss this is `1/(1 + e^q)`.
    #[inline]
    pub fn g(&self, q: f64) -> f64 {
        match self {
            LossKind::Exponential => (-q).exp(),
            LossKind::Logistic => sigmoid(-q),
        }
    }

    /// `log g(q)`, finite for any finite `q`.
    #[inline]
    pub fn log_g(&self, q: f64) -> f64 {
        match self {
            LossKind::Exponential => -q,
            LossKind::Logistic => -softplus(q),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            LossKind::Exponential => "exponential",
            LossKind::Logistic => "logistic",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "exponential" | "exp" => Ok(LossKind::Exponential),
            "logistic" => Ok(LossKind::Logistic),
            other => Err(Error::invalid(format!("unknown loss `{other}` (expected exponential|logistic)"))),
        }
    }
}

/// Loss, sigmoid risk, margins and gradient from one pass over the data.
#[derive(Clone, Debug)]
pub struct Evaluation {
    /// `y_i f(x_i; W)`
    pub margins: Vec<f64>,
    pub loss: f64,
    /// `(1/n) Σ g(y_i f(x_i; W))` with `g = −ℓ'` of the loss in use.
    pub risk: f64,
    pub grad: Matrix,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TwoLayerNet {
    m1: usize,
    m2: usize,
    activation: Activation,
    w: Matrix,
}

impl TwoLayerNet {
    pub fn new(m1: usize, m2: usize, activation: Activation, w: Matrix) -> Result<Self> {
        if m1 == 0 || m2 == 0 {
            return Err(Error::invalid(format!("need m1 >= 1 and m2 >= 1, got m1={m1}, m2={m2}")));
        }
        if w.rows() != m1 + m2 {
            return Err(Error::invalid(format!("weight matrix has {} rows, expected m1+m2={}", w.rows(), m1 + m2)));
        }
        if w.cols() == 0 {
            return Err(Error::invalid("input dimension must be positive"));
        }
        Ok(Self { m1, m2, activation, w })
    }

    pub fn zeros(m1: usize, m2: usize, d: usize, activation: Activation) -> Result<Self> {
        Self::new(m1, m2, activation, Matrix::zeros(m1 + m2, d))
    }

    pub fn m(&self) -> usize {
        self.m1 + self.m2
    }

    pub fn m1(&self) -> usize {
        self.m1
    }

    pub fn m2(&self) -> usize {
        self.m2
    }

    pub fn d(&self) -> usize {
        self.w.cols()
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn weights(&self) -> &Matrix {
        &self.w
    }

    pub fn weights_mut(&mut self) -> &mut Matrix {
        &mut self.w
    }

    pub fn into_weights(self) -> Matrix {
        self.w
    }

    pub fn with_weights(&self, w: Matrix) -> Result<Self> {
        if w.shape() != self.w.shape() {
            return Err(Error::invalid("weight shape mismatch"));
        }
        Ok(Self { w, ..self.clone() })
    }

    /// Sign of `a_j` (its magnitude is always `1/√m`).
    #[inline]
    pub fn sign(&self, j: usize) -> f64 {
        if j < self.m1 {
            1.0
        } else {
            -1.0
        }
    }

    pub fn a(&self, j: usize) -> f64 {
        self.sign(j) / (self.m() as f64).sqrt()
    }

    pub fn scaled(&self, beta: f64) -> Self {
        Self { w: self.w.scaled(beta), ..self.clone() }
    }

    fn check_dim(&self, d: usize) -> Result<()> {
        if d != self.d() {
            return Err(Error::invalid(format!("input has dimension {d}, network expects {}", self.d())));
        }
        Ok(())
    }

    pub fn forward(&self, x: &[f64]) -> Result<f64> {
        self.check_dim(x.len())?;
        Ok(self.output_of(x))
    }

    fn output_of(&self, x: &[f64]) -> f64 {
        let mut pos = 0.0;
        let mut neg = 0.0;
        for (j, w) in self.w.row_iter().enumerate() {
            let v = self.activation.value(dot(w, x));
            if j < self.m1 {
                pos += v;
            } else {
                neg += v;
            }
        }
        (pos - neg) / (self.m() as f64).sqrt()
    }

    /// `m × n` matrix of preactivations `⟨w_j, x_i⟩`.
    pub fn preactivations(&self, xs: &Matrix) -> Matrix {
        let n = xs.rows();
        let rows: Vec<f64> = (0..self.m())
            .into_par_iter()
            .flat_map_iter(|j| {
                let w = self.w.row(j);
                (0..n).map(move |i| dot(w, xs.row(i)))
            })
            .collect();
        Matrix::from_vec(self.m(), n, rows).expect("shape")
    }

    fn outputs_from(&self, pre: &Matrix) -> Vec<f64> {
        let n = pre.cols();
        let mut out = vec![0.0; n];
        let mut neg = vec![0.0; n];
        for j in 0..self.m() {
            let acc = if j < self.m1 { &mut out } else { &mut neg };
            for (a, &z) in acc.iter_mut().zip(pre.row(j)) {
                *a += self.activation.value(z);
            }
        }
        let s = 1.0 / (self.m() as f64).sqrt();
        out.iter().zip(&neg).map(|(p, q)| (p - q) * s).collect()
    }

    pub fn outputs(&self, ds: &Dataset) -> Result<Vec<f64>> {
        self.check_dim(ds.d())?;
        Ok(self.outputs_from(&self.preactivations(ds.xs())))
    }

    /// `y_i f(x_i; W)` for every sample.
    pub fn margins(&self, ds: &Dataset) -> Result<Vec<f64>> {
        let f = self.outputs(ds)?;
        Ok(f.iter().zip(ds.ys()).map(|(f, y)| f * y).collect())
    }

    pub fn min_margin(&self, ds: &Dataset) -> Result<f64> {
        Ok(self.margins(ds)?.into_iter().fold(f64::INFINITY, f64::min))
    }

    pub fn empirical_loss(&self, ds: &Dataset, loss: LossKind) -> Result<f64> {
        let q = self.margins(ds)?;
        Ok(q.iter().map(|&q| loss.value(q)).sum::<f64>() / q.len() as f64)
    }

    /// Mean of `g = −ℓ'` over the samples.
    pub fn risk(&self, ds: &Dataset, loss: LossKind) -> Result<f64> {
        let q = self.margins(ds)?;
        Ok(q.iter().map(|&q| loss.g(q)).sum::<f64>() / q.len() as f64)
    }

    /// Sigmoid risk `Ĝ(W)`.
    pub fn sigmoid_risk(&self, ds: &Dataset) -> Result<f64> {
        self.risk(ds, LossKind::Logistic)
    }

    pub fn grad(&self, ds: &Dataset, loss: LossKind) -> Result<Matrix> {
        Ok(self.evaluate(ds, loss)?.grad)
    }

    /// Loss, risk, margins and `∇_W L̂`.
    ///
    /// Row `j` of the gradient is `(a_j/n) Σ_i ℓ'(q_i) y_i φ'(⟨w_j,x_i⟩) x_i`;
    /// each row is reduced sequentially over `i`, so the result does not
    /// depend on the thread count.
    pub fn evaluate(&self, ds: &Dataset, loss: LossKind) -> Result<Evaluation> {
        self.check_dim(ds.d())?;
        let n = ds.n();
        let pre = self.preactivations(ds.xs());
        let f = self.outputs_from(&pre);
        let margins: Vec<f64> = f.iter().zip(ds.ys()).map(|(f, y)| f * y).collect();
        let nf = n as f64;
        let loss_val = margins.iter().map(|&q| loss.value(q)).sum::<f64>() / nf;
        let gs: Vec<f64> = margins.iter().map(|&q| loss.g(q)).collect();
        let risk = gs.iter().sum::<f64>() / nf;
        // ℓ'(q_i) y_i / n
        let coef: Vec<f64> = gs.iter().zip(ds.ys()).map(|(g, y)| -g * y / nf).collect();
        let inv_sqrt_m = 1.0 / (self.m() as f64).sqrt();
        let d = self.d();
        let data: Vec<f64> = (0..self.m())
            .into_par_iter()
            .flat_map_iter(|j| {
                let mut row = vec![0.0; d];
                let aj = self.sign(j) * inv_sqrt_m;
                for i in 0..n {
                    let c = coef[i] * aj * self.activation.deriv(pre[(j, i)]);
                    if c != 0.0 {
                        axpy(c, ds.x(i), &mut row);
                    }
                }
                row
            })
            .collect();
        let grad = Matrix::from_vec(self.m(), d, data)?;
        Ok(Evaluation { margins, loss: loss_val, risk, grad })
    }

    /// `∇_W f(x; W)`, whose row `j` is `a_j φ'(⟨w_j,x⟩) x`.
    pub fn output_grad(&self, x: &[f64]) -> Result<Matrix> {
        self.check_dim(x.len())?;
        let mut g = Matrix::zeros(self.m(), self.d());
        let inv_sqrt_m = 1.0 / (self.m() as f64).sqrt();
        for j in 0..self.m() {
            let c = self.sign(j) * inv_sqrt_m * self.activation.deriv(dot(self.w.row(j), x));
            axpy(c, x, g.row_mut(j));
        }
        Ok(g)
    }

    /// Checkpoint text (`meta` is written as a trailing header token).
    pub fn to_text(&self, meta: Option<&str>) -> String {
        let mut out = String::new();
        let _ = write!(
            out,
            "{NET_MAGIC} m1={} m2={} gamma={} act={}",
            self.m1,
            self.m2,
            self.activation.gamma(),
            self.activation.name()
        );
        if let Some(meta) = meta {
            let _ = write!(out, " meta={meta}");
        }
        out.push('\n');
        for row in self.w.row_iter() {
            let cells: Vec<String> = row.iter().map(|v| format!("{v:.16e}")).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }

    /// Parses a checkpoint, returning the network and its optional meta token.
    pub fn parse(text: &str) -> Result<(Self, Option<String>)> {
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| Error::parse("line 1, offset 0", "empty file"))?;
        let rest = header
            .strip_prefix(NET_MAGIC)
            .ok_or_else(|| Error::parse("line 1, offset 0", format!("expected `{NET_MAGIC}`")))?;
        let (mut m1, mut m2, mut gamma, mut act, mut meta) = (None, None, None, None, None);
        let mut offset = NET_MAGIC.len();
        let mut toks = rest.split(' ').filter(|t| !t.is_empty()).peekable();
        while let Some(tok) = toks.next() {
            let loc = format!("line 1, offset {offset}");
            offset += tok.len() + 1;
            let (k, v) = tok.split_once('=').ok_or_else(|| Error::parse(&loc, format!("bad token `{tok}`")))?;
            let bad = |what: &str| Error::parse(&loc, format!("bad {what} `{v}`"));
            match k {
                "m1" => m1 = Some(v.parse::<usize>().map_err(|_| bad("m1"))?),
                "m2" => m2 = Some(v.parse::<usize>().map_err(|_| bad("m2"))?),
                "gamma" => gamma = Some(v.parse::<f64>().map_err(|_| bad("gamma"))?),
                "act" => act = Some(v.to_string()),
                "meta" => {
                    let mut s = v.to_string();
                    for t in toks.by_ref() {
                        s.push(' ');
                        s.push_str(t);
                    }
                    meta = Some(s);
                }
                _ => return Err(Error::parse(&loc, format!("unknown header key `{k}`"))),
            }
        }
        let missing = |k: &str| Error::parse("line 1", format!("missing `{k}=`"));
        let m1 = m1.ok_or_else(|| missing("m1"))?;
        let m2 = m2.ok_or_else(|| missing("m2"))?;
        let gamma = gamma.ok_or_else(|| missing("gamma"))?;
        let act = act.ok_or_else(|| missing("act"))?;
        let activation = Activation::from_name(&act, gamma).map_err(|e| Error::parse("line 1", e.to_string()))?;
        let m = m1 + m2;
        let mut data = Vec::new();
        let mut d = None;
        for j in 0..m {
            let lineno = j + 2;
            let line = lines
                .next()
                .ok_or_else(|| Error::parse(format!("line {lineno}, offset 0"), format!("expected {m} weight rows")))?;
            let mut col = 0;
            let mut count = 0;
            for field in line.split(',') {
                let v: f64 = field
                    .trim()
                    .parse()
                    .map_err(|_| Error::parse(format!("line {lineno}, offset {col}"), format!("bad number `{field}`")))?;
                data.push(v);
                col += field.len() + 1;
                count += 1;
            }
            match d {
                None => d = Some(count),
                Some(d) if d != count => {
                    return Err(Error::parse(format!("line {lineno}, offset 0"), format!("expected {d} columns, found {count}")))
                }
                _ => {}
            }
        }
        let d = d.unwrap_or(0);
        let w = Matrix::from_vec(m, d, data)?;
        let net = Self::new(m1, m2, activation, w).map_err(|e| Error::parse("content", e.to_string()))?;
        Ok((net, meta))
    }

    pub fn save(&self, path: impl AsRef<Path>, meta: Option<&str>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_text(meta)).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<(Self, Option<String>)> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }
}

const NET_MAGIC: &str = "#leakybias-net v1";

pub fn forward(net: &TwoLayerNet, x: &[f64]) -> Result<f64> {
    net.forward(x)
}

pub fn empirical_loss(net: &TwoLayerNet, ds: &Dataset, loss: LossKind) -> Result<f64> {
    net.empirical_loss(ds, loss)
}

pub fn sigmoid_risk(net: &TwoLayerNet, ds: &Dataset) -> Result<f64> {
    net.sigmoid_risk(ds)
}

pub fn grad(net: &TwoLayerNet, ds: &Dataset, loss: LossKind) -> Result<Matrix> {
    net.grad(ds, loss)
}
