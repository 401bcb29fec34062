//! Synthetic data generators.
//!
//! Every generator is a small distribution value with `sample` (training
//! draw) and `sample_held_out` (independent draw from the same distribution,
//! on disjoint counter streams).

use super::{encode_labels, Dataset};
use crate::error::{Error, Result};
use crate::linalg::{orthonormalize_rows, Matrix};
use crate::rng::{streams, CounterRng};

fn check_shape(n: usize, d: usize) -> Result<()> {
    if n == 0 || d == 0 {
        return Err(Error::invalid(format!("need n >= 1 and d >= 1, got n={n}, d={d}")));
    }
    Ok(())
}

fn fmt_f(x: f64) -> String {
    format!("{x}")
}

/// `x ~ N(0, diag(σ))`, labels uniform and independent of `x`.
#[derive(Clone, Debug)]
pub struct GaussianDesign {
    variances: Vec<f64>,
    isotropic: bool,
}

impl GaussianDesign {
    pub fn isotropic(d: usize) -> Self {
        Self { variances: vec![1.0; d], isotropic: true }
    }

    /// Diagonal covariance; entries must be positive with mean one (trace `d`).
    pub fn diagonal(variances: Vec<f64>) -> Result<Self> {
        if variances.is_empty() {
            return Err(Error::invalid("covariance diagonal is empty"));
        }
        if let Some(v) = variances.iter().find(|v| !(**v > 0.0) || !v.is_finite()) {
            return Err(Error::invalid(format!("variance entry {v} is not positive")));
        }
        let mean = variances.iter().sum::<f64>() / variances.len() as f64;
        if (mean - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!("variances must have mean 1 (trace d), got mean {mean}")));
        }
        Ok(Self { variances, isotropic: false })
    }

    pub fn d(&self) -> usize {
        self.variances.len()
    }

    pub fn sample(&self, n: usize, seed: u64) -> Result<Dataset> {
        self.draw(n, seed, 0)
    }

    pub fn sample_held_out(&self, n: usize, seed: u64) -> Result<Dataset> {
        self.draw(n, seed, streams::HELD_OUT)
    }

    fn draw(&self, n: usize, seed: u64, offset: u32) -> Result<Dataset> {
        let d = self.d();
        check_shape(n, d)?;
        let mut feat = CounterRng::new(seed, streams::FEATURES + offset);
        let mut lab = CounterRng::new(seed, streams::LABELS + offset);
        let scales: Vec<f64> = self.variances.iter().map(|v| v.sqrt()).collect();
        let mut xs = Matrix::zeros(n, d);
        for i in 0..n {
            for (x, s) in xs.row_mut(i).iter_mut().zip(&scales) {
                *x = s * feat.normal();
            }
        }
        let ys = (0..n).map(|_| lab.sign()).collect();
        let cov = if self.isotropic { "identity" } else { "diagonal" };
        Dataset::new(xs, ys, seed, format!("gaussian;sigma={cov}"))
    }
}

pub fn gen_gaussian(n: usize, d: usize, sigma_diag: &[f64], seed: u64) -> Result<Dataset> {
    if sigma_diag.len() != d {
        return Err(Error::invalid(format!("covariance diagonal has length {}, expected {d}", sigma_diag.len())));
    }
    let design = if sigma_diag.iter().all(|&v| v == 1.0) {
        GaussianDesign::isotropic(d)
    } else {
        GaussianDesign::diagonal(sigma_diag.to_vec())?
    };
    design.sample(n, seed)
}

/// Two-cluster mixture `x | y ~ y μ + N(0, I)` with `μ` all-equal positive
/// entries, `‖μ‖ = d^β`, and observed labels flipped with probability
/// `noise_rate`.
#[derive(Clone, Debug)]
pub struct Mixture {
    pub d: usize,
    pub mu_norm: f64,
    pub noise_rate: f64,
    beta: Option<f64>,
}

impl Mixture {
    pub fn new(d: usize, beta: f64, noise_rate: f64) -> Result<Self> {
        if !(beta > 0.0 && beta < 0.5) {
            return Err(Error::invalid(format!("beta must lie in (0, 1/2), got {beta}")));
        }
        let mut m = Self::with_mean_norm(d, (d as f64).powf(beta), noise_rate)?;
        m.beta = Some(beta);
        Ok(m)
    }

    /// Same family parameterized directly by `‖μ‖` (allows `‖μ‖ = 0`).
    pub fn with_mean_norm(d: usize, mu_norm: f64, noise_rate: f64) -> Result<Self> {
        if d == 0 {
            return Err(Error::invalid("d must be positive"));
        }
        if !(0.0..0.5).contains(&noise_rate) {
            return Err(Error::invalid(format!("noise_rate must lie in [0, 1/2), got {noise_rate}")));
        }
        if !(mu_norm >= 0.0 && mu_norm.is_finite()) {
            return Err(Error::invalid(format!("mean norm must be finite and nonnegative, got {mu_norm}")));
        }
        Ok(Self { d, mu_norm, noise_rate, beta: None })
    }

    pub fn mean_entry(&self) -> f64 {
        self.mu_norm / (self.d as f64).sqrt()
    }

    pub fn mean(&self) -> Vec<f64> {
        vec![self.mean_entry(); self.d]
    }

    pub fn sample(&self, n: usize, seed: u64) -> Result<Dataset> {
        self.draw(n, seed, 0)
    }

    pub fn sample_held_out(&self, n: usize, seed: u64) -> Result<Dataset> {
        self.draw(n, seed, streams::HELD_OUT)
    }

    fn draw(&self, n: usize, seed: u64, offset: u32) -> Result<Dataset> {
        check_shape(n, self.d)?;
        let mut feat = CounterRng::new(seed, streams::FEATURES + offset);
        let mut lab = CounterRng::new(seed, streams::LABELS + offset);
        let mut flip = CounterRng::new(seed, streams::LABEL_NOISE + offset);
        let mu = self.mean_entry();
        let mut xs = Matrix::zeros(n, self.d);
        let mut clean = Vec::with_capacity(n);
        let mut ys = Vec::with_capacity(n);
        for i in 0..n {
            let y = lab.sign();
            for x in xs.row_mut(i) {
                *x = y * mu + feat.normal();
            }
            clean.push(y);
            ys.push(if flip.bernoulli(self.noise_rate) { -y } else { y });
        }
        let beta = self.beta.map_or_else(|| "none".to_string(), fmt_f);
        let meta = format!(
            "mixture;beta={beta};mu_norm={};noise_rate={};clean={}",
            fmt_f(self.mu_norm),
            fmt_f(self.noise_rate),
            encode_labels(&clean)
        );
        Dataset::new(xs, ys, seed, meta)
    }
}

pub fn gen_mixture(n: usize, d: usize, beta: f64, noise_rate: f64, seed: u64) -> Result<Dataset> {
    Mixture::new(d, beta, noise_rate)?.sample(n, seed)
}

/// Noisy 2-xor: `x = z + ξ` with `z` uniform on `{±μ₁, ±μ₂}`,
/// `μ₁ = ‖μ‖ e₁`, `μ₂ = ‖μ‖ e₂`, `ξ ~ N(0, s² I)`, and
/// `y = sign(|⟨μ₁, x⟩| − |⟨μ₂, x⟩|)` with `sign(0) = −1`.
#[derive(Clone, Debug)]
pub struct NoisyXor {
    pub d: usize,
    pub mu_norm: f64,
    /// Standard deviation of the additive noise; 1 for the real distribution,
    /// 0 to inspect the noise-free labeling rule.
    pub noise_scale: f64,
}

impl NoisyXor {
    pub fn new(d: usize, mu_norm: f64) -> Result<Self> {
        if d < 2 {
            return Err(Error::invalid(format!("xor data needs d >= 2, got {d}")));
        }
        if !(mu_norm > 0.0 && mu_norm.is_finite()) {
            return Err(Error::invalid(format!("mu_norm must be positive, got {mu_norm}")));
        }
        Ok(Self { d, mu_norm, noise_scale: 1.0 })
    }

    pub fn without_noise(mut self) -> Self {
        self.noise_scale = 0.0;
        self
    }

    pub fn centers(&self) -> (Vec<f64>, Vec<f64>) {
        let mut mu1 = vec![0.0; self.d];
        let mut mu2 = vec![0.0; self.d];
        mu1[0] = self.mu_norm;
        mu2[1] = self.mu_norm;
        (mu1, mu2)
    }

    pub fn label(&self, x: &[f64]) -> f64 {
        let a = (self.mu_norm * x[0]).abs();
        let b = (self.mu_norm * x[1]).abs();
        if a - b > 0.0 {
            1.0
        } else {
            -1.0
        }
    }

    pub fn sample(&self, n: usize, seed: u64) -> Result<Dataset> {
        self.draw(n, seed, 0)
    }

    pub fn sample_held_out(&self, n: usize, seed: u64) -> Result<Dataset> {
        self.draw(n, seed, streams::HELD_OUT)
    }

    fn draw(&self, n: usize, seed: u64, offset: u32) -> Result<Dataset> {
        check_shape(n, self.d)?;
        let mut feat = CounterRng::new(seed, streams::FEATURES + offset);
        let mut centers = CounterRng::new(seed, streams::MIXTURE_CENTERS + offset);
        let mut xs = Matrix::zeros(n, self.d);
        let mut ys = Vec::with_capacity(n);
        for i in 0..n {
            let pick = centers.next_u64() >> 62;
            let axis = (pick & 1) as usize;
            let sign = if pick & 2 == 0 { 1.0 } else { -1.0 };
            let row = xs.row_mut(i);
            for x in row.iter_mut() {
                *x = self.noise_scale * feat.normal();
            }
            row[axis] += sign * self.mu_norm;
            ys.push(self.label(row));
        }
        let meta = format!("xor;mu_norm={};noise_scale={}", fmt_f(self.mu_norm), fmt_f(self.noise_scale));
        Dataset::new(xs, ys, seed, meta)
    }
}

pub fn gen_xor(n: usize, d: usize, mu_norm: f64, seed: u64) -> Result<Dataset> {
    NoisyXor::new(d, mu_norm)?.sample(n, seed)
}

/// Gaussian rows made orthonormal, rescaled to norms in `[√d, R√d]`, and
/// tilted by a shared unit direction `q₀`:
/// `x_i = r_i (√(1−c²) q_i + c s_i q₀)` with random signs `s_i`.
///
/// Pairwise inner products are `r_i r_j c² s_i s_j`, so the overlap `c`
/// dials `max_{i≠j} |⟨x_i, x_j⟩|` directly.  Requires `d > n`.
#[derive(Clone, Debug)]
pub struct NearOrthogonal {
    pub d: usize,
    pub radius_ratio: f64,
    pub overlap: f64,
}

impl NearOrthogonal {
    pub fn new(d: usize, radius_ratio: f64, overlap: f64) -> Result<Self> {
        if !(radius_ratio >= 1.0 && radius_ratio.is_finite()) {
            return Err(Error::invalid(format!("radius ratio must be >= 1, got {radius_ratio}")));
        }
        if !(0.0..1.0).contains(&overlap) {
            return Err(Error::invalid(format!("overlap must lie in [0, 1), got {overlap}")));
        }
        Ok(Self { d, radius_ratio, overlap })
    }

    /// Overlap putting `p` at `fraction` of the gradient-flow hypothesis limit.
    pub fn overlap_for_flow(n: usize, radius_ratio: f64, gamma: f64, fraction: f64) -> f64 {
        (fraction * gamma.powi(3) / (3.0 * radius_ratio.powi(4) * n as f64)).sqrt()
    }

    /// Overlap putting `p` at `fraction` of the gradient-descent hypothesis limit.
    pub fn overlap_for_descent(n: usize, radius_ratio: f64, gamma: f64, fraction: f64) -> f64 {
        let c_r = super::certificate::c_r(radius_ratio, gamma);
        (fraction * gamma.powi(2) / (5.0 * c_r * n as f64 * radius_ratio.powi(2))).sqrt()
    }

    pub fn sample(&self, n: usize, seed: u64) -> Result<Dataset> {
        self.draw(n, seed, 0)
    }

    pub fn sample_held_out(&self, n: usize, seed: u64) -> Result<Dataset> {
        self.draw(n, seed, streams::HELD_OUT)
    }

    fn draw(&self, n: usize, seed: u64, offset: u32) -> Result<Dataset> {
        check_shape(n, self.d)?;
        if self.d <= n {
            return Err(Error::invalid(format!("near-orthogonal data needs d > n (d={}, n={n})", self.d)));
        }
        let d = self.d;
        let mut feat = CounterRng::new(seed, streams::FEATURES + offset);
        let mut lab = CounterRng::new(seed, streams::LABELS + offset);
        let mut norms = CounterRng::new(seed, streams::NORMS + offset);
        let mut basis = Matrix::zeros(n + 1, d);
        feat.fill_normal(basis.as_mut_slice(), 1.0);
        orthonormalize_rows(&mut basis)?;
        let c = self.overlap;
        let a = (1.0 - c * c).sqrt();
        let base = (d as f64).sqrt();
        let mut xs = Matrix::zeros(n, d);
        for i in 0..n {
            let r = base * (1.0 + (self.radius_ratio - 1.0) * norms.uniform());
            let s = norms.sign();
            let shared = basis.row(0).to_vec();
            let own = basis.row(i + 1);
            for ((x, q), q0) in xs.row_mut(i).iter_mut().zip(own).zip(&shared) {
                *x = r * (a * q + c * s * q0);
            }
        }
        let ys = (0..n).map(|_| lab.sign()).collect();
        let meta = format!(
            "near_orthogonal;radius_ratio={};overlap={}",
            fmt_f(self.radius_ratio),
            fmt_f(self.overlap)
        );
        Dataset::new(xs, ys, seed, meta)
    }
}

pub fn gen_near_orthogonal(
    n: usize,
    d: usize,
    radius_ratio: f64,
    overlap: f64,
    seed: u64,
) -> Result<Dataset> {
    NearOrthogonal::new(d, radius_ratio, overlap)?.sample(n, seed)
}
