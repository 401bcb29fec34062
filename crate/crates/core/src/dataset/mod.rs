//! Labeled datasets, generators, the orthogonality certificate and the
//! on-disk format.

mod certificate;
mod generators;
mod io;

use std::sync::OnceLock;

pub use certificate::{certify, OrthogonalityCertificate};
pub use generators::{
    gen_gaussian, gen_mixture, gen_near_orthogonal, gen_xor, GaussianDesign, Mixture,
    NearOrthogonal, NoisyXor,
};
pub use io::{load, parse, save, to_text};

use crate::error::{Error, Result};
use crate::linalg::{axpy, Matrix};

/// Binary-classification sample: rows of `xs` are the inputs, `ys` the ±1
/// labels.
///
/// The Gram matrix of the rows is computed on first use and cached.
#[derive(Clone, Debug)]
pub struct Dataset {
    xs: Matrix,
    ys: Vec<f64>,
    seed: u64,
    meta: String,
    gram: OnceLock<Matrix>,
}

impl PartialEq for Dataset {
    fn eq(&self, other: &Self) -> bool {
        self.seed == other.seed
            && self.meta == other.meta
            && self.ys.len() == other.ys.len()
            && self.ys.iter().zip(&other.ys).all(|(a, b)| a.to_bits() == b.to_bits())
            && self.xs.shape() == other.xs.shape()
            && self
                .xs
                .as_slice()
                .iter()
                .zip(other.xs.as_slice())
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

impl Dataset {
    pub fn new(xs: Matrix, ys: Vec<f64>, seed: u64, meta: impl Into<String>) -> Result<Self> {
        let (n, d) = xs.shape();
        if n == 0 || d == 0 {
            return Err(Error::invalid(format!("dataset must have n >= 1 and d >= 1 (got {n}x{d})")));
        }
        if ys.len() != n {
            return Err(Error::invalid(format!("{} labels for {n} samples", ys.len())));
        }
        if let Some(i) = ys.iter().position(|&y| y != 1.0 && y != -1.0) {
            return Err(Error::invalid(format!("label {i} is {}, expected +1 or -1", ys[i])));
        }
        if let Some(i) = xs.row_iter().position(|r| r.iter().all(|&v| v == 0.0)) {
            return Err(Error::invalid(format!("sample {i} is the zero vector")));
        }
        if !xs.all_finite() {
            return Err(Error::invalid("dataset contains non-finite entries"));
        }
        let meta = meta.into();
        if meta.contains('\n') {
            return Err(Error::invalid("meta string must be a single line"));
        }
        Ok(Self { xs, ys, seed, meta, gram: OnceLock::new() })
    }

    pub fn n(&self) -> usize {
        self.xs.rows()
    }

    pub fn d(&self) -> usize {
        self.xs.cols()
    }

    pub fn xs(&self) -> &Matrix {
        &self.xs
    }

    pub fn x(&self, i: usize) -> &[f64] {
        self.xs.row(i)
    }

    pub fn ys(&self) -> &[f64] {
        &self.ys
    }

    pub fn y(&self, i: usize) -> f64 {
        self.ys[i]
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn meta(&self) -> &str {
        &self.meta
    }

    /// Pairwise inner products `⟨x_i, x_j⟩`.
    pub fn gram(&self) -> &Matrix {
        self.gram.get_or_init(|| self.xs.row_gram())
    }

    pub fn sq_norms(&self) -> Vec<f64> {
        let g = self.gram();
        (0..self.n()).map(|i| g[(i, i)]).collect()
    }

    pub fn r_min(&self) -> f64 {
        self.sq_norms().into_iter().fold(f64::INFINITY, f64::min).sqrt()
    }

    pub fn r_max(&self) -> f64 {
        self.sq_norms().into_iter().fold(0.0, f64::max).sqrt()
    }

    /// `μ̂ = Σ y_i x_i`.
    pub fn mu_hat(&self) -> Vec<f64> {
        let mut mu = vec![0.0; self.d()];
        for (x, &y) in self.xs.row_iter().zip(&self.ys) {
            axpy(y, x, &mut mu);
        }
        mu
    }

    pub fn positives(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.n()).filter(|&i| self.ys[i] > 0.0)
    }

    pub fn negatives(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.n()).filter(|&i| self.ys[i] < 0.0)
    }

    /// Value of a `key=value` token in the meta string.
    pub fn meta_value(&self, key: &str) -> Option<&str> {
        self.meta.split(';').find_map(|tok| tok.strip_prefix(key)?.strip_prefix('='))
    }

    /// Noise-free labels recorded by generators that corrupt labels
    /// (`clean=` token, one `+`/`-` per sample).  Falls back to the observed
    /// labels when absent.
    pub fn clean_labels(&self) -> Vec<f64> {
        match self.meta_value("clean") {
            Some(s) if s.len() == self.n() => {
                s.chars().map(|c| if c == '+' { 1.0 } else { -1.0 }).collect()
            }
            _ => self.ys.clone(),
        }
    }
}

pub(crate) fn encode_labels(ys: &[f64]) -> String {
    ys.iter().map(|&y| if y > 0.0 { '+' } else { '-' }).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> Dataset {
        let xs = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 2.0]]).unwrap();
        Dataset::new(xs, vec![1.0, -1.0], 3, "test;clean=--").unwrap()
    }

    #[test]
    fn rejects_bad_labels_and_zero_rows() {
        let xs = Matrix::from_rows(&[vec![1.0, 0.0]]).unwrap();
        assert!(Dataset::new(xs.clone(), vec![0.5], 0, "").is_err());
        let zero = Matrix::from_rows(&[vec![0.0, 0.0]]).unwrap();
        assert!(Dataset::new(zero, vec![1.0], 0, "").is_err());
        assert!(Dataset::new(xs, vec![1.0, 1.0], 0, "").is_err());
    }

    #[test]
    fn geometry_and_meta() {
        let ds = tiny();
        assert_eq!(ds.r_min(), 1.0);
        assert_eq!(ds.r_max(), 2.0);
        assert_eq!(ds.mu_hat(), vec![1.0, -2.0]);
        assert_eq!(ds.clean_labels(), vec![-1.0, -1.0]);
        assert_eq!(ds.meta_value("clean"), Some("--"));
        assert_eq!(ds.positives().collect::<Vec<_>>(), vec![0]);
    }
}
