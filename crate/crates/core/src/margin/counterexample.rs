//! Three-point instance on which the KKT predictor `z` is not the
//! max-margin direction.

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::linalg::Matrix;

pub const COUNTEREXAMPLE_GAMMA: f64 = 0.5;

#[derive(Clone, Debug)]
pub struct Counterexample {
    pub epsilon: f64,
    pub gamma: f64,
    pub dataset: Dataset,
    /// Closed-form duals `(8/(4ε+5), 8/(4ε+5), 8/5)`.
    pub lambda: [f64; 3],
    /// `z = 6/(4ε+5) (x₂ − x₁) + (6/5) x₃`.
    pub z: Vec<f64>,
    /// `zᵀx₂ = 6(ε+1)/(4ε+5)`.
    pub z_x2: f64,
    /// `zᵀx₃ = 6/5`.
    pub z_x3: f64,
}

/// `x₁ = (−1, 0, 0)`, `x₂ = (ε, √(1−ε²), 0)`, `x₃ = (0, 0, 1)`,
/// `y = (−1, +1, +1)`, leak `γ = ½`, any `m1 = m2`.
pub fn counterexample(epsilon: f64) -> Result<Counterexample> {
    if !(epsilon > 0.0 && epsilon <= 1.0 / 72.0) {
        return Err(Error::invalid(format!("epsilon must lie in (0, 1/72], got {epsilon}")));
    }
    let e = epsilon;
    let x1 = vec![-1.0, 0.0, 0.0];
    let x2 = vec![e, (1.0 - e * e).sqrt(), 0.0];
    let x3 = vec![0.0, 0.0, 1.0];
    let c = 6.0 / (4.0 * e + 5.0);
    let z: Vec<f64> = (0..3).map(|k| c * (x2[k] - x1[k]) + 1.2 * x3[k]).collect();
    let xs = Matrix::from_rows(&[x1, x2, x3])?;
    let dataset = Dataset::new(xs, vec![-1.0, 1.0, 1.0], 0, format!("counterexample;epsilon={e:e}"))?;
    let l = 8.0 / (4.0 * e + 5.0);
    Ok(Counterexample {
        epsilon,
        gamma: COUNTEREXAMPLE_GAMMA,
        dataset,
        lambda: [l, l, 1.6],
        z,
        z_x2: 6.0 * (e + 1.0) / (4.0 * e + 5.0),
        z_x3: 1.2,
    })
}
