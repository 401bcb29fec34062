//! Stable rank and the rank-two residual for a few structured matrices.

use leakybias::analysis::{rank2_residual, stable_rank};
use leakybias::linalg::Matrix;
use leakybias::rng::CounterRng;

fn main() -> leakybias::error::Result<()> {
    let mut g = Matrix::zeros(32, 256);
    CounterRng::new(1, 0).fill_normal(g.as_mut_slice(), 1.0);
    let mut two = Matrix::zeros(32, 256);
    for i in 0..32 {
        let (a, b) = (if i < 16 { 1.0 } else { -0.5 }, i as f64 / 32.0);
        for k in 0..256 {
            two.row_mut(i)[k] = a * g.row(0)[k] + b * g.row(1)[k];
        }
    }
    for (name, w) in [("gaussian 32x256", &g), ("identity 8", &Matrix::identity(8)), ("rank two", &two)] {
        println!("{name:<16} stable rank {:>8.4}  rank-2 residual {:.2e}", stable_rank(w)?, rank2_residual(w)?);
    }
    Ok(())
}
