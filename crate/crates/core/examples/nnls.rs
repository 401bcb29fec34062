//! Nonnegative least squares on a small overdetermined system.

use leakybias::linalg::Matrix;
use leakybias::margin::nnls;

fn main() -> leakybias::error::Result<()> {
    let a = Matrix::from_rows(&[vec![1.0, 0.0, 1.0], vec![0.0, 1.0, 1.0], vec![1.0, 1.0, 0.0], vec![1.0, 2.0, 1.0]])?;
    let b = [1.0, -2.0, 0.5, 0.0];
    let sol = nnls(&a, &b)?;
    println!("x = {:?}", sol.x);
    println!("|Ax - b| = {:.6} after {} iterations", sol.residual_norm, sol.iterations);
    Ok(())
}
