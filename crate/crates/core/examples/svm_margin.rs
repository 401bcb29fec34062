//! Hard-margin SVM through the origin on a small Gaussian sample.

use leakybias::dataset::GaussianDesign;
use leakybias::margin::solve_svm;

fn main() -> leakybias::error::Result<()> {
    let ds = GaussianDesign::isotropic(40).sample(12, 5)?;
    let svm = solve_svm(&ds)?;
    let margins = svm.margins(&ds);
    let support: Vec<usize> = (0..ds.n()).filter(|&i| svm.alphas[i] > 0.0).collect();
    println!("|z*| = {:.8} after {} sweeps, residual {:.1e}", svm.norm(), svm.sweeps, svm.residual);
    println!("support vectors {support:?}");
    println!("min margin {:.12}", margins.iter().copied().fold(f64::INFINITY, f64::min));
    Ok(())
}
