//! The three-point instance where the KKT direction is not the max-margin
//! linear separator: the QP duals match the closed form, and `‖z‖` exceeds
//! `‖z*‖` while staying under the norm bound.

use leakybias::dataset::certify;
use leakybias::linalg::dot;
use leakybias::margin::{counterexample, solve_qp, solve_svm};

fn main() -> leakybias::error::Result<()> {
    for eps in [1e-3, 1e-2, 1.0 / 72.0] {
        let cx = counterexample(eps)?;
        let sol = solve_qp(&cx.dataset, 2, 2, cx.gamma)?;
        let z = sol.z();
        let svm = solve_svm(&cx.dataset)?;
        println!(
            "eps={eps:.5} certified={} lambda={:?} (closed form {:?})",
            certify(&cx.dataset, cx.gamma)?.thm32_holds,
            sol.duals.iter().map(|l| format!("{l:.10}")).collect::<Vec<_>>(),
            cx.lambda
        );
        println!(
            "  z.x2={:.10} z.x3={:.10}  |z|={:.6} |z*|={:.6}",
            dot(&z, cx.dataset.x(1)),
            dot(&z, cx.dataset.x(2)),
            dot(&z, &z).sqrt(),
            svm.norm()
        );
    }
    Ok(())
}
