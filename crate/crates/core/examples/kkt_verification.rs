//! Solve the reduced margin problem, build the rank-two KKT network and run
//! all seven checks on it. Also shows the CSV form of the report.

use leakybias::dataset::{certify, NearOrthogonal};
use leakybias::margin::{build_kkt_network, solve_qp, verify_theorem, KktInput, VerifyOptions};

fn main() -> leakybias::error::Result<()> {
    let (n, d, gamma) = (10, 1024, 0.5);
    let ds = NearOrthogonal::new(d, 1.2, NearOrthogonal::overlap_for_flow(n, 1.2, gamma, 0.5))?.sample(n, 3)?;
    assert!(certify(&ds, gamma)?.thm32_holds);
    let sol = solve_qp(&ds, 6, 2, gamma)?;
    println!("QP: objective {:.6}, residual {:.1e}, {} iterations", sol.objective, sol.kkt_residual, sol.iterations);
    let report = verify_theorem(KktInput::Solution(&sol), &ds, gamma, &VerifyOptions::with_probes(10_000))?;
    print!("{}", report.to_text());
    print!("{}", report.to_csv());

    let net = build_kkt_network(&sol, 6, 2, gamma)?;
    println!("network min margin {:.12}", net.min_margin(&ds)?);
    Ok(())
}
