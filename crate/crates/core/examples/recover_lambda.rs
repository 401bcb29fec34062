//! Recover KKT multipliers from a network by nonnegative least squares.
//! The QP-built network gives back its duals; a random one does not fit.

use leakybias::dataset::NearOrthogonal;
use leakybias::margin::{build_kkt_network, normalize_by_margin, recover_lambda, solve_qp};
use leakybias::model::Activation;
use leakybias::training::{init_weights, InitScheme};

fn main() -> leakybias::error::Result<()> {
    let (n, d, gamma) = (8, 256, 0.5);
    let ds = NearOrthogonal::new(d, 1.2, NearOrthogonal::overlap_for_flow(n, 1.2, gamma, 0.5))?.sample(n, 1)?;
    let sol = solve_qp(&ds, 3, 3, gamma)?;
    let net = build_kkt_network(&sol, 3, 3, gamma)?;
    let rec = recover_lambda(&net, &ds, gamma)?;
    println!("QP duals   {:?}", sol.duals.iter().map(|x| format!("{x:.6}")).collect::<Vec<_>>());
    println!("recovered  {:?}", rec.lambda.iter().map(|x| format!("{x:.6}")).collect::<Vec<_>>());
    println!("residual {:.2e} kkt={}", rec.residual, rec.is_kkt);

    let random = init_weights(3, 3, d, Activation::leaky(gamma)?, &InitScheme::new(1.0, 9)?)?;
    match normalize_by_margin(&random, &ds) {
        Ok(r) => {
            let rec = recover_lambda(&r, &ds, gamma)?;
            println!("random net: residual {:.3} kkt={}", rec.residual, rec.is_kkt);
        }
        Err(e) => println!("random net does not separate the data: {e}"),
    }
    Ok(())
}
