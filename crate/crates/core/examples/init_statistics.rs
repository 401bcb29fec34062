//! Initialization at the derived scale and its concentration statistics:
//! neuron norms, projections on the class-mean direction, spectral norm.

use leakybias::analysis::stable_rank;
use leakybias::dataset::{certify, NearOrthogonal};
use leakybias::model::Activation;
use leakybias::training::{derive_budget, init_statistics, init_weights, InitScheme};

fn main() -> leakybias::error::Result<()> {
    let (n, d, m, gamma, delta) = (16, 2048, 64, 0.5, 0.05);
    let ds = NearOrthogonal::new(d, 1.2, NearOrthogonal::overlap_for_descent(n, 1.2, gamma, 0.5))?.sample(n, 2)?;
    let budget = derive_budget(&certify(&ds, gamma)?, m, d, delta, 0.25)?;
    let omega = budget.omega_max(budget.alpha_max);
    let net = init_weights(m / 2, m / 2, d, Activation::smooth(gamma)?, &InitScheme::new(omega, 0)?)?;
    let stats = init_statistics(&net, omega, delta, Some(&ds))?;
    let max_norm = stats.neuron_norms.iter().copied().fold(0.0, f64::max);
    println!("omega {omega:.3e}");
    println!("max neuron norm^2 {:.3e} <= {:.3e}: {}", max_norm * max_norm, stats.neuron_norm_sq_bound, stats.norms_within_bound());
    println!("mean-direction projections within bound: {:?}", stats.projections_within_bound());
    println!("spectral norm {:.3e} (scale {:.3e})", stats.spec_norm, stats.spec_norm_scale);
    println!("stable rank {:.2} of at most {}", stable_rank(net.weights())?, m.min(d));
    Ok(())
}
