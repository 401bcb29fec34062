//! Gradient descent at the certified step size and init scale, then every
//! bound checked against the recorded trace.

use leakybias::analysis::{check_trace_bounds, MonitorSet};
use leakybias::dataset::{certify, NearOrthogonal};
use leakybias::model::{Activation, LossKind};
use leakybias::training::{derive_budget, train, InitScheme, TrainConfig};

fn main() -> leakybias::error::Result<()> {
    let (n, d, m, gamma) = (16, 2048, 32, 0.5);
    let act = Activation::smooth(gamma)?;
    let ds = NearOrthogonal::new(d, 1.2, NearOrthogonal::overlap_for_descent(n, 1.2, gamma, 0.5))?.sample(n, 0)?;
    let cert = certify(&ds, gamma)?;
    let budget = derive_budget(&cert, m, d, 0.05, act.smoothness().unwrap_or(0.0))?;
    let alpha = budget.alpha_max;
    println!("alpha_max {:.3e}, omega_max {:.3e}", alpha, budget.omega_max(alpha));
    let cfg = TrainConfig {
        m1: m / 2,
        m2: m / 2,
        d,
        activation: act,
        loss: LossKind::Logistic,
        alpha,
        steps: 2000,
        init: InitScheme::new(budget.omega_max(alpha), 0)?,
        record_every: 100,
        monitors: MonitorSet::standard(),
    };
    let trace = train(&cfg, &ds)?;
    for row in trace.rows.iter().take(4) {
        println!("step {:>5} loss {:.9} stable rank {:.4}", row.step, row.loss, row.monitors.stable_rank.unwrap_or(f64::NAN));
    }
    print!("{}", check_trace_bounds(&trace, &cert, alpha).to_text());
    Ok(())
}
