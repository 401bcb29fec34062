//! Forward-Euler gradient flow from a small init: the time to reach
//! `log(2)/n` against its bound, then the cosine to the KKT direction as the
//! flow continues.

use leakybias::analysis::MonitorSet;
use leakybias::dataset::{certify, NearOrthogonal};
use leakybias::linalg::cosine;
use leakybias::margin::{build_kkt_network, solve_qp};
use leakybias::model::{Activation, LossKind};
use leakybias::training::{flow_emulate, flow_time_bound, flow_with, init_weights, FlowConfig, InitScheme};

fn main() -> leakybias::error::Result<()> {
    let (n, d, gamma, eta) = (8, 512, 0.5, 0.01);
    let ds = NearOrthogonal::new(d, 1.2, NearOrthogonal::overlap_for_flow(n, 1.2, gamma, 0.5))?.sample(n, 0)?;
    let cert = certify(&ds, gamma)?;
    let net0 = init_weights(4, 4, d, Activation::leaky(gamma)?, &InitScheme::new(1e-3, 0)?)?;
    let loss = LossKind::Exponential;
    let bound = flow_time_bound(net0.empirical_loss(&ds, loss)?, &cert);
    let probe = flow_emulate(net0.clone(), &ds, loss, eta, bound, 2f64.ln() / n as f64)?;
    let t_hit = probe.threshold_hit.map_or(f64::NAN, |(_, t)| t);
    println!("threshold time {t_hit:.3} (bound {bound:.1})");

    let kkt = build_kkt_network(&solve_qp(&ds, 4, 4, gamma)?, 4, 4, gamma)?;
    let cfg = FlowConfig {
        loss,
        eta,
        horizon: 1000.0 * t_hit,
        stop_loss: None,
        stop_at_threshold: false,
        record_every: 1,
        monitors: MonitorSet::none(),
    };
    let mut next = t_hit;
    flow_with(net0, &ds, &cfg, &mut |obs| {
        let t = obs.flow_time.unwrap_or(0.0);
        if t >= next {
            let c = cosine(obs.net.weights().as_slice(), kkt.weights().as_slice());
            println!("t = {t:>8.2}  loss {:.3e}  cosine {c:.6}", obs.eval.loss);
            next *= 10.0;
        }
    })?;
    Ok(())
}
