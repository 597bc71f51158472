//! Exact posterior of the QoI from the joint Gaussian law, continuum and discrete.

use mimcmc::oracle::{continuum_posterior_qoi, discrete_posterior, generate_data};
use mimcmc::target::{Likelihood, LikelihoodSpec};
use mimcmc::{Bases, ModelParams, MultiIndex, ObservationConfig, QoiKind};

fn main() -> mimcmc::Result<()> {
    let params = ModelParams::default();
    let obs = ObservationConfig::uniform(20, params.t_final, 0.1);
    let k_max = 1 << 12;
    let data = generate_data(&params, k_max, &obs, 3)?;
    let like = Likelihood::Gaussian(LikelihoodSpec::new(data.y.clone(), obs.tau2)?);

    let (m, v) = continuum_posterior_qoi(&params, k_max, &obs, &data.y, QoiKind::Weighted)?;
    println!("continuum: mean {m:+.5} sd {:.5}", v.sqrt());
    for l in 1..=5u32 {
        let alpha = MultiIndex::from([2 * l, l]);
        let (ml, vl) = discrete_posterior(&alpha, &params, Bases::default(), &obs, &like, QoiKind::Weighted)?;
        println!("{alpha}: mean {ml:+.5} sd {:.5}  error {:+.1e}", vl.sqrt(), ml - m);
    }
    Ok(())
}
