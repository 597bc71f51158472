//! Self-normalized and simplified increment estimators on the same chain.

use mimcmc::estimators::IncrementAccumulator;
use mimcmc::oracle::{exact_increment, generate_data};
use mimcmc::pcn::{collect_chain, ChainConfig, CoupledModel};
use mimcmc::target::{Likelihood, LikelihoodSpec};
use mimcmc::{corners, Bases, ModelParams, MultiIndex, ObservationConfig, QoiKind};

fn main() -> mimcmc::Result<()> {
    let params = ModelParams::default();
    let obs = ObservationConfig::uniform(4, params.t_final, 0.1);
    let data = generate_data(&params, 1 << 12, &obs, 2)?;
    let model = CoupledModel {
        params,
        bases: Bases::default(),
        likelihood: Likelihood::Gaussian(LikelihoodSpec::new(data.y.clone(), obs.tau2)?),
        observations: obs,
        qoi: QoiKind::Weighted,
    };
    let alpha = MultiIndex::from([2, 1]);
    let set = corners(&alpha);
    let (records, _) = collect_chain(&model, &set, &ChainConfig { n_steps: 20_000, seed: 2, ..ChainConfig::default() })?;

    let mut acc = IncrementAccumulator::new(&set);
    records.iter().for_each(|r| acc.push(r));
    let sn = acc.finish()?;
    let normalizers: Vec<f64> = sn.denom.iter().map(|d| d / sn.n as f64).collect();
    let simple = acc.finish_simplified(&normalizers)?;

    let exact = exact_increment(&alpha, &model.params, model.bases, &model.observations, &model.likelihood, model.qoi)?;
    println!("self-normalized {:+.4e}", sn.value);
    println!("simplified      {:+.4e}  (sample-mean normalizers)", simple.value);
    println!("exact           {exact:+.4e}");
    Ok(())
}
