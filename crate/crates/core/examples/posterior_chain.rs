//! pCN chain on a single-level posterior, compared with the exact Gaussian answer.

use mimcmc::oracle::{discrete_posterior, generate_data};
use mimcmc::pcn::{collect_chain, ChainConfig, CoupledModel};
use mimcmc::stats::{batch_means_se, mean};
use mimcmc::target::{Likelihood, LikelihoodSpec};
use mimcmc::{Bases, CornerSet, ModelParams, MultiIndex, ObservationConfig, QoiKind};

fn main() -> mimcmc::Result<()> {
    let params = ModelParams::default();
    let obs = ObservationConfig::uniform(4, params.t_final, 0.1);
    let data = generate_data(&params, 1 << 12, &obs, 1)?;
    let model = CoupledModel {
        params,
        bases: Bases::default(),
        likelihood: Likelihood::Gaussian(LikelihoodSpec::new(data.y.clone(), obs.tau2)?),
        observations: obs,
        qoi: QoiKind::Weighted,
    };
    let alpha = MultiIndex::from([1, 1]);
    let config = ChainConfig { n_steps: 20_000, seed: 1, ..ChainConfig::default() };
    let (records, summary) = collect_chain(&model, &CornerSet::single(alpha.clone()), &config)?;
    let phi: Vec<f64> = records.iter().map(|r| r.phi[0]).collect();

    let (exact, var) = discrete_posterior(&alpha, &model.params, model.bases, &model.observations, &model.likelihood, model.qoi)?;
    println!("acceptance {:.2}, tuned rho {:.3}", summary.acceptance_rate, summary.rho);
    println!("chain mean {:.4} +- {:.4}", mean(&phi), batch_means_se(&phi));
    println!("exact mean {exact:.4}, sd {:.4}", var.sqrt());
    Ok(())
}
