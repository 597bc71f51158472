use mimcmc::estimators::{
    allocate_spde, allocate_spde_level, estimate_increment, mimcmc_estimate, ChainSettings,
};
use mimcmc::oracle::exact_increment;
use mimcmc::pcn::{collect_chain, ChainConfig, CoupledModel};
use mimcmc::spde::{exp_euler_solve, qoi, DrivingNoise, Resolution};
use mimcmc::stats::{mean, variance};
use mimcmc::target::Likelihood;
use mimcmc::{corners, Bases, ModelParams, MultiIndex, ObservationConfig, QoiKind, TensorIndexSet};

fn prior_model(params: ModelParams) -> CoupledModel {
    CoupledModel {
        params,
        bases: Bases::default(),
        observations: ObservationConfig::uniform(4, 1.0, 0.1),
        likelihood: Likelihood::Flat,
        qoi: QoiKind::Weighted,
    }
}

fn iid_settings() -> ChainSettings {
    ChainSettings {
        rho: 1.0,
        burn_in_fraction: 0.0,
        burn_in_min: 0,
        adapt: None,
        cost_includes_burn_in: false,
    }
}

#[test]
fn iid_increments_are_unbiased() {
    let model = prior_model(ModelParams::default());
    for alpha in [MultiIndex::from([1, 1]), MultiIndex::from([2, 0]), MultiIndex::from([0, 0])] {
        let exact = exact_increment(&alpha, &model.params, model.bases, &model.observations, &Likelihood::Flat, model.qoi).unwrap();
        let reps: Vec<f64> = (0..200)
            .map(|r| estimate_increment(&model, &alpha, 50, &iid_settings(), 9, r).unwrap().0.value)
            .collect();
        let se = (variance(&reps) / reps.len() as f64).sqrt();
        assert!((mean(&reps) - exact).abs() < 4.0 * se, "{alpha}: {} vs {exact} (se {se})", mean(&reps));
    }
}

#[test]
fn flat_target_reduces_to_plain_averages() {
    let model = prior_model(ModelParams::default());
    let alpha = MultiIndex::from([1, 1]);
    let set = corners(&alpha);
    let config = ChainConfig { rho: 1.0, n_steps: 300, burn_in: Some(0), adapt: None, seed: 5, ..ChainConfig::default() };
    let (records, _) = collect_chain(&model, &set, &config).unwrap();
    assert!(records.iter().all(|r| r.h.iter().all(|&h| h == 1.0)));
    let coef = set.coefficients();
    let plain = mean(
        &records
            .iter()
            .map(|r| r.phi.iter().zip(&coef).map(|(p, c)| p * c).sum())
            .collect::<Vec<f64>>(),
    );
    let (est, _) = estimate_increment(
        &model,
        &alpha,
        300,
        &ChainSettings { rho: 1.0, burn_in_fraction: 0.0, burn_in_min: 0, adapt: None, cost_includes_burn_in: false },
        5,
        0,
    )
    .unwrap();
    assert!((est.value - plain).abs() < 1e-12);
}

#[test]
fn noiseless_increments_telescope() {
    let params = ModelParams { sigma: 0.0, ..ModelParams::default() };
    let model = prior_model(params.clone());
    let top = [3u32, 2];
    let plan: Vec<(MultiIndex, usize)> = TensorIndexSet::new(top.to_vec())
        .unwrap()
        .indices()
        .into_iter()
        .map(|a| (a, 1))
        .collect();
    let est = mimcmc_estimate(&model, &plan, &iid_settings(), 1, 0).unwrap();
    let res = Resolution::new(&MultiIndex::from(top), model.bases, 1.0).unwrap();
    let path = exp_euler_solve(&params, &res, &DrivingNoise::zeros(res.modes, res.steps)).unwrap();
    let direct = qoi(&path, QoiKind::Weighted);
    assert!((est.value - direct).abs() <= 1e-12 * direct.abs().max(1.0), "{} vs {direct}", est.value);
}

#[test]
fn mse_splits_into_variance_and_bias() {
    let model = prior_model(ModelParams::default());
    let alpha = MultiIndex::from([1, 0]);
    let exact = exact_increment(&alpha, &model.params, model.bases, &model.observations, &Likelihood::Flat, model.qoi).unwrap();
    let reps: Vec<f64> = (0..100)
        .map(|r| estimate_increment(&model, &alpha, 20, &iid_settings(), 11, r).unwrap().0.value)
        .collect();
    let n = reps.len() as f64;
    let mse = reps.iter().map(|x| (x - exact).powi(2)).sum::<f64>() / n;
    let bias = mean(&reps) - exact;
    let var = variance(&reps) * (n - 1.0) / n;
    assert!((mse - (var + bias * bias)).abs() <= 1e-12 * mse);
}

#[test]
fn level_plans_match_epsilon_plans() {
    for level in 2..=6u32 {
        let a = allocate_spde_level(level, Bases::default()).unwrap();
        let b = allocate_spde((1.0 - level as f64).exp2(), Bases::default()).unwrap();
        assert_eq!(a, b);
    }
    let first = allocate_spde_level(1, Bases::default()).unwrap();
    assert_eq!(first.max_levels, vec![2, 1]);
    assert!(allocate_spde(1.0, Bases::default()).is_err());
}

#[test]
fn estimates_do_not_depend_on_thread_count() {
    let model = prior_model(ModelParams::default());
    let plan: Vec<(MultiIndex, usize)> = TensorIndexSet::new(vec![2, 1]).unwrap().indices().into_iter().map(|a| (a, 40)).collect();
    let settings = ChainSettings { burn_in_min: 20, ..ChainSettings::default() };
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| mimcmc_estimate(&model, &plan, &settings, 3, 1).unwrap())
    };
    assert_eq!(run(1), run(4));
}
