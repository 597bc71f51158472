use std::path::Path;

use log::info;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{resolve_fixture, write_csv, write_json, ExperimentConfig};
use crate::error::Result;
use crate::estimators::{cost_model, fit_rates, RateFit};
use crate::multi_index::{corners, MultiIndex, TensorIndexSet};
use crate::pcn::{run_chain, ChainConfig, CoupledModel};
use crate::rng::{Purpose, StreamKey};
use crate::spde::DrivingNoise;
use crate::stats::variance;

const PRIOR_CHUNK: usize = 1000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RatesRow {
    pub alpha_x: u32,
    pub alpha_t: u32,
    pub n_samples: usize,
    pub var_prior: f64,
    pub var_chain: Option<f64>,
    pub cost_units: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    /// `β̂ = (β̂_x, β̂_t)`, the negated slopes of `log₂ V_α`.
    pub beta: Vec<f64>,
    pub beta_se: Vec<f64>,
    pub intercept: f64,
}

impl From<&RateFit> for FitSummary {
    fn from(f: &RateFit) -> Self {
        Self {
            beta: f.rates(),
            beta_se: f.slope_std_errors.clone(),
            intercept: f.intercept,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RatesSummary {
    pub experiment: String,
    pub prior: FitSummary,
    pub chain: Option<FitSummary>,
    pub config_hash: String,
    pub fixture_hash: Option<String>,
}

#[derive(Clone, Debug)]
pub struct RatesOutput {
    pub rows: Vec<RatesRow>,
    pub prior_fit: RateFit,
    pub chain_fit: Option<RateFit>,
    pub summary: RatesSummary,
}

/// `n` independent draws of `Σ_i c_i φ_{α(i)}` under the coupled prior.
///
/// Draws come in chunks of 1000, each from its own stream, so the result
/// is the same however the chunks are scheduled.
pub fn prior_increment_samples(
    model: &CoupledModel,
    alpha: &MultiIndex,
    n: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    let prior = model.prior();
    let set = corners(alpha);
    let coef = set.coefficients();
    let chunks: Vec<usize> = (0..n.div_ceil(PRIOR_CHUNK)).collect();
    let parts = chunks
        .par_iter()
        .map(|&c| {
            let evaluator = prior.evaluator(&set)?;
            let mut rng = StreamKey::new(seed, Purpose::PriorSamples)
                .alpha(alpha)
                .replicate(c as u64)
                .rng();
            let len = PRIOR_CHUNK.min(n - c * PRIOR_CHUNK);
            let mut out = Vec::with_capacity(len);
            for _ in 0..len {
                let noise = DrivingNoise::for_resolution(evaluator.fine_resolution(), &mut rng);
                let e = evaluator.evaluate(&noise)?;
                out.push(e.phi.iter().zip(&coef).map(|(p, c)| p * c).sum());
            }
            Ok(out)
        })
        .collect::<Result<Vec<Vec<f64>>>>()?;
    Ok(parts.concat())
}

/// `φ̃` along a `Π_α` chain.
fn chain_increment_samples(
    model: &CoupledModel,
    alpha: &MultiIndex,
    config: &ExperimentConfig,
) -> Result<Vec<f64>> {
    let set = corners(alpha);
    let coef = set.coefficients();
    let chain = ChainConfig {
        purpose: Purpose::Custom(0xFA7E),
        ..config.chain.chain_config(config.rates.chain_steps, config.seed, 0)
    };
    let mut out = Vec::with_capacity(chain.n_steps);
    run_chain(model, &set, &chain, |s| {
        let r = s.record;
        out.push(
            r.phi
                .iter()
                .zip(&r.h)
                .zip(&coef)
                .map(|((p, h), c)| c * p * h)
                .sum(),
        );
    })?;
    Ok(out)
}

/// Estimate the multi-increment variance on the grid `0..=max_levels` and fit
/// `log₂ V_α ≈ c - β_x α_x - β_t α_t`. Writes `rates/{rates.csv,summary.json,config.json}`
/// under `out`; a fixture, when needed, lives in `out` itself.
pub fn cmd_rates(config: &ExperimentConfig, out: &Path) -> Result<RatesOutput> {
    config.validate()?;
    std::fs::create_dir_all(out)?;
    let fixture = if config.rates.chain {
        Some(resolve_fixture(config, out)?)
    } else {
        None
    };
    let prior_model = CoupledModel {
        params: config.params.clone(),
        bases: config.bases,
        observations: config.observations(),
        likelihood: crate::target::Likelihood::Flat,
        qoi: config.qoi,
    };
    let post_model = match &fixture {
        Some((f, _)) => Some(config.posterior_model(f)?),
        None => None,
    };
    let grid = TensorIndexSet::new(config.rates.max_levels.to_vec())?.indices();

    let rows = super::with_workers(config.workers, || {
        grid.par_iter()
            .map(|alpha| {
                let prior = prior_increment_samples(&prior_model, alpha, config.rates.n_samples, config.seed)?;
                let var_chain = match &post_model {
                    Some(m) => Some(variance(&chain_increment_samples(m, alpha, config)?)),
                    None => None,
                };
                info!("rates {alpha}: done");
                Ok(RatesRow {
                    alpha_x: alpha.get(0),
                    alpha_t: alpha.get(1),
                    n_samples: prior.len(),
                    var_prior: variance(&prior),
                    var_chain,
                    cost_units: cost_model(alpha, config.bases),
                })
            })
            .collect::<Result<Vec<_>>>()
    })??;

    let index = |r: &RatesRow| MultiIndex::from([r.alpha_x, r.alpha_t]);
    let prior_fit = fit_rates(&rows.iter().map(|r| (index(r), r.var_prior)).collect::<Vec<_>>())?;
    let chain_fit = if config.rates.chain {
        let pts: Vec<_> = rows
            .iter()
            .filter_map(|r| r.var_chain.filter(|v| *v > 0.0).map(|v| (index(r), v)))
            .collect();
        Some(fit_rates(&pts)?)
    } else {
        None
    };
    let summary = RatesSummary {
        experiment: "rates".into(),
        prior: FitSummary::from(&prior_fit),
        chain: chain_fit.as_ref().map(FitSummary::from),
        config_hash: config.hash()?,
        fixture_hash: fixture.map(|(_, h)| h),
    };
    let dir = out.join("rates");
    std::fs::create_dir_all(&dir)?;
    write_csv(&dir.join("rates.csv"), &rows)?;
    write_json(&dir.join("summary.json"), &summary)?;
    write_json(&dir.join("config.json"), config)?;
    Ok(RatesOutput {
        rows,
        prior_fit,
        chain_fit,
        summary,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> ExperimentConfig {
        let mut c = ExperimentConfig { m: 4, k_max: 64, ..ExperimentConfig::default() };
        c.rates.max_levels = [1, 1];
        c.rates.n_samples = 300;
        c.rates.chain_steps = 200;
        c.chain.burn_in_min = 100;
        c
    }

    #[test]
    fn writes_schema_and_is_reproducible() {
        let dir = tempfile::tempdir().unwrap();
        let a = cmd_rates(&tiny(), dir.path()).unwrap();
        assert_eq!(a.rows.len(), 4);
        let text = std::fs::read_to_string(dir.path().join("rates/rates.csv")).unwrap();
        assert!(text.starts_with("alpha_x,alpha_t,n_samples,var_prior,var_chain,cost_units\n"));
        let other = tempfile::tempdir().unwrap();
        let config = ExperimentConfig { workers: Some(1), ..tiny() };
        cmd_rates(&config, other.path()).unwrap();
        assert_eq!(text, std::fs::read_to_string(other.path().join("rates/rates.csv")).unwrap());
    }

    #[test]
    fn single_index_grid_is_degenerate() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = tiny();
        c.rates.max_levels = [0, 0];
        c.rates.chain = false;
        let err = cmd_rates(&c, dir.path()).unwrap_err();
        assert_eq!(err.to_string(), "degenerate design matrix");
    }
}
