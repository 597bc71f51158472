use std::path::Path;
use std::time::Instant;

use log::info;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{resolve_fixture, write_csv, write_json, ExperimentConfig};
use crate::error::{Error, Result};
use crate::estimators::{allocate_spde_level, mimcmc_estimate, single_level_mcmc};
use crate::multi_index::MultiIndex;
use crate::oracle::continuum_posterior_qoi;
use crate::rng::derive_seed;
use crate::stats::fit_loglog;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostErrorRow {
    /// `mimcmc` or `mcmc`.
    pub method: String,
    /// `ε = 2^{1-l}` of the precision level.
    pub eps_or_level: f64,
    pub replicate: usize,
    pub estimate: f64,
    pub sq_error: f64,
    pub cost_units: f64,
    pub wall_s: f64,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelStat {
    pub level: u32,
    pub epsilon: f64,
    pub rmse: f64,
    pub mean_cost: f64,
}

/// `log₁₀ cost ≈ intercept + slope · log₁₀ RMSE` over the precision levels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodFit {
    pub slope: f64,
    pub slope_se: f64,
    pub intercept: f64,
    pub levels: Vec<LevelStat>,
}

impl MethodFit {
    pub fn predict_cost(&self, rmse: f64) -> f64 {
        10f64.powf(self.intercept + self.slope * rmse.log10())
    }

    fn min_rmse(&self) -> f64 {
        self.levels.iter().map(|l| l.rmse).fold(f64::INFINITY, f64::min)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostErrorSummary {
    pub experiment: String,
    pub reference_mean: f64,
    pub reference_sd: f64,
    pub mimcmc: MethodFit,
    pub mcmc: MethodFit,
    /// Largest of the two smallest RMSEs, the tightest error both fits cover.
    pub tightest_common_rmse: f64,
    pub mimcmc_cost_at_common: f64,
    pub mcmc_cost_at_common: f64,
    pub mimcmc_cheaper: bool,
    pub config_hash: String,
    pub fixture_hash: String,
}

#[derive(Clone, Debug)]
pub struct CostErrorOutput {
    pub rows: Vec<CostErrorRow>,
    pub summary: CostErrorSummary,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Method {
    Mimcmc,
    Mcmc,
}

impl Method {
    fn name(self) -> &'static str {
        match self {
            Method::Mimcmc => "mimcmc",
            Method::Mcmc => "mcmc",
        }
    }
}

/// Samples of the single-level chain at precision `ε`: `⌈ε⁻² L_x⌉`, the
/// count the multi-index plan spends on its coarsest index.
fn mcmc_samples(epsilon: f64, l_x: u32) -> usize {
    (l_x as f64 / (epsilon * epsilon)).ceil() as usize
}

/// Run both estimators at each precision level, score them against the
/// continuum posterior mean and fit cost against RMSE. Writes
/// `cost_error/{cost_error.csv,summary.json,config.json}` under `out`.
pub fn cmd_cost_error(config: &ExperimentConfig, out: &Path) -> Result<CostErrorOutput> {
    config.validate()?;
    std::fs::create_dir_all(out)?;
    let (fixture, fixture_hash) = resolve_fixture(config, out)?;
    let model = config.posterior_model(&fixture)?;
    let (reference_mean, reference_var) = continuum_posterior_qoi(
        &config.params,
        config.k_max,
        &config.observations(),
        &fixture.y,
        config.qoi,
    )?;
    let ce = &config.cost_error;

    let mut tasks = Vec::new();
    for &level in &ce.levels {
        let epsilon = (1.0 - level as f64).exp2();
        let plan = allocate_spde_level(level, config.bases)?;
        let [lx, lt] = [plan.max_levels[0], plan.max_levels[1]];
        if lx > ce.max_levels[0] || lt > ce.max_levels[1] {
            return Err(Error::Config(format!(
                "level ({lx}, {lt}) exceeds the maximum ({}, {})",
                ce.max_levels[0], ce.max_levels[1]
            )));
        }
        let n_mcmc = mcmc_samples(epsilon, lx);
        let n_max = plan.n_per_index.iter().map(|(_, n)| *n).max().unwrap_or(0).max(n_mcmc);
        if n_max > ce.max_chain_steps {
            return Err(Error::Config(format!(
                "level {level} needs {n_max} chain steps, above the ceiling {}",
                ce.max_chain_steps
            )));
        }
        let seed = derive_seed(config.seed, u64::from(level));
        for replicate in 0..ce.replicates {
            for method in [Method::Mimcmc, Method::Mcmc] {
                tasks.push((level, epsilon, plan.clone(), n_mcmc, seed, replicate, method));
            }
        }
    }

    let rows = super::with_workers(config.workers, || {
        tasks
            .par_iter()
            .map(|(level, epsilon, plan, n_mcmc, seed, replicate, method)| {
                let start = Instant::now();
                let (estimate, cost) = match method {
                    Method::Mimcmc => {
                        let e = mimcmc_estimate(&model, &plan.n_per_index, &config.chain, *seed, *replicate as u64)?;
                        (e.value, e.cost)
                    }
                    Method::Mcmc => {
                        let alpha = MultiIndex::from([2 * level, *level]);
                        let e = single_level_mcmc(&model, &alpha, *n_mcmc, &config.chain, *seed, *replicate as u64)?;
                        (e.value, e.cost)
                    }
                };
                let wall_s = start.elapsed().as_secs_f64();
                info!("{} level {level} replicate {replicate}: {estimate:.6} in {wall_s:.2}s", method.name());
                Ok(CostErrorRow {
                    method: method.name().into(),
                    eps_or_level: *epsilon,
                    replicate: *replicate,
                    estimate,
                    sq_error: (estimate - reference_mean).powi(2),
                    cost_units: cost,
                    wall_s,
                    seed: *seed,
                })
            })
            .collect::<Result<Vec<_>>>()
    })??;

    let mimcmc = method_fit(&rows, Method::Mimcmc, &ce.levels)?;
    let mcmc = method_fit(&rows, Method::Mcmc, &ce.levels)?;
    let common = mimcmc.min_rmse().max(mcmc.min_rmse());
    let (a, b) = (mimcmc.predict_cost(common), mcmc.predict_cost(common));
    let summary = CostErrorSummary {
        experiment: "cost_error".into(),
        reference_mean,
        reference_sd: reference_var.sqrt(),
        tightest_common_rmse: common,
        mimcmc_cost_at_common: a,
        mcmc_cost_at_common: b,
        mimcmc_cheaper: a < b,
        mimcmc,
        mcmc,
        config_hash: config.hash()?,
        fixture_hash,
    };
    let dir = out.join("cost_error");
    std::fs::create_dir_all(&dir)?;
    write_csv(&dir.join("cost_error.csv"), &rows)?;
    write_json(&dir.join("summary.json"), &summary)?;
    write_json(&dir.join("config.json"), config)?;
    Ok(CostErrorOutput { rows, summary })
}

fn method_fit(rows: &[CostErrorRow], method: Method, levels: &[u32]) -> Result<MethodFit> {
    let stats: Vec<LevelStat> = levels
        .iter()
        .map(|&level| {
            let epsilon = (1.0 - level as f64).exp2();
            let mine: Vec<&CostErrorRow> = rows
                .iter()
                .filter(|r| r.method == method.name() && r.eps_or_level == epsilon)
                .collect();
            let n = mine.len() as f64;
            LevelStat {
                level,
                epsilon,
                rmse: (mine.iter().map(|r| r.sq_error).sum::<f64>() / n).sqrt(),
                mean_cost: mine.iter().map(|r| r.cost_units).sum::<f64>() / n,
            }
        })
        .collect();
    let x: Vec<f64> = stats.iter().map(|s| s.rmse).collect();
    let y: Vec<f64> = stats.iter().map(|s| s.mean_cost).collect();
    let fit = fit_loglog(&x, &y)?;
    Ok(MethodFit {
        slope: fit.slope,
        slope_se: fit.slope_se,
        intercept: fit.intercept,
        levels: stats,
    })
}
