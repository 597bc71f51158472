use std::fmt;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{write_json, ExperimentConfig};
use crate::error::Result;
use crate::estimators::IncrementAccumulator;
use crate::multi_index::{corners, CornerSet, MultiIndex, TensorIndexSet};
use crate::oracle::{
    condition_covariance_form, condition_on_data, discrete_posterior, joint_gaussian, DataFixture,
    LinearQoi,
};
use crate::pcn::{collect_chain, ChainConfig, CoupledModel};
use crate::rng::{Purpose, StreamKey};
use crate::spde::{step_noise_variance, DrivingNoise, ObservationConfig};
use crate::stats::{batch_means_se, mean, Moments};
use crate::target::{Likelihood, LikelihoodSpec};

/// One row of the report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub tolerance: f64,
    pub observed: f64,
    pub passed: bool,
}

impl Check {
    fn at_most(name: &str, tolerance: f64, observed: f64) -> Self {
        Self {
            name: name.into(),
            tolerance,
            observed,
            passed: observed <= tolerance,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub checks: Vec<Check>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<36} {:>12} {:>12}  status", "check", "tolerance", "observed")?;
        for c in &self.checks {
            writeln!(
                f,
                "{:<36} {:>12.3e} {:>12.3e}  {}",
                c.name,
                c.tolerance,
                c.observed,
                if c.passed { "pass" } else { "FAIL" }
            )?;
        }
        Ok(())
    }
}

/// Run the invariant checks and write `validation.json`. Statistical checks
/// compare a z-score with `config.validate.z`.
pub fn cmd_validate(config: &ExperimentConfig, out: &Path) -> Result<ValidationReport> {
    config.validate()?;
    std::fs::create_dir_all(out)?;
    let z = config.validate.z;
    let seed = config.seed;
    let mut checks = vec![
        telescoping(seed),
        coupling_identity(config),
    ];
    checks.extend(coupled_marginals(config, z)?);
    checks.push(prior_invariance(config, z)?);
    checks.extend(posterior_checks(config, z)?);
    let report = ValidationReport { checks };
    write_json(&out.join("validation.json"), &report)?;
    Ok(report)
}

/// `Σ_{α ≤ L} Δf(α) = f(L)` with `Δ` assembled from corner pairs and signs.
fn telescoping(seed: u64) -> Check {
    let mut rng = StreamKey::new(seed, Purpose::Validation).replicate(1).rng();
    let mut worst = 0.0f64;
    for levels in [vec![4], vec![3, 4], vec![2, 2, 2]] {
        let set = TensorIndexSet::new(levels.clone()).expect("nonempty");
        let table: std::collections::HashMap<MultiIndex, f64> = set
            .indices()
            .into_iter()
            .map(|a| (a, f64::from(rng.random_range(-1000i32..1000))))
            .collect();
        let total: f64 = set
            .indices()
            .iter()
            .map(|a| {
                let c = corners(a);
                let f: Vec<f64> = c.corners().iter().map(|x| table[x]).collect();
                difference(&c, &f)
            })
            .sum();
        worst = worst.max((total - table[&MultiIndex::new(levels)]).abs());
    }
    Check::at_most("telescoping sum", 0.0, worst)
}

fn difference(c: &CornerSet, f: &[f64]) -> f64 {
    if !c.is_differenced() {
        return f[0];
    }
    c.pair_signs()
        .iter()
        .enumerate()
        .map(|(i, s)| s * (f[2 * i + 1] - f[2 * i]))
        .sum()
}

/// `e^{-2λh} v(h) + v(h) = v(2h)` for the merged time increments.
fn coupling_identity(config: &ExperimentConfig) -> Check {
    let sigma = config.params.sigma.max(1.0);
    let mut worst = 0.0f64;
    for j in 0..8 {
        let h = config.params.t_final / (config.bases.m0 << j) as f64;
        for k in 1..=1024usize {
            let lambda = (std::f64::consts::PI * k as f64).powi(2);
            let v = step_noise_variance(sigma, k, h);
            let merged = (-2.0 * lambda * h).exp() * v + v;
            let coarse = step_noise_variance(sigma, k, 2.0 * h);
            worst = worst.max((merged - coarse).abs() / coarse);
        }
    }
    Check::at_most("time coupling variance identity", 1e-12, worst)
}

fn reduced(config: &ExperimentConfig) -> ObservationConfig {
    let m = if config.bases.m0 % 4 == 0 { 4 } else { config.m };
    ObservationConfig::uniform(m, config.params.t_final, config.tau2)
}

/// Every corner of the coupled prior has its own level's law.
fn coupled_marginals(config: &ExperimentConfig, z: f64) -> Result<Vec<Check>> {
    let model = CoupledModel {
        params: config.params.clone(),
        bases: config.bases,
        observations: reduced(config),
        likelihood: Likelihood::Flat,
        qoi: config.qoi,
    };
    let set = corners(&MultiIndex::from([2, 1]));
    let evaluator = model.evaluator(&set)?;
    let mut rng = StreamKey::new(config.seed, Purpose::Validation).replicate(2).rng();
    let mut moments = vec![Moments::default(); set.len()];
    for _ in 0..config.validate.chain_steps {
        let noise = DrivingNoise::for_resolution(evaluator.fine_resolution(), &mut rng);
        for (m, p) in moments.iter_mut().zip(evaluator.evaluate(&noise)?.phi) {
            m.push(p);
        }
    }
    let mut worst_mean = 0.0f64;
    let mut worst_var = 0.0f64;
    for (c, m) in set.corners().iter().zip(&moments) {
        let (em, ev) = discrete_posterior(c, &model.params, model.bases, &model.observations, &Likelihood::Flat, model.qoi)?;
        let n = m.count() as f64;
        worst_mean = worst_mean.max((m.mean() - em).abs() / (ev / n).sqrt());
        worst_var = worst_var.max((m.variance() - ev).abs() / (ev * (2.0 / (n - 1.0)).sqrt()));
    }
    Ok(vec![
        Check::at_most("coupled corner means (z)", z, worst_mean),
        Check::at_most("coupled corner variances (z)", z, worst_var),
    ])
}

/// With `g ≡ 1` the pCN chain keeps the prior law of `φ_α`.
fn prior_invariance(config: &ExperimentConfig, z: f64) -> Result<Check> {
    let model = CoupledModel {
        params: config.params.clone(),
        bases: config.bases,
        observations: reduced(config),
        likelihood: Likelihood::Flat,
        qoi: config.qoi,
    };
    let alpha = MultiIndex::from([2, 1]);
    let chain = ChainConfig {
        rho: 0.5,
        n_steps: config.validate.chain_steps,
        burn_in: Some(0),
        seed: config.seed,
        replicate: 3,
        adapt: None,
        purpose: Purpose::Validation,
    };
    let (records, _) = collect_chain(&model, &CornerSet::single(alpha.clone()), &chain)?;
    let phi: Vec<f64> = records.iter().map(|r| r.phi[0]).collect();
    let (em, _) = discrete_posterior(&alpha, &model.params, model.bases, &model.observations, &Likelihood::Flat, model.qoi)?;
    Ok(Check::at_most(
        "pCN prior invariance (z)",
        z,
        (mean(&phi) - em).abs() / batch_means_se(&phi),
    ))
}

/// Posterior mean against the discrete oracle, both conditioning forms, and
/// the two increment estimators.
fn posterior_checks(config: &ExperimentConfig, z: f64) -> Result<Vec<Check>> {
    let obs = reduced(config);
    let k_ref = 256;
    let fixture = DataFixture::generate(&config.params, k_ref, &obs, config.seed)?;
    let model = CoupledModel {
        params: config.params.clone(),
        bases: config.bases,
        observations: obs.clone(),
        likelihood: Likelihood::Gaussian(LikelihoodSpec::new(fixture.y.clone(), obs.tau2)?),
        qoi: config.qoi,
    };

    let joint = joint_gaussian(&config.params, k_ref, &obs, &LinearQoi::from_kind(config.qoi, k_ref))?;
    let a = condition_on_data(&joint, &fixture.y, obs.tau2)?;
    let b = condition_covariance_form(&joint, &fixture.y, obs.tau2)?;
    let scale = b.cov.diagonal().max().sqrt().max(1.0);
    let gap = (&a.mean - &b.mean).amax().max((&a.cov - &b.cov).amax()) / scale;

    let alpha = MultiIndex::from([2, 1]);
    let chain = ChainConfig {
        n_steps: config.validate.chain_steps,
        burn_in: Some(2000),
        seed: config.seed,
        replicate: 4,
        purpose: Purpose::Validation,
        ..ChainConfig::default()
    };
    let (records, _) = collect_chain(&model, &CornerSet::single(alpha.clone()), &chain)?;
    let phi: Vec<f64> = records.iter().map(|r| r.phi[0]).collect();
    let (em, _) = discrete_posterior(&alpha, &model.params, model.bases, &obs, &model.likelihood, model.qoi)?;

    let set = corners(&MultiIndex::from([1, 1]));
    let (records, _) = collect_chain(&model, &set, &ChainConfig { replicate: 5, n_steps: 5000, ..chain })?;
    let mut acc = IncrementAccumulator::new(&set);
    records.iter().for_each(|r| acc.push(r));
    let sn = acc.finish()?;
    let normalizers: Vec<f64> = sn.denom.iter().map(|d| d / sn.n as f64).collect();
    let simple = acc.finish_simplified(&normalizers)?;
    let magnitude: f64 = sn.corner_ratios.iter().map(|r| r.abs()).sum();
    let ulps = (simple.value - sn.value).abs() / (f64::EPSILON * magnitude.max(f64::MIN_POSITIVE));

    Ok(vec![
        Check::at_most("conditioning forms agree", 1e-10, gap),
        Check::at_most("posterior mean vs oracle (z)", z, (mean(&phi) - em).abs() / batch_means_se(&phi)),
        Check::at_most("estimator identity (ulp)", 8.0, ulps),
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_gate_passes() {
        let mut c = ExperimentConfig::default();
        c.validate.chain_steps = 20_000;
        let dir = tempfile::tempdir().unwrap();
        let report = cmd_validate(&c, dir.path()).unwrap();
        assert!(report.passed(), "\n{report}");
        assert!(dir.path().join("validation.json").exists());
        assert!(report.to_string().contains("telescoping sum"));
    }

    #[test]
    fn flipped_sign_breaks_telescoping() {
        let c = corners(&MultiIndex::from([2, 3]));
        let f = [1.0, 4.0, 9.0, 16.0];
        let good = difference(&c, &f);
        let bad: f64 = c
            .pair_signs()
            .iter()
            .enumerate()
            .map(|(i, s)| -s * (f[2 * i + 1] - f[2 * i]))
            .sum();
        assert_ne!(good, bad);
    }
}
