use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::ChainSettings;
use crate::oracle::DataFixture;
use crate::pcn::CoupledModel;
use crate::spde::{Bases, ModelParams, ObservationConfig, QoiKind};
use crate::target::{Likelihood, LikelihoodSpec};

/// Settings of the variance-rate grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RatesSettings {
    /// Largest `(α_x, α_t)` of the grid.
    pub max_levels: [u32; 2],
    /// Independent coupled-prior draws per index.
    pub n_samples: usize,
    /// Also estimate the multi-increment variance along a `Π_α` chain.
    pub chain: bool,
    /// Retained chain steps per index.
    pub chain_steps: usize,
}

impl Default for RatesSettings {
    fn default() -> Self {
        Self {
            max_levels: [5, 5],
            n_samples: 10_000,
            chain: true,
            chain_steps: 10_000,
        }
    }
}

/// Settings of the cost-versus-error study.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CostErrorSettings {
    /// Precision levels `l`: `ε = 2^{1-l}`, single-level runs at `(2l, l)`.
    pub levels: Vec<u32>,
    pub replicates: usize,
    /// Highest admissible `(α_x, α_t)`.
    pub max_levels: [u32; 2],
    /// Upper bound on retained steps of any chain.
    pub max_chain_steps: usize,
}

impl Default for CostErrorSettings {
    fn default() -> Self {
        Self {
            levels: vec![1, 2, 3, 4],
            replicates: 10,
            max_levels: [8, 4],
            max_chain_steps: 1_000_000,
        }
    }
}

impl CostErrorSettings {
    fn paper_scale() -> Self {
        Self {
            levels: (1..=7).collect(),
            replicates: 30,
            max_levels: [14, 7],
            max_chain_steps: 10_000_000,
        }
    }
}

/// Settings of the validation gate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ValidateSettings {
    /// Statistical checks pass within this many standard errors.
    pub z: f64,
    /// Steps of the statistical chain checks.
    pub chain_steps: usize,
}

impl Default for ValidateSettings {
    fn default() -> Self {
        Self {
            z: 4.0,
            chain_steps: 40_000,
        }
    }
}

/// One JSON document holding every knob; missing keys take the defaults.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub params: ModelParams,
    pub bases: Bases,
    /// Observation times per location.
    pub m: usize,
    pub tau2: f64,
    pub qoi: QoiKind,
    /// Modes of the continuum truth and reference.
    pub k_max: usize,
    /// Fixture to read; generated into the output directory when absent.
    pub fixture: Option<PathBuf>,
    pub chain: ChainSettings,
    pub rates: RatesSettings,
    pub cost_error: CostErrorSettings,
    pub validate: ValidateSettings,
    pub workers: Option<usize>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 20_240_601,
            params: ModelParams::default(),
            bases: Bases::default(),
            m: 20,
            tau2: 0.1,
            qoi: QoiKind::Weighted,
            k_max: 1 << 15,
            fixture: None,
            chain: ChainSettings::default(),
            rates: RatesSettings::default(),
            cost_error: CostErrorSettings::default(),
            validate: ValidateSettings::default(),
            workers: None,
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let config: Self = serde_json::from_str(&text)?;
        config.validate()?;
        Ok(config)
    }

    /// Switch the cost-error study to levels up to `(14, 7)` with 30 replicates.
    pub fn with_paper_scale(mut self) -> Self {
        self.cost_error = CostErrorSettings::paper_scale();
        self
    }

    pub fn observations(&self) -> ObservationConfig {
        ObservationConfig::uniform(self.m, self.params.t_final, self.tau2)
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if self.m == 0 || self.bases.m0 % self.m != 0 {
            return Err(Error::Config(format!(
                "m = {} must divide M_0 = {}",
                self.m, self.bases.m0
            )));
        }
        if self.bases.k0 == 0 {
            return Err(Error::Config("K_0 must be positive".into()));
        }
        if !(self.tau2 > 0.0) {
            return Err(Error::Config(format!("tau^2 {} must be positive", self.tau2)));
        }
        if self.k_max == 0 {
            return Err(Error::Config("k_max must be positive".into()));
        }
        if self.rates.n_samples < 2 || (self.rates.chain && self.rates.chain_steps < 2) {
            return Err(Error::Config("rate estimates need at least two samples".into()));
        }
        let ce = &self.cost_error;
        if ce.replicates == 0 {
            return Err(Error::Config("at least one replicate".into()));
        }
        for &l in &ce.levels {
            if l == 0 || 2 * l > ce.max_levels[0] || l > ce.max_levels[1] {
                return Err(Error::Config(format!(
                    "precision level {l} reaches ({}, {l}) beyond the maximum ({}, {})",
                    2 * l,
                    ce.max_levels[0],
                    ce.max_levels[1]
                )));
            }
        }
        if !(self.validate.z > 0.0) {
            return Err(Error::Config("validation z must be positive".into()));
        }
        Ok(())
    }

    /// The model with the fixture's data as likelihood.
    pub fn posterior_model(&self, fixture: &DataFixture) -> Result<CoupledModel> {
        let observations = self.observations();
        if fixture.y.len() != observations.len() {
            return Err(Error::Shape {
                expected: format!("{} observations", observations.len()),
                actual: fixture.y.len().to_string(),
            });
        }
        Ok(CoupledModel {
            params: self.params.clone(),
            bases: self.bases,
            likelihood: Likelihood::Gaussian(LikelihoodSpec::new(fixture.y.clone(), self.tau2)?),
            observations,
            qoi: self.qoi,
        })
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> Result<String> {
        Ok(super::sha256_hex(serde_json::to_string(self)?.as_bytes()))
    }
}
