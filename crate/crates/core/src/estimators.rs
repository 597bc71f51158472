//! Increment estimators, the aggregate multi-index estimator, sample
//! allocation and rate fitting.
//!
//! Each summand `ΔE_α[φ_α]` of the telescoping sum is estimated from its own
//! chain on `Π_α`. The default estimator uses self-normalized ratios for
//! every corner:
//!
//! ```text
//! Σ_i s_i { Σ_j φ_{2i} H_{2i} / Σ_j H_{2i}  -  Σ_j φ_{2i-1} H_{2i-1} / Σ_j H_{2i-1} }
//! ```
//!
//! The simplified variant divides by known normalizers `E_{Π_α}[H_i]`
//! instead of the sample denominators.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::multi_index::{corners, CornerSet, MultiIndex, TensorIndexSet};
use crate::pcn::{run_chain, Adaptation, ChainConfig, ChainRecord, ChainSummary, CoupledModel};
use crate::rng::Purpose;
use crate::spde::{Bases, Resolution};
use crate::stats::least_squares;

/// Running corner sums `Σ φ_i H_i` and `Σ H_i`.
#[derive(Clone, Debug)]
pub struct IncrementAccumulator {
    corners: CornerSet,
    numer: Vec<f64>,
    denom: Vec<f64>,
    n: usize,
}

impl IncrementAccumulator {
    pub fn new(corners: &CornerSet) -> Self {
        let k = corners.len();
        Self {
            corners: corners.clone(),
            numer: vec![0.0; k],
            denom: vec![0.0; k],
            n: 0,
        }
    }

    pub fn push(&mut self, record: &ChainRecord) {
        for i in 0..self.numer.len() {
            self.numer[i] += record.phi[i] * record.h[i];
            self.denom[i] += record.h[i];
        }
        self.n += 1;
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Self-normalized estimate.
    pub fn finish(&self) -> Result<IncrementEstimate> {
        if self.n == 0 {
            return Err(Error::Config("no chain records".into()));
        }
        let ratios = self
            .numer
            .iter()
            .zip(&self.denom)
            .enumerate()
            .map(|(i, (&a, &b))| {
                if b > 0.0 {
                    Ok(a / b)
                } else {
                    Err(Error::ZeroDenominator { corner: i })
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(self.estimate(ratios))
    }

    /// Simplified estimate with externally known `E_{Π_α}[H_i]`.
    pub fn finish_simplified(&self, normalizers: &[f64]) -> Result<IncrementEstimate> {
        if self.n == 0 {
            return Err(Error::Config("no chain records".into()));
        }
        if normalizers.len() != self.numer.len() {
            return Err(Error::Shape {
                expected: format!("{} normalizers", self.numer.len()),
                actual: normalizers.len().to_string(),
            });
        }
        let n = self.n as f64;
        let ratios = self
            .numer
            .iter()
            .zip(normalizers)
            .enumerate()
            .map(|(i, (&a, &c))| {
                if c > 0.0 {
                    Ok((a / n) / c)
                } else {
                    Err(Error::Normalizer { corner: i, value: c })
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(self.estimate(ratios))
    }

    fn estimate(&self, ratios: Vec<f64>) -> IncrementEstimate {
        let value = combine(&self.corners, &ratios);
        IncrementEstimate {
            alpha: self.corners.base().clone(),
            value,
            numer: self.numer.clone(),
            denom: self.denom.clone(),
            corner_ratios: ratios,
            n: self.n,
            cost: 0.0,
        }
    }
}

/// `Σ_i s_i (r_{2i} - r_{2i-1})`, or `r_1` for a single corner.
fn combine(corners: &CornerSet, ratios: &[f64]) -> f64 {
    if corners.pair_count() == 0 {
        return ratios[0];
    }
    corners
        .pair_signs()
        .iter()
        .enumerate()
        .map(|(i, s)| s * (ratios[2 * i + 1] - ratios[2 * i]))
        .sum()
}

/// Estimate of one summand `ΔE_α[φ_α]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IncrementEstimate {
    pub alpha: MultiIndex,
    pub value: f64,
    pub numer: Vec<f64>,
    pub denom: Vec<f64>,
    pub corner_ratios: Vec<f64>,
    pub n: usize,
    pub cost: f64,
}

pub fn increment_self_normalized(
    records: &[ChainRecord],
    corners: &CornerSet,
) -> Result<IncrementEstimate> {
    let mut acc = IncrementAccumulator::new(corners);
    records.iter().for_each(|r| acc.push(r));
    acc.finish()
}

pub fn increment_simplified(
    records: &[ChainRecord],
    corners: &CornerSet,
    normalizers: &[f64],
) -> Result<IncrementEstimate> {
    let mut acc = IncrementAccumulator::new(corners);
    records.iter().for_each(|r| acc.push(r));
    acc.finish_simplified(normalizers)
}

/// Work units per chain step at `alpha`: `K_α M_α`.
pub fn cost_model(alpha: &MultiIndex, bases: Bases) -> f64 {
    Resolution::new(alpha, bases, 1.0)
        .map(|r| r.cost())
        .unwrap_or(f64::INFINITY)
}

/// Chain settings shared by every index of an estimator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainSettings {
    pub rho: f64,
    /// Fraction of `N_α` spent on burn-in, subject to `burn_in_min`.
    pub burn_in_fraction: f64,
    pub burn_in_min: usize,
    pub adapt: Option<Adaptation>,
    /// Count burn-in steps in the reported cost.
    #[serde(default)]
    pub cost_includes_burn_in: bool,
}

impl Default for ChainSettings {
    fn default() -> Self {
        Self {
            rho: 0.1,
            burn_in_fraction: 0.1,
            burn_in_min: 1000,
            adapt: Some(Adaptation::default()),
            cost_includes_burn_in: false,
        }
    }
}

impl ChainSettings {
    pub fn chain_config(&self, n_steps: usize, seed: u64, replicate: u64) -> ChainConfig {
        let burn = ((self.burn_in_fraction * n_steps as f64).ceil() as usize).max(self.burn_in_min);
        ChainConfig {
            rho: self.rho,
            n_steps,
            burn_in: Some(burn),
            seed,
            replicate,
            adapt: self.adapt.clone(),
            purpose: Purpose::Chain,
        }
    }

    fn charged_steps(&self, config: &ChainConfig) -> usize {
        if self.cost_includes_burn_in {
            config.n_steps + config.burn_in_steps()
        } else {
            config.n_steps
        }
    }
}

/// Run one chain on the stencil at `alpha` and return its self-normalized increment.
pub fn estimate_increment(
    model: &CoupledModel,
    alpha: &MultiIndex,
    n_steps: usize,
    settings: &ChainSettings,
    seed: u64,
    replicate: u64,
) -> Result<(IncrementEstimate, ChainSummary)> {
    let set = corners(alpha);
    let config = settings.chain_config(n_steps, seed, replicate);
    let mut acc = IncrementAccumulator::new(&set);
    let summary = run_chain(model, &set, &config, |s| acc.push(s.record))?;
    let mut est = acc.finish()?;
    est.cost = settings.charged_steps(&config) as f64 * cost_model(alpha, model.bases);
    Ok((est, summary))
}

/// Aggregate estimate `Σ_α Δ̂_α` with its parts.
#[derive(Clone, Debug, PartialEq)]
pub struct MimcmcEstimate {
    pub value: f64,
    pub cost: f64,
    pub increments: Vec<IncrementEstimate>,
    pub summaries: Vec<ChainSummary>,
}

/// Sum of independent increment estimates, one chain per index.
pub fn mimcmc_estimate(
    model: &CoupledModel,
    plan: &[(MultiIndex, usize)],
    settings: &ChainSettings,
    seed: u64,
    replicate: u64,
) -> Result<MimcmcEstimate> {
    if plan.is_empty() {
        return Err(Error::Config("empty index set".into()));
    }
    if let Some((alpha, _)) = plan.iter().find(|(_, n)| *n == 0) {
        return Err(Error::Config(format!("N at {alpha} must be at least 1")));
    }
    let parts = plan
        .par_iter()
        .map(|(alpha, n)| estimate_increment(model, alpha, *n, settings, seed, replicate))
        .collect::<Result<Vec<_>>>()?;
    // fixed-order reduction
    let value = parts.iter().map(|(e, _)| e.value).sum();
    let cost = parts.iter().map(|(e, _)| e.cost).sum();
    let (increments, summaries) = parts.into_iter().unzip();
    Ok(MimcmcEstimate {
        value,
        cost,
        increments,
        summaries,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct SingleLevelEstimate {
    pub alpha: MultiIndex,
    pub value: f64,
    pub n: usize,
    pub cost: f64,
    pub summary: ChainSummary,
}

/// Plain ergodic average of `φ_α` from a chain on `π_α`.
pub fn single_level_mcmc(
    model: &CoupledModel,
    alpha: &MultiIndex,
    n_steps: usize,
    settings: &ChainSettings,
    seed: u64,
    replicate: u64,
) -> Result<SingleLevelEstimate> {
    let set = CornerSet::single(alpha.clone());
    let config = ChainConfig {
        purpose: Purpose::SingleLevel,
        ..settings.chain_config(n_steps, seed, replicate)
    };
    let mut acc = IncrementAccumulator::new(&set);
    let summary = run_chain(model, &set, &config, |s| acc.push(s.record))?;
    let est = acc.finish()?;
    Ok(SingleLevelEstimate {
        alpha: alpha.clone(),
        value: est.value,
        n: est.n,
        cost: settings.charged_steps(&config) as f64 * cost_model(alpha, model.bases),
        summary,
    })
}

/// Samples per index for a target RMSE.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AllocationPlan {
    pub epsilon: f64,
    pub max_levels: Vec<u32>,
    pub n_per_index: Vec<(MultiIndex, usize)>,
    pub predicted_cost: f64,
    /// Indices where the formula fell below one sample and was floored.
    pub floored: Vec<MultiIndex>,
}

impl AllocationPlan {
    pub fn total_samples(&self) -> usize {
        self.n_per_index.iter().map(|(_, n)| n).sum()
    }

    pub fn samples_at(&self, alpha: &MultiIndex) -> Option<usize> {
        self.n_per_index
            .iter()
            .find(|(a, _)| a == alpha)
            .map(|(_, n)| *n)
    }

    pub fn is_floor_dominated(&self) -> bool {
        !self.floored.is_empty()
    }
}

/// Per-index variance and cost used by [`allocate_general`].
#[derive(Clone, Debug, PartialEq)]
pub struct IndexCost {
    pub alpha: MultiIndex,
    pub variance: f64,
    pub cost: f64,
}

/// `N_α = ⌈ε⁻² K_I (V_α/C_α)^{1/2}⌉` with `K_I = Σ_α (V_α C_α)^{1/2}`.
pub fn allocate_general(epsilon: f64, rates: &[IndexCost]) -> Result<AllocationPlan> {
    if rates.is_empty() {
        return Err(Error::Config("empty index set".into()));
    }
    if !(epsilon > 0.0) {
        return Err(Error::Config(format!("epsilon {epsilon} must be positive")));
    }
    if let Some(bad) = rates.iter().find(|r| !(r.variance > 0.0 && r.cost > 0.0)) {
        return Err(Error::Config(format!(
            "variance and cost at {} must be positive",
            bad.alpha
        )));
    }
    let k_i: f64 = rates.iter().map(|r| (r.variance * r.cost).sqrt()).sum();
    let mut floored = Vec::new();
    let n_per_index: Vec<(MultiIndex, usize)> = rates
        .iter()
        .map(|r| {
            let raw = k_i * (r.variance / r.cost).sqrt() / (epsilon * epsilon);
            if raw < 1.0 {
                floored.push(r.alpha.clone());
            }
            (r.alpha.clone(), ceil_at_least_one(raw))
        })
        .collect();
    let predicted_cost = n_per_index
        .iter()
        .zip(rates)
        .map(|((_, n), r)| *n as f64 * r.cost)
        .sum();
    let d = rates[0].alpha.dim();
    let max_levels = (0..d)
        .map(|j| rates.iter().map(|r| r.alpha.get(j)).max().unwrap_or(0))
        .collect();
    Ok(AllocationPlan {
        epsilon,
        max_levels,
        n_per_index,
        predicted_cost,
        floored,
    })
}

fn ceil_at_least_one(x: f64) -> usize {
    // guard against 512.0000000001 from rounding in the formula
    let r = x.round();
    let c = if (x - r).abs() <= 1e-9 * x.abs().max(1.0) {
        r
    } else {
        x.ceil()
    };
    (c as usize).max(1)
}

/// The tensor plan with `L_t = ⌈log₂(2/ε)⌉`, `L_x = 2L_t`,
/// `N_α = ⌈ε⁻² L_x 2^{-α_x - 3α_t/2}⌉`.
pub fn allocate_spde(epsilon: f64, bases: Bases) -> Result<AllocationPlan> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::Config(format!("epsilon {epsilon} outside (0, 1)")));
    }
    let l_t = ceil_at_least_one((2.0 / epsilon).log2()) as u32;
    spde_plan(epsilon, l_t, bases)
}

/// The same plan at precision level `l`: `L_t = l`, `ε = 2^{1-l}`.
///
/// Matches [`allocate_spde`] for `l ≥ 2` and extends it to `l = 1`, whose
/// `ε = 1` lies outside that function's domain.
pub fn allocate_spde_level(level: u32, bases: Bases) -> Result<AllocationPlan> {
    if level == 0 {
        return Err(Error::Config("precision level must be at least 1".into()));
    }
    spde_plan((1.0 - level as f64).exp2(), level, bases)
}

fn spde_plan(epsilon: f64, l_t: u32, bases: Bases) -> Result<AllocationPlan> {
    let l_x = 2 * l_t;
    let set = TensorIndexSet::new(vec![l_x, l_t])?;
    let mut floored = Vec::new();
    let n_per_index: Vec<(MultiIndex, usize)> = set
        .indices()
        .into_iter()
        .map(|alpha| {
            let exponent = -(alpha.get(0) as f64) - 1.5 * alpha.get(1) as f64;
            let raw = l_x as f64 * exponent.exp2() / (epsilon * epsilon);
            if raw < 1.0 {
                floored.push(alpha.clone());
            }
            (alpha, ceil_at_least_one(raw))
        })
        .collect();
    let predicted_cost = n_per_index
        .iter()
        .map(|(a, n)| *n as f64 * cost_model(a, bases))
        .sum();
    Ok(AllocationPlan {
        epsilon,
        max_levels: vec![l_x, l_t],
        n_per_index,
        predicted_cost,
        floored,
    })
}

/// Least-squares fit of `log₂ value` on `(α, 1)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    /// Regression slopes, one per dimension (the negated decay rates).
    pub slopes: Vec<f64>,
    pub slope_std_errors: Vec<f64>,
    pub intercept: f64,
}

impl RateFit {
    /// Decay rates `β̂_i = -slope_i`.
    pub fn rates(&self) -> Vec<f64> {
        self.slopes.iter().map(|s| -s).collect()
    }
}

pub fn fit_rates(samples: &[(MultiIndex, f64)]) -> Result<RateFit> {
    if samples.is_empty() {
        return Err(Error::DegenerateDesign);
    }
    let d = samples[0].0.dim();
    if let Some((a, v)) = samples.iter().find(|(_, v)| !(*v > 0.0)) {
        return Err(Error::Config(format!("non-positive value {v} at {a}")));
    }
    let rows: Vec<Vec<f64>> = samples
        .iter()
        .map(|(a, _)| {
            a.levels()
                .iter()
                .map(|&l| l as f64)
                .chain(std::iter::once(1.0))
                .collect()
        })
        .collect();
    let y: Vec<f64> = samples.iter().map(|(_, v)| v.log2()).collect();
    let fit = least_squares(&rows, &y)?;
    Ok(RateFit {
        slopes: fit.coefficients[..d].to_vec(),
        slope_std_errors: fit.std_errors[..d].to_vec(),
        intercept: fit.coefficients[d],
    })
}

/// Empirical per-index quantities.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IndexRates {
    pub alpha: MultiIndex,
    /// `V̂_α`.
    pub variance: f64,
    /// `|Δ̂E_α|`.
    pub mean_abs: f64,
    /// `C_α`.
    pub cost: f64,
}

/// Fitted weak (`w`), strong (`β`) and cost (`γ`) exponents.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    pub per_index: Vec<IndexRates>,
    pub weak: Vec<f64>,
    pub strong: Vec<f64>,
    pub cost: Vec<f64>,
}

pub fn rate_report(per_index: Vec<IndexRates>) -> Result<RateReport> {
    let col = |f: fn(&IndexRates) -> f64| -> Vec<(MultiIndex, f64)> {
        per_index.iter().map(|r| (r.alpha.clone(), f(r))).collect()
    };
    let strong = fit_rates(&col(|r| r.variance))?.rates();
    let weak = fit_rates(&col(|r| r.mean_abs))?.rates();
    let cost = fit_rates(&col(|r| r.cost))?.slopes;
    Ok(RateReport {
        per_index,
        weak,
        strong,
        cost,
    })
}
