//! Metropolis–Hastings on the driving noise with pCN proposals.
//!
//! The chain state is the standardized noise array of the finest corner.
//! pCN proposals leave `N(0, I)` invariant, so pushing them through
//! [`coupled_solve`] leaves the coupled prior invariant and the acceptance
//! ratio only involves `G_α`.

use log::warn;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::multi_index::CornerSet;
use crate::rng::{Purpose, StreamKey};
use crate::spde::{
    coupled_solve, Bases, CoupledSolution, DrivingNoise, ModelParams, ObservationConfig,
    Observer, QoiKind, Recording, Resolution,
};
use crate::target::{corner_weights, CornerWeights, Likelihood};

/// Everything needed to evaluate a noise array at every corner.
#[derive(Clone, Debug)]
pub struct CoupledModel {
    pub params: ModelParams,
    pub bases: Bases,
    pub observations: ObservationConfig,
    pub likelihood: Likelihood,
    pub qoi: QoiKind,
}

impl CoupledModel {
    /// The same model with `g ≡ 1`.
    pub fn prior(&self) -> Self {
        Self {
            likelihood: Likelihood::Flat,
            ..self.clone()
        }
    }

    pub fn evaluator<'a>(&'a self, corners: &'a CornerSet) -> Result<Evaluator<'a>> {
        Evaluator::new(self, corners)
    }
}

/// Solutions, QoI values and weights of one noise array.
#[derive(Clone, Debug)]
pub struct Evaluation {
    pub solution: CoupledSolution,
    pub phi: Vec<f64>,
    pub weights: CornerWeights,
}

/// Per-chain cache of resolutions, basis values and QoI weights.
pub struct Evaluator<'a> {
    model: &'a CoupledModel,
    corners: &'a CornerSet,
    fine: Resolution,
    observer: Option<Observer>,
    recording: Recording,
    qoi_weights: Vec<f64>,
}

impl<'a> Evaluator<'a> {
    fn new(model: &'a CoupledModel, corners: &'a CornerSet) -> Result<Self> {
        model.params.validate()?;
        let fine = Resolution::new(corners.finest(), model.bases, model.params.t_final)?;
        let (observer, recording) = if model.likelihood.is_flat() {
            (None, Recording::Final)
        } else {
            model.observations.validate(model.params.t_final)?;
            (
                Some(Observer::new(&model.observations, fine.modes)),
                model.observations.recording(),
            )
        };
        Ok(Self {
            model,
            corners,
            qoi_weights: model.qoi.weights(fine.modes),
            fine,
            observer,
            recording,
        })
    }

    pub fn fine_resolution(&self) -> &Resolution {
        &self.fine
    }

    pub fn evaluate(&self, noise: &DrivingNoise) -> Result<Evaluation> {
        let solution = coupled_solve(
            self.corners,
            &self.model.params,
            self.model.bases,
            noise,
            &self.recording,
        )?;
        let phi = solution
            .paths
            .iter()
            .map(|p| {
                p.final_state()
                    .iter()
                    .zip(&self.qoi_weights)
                    .map(|(u, w)| u * w)
                    .sum()
            })
            .collect();
        let log_g = match &self.observer {
            None => vec![0.0; solution.len()],
            Some(obs) => solution
                .paths
                .iter()
                .map(|p| self.model.likelihood.log_value(&obs.observe(p)?))
                .collect::<Result<Vec<_>>>()?,
        };
        Ok(Evaluation {
            solution,
            phi,
            weights: corner_weights(&log_g)?,
        })
    }
}

/// `X' = √(1-ρ) X + √ρ η`, `η ~ N(0, I)`.
pub fn pcn_propose<R: Rng + ?Sized>(
    state: &DrivingNoise,
    rho: f64,
    rng: &mut R,
) -> Result<DrivingNoise> {
    let mut out = state.clone();
    pcn_propose_into(state, rho, rng, &mut out)?;
    Ok(out)
}

fn pcn_propose_into<R: Rng + ?Sized>(
    state: &DrivingNoise,
    rho: f64,
    rng: &mut R,
    out: &mut DrivingNoise,
) -> Result<()> {
    check_rho(rho)?;
    let keep = (1.0 - rho).sqrt();
    let fresh = rho.sqrt();
    for (o, &x) in out.as_mut_slice().iter_mut().zip(state.as_slice()) {
        let eta: f64 = rng.sample(StandardNormal);
        *o = keep * x + fresh * eta;
    }
    Ok(())
}

fn check_rho(rho: f64) -> Result<()> {
    if !(rho > 0.0 && rho <= 1.0) {
        return Err(Error::Config(format!("pCN step {rho} outside (0, 1]")));
    }
    Ok(())
}

/// Accept with probability `min(1, exp(log_proposed - log_current))`.
pub fn mh_accept<R: Rng + ?Sized>(log_current: f64, log_proposed: f64, rng: &mut R) -> Result<bool> {
    if !log_current.is_finite() {
        return Err(Error::NonFinite(log_current));
    }
    if log_proposed.is_nan() || log_proposed == f64::INFINITY {
        return Err(Error::NonFinite(log_proposed));
    }
    let diff = log_proposed - log_current;
    if diff >= 0.0 {
        return Ok(true);
    }
    let u: f64 = rng.random();
    Ok(u.ln() < diff)
}

/// Acceptance window and band for tuning `ρ` during burn-in.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Adaptation {
    pub low: f64,
    pub high: f64,
    pub window: usize,
}

impl Default for Adaptation {
    fn default() -> Self {
        Self {
            low: 0.4,
            high: 0.6,
            window: 100,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainConfig {
    pub rho: f64,
    pub n_steps: usize,
    /// `None` means 10% of `n_steps`, at least 1000.
    pub burn_in: Option<usize>,
    pub seed: u64,
    #[serde(default)]
    pub replicate: u64,
    pub adapt: Option<Adaptation>,
    /// Stream purpose; single-level runs use their own streams.
    #[serde(default)]
    pub purpose: Purpose,
}

impl Default for ChainConfig {
    fn default() -> Self {
        Self {
            rho: 0.1,
            n_steps: 10_000,
            burn_in: None,
            seed: 0,
            replicate: 0,
            adapt: Some(Adaptation::default()),
            purpose: Purpose::Chain,
        }
    }
}

impl ChainConfig {
    pub fn burn_in_steps(&self) -> usize {
        self.burn_in
            .unwrap_or_else(|| (self.n_steps / 10).max(1000))
    }

    fn validate(&self) -> Result<()> {
        check_rho(self.rho)?;
        if self.n_steps == 0 {
            return Err(Error::Config("chain needs at least one step".into()));
        }
        if let Some(a) = &self.adapt {
            if !(0.0 < a.low && a.low < a.high && a.high < 1.0) || a.window == 0 {
                return Err(Error::Config(format!("bad adaptation band {a:?}")));
            }
        }
        Ok(())
    }
}

/// Bisection on `log ρ` towards an acceptance rate inside `[low, high]`.
#[derive(Clone, Debug)]
pub struct RhoTuner {
    rho: f64,
    default_rho: f64,
    low: f64,
    high: f64,
    log_lo: Option<f64>,
    log_hi: Option<f64>,
    last_acceptance: Option<f64>,
}

const MIN_RHO: f64 = 1e-8;

impl RhoTuner {
    pub fn new(initial: f64, low: f64, high: f64) -> Self {
        Self {
            rho: initial,
            default_rho: initial,
            low,
            high,
            log_lo: None,
            log_hi: None,
            last_acceptance: None,
        }
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    /// Feed the acceptance rate observed at the current `ρ`; returns the next `ρ`.
    pub fn update(&mut self, acceptance: f64) -> f64 {
        self.last_acceptance = Some(acceptance);
        let log_rho = self.rho.ln();
        if acceptance > self.high {
            if self.rho >= 1.0 {
                return self.rho;
            }
            self.log_lo = Some(log_rho);
            if self.log_hi.is_some_and(|hi| hi <= log_rho) {
                self.log_hi = None;
            }
        } else if acceptance < self.low {
            self.log_hi = Some(log_rho);
            if self.log_lo.is_some_and(|lo| lo >= log_rho) {
                self.log_lo = None;
            }
        } else {
            return self.rho;
        }
        self.rho = match (self.log_lo, self.log_hi) {
            (Some(lo), Some(hi)) => (0.5 * (lo + hi)).exp(),
            (Some(_), None) => (4.0 * self.rho).min(1.0),
            (None, _) => (0.25 * self.rho).max(MIN_RHO),
        };
        self.rho
    }

    /// Freeze: keep `ρ` if the band was met, else the bracket midpoint,
    /// else fall back to the initial value.
    pub fn finish(&self) -> (f64, bool) {
        match self.last_acceptance {
            None => (self.rho, true),
            Some(a) if (self.low..=self.high).contains(&a) => (self.rho, true),
            Some(a) if a > self.high && self.rho >= 1.0 => (1.0, true),
            Some(_) => match (self.log_lo, self.log_hi) {
                (Some(lo), Some(hi)) => ((0.5 * (lo + hi)).exp(), true),
                _ => (self.default_rho, false),
            },
        }
    }
}

/// Run pilot windows through `acceptance_at` and return the frozen `ρ`.
pub fn tune_rho(
    initial: f64,
    adaptation: &Adaptation,
    windows: usize,
    mut acceptance_at: impl FnMut(f64) -> f64,
) -> f64 {
    let mut tuner = RhoTuner::new(initial, adaptation.low, adaptation.high);
    for _ in 0..windows {
        let acc = acceptance_at(tuner.rho());
        tuner.update(acc);
    }
    let (rho, ok) = tuner.finish();
    if !ok {
        warn!("pCN step failed to bracket the acceptance band; using rho = {rho}");
    }
    rho
}

/// One retained chain step.
#[derive(Clone, Debug, PartialEq)]
pub struct ChainRecord {
    pub phi: Vec<f64>,
    pub h: Vec<f64>,
    pub accepted: bool,
}

/// What the sink sees: the record plus the current coupled solution.
pub struct ChainStep<'e> {
    pub index: usize,
    pub record: &'e ChainRecord,
    pub evaluation: &'e Evaluation,
    pub state: &'e DrivingNoise,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainSummary {
    pub n_steps: usize,
    pub burn_in: usize,
    pub acceptance_rate: f64,
    pub burn_in_acceptance: f64,
    pub rho: f64,
}

/// Run a `Π_α`-invariant chain over `corners`, streaming each retained step to `sink`.
pub fn run_chain(
    model: &CoupledModel,
    corners: &CornerSet,
    config: &ChainConfig,
    mut sink: impl FnMut(&ChainStep<'_>),
) -> Result<ChainSummary> {
    config.validate()?;
    let evaluator = model.evaluator(corners)?;
    let key = StreamKey::new(config.seed, config.purpose)
        .alpha(corners.base())
        .replicate(config.replicate);
    let mut rng = key.rng();

    let burn_in = config.burn_in_steps();
    let mut state = DrivingNoise::for_resolution(evaluator.fine_resolution(), &mut rng);
    let mut proposal = state.clone();
    let mut current = evaluator.evaluate(&state)?;

    let mut rho = config.rho;
    let mut tuner = config
        .adapt
        .as_ref()
        .map(|a| (RhoTuner::new(rho, a.low, a.high), a.window));
    let mut window_accepts = 0usize;
    let mut window_len = 0usize;
    let mut burn_accepts = 0usize;
    let mut kept_accepts = 0usize;

    for step in 0..burn_in + config.n_steps {
        if step == burn_in {
            if let Some((t, _)) = tuner.take() {
                let (frozen, ok) = t.finish();
                if !ok {
                    warn!(
                        "pCN tuning at {} did not bracket the acceptance band; using rho = {frozen}",
                        corners.base()
                    );
                }
                rho = frozen;
            }
        }
        pcn_propose_into(&state, rho, &mut rng, &mut proposal)?;
        let candidate = evaluator.evaluate(&proposal)?;
        let accepted = mh_accept(current.weights.log_max, candidate.weights.log_max, &mut rng)?;
        if accepted {
            std::mem::swap(&mut state, &mut proposal);
            current = candidate;
        }

        if step < burn_in {
            burn_accepts += usize::from(accepted);
            if let Some((t, window)) = tuner.as_mut() {
                window_accepts += usize::from(accepted);
                window_len += 1;
                if window_len == *window {
                    rho = t.update(window_accepts as f64 / window_len as f64);
                    window_accepts = 0;
                    window_len = 0;
                }
            }
        } else {
            kept_accepts += usize::from(accepted);
            let record = ChainRecord {
                phi: current.phi.clone(),
                h: current.weights.h.clone(),
                accepted,
            };
            sink(&ChainStep {
                index: step - burn_in,
                record: &record,
                evaluation: &current,
                state: &state,
            });
        }
    }

    Ok(ChainSummary {
        n_steps: config.n_steps,
        burn_in,
        acceptance_rate: kept_accepts as f64 / config.n_steps as f64,
        burn_in_acceptance: if burn_in > 0 {
            burn_accepts as f64 / burn_in as f64
        } else {
            f64::NAN
        },
        rho,
    })
}

/// Convenience wrapper collecting every record.
pub fn collect_chain(
    model: &CoupledModel,
    corners: &CornerSet,
    config: &ChainConfig,
) -> Result<(Vec<ChainRecord>, ChainSummary)> {
    let mut records = Vec::with_capacity(config.n_steps);
    let summary = run_chain(model, corners, config, |s| records.push(s.record.clone()))?;
    Ok((records, summary))
}
