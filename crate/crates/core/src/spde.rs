//! Coupled exponential-Euler solver for the stochastic heat equation
//!
//! ```text
//! du = (∂²u/∂x² + θu) dt + σ dW,   x ∈ (0, 1),  Dirichlet boundaries,
//! ```
//!
//! in the sine basis `e_k(x) = √2 sin(kπx)`. Each mode is an independent
//! scalar SDE. A level `α = (α_x, α_t)` keeps `K_α = K_0 2^{α_x}` modes and
//! `M_α = M_0 2^{α_t}` time steps. One [`DrivingNoise`] array at the finest
//! corner is pushed to every coarser corner: fewer modes keep the leading
//! rows, and a halved time grid merges consecutive scaled increments.

use std::f64::consts::{PI, SQRT_2};

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::multi_index::{CornerSet, MultiIndex};

const GRID_TOL: f64 = 1e-9;

/// Initial modal coefficients `u_{k,0}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialModes {
    /// Every mode starts at the same value.
    Constant(f64),
    /// Explicit values for `k = 1..=len`; higher modes start at zero.
    Explicit(Vec<f64>),
}

impl InitialModes {
    pub fn value(&self, k: usize) -> f64 {
        match self {
            InitialModes::Constant(c) => *c,
            InitialModes::Explicit(v) => v.get(k - 1).copied().unwrap_or(0.0),
        }
    }
}

impl Default for InitialModes {
    fn default() -> Self {
        InitialModes::Constant(1.0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub theta: f64,
    pub sigma: f64,
    pub t_final: f64,
    #[serde(default)]
    pub u0: InitialModes,
}

impl Default for ModelParams {
    fn default() -> Self {
        Self {
            theta: 0.5,
            sigma: 1.0,
            t_final: 1.0,
            u0: InitialModes::default(),
        }
    }
}

impl ModelParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.theta < PI * PI) {
            return Err(Error::Config(format!(
                "theta {} must be below pi^2 for all modes to be stable",
                self.theta
            )));
        }
        if !(self.sigma >= 0.0) {
            return Err(Error::Config(format!("sigma {} must be >= 0", self.sigma)));
        }
        if !(self.t_final > 0.0) {
            return Err(Error::Config(format!(
                "final time {} must be positive",
                self.t_final
            )));
        }
        Ok(())
    }
}

/// Base resolutions `K_0` and `M_0`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Bases {
    pub k0: usize,
    pub m0: usize,
}

impl Default for Bases {
    fn default() -> Self {
        Self { k0: 2, m0: 20 }
    }
}

/// Mode and step counts of one level.
#[derive(Clone, Debug, PartialEq)]
pub struct Resolution {
    pub alpha: MultiIndex,
    pub modes: usize,
    pub steps: usize,
    pub step: f64,
}

impl Resolution {
    pub fn new(alpha: &MultiIndex, bases: Bases, t_final: f64) -> Result<Self> {
        if alpha.dim() != 2 {
            return Err(Error::Config(format!(
                "SPDE levels are (alpha_x, alpha_t); got {alpha}"
            )));
        }
        if bases.k0 == 0 || bases.m0 == 0 {
            return Err(Error::Config("base resolutions must be positive".into()));
        }
        let (ax, at) = (alpha.get(0), alpha.get(1));
        if ax > 40 || at > 40 {
            return Err(Error::Config(format!("level {alpha} is too deep")));
        }
        let modes = bases.k0 << ax;
        let steps = bases.m0 << at;
        Ok(Self {
            alpha: alpha.clone(),
            modes,
            steps,
            step: t_final / steps as f64,
        })
    }

    /// Work units `K_α M_α` for one evaluation.
    pub fn cost(&self) -> f64 {
        (self.modes as f64) * (self.steps as f64)
    }

    /// Step index of time `t`, if it lies on the grid.
    pub fn step_of(&self, t: f64) -> Result<usize> {
        grid_step(t, self.step)
    }
}

fn grid_step(t: f64, step: f64) -> Result<usize> {
    let n = (t / step).round();
    if n < 0.0 || (n * step - t).abs() > GRID_TOL * t.abs().max(1.0) {
        return Err(Error::OffGrid { time: t, step });
    }
    Ok(n as usize)
}

/// `√2 sin(kπx)`, with exact zeros and extrema where `kx` is a multiple of 1/2.
pub fn sine_basis(k: usize, x: f64) -> f64 {
    let r = (k as f64 * x).rem_euclid(2.0);
    if r == 0.0 || r == 1.0 {
        0.0
    } else if r == 0.5 {
        SQRT_2
    } else if r == 1.5 {
        -SQRT_2
    } else {
        SQRT_2 * (PI * r).sin()
    }
}

/// One step of the exponential-Euler recursion for mode `k`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ModeStep {
    /// `e^{-π²k²h}`.
    pub decay: f64,
    /// `θ (1 - e^{-π²k²h}) / (π²k²)`.
    pub drift: f64,
    /// Standard deviation of the scaled increment `ξ_{k,n}`.
    pub noise_sd: f64,
}

impl ModeStep {
    pub fn new(params: &ModelParams, k: usize, h: f64) -> Self {
        let lambda = PI * PI * (k * k) as f64;
        let one_minus_decay = -(-lambda * h).exp_m1();
        Self {
            decay: (-lambda * h).exp(),
            drift: params.theta * one_minus_decay / lambda,
            noise_sd: (step_noise_variance(params.sigma, k, h)).sqrt(),
        }
    }

    /// Multiplier applied to the current state.
    pub fn propagator(&self) -> f64 {
        self.decay + self.drift
    }
}

/// `σ²(1 - e^{-2π²k²h}) / (2π²k²)`, the variance of one scaled increment.
pub fn step_noise_variance(sigma: f64, k: usize, h: f64) -> f64 {
    let lambda = PI * PI * (k * k) as f64;
    sigma * sigma * (-(-2.0 * lambda * h).exp_m1()) / (2.0 * lambda)
}

/// Standardized normal draws, mode-major: row `k-1` holds the `M` steps of mode `k`.
#[derive(Clone, Debug, PartialEq)]
pub struct DrivingNoise {
    modes: usize,
    steps: usize,
    data: Vec<f64>,
}

impl DrivingNoise {
    pub fn standard<R: Rng + ?Sized>(modes: usize, steps: usize, rng: &mut R) -> Self {
        let data = (0..modes * steps)
            .map(|_| rng.sample::<f64, _>(StandardNormal))
            .collect();
        Self { modes, steps, data }
    }

    pub fn zeros(modes: usize, steps: usize) -> Self {
        Self {
            modes,
            steps,
            data: vec![0.0; modes * steps],
        }
    }

    pub fn from_vec(modes: usize, steps: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != modes * steps {
            return Err(Error::Shape {
                expected: format!("{} values ({modes}x{steps})", modes * steps),
                actual: data.len().to_string(),
            });
        }
        Ok(Self { modes, steps, data })
    }

    pub fn for_resolution<R: Rng + ?Sized>(res: &Resolution, rng: &mut R) -> Self {
        Self::standard(res.modes, res.steps, rng)
    }

    pub fn modes(&self) -> usize {
        self.modes
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn mode(&self, k: usize) -> &[f64] {
        &self.data[(k - 1) * self.steps..k * self.steps]
    }

    /// Keep the first `modes` rows.
    pub fn coarsen_space(&self, modes: usize) -> Result<Self> {
        if modes > self.modes {
            return Err(Error::Coarsen {
                what: "noise modes",
                from: self.modes,
                to: modes,
            });
        }
        Ok(Self {
            modes,
            steps: self.steps,
            data: self.data[..modes * self.steps].to_vec(),
        })
    }

    /// Apply the per-mode variance for step size `h`.
    pub fn scale(&self, params: &ModelParams, h: f64) -> Increments {
        let mut data = self.data.clone();
        for (k, row) in data.chunks_mut(self.steps).enumerate() {
            let sd = ModeStep::new(params, k + 1, h).noise_sd;
            row.iter_mut().for_each(|x| *x *= sd);
        }
        Increments {
            modes: self.modes,
            steps: self.steps,
            data,
        }
    }

    fn check_shape(&self, res: &Resolution) -> Result<()> {
        if self.modes != res.modes || self.steps != res.steps {
            return Err(Error::Shape {
                expected: format!("{}x{}", res.modes, res.steps),
                actual: format!("{}x{}", self.modes, self.steps),
            });
        }
        Ok(())
    }
}

/// Variance-scaled increments `ξ_{k,n}`, mode-major like [`DrivingNoise`].
#[derive(Clone, Debug, PartialEq)]
pub struct Increments {
    modes: usize,
    steps: usize,
    data: Vec<f64>,
}

impl Increments {
    pub fn from_vec(modes: usize, steps: usize, data: Vec<f64>) -> Result<Self> {
        DrivingNoise::from_vec(modes, steps, data).map(|n| Self {
            modes: n.modes,
            steps: n.steps,
            data: n.data,
        })
    }

    pub fn modes(&self) -> usize {
        self.modes
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn mode(&self, k: usize) -> &[f64] {
        &self.data[(k - 1) * self.steps..k * self.steps]
    }

    pub fn coarsen_space(&self, modes: usize) -> Result<Self> {
        if modes > self.modes {
            return Err(Error::Coarsen {
                what: "increment modes",
                from: self.modes,
                to: modes,
            });
        }
        Ok(Self {
            modes,
            steps: self.steps,
            data: self.data[..modes * self.steps].to_vec(),
        })
    }
}

/// Merge pairs of fine increments: `ξ̂_{k,n} = e^{-π²k²h} ξ_{k,2n} + ξ_{k,2n+1}`,
/// where `h` is the fine step.
pub fn coarsen_time(fine: &Increments, fine_step: f64) -> Result<Increments> {
    if fine.steps % 2 != 0 {
        return Err(Error::Coarsen {
            what: "time steps (odd count)",
            from: fine.steps,
            to: fine.steps / 2,
        });
    }
    let half = fine.steps / 2;
    let mut data = Vec::with_capacity(fine.modes * half);
    for k in 1..=fine.modes {
        let lambda = PI * PI * (k * k) as f64;
        let decay = (-lambda * fine_step).exp();
        let row = fine.mode(k);
        data.extend(row.chunks_exact(2).map(|p| decay * p[0] + p[1]));
    }
    Ok(Increments {
        modes: fine.modes,
        steps: half,
        data,
    })
}

/// Which time steps a solve keeps.
#[derive(Clone, Debug, PartialEq)]
pub enum Recording {
    /// Every step `0..=M`.
    Full,
    /// Only the final state.
    Final,
    /// The listed times (each must be on the grid) plus the final state.
    Times(Vec<f64>),
}

impl Recording {
    fn steps(&self, res: &Resolution) -> Result<Vec<usize>> {
        let mut steps = match self {
            Recording::Full => (0..=res.steps).collect(),
            Recording::Final => vec![res.steps],
            Recording::Times(times) => {
                let mut s = times
                    .iter()
                    .map(|&t| res.step_of(t))
                    .collect::<Result<Vec<_>>>()?;
                if let Some(&bad) = s.iter().find(|&&n| n > res.steps) {
                    return Err(Error::Config(format!(
                        "recorded step {bad} beyond final step {}",
                        res.steps
                    )));
                }
                s.push(res.steps);
                s
            }
        };
        steps.sort_unstable();
        steps.dedup();
        Ok(steps)
    }
}

/// Modal states at a set of recorded steps.
#[derive(Clone, Debug, PartialEq)]
pub struct ModalPath {
    modes: usize,
    steps: usize,
    step: f64,
    recorded: Vec<usize>,
    /// Time-major: snapshot `r` occupies `values[r*modes..(r+1)*modes]`.
    values: Vec<f64>,
}

impl ModalPath {
    pub fn modes(&self) -> usize {
        self.modes
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn step_size(&self) -> f64 {
        self.step
    }

    pub fn recorded_steps(&self) -> &[usize] {
        &self.recorded
    }

    /// State at step `n`, if recorded.
    pub fn state_at(&self, n: usize) -> Option<&[f64]> {
        let r = self.recorded.binary_search(&n).ok()?;
        Some(&self.values[r * self.modes..(r + 1) * self.modes])
    }

    /// State at time `t`.
    pub fn state_at_time(&self, t: f64) -> Result<&[f64]> {
        let n = grid_step(t, self.step)?;
        self.state_at(n)
            .ok_or_else(|| Error::Config(format!("time {t} (step {n}) was not recorded")))
    }

    /// `u_{k,M}` for all modes.
    pub fn final_state(&self) -> &[f64] {
        self.state_at(self.steps)
            .expect("the final state is always recorded")
    }

    /// Keep the first `modes` modes of every snapshot.
    pub fn coarsen_space(&self, modes: usize) -> Result<Self> {
        if modes > self.modes {
            return Err(Error::Coarsen {
                what: "solution modes",
                from: self.modes,
                to: modes,
            });
        }
        let values = self
            .values
            .chunks(self.modes)
            .flat_map(|s| s[..modes].iter().copied())
            .collect();
        Ok(Self {
            modes,
            steps: self.steps,
            step: self.step,
            recorded: self.recorded.clone(),
            values,
        })
    }
}

/// Run the recursion on already-scaled increments.
pub fn solve_increments(
    params: &ModelParams,
    res: &Resolution,
    increments: &Increments,
    recording: &Recording,
) -> Result<ModalPath> {
    if increments.modes < res.modes || increments.steps != res.steps {
        return Err(Error::Shape {
            expected: format!("at least {} modes x {} steps", res.modes, res.steps),
            actual: format!("{}x{}", increments.modes, increments.steps),
        });
    }
    let recorded = recording.steps(res)?;
    let modes = res.modes;
    let mut values = vec![0.0; recorded.len() * modes];
    for k in 1..=modes {
        let a = ModeStep::new(params, k, res.step).propagator();
        let xi = increments.mode(k);
        let mut u = params.u0.value(k);
        let mut next = 0;
        if recorded[0] == 0 {
            values[k - 1] = u;
            next = 1;
        }
        for (n, &x) in xi.iter().enumerate() {
            u = a * u + x;
            if next < recorded.len() && recorded[next] == n + 1 {
                values[next * modes + k - 1] = u;
                next += 1;
            }
        }
    }
    Ok(ModalPath {
        modes,
        steps: res.steps,
        step: res.step,
        recorded,
        values,
    })
}

/// Full path `u_{k,n}`, `k = 1..=K`, `n = 0..=M`, from standardized noise.
pub fn exp_euler_solve(
    params: &ModelParams,
    res: &Resolution,
    noise: &DrivingNoise,
) -> Result<ModalPath> {
    noise.check_shape(res)?;
    let increments = noise.scale(params, res.step);
    solve_increments(params, res, &increments, &Recording::Full)
}

/// Solutions at every corner of a stencil, all driven by one noise array.
#[derive(Clone, Debug)]
pub struct CoupledSolution {
    pub resolutions: Vec<Resolution>,
    pub paths: Vec<ModalPath>,
}

impl CoupledSolution {
    pub fn len(&self) -> usize {
        self.paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }
}

/// Push `noise`, shaped for the finest corner, through every corner of `corners`.
pub fn coupled_solve(
    corners: &CornerSet,
    params: &ModelParams,
    bases: Bases,
    noise: &DrivingNoise,
    recording: &Recording,
) -> Result<CoupledSolution> {
    let fine = Resolution::new(corners.finest(), bases, params.t_final)?;
    noise.check_shape(&fine)?;
    let fine_incr = noise.scale(params, fine.step);

    let resolutions = corners
        .corners()
        .iter()
        .map(|c| Resolution::new(c, bases, params.t_final))
        .collect::<Result<Vec<_>>>()?;

    let time_coarse_modes = resolutions
        .iter()
        .filter(|r| r.steps != fine.steps)
        .map(|r| r.modes)
        .max();
    let coarse_incr = match time_coarse_modes {
        Some(modes) => Some(coarsen_time(&fine_incr.coarsen_space(modes)?, fine.step)?),
        None => None,
    };

    let paths = resolutions
        .iter()
        .map(|res| {
            let incr = if res.steps == fine.steps {
                &fine_incr
            } else if Some(res.steps * 2) == Some(fine.steps) {
                coarse_incr.as_ref().expect("computed above")
            } else {
                return Err(Error::Config(format!(
                    "corner {} is more than one time level below {}",
                    res.alpha, fine.alpha
                )));
            };
            solve_increments(params, res, incr, recording)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CoupledSolution { resolutions, paths })
}

/// Observation times, locations and noise level.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObservationConfig {
    pub times: Vec<f64>,
    pub locations: Vec<f64>,
    pub tau2: f64,
}

impl ObservationConfig {
    /// `t_j = jT/m` at `x ∈ {1/3, 2/3}`.
    pub fn uniform(m: usize, t_final: f64, tau2: f64) -> Self {
        Self {
            times: (1..=m).map(|j| j as f64 * t_final / m as f64).collect(),
            locations: vec![1.0 / 3.0, 2.0 / 3.0],
            tau2,
        }
    }

    /// Length of `𝒢(u)`.
    pub fn len(&self) -> usize {
        self.times.len() * self.locations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn validate(&self, t_final: f64) -> Result<()> {
        if self.times.is_empty() || self.locations.is_empty() {
            return Err(Error::Config("no observations configured".into()));
        }
        if !(self.tau2 > 0.0) {
            return Err(Error::Config(format!("tau^2 {} must be positive", self.tau2)));
        }
        for &t in &self.times {
            if !(t > 0.0 && t <= t_final * (1.0 + GRID_TOL)) {
                return Err(Error::Config(format!("observation time {t} outside (0, T]")));
            }
        }
        Ok(())
    }

    pub fn recording(&self) -> Recording {
        Recording::Times(self.times.clone())
    }
}

/// Precomputed basis values for fast repeated observation.
#[derive(Clone, Debug)]
pub struct Observer {
    times: Vec<f64>,
    /// `basis[l][k-1] = e_k(x_l)`.
    basis: Vec<Vec<f64>>,
}

impl Observer {
    pub fn new(config: &ObservationConfig, modes: usize) -> Self {
        let basis = config
            .locations
            .iter()
            .map(|&x| (1..=modes).map(|k| sine_basis(k, x)).collect())
            .collect();
        Self {
            times: config.times.clone(),
            basis,
        }
    }

    pub fn observe(&self, path: &ModalPath) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(self.times.len() * self.basis.len());
        let states = self
            .times
            .iter()
            .map(|&t| path.state_at_time(t))
            .collect::<Result<Vec<_>>>()?;
        for basis in &self.basis {
            if basis.len() < path.modes() {
                return Err(Error::Shape {
                    expected: format!("at most {} modes", basis.len()),
                    actual: path.modes().to_string(),
                });
            }
            for u in &states {
                out.push(u.iter().zip(basis).map(|(a, b)| a * b).sum());
            }
        }
        Ok(out)
    }
}

/// `𝒢(u)`: first all times at the first location, then the second location.
pub fn observe(path: &ModalPath, config: &ObservationConfig) -> Result<Vec<f64>> {
    Observer::new(config, path.modes()).observe(path)
}

/// Which functional of the final state is the quantity of interest.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum QoiKind {
    /// `Σ_k k⁻¹ u_k(T) e_k(1/2)`.
    #[default]
    Weighted,
    /// The point value `u(1/2, T) = Σ_k u_k(T) e_k(1/2)`.
    PointValue,
}

impl QoiKind {
    pub fn weight(self, k: usize) -> f64 {
        let e = sine_basis(k, 0.5);
        match self {
            QoiKind::Weighted => e / k as f64,
            QoiKind::PointValue => e,
        }
    }

    pub fn weights(self, modes: usize) -> Vec<f64> {
        (1..=modes).map(|k| self.weight(k)).collect()
    }
}

/// `φ_α` from the final modal state.
pub fn qoi(path: &ModalPath, kind: QoiKind) -> f64 {
    qoi_of_state(path.final_state(), kind)
}

pub fn qoi_of_state(state: &[f64], kind: QoiKind) -> f64 {
    state
        .iter()
        .enumerate()
        .map(|(i, u)| kind.weight(i + 1) * u)
        .sum()
}
