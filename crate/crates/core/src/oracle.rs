//! Closed-form Gaussian machinery for the linear SPDE model.
//!
//! The continuum modes are independent Ornstein–Uhlenbeck processes with
//! rate `r_k = π²k² - θ`:
//!
//! ```text
//! E u_k(t)           = e^{-r_k t} u_{k,0}
//! Var u_k(t)         = σ² (1 - e^{-2 r_k t}) / (2 r_k)
//! Cov(u_k(s), u_k(t)) = e^{-r_k (t-s)} Var u_k(s),   s ≤ t
//! ```
//!
//! so observations and any linear QoI are jointly Gaussian and the posterior
//! follows from Gaussian conditioning. The same holds for the discrete
//! exponential-Euler model at a fixed level, which gives an exact reference
//! for chains run at that level.

use std::f64::consts::PI;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::multi_index::{corners, MultiIndex};
use crate::rng::{Purpose, StreamKey};
use crate::spde::{sine_basis, Bases, ModelParams, ObservationConfig, QoiKind, Resolution};
use crate::target::Likelihood;

/// A multivariate normal law.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianSpec {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl GaussianSpec {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        if cov.nrows() != mean.len() || cov.ncols() != mean.len() {
            return Err(Error::Shape {
                expected: format!("{0}x{0} covariance", mean.len()),
                actual: format!("{}x{}", cov.nrows(), cov.ncols()),
            });
        }
        Ok(Self { mean, cov })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Mean and variance of slot `i`.
    pub fn marginal(&self, i: usize) -> (f64, f64) {
        (self.mean[i], self.cov[(i, i)])
    }

    /// Smallest eigenvalue relative to the Frobenius norm.
    pub fn min_relative_eigenvalue(&self) -> f64 {
        let norm = self.cov.norm();
        if norm == 0.0 {
            return 0.0;
        }
        let sym = (&self.cov + self.cov.transpose()) * 0.5;
        sym.symmetric_eigenvalues().min() / norm
    }
}

/// QoI weights `c_k` applied to `u_k(T)`.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearQoi {
    pub weights: Vec<f64>,
}

impl LinearQoi {
    pub fn from_kind(kind: QoiKind, k_max: usize) -> Self {
        Self {
            weights: kind.weights(k_max),
        }
    }
}

fn mode_rate(params: &ModelParams, k: usize) -> Result<f64> {
    let r = PI * PI * (k * k) as f64 - params.theta;
    if r <= 0.0 {
        return Err(Error::UnstableMode {
            k,
            theta: params.theta,
        });
    }
    Ok(r)
}

/// Mean and variance of the continuum mode `u_k(t)`.
pub fn mode_moments(params: &ModelParams, k: usize, t: f64) -> Result<(f64, f64)> {
    let r = mode_rate(params, k)?;
    let mean = (-r * t).exp() * params.u0.value(k);
    let var = params.sigma * params.sigma * (-(-2.0 * r * t).exp_m1()) / (2.0 * r);
    Ok((mean, var))
}

/// Slot layout: every observation time at each location, then `φ` at `T`.
struct Slots {
    times: Vec<f64>,
    locations: Vec<Option<f64>>,
}

impl Slots {
    fn new(obs: &ObservationConfig, t_final: f64) -> Self {
        let mut times = Vec::new();
        let mut locations = Vec::new();
        for &x in &obs.locations {
            for &t in &obs.times {
                times.push(t);
                locations.push(Some(x));
            }
        }
        times.push(t_final);
        locations.push(None);
        Self { times, locations }
    }

    fn len(&self) -> usize {
        self.times.len()
    }
}

const MODE_CHUNK: usize = 512;

/// Joint law of `(𝒢(u), φ(u))` for the continuum model truncated at `k_max` modes.
pub fn joint_gaussian(
    params: &ModelParams,
    k_max: usize,
    obs: &ObservationConfig,
    qoi: &LinearQoi,
) -> Result<GaussianSpec> {
    params.validate()?;
    if k_max == 0 {
        return Err(Error::Config("k_max must be at least 1".into()));
    }
    if qoi.weights.len() < k_max {
        return Err(Error::Shape {
            expected: format!("{k_max} QoI weights"),
            actual: qoi.weights.len().to_string(),
        });
    }
    mode_rate(params, 1)?;
    let slots = Slots::new(obs, params.t_final);
    let n = slots.len();
    let basis: Vec<Vec<f64>> = obs
        .locations
        .iter()
        .map(|&x| (1..=k_max).map(|k| sine_basis(k, x)).collect())
        .collect();
    let loc_index: Vec<Option<usize>> = slots
        .locations
        .iter()
        .map(|l| l.map(|x| obs.locations.iter().position(|&y| y == x).unwrap()))
        .collect();

    let chunks: Vec<(usize, usize)> = (1..=k_max)
        .step_by(MODE_CHUNK)
        .map(|start| (start, (start + MODE_CHUNK - 1).min(k_max)))
        .collect();
    let partials: Vec<(Vec<f64>, Vec<f64>)> = chunks
        .par_iter()
        .map(|&(lo, hi)| {
            let mut mean = vec![0.0; n];
            let mut cov = vec![0.0; n * n];
            let mut w = vec![0.0; n];
            for k in lo..=hi {
                let r = PI * PI * (k * k) as f64 - params.theta;
                let u0 = params.u0.value(k);
                for i in 0..n {
                    w[i] = match loc_index[i] {
                        Some(l) => basis[l][k - 1],
                        None => qoi.weights[k - 1],
                    };
                }
                for i in 0..n {
                    if w[i] == 0.0 {
                        continue;
                    }
                    let ti = slots.times[i];
                    mean[i] += w[i] * (-r * ti).exp() * u0;
                    for j in i..n {
                        if w[j] == 0.0 {
                            continue;
                        }
                        let tj = slots.times[j];
                        let gap = (ti - tj).abs();
                        if r * gap > 745.0 {
                            continue;
                        }
                        let s = ti.min(tj);
                        let var = params.sigma * params.sigma * (-(-2.0 * r * s).exp_m1()) / (2.0 * r);
                        cov[i * n + j] += w[i] * w[j] * (-r * gap).exp() * var;
                    }
                }
            }
            (mean, cov)
        })
        .collect();

    let mut mean = DVector::zeros(n);
    let mut cov = DMatrix::zeros(n, n);
    for (m, c) in &partials {
        for i in 0..n {
            mean[i] += m[i];
            for j in i..n {
                cov[(i, j)] += c[i * n + j];
            }
        }
    }
    for i in 0..n {
        for j in 0..i {
            cov[(i, j)] = cov[(j, i)];
        }
    }
    let spec = GaussianSpec::new(mean, cov)?;
    let min_eig = spec.min_relative_eigenvalue();
    if min_eig < -1e-10 {
        return Err(Error::NotPositiveDefinite(format!(
            "smallest relative eigenvalue {min_eig:e}"
        )));
    }
    Ok(spec)
}

fn cholesky_with_jitter(m: &DMatrix<f64>) -> Result<Cholesky<f64, Dyn>> {
    if let Some(c) = Cholesky::new(m.clone()) {
        return Ok(c);
    }
    let dim = m.nrows().max(1) as f64;
    let mut jitter = 1e-12 * m.trace() / dim;
    for _ in 0..6 {
        if jitter > 0.0 {
            let shifted = m + DMatrix::identity(m.nrows(), m.ncols()) * jitter;
            if let Some(c) = Cholesky::new(shifted) {
                return Ok(c);
            }
        }
        jitter *= 10.0;
    }
    Err(Error::NotPositiveDefinite(
        "factorization failed after regularization".into(),
    ))
}

fn check_observed(spec: &GaussianSpec, y: &[f64], tau2: f64) -> Result<()> {
    if y.len() > spec.dim() {
        return Err(Error::Shape {
            expected: format!("at most {} observations", spec.dim()),
            actual: y.len().to_string(),
        });
    }
    if !(tau2 > 0.0) {
        return Err(Error::Config(format!("tau^2 {tau2} must be positive")));
    }
    Ok(())
}

/// Posterior given noisy observations of the leading `y.len()` slots, in
/// information form: `Σ̂ = (τ⁻² HᵀH + Σ⁻¹)⁻¹`, `m̂ = Σ̂ (Σ⁻¹ m + τ⁻² Hᵀ y)`.
pub fn condition_on_data(spec: &GaussianSpec, y: &[f64], tau2: f64) -> Result<GaussianSpec> {
    check_observed(spec, y, tau2)?;
    let n = spec.dim();
    let prior_chol = cholesky_with_jitter(&spec.cov)?;
    let prior_precision = prior_chol.inverse();
    let mut precision = prior_precision.clone();
    let mut rhs = &prior_precision * &spec.mean;
    for (i, &yi) in y.iter().enumerate() {
        precision[(i, i)] += 1.0 / tau2;
        rhs[i] += yi / tau2;
    }
    let post_chol = cholesky_with_jitter(&precision)?;
    let mean = post_chol.solve(&rhs);
    let mut cov = post_chol.inverse();
    symmetrize(&mut cov);
    debug_assert_eq!(cov.nrows(), n);
    GaussianSpec::new(mean, cov)
}

/// The same posterior via the gain form
/// `m̂ = m + ΣHᵀ(HΣHᵀ + τ²I)⁻¹(y - Hm)`, `Σ̂ = Σ - ΣHᵀ(HΣHᵀ + τ²I)⁻¹HΣ`.
pub fn condition_covariance_form(
    spec: &GaussianSpec,
    y: &[f64],
    tau2: f64,
) -> Result<GaussianSpec> {
    check_observed(spec, y, tau2)?;
    let p = y.len();
    let n = spec.dim();
    let s_hh = spec.cov.view((0, 0), (p, p)).into_owned() + DMatrix::identity(p, p) * tau2;
    let s_xh = spec.cov.view((0, 0), (n, p)).into_owned();
    let chol = cholesky_with_jitter(&s_hh)?;
    let resid = DVector::from_iterator(p, y.iter().enumerate().map(|(i, yi)| yi - spec.mean[i]));
    let mean = &spec.mean + &s_xh * chol.solve(&resid);
    let gain_t = chol.solve(&s_xh.transpose());
    let mut cov = &spec.cov - &s_xh * gain_t;
    symmetrize(&mut cov);
    GaussianSpec::new(mean, cov)
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in 0..i {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// A continuum truth draw and its noisy observations.
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticData {
    /// `modes[j][k-1] = u_k(t_j)` over the sorted union of observation times and `T`.
    pub times: Vec<f64>,
    pub modes: Vec<Vec<f64>>,
    pub clean: Vec<f64>,
    pub y: Vec<f64>,
}

impl SyntheticData {
    pub fn final_modes(&self) -> &[f64] {
        self.modes.last().expect("at least the final time")
    }

    pub fn qoi(&self, qoi: &LinearQoi) -> f64 {
        self.final_modes()
            .iter()
            .zip(&qoi.weights)
            .map(|(u, w)| u * w)
            .sum()
    }
}

/// Sample every mode exactly at the observation times by chaining OU
/// transitions, then add `N(0, τ²)` observation noise.
pub fn generate_data(
    params: &ModelParams,
    k_max: usize,
    obs: &ObservationConfig,
    seed: u64,
) -> Result<SyntheticData> {
    let mut rng = StreamKey::new(seed, Purpose::Data).rng();
    sample_continuum(params, k_max, obs, &mut rng)
}

/// One continuum draw from `rng`; exposed for Monte Carlo checks.
pub fn sample_continuum<R: Rng + ?Sized>(
    params: &ModelParams,
    k_max: usize,
    obs: &ObservationConfig,
    rng: &mut R,
) -> Result<SyntheticData> {
    params.validate()?;
    obs.validate(params.t_final)?;
    let mut times: Vec<f64> = obs.times.clone();
    times.push(params.t_final);
    times.sort_by(f64::total_cmp);
    times.dedup_by(|a, b| (*a - *b).abs() < 1e-12);

    let mut modes = vec![vec![0.0; k_max]; times.len()];
    for k in 1..=k_max {
        let r = mode_rate(params, k)?;
        let mut u = params.u0.value(k);
        let mut prev = 0.0;
        for (j, &t) in times.iter().enumerate() {
            let dt = t - prev;
            let sd = (params.sigma * params.sigma * (-(-2.0 * r * dt).exp_m1()) / (2.0 * r)).sqrt();
            let z: f64 = rng.sample(StandardNormal);
            u = (-r * dt).exp() * u + sd * z;
            modes[j][k - 1] = u;
            prev = t;
        }
    }

    let basis: Vec<Vec<f64>> = obs
        .locations
        .iter()
        .map(|&x| (1..=k_max).map(|k| sine_basis(k, x)).collect())
        .collect();
    let mut clean = Vec::with_capacity(obs.len());
    for b in &basis {
        for &t in &obs.times {
            let j = times
                .iter()
                .position(|&s| (s - t).abs() < 1e-12)
                .expect("observation time is in the union");
            clean.push(modes[j].iter().zip(b).map(|(u, e)| u * e).sum::<f64>());
        }
    }
    let noise_sd = obs.tau2.sqrt();
    let y = clean
        .iter()
        .map(|g| g + noise_sd * rng.sample::<f64, _>(StandardNormal))
        .collect();
    Ok(SyntheticData {
        times,
        modes,
        clean,
        y,
    })
}

/// Joint law of the observation slots and `φ_α` for the discrete level-`α`
/// model, assembled from per-mode affine recursions.
pub fn discrete_joint_gaussian(
    alpha: &MultiIndex,
    params: &ModelParams,
    bases: Bases,
    obs: &ObservationConfig,
    qoi: QoiKind,
) -> Result<GaussianSpec> {
    params.validate()?;
    let res = Resolution::new(alpha, bases, params.t_final)?;
    let slots = Slots::new(obs, params.t_final);
    let steps: Vec<usize> = slots
        .times
        .iter()
        .map(|&t| res.step_of(t))
        .collect::<Result<_>>()?;
    let n = slots.len();
    let mut mean = DVector::zeros(n);
    let mut cov = DMatrix::zeros(n, n);
    let h = res.step;
    for k in 1..=res.modes {
        let lambda = PI * PI * (k * k) as f64;
        let decay = (-lambda * h).exp();
        let a = decay + params.theta * (1.0 - decay) / lambda;
        let s2 = params.sigma * params.sigma * (1.0 - (-2.0 * lambda * h).exp()) / (2.0 * lambda);
        // moments at every step by iterating the recursion
        let mut m_n = Vec::with_capacity(res.steps + 1);
        let mut v_n = Vec::with_capacity(res.steps + 1);
        let (mut m, mut v) = (params.u0.value(k), 0.0);
        for _ in 0..=res.steps {
            m_n.push(m);
            v_n.push(v);
            m *= a;
            v = a * a * v + s2;
        }
        let w: Vec<f64> = slots
            .locations
            .iter()
            .map(|l| match l {
                Some(x) => sine_basis(k, *x),
                None => qoi.weight(k),
            })
            .collect();
        for i in 0..n {
            mean[i] += w[i] * m_n[steps[i]];
            for j in i..n {
                let (lo, hi) = if steps[i] <= steps[j] {
                    (steps[i], steps[j])
                } else {
                    (steps[j], steps[i])
                };
                cov[(i, j)] += w[i] * w[j] * a.powi((hi - lo) as i32) * v_n[lo];
            }
        }
    }
    for i in 0..n {
        for j in 0..i {
            cov[(i, j)] = cov[(j, i)];
        }
    }
    GaussianSpec::new(mean, cov)
}

/// Posterior mean and variance of `φ_α` for the discrete level-`α` model.
pub fn discrete_posterior(
    alpha: &MultiIndex,
    params: &ModelParams,
    bases: Bases,
    obs: &ObservationConfig,
    likelihood: &Likelihood,
    qoi: QoiKind,
) -> Result<(f64, f64)> {
    let joint = discrete_joint_gaussian(alpha, params, bases, obs, qoi)?;
    let last = joint.dim() - 1;
    match likelihood {
        Likelihood::Flat => Ok(joint.marginal(last)),
        Likelihood::Gaussian(spec) => {
            let post = condition_covariance_form(&joint, &spec.y, spec.tau2)?;
            Ok(post.marginal(last))
        }
    }
}

/// Exact `ΔE_α[φ_α]` under the discrete priors (or posteriors).
pub fn exact_increment(
    alpha: &MultiIndex,
    params: &ModelParams,
    bases: Bases,
    obs: &ObservationConfig,
    likelihood: &Likelihood,
    qoi: QoiKind,
) -> Result<f64> {
    let set = corners(alpha);
    let mut total = 0.0;
    for (c, coef) in set.corners().iter().zip(set.coefficients()) {
        total += coef * discrete_posterior(c, params, bases, obs, likelihood, qoi)?.0;
    }
    Ok(total)
}

/// Continuum posterior mean and variance of the QoI.
pub fn continuum_posterior_qoi(
    params: &ModelParams,
    k_max: usize,
    obs: &ObservationConfig,
    y: &[f64],
    qoi: QoiKind,
) -> Result<(f64, f64)> {
    let joint = joint_gaussian(params, k_max, obs, &LinearQoi::from_kind(qoi, k_max))?;
    // the gain form stays well posed when σ = 0
    let post = condition_covariance_form(&joint, y, obs.tau2)?;
    Ok(post.marginal(post.dim() - 1))
}

/// Serialized synthetic data with everything needed to reproduce it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DataFixture {
    pub format_version: u32,
    pub seed: u64,
    pub params: ModelParams,
    pub k_max: usize,
    pub observations: ObservationConfig,
    pub y: Vec<f64>,
    pub clean_observations: Vec<f64>,
    pub truth_qoi_weighted: f64,
    pub truth_qoi_point: f64,
}

impl DataFixture {
    pub fn generate(
        params: &ModelParams,
        k_max: usize,
        obs: &ObservationConfig,
        seed: u64,
    ) -> Result<Self> {
        let data = generate_data(params, k_max, obs, seed)?;
        Ok(Self {
            format_version: 1,
            seed,
            params: params.clone(),
            k_max,
            observations: obs.clone(),
            truth_qoi_weighted: data.qoi(&LinearQoi::from_kind(QoiKind::Weighted, k_max)),
            truth_qoi_point: data.qoi(&LinearQoi::from_kind(QoiKind::PointValue, k_max)),
            clean_observations: data.clean,
            y: data.y,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn mode_moment_examples() {
        let p = ModelParams::default();
        let (m, v) = mode_moments(&p, 3, 0.0).unwrap();
        assert_eq!((m, v), (1.0, 0.0));

        let (_, v) = mode_moments(&p, 2, 50.0).unwrap();
        assert_relative_eq!(v, 1.0 / (2.0 * (4.0 * PI * PI - 0.5)), max_relative = 1e-14);

        let (m, v) = mode_moments(&p, 1, 1.0).unwrap();
        assert_relative_eq!(m, 8.527_711_728_260_876e-5, max_relative = 1e-13);
        assert_relative_eq!(v, 0.053_364_045_584_013_56, max_relative = 1e-13);

        let bad = ModelParams { theta: 12.0, ..ModelParams::default() };
        assert!(matches!(mode_moments(&bad, 1, 1.0), Err(Error::UnstableMode { k: 1, .. })));
    }

    #[test]
    fn zero_noise_joint_is_deterministic() {
        let p = ModelParams { sigma: 0.0, ..ModelParams::default() };
        let obs = ObservationConfig::uniform(2, 1.0, 0.1);
        let q = LinearQoi::from_kind(QoiKind::Weighted, 8);
        let g = joint_gaussian(&p, 8, &obs, &q).unwrap();
        assert!(g.cov.iter().all(|&c| c == 0.0));
        let expect: f64 = (1..=8)
            .map(|k| (-(PI * PI * (k * k) as f64 - 0.5) * 0.5).exp() * sine_basis(k, 1.0 / 3.0))
            .sum();
        assert_relative_eq!(g.mean[0], expect, max_relative = 1e-13);
    }

    #[test]
    fn single_mode_single_time_by_hand() {
        let p = ModelParams::default();
        let obs = ObservationConfig { times: vec![1.0], locations: vec![1.0 / 3.0, 2.0 / 3.0], tau2: 0.1 };
        let q = LinearQoi::from_kind(QoiKind::Weighted, 1);
        let g = joint_gaussian(&p, 1, &obs, &q).unwrap();
        let (m, v) = mode_moments(&p, 1, 1.0).unwrap();
        let b = [sine_basis(1, 1.0 / 3.0), sine_basis(1, 2.0 / 3.0), QoiKind::Weighted.weight(1)];
        for i in 0..3 {
            assert_relative_eq!(g.mean[i], b[i] * m, max_relative = 1e-14);
            for j in 0..3 {
                assert_relative_eq!(g.cov[(i, j)], b[i] * b[j] * v, max_relative = 1e-14);
            }
        }
    }

    #[test]
    fn joint_is_symmetric_and_psd() {
        let p = ModelParams::default();
        let obs = ObservationConfig::uniform(20, 1.0, 0.1);
        let g = joint_gaussian(&p, 2048, &obs, &LinearQoi::from_kind(QoiKind::Weighted, 2048)).unwrap();
        assert_eq!(g.dim(), 41);
        for i in 0..41 {
            for j in 0..41 {
                assert!((g.cov[(i, j)] - g.cov[(j, i)]).abs() <= 1e-14);
            }
        }
        assert!(g.min_relative_eigenvalue() > -1e-10);
    }

    #[test]
    fn scalar_conjugate_update() {
        let spec = GaussianSpec::new(DVector::from_vec(vec![1.0]), DMatrix::from_element(1, 1, 2.0)).unwrap();
        let post = condition_on_data(&spec, &[3.0], 0.5).unwrap();
        // precision 1/2 + 2, mean (1/2 + 6) / 2.5
        assert_relative_eq!(post.cov[(0, 0)], 1.0 / 2.5, max_relative = 1e-14);
        assert_relative_eq!(post.mean[0], 6.5 / 2.5, max_relative = 1e-14);
        let other = condition_covariance_form(&spec, &[3.0], 0.5).unwrap();
        assert_relative_eq!(other.mean[0], post.mean[0], max_relative = 1e-14);
    }

    #[test]
    fn vague_data_leaves_prior() {
        let spec = GaussianSpec::new(
            DVector::from_vec(vec![0.5, -1.0, 2.0]),
            DMatrix::from_row_slice(3, 3, &[2.0, 0.3, 0.1, 0.3, 1.0, 0.2, 0.1, 0.2, 1.5]),
        )
        .unwrap();
        let post = condition_on_data(&spec, &[10.0, -10.0], 1e14).unwrap();
        for i in 0..3 {
            assert!((post.mean[i] - spec.mean[i]).abs() < 1e-10);
            for j in 0..3 {
                assert!((post.cov[(i, j)] - spec.cov[(i, j)]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn both_conditioning_routes_agree() {
        let p = ModelParams::default();
        let obs = ObservationConfig::uniform(4, 1.0, 0.1);
        let g = joint_gaussian(&p, 256, &obs, &LinearQoi::from_kind(QoiKind::Weighted, 256)).unwrap();
        let y: Vec<f64> = (0..8).map(|i| 0.1 * i as f64 - 0.3).collect();
        let a = condition_on_data(&g, &y, 0.1).unwrap();
        let b = condition_covariance_form(&g, &y, 0.1).unwrap();
        for i in 0..g.dim() {
            assert!((a.mean[i] - b.mean[i]).abs() < 1e-10);
        }
    }

    #[test]
    fn ou_transition_factorizes() {
        let p = ModelParams::default();
        let (s, t) = (0.3, 0.7);
        for k in [1usize, 2, 5] {
            let r = PI * PI * (k * k) as f64 - p.theta;
            let (_, vs) = mode_moments(&p, k, s).unwrap();
            let (_, vt) = mode_moments(&p, k, t).unwrap();
            // Var u(t) = e^{-2r(t-s)} Var u(s) + transition variance
            let trans = (-(-2.0 * r * (t - s)).exp_m1()) / (2.0 * r);
            assert_relative_eq!(vt, (-2.0 * r * (t - s)).exp() * vs + trans, max_relative = 1e-13);
        }
    }

    #[test]
    fn zero_noise_data_is_clean_decay() {
        let p = ModelParams { sigma: 0.0, ..ModelParams::default() };
        let obs = ObservationConfig { tau2: 1e-300, ..ObservationConfig::uniform(4, 1.0, 0.1) };
        let data = generate_data(&p, 16, &obs, 1).unwrap();
        let g = joint_gaussian(&p, 16, &obs, &LinearQoi::from_kind(QoiKind::Weighted, 16)).unwrap();
        for (i, &yi) in data.y.iter().enumerate() {
            assert_relative_eq!(yi, g.mean[i], max_relative = 1e-10, epsilon = 1e-140);
        }
        assert_eq!(data, generate_data(&p, 16, &obs, 1).unwrap());
    }

    #[test]
    fn discrete_scalar_case() {
        let p = ModelParams::default();
        let bases = Bases { k0: 1, m0: 4 };
        let obs = ObservationConfig { times: vec![1.0], locations: vec![0.5], tau2: 0.2 };
        let alpha = MultiIndex::from([0, 0]);
        let joint = discrete_joint_gaussian(&alpha, &p, bases, &obs, QoiKind::Weighted).unwrap();
        // single mode: observation sqrt2 u, qoi sqrt2 u
        let (m, v) = joint.marginal(1);
        let y = 0.4;
        let like = Likelihood::Gaussian(crate::target::LikelihoodSpec::new(vec![y], 0.2).unwrap());
        let (pm, pv) = discrete_posterior(&alpha, &p, bases, &obs, &like, QoiKind::Weighted).unwrap();
        let gain = v / (v + 0.2);
        assert_relative_eq!(pm, m + gain * (y - m), max_relative = 1e-12);
        assert_relative_eq!(pv, v * (1.0 - gain), max_relative = 1e-12);
        let (fm, fv) = discrete_posterior(&alpha, &p, bases, &obs, &Likelihood::Flat, QoiKind::Weighted).unwrap();
        assert_eq!((fm, fv), (m, v));
    }

    #[test]
    fn discrete_moments_converge_to_continuum() {
        let p = ModelParams::default();
        let obs = ObservationConfig::uniform(4, 1.0, 0.1);
        let cont = joint_gaussian(&p, 64, &obs, &LinearQoi::from_kind(QoiKind::Weighted, 64)).unwrap();
        let mut prev = f64::INFINITY;
        for l in 0..5u32 {
            let alpha = MultiIndex::from([5, l]);
            let d = discrete_joint_gaussian(&alpha, &p, Bases::default(), &obs, QoiKind::Weighted).unwrap();
            let err = (d.cov[(0, 0)] - cont.cov[(0, 0)]).abs();
            assert!(err < prev, "level {l}: {err} !< {prev}");
            prev = err;
        }
    }

    #[test]
    fn fixture_round_trip() {
        let obs = ObservationConfig::uniform(4, 1.0, 0.1);
        let f = DataFixture::generate(&ModelParams::default(), 32, &obs, 11).unwrap();
        let s = serde_json::to_string(&f).unwrap();
        let back: DataFixture = serde_json::from_str(&s).unwrap();
        assert_eq!(back, f);
        assert_eq!(f.y.len(), 8);
    }

    #[test]
    fn continuum_sampler_uses_stream() {
        let p = ModelParams::default();
        let obs = ObservationConfig::uniform(2, 1.0, 0.1);
        let mut a = ChaCha8Rng::seed_from_u64(1);
        let mut b = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(
            sample_continuum(&p, 4, &obs, &mut a).unwrap(),
            sample_continuum(&p, 4, &obs, &mut b).unwrap()
        );
    }
}
