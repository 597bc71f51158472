//! Likelihoods and the importance weights of the approximate coupling.
//!
//! The chain targets `Π_α ∝ G_α Q_α` with `G_α` the largest corner
//! likelihood. Each corner expectation is then recovered by reweighting with
//! `H_i = g_i / G_α ∈ (0, 1]`. Everything is kept in log space.

use crate::error::{Error, Result};
use crate::multi_index::CornerSet;

/// Observed data and Gaussian noise variance.
#[derive(Clone, Debug, PartialEq)]
pub struct LikelihoodSpec {
    pub y: Vec<f64>,
    pub tau2: f64,
}

impl LikelihoodSpec {
    pub fn new(y: Vec<f64>, tau2: f64) -> Result<Self> {
        if !(tau2 > 0.0) {
            return Err(Error::Config(format!("tau^2 {tau2} must be positive")));
        }
        Ok(Self { y, tau2 })
    }
}

/// `-|y - 𝒢(u)|² / (2τ²)`, without the normalizing constant.
pub fn log_likelihood(spec: &LikelihoodSpec, gu: &[f64]) -> Result<f64> {
    if gu.len() != spec.y.len() {
        return Err(Error::Shape {
            expected: format!("{} observations", spec.y.len()),
            actual: gu.len().to_string(),
        });
    }
    let sq: f64 = spec
        .y
        .iter()
        .zip(gu)
        .map(|(y, g)| (y - g) * (y - g))
        .sum();
    Ok(-sq / (2.0 * spec.tau2))
}

/// The likelihood the chain reweights by.
#[derive(Clone, Debug, PartialEq)]
pub enum Likelihood {
    /// `g ≡ 1`: the chain samples the coupled prior.
    Flat,
    Gaussian(LikelihoodSpec),
}

impl Likelihood {
    pub fn log_value(&self, gu: &[f64]) -> Result<f64> {
        match self {
            Likelihood::Flat => Ok(0.0),
            Likelihood::Gaussian(spec) => log_likelihood(spec, gu),
        }
    }

    pub fn is_flat(&self) -> bool {
        matches!(self, Likelihood::Flat)
    }
}

/// Per-corner log-likelihoods, their maximum `log G_α`, and `H_i`.
#[derive(Clone, Debug, PartialEq)]
pub struct CornerWeights {
    pub log_g: Vec<f64>,
    pub log_max: f64,
    pub h: Vec<f64>,
}

impl CornerWeights {
    /// `G_α`; may underflow to zero for poor fits, prefer [`CornerWeights::log_max`].
    pub fn max_likelihood(&self) -> f64 {
        self.log_max.exp()
    }
}

pub fn corner_weights(log_g: &[f64]) -> Result<CornerWeights> {
    if log_g.is_empty() {
        return Err(Error::Config("corner weights need at least one corner".into()));
    }
    if let Some(&bad) = log_g.iter().find(|v| !v.is_finite()) {
        return Err(Error::NonFinite(bad));
    }
    let log_max = log_g.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let h = log_g
        .iter()
        .map(|&l| if l == log_max { 1.0 } else { (l - log_max).exp() })
        .collect();
    Ok(CornerWeights {
        log_g: log_g.to_vec(),
        log_max,
        h,
    })
}

/// The weighted multi-increment `φ̃` and its scaled form `φ̄ = G_α φ̃`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MultiIncrement {
    pub tilde: f64,
    pub log_max: f64,
}

impl MultiIncrement {
    pub fn bar(&self) -> f64 {
        self.log_max.exp() * self.tilde
    }
}

/// `φ̃ = Σ_i s_i (φ_{2i} H_{2i} - φ_{2i-1} H_{2i-1})` over the corner pairs.
pub fn multi_increment(
    phi: &[f64],
    weights: &CornerWeights,
    corners: &CornerSet,
) -> Result<MultiIncrement> {
    let k = phi.len();
    if k != weights.h.len() || k != corners.len() {
        return Err(Error::Shape {
            expected: format!("{} corners", corners.len()),
            actual: format!("{} values and {} weights", k, weights.h.len()),
        });
    }
    if k % 2 != 0 {
        return Err(Error::OddCorners(k));
    }
    let tilde = corners
        .pair_signs()
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let (odd, even) = (2 * i, 2 * i + 1);
            s * (phi[even] * weights.h[even] - phi[odd] * weights.h[odd])
        })
        .sum();
    Ok(MultiIncrement {
        tilde,
        log_max: weights.log_max,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::multi_index::{corners, MultiIndex};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn log_likelihood_examples() {
        let spec = LikelihoodSpec::new(vec![1.0, 2.0], 0.5).unwrap();
        assert_eq!(log_likelihood(&spec, &[1.0, 2.0]).unwrap(), 0.0);
        // |y - Gu|^2 = 2 tau^2
        assert_relative_eq!(log_likelihood(&spec, &[2.0, 2.0]).unwrap(), -1.0);
        let spec = LikelihoodSpec::new(vec![0.0, 0.0], 0.1).unwrap();
        let r = 0.2f64.sqrt();
        assert_relative_eq!(log_likelihood(&spec, &[r, r]).unwrap(), -2.0, epsilon = 1e-14);
        assert!(matches!(log_likelihood(&spec, &[0.0]), Err(Error::Shape { .. })));
        assert!(LikelihoodSpec::new(vec![], 0.0).is_err());
    }

    #[test]
    fn weight_examples() {
        let w = corner_weights(&[0.3f64.ln(), 0.5f64.ln()]).unwrap();
        assert_relative_eq!(w.max_likelihood(), 0.5, epsilon = 1e-15);
        assert_relative_eq!(w.h[0], 0.6, epsilon = 1e-15);
        assert_eq!(w.h[1], 1.0);

        let g = [0.3f64, 0.5, 0.2, 0.9];
        let w = corner_weights(&g.map(f64::ln)).unwrap();
        for (h, e) in w.h.iter().zip([1.0 / 3.0, 5.0 / 9.0, 2.0 / 9.0, 1.0]) {
            assert_relative_eq!(*h, e, epsilon = 1e-15);
        }

        let w = corner_weights(&[-4.0; 3]).unwrap();
        assert_eq!(w.h, vec![1.0; 3]);

        assert!(matches!(corner_weights(&[0.0, f64::NAN]), Err(Error::NonFinite(_))));
        assert!(corner_weights(&[f64::NEG_INFINITY]).is_err());
        assert!(corner_weights(&[]).is_err());
    }

    #[test]
    fn multi_increment_examples() {
        let set = corners(&MultiIndex::from([1, 1]));
        let flat = corner_weights(&[0.0; 4]).unwrap();
        assert_eq!(multi_increment(&[2.0; 4], &flat, &set).unwrap().tilde, 0.0);

        let pair = corners(&MultiIndex::from([3, 0]));
        let w = corner_weights(&[0.0; 2]).unwrap();
        assert_eq!(multi_increment(&[1.5, 4.0], &w, &pair).unwrap().tilde, 2.5);

        // corner indicators reduce to the inclusion-exclusion coefficients
        let coef = set.coefficients();
        for i in 0..4 {
            let mut phi = [0.0; 4];
            phi[i] = 1.0;
            assert_eq!(multi_increment(&phi, &flat, &set).unwrap().tilde, coef[i]);
        }

        let w3 = corner_weights(&[0.0; 3]).unwrap();
        let single = crate::multi_index::CornerSet::single(MultiIndex::from([1, 1]));
        assert!(multi_increment(&[1.0], &corner_weights(&[0.0]).unwrap(), &single).is_err());
        assert!(matches!(
            multi_increment(&[1.0; 3], &w3, &set),
            Err(Error::Shape { .. })
        ));
    }

    #[test]
    fn bar_scales_by_max_likelihood() {
        let set = corners(&MultiIndex::from([1, 0]));
        let w = corner_weights(&[0.25f64.ln(), 0.5f64.ln()]).unwrap();
        let m = multi_increment(&[1.0, 1.0], &w, &set).unwrap();
        assert_relative_eq!(m.tilde, 0.5, epsilon = 1e-15);
        assert_relative_eq!(m.bar(), 0.25, epsilon = 1e-15);
    }

    proptest! {
        #[test]
        fn weights_are_bounded_with_unit_max(log_g in prop::collection::vec(-300f64..300.0, 1..16)) {
            let w = corner_weights(&log_g).unwrap();
            prop_assert!(w.h.iter().all(|&h| h > 0.0 && h <= 1.0));
            prop_assert_eq!(w.h.iter().copied().fold(0.0, f64::max), 1.0);
            for (h, l) in w.h.iter().zip(&log_g) {
                prop_assert!((h - (l - w.log_max).exp()).abs() <= 1e-15);
            }
        }
    }
}
