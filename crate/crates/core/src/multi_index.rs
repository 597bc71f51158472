//! Multi-index arithmetic.
//!
//! A [`MultiIndex`] `α ∈ ℕ₀^d` selects one discretization level per
//! discretized dimension. The mixed difference operator at `α` decrements
//! every positive coordinate once, which gives the [`CornerSet`] of up to
//! `2^d` neighbouring indices. Corners are labelled cheapest-first so that
//! consecutive corners `(2i-1, 2i)` differ by one unit in a single
//! dimension and `α(k_α) = α`.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A vector of non-negative discretization levels.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct MultiIndex(Vec<u32>);

impl MultiIndex {
    pub fn new(levels: impl Into<Vec<u32>>) -> Self {
        Self(levels.into())
    }

    pub fn zeros(dim: usize) -> Self {
        Self(vec![0; dim])
    }

    /// Canonical unit index `e_i`.
    pub fn unit(dim: usize, i: usize) -> Self {
        let mut levels = vec![0; dim];
        levels[i] = 1;
        Self(levels)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn levels(&self) -> &[u32] {
        &self.0
    }

    pub fn get(&self, i: usize) -> u32 {
        self.0[i]
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&a| a == 0)
    }

    /// Number of coordinates that split under the difference operator.
    pub fn active_dims(&self) -> usize {
        self.0.iter().filter(|&&a| a > 0).count()
    }

    /// `Σ_j |self_j - other_j|`.
    pub fn l1_distance(&self, other: &MultiIndex) -> u32 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(&a, &b)| a.abs_diff(b))
            .sum()
    }

    /// `Σ_j self_j 2^{j}` with dimension 0 weighted 1: the corner ordering key.
    fn binary_weight(&self) -> u64 {
        self.0
            .iter()
            .enumerate()
            .map(|(j, &a)| u64::from(a) << j)
            .sum()
    }
}

impl fmt::Display for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, a) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{a}")?;
        }
        write!(f, ")")
    }
}

impl From<[u32; 2]> for MultiIndex {
    fn from(levels: [u32; 2]) -> Self {
        Self(levels.to_vec())
    }
}

impl From<&[u32]> for MultiIndex {
    fn from(levels: &[u32]) -> Self {
        Self(levels.to_vec())
    }
}

/// The tensor-product index set `{α : 0 ≤ α_i ≤ L_i}`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorIndexSet {
    max_levels: Vec<u32>,
}

impl TensorIndexSet {
    pub fn new(max_levels: impl Into<Vec<u32>>) -> Result<Self> {
        let max_levels = max_levels.into();
        if max_levels.is_empty() {
            return Err(Error::Config("index set needs at least one dimension".into()));
        }
        Ok(Self { max_levels })
    }

    pub fn max_levels(&self) -> &[u32] {
        &self.max_levels
    }

    pub fn len(&self) -> usize {
        self.max_levels.iter().map(|&l| l as usize + 1).product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, alpha: &MultiIndex) -> bool {
        alpha.dim() == self.max_levels.len()
            && alpha.levels().iter().zip(&self.max_levels).all(|(a, l)| a <= l)
    }

    /// All members in lexicographic order.
    pub fn indices(&self) -> Vec<MultiIndex> {
        let d = self.max_levels.len();
        let mut out = Vec::with_capacity(self.len());
        let mut cur = vec![0u32; d];
        loop {
            out.push(MultiIndex(cur.clone()));
            // odometer increment, last coordinate fastest
            let mut j = d;
            loop {
                if j == 0 {
                    return out;
                }
                j -= 1;
                if cur[j] < self.max_levels[j] {
                    cur[j] += 1;
                    break;
                }
                cur[j] = 0;
            }
        }
    }
}

/// Enumerate the tensor index set with maxima `levels` in lexicographic order.
pub fn enumerate_index_set(levels: &[u32]) -> Result<Vec<MultiIndex>> {
    Ok(TensorIndexSet::new(levels.to_vec())?.indices())
}

/// The ordered corners of the mixed difference stencil at `base`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CornerSet {
    base: MultiIndex,
    corners: Vec<MultiIndex>,
    differenced: bool,
}

impl CornerSet {
    /// Treat `alpha` as a single corner with no differencing (plain single-level MCMC).
    pub fn single(alpha: MultiIndex) -> Self {
        Self {
            corners: vec![alpha.clone()],
            base: alpha,
            differenced: false,
        }
    }

    pub fn base(&self) -> &MultiIndex {
        &self.base
    }

    pub fn corners(&self) -> &[MultiIndex] {
        &self.corners
    }

    /// `k_α`.
    pub fn len(&self) -> usize {
        self.corners.len()
    }

    pub fn is_empty(&self) -> bool {
        self.corners.is_empty()
    }

    /// `k'_α`, zero when there is a single corner.
    pub fn pair_count(&self) -> usize {
        if self.corners.len() > 1 {
            self.corners.len() / 2
        } else {
            0
        }
    }

    /// The finest corner, equal to the base index.
    pub fn finest(&self) -> &MultiIndex {
        self.corners.last().expect("corner set is never empty")
    }

    pub fn is_differenced(&self) -> bool {
        self.differenced
    }

    /// `(-1)^{|α(k_α) - α(2i)|}` for the zero-based pair `pair`.
    pub fn pair_sign(&self, pair: usize) -> Result<f64> {
        let pairs = self.pair_count();
        if pair >= pairs {
            return Err(Error::PairIndex {
                index: pair,
                pairs,
            });
        }
        let even = &self.corners[2 * pair + 1];
        Ok(parity_sign(self.finest().l1_distance(even)))
    }

    /// Pair signs for all pairs, in order.
    pub fn pair_signs(&self) -> Vec<f64> {
        (0..self.pair_count())
            .map(|p| self.pair_sign(p).expect("in range"))
            .collect()
    }

    /// Signed coefficient of each corner, aligned with [`CornerSet::corners`].
    ///
    /// For a single corner this is `[1]`; otherwise the even member of pair
    /// `i` carries the pair sign and the odd member its negation.
    pub fn coefficients(&self) -> Vec<f64> {
        if self.corners.len() == 1 {
            return vec![1.0];
        }
        let finest = self.finest();
        self.corners
            .iter()
            .map(|c| parity_sign(finest.l1_distance(c)))
            .collect()
    }
}

fn parity_sign(distance: u32) -> f64 {
    if distance % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// Corners of the mixed difference at `alpha`, cheapest first.
///
/// Only the positive coordinates split. Corner masks run over the active
/// dimensions in increasing binary value with the lowest dimension as the
/// least significant bit, so pairs differ in the first active dimension.
pub fn corners(alpha: &MultiIndex) -> CornerSet {
    let active: Vec<usize> = (0..alpha.dim()).filter(|&j| alpha.get(j) > 0).collect();
    if active.is_empty() {
        return CornerSet {
            base: alpha.clone(),
            corners: vec![alpha.clone()],
            differenced: false,
        };
    }
    let count = 1usize << active.len();
    let corners = (0..count)
        .map(|mask| {
            let mut levels = alpha.levels().to_vec();
            for (bit, &dim) in active.iter().enumerate() {
                if mask & (1 << bit) == 0 {
                    levels[dim] -= 1;
                }
            }
            MultiIndex(levels)
        })
        .collect::<Vec<_>>();
    debug_assert!(corners
        .windows(2)
        .all(|w| w[1].binary_weight() >= w[0].binary_weight()));
    CornerSet {
        base: alpha.clone(),
        corners,
        differenced: true,
    }
}

/// Sign of pair `pair` (zero-based) of the corner set at `alpha`.
pub fn pair_sign(alpha: &MultiIndex, pair: usize) -> Result<f64> {
    corners(alpha).pair_sign(pair)
}

/// Coefficients `c(β)` with `ΔE_α[φ] = Σ_β c(β) E_β[φ_β]`.
pub fn delta_weights(alpha: &MultiIndex) -> BTreeMap<MultiIndex, i32> {
    let set = corners(alpha);
    set.corners()
        .iter()
        .cloned()
        .zip(set.coefficients().into_iter().map(|c| c as i32))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn mi(levels: &[u32]) -> MultiIndex {
        MultiIndex::from(levels)
    }

    #[test]
    fn enumerates_tensor_sets() {
        assert_eq!(
            enumerate_index_set(&[1, 1]).unwrap(),
            vec![mi(&[0, 0]), mi(&[0, 1]), mi(&[1, 0]), mi(&[1, 1])]
        );
        assert_eq!(enumerate_index_set(&[0, 0]).unwrap(), vec![mi(&[0, 0])]);
        assert_eq!(
            enumerate_index_set(&[2, 0]).unwrap(),
            vec![mi(&[0, 0]), mi(&[1, 0]), mi(&[2, 0])]
        );
        assert!(enumerate_index_set(&[]).is_err());
    }

    #[test]
    fn corner_examples() {
        let c = corners(&mi(&[1, 1]));
        assert_eq!(
            c.corners(),
            &[mi(&[0, 0]), mi(&[1, 0]), mi(&[0, 1]), mi(&[1, 1])]
        );
        assert_eq!(c.pair_count(), 2);

        let c = corners(&mi(&[2, 0]));
        assert_eq!(c.corners(), &[mi(&[1, 0]), mi(&[2, 0])]);
        assert_eq!(c.len(), 2);

        let c = corners(&mi(&[0, 0]));
        assert_eq!(c.corners(), &[mi(&[0, 0])]);
        assert_eq!(c.len(), 1);
        assert_eq!(c.pair_count(), 0);
        assert!(!c.is_differenced());
    }

    #[test]
    fn pair_sign_examples() {
        let a = mi(&[1, 1]);
        assert_eq!(pair_sign(&a, 1).unwrap(), 1.0);
        assert_eq!(pair_sign(&a, 0).unwrap(), -1.0);
        assert_eq!(pair_sign(&mi(&[2, 0]), 0).unwrap(), 1.0);
        assert!(matches!(
            pair_sign(&a, 2),
            Err(Error::PairIndex { index: 2, pairs: 2 })
        ));
        assert!(pair_sign(&mi(&[0, 0]), 0).is_err());
    }

    #[test]
    fn delta_weight_examples() {
        let w = delta_weights(&mi(&[1, 1]));
        assert_eq!(w[&mi(&[1, 1])], 1);
        assert_eq!(w[&mi(&[0, 1])], -1);
        assert_eq!(w[&mi(&[1, 0])], -1);
        assert_eq!(w[&mi(&[0, 0])], 1);
        assert_eq!(w.len(), 4);

        let w = delta_weights(&mi(&[0, 0]));
        assert_eq!(w.into_iter().collect::<Vec<_>>(), vec![(mi(&[0, 0]), 1)]);

        let w = delta_weights(&mi(&[3, 0]));
        assert_eq!(w.len(), 2);
        assert_eq!(w[&mi(&[3, 0])], 1);
        assert_eq!(w[&mi(&[2, 0])], -1);
    }

    #[test]
    fn single_corner_convention() {
        let c = CornerSet::single(mi(&[2, 1]));
        assert_eq!(c.len(), 1);
        assert_eq!(c.coefficients(), vec![1.0]);
        assert_eq!(c.finest(), &mi(&[2, 1]));
    }

    /// Expands `Δ_d ⋯ Δ_1` directly: each positive dimension contributes
    /// `(identity - shift_down)`.
    fn brute_force_weights(alpha: &MultiIndex) -> BTreeMap<MultiIndex, i32> {
        let mut terms: BTreeMap<MultiIndex, i32> = BTreeMap::new();
        terms.insert(alpha.clone(), 1);
        for j in 0..alpha.dim() {
            if alpha.get(j) == 0 {
                continue;
            }
            let mut next = BTreeMap::new();
            for (idx, c) in terms {
                *next.entry(idx.clone()).or_insert(0) += c;
                let mut lower = idx.levels().to_vec();
                lower[j] -= 1;
                *next.entry(MultiIndex(lower)).or_insert(0) -= c;
            }
            terms = next;
        }
        terms.retain(|_, c| *c != 0);
        terms
    }

    fn arb_index() -> impl Strategy<Value = MultiIndex> {
        prop::collection::vec(0u32..=5, 1..=4).prop_map(MultiIndex)
    }

    proptest! {
        #[test]
        fn corner_invariants(alpha in arb_index()) {
            let set = corners(&alpha);
            let k = set.len();
            prop_assert_eq!(k, 1usize << alpha.active_dims());
            prop_assert_eq!(set.finest(), &alpha);
            if k > 1 {
                for pair in set.corners().chunks(2) {
                    let diff: i64 = pair[1].levels().iter().zip(pair[0].levels())
                        .map(|(&b, &a)| i64::from(b) - i64::from(a)).sum();
                    prop_assert_eq!(diff, 1);
                }
                for w in set.corners().windows(2) {
                    let key: i64 = w[1].levels().iter().zip(w[0].levels()).enumerate()
                        .map(|(j, (&b, &a))| (i64::from(b) - i64::from(a)) << j).sum();
                    prop_assert!(key >= 0);
                }
                if alpha.active_dims() == alpha.dim() {
                    let cheapest: Vec<u32> = alpha.levels().iter().map(|a| a - 1).collect();
                    prop_assert_eq!(&set.corners()[0], &MultiIndex(cheapest));
                }
            }
        }

        #[test]
        fn weights_match_direct_expansion(alpha in arb_index()) {
            prop_assert_eq!(delta_weights(&alpha), brute_force_weights(&alpha));
        }

        #[test]
        fn pair_signs_agree_with_coefficients(alpha in arb_index()) {
            let set = corners(&alpha);
            let coef = set.coefficients();
            for (p, s) in set.pair_signs().into_iter().enumerate() {
                prop_assert_eq!(coef[2 * p + 1], s);
                prop_assert_eq!(coef[2 * p], -s);
            }
        }
    }
}
