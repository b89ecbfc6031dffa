//! Category spaces, posterior vectors and the order statistics the
//! classifiers are built from.
//!
//! Categories are indexed from 0 in the API. Blocks are contiguous index
//! ranges, so a partition is fully described by its block sizes.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on `|sum(p) - 1|` accepted before renormalizing.
pub const NORMALIZATION_TOLERANCE: f64 = 1e-9;

/// A set of `n` categories partitioned into contiguous blocks.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct CategorySpace {
    sizes: Vec<usize>,
    offsets: Vec<usize>,
    block_of: Vec<usize>,
}

impl CategorySpace {
    /// Builds a space from block sizes `N_1, ..., N_K`.
    pub fn from_block_sizes(sizes: &[usize]) -> Result<Self> {
        if sizes.is_empty() {
            return Err(Error::InvalidPartition("at least one block required".into()));
        }
        if let Some(k) = sizes.iter().position(|&s| s == 0) {
            return Err(Error::InvalidPartition(format!("block {k} is empty")));
        }
        let mut offsets = Vec::with_capacity(sizes.len() + 1);
        let mut block_of = Vec::new();
        offsets.push(0);
        for (k, &size) in sizes.iter().enumerate() {
            block_of.extend(std::iter::repeat_n(k, size));
            offsets.push(offsets[k] + size);
        }
        Ok(Self {
            sizes: sizes.to_vec(),
            offsets,
            block_of,
        })
    }

    /// A single homogeneous block of `n` categories.
    pub fn single_block(n: usize) -> Result<Self> {
        Self::from_block_sizes(&[n])
    }

    /// One block per category.
    pub fn singleton_blocks(n: usize) -> Result<Self> {
        Self::from_block_sizes(&vec![1; n])
    }

    pub fn num_categories(&self) -> usize {
        self.block_of.len()
    }

    pub fn num_blocks(&self) -> usize {
        self.sizes.len()
    }

    pub fn block_sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn block_size(&self, k: usize) -> Result<usize> {
        self.check_block(k)?;
        Ok(self.sizes[k])
    }

    /// Index range of block `k`.
    pub fn block_range(&self, k: usize) -> Result<std::ops::Range<usize>> {
        self.check_block(k)?;
        Ok(self.offsets[k]..self.offsets[k + 1])
    }

    /// The block containing category `i`.
    pub fn block_of(&self, i: usize) -> Result<usize> {
        self.block_of.get(i).copied().ok_or(Error::OutOfRange {
            what: "category",
            value: i,
            max: self.num_categories().saturating_sub(1),
        })
    }

    fn check_block(&self, k: usize) -> Result<()> {
        if k < self.sizes.len() {
            Ok(())
        } else {
            Err(Error::BlockOutOfRange {
                block: k,
                blocks: self.sizes.len(),
            })
        }
    }
}

impl TryFrom<Vec<usize>> for CategorySpace {
    type Error = Error;

    fn try_from(sizes: Vec<usize>) -> Result<Self> {
        Self::from_block_sizes(&sizes)
    }
}

impl From<CategorySpace> for Vec<usize> {
    fn from(space: CategorySpace) -> Self {
        space.sizes
    }
}

/// Posterior probabilities over the categories of a [`CategorySpace`].
///
/// The descending order of the probabilities is computed once on
/// construction. Ties are broken toward the smaller category index, and
/// every order statistic (global or within a block) uses this ordering.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorVector {
    probs: Vec<f64>,
    space: CategorySpace,
    order: Vec<usize>,
    top_sums: Vec<f64>,
}

impl PosteriorVector {
    /// Validates and wraps a probability vector. A vector whose sum is
    /// within [`NORMALIZATION_TOLERANCE`] of one is renormalized; larger
    /// deviations are rejected.
    pub fn new(probs: Vec<f64>, space: CategorySpace) -> Result<Self> {
        if probs.len() != space.num_categories() {
            return Err(Error::DimensionMismatch {
                expected: space.num_categories(),
                got: probs.len(),
            });
        }
        if let Some(i) = probs.iter().position(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::InvalidProbabilities(format!(
                "p[{i}] = {} is not in [0, 1]",
                probs[i]
            )));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > NORMALIZATION_TOLERANCE {
            return Err(Error::InvalidProbabilities(format!("probabilities sum to {total}")));
        }
        let probs = probs.into_iter().map(|p| p / total).collect();
        Ok(Self::from_normalized(probs, space))
    }

    /// Posterior over a single block.
    pub fn single_block(probs: Vec<f64>) -> Result<Self> {
        let space = CategorySpace::single_block(probs.len().max(1))?;
        Self::new(probs, space)
    }

    /// Normalizes unnormalized log-masses `ln(pi_i f_i(z))` with a max shift.
    pub fn from_log_weights(log_weights: &[f64], space: CategorySpace) -> Result<Self> {
        if log_weights.len() != space.num_categories() {
            return Err(Error::DimensionMismatch {
                expected: space.num_categories(),
                got: log_weights.len(),
            });
        }
        if log_weights.iter().any(|w| w.is_nan() || *w == f64::INFINITY) {
            return Err(Error::InvalidProbabilities("non-finite log weight".into()));
        }
        let max = log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if max == f64::NEG_INFINITY {
            return Err(Error::AllZeroMass);
        }
        let shifted: Vec<f64> = log_weights.iter().map(|w| (w - max).exp()).collect();
        let total: f64 = shifted.iter().sum();
        let probs = shifted.into_iter().map(|w| w / total).collect();
        Ok(Self::from_normalized(probs, space))
    }

    fn from_normalized(probs: Vec<f64>, space: CategorySpace) -> Self {
        let mut order: Vec<usize> = (0..probs.len()).collect();
        // stable sort keeps smaller indices first among ties
        order.sort_by(|&i, &j| probs[j].total_cmp(&probs[i]));
        let mut top_sums = Vec::with_capacity(probs.len() + 1);
        top_sums.push(0.0);
        let mut acc = 0.0;
        for &i in &order {
            acc += probs[i];
            top_sums.push(acc);
        }
        if let Some(last) = top_sums.last_mut() {
            *last = 1.0;
        }
        Self {
            probs,
            space,
            order,
            top_sums,
        }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn get(&self, i: usize) -> f64 {
        self.probs[i]
    }

    pub fn space(&self) -> &CategorySpace {
        &self.space
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    /// Category indices sorted by decreasing probability.
    pub fn ranked(&self) -> &[usize] {
        &self.order
    }

    /// Categories of block `k` sorted by decreasing probability.
    pub fn ranked_in_block(&self, k: usize) -> Result<Vec<usize>> {
        let range = self.space.block_range(k)?;
        Ok(self.order.iter().copied().filter(|i| range.contains(i)).collect())
    }

    /// The largest probability `p_(N)`.
    pub fn max_prob(&self) -> f64 {
        self.probs[self.order[0]]
    }

    /// The index of the most probable category.
    pub fn argmax(&self) -> usize {
        self.order[0]
    }

    /// `P_k`, the total mass of block `k`.
    pub fn block_mass(&self, k: usize) -> Result<f64> {
        let range = self.space.block_range(k)?;
        Ok(self.probs[range].iter().sum())
    }

    /// `1 - P_k`, summed directly over the other blocks so that a single
    /// block space gives exactly zero.
    pub fn outside_block_mass(&self, k: usize) -> Result<f64> {
        let range = self.space.block_range(k)?;
        Ok(self.probs[..range.start].iter().sum::<f64>() + self.probs[range.end..].iter().sum::<f64>())
    }

    /// `v(m; z)`: the sum of the `m` largest probabilities.
    pub fn top_m_cumsum(&self, m: usize) -> Result<f64> {
        self.top_sums.get(m).copied().ok_or(Error::OutOfRange {
            what: "m",
            value: m,
            max: self.len(),
        })
    }

    /// `v_k(m; z)`: the sum of the `m` largest probabilities within block `k`.
    pub fn top_m_cumsum_in_block(&self, k: usize, m: usize) -> Result<f64> {
        let size = self.space.block_size(k)?;
        if m > size {
            return Err(Error::OutOfRange {
                what: "m",
                value: m,
                max: size,
            });
        }
        let ranked = self.ranked_in_block(k)?;
        Ok(ranked[..m].iter().map(|&i| self.probs[i]).sum())
    }
}

/// Computes `p_i = pi_i f_i / sum_j pi_j f_j`.
pub fn posterior_from_likelihoods(prior: &[f64], likelihoods: &[f64], space: CategorySpace) -> Result<PosteriorVector> {
    let n = space.num_categories();
    for len in [prior.len(), likelihoods.len()] {
        if len != n {
            return Err(Error::DimensionMismatch { expected: n, got: len });
        }
    }
    validate_prior(prior)?;
    if let Some(f) = likelihoods.iter().find(|f| !(f.is_finite() && **f >= 0.0)) {
        return Err(Error::InvalidProbabilities(format!(
            "likelihood {f} is not a finite nonnegative value"
        )));
    }
    let masses: Vec<f64> = prior.iter().zip(likelihoods).map(|(p, f)| p * f).collect();
    let total: f64 = masses.iter().sum();
    if total <= 0.0 {
        return Err(Error::AllZeroMass);
    }
    let probs = masses.into_iter().map(|m| m / total).collect();
    Ok(PosteriorVector::from_normalized(probs, space))
}

/// Checks that `prior` is a probability vector.
pub fn validate_prior(prior: &[f64]) -> Result<()> {
    if prior.iter().any(|p| !(0.0..=1.0).contains(p)) {
        return Err(Error::InvalidProbabilities("prior entries must lie in [0, 1]".into()));
    }
    let total: f64 = prior.iter().sum();
    if (total - 1.0).abs() > NORMALIZATION_TOLERANCE {
        return Err(Error::InvalidProbabilities(format!("prior sums to {total}")));
    }
    Ok(())
}

/// The output of a set-valued classifier: a subset of the category indices.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ClassifiedSet {
    members: Vec<usize>,
}

impl ClassifiedSet {
    pub fn empty() -> Self {
        Self::default()
    }

    /// All `n` categories.
    pub fn full(n: usize) -> Self {
        Self {
            members: (0..n).collect(),
        }
    }

    pub fn singleton(i: usize) -> Self {
        Self { members: vec![i] }
    }

    /// Builds a set from arbitrary indices, sorting and removing duplicates.
    pub fn from_indices(indices: impl IntoIterator<Item = usize>) -> Self {
        let mut members: Vec<usize> = indices.into_iter().collect();
        members.sort_unstable();
        members.dedup();
        Self { members }
    }

    /// The set encoded by the low `n` bits of `mask`.
    pub fn from_mask(mask: u64, n: usize) -> Self {
        Self {
            members: (0..n).filter(|i| mask >> i & 1 == 1).collect(),
        }
    }

    pub fn mask(&self) -> u64 {
        self.members.iter().fold(0, |acc, i| acc | 1 << i)
    }

    pub fn members(&self) -> &[usize] {
        &self.members
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.members.iter().copied()
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn contains(&self, i: usize) -> bool {
        self.members.binary_search(&i).is_ok()
    }

    pub fn is_subset(&self, other: &ClassifiedSet) -> bool {
        self.members.iter().all(|&i| other.contains(i))
    }

    /// Checks every member is a valid index of `space`.
    pub fn check_within(&self, space: &CategorySpace) -> Result<()> {
        match self.members.last() {
            Some(&i) if i >= space.num_categories() => Err(Error::OutOfRange {
                what: "category",
                value: i,
                max: space.num_categories() - 1,
            }),
            _ => Ok(()),
        }
    }

    /// Number of members in block `k`.
    pub fn count_in_block(&self, space: &CategorySpace, k: usize) -> Result<usize> {
        let range = space.block_range(k)?;
        Ok(self.members.iter().filter(|i| range.contains(i)).count())
    }
}

impl FromIterator<usize> for ClassifiedSet {
    fn from_iter<T: IntoIterator<Item = usize>>(iter: T) -> Self {
        Self::from_indices(iter)
    }
}
