//! Reward functions with a set-valued first argument and the expected
//! reward (value function) they induce under a posterior.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::probability::{CategorySpace, ClassifiedSet, PosteriorVector};

const CONVEXITY_TOLERANCE: f64 = 1e-12;

/// Size penalty `g(m)` for `m = 0..=N`, stored explicitly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PenaltyRepr", into = "PenaltyRepr")]
pub struct PenaltySequence {
    values: Vec<f64>,
    convex: bool,
}

#[derive(Serialize, Deserialize)]
struct PenaltyRepr {
    g: Vec<f64>,
    #[serde(default)]
    convex: bool,
}

impl TryFrom<PenaltyRepr> for PenaltySequence {
    type Error = Error;

    fn try_from(repr: PenaltyRepr) -> Result<Self> {
        if repr.convex {
            Self::convex(repr.g)
        } else {
            Self::general(repr.g)
        }
    }
}

impl From<PenaltySequence> for PenaltyRepr {
    fn from(seq: PenaltySequence) -> Self {
        Self {
            g: seq.values,
            convex: seq.convex,
        }
    }
}

impl PenaltySequence {
    /// An arbitrary nonnegative penalty sequence.
    pub fn general(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(invalid("g", "penalty needs at least g(0)"));
        }
        if let Some(g) = values.iter().find(|g| !(g.is_finite() && **g >= 0.0)) {
            return Err(invalid("g", format!("penalty {g} is not finite and nonnegative")));
        }
        Ok(Self { values, convex: false })
    }

    /// A penalty declared convex with `g(0) = 0`; the declaration is verified.
    pub fn convex(values: Vec<f64>) -> Result<Self> {
        let mut seq = Self::general(values)?;
        if !seq.check_convex() {
            return Err(Error::NotConvex);
        }
        seq.convex = true;
        Ok(seq)
    }

    /// `g(m) = c max(0, m - 1)` over `n` categories.
    pub fn proportion(n: usize, c: f64) -> Result<Self> {
        Self::convex((0..=n).map(|m| c * m.saturating_sub(1) as f64).collect())
    }

    /// `g(m) = c m` over `n` categories.
    pub fn linear(n: usize, c: f64) -> Result<Self> {
        Self::convex((0..=n).map(|m| c * m as f64).collect())
    }

    /// The penalty that reproduces the reject-option reward with reject
    /// reward `r`: `g(1) = 0`, `g(N) = 1 - r`, and 1 for sizes in between.
    pub fn reject_option(n: usize, r: f64) -> Result<Self> {
        Self::general(
            (0..=n)
                .map(|m| match m {
                    0 | 1 => 0.0,
                    m if m == n => 1.0 - r,
                    _ => 1.0,
                })
                .collect(),
        )
    }

    fn check_convex(&self) -> bool {
        let g = &self.values;
        g[0] == 0.0 && g.windows(3).all(|w| w[2] - w[1] >= w[1] - w[0] - CONVEXITY_TOLERANCE)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, m: usize) -> f64 {
        self.values[m]
    }

    /// Largest set size the sequence covers.
    pub fn max_size(&self) -> usize {
        self.values.len() - 1
    }

    pub fn is_convex(&self) -> bool {
        self.convex
    }
}

/// The reward families a classifier can be optimized for.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RewardSpec {
    /// Unit reward only for the correct singleton.
    Map,
    /// `1(i in I) - g(|I|)`.
    Penalty(PenaltySequence),
    /// `1(i in I) - c max(0, |I| - 1)`.
    Proportion { c: f64 },
    /// Singleton rewards plus reward `r` for the full reject `I = N`.
    Ripley { r: f64 },
    /// `1(i in I) - a max(|I_k(i)| - 1, 0) - b (|I| - |I_k(i)|)`.
    Composite { a: f64, b: f64 },
    /// Singleton rewards over the first `N` categories; reward `r` for the
    /// empty set when the truth is the final (zone) category.
    IndifferenceZone { r: f64 },
}

impl RewardSpec {
    /// Checks the parameters against `space`. Composite rewards with
    /// `a > b` are accepted; see [`RewardSpec::advisories`].
    pub fn validate(&self, space: &CategorySpace) -> Result<()> {
        let n = space.num_categories();
        match *self {
            RewardSpec::Map => Ok(()),
            RewardSpec::Penalty(ref g) => {
                if g.max_size() == n {
                    Ok(())
                } else {
                    Err(Error::SpecSpaceMismatch(format!(
                        "penalty covers sizes 0..={} but the space has {n} categories",
                        g.max_size()
                    )))
                }
            }
            RewardSpec::Proportion { c } => non_negative("c", c),
            RewardSpec::Ripley { r } => {
                let lower = 1.0 / n as f64;
                if r > lower && r < 1.0 {
                    Ok(())
                } else {
                    Err(invalid("r", format!("reject reward {r} outside ({lower}, 1)")))
                }
            }
            RewardSpec::Composite { a, b } => {
                non_negative("a", a)?;
                non_negative("b", b)
            }
            RewardSpec::IndifferenceZone { r } => {
                if n < 2 {
                    return Err(Error::SpecSpaceMismatch(
                        "indifference zone needs at least one category plus the zone".into(),
                    ));
                }
                if r > 0.0 && r.is_finite() {
                    Ok(())
                } else {
                    Err(invalid("r", format!("zone reward {r} must be positive")))
                }
            }
        }
    }

    /// Valid but unusual parameter choices, for callers to report once.
    pub fn advisories(&self) -> Vec<String> {
        match *self {
            RewardSpec::Composite { a, b } if a > b => vec![format!(
                "composite reward with a = {a} > b = {b}: including a wrong-block category costs less than a same-block one"
            )],
            _ => Vec::new(),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            RewardSpec::Map => "map",
            RewardSpec::Penalty(_) => "penalty",
            RewardSpec::Proportion { .. } => "proportion",
            RewardSpec::Ripley { .. } => "ripley",
            RewardSpec::Composite { .. } => "composite",
            RewardSpec::IndifferenceZone { .. } => "indifference_zone",
        }
    }
}

fn non_negative(name: &'static str, value: f64) -> Result<()> {
    if value >= 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(invalid(name, format!("{value} must be finite and >= 0")))
    }
}

/// Per-set summary used to evaluate a reward for every true category.
pub(crate) struct SetProfile<'a> {
    set: &'a ClassifiedSet,
    space: &'a CategorySpace,
    block_counts: Vec<usize>,
}

impl<'a> SetProfile<'a> {
    pub(crate) fn new(set: &'a ClassifiedSet, space: &'a CategorySpace) -> Result<Self> {
        set.check_within(space)?;
        let mut block_counts = vec![0; space.num_blocks()];
        for i in set.iter() {
            block_counts[space.block_of(i)?] += 1;
        }
        Ok(Self {
            set,
            space,
            block_counts,
        })
    }

    pub(crate) fn reward(&self, spec: &RewardSpec, i: usize) -> Result<f64> {
        let n = self.space.num_categories();
        let k = self.space.block_of(i)?;
        let size = self.set.len();
        let hit = self.set.contains(i);
        let indicator = if hit { 1.0 } else { 0.0 };
        let is_singleton_of_i = size == 1 && hit;
        Ok(match *spec {
            RewardSpec::Map => f64::from(u8::from(is_singleton_of_i)),
            RewardSpec::Penalty(ref g) => indicator - g.get(size),
            RewardSpec::Proportion { c } => indicator - c * size.saturating_sub(1) as f64,
            RewardSpec::Ripley { r } => {
                if size == 1 {
                    indicator
                } else if size == n {
                    r
                } else {
                    0.0
                }
            }
            RewardSpec::Composite { a, b } => {
                let in_block = self.block_counts[k];
                indicator - a * in_block.saturating_sub(1) as f64 - b * (size - in_block) as f64
            }
            RewardSpec::IndifferenceZone { r } => {
                if i + 1 == n {
                    if size == 0 {
                        r
                    } else {
                        0.0
                    }
                } else {
                    f64::from(u8::from(is_singleton_of_i))
                }
            }
        })
    }
}

/// `R(I, i)` for the classified set `set` and true category `true_category`.
pub fn reward(spec: &RewardSpec, set: &ClassifiedSet, true_category: usize, space: &CategorySpace) -> Result<f64> {
    spec.validate(space)?;
    SetProfile::new(set, space)?.reward(spec, true_category)
}

/// `V(z; I) = sum_i R(I, i) p_i(z)`, the posterior expected reward of `set`.
pub fn value_function(spec: &RewardSpec, p: &PosteriorVector, set: &ClassifiedSet) -> Result<f64> {
    spec.validate(p.space())?;
    value_unchecked(spec, p, set)
}

pub(crate) fn value_unchecked(spec: &RewardSpec, p: &PosteriorVector, set: &ClassifiedSet) -> Result<f64> {
    let profile = SetProfile::new(set, p.space())?;
    let mut total = 0.0;
    for (i, &pi) in p.probs().iter().enumerate() {
        total += profile.reward(spec, i)? * pi;
    }
    Ok(total)
}

/// Binary rewards used to score classified sets during cross-validation,
/// ordered from least to most generous.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum BinaryReward {
    /// Correct point classification: `I = {i}`.
    R1,
    /// Correct category included and nothing from a wrong block.
    R2,
    /// Correct category included.
    R3,
    /// Some category from the correct block included.
    R4,
}

impl BinaryReward {
    pub const ALL: [BinaryReward; 4] = [Self::R1, Self::R2, Self::R3, Self::R4];

    pub fn index(self) -> usize {
        self as usize
    }

    /// Whether the reward can only grow as the classified set grows.
    pub fn is_monotone(self) -> bool {
        matches!(self, Self::R3 | Self::R4)
    }
}

impl std::fmt::Display for BinaryReward {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "R{}", self.index() + 1)
    }
}

impl std::str::FromStr for BinaryReward {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim_start_matches(['R', 'r']) {
            "1" => Ok(Self::R1),
            "2" => Ok(Self::R2),
            "3" => Ok(Self::R3),
            "4" => Ok(Self::R4),
            _ => Err(invalid("variant", format!("unknown binary reward {s:?}"))),
        }
    }
}

/// Evaluates a binary reward.
pub fn binary_reward(
    variant: BinaryReward,
    set: &ClassifiedSet,
    true_category: usize,
    space: &CategorySpace,
) -> Result<bool> {
    set.check_within(space)?;
    let k = space.block_of(true_category)?;
    let block = space.block_range(k)?;
    Ok(match variant {
        BinaryReward::R1 => set.len() == 1 && set.contains(true_category),
        BinaryReward::R2 => set.contains(true_category) && set.iter().all(|j| block.contains(&j)),
        BinaryReward::R3 => set.contains(true_category),
        BinaryReward::R4 => set.iter().any(|j| block.contains(&j)),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn set(indices: &[usize]) -> ClassifiedSet {
        ClassifiedSet::from_indices(indices.iter().copied())
    }

    #[test]
    fn proportion_reward() {
        let space = CategorySpace::single_block(3).unwrap();
        let r = reward(&RewardSpec::Proportion { c: 0.1 }, &set(&[0, 1]), 0, &space).unwrap();
        assert!((r - 0.9).abs() < 1e-15);
    }

    #[test]
    fn composite_with_cheaper_wrong_block_is_flagged() {
        let space = CategorySpace::from_block_sizes(&[2, 1]).unwrap();
        let odd = RewardSpec::Composite { a: 0.5, b: 0.2 };
        assert!(odd.validate(&space).is_ok());
        assert_eq!(odd.advisories().len(), 1);
        assert!(RewardSpec::Composite { a: 0.2, b: 0.5 }.advisories().is_empty());
    }

    #[test]
    fn composite_reward() {
        let space = CategorySpace::from_block_sizes(&[2, 2]).unwrap();
        let spec = RewardSpec::Composite { a: 0.2, b: 0.5 };
        let r = reward(&spec, &set(&[0, 1, 2]), 0, &space).unwrap();
        assert!((r - 0.3).abs() < 1e-15);
    }

    #[test]
    fn ripley_reject_reward() {
        let space = CategorySpace::single_block(3).unwrap();
        let spec = RewardSpec::Ripley { r: 0.6 };
        for i in 0..3 {
            assert_eq!(reward(&spec, &ClassifiedSet::full(3), i, &space).unwrap(), 0.6);
        }
        assert_eq!(reward(&spec, &set(&[0, 1]), 0, &space).unwrap(), 0.0);
        assert_eq!(reward(&spec, &set(&[2]), 2, &space).unwrap(), 1.0);
    }

    #[test]
    fn ripley_boundary_is_rejected() {
        let space = CategorySpace::single_block(4).unwrap();
        assert!(RewardSpec::Ripley { r: 0.25 }.validate(&space).is_err());
        assert!(RewardSpec::Ripley { r: 1.0 }.validate(&space).is_err());
        assert!(RewardSpec::Ripley { r: 0.2501 }.validate(&space).is_ok());
    }

    #[test]
    fn indifference_zone_reward() {
        let space = CategorySpace::single_block(3).unwrap();
        let spec = RewardSpec::IndifferenceZone { r: 2.0 };
        assert_eq!(reward(&spec, &ClassifiedSet::empty(), 2, &space).unwrap(), 2.0);
        assert_eq!(reward(&spec, &set(&[0]), 2, &space).unwrap(), 0.0);
        assert_eq!(reward(&spec, &set(&[1]), 1, &space).unwrap(), 1.0);
        assert_eq!(reward(&spec, &ClassifiedSet::empty(), 0, &space).unwrap(), 0.0);
    }

    #[test]
    fn value_function_examples() {
        let p = PosteriorVector::single_block(vec![0.7, 0.3]).unwrap();
        assert_eq!(value_function(&RewardSpec::Map, &p, &set(&[0])).unwrap(), 0.7);

        let p = PosteriorVector::single_block(vec![0.5, 0.3, 0.2]).unwrap();
        let v = value_function(&RewardSpec::Proportion { c: 0.25 }, &p, &set(&[0, 1])).unwrap();
        assert!((v - 0.55).abs() < 1e-15);

        let g = PenaltySequence::linear(3, 0.25).unwrap();
        let v = value_function(&RewardSpec::Penalty(g), &p, &ClassifiedSet::full(3)).unwrap();
        assert!((v - 0.25).abs() < 1e-15);
    }

    #[test]
    fn binary_rewards() {
        let space = CategorySpace::single_block(3).unwrap();
        for variant in BinaryReward::ALL {
            assert!(binary_reward(variant, &set(&[1]), 1, &space).unwrap());
        }
        let space = CategorySpace::from_block_sizes(&[2, 1]).unwrap();
        assert!(!binary_reward(BinaryReward::R1, &set(&[0, 1]), 0, &space).unwrap());
        assert!(binary_reward(BinaryReward::R2, &set(&[0, 1]), 0, &space).unwrap());
        assert!(!binary_reward(BinaryReward::R3, &set(&[2]), 0, &space).unwrap());
        assert!(!binary_reward(BinaryReward::R4, &set(&[2]), 0, &space).unwrap());
        assert!(binary_reward(BinaryReward::R4, &set(&[1, 2]), 0, &space).unwrap());
    }

    #[test]
    fn penalty_validation() {
        assert_eq!(PenaltySequence::convex(vec![0.0, 1.0, 1.0]), Err(Error::NotConvex));
        assert_eq!(PenaltySequence::convex(vec![0.1, 0.2, 0.3]), Err(Error::NotConvex));
        assert!(PenaltySequence::general(vec![0.0, -1.0]).is_err());
        assert!(PenaltySequence::proportion(5, 0.3).unwrap().is_convex());
        let space = CategorySpace::single_block(3).unwrap();
        let spec = RewardSpec::Penalty(PenaltySequence::linear(4, 0.1).unwrap());
        assert!(matches!(spec.validate(&space), Err(Error::SpecSpaceMismatch(_))));
    }

    #[test]
    fn spec_json_round_trip() {
        let spec: RewardSpec = serde_json::from_str(r#"{"kind":"proportion","c":0.25}"#).unwrap();
        assert_eq!(spec, RewardSpec::Proportion { c: 0.25 });
        let spec: RewardSpec = serde_json::from_str(r#"{"kind":"penalty","g":[0,0.5,1],"convex":true}"#).unwrap();
        let json = serde_json::to_string(&spec).unwrap();
        assert_eq!(serde_json::from_str::<RewardSpec>(&json).unwrap(), spec);
        assert!(serde_json::from_str::<RewardSpec>(r#"{"kind":"penalty","g":[0,1,1],"convex":true}"#).is_err());
        let spec: RewardSpec = serde_json::from_str(r#"{"kind":"indifference_zone","r":2}"#).unwrap();
        assert_eq!(spec, RewardSpec::IndifferenceZone { r: 2.0 });
    }

    /// Random instance: block sizes, classified set mask, true category.
    fn instance() -> impl Strategy<Value = (Vec<usize>, u64, usize)> {
        prop::collection::vec(1usize..4, 1..4).prop_flat_map(|sizes| {
            let n: usize = sizes.iter().sum();
            (Just(sizes), 0u64..(1 << n), 0..n)
        })
    }

    fn shuffled_within_blocks(sizes: &[usize], seed: u64) -> Vec<usize> {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut perm = Vec::new();
        let mut start = 0;
        for &s in sizes {
            let mut block: Vec<usize> = (start..start + s).collect();
            block.shuffle(&mut rng);
            perm.extend(block);
            start += s;
        }
        perm
    }

    proptest! {
        #[test]
        fn binary_hierarchy((sizes, mask, i) in instance()) {
            let space = CategorySpace::from_block_sizes(&sizes).unwrap();
            let s = ClassifiedSet::from_mask(mask, space.num_categories());
            let values: Vec<bool> = BinaryReward::ALL.iter().map(|&v| binary_reward(v, &s, i, &space).unwrap()).collect();
            for w in values.windows(2) {
                prop_assert!(w[0] <= w[1]);
            }
        }

        #[test]
        fn composite_is_block_invariant((sizes, mask, i) in instance(), a in 0.0f64..1.0, b in 0.0f64..1.0, seed in any::<u64>()) {
            let space = CategorySpace::from_block_sizes(&sizes).unwrap();
            let n = space.num_categories();
            let s = ClassifiedSet::from_mask(mask, n);
            let perm = shuffled_within_blocks(&sizes, seed);
            let permuted: ClassifiedSet = s.iter().map(|j| perm[j]).collect();
            let spec = RewardSpec::Composite { a, b };
            let before = reward(&spec, &s, i, &space).unwrap();
            let after = reward(&spec, &permuted, perm[i], &space).unwrap();
            prop_assert!((before - after).abs() < 1e-15);
        }

        #[test]
        fn invariant_rewards_survive_any_permutation((sizes, mask, i) in instance(), c in 0.0f64..1.0, seed in any::<u64>()) {
            let n: usize = sizes.iter().sum();
            let space = CategorySpace::single_block(n).unwrap();
            let s = ClassifiedSet::from_mask(mask, n);
            let perm = shuffled_within_blocks(&[n], seed);
            let permuted: ClassifiedSet = s.iter().map(|j| perm[j]).collect();
            let g = PenaltySequence::general((0..=n).map(|m| (m as f64 * 0.37 + c).fract()).collect()).unwrap();
            for spec in [RewardSpec::Proportion { c }, RewardSpec::Penalty(g)] {
                let before = reward(&spec, &s, i, &space).unwrap();
                let after = reward(&spec, &permuted, perm[i], &space).unwrap();
                prop_assert_eq!(before, after);
            }
        }

        #[test]
        fn single_block_composite_is_proportion((sizes, mask, i) in instance(), a in 0.0f64..1.0, b in 0.0f64..2.0) {
            let n: usize = sizes.iter().sum();
            let space = CategorySpace::single_block(n).unwrap();
            let s = ClassifiedSet::from_mask(mask, n);
            let composite = reward(&RewardSpec::Composite { a, b }, &s, i, &space).unwrap();
            let proportion = reward(&RewardSpec::Proportion { c: a }, &s, i, &space).unwrap();
            prop_assert_eq!(composite, proportion);
        }

        #[test]
        fn ripley_matches_its_penalty_outside_partial_sets((sizes, mask, i) in instance(), t in 0.01f64..0.99) {
            let n: usize = sizes.iter().sum();
            prop_assume!(n >= 2);
            let space = CategorySpace::single_block(n).unwrap();
            let s = ClassifiedSet::from_mask(mask, n);
            let r = 1.0 / n as f64 + t * (1.0 - 1.0 / n as f64);
            prop_assume!(r < 1.0);
            let ripley = reward(&RewardSpec::Ripley { r }, &s, i, &space).unwrap();
            let penalty = reward(&RewardSpec::Penalty(PenaltySequence::reject_option(n, r).unwrap()), &s, i, &space).unwrap();
            if s.len() <= 1 || s.len() == n || s.contains(i) {
                prop_assert!((ripley - penalty).abs() < 1e-15);
            } else {
                // partial sets missing the truth: the penalty form is one lower
                prop_assert!((ripley - penalty - 1.0).abs() < 1e-15);
            }
        }

        #[test]
        fn value_is_linear_in_p(w1 in prop::collection::vec(0.01f64..1.0, 4), w2 in prop::collection::vec(0.01f64..1.0, 4), t in 0.0f64..1.0, mask in 0u64..16) {
            let norm = |w: &[f64]| { let s: f64 = w.iter().sum(); w.iter().map(|x| x / s).collect::<Vec<_>>() };
            let (p1, p2) = (norm(&w1), norm(&w2));
            let mix: Vec<f64> = p1.iter().zip(&p2).map(|(a, b)| t * a + (1.0 - t) * b).collect();
            let space = CategorySpace::from_block_sizes(&[1, 3]).unwrap();
            let s = ClassifiedSet::from_mask(mask, 4);
            let spec = RewardSpec::Composite { a: 0.2, b: 0.4 };
            let v = |p: Vec<f64>| value_function(&spec, &PosteriorVector::new(p, space.clone()).unwrap(), &s).unwrap();
            let lhs = v(mix);
            let rhs = t * v(p1) + (1.0 - t) * v(p2);
            prop_assert!((lhs - rhs).abs() < 1e-12);
        }
    }
}
