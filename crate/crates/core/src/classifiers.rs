//! Optimal Bayes set-valued classifiers.
//!
//! Each reward family has a closed-form optimal classifier built from the
//! ordered posterior probabilities. [`brute_force_optimal`] maximizes the
//! value function over every subset and serves as the reference the closed
//! forms are tested against.
//!
//! Where several set sizes reach the same value, the size-based classifiers
//! pick the largest one, matching the inclusive `>=` thresholds.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::probability::{ClassifiedSet, PosteriorVector};
use crate::rewards::{value_unchecked, PenaltySequence, RewardSpec};

/// Exhaustive search guard.
pub const MAX_BRUTE_FORCE_CATEGORIES: usize = 20;

/// An m most probable classifier: the `size` categories of largest posterior.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MmpResult {
    pub set: ClassifiedSet,
    pub size: usize,
    pub value: f64,
}

/// A composite classifier: the top `sizes[k]` categories of every block `k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompositeResult {
    pub set: ClassifiedSet,
    pub sizes: Vec<usize>,
    pub value: f64,
}

/// A classified set together with its expected reward.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    pub set: ClassifiedSet,
    pub value: f64,
}

fn top_m(p: &PosteriorVector, m: usize) -> ClassifiedSet {
    p.ranked()[..m].iter().copied().collect()
}

fn check_cost(name: &'static str, c: f64) -> Result<()> {
    if c >= 0.0 && c.is_finite() {
        Ok(())
    } else {
        Err(invalid(name, format!("{c} must be finite and >= 0")))
    }
}

fn check_penalty_len(p: &PosteriorVector, g: &PenaltySequence) -> Result<()> {
    if g.max_size() == p.len() {
        Ok(())
    } else {
        Err(Error::SpecSpaceMismatch(format!(
            "penalty covers sizes 0..={} but the posterior has {} categories",
            g.max_size(),
            p.len()
        )))
    }
}

/// The maximum a posteriori singleton.
pub fn map_classifier(p: &PosteriorVector) -> ClassifiedSet {
    ClassifiedSet::singleton(p.argmax())
}

/// Optimal classifier for `1(i in I) - g(|I|)` with an arbitrary penalty:
/// maximizes `v(m) - g(m)` over `m = 0..=N`.
pub fn mmp_general(p: &PosteriorVector, g: &PenaltySequence) -> Result<MmpResult> {
    check_penalty_len(p, g)?;
    let mut best = (0, f64::NEG_INFINITY);
    for m in 0..=p.len() {
        let value = p.top_m_cumsum(m)? - g.get(m);
        if value >= best.1 {
            best = (m, value);
        }
    }
    Ok(MmpResult {
        set: top_m(p, best.0),
        size: best.0,
        value: best.1,
    })
}

/// Convex-penalty fast path: the size is the last `m` whose `m`-th largest
/// probability still covers the penalty increment `g(m) - g(m - 1)`, or 0.
pub fn mmp_convex(p: &PosteriorVector, g: &PenaltySequence) -> Result<MmpResult> {
    if !g.is_convex() {
        return Err(Error::NotConvex);
    }
    check_penalty_len(p, g)?;
    let ranked = p.ranked();
    let last_included = (1..=p.len())
        .filter(|&m| p.get(ranked[m - 1]) >= g.get(m) - g.get(m - 1))
        .max();
    let size = last_included.unwrap_or(0);
    Ok(MmpResult {
        set: top_m(p, size),
        size,
        value: p.top_m_cumsum(size)? - g.get(size),
    })
}

/// Optimal classifier for the proportion-based reward with cost `c` per
/// extra category. Never empty.
pub fn proportion_classifier(p: &PosteriorVector, c: f64) -> Result<MmpResult> {
    check_cost("c", c)?;
    let ranked = p.ranked();
    let extra = (2..=p.len()).filter(|&m| p.get(ranked[m - 1]) >= c).max();
    let size = extra.unwrap_or(1);
    Ok(MmpResult {
        set: top_m(p, size),
        size,
        value: p.top_m_cumsum(size)? - c * (size - 1) as f64,
    })
}

/// `{i : p_i >= rho p_(N)}`.
pub fn rho_classifier(p: &PosteriorVector, rho: f64) -> Result<ClassifiedSet> {
    if !(0.0..=1.0).contains(&rho) {
        return Err(invalid("rho", format!("{rho} outside [0, 1]")));
    }
    let threshold = rho * p.max_prob();
    Ok((0..p.len()).filter(|&i| p.get(i) >= threshold).collect())
}

/// Reject-option classifier: the MAP singleton when `p_(N) > r`, otherwise
/// the full set.
pub fn ripley_classifier(p: &PosteriorVector, r: f64) -> Result<ClassifiedSet> {
    RewardSpec::Ripley { r }.validate(p.space())?;
    Ok(if p.max_prob() > r {
        map_classifier(p)
    } else {
        ClassifiedSet::full(p.len())
    })
}

/// Conformal prediction region with posterior probabilities as
/// nonconformity scores: `{i : p_i >= c}`. May be empty.
pub fn conformal_classifier(p: &PosteriorVector, c: f64) -> Result<ClassifiedSet> {
    check_cost("c", c)?;
    Ok((0..p.len()).filter(|&i| p.get(i) >= c).collect())
}

/// Optimal classifier for the composite proportion-based reward with
/// within-block cost `a` and wrong-block cost `b`. Blocks are optimized
/// independently.
pub fn composite_classifier(p: &PosteriorVector, a: f64, b: f64) -> Result<CompositeResult> {
    check_cost("a", a)?;
    check_cost("b", b)?;
    let space = p.space();
    let mut members = Vec::new();
    let mut sizes = Vec::with_capacity(space.num_blocks());
    let mut value = 0.0;
    for k in 0..space.num_blocks() {
        let ranked = p.ranked_in_block(k)?;
        let inside = p.block_mass(k)?;
        let outside = p.outside_block_mass(k)?;
        let first = usize::from(p.get(ranked[0]) >= outside * b);
        let extra_threshold = inside * a + outside * b;
        let extra = (2..=ranked.len())
            .filter(|&m| p.get(ranked[m - 1]) >= extra_threshold)
            .max();
        let m = extra.map_or(first, |e| e.max(first));
        value += p.top_m_cumsum_in_block(k, m)? - inside * a * m.saturating_sub(1) as f64 - outside * b * m as f64;
        members.extend_from_slice(&ranked[..m]);
        sizes.push(m);
    }
    Ok(CompositeResult {
        set: ClassifiedSet::from_indices(members),
        sizes,
        value,
    })
}

/// Decision rule when the final category of `p` is an indifference zone:
/// the most probable of the other categories if it beats `r` times the zone
/// probability, otherwise the empty set.
pub fn indifference_zone_classifier(p: &PosteriorVector, r: f64) -> Result<ClassifiedSet> {
    RewardSpec::IndifferenceZone { r }.validate(p.space())?;
    let zone = p.len() - 1;
    let best = p
        .ranked()
        .iter()
        .copied()
        .find(|&i| i != zone)
        .expect("at least one non-zone category");
    Ok(if p.get(best) >= r * p.get(zone) {
        ClassifiedSet::singleton(best)
    } else {
        ClassifiedSet::empty()
    })
}

/// Maximizes the value function over all `2^N` subsets. Among maximizers
/// the smallest bitmask wins.
pub fn brute_force_optimal(spec: &RewardSpec, p: &PosteriorVector) -> Result<Classification> {
    let n = p.len();
    if n > MAX_BRUTE_FORCE_CATEGORIES {
        return Err(Error::TooManyCategories {
            got: n,
            max: MAX_BRUTE_FORCE_CATEGORIES,
        });
    }
    if matches!(spec, RewardSpec::IndifferenceZone { .. }) {
        return Err(Error::UnsupportedReward(
            "indifference zone rewards only have a dedicated rule",
        ));
    }
    spec.validate(p.space())?;
    let mut best = Classification {
        set: ClassifiedSet::empty(),
        value: value_unchecked(spec, p, &ClassifiedSet::empty())?,
    };
    for mask in 1..(1u64 << n) {
        let set = ClassifiedSet::from_mask(mask, n);
        let value = value_unchecked(spec, p, &set)?;
        if value > best.value {
            best = Classification { set, value };
        }
    }
    Ok(best)
}

/// Dispatches to the closed-form optimal classifier of `spec`. The value is
/// the expected reward of the returned set.
pub fn optimal_classifier(spec: &RewardSpec, p: &PosteriorVector) -> Result<Classification> {
    spec.validate(p.space())?;
    let set = match spec {
        RewardSpec::Map => map_classifier(p),
        RewardSpec::Penalty(g) if g.is_convex() => mmp_convex(p, g)?.set,
        RewardSpec::Penalty(g) => mmp_general(p, g)?.set,
        RewardSpec::Proportion { c } => proportion_classifier(p, *c)?.set,
        RewardSpec::Ripley { r } => ripley_classifier(p, *r)?,
        RewardSpec::Composite { a, b } => composite_classifier(p, *a, *b)?.set,
        RewardSpec::IndifferenceZone { r } => indifference_zone_classifier(p, *r)?,
    };
    let value = value_unchecked(spec, p, &set)?;
    Ok(Classification { set, value })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::probability::CategorySpace;
    use crate::rewards::value_function;
    use proptest::prelude::*;

    fn set(indices: &[usize]) -> ClassifiedSet {
        ClassifiedSet::from_indices(indices.iter().copied())
    }

    fn single(p: &[f64]) -> PosteriorVector {
        PosteriorVector::single_block(p.to_vec()).unwrap()
    }

    fn two_blocks() -> PosteriorVector {
        PosteriorVector::new(
            vec![0.4, 0.1, 0.3, 0.2],
            CategorySpace::from_block_sizes(&[2, 2]).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn map_examples() {
        assert_eq!(map_classifier(&single(&[0.2, 0.5, 0.3])), set(&[1]));
        assert_eq!(map_classifier(&single(&[0.5, 0.5])), set(&[0]));
        assert_eq!(map_classifier(&single(&[1.0, 0.0, 0.0])), set(&[0]));
    }

    #[test]
    fn mmp_general_examples() {
        let p = single(&[0.5, 0.3, 0.2]);
        let g = PenaltySequence::general(vec![0.0, 0.0, 1.0, 1.0]).unwrap();
        let res = mmp_general(&p, &g).unwrap();
        assert_eq!((res.size, res.set), (1, set(&[0])));

        let p = single(&[0.25; 4]);
        let res = mmp_general(&p, &PenaltySequence::linear(4, 0.3).unwrap()).unwrap();
        assert_eq!(res.size, 0);
        assert!(res.set.is_empty());

        let p = single(&[0.5, 0.3, 0.2]);
        let res = mmp_general(&p, &PenaltySequence::general(vec![0.0; 4]).unwrap()).unwrap();
        assert_eq!(res.set, ClassifiedSet::full(3));
    }

    #[test]
    fn mmp_convex_examples() {
        let p = single(&[0.5, 0.3, 0.2]);
        let res = mmp_convex(&p, &PenaltySequence::linear(3, 0.25).unwrap()).unwrap();
        assert_eq!(res.set, set(&[0, 1]));
        assert!((res.value - 0.3).abs() < 1e-15);

        let res = mmp_convex(&p, &PenaltySequence::linear(3, 0.6).unwrap()).unwrap();
        assert!(res.set.is_empty());

        let res = mmp_convex(&p, &PenaltySequence::convex(vec![0.0; 4]).unwrap()).unwrap();
        assert_eq!(res.set, ClassifiedSet::full(3));

        let general = PenaltySequence::general(vec![0.0, 0.0, 1.0, 1.0]).unwrap();
        assert_eq!(mmp_convex(&p, &general), Err(Error::NotConvex));
    }

    #[test]
    fn proportion_examples() {
        let p = single(&[0.5, 0.3, 0.2]);
        let res = proportion_classifier(&p, 0.25).unwrap();
        assert_eq!(res.set, set(&[0, 1]));
        assert!((res.value - 0.55).abs() < 1e-15);

        let res = proportion_classifier(&p, 0.51).unwrap();
        assert_eq!(res.set, set(&[0]));

        let res = proportion_classifier(&p, 0.0).unwrap();
        assert_eq!(res.set, ClassifiedSet::full(3));
        assert!(proportion_classifier(&p, -0.1).is_err());
    }

    #[test]
    fn rho_examples() {
        let p = single(&[0.5, 0.3, 0.2]);
        assert_eq!(rho_classifier(&p, 0.5).unwrap(), set(&[0, 1]));
        assert_eq!(rho_classifier(&p, 0.0).unwrap(), ClassifiedSet::full(3));
        assert_eq!(rho_classifier(&p, 1.0).unwrap(), set(&[0]));
        assert_eq!(rho_classifier(&single(&[0.4, 0.4, 0.2]), 1.0).unwrap(), set(&[0, 1]));
        assert!(rho_classifier(&p, 1.5).is_err());
    }

    #[test]
    fn ripley_examples() {
        assert_eq!(ripley_classifier(&single(&[0.6, 0.3, 0.1]), 0.5).unwrap(), set(&[0]));
        assert_eq!(
            ripley_classifier(&single(&[0.4, 0.35, 0.25]), 0.5).unwrap(),
            ClassifiedSet::full(3)
        );
        assert_eq!(
            ripley_classifier(&single(&[0.5, 0.3, 0.2]), 0.5).unwrap(),
            ClassifiedSet::full(3)
        );
    }

    #[test]
    fn conformal_examples() {
        let p = single(&[0.5, 0.3, 0.2]);
        assert_eq!(conformal_classifier(&p, 0.25).unwrap(), set(&[0, 1]));
        assert_eq!(conformal_classifier(&p, 0.0).unwrap(), ClassifiedSet::full(3));
        assert!(conformal_classifier(&p, 0.51).unwrap().is_empty());
    }

    #[test]
    fn composite_examples() {
        let p = two_blocks();
        let res = composite_classifier(&p, 0.15, 0.35).unwrap();
        assert_eq!(res.sizes, vec![1, 1]);
        assert_eq!(res.set, set(&[0, 2]));
        assert!((res.value - 0.35).abs() < 1e-12);

        // (1 - P_k) b exceeds the top probability of both blocks
        let res = composite_classifier(&p, 0.0, 0.9).unwrap();
        assert!(res.set.is_empty());
        assert_eq!(res.sizes, vec![0, 0]);
    }

    #[test]
    fn composite_empty_set_bound() {
        let p = two_blocks();
        let bound: f64 = (0..2)
            .map(|k| {
                let top = p.get(p.ranked_in_block(k).unwrap()[0]);
                top / p.outside_block_mass(k).unwrap()
            })
            .fold(f64::NEG_INFINITY, f64::max);
        assert!(!composite_classifier(&p, 0.0, bound).unwrap().set.is_empty());
        assert!(composite_classifier(&p, 0.0, bound + 1e-9).unwrap().set.is_empty());
    }

    #[test]
    fn indifference_zone_examples() {
        assert!(indifference_zone_classifier(&single(&[0.5, 0.2, 0.3]), 2.0)
            .unwrap()
            .is_empty());
        assert_eq!(
            indifference_zone_classifier(&single(&[0.6, 0.2, 0.2]), 2.0).unwrap(),
            set(&[0])
        );
        assert_eq!(
            indifference_zone_classifier(&single(&[0.3, 0.7, 0.0]), 50.0).unwrap(),
            set(&[1])
        );
        assert!(indifference_zone_classifier(&single(&[1.0]), 1.0).is_err());
    }

    #[test]
    fn indifference_zone_rule_maximizes_its_reward() {
        // the rule is optimal among all subsets, checked by direct enumeration
        for probs in [[0.5, 0.2, 0.3], [0.6, 0.2, 0.2], [0.1, 0.1, 0.8], [0.45, 0.45, 0.1]] {
            let p = single(&probs);
            for r in [0.5, 1.0, 2.0, 4.0] {
                let spec = RewardSpec::IndifferenceZone { r };
                let rule = optimal_classifier(&spec, &p).unwrap();
                let best = (0..8u64)
                    .map(|m| value_function(&spec, &p, &ClassifiedSet::from_mask(m, 3)).unwrap())
                    .fold(f64::NEG_INFINITY, f64::max);
                assert!((rule.value - best).abs() < 1e-12, "{probs:?} r={r}");
            }
        }
    }

    #[test]
    fn brute_force_examples() {
        let res = brute_force_optimal(&RewardSpec::Map, &single(&[0.7, 0.3])).unwrap();
        assert_eq!(res.set, set(&[0]));
        assert_eq!(res.value, 0.7);

        let res = brute_force_optimal(&RewardSpec::Proportion { c: 0.25 }, &single(&[0.5, 0.3, 0.2])).unwrap();
        assert!((res.value - 0.55).abs() < 1e-15);

        let res = brute_force_optimal(&RewardSpec::Composite { a: 0.15, b: 0.35 }, &two_blocks()).unwrap();
        assert!((res.value - 0.35).abs() < 1e-12);
        assert_eq!(res.set, set(&[0, 2]));
    }

    #[test]
    fn brute_force_guards() {
        let p = PosteriorVector::single_block(vec![1.0 / 21.0; 21]).unwrap();
        assert!(matches!(
            brute_force_optimal(&RewardSpec::Map, &p),
            Err(Error::TooManyCategories { .. })
        ));
        let p = single(&[0.5, 0.5]);
        assert!(matches!(
            brute_force_optimal(&RewardSpec::IndifferenceZone { r: 1.0 }, &p),
            Err(Error::UnsupportedReward(_))
        ));
    }

    #[test]
    fn brute_force_ties_pick_smallest_mask() {
        // V({0}) = V({1}) = 0.5 under MAP
        let res = brute_force_optimal(&RewardSpec::Map, &single(&[0.5, 0.5])).unwrap();
        assert_eq!(res.set, set(&[0]));
    }

    #[test]
    fn map_maximizes_correct_singleton_probability() {
        // discrete model: 3 categories, 4 observation symbols
        let prior = [0.2, 0.5, 0.3];
        let lik = [[0.1, 0.2, 0.3, 0.4], [0.4, 0.3, 0.2, 0.1], [0.25, 0.25, 0.4, 0.1]];
        let space = CategorySpace::single_block(3).unwrap();
        let p_correct = |rule: &[usize; 4]| -> f64 { (0..4).map(|z| prior[rule[z]] * lik[rule[z]][z]).sum() };
        let map_rule: [usize; 4] = std::array::from_fn(|z| {
            let l: Vec<f64> = (0..3).map(|i| lik[i][z]).collect();
            let p = crate::probability::posterior_from_likelihoods(&prior, &l, space.clone()).unwrap();
            map_classifier(&p).members()[0]
        });
        let best = (0..81)
            .map(|code| {
                let rule: [usize; 4] = std::array::from_fn(|z| code / 3usize.pow(z as u32) % 3);
                p_correct(&rule)
            })
            .fold(f64::NEG_INFINITY, f64::max);
        assert!((p_correct(&map_rule) - best).abs() < 1e-15);
    }

    fn quantized_posterior(n: std::ops::Range<usize>) -> impl Strategy<Value = Vec<f64>> {
        // small integer weights make ties common
        prop::collection::vec(0u32..5, n).prop_filter_map("zero mass", |w| {
            let total: u32 = w.iter().sum();
            (total > 0).then(|| w.iter().map(|&x| f64::from(x) / f64::from(total)).collect())
        })
    }

    proptest! {
        #[test]
        fn fast_paths_match_oracle_under_ties(p in quantized_posterior(2..8), c in 0u32..6, a in 0u32..4, b in 0u32..4, split in 1usize..7) {
            let n = p.len();
            let c = f64::from(c) / 8.0;
            let first = split.min(n - 1);
            let space = CategorySpace::from_block_sizes(&[first, n - first]).unwrap();
            let p = PosteriorVector::new(p, space).unwrap();
            let specs = [
                RewardSpec::Map,
                RewardSpec::Proportion { c },
                RewardSpec::Penalty(PenaltySequence::linear(n, c).unwrap()),
                RewardSpec::Composite { a: f64::from(a) / 8.0, b: f64::from(b) / 8.0 },
            ];
            for spec in specs {
                let fast = optimal_classifier(&spec, &p).unwrap();
                let oracle = brute_force_optimal(&spec, &p).unwrap();
                prop_assert!((fast.value - oracle.value).abs() < 1e-12, "{:?}", spec);
            }
        }

        #[test]
        fn conformal_is_antitone(p in quantized_posterior(2..8), c1 in 0.0f64..1.0, c2 in 0.0f64..1.0) {
            let p = PosteriorVector::single_block(p).unwrap();
            let (lo, hi) = if c1 <= c2 { (c1, c2) } else { (c2, c1) };
            prop_assert!(conformal_classifier(&p, hi).unwrap().is_subset(&conformal_classifier(&p, lo).unwrap()));
        }

        #[test]
        fn rho_matches_proportion(p in quantized_posterior(2..8), rho in 0.001f64..1.0) {
            let p = PosteriorVector::single_block(p).unwrap();
            let by_rho = rho_classifier(&p, rho).unwrap();
            let by_cost = proportion_classifier(&p, rho * p.max_prob()).unwrap();
            prop_assert_eq!(by_rho, by_cost.set);
        }

        #[test]
        fn rho_is_scale_invariant(w in prop::collection::vec(0.01f64..10.0, 2..8), scale in 0.001f64..1000.0, rho in 0.0f64..1.0) {
            let space = CategorySpace::single_block(w.len()).unwrap();
            let uniform = vec![1.0 / w.len() as f64; w.len()];
            let scaled: Vec<f64> = w.iter().map(|x| x * scale).collect();
            let p1 = crate::probability::posterior_from_likelihoods(&uniform, &w, space.clone()).unwrap();
            let p2 = crate::probability::posterior_from_likelihoods(&uniform, &scaled, space).unwrap();
            // compare away from the threshold to avoid rounding at the boundary
            let threshold = rho * p1.max_prob();
            prop_assume!(p1.probs().iter().all(|x| (x - threshold).abs() > 1e-9));
            prop_assert_eq!(rho_classifier(&p1, rho).unwrap(), rho_classifier(&p2, rho).unwrap());
        }
    }
}
