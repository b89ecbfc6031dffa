//! Independent reference implementations shared by integration tests.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use setvalued::rewards::PenaltySequence;
use setvalued::{CategorySpace, PosteriorVector, RewardSpec};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Reward families written out directly from their definitions.
#[derive(Debug, Clone)]
pub enum OracleReward {
    Map,
    Penalty { g: Vec<f64>, convex: bool },
    Proportion { c: f64 },
    Ripley { r: f64 },
    Composite { a: f64, b: f64 },
}

impl OracleReward {
    pub fn to_spec(&self) -> RewardSpec {
        match self {
            Self::Map => RewardSpec::Map,
            Self::Penalty { g, convex: true } => RewardSpec::Penalty(PenaltySequence::convex(g.clone()).unwrap()),
            Self::Penalty { g, convex: false } => RewardSpec::Penalty(PenaltySequence::general(g.clone()).unwrap()),
            Self::Proportion { c } => RewardSpec::Proportion { c: *c },
            Self::Ripley { r } => RewardSpec::Ripley { r: *r },
            Self::Composite { a, b } => RewardSpec::Composite { a: *a, b: *b },
        }
    }

    /// Reward of set `mask` when the truth is `i`.
    pub fn reward(&self, mask: u64, i: usize, block_of: &[usize]) -> f64 {
        let n = block_of.len();
        let size = mask.count_ones() as usize;
        let hit = f64::from(u8::from(mask >> i & 1 == 1));
        match self {
            Self::Map => f64::from(u8::from(mask == 1 << i)),
            Self::Penalty { g, .. } => hit - g[size],
            Self::Proportion { c } => hit - c * size.saturating_sub(1) as f64,
            Self::Ripley { r } => {
                if mask == 1 << i {
                    1.0
                } else if size == n {
                    *r
                } else {
                    0.0
                }
            }
            Self::Composite { a, b } => {
                let same = (0..n)
                    .filter(|&j| mask >> j & 1 == 1 && block_of[j] == block_of[i])
                    .count();
                hit - a * same.saturating_sub(1) as f64 - b * (size - same) as f64
            }
        }
    }

    pub fn value(&self, mask: u64, p: &[f64], block_of: &[usize]) -> f64 {
        (0..p.len()).map(|i| p[i] * self.reward(mask, i, block_of)).sum()
    }

    /// Largest expected reward over all subsets.
    pub fn best_value(&self, p: &[f64], block_of: &[usize]) -> f64 {
        (0..1u64 << p.len())
            .map(|mask| self.value(mask, p, block_of))
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

pub fn block_of(space: &CategorySpace) -> Vec<usize> {
    (0..space.num_categories())
        .map(|i| space.block_of(i).unwrap())
        .collect()
}

/// Uniform draw from the probability simplex.
pub fn simplex<R: Rng>(n: usize, rng: &mut R) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|x| x / total).collect()
}

/// Random contiguous partition of `n` categories into `k` blocks.
pub fn partition<R: Rng>(n: usize, k: usize, rng: &mut R) -> Vec<usize> {
    let mut cuts: Vec<usize> = rand::seq::index::sample(rng, n - 1, k - 1)
        .into_iter()
        .map(|c| c + 1)
        .collect();
    cuts.sort_unstable();
    let mut sizes = Vec::with_capacity(k);
    let mut last = 0;
    for c in cuts.into_iter().chain(std::iter::once(n)) {
        sizes.push(c - last);
        last = c;
    }
    sizes
}

/// One randomized test instance.
#[derive(Debug, Clone)]
pub struct Instance {
    pub posterior: PosteriorVector,
    pub reward: OracleReward,
}

pub const FAMILIES: [&str; 6] = [
    "map",
    "penalty_convex",
    "penalty_general",
    "proportion",
    "ripley",
    "composite",
];

pub fn random_reward<R: Rng>(family: usize, n: usize, rng: &mut R) -> OracleReward {
    match family {
        0 => OracleReward::Map,
        1 => {
            let mut steps: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.2)).collect();
            steps.sort_by(f64::total_cmp);
            let mut g = vec![0.0];
            for s in steps {
                g.push(g.last().unwrap() + s);
            }
            OracleReward::Penalty { g, convex: true }
        }
        2 => OracleReward::Penalty {
            g: (0..=n).map(|_| rng.random_range(0.0..1.0)).collect(),
            convex: false,
        },
        3 => OracleReward::Proportion {
            c: rng.random_range(0.0..1.0),
        },
        4 => {
            let lower = 1.0 / n as f64;
            let r = lower + (1.0 - lower) * rng.random_range(0.001..0.999);
            OracleReward::Ripley { r }
        }
        _ => OracleReward::Composite {
            a: rng.random_range(0.0..1.0),
            b: rng.random_range(0.0..1.0),
        },
    }
}

pub fn random_instance<R: Rng>(rng: &mut R) -> Instance {
    let n = rng.random_range(2..=10);
    let k = rng.random_range(1..=4.min(n));
    let space = CategorySpace::from_block_sizes(&partition(n, k, rng)).unwrap();
    let posterior = PosteriorVector::new(simplex(n, rng), space).unwrap();
    let family = rng.random_range(0..FAMILIES.len());
    Instance {
        reward: random_reward(family, n, rng),
        posterior,
    }
}

/// Normal-Inverse-Wishart hyperparameters `(location, kappa, nu, scatter)`.
pub type Niw = (DVector<f64>, f64, f64, DMatrix<f64>);

/// Conjugate update one observation at a time.
pub fn sequential_update(prior: &Niw, data: &[DVector<f64>]) -> Niw {
    let (mut mu, mut kappa, mut nu, mut psi) = prior.clone();
    for x in data {
        let dev = x - &mu;
        psi += &dev * dev.transpose() * (kappa / (kappa + 1.0));
        mu = (&mu * kappa + x) / (kappa + 1.0);
        kappa += 1.0;
        nu += 1.0;
    }
    (mu, kappa, nu, psi)
}

/// Closed-form posterior predictive: a multivariate t density.
pub fn predictive_log_density(post: &Niw, z: &DVector<f64>) -> f64 {
    let (mu, kappa, nu, psi) = post;
    let d = mu.len() as f64;
    let df = nu - d + 1.0;
    let shape = psi * ((kappa + 1.0) / (kappa * df));
    let inv = shape.clone().try_inverse().unwrap();
    let dev = z - mu;
    let quad = (dev.transpose() * inv * &dev)[(0, 0)];
    use statrs::function::gamma::ln_gamma;
    ln_gamma((df + d) / 2.0)
        - ln_gamma(df / 2.0)
        - 0.5 * d * (df * std::f64::consts::PI).ln()
        - 0.5 * shape.determinant().ln()
        - 0.5 * (df + d) * (1.0 + quad / df).ln()
}

pub fn random_spd<R: Rng>(d: usize, rng: &mut R) -> DMatrix<f64> {
    let a = DMatrix::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
    &a * a.transpose() + DMatrix::identity(d, d) * 0.5
}

pub fn max_rel_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).abs() / x.abs().max(1.0))
        .fold(0.0, f64::max)
}
