//! Leave-one-out cross-validation of the composite classifier and selection
//! of its cost parameters.
//!
//! Held-out posteriors are computed once per observation and reused for
//! every `(a, b)` pair. A fold refits only the held-out observation's
//! category, by exact downdate of its conjugate posterior, with fresh draws
//! from a fold-derived seed. The prior over categories stays fixed.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifiers::composite_classifier;
use crate::error::{invalid, Error, Result};
use crate::gaussian::{
    derive_seed, stream_rng, GaussianCategoryModel, NormalInverseWishart, PredictiveMixture, TrainingData,
    DEFAULT_DRAWS,
};
use crate::probability::{validate_prior, CategorySpace, PosteriorVector};
use crate::rewards::{binary_reward, BinaryReward};

const WEIGHT_TOLERANCE: f64 = 1e-9;
const GOLDEN_ITERATIONS: usize = 40;

/// How observations are weighted in the cross-validated reward rate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum WeightScheme {
    /// Every observation counts equally: `w_i = n_i / n`.
    #[serde(rename = "per_bird")]
    PerObservation,
    /// Every category counts equally: `w_i = 1 / N`.
    #[serde(rename = "per_species")]
    PerCategory,
    /// Rare categories count more: `w_i` proportional to `1 / pi_i` for a
    /// supplied real prior.
    #[serde(rename = "rarity")]
    Rarity,
}

impl WeightScheme {
    pub fn name(self) -> &'static str {
        match self {
            Self::PerObservation => "per_bird",
            Self::PerCategory => "per_species",
            Self::Rarity => "rarity",
        }
    }
}

impl std::str::FromStr for WeightScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "per_bird" | "per_observation" => Ok(Self::PerObservation),
            "per_species" | "per_category" => Ok(Self::PerCategory),
            "rarity" => Ok(Self::Rarity),
            _ => Err(invalid("weights", format!("unknown weight scheme {s:?}"))),
        }
    }
}

/// Normalized category weights.
pub fn make_weights(scheme: WeightScheme, counts: &[usize], real_prior: Option<&[f64]>) -> Result<Vec<f64>> {
    if counts.is_empty() {
        return Err(invalid("counts", "no categories"));
    }
    if let Some(i) = counts.iter().position(|&n| n == 0) {
        return Err(Error::EmptyCategory(i));
    }
    let raw: Vec<f64> = match scheme {
        WeightScheme::PerObservation => counts.iter().map(|&n| n as f64).collect(),
        WeightScheme::PerCategory => vec![1.0; counts.len()],
        WeightScheme::Rarity => {
            let prior = real_prior.ok_or(Error::MissingRealPrior)?;
            if prior.len() != counts.len() {
                return Err(Error::DimensionMismatch {
                    expected: counts.len(),
                    got: prior.len(),
                });
            }
            if prior.iter().any(|&p| !(p > 0.0 && p.is_finite())) {
                return Err(Error::MissingRealPrior);
            }
            prior.iter().map(|p| 1.0 / p).collect()
        }
    };
    let total: f64 = raw.iter().sum();
    Ok(raw.into_iter().map(|w| w / total).collect())
}

fn check_weights(weights: &[f64], n: usize) -> Result<()> {
    if weights.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: weights.len(),
        });
    }
    if weights.iter().any(|w| w.is_nan() || *w < 0.0) || (weights.iter().sum::<f64>() - 1.0).abs() > WEIGHT_TOLERANCE {
        return Err(invalid("weights", "must be nonnegative and sum to 1"));
    }
    Ok(())
}

/// Model fitting parameters shared by all folds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitParams {
    /// Hyperprior; derived from the data when absent.
    pub hyperprior: Option<NormalInverseWishart>,
    pub draws: usize,
    pub seed: u64,
    /// Worker threads for fold evaluation; the global pool when absent.
    pub threads: Option<usize>,
}

impl Default for FitParams {
    fn default() -> Self {
        Self {
            hyperprior: None,
            draws: DEFAULT_DRAWS,
            seed: 0,
            threads: None,
        }
    }
}

/// Held-out posteriors for every training observation.
#[derive(Debug, Clone)]
pub struct LooPosteriors {
    space: CategorySpace,
    counts: Vec<usize>,
    // category-major, parallel to the training data
    posteriors: Vec<PosteriorVector>,
}

impl LooPosteriors {
    pub fn compute(data: &TrainingData, space: &CategorySpace, prior: &[f64], params: &FitParams) -> Result<Self> {
        let counts = data.counts();
        if counts.len() != space.num_categories() {
            return Err(Error::DimensionMismatch {
                expected: space.num_categories(),
                got: counts.len(),
            });
        }
        if prior.len() != counts.len() {
            return Err(Error::DimensionMismatch {
                expected: counts.len(),
                got: prior.len(),
            });
        }
        validate_prior(prior)?;
        if let Some((category, &count)) = counts.iter().enumerate().find(|(_, &n)| n < 2) {
            return Err(Error::CategoryTooSmall {
                category,
                count,
                required: 2,
            });
        }
        let hyperprior = match &params.hyperprior {
            Some(h) => h.clone(),
            None => NormalInverseWishart::default_for(data)?,
        };
        let model = GaussianCategoryModel::fit(data, &hyperprior, params.draws, params.seed)?;
        let rows: Vec<(usize, &nalgebra::DVector<f64>)> = data.iter().collect();

        let fold = |index: usize| -> Result<PosteriorVector> {
            let (category, z) = rows[index];
            let reduced = model.posterior(category).remove_observation(z)?;
            let mut rng = stream_rng(derive_seed(params.seed, index as u64), category as u64);
            let refit = PredictiveMixture::from_posterior(&reduced, params.draws, &mut rng)?;
            let mut log_weights = Vec::with_capacity(prior.len());
            for (k, &pi) in prior.iter().enumerate() {
                log_weights.push(if pi > 0.0 {
                    let mixture = if k == category { &refit } else { model.mixture(k)? };
                    pi.ln() + mixture.log_density(z.as_slice())?
                } else {
                    f64::NEG_INFINITY
                });
            }
            PosteriorVector::from_log_weights(&log_weights, space.clone())
        };
        let run = || (0..rows.len()).into_par_iter().map(fold).collect::<Result<Vec<_>>>();
        let posteriors = match params.threads {
            Some(threads) => rayon::ThreadPoolBuilder::new()
                .num_threads(threads.max(1))
                .build()
                .map_err(|e| invalid("threads", e.to_string()))?
                .install(run)?,
            None => run()?,
        };
        Ok(Self {
            space: space.clone(),
            counts,
            posteriors,
        })
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn space(&self) -> &CategorySpace {
        &self.space
    }

    /// Held-out posteriors in category-major order.
    pub fn posteriors(&self) -> &[PosteriorVector] {
        &self.posteriors
    }

    fn reward_counts(&self, a: f64, b: f64) -> Result<Vec<[usize; 4]>> {
        let mut hits = vec![[0usize; 4]; self.counts.len()];
        let mut offset = 0;
        for (i, &n) in self.counts.iter().enumerate() {
            for p in &self.posteriors[offset..offset + n] {
                let set = composite_classifier(p, a, b)?.set;
                for variant in BinaryReward::ALL {
                    hits[i][variant.index()] += usize::from(binary_reward(variant, &set, i, &self.space)?);
                }
            }
            offset += n;
        }
        Ok(hits)
    }

    /// Mean held-out reward per category for each binary reward variant.
    pub fn category_means(&self, a: f64, b: f64) -> Result<Vec<[f64; 4]>> {
        Ok(self
            .reward_counts(a, b)?
            .into_iter()
            .zip(&self.counts)
            .map(|(h, &n)| h.map(|c| c as f64 / n as f64))
            .collect())
    }

    /// Weighted reward rates for all four variants at `(a, b)`.
    pub fn reward_rates(&self, a: f64, b: f64, weights: &[f64]) -> Result<[f64; 4]> {
        check_weights(weights, self.counts.len())?;
        let mut rates = [0.0; 4];
        for (means, w) in self.category_means(a, b)?.iter().zip(weights) {
            for (rate, mean) in rates.iter_mut().zip(means) {
                *rate += w * mean;
            }
        }
        Ok(rates.map(|r| r.clamp(0.0, 1.0)))
    }

    pub fn reward_rate(&self, a: f64, b: f64, weights: &[f64], variant: BinaryReward) -> Result<f64> {
        Ok(self.reward_rates(a, b, weights)?[variant.index()])
    }

    /// Reward rates along `grid` with `a = epsilon * b`.
    pub fn curve(&self, epsilon: f64, grid: &BGrid, weights: &[f64]) -> Result<Vec<CurvePoint>> {
        check_epsilon(epsilon)?;
        grid.points()?
            .into_iter()
            .map(|b| {
                Ok(CurvePoint {
                    b,
                    rates: self.reward_rates(epsilon * b, b, weights)?,
                })
            })
            .collect()
    }
}

/// Cross-validated reward rate of the composite classifier with costs
/// `(a, b)`.
#[allow(clippy::too_many_arguments)]
pub fn loocv_reward_rate(
    data: &TrainingData,
    space: &CategorySpace,
    prior: &[f64],
    a: f64,
    b: f64,
    weights: &[f64],
    variant: BinaryReward,
    params: &FitParams,
) -> Result<f64> {
    LooPosteriors::compute(data, space, prior, params)?.reward_rate(a, b, weights, variant)
}

fn check_epsilon(epsilon: f64) -> Result<()> {
    if epsilon >= 0.0 && epsilon.is_finite() {
        Ok(())
    } else {
        Err(invalid("epsilon", format!("{epsilon} must be finite and >= 0")))
    }
}

/// Evenly spaced grid `lo, lo + step, ...` up to `hi`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BGrid {
    pub lo: f64,
    pub hi: f64,
    pub step: f64,
}

impl BGrid {
    pub fn new(lo: f64, hi: f64, step: f64) -> Result<Self> {
        let grid = Self { lo, hi, step };
        grid.validate()?;
        Ok(grid)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lo > 0.0 && self.lo.is_finite()) {
            return Err(invalid("grid", format!("lo = {} must be positive", self.lo)));
        }
        if !(self.step > 0.0 && self.step.is_finite()) {
            return Err(invalid("grid", format!("step = {} must be positive", self.step)));
        }
        if !(self.hi >= self.lo && self.hi.is_finite()) {
            return Err(invalid("grid", format!("hi = {} below lo = {}", self.hi, self.lo)));
        }
        Ok(())
    }

    /// Grid points, rounded to 12 decimals to suppress accumulation noise.
    pub fn points(&self) -> Result<Vec<f64>> {
        self.validate()?;
        let count = ((self.hi - self.lo) / self.step + 1e-9).floor() as usize + 1;
        Ok((0..count)
            .map(|k| ((self.lo + k as f64 * self.step) * 1e12).round() / 1e12)
            .collect())
    }
}

/// Reward rates of all binary variants at one value of `b`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub b: f64,
    /// Rates for R1..R4.
    pub rates: [f64; 4],
}

impl CurvePoint {
    pub fn non_reward_rate(&self, variant: BinaryReward) -> f64 {
        1.0 - self.rates[variant.index()]
    }
}

/// Settings of one tuning run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CVConfig {
    /// Fixed ratio `a / b`.
    pub epsilon: f64,
    /// Tolerated non-reward rate for threshold selection.
    pub delta: f64,
    pub weights: WeightScheme,
    /// Required by [`WeightScheme::Rarity`].
    pub real_prior: Option<Vec<f64>>,
    pub variant: BinaryReward,
    pub grid: BGrid,
    pub fit: FitParams,
}

impl CVConfig {
    pub fn validate(&self) -> Result<()> {
        check_epsilon(self.epsilon)?;
        if !(self.delta > 0.0 && self.delta <= 1.0) {
            return Err(invalid("delta", format!("{} outside (0, 1]", self.delta)));
        }
        self.grid.validate()
    }
}

/// Selected cost parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum Selection {
    /// Largest grid `b` whose non-reward rate stays within `delta`.
    /// `at_grid_top` marks that the bound still holds at the top of the
    /// grid, so the true value is at least `b`.
    Threshold {
        b: f64,
        non_reward_rate: f64,
        at_grid_top: bool,
    },
    /// Minimizer of the non-reward rate: the smallest grid minimizer,
    /// replaced by a refined value only when that is strictly better.
    Minimum {
        b: f64,
        non_reward_rate: f64,
        grid_b: f64,
        grid_non_reward_rate: f64,
    },
}

impl Selection {
    pub fn b(&self) -> f64 {
        match *self {
            Self::Threshold { b, .. } | Self::Minimum { b, .. } => b,
        }
    }

    pub fn non_reward_rate(&self) -> f64 {
        match *self {
            Self::Threshold { non_reward_rate, .. } | Self::Minimum { non_reward_rate, .. } => non_reward_rate,
        }
    }

    /// `b` as reported in tables: `">= hi"` for a threshold at the grid top.
    pub fn display_b(&self) -> String {
        match *self {
            Self::Threshold {
                b, at_grid_top: true, ..
            } => format!(">= {b}"),
            _ => self.b().to_string(),
        }
    }
}

/// Cross-validation curve and selected parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CVReport {
    pub config: CVConfig,
    pub weights: Vec<f64>,
    pub curve: Vec<CurvePoint>,
    pub selection: Selection,
}

impl CVReport {
    /// `b,rate_R1,rate_R2,rate_R3,rate_R4` with one row per grid point.
    pub fn curve_csv(&self) -> String {
        curve_csv(&self.curve)
    }

    pub fn selection_json(&self) -> String {
        let json = serde_json::json!({
            "epsilon": self.config.epsilon,
            "delta": self.config.delta,
            "variant": self.config.variant.to_string(),
            "weight_scheme": self.config.weights.name(),
            "weights": self.weights,
            "grid": self.config.grid,
            "draws": self.config.fit.draws,
            "seed": self.config.fit.seed,
            "selection": self.selection,
            "b_display": self.selection.display_b(),
        });
        serde_json::to_string_pretty(&json).expect("report serializes")
    }
}

/// Curve rows as CSV.
pub fn curve_csv(curve: &[CurvePoint]) -> String {
    let mut out = String::from("b,rate_R1,rate_R2,rate_R3,rate_R4\n");
    for point in curve {
        let [r1, r2, r3, r4] = point.rates;
        writeln!(out, "{},{r1},{r2},{r3},{r4}", point.b).expect("writing to a string");
    }
    out
}

fn resolve_weights(config: &CVConfig, loo: &LooPosteriors) -> Result<Vec<f64>> {
    make_weights(config.weights, loo.counts(), config.real_prior.as_deref())
}

/// Threshold rule: the largest grid `b` with non-reward rate at most
/// `delta`, scanning from the top of the grid. Requires a monotone variant.
pub fn select_b_threshold(config: &CVConfig, loo: &LooPosteriors) -> Result<CVReport> {
    config.validate()?;
    if !config.variant.is_monotone() {
        return Err(invalid(
            "variant",
            format!("threshold selection needs R3 or R4, got {}", config.variant),
        ));
    }
    let weights = resolve_weights(config, loo)?;
    let curve = loo.curve(config.epsilon, &config.grid, &weights)?;
    let last = curve.len() - 1;
    let (index, point) = curve
        .iter()
        .enumerate()
        .rev()
        .find(|(_, p)| p.non_reward_rate(config.variant) <= config.delta)
        .ok_or(Error::NoFeasibleB { delta: config.delta })?;
    let selection = Selection::Threshold {
        b: point.b,
        non_reward_rate: point.non_reward_rate(config.variant),
        at_grid_top: index == last,
    };
    Ok(CVReport {
        config: config.clone(),
        weights,
        curve,
        selection,
    })
}

/// Minimization rule: grid scan, then golden-section search inside the
/// bracket around the smallest grid minimizer.
pub fn select_b_minimize(config: &CVConfig, loo: &LooPosteriors) -> Result<CVReport> {
    config.validate()?;
    if config.variant.is_monotone() {
        return Err(invalid(
            "variant",
            format!("minimization needs R1 or R2, got {}", config.variant),
        ));
    }
    let weights = resolve_weights(config, loo)?;
    let curve = loo.curve(config.epsilon, &config.grid, &weights)?;
    let variant = config.variant;
    let mut best = 0;
    for (k, point) in curve.iter().enumerate() {
        if point.non_reward_rate(variant) < curve[best].non_reward_rate(variant) {
            best = k;
        }
    }
    let grid_b = curve[best].b;
    let grid_rate = curve[best].non_reward_rate(variant);

    let objective = |b: f64| -> Result<f64> { Ok(1.0 - loo.reward_rate(config.epsilon * b, b, &weights, variant)?) };
    let lo = curve[best.saturating_sub(1)].b;
    let hi = curve[(best + 1).min(curve.len() - 1)].b;
    let (refined_b, refined_rate) = golden_section(lo, hi, objective)?;
    let (b, non_reward_rate) = if refined_rate < grid_rate {
        (refined_b, refined_rate)
    } else {
        (grid_b, grid_rate)
    };
    Ok(CVReport {
        config: config.clone(),
        weights,
        curve,
        selection: Selection::Minimum {
            b,
            non_reward_rate,
            grid_b,
            grid_non_reward_rate: grid_rate,
        },
    })
}

fn golden_section(mut lo: f64, mut hi: f64, f: impl Fn(f64) -> Result<f64>) -> Result<(f64, f64)> {
    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - ratio * (hi - lo);
    let mut x2 = lo + ratio * (hi - lo);
    let mut f1 = f(x1)?;
    let mut f2 = f(x2)?;
    for _ in 0..GOLDEN_ITERATIONS {
        if hi - lo <= 1e-9 {
            break;
        }
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - ratio * (hi - lo);
            f1 = f(x1)?;
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + ratio * (hi - lo);
            f2 = f(x2)?;
        }
    }
    Ok(if f1 <= f2 { (x1, f1) } else { (x2, f2) })
}

/// Non-reward rates over an `(a, b)` lattice: rows follow `a_grid`,
/// columns follow `b_grid`.
pub fn grid_scan_ab(
    loo: &LooPosteriors,
    a_grid: &[f64],
    b_grid: &[f64],
    weights: &[f64],
    variant: BinaryReward,
) -> Result<Vec<Vec<f64>>> {
    if a_grid.is_empty() || b_grid.is_empty() {
        return Err(invalid("grid", "a and b grids must be nonempty"));
    }
    a_grid
        .iter()
        .map(|&a| {
            b_grid
                .iter()
                .map(|&b| Ok(1.0 - loo.reward_rate(a, b, weights, variant)?))
                .collect()
        })
        .collect()
}

/// Long-format lattice CSV: `a,b,non_reward_rate`.
pub fn grid_scan_csv(a_grid: &[f64], b_grid: &[f64], rates: &[Vec<f64>]) -> String {
    let mut out = String::from("a,b,non_reward_rate\n");
    for (a, row) in a_grid.iter().zip(rates) {
        for (b, rate) in b_grid.iter().zip(row) {
            writeln!(out, "{a},{b},{rate}").expect("writing to a string");
        }
    }
    out
}
