//! Per-category multivariate Gaussian model with a conjugate
//! Normal-Inverse-Wishart posterior.
//!
//! Each category's predictive density is a Monte-Carlo average over `L`
//! posterior draws `(mu, Sigma)`. Draws are regenerated from the seed and
//! never stored, so a model round-trips through its serialized state.
//! Random streams are keyed by `(seed, category)`.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::probability::{validate_prior, CategorySpace, PosteriorVector};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Default number of Monte-Carlo draws per category.
pub const DEFAULT_DRAWS: usize = 1000;

/// Minimum calibration sample size.
pub const MIN_CALIBRATION_SAMPLES: usize = 100;

/// Deterministic generator for stream `stream` of `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Mixes a base seed with an index (splitmix64 finalizer).
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Labeled training observations grouped by category.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingData {
    dim: usize,
    categories: Vec<Vec<DVector<f64>>>,
}

impl TrainingData {
    pub fn new(dim: usize, categories: Vec<Vec<Vec<f64>>>) -> Result<Self> {
        if dim == 0 {
            return Err(invalid("dim", "observations need at least one feature"));
        }
        let mut grouped = Vec::with_capacity(categories.len());
        for rows in categories {
            let mut converted = Vec::with_capacity(rows.len());
            for row in rows {
                if row.len() != dim {
                    return Err(Error::DimensionMismatch {
                        expected: dim,
                        got: row.len(),
                    });
                }
                if row.iter().any(|x| !x.is_finite()) {
                    return Err(invalid("observation", "features must be finite"));
                }
                converted.push(DVector::from_vec(row));
            }
            grouped.push(converted);
        }
        Ok(Self {
            dim,
            categories: grouped,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_categories(&self) -> usize {
        self.categories.len()
    }

    pub fn category(&self, i: usize) -> &[DVector<f64>] {
        &self.categories[i]
    }

    pub fn counts(&self) -> Vec<usize> {
        self.categories.iter().map(Vec::len).collect()
    }

    pub fn total(&self) -> usize {
        self.categories.iter().map(Vec::len).sum()
    }

    /// `(category, observation)` pairs in category-major order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, &DVector<f64>)> {
        self.categories
            .iter()
            .enumerate()
            .flat_map(|(i, rows)| rows.iter().map(move |z| (i, z)))
    }
}

fn cholesky(matrix: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    matrix
        .clone()
        .cholesky()
        .map(|c| c.l())
        .ok_or_else(|| Error::SingularScatter(what.to_string()))
}

/// Normal-Inverse-Wishart distribution over `(mu, Sigma)`:
/// `Sigma ~ IW(dof, scatter)` and `mu | Sigma ~ N(location, Sigma / scale_count)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "NiwRepr", into = "NiwRepr")]
pub struct NormalInverseWishart {
    location: DVector<f64>,
    scale_count: f64,
    dof: f64,
    scatter: DMatrix<f64>,
}

#[derive(Serialize, Deserialize)]
struct NiwRepr {
    location: Vec<f64>,
    scale_count: f64,
    dof: f64,
    scatter: Vec<Vec<f64>>,
}

impl TryFrom<NiwRepr> for NormalInverseWishart {
    type Error = Error;

    fn try_from(repr: NiwRepr) -> Result<Self> {
        let d = repr.location.len();
        if repr.scatter.len() != d || repr.scatter.iter().any(|row| row.len() != d) {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: repr.scatter.len(),
            });
        }
        let scatter = DMatrix::from_fn(d, d, |r, c| repr.scatter[r][c]);
        Self::new(DVector::from_vec(repr.location), repr.scale_count, repr.dof, scatter)
    }
}

impl From<NormalInverseWishart> for NiwRepr {
    fn from(niw: NormalInverseWishart) -> Self {
        let d = niw.dim();
        Self {
            location: niw.location.iter().copied().collect(),
            scale_count: niw.scale_count,
            dof: niw.dof,
            scatter: (0..d).map(|r| (0..d).map(|c| niw.scatter[(r, c)]).collect()).collect(),
        }
    }
}

impl NormalInverseWishart {
    pub fn new(location: DVector<f64>, scale_count: f64, dof: f64, scatter: DMatrix<f64>) -> Result<Self> {
        let d = location.len();
        if d == 0 {
            return Err(invalid("location", "empty location vector"));
        }
        if scatter.shape() != (d, d) {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: scatter.nrows(),
            });
        }
        if !(scale_count > 0.0 && scale_count.is_finite()) {
            return Err(invalid("scale_count", format!("{scale_count} must be positive")));
        }
        if !(dof > d as f64 - 1.0 && dof.is_finite()) {
            return Err(invalid("dof", format!("{dof} must exceed dim - 1 = {}", d - 1)));
        }
        if (&scatter - scatter.transpose()).amax() > 1e-9 * scatter.amax().max(1.0) {
            return Err(Error::SingularScatter("scatter matrix is not symmetric".into()));
        }
        cholesky(&scatter, "scatter matrix")?;
        Ok(Self {
            location,
            scale_count,
            dof,
            scatter,
        })
    }

    /// Weakly informative default: overall mean, one pseudo-observation,
    /// `dim + 2` degrees of freedom and the diagonal of the within-category
    /// pooled covariance as scatter.
    pub fn default_for(data: &TrainingData) -> Result<Self> {
        let d = data.dim();
        let n = data.total();
        if n == 0 {
            return Err(invalid("data", "no observations"));
        }
        let mut mean = DVector::zeros(d);
        for (_, z) in data.iter() {
            mean += z;
        }
        mean /= n as f64;

        let groups = data.categories.iter().filter(|c| !c.is_empty()).count();
        let mut variances = DVector::zeros(d);
        let denominator = if n > groups {
            for rows in &data.categories {
                if rows.is_empty() {
                    continue;
                }
                let group_mean = rows.iter().fold(DVector::zeros(d), |acc, z| acc + z) / rows.len() as f64;
                for z in rows {
                    variances += (z - &group_mean).map(|x| x * x);
                }
            }
            (n - groups) as f64
        } else {
            for (_, z) in data.iter() {
                variances += (z - &mean).map(|x| x * x);
            }
            (n.max(2) - 1) as f64
        };
        variances /= denominator;
        if variances.iter().any(|v| v.is_nan() || *v <= 0.0) {
            return Err(Error::SingularScatter("a feature has zero pooled variance".into()));
        }
        Self::new(mean, 1.0, d as f64 + 2.0, DMatrix::from_diagonal(&variances))
    }

    pub fn dim(&self) -> usize {
        self.location.len()
    }

    pub fn location(&self) -> &DVector<f64> {
        &self.location
    }

    pub fn scale_count(&self) -> f64 {
        self.scale_count
    }

    pub fn dof(&self) -> f64 {
        self.dof
    }

    pub fn scatter(&self) -> &DMatrix<f64> {
        &self.scatter
    }

    /// Conjugate update with a batch of observations.
    pub fn posterior(&self, observations: &[DVector<f64>]) -> Result<Self> {
        let n = observations.len();
        if n == 0 {
            return Ok(self.clone());
        }
        let d = self.dim();
        if let Some(z) = observations.iter().find(|z| z.len() != d) {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: z.len(),
            });
        }
        let nf = n as f64;
        let mean = observations.iter().fold(DVector::zeros(d), |acc, z| acc + z) / nf;
        let mut spread = DMatrix::zeros(d, d);
        for z in observations {
            let dev = z - &mean;
            spread += &dev * dev.transpose();
        }
        let kappa = self.scale_count + nf;
        let shift = &mean - &self.location;
        let location = (&self.location * self.scale_count + &mean * nf) / kappa;
        let scatter = &self.scatter + spread + (&shift * shift.transpose()) * (self.scale_count * nf / kappa);
        Self::new(location, kappa, self.dof + nf, symmetrize(scatter))
    }

    /// Exact inverse of a one-observation update: the posterior that would
    /// have been obtained without `z`.
    pub fn remove_observation(&self, z: &DVector<f64>) -> Result<Self> {
        if z.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: z.len(),
            });
        }
        let kappa = self.scale_count - 1.0;
        let location = (&self.location * self.scale_count - z) / kappa;
        let dev = z - &location;
        let scatter = &self.scatter - (&dev * dev.transpose()) * (kappa / self.scale_count);
        Self::new(location, kappa, self.dof - 1.0, symmetrize(scatter))
    }

    /// Draws `count` parameter pairs `(mu, Sigma)` using the Bartlett
    /// decomposition of the Wishart distribution of `Sigma^-1`.
    pub fn sample_draws<R: Rng>(&self, count: usize, rng: &mut R) -> Result<Vec<GaussianDraw>> {
        let d = self.dim();
        let precision_scale = self
            .scatter
            .clone()
            .cholesky()
            .ok_or_else(|| Error::SingularScatter("scatter matrix".into()))?
            .inverse();
        let root = cholesky(&symmetrize(precision_scale), "inverse scatter")?;
        let chi: Vec<ChiSquared<f64>> = (0..d)
            .map(|i| ChiSquared::new(self.dof - i as f64).expect("dof exceeds dim - 1"))
            .collect();
        let mut draws = Vec::with_capacity(count);
        for _ in 0..count {
            let mut bartlett = DMatrix::zeros(d, d);
            for i in 0..d {
                bartlett[(i, i)] = chi[i].sample(rng).sqrt();
                for j in 0..i {
                    bartlett[(i, j)] = rng.sample(StandardNormal);
                }
            }
            // precision = T T^T with T lower triangular
            let t = &root * bartlett;
            let t_inv = t
                .solve_lower_triangular(&DMatrix::identity(d, d))
                .ok_or_else(|| Error::SingularScatter("degenerate Wishart draw".into()))?;
            let covariance = symmetrize(t_inv.transpose() * t_inv);
            let cov_root = cholesky(&covariance, "sampled covariance")?;
            let noise = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
            let mean = &self.location + cov_root * noise / self.scale_count.sqrt();
            draws.push(GaussianDraw::new(mean, covariance)?);
        }
        Ok(draws)
    }
}

fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    (&m + m.transpose()) * 0.5
}

/// One multivariate normal component `N(mean, covariance)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianDraw {
    mean: DVector<f64>,
    // lower Cholesky factor of the covariance, row-major
    chol: Vec<f64>,
    log_norm: f64,
}

impl GaussianDraw {
    pub fn new(mean: DVector<f64>, covariance: DMatrix<f64>) -> Result<Self> {
        let d = mean.len();
        if covariance.shape() != (d, d) {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: covariance.nrows(),
            });
        }
        let l = cholesky(&covariance, "covariance")?;
        let log_det: f64 = 2.0 * (0..d).map(|i| l[(i, i)].ln()).sum::<f64>();
        let chol = (0..d)
            .flat_map(|r| (0..d).map(move |c| (r, c)))
            .map(|(r, c)| l[(r, c)])
            .collect();
        Ok(Self {
            mean,
            chol,
            log_norm: -0.5 * (d as f64 * LN_2PI + log_det),
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn covariance(&self) -> DMatrix<f64> {
        let d = self.dim();
        let l = DMatrix::from_row_slice(d, d, &self.chol);
        &l * l.transpose()
    }

    /// `ln f(z; mean, covariance)`; `z` must have the draw's dimension.
    pub fn log_density(&self, z: &[f64]) -> f64 {
        let d = self.dim();
        let mut stack = [0.0; 8];
        let mut heap = Vec::new();
        let y: &mut [f64] = if d <= stack.len() {
            &mut stack[..d]
        } else {
            heap.resize(d, 0.0);
            &mut heap
        };
        let mut quad = 0.0;
        for i in 0..d {
            let row = &self.chol[i * d..i * d + i + 1];
            let mut acc = z[i] - self.mean[i];
            for j in 0..i {
                acc -= row[j] * y[j];
            }
            y[i] = acc / row[i];
            quad += y[i] * y[i];
        }
        self.log_norm - 0.5 * quad
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> DVector<f64> {
        let d = self.dim();
        let noise: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        DVector::from_fn(d, |r, _| {
            self.mean[r] + (0..=r).map(|c| self.chol[r * d + c] * noise[c]).sum::<f64>()
        })
    }
}

fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Equal-weight mixture of Gaussian draws: the Monte-Carlo estimate of a
/// category's predictive density.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictiveMixture {
    draws: Vec<GaussianDraw>,
}

impl PredictiveMixture {
    pub fn from_draws(draws: Vec<GaussianDraw>) -> Result<Self> {
        let Some(first) = draws.first() else {
            return Err(invalid("draws", "at least one draw required"));
        };
        let d = first.dim();
        if let Some(bad) = draws.iter().find(|g| g.dim() != d) {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: bad.dim(),
            });
        }
        Ok(Self { draws })
    }

    /// `count` parameter draws from `posterior`.
    pub fn from_posterior<R: Rng>(posterior: &NormalInverseWishart, count: usize, rng: &mut R) -> Result<Self> {
        Self::from_draws(posterior.sample_draws(count, rng)?)
    }

    pub fn dim(&self) -> usize {
        self.draws[0].dim()
    }

    pub fn draws(&self) -> &[GaussianDraw] {
        &self.draws
    }

    pub fn log_density(&self, z: &[f64]) -> Result<f64> {
        if z.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: z.len(),
            });
        }
        let logs = self.draws.iter().map(|g| g.log_density(z));
        Ok(log_sum_exp(logs) - (self.draws.len() as f64).ln())
    }

    pub fn density(&self, z: &[f64]) -> Result<f64> {
        self.log_density(z).map(f64::exp)
    }

    /// One observation from the mixture.
    pub fn sample<R: Rng>(&self, rng: &mut R) -> DVector<f64> {
        let l = rng.random_range(0..self.draws.len());
        self.draws[l].sample(rng)
    }
}

/// Serializable model state. Draws are regenerated from `seed` on load.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelState {
    pub dim: usize,
    pub draws: usize,
    pub seed: u64,
    pub hyperprior: NormalInverseWishart,
    pub counts: Vec<usize>,
    pub posteriors: Vec<NormalInverseWishart>,
}

/// Fitted per-category Gaussian model.
#[derive(Debug, Clone)]
pub struct GaussianCategoryModel {
    state: ModelState,
    mixtures: Vec<PredictiveMixture>,
}

impl GaussianCategoryModel {
    /// Updates the hyperprior with each category's data and draws `draws`
    /// parameter samples per category.
    pub fn fit(data: &TrainingData, hyperprior: &NormalInverseWishart, draws: usize, seed: u64) -> Result<Self> {
        if hyperprior.dim() != data.dim() {
            return Err(Error::DimensionMismatch {
                expected: data.dim(),
                got: hyperprior.dim(),
            });
        }
        if let Some(i) = data.counts().iter().position(|&n| n == 0) {
            return Err(Error::EmptyCategory(i));
        }
        let posteriors = (0..data.num_categories())
            .map(|i| hyperprior.posterior(data.category(i)))
            .collect::<Result<Vec<_>>>()?;
        Self::from_state(ModelState {
            dim: data.dim(),
            draws,
            seed,
            hyperprior: hyperprior.clone(),
            counts: data.counts(),
            posteriors,
        })
    }

    /// Rebuilds a model, regenerating the Monte-Carlo draws.
    pub fn from_state(state: ModelState) -> Result<Self> {
        if state.draws == 0 {
            return Err(invalid("draws", "at least one draw per category"));
        }
        if state.posteriors.is_empty() {
            return Err(invalid("posteriors", "model has no categories"));
        }
        if state.counts.len() != state.posteriors.len() {
            return Err(Error::DimensionMismatch {
                expected: state.posteriors.len(),
                got: state.counts.len(),
            });
        }
        if let Some(p) = state.posteriors.iter().find(|p| p.dim() != state.dim) {
            return Err(Error::DimensionMismatch {
                expected: state.dim,
                got: p.dim(),
            });
        }
        let mixtures = state
            .posteriors
            .iter()
            .enumerate()
            .map(|(i, post)| {
                PredictiveMixture::from_posterior(post, state.draws, &mut stream_rng(state.seed, i as u64))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { state, mixtures })
    }

    /// Replaces category `i`'s posterior, drawing fresh parameters from
    /// stream `i` of `seed`. Used for leave-one-out refits.
    pub fn with_category_posterior(&self, i: usize, posterior: NormalInverseWishart, seed: u64) -> Result<Self> {
        let mixture = PredictiveMixture::from_posterior(&posterior, self.state.draws, &mut stream_rng(seed, i as u64))?;
        let mut next = self.clone();
        next.state.posteriors[i] = posterior;
        next.mixtures[i] = mixture;
        Ok(next)
    }

    pub fn state(&self) -> &ModelState {
        &self.state
    }

    pub fn dim(&self) -> usize {
        self.state.dim
    }

    pub fn num_categories(&self) -> usize {
        self.mixtures.len()
    }

    pub fn counts(&self) -> &[usize] {
        &self.state.counts
    }

    pub fn posterior(&self, i: usize) -> &NormalInverseWishart {
        &self.state.posteriors[i]
    }

    pub fn mixture(&self, i: usize) -> Result<&PredictiveMixture> {
        self.mixtures.get(i).ok_or(Error::OutOfRange {
            what: "category",
            value: i,
            max: self.mixtures.len() - 1,
        })
    }

    /// Monte-Carlo predictive density of category `i` at `z`.
    pub fn predictive_density(&self, i: usize, z: &[f64]) -> Result<f64> {
        self.mixture(i)?.density(z)
    }

    pub fn log_predictive_density(&self, i: usize, z: &[f64]) -> Result<f64> {
        self.mixture(i)?.log_density(z)
    }

    /// Posterior category probabilities of `z` under prior `prior`,
    /// computed in log space.
    pub fn posterior_over_categories(
        &self,
        prior: &[f64],
        z: &[f64],
        space: &CategorySpace,
    ) -> Result<PosteriorVector> {
        if prior.len() != self.num_categories() {
            return Err(Error::DimensionMismatch {
                expected: self.num_categories(),
                got: prior.len(),
            });
        }
        validate_prior(prior)?;
        let mut log_weights = Vec::with_capacity(prior.len());
        for (i, &pi) in prior.iter().enumerate() {
            log_weights.push(if pi > 0.0 {
                pi.ln() + self.log_predictive_density(i, z)?
            } else {
                f64::NEG_INFINITY
            });
        }
        PosteriorVector::from_log_weights(&log_weights, space.clone())
    }

    /// One `(category, observation)` draw from `sum_i prior_i f_i`.
    pub fn sample_labeled<R: Rng>(&self, cumulative_prior: &[f64], rng: &mut R) -> (usize, DVector<f64>) {
        let u: f64 = rng.random();
        let i = cumulative_prior
            .iter()
            .position(|&c| u < c)
            .unwrap_or(cumulative_prior.len() - 1);
        (i, self.mixtures[i].sample(rng))
    }
}

fn cumulative(prior: &[f64]) -> Vec<f64> {
    prior
        .iter()
        .scan(0.0, |acc, p| {
            *acc += p;
            Some(*acc)
        })
        .collect()
}

/// Sorted nonconformity scores `p_I(Z)` of labeled draws from the fitted
/// mixture, where `I` is the generating category.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationCurve {
    scores: Vec<f64>,
    prior: Vec<f64>,
}

impl CalibrationCurve {
    pub fn sample(
        model: &GaussianCategoryModel,
        prior: &[f64],
        space: &CategorySpace,
        samples: usize,
        seed: u64,
    ) -> Result<Self> {
        if samples < MIN_CALIBRATION_SAMPLES {
            return Err(invalid(
                "samples",
                format!("{samples} < {MIN_CALIBRATION_SAMPLES} calibration draws"),
            ));
        }
        let mut scores = labeled_scores(model, prior, space, samples, seed)?
            .into_iter()
            .map(|(_, score)| score)
            .collect::<Vec<_>>();
        scores.sort_by(f64::total_cmp);
        Ok(Self {
            scores,
            prior: prior.to_vec(),
        })
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn prior(&self) -> &[f64] {
        &self.prior
    }

    /// The largest sampled score `s` with `#{scores < s} <= delta M`.
    pub fn cost(&self, delta: f64) -> Result<f64> {
        check_delta(delta)?;
        let k = (delta * self.scores.len() as f64).floor() as usize;
        Ok(self.scores[k.min(self.scores.len() - 1)])
    }
}

fn check_delta(delta: f64) -> Result<()> {
    if delta > 0.0 && delta < 1.0 {
        Ok(())
    } else {
        Err(invalid("delta", format!("{delta} outside (0, 1)")))
    }
}

fn labeled_scores(
    model: &GaussianCategoryModel,
    prior: &[f64],
    space: &CategorySpace,
    samples: usize,
    seed: u64,
) -> Result<Vec<(usize, f64)>> {
    validate_prior(prior)?;
    if prior.len() != model.num_categories() {
        return Err(Error::DimensionMismatch {
            expected: model.num_categories(),
            got: prior.len(),
        });
    }
    let cumulative = cumulative(prior);
    let mut rng = stream_rng(seed, u64::MAX);
    (0..samples)
        .map(|_| {
            let (i, z) = model.sample_labeled(&cumulative, &mut rng);
            let p = model.posterior_over_categories(prior, z.as_slice(), space)?;
            Ok((i, p.get(i)))
        })
        .collect()
}

/// Conformal cost `c = F^-1(delta)` from `samples` labeled mixture draws.
pub fn calibrate_conformal_cost(
    model: &GaussianCategoryModel,
    prior: &[f64],
    space: &CategorySpace,
    delta: f64,
    samples: usize,
    seed: u64,
) -> Result<f64> {
    check_delta(delta)?;
    CalibrationCurve::sample(model, prior, space, samples, seed)?.cost(delta)
}

/// Fraction of fresh labeled mixture draws whose true category lies in the
/// conformal region `{i : p_i >= cost}`.
pub fn conformal_coverage(
    model: &GaussianCategoryModel,
    prior: &[f64],
    space: &CategorySpace,
    cost: f64,
    samples: usize,
    seed: u64,
) -> Result<f64> {
    if samples == 0 {
        return Err(invalid("samples", "audit needs at least one draw"));
    }
    let covered = labeled_scores(model, prior, space, samples, seed)?
        .into_iter()
        .filter(|&(_, score)| score >= cost)
        .count();
    Ok(covered as f64 / samples as f64)
}
