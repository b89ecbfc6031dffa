//! Synthetic labeled Gaussian data.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dataset::LabeledRow;
use crate::error::{invalid, Error, Result};
use crate::gaussian::stream_rng;

/// Gaussian source for one category.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryGenerator {
    pub label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub block: Option<String>,
    pub count: usize,
    pub mean: Vec<f64>,
    pub cov: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    /// Feature column names; `x1, x2, ...` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub features: Option<Vec<String>>,
    pub categories: Vec<CategoryGenerator>,
}

impl GeneratorConfig {
    pub fn dim(&self) -> usize {
        self.categories.first().map_or(0, |c| c.mean.len())
    }

    pub fn feature_names(&self) -> Vec<String> {
        match &self.features {
            Some(names) => names.clone(),
            None => (1..=self.dim()).map(|j| format!("x{j}")).collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.dim();
        if d == 0 {
            return Err(invalid("categories", "need at least one category with features"));
        }
        if let Some(names) = &self.features {
            if names.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: names.len(),
                });
            }
        }
        let with_blocks = self.categories[0].block.is_some();
        for c in &self.categories {
            if c.mean.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: c.mean.len(),
                });
            }
            if c.block.is_some() != with_blocks {
                return Err(Error::InvalidPartition(format!(
                    "category {:?}: blocks must be given for all categories or none",
                    c.label
                )));
            }
            covariance_root(c, d)?;
        }
        Ok(())
    }
}

fn covariance_root(c: &CategoryGenerator, d: usize) -> Result<DMatrix<f64>> {
    if c.cov.len() != d || c.cov.iter().any(|row| row.len() != d) {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: c.cov.len(),
        });
    }
    let cov = DMatrix::from_fn(d, d, |r, k| c.cov[r][k]);
    if (&cov - cov.transpose()).amax() > 1e-12 * cov.amax().max(1.0) {
        return Err(Error::SingularScatter(format!(
            "covariance of {:?} is not symmetric",
            c.label
        )));
    }
    cov.cholesky()
        .map(|chol| chol.l())
        .ok_or_else(|| Error::SingularScatter(format!("covariance of {:?}", c.label)))
}

/// Draws `count` rows per category. Category `i` uses stream `i` of `seed`;
/// categories with zero count are skipped with a warning.
pub fn generate(config: &GeneratorConfig, seed: u64) -> Result<Vec<LabeledRow>> {
    config.validate()?;
    let d = config.dim();
    let mut rows = Vec::new();
    for (i, c) in config.categories.iter().enumerate() {
        if c.count == 0 {
            log::warn!("category {:?} has count 0 and is omitted", c.label);
            continue;
        }
        let root = covariance_root(c, d)?;
        let mean = DVector::from_column_slice(&c.mean);
        let mut rng = stream_rng(seed, i as u64);
        for _ in 0..c.count {
            let noise = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
            let z = &mean + &root * noise;
            rows.push(LabeledRow {
                label: c.label.clone(),
                block: c.block.clone(),
                features: z.iter().copied().collect(),
            });
        }
    }
    Ok(rows)
}

fn correlated(sd: [f64; 3], rho: f64) -> Vec<Vec<f64>> {
    (0..3)
        .map(|r| {
            (0..3)
                .map(|k| if r == k { sd[r] * sd[r] } else { rho * sd[r] * sd[k] })
                .collect()
        })
        .collect()
}

/// Four overlapping three-feature categories with counts 409, 41, 18 and
/// 414: two common categories sharing a block and two rare categories in
/// blocks of their own.
pub fn table1_preset() -> GeneratorConfig {
    let spec = [
        ("sp1", "common", 409, [66.0, 11.0, 8.0], [2.0, 0.5, 0.4]),
        ("sp2", "rare_breeder", 41, [62.0, 10.0, 7.2], [2.2, 0.5, 0.4]),
        ("sp3", "rare_vagrant", 18, [58.5, 9.5, 6.8], [2.0, 0.45, 0.35]),
        ("sp4", "common", 414, [68.0, 10.2, 7.6], [2.1, 0.5, 0.4]),
    ];
    GeneratorConfig {
        features: Some(vec!["wing".into(), "tail".into(), "bill".into()]),
        categories: spec
            .into_iter()
            .map(|(label, block, count, mean, sd)| CategoryGenerator {
                label: label.into(),
                block: Some(block.into()),
                count,
                mean: mean.to_vec(),
                cov: correlated(sd, 0.3),
            })
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::LabeledDataset;

    #[test]
    fn preset_shape() {
        let rows = generate(&table1_preset(), 1).unwrap();
        assert_eq!(rows.len(), 882);
        let ds = LabeledDataset::from_rows(&rows).unwrap();
        assert_eq!(ds.map.labels, vec!["sp1", "sp4", "sp2", "sp3"]);
        assert_eq!(ds.data.counts(), vec![409, 414, 41, 18]);
        assert_eq!(ds.space.block_sizes(), &[2, 1, 1]);
    }

    #[test]
    fn deterministic_per_seed() {
        let config = table1_preset();
        assert_eq!(generate(&config, 9).unwrap(), generate(&config, 9).unwrap());
        assert_ne!(generate(&config, 9).unwrap(), generate(&config, 10).unwrap());
    }

    #[test]
    fn zero_count_category_is_dropped() {
        let mut config = table1_preset();
        config.categories[1].count = 0;
        let rows = generate(&config, 1).unwrap();
        assert_eq!(rows.len(), 882 - 41);
        assert!(rows.iter().all(|r| r.label != "sp2"));
    }

    #[test]
    fn non_positive_definite_covariance_rejected() {
        let mut config = table1_preset();
        config.categories[0].cov = vec![vec![1.0, 2.0, 0.0], vec![2.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]];
        assert!(matches!(generate(&config, 1), Err(Error::SingularScatter(_))));
    }
}
