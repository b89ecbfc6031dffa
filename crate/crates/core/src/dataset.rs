//! Grouping of labeled rows into categories and blocks.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::TrainingData;
use crate::probability::CategorySpace;

/// One labeled observation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledRow {
    pub label: String,
    pub block: Option<String>,
    pub features: Vec<f64>,
}

/// Category and block names in index order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelMap {
    pub labels: Vec<String>,
    /// Block name per block; empty when the data carried no blocks.
    pub blocks: Vec<String>,
    pub block_sizes: Vec<usize>,
}

impl LabelMap {
    pub fn has_blocks(&self) -> bool {
        !self.blocks.is_empty()
    }

    pub fn space(&self) -> Result<CategorySpace> {
        CategorySpace::from_block_sizes(&self.block_sizes)
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }
}

/// Training data with its label map.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub map: LabelMap,
    pub space: CategorySpace,
    pub data: TrainingData,
}

impl LabeledDataset {
    /// Categories are indexed by first appearance of their block, then by
    /// first appearance of the label, so every block is a contiguous range.
    pub fn from_rows(rows: &[LabeledRow]) -> Result<Self> {
        let first = rows
            .first()
            .ok_or_else(|| Error::InvalidPartition("dataset has no rows".into()))?;
        let dim = first.features.len();
        let with_blocks = first.block.is_some();

        let mut labels: Vec<(String, String)> = Vec::new();
        let mut blocks: Vec<String> = Vec::new();
        for (line, row) in rows.iter().enumerate() {
            if row.block.is_some() != with_blocks {
                return Err(Error::InvalidPartition(format!("row {}: block missing", line + 1)));
            }
            let block = row.block.clone().unwrap_or_default();
            match labels.iter().find(|(l, _)| *l == row.label) {
                Some((_, b)) if *b != block => {
                    return Err(Error::InvalidPartition(format!(
                        "row {}: label {:?} appears in blocks {b:?} and {block:?}",
                        line + 1,
                        row.label
                    )));
                }
                Some(_) => {}
                None => labels.push((row.label.clone(), block.clone())),
            }
            if !blocks.contains(&block) {
                blocks.push(block);
            }
        }

        let mut ordered = Vec::with_capacity(labels.len());
        let mut block_sizes = Vec::with_capacity(blocks.len());
        for block in &blocks {
            let members: Vec<&String> = labels.iter().filter(|(_, b)| b == block).map(|(l, _)| l).collect();
            block_sizes.push(members.len());
            ordered.extend(members.into_iter().cloned());
        }
        let map = LabelMap {
            labels: ordered,
            blocks: if with_blocks { blocks } else { Vec::new() },
            block_sizes,
        };

        let mut grouped = vec![Vec::new(); map.labels.len()];
        for row in rows {
            let i = map.index_of(&row.label).expect("label registered above");
            grouped[i].push(row.features.clone());
        }
        Ok(Self {
            space: map.space()?,
            data: TrainingData::new(dim, grouped)?,
            map,
        })
    }
}
