//! Optimal Bayes set-valued classification with partial reject options.
//!
//! The crate maps a posterior over categories and a reward function to the
//! set of categories that maximizes expected reward. It also provides a
//! Gaussian per-category model to produce posteriors, leave-one-out tuning
//! of penalty parameters and a conformal calibration routine.

pub mod classifiers;
pub mod dataset;
pub mod error;
pub mod gaussian;
pub mod probability;
pub mod rewards;
pub mod synth;
pub mod tuning;

pub use classifiers::{optimal_classifier, Classification};
pub use dataset::{LabelMap, LabeledDataset, LabeledRow};
pub use error::{Error, Result};
pub use gaussian::{GaussianCategoryModel, NormalInverseWishart, TrainingData};
pub use probability::{CategorySpace, ClassifiedSet, PosteriorVector};
pub use rewards::{BinaryReward, PenaltySequence, RewardSpec};
pub use tuning::{BGrid, CVConfig, CVReport, FitParams, LooPosteriors, Selection, WeightScheme};
