//! Classification of insider-trading transactions as lawful or unlawful with
//! a from-scratch PCA + random forest pipeline, plus impurity- and
//! permutation-based feature importance.
//!
//! Stages, bottom up:
//!
//! * [`form4`]: ownership-filing XML parsing and fuzzy-name labeling
//! * [`dataset`]: feature tables, normalization, balancing, splitting,
//!   synthetic data
//! * [`linalg`] and [`pca`]: covariance, Jacobi eigensolver, projections
//! * [`forest`]: Gini CART trees, bagging, OOB error, MDI
//! * [`evaluate`]: confusion metrics, AUC, k-fold search, repeated experiments
//! * [`importance`]: permutation importance and Spearman/Ward decorrelation

pub mod dataset;
pub mod error;
pub mod evaluate;
pub mod forest;
pub mod form4;
pub mod importance;
pub mod linalg;
pub mod pca;
pub mod rng;

pub use dataset::{Dataset, FeatureSchema, Label};
pub use error::{Error, Result};
pub use forest::{fit_forest, HyperParams, RandomForestModel};
pub use linalg::Matrix;
pub use pca::{fit_pca, PcaModel};
