//! Bagged random forest over [`tree`] CART learners.
//!
//! Each tree gets its own ChaCha stream derived from `(seed, tree index)`, so
//! the fitted model is identical for any degree of parallelism.

pub mod tree;

pub use tree::{best_split, grow_tree_in, TreeWorkspace, gini_impurity, DecisionTree, Node, NodeKind, Split, TreeParams};

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, Label};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::rng::{derive_seed, derived_rng, tag};
use tree::PresortedData;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    pub ntrees: usize,
    /// Fraction of features tried at each node; `None` means `sqrt(m) / m`.
    #[serde(default)]
    pub mtry_fraction: Option<f64>,
    /// `None` grows trees until leaves are pure.
    #[serde(default)]
    pub max_depth: Option<usize>,
    /// Bootstrap size as a fraction of the training rows.
    pub sample_rate: f64,
    #[serde(default = "default_min_samples_split")]
    pub min_samples_split: usize,
    #[serde(default)]
    pub seed: u64,
    /// Label returned on an exact 50/50 vote.
    #[serde(default = "default_tie_break")]
    pub tie_break: Label,
}

fn default_min_samples_split() -> usize {
    2
}

fn default_tie_break() -> Label {
    Label::Unlawful
}

impl Default for HyperParams {
    fn default() -> Self {
        HyperParams {
            ntrees: 100,
            mtry_fraction: None,
            max_depth: None,
            sample_rate: 1.0,
            min_samples_split: 2,
            seed: 0,
            tie_break: Label::Unlawful,
        }
    }
}

impl HyperParams {
    pub fn validate(&self) -> Result<()> {
        if self.ntrees == 0 {
            return Err(Error::InvalidParams("ntrees must be >= 1".into()));
        }
        if let Some(f) = self.mtry_fraction {
            if !(f > 0.0 && f <= 1.0) {
                return Err(Error::InvalidParams(format!("mtry fraction {f} outside (0, 1]")));
            }
        }
        if self.max_depth == Some(0) {
            return Err(Error::InvalidParams("max_depth must be >= 1".into()));
        }
        if !(self.sample_rate > 0.0 && self.sample_rate <= 1.0) {
            return Err(Error::InvalidParams(format!(
                "sample rate {} outside (0, 1]",
                self.sample_rate
            )));
        }
        if self.min_samples_split < 2 {
            return Err(Error::InvalidParams("min_samples_split must be >= 2".into()));
        }
        Ok(())
    }

    /// Number of candidate features per node for `m` features, in `1..=m`.
    pub fn resolve_mtry(&self, m: usize) -> usize {
        let raw = match self.mtry_fraction {
            Some(f) => f * m as f64,
            None => (m as f64).sqrt(),
        };
        (raw.round() as usize).clamp(1, m.max(1))
    }

    /// The fraction actually in effect for `m` features.
    pub fn effective_mtry_fraction(&self, m: usize) -> f64 {
        self.mtry_fraction
            .unwrap_or_else(|| (m as f64).sqrt() / m as f64)
    }

    pub fn bootstrap_size(&self, n: usize) -> usize {
        ((self.sample_rate * n as f64).ceil() as usize).max(1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomForestModel {
    pub params: HyperParams,
    pub feature_count: usize,
    pub n_train_rows: usize,
    pub trees: Vec<DecisionTree>,
    /// Training rows left out of each tree's bootstrap, ascending.
    pub oob_indices: Vec<Vec<u32>>,
}

pub fn fit_forest(d: &Dataset, params: &HyperParams) -> Result<RandomForestModel> {
    params.validate()?;
    let n = d.n_rows();
    if n < 2 {
        return Err(Error::TooFewRows { needed: 2, got: n });
    }
    let counts = d.class_counts();
    if counts[0] == 0 || counts[1] == 0 {
        return Err(Error::SingleClassInput);
    }
    let m = d.n_features();
    if m == 0 {
        return Err(Error::DimensionMismatch {
            expected: 1,
            found: 0,
        });
    }
    let data = PresortedData::new(&d.x, &d.y);
    let tree_params = TreeParams {
        mtry: params.resolve_mtry(m),
        max_depth: params.max_depth,
        min_samples_split: params.min_samples_split,
    };
    let n_boot = params.bootstrap_size(n);
    let stream_seed = derive_seed(params.seed, tag::BOOTSTRAP);

    let grown: Vec<(DecisionTree, Vec<u32>)> = (0..params.ntrees)
        .into_par_iter()
        .map_init(TreeWorkspace::default, |ws, t| {
            let mut rng = derived_rng(stream_seed, t as u64);
            let mut weights = vec![0u32; n];
            for _ in 0..n_boot {
                weights[rng.gen_range(0..n)] += 1;
            }
            let oob = (0..n as u32).filter(|&r| weights[r as usize] == 0).collect();
            (grow_tree_in(&data, &weights, &tree_params, rng.gen(), ws), oob)
        })
        .collect();
    let (trees, oob_indices) = grown.into_iter().unzip();
    Ok(RandomForestModel {
        params: params.clone(),
        feature_count: m,
        n_train_rows: n,
        trees,
        oob_indices,
    })
}

/// Majority label for `unlawful` out of `total` votes.
pub(crate) fn vote_label(unlawful: usize, total: usize, tie: Label) -> Label {
    match (2 * unlawful).cmp(&total) {
        std::cmp::Ordering::Greater => Label::Unlawful,
        std::cmp::Ordering::Less => Label::Lawful,
        std::cmp::Ordering::Equal => tie,
    }
}

impl RandomForestModel {
    /// Majority label and the fraction of trees voting unlawful.
    pub fn predict(&self, row: &[f64]) -> Result<(Label, f64)> {
        if row.len() != self.feature_count {
            return Err(Error::DimensionMismatch {
                expected: self.feature_count,
                found: row.len(),
            });
        }
        Ok(self.predict_unchecked(row))
    }

    fn predict_unchecked(&self, row: &[f64]) -> (Label, f64) {
        let tie = self.params.tie_break;
        let unlawful = self
            .trees
            .iter()
            .filter(|t| t.predict(row, tie) == Label::Unlawful)
            .count();
        (
            vote_label(unlawful, self.trees.len(), tie),
            unlawful as f64 / self.trees.len() as f64,
        )
    }

    pub fn predict_matrix(&self, x: &Matrix) -> Result<Vec<(Label, f64)>> {
        if x.cols() != self.feature_count {
            return Err(Error::DimensionMismatch {
                expected: self.feature_count,
                found: x.cols(),
            });
        }
        Ok(x.iter_rows().map(|r| self.predict_unchecked(r)).collect())
    }

    pub fn accuracy(&self, d: &Dataset) -> Result<f64> {
        let preds = self.predict_matrix(&d.x)?;
        let correct = preds.iter().zip(&d.y).filter(|(p, y)| p.0 == **y).count();
        Ok(correct as f64 / d.n_rows().max(1) as f64)
    }

    /// Out-of-bag misclassification rate on the training set `d`.
    pub fn oob_error(&self, d: &Dataset) -> Result<f64> {
        if d.n_rows() != self.n_train_rows {
            return Err(Error::DimensionMismatch {
                expected: self.n_train_rows,
                found: d.n_rows(),
            });
        }
        if d.n_features() != self.feature_count {
            return Err(Error::DimensionMismatch {
                expected: self.feature_count,
                found: d.n_features(),
            });
        }
        let tie = self.params.tie_break;
        let mut votes = vec![[0usize; 2]; d.n_rows()];
        for (tree, oob) in self.trees.iter().zip(&self.oob_indices) {
            for &r in oob {
                let r = r as usize;
                votes[r][tree.predict(d.x.row(r), tie).index()] += 1;
            }
        }
        let mut counted = 0;
        let mut wrong = 0;
        for (v, y) in votes.iter().zip(&d.y) {
            let total = v[0] + v[1];
            if total == 0 {
                continue;
            }
            counted += 1;
            if vote_label(v[1], total, tie) != *y {
                wrong += 1;
            }
        }
        if counted == 0 {
            return Err(Error::NoOobRows);
        }
        Ok(wrong as f64 / counted as f64)
    }

    /// Mean decrease in impurity per feature, normalized to sum to 1 (all
    /// zeros when no tree split at all).
    pub fn mdi_importance(&self) -> Vec<f64> {
        let mut acc = vec![0.0; self.feature_count];
        for t in &self.trees {
            t.accumulate_mdi(&mut acc);
        }
        let total: f64 = acc.iter().sum();
        if total > 0.0 {
            acc.iter_mut().for_each(|v| *v /= total);
        }
        acc
    }

    /// Features used by at least one split.
    pub fn used_features(&self) -> Vec<bool> {
        let mut used = vec![false; self.feature_count];
        for t in &self.trees {
            for f in t.split_features() {
                used[f] = true;
            }
        }
        used
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let mut de = serde_json::Deserializer::from_str(s);
        de.disable_recursion_limit();
        Ok(RandomForestModel::deserialize(&mut de)?)
    }
}
