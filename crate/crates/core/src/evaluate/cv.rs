use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::metrics::roc_auc;
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::forest::{fit_forest, HyperParams};
use crate::rng::{derive_seed, derived_rng, rng_for, tag};

/// Shuffles `0..n` and deals it into `k` folds whose sizes differ by at most
/// one (the first `n % k` folds get the extra row). Each fold is sorted.
pub fn kfold_split(n: usize, k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k < 2 || n < k {
        return Err(Error::BadK { k, n });
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng_for(seed));
    let (base, extra) = (n / k, n % k);
    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for f in 0..k {
        let len = base + usize::from(f < extra);
        let mut fold = idx[start..start + len].to_vec();
        fold.sort_unstable();
        folds.push(fold);
        start += len;
    }
    Ok(folds)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Criterion {
    #[default]
    #[serde(rename = "acc")]
    Accuracy,
    #[serde(rename = "auc")]
    Auc,
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Criterion::Accuracy => "acc",
            Criterion::Auc => "auc",
        })
    }
}

impl FromStr for Criterion {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "acc" | "accuracy" => Ok(Criterion::Accuracy),
            "auc" => Ok(Criterion::Auc),
            other => Err(Error::Config(format!("unknown criterion `{other}`"))),
        }
    }
}

/// Hyperparameter ranges sampled uniformly. Integer and `mtry_fraction`
/// ranges are closed; `sample_rate` is `(lo, hi]`, or the single point when
/// `lo == hi`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    pub ntrees: (usize, usize),
    pub mtry_fraction: (f64, f64),
    pub max_depth: (usize, usize),
    pub sample_rate: (f64, f64),
    pub n_iterations: usize,
    pub k_folds: usize,
    #[serde(default)]
    pub criterion: Criterion,
}

impl Default for SearchSpace {
    fn default() -> Self {
        SearchSpace {
            ntrees: (100, 1030),
            mtry_fraction: (0.35, 0.95),
            max_depth: (2, 18),
            sample_rate: (0.5, 1.0),
            n_iterations: 5,
            k_folds: 5,
            criterion: Criterion::Accuracy,
        }
    }
}

impl SearchSpace {
    /// The space holding only `p` (with `p.max_depth` required).
    pub fn point(p: &HyperParams, k_folds: usize) -> Result<Self> {
        let depth = p
            .max_depth
            .ok_or_else(|| Error::InvalidSearchSpace("a point space needs a max depth".into()))?;
        let mtry = p
            .mtry_fraction
            .ok_or_else(|| Error::InvalidSearchSpace("a point space needs an mtry fraction".into()))?;
        Ok(SearchSpace {
            ntrees: (p.ntrees, p.ntrees),
            mtry_fraction: (mtry, mtry),
            max_depth: (depth, depth),
            sample_rate: (p.sample_rate, p.sample_rate),
            n_iterations: 1,
            k_folds,
            criterion: Criterion::Accuracy,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidSearchSpace(msg));
        let finite = |(a, b): (f64, f64)| a.is_finite() && b.is_finite();
        if self.ntrees.0 == 0 || self.ntrees.0 > self.ntrees.1 {
            return bad(format!("ntrees range {:?}", self.ntrees));
        }
        if !finite(self.mtry_fraction)
            || self.mtry_fraction.0 <= 0.0
            || self.mtry_fraction.0 > self.mtry_fraction.1
            || self.mtry_fraction.1 > 1.0
        {
            return bad(format!("mtry_fraction range {:?}", self.mtry_fraction));
        }
        if self.max_depth.0 == 0 || self.max_depth.0 > self.max_depth.1 {
            return bad(format!("max_depth range {:?}", self.max_depth));
        }
        let (lo, hi) = self.sample_rate;
        if !finite(self.sample_rate) || lo < 0.0 || lo > hi || hi <= 0.0 || hi > 1.0 {
            return bad(format!("sample_rate range {:?}", self.sample_rate));
        }
        if self.n_iterations == 0 {
            return bad("n_iterations must be at least 1".into());
        }
        if self.k_folds < 2 {
            return bad(format!("k_folds must be at least 2, got {}", self.k_folds));
        }
        Ok(())
    }

    /// Draws `n_iterations` parameter sets. Model seeds are left at 0.
    pub fn draw(&self, seed: u64) -> Vec<HyperParams> {
        let mut rng = derived_rng(seed, tag::SEARCH);
        (0..self.n_iterations)
            .map(|_| {
                let ntrees = rng.gen_range(self.ntrees.0..=self.ntrees.1);
                let mtry = rng.gen_range(self.mtry_fraction.0..=self.mtry_fraction.1);
                let depth = rng.gen_range(self.max_depth.0..=self.max_depth.1);
                let (lo, hi) = self.sample_rate;
                let rate = hi - rng.gen::<f64>() * (hi - lo);
                HyperParams {
                    ntrees,
                    mtry_fraction: Some(mtry),
                    max_depth: Some(depth),
                    sample_rate: rate,
                    ..HyperParams::default()
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DrawOutcome {
    pub params: HyperParams,
    /// Mean validation score, `None` when a fold failed.
    pub score: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    pub best: HyperParams,
    pub best_score: f64,
    pub draws: Vec<DrawOutcome>,
}

fn fold_score(train: &Dataset, valid: &Dataset, params: &HyperParams, criterion: Criterion) -> Result<f64> {
    let model = fit_forest(train, params)?;
    match criterion {
        Criterion::Accuracy => model.accuracy(valid),
        Criterion::Auc => {
            let scores: Vec<f64> = model.predict_matrix(&valid.x)?.into_iter().map(|p| p.1).collect();
            roc_auc(&valid.y, &scores)
        }
    }
}

/// Mean validation score of `params` over the given folds of `d`. Fold `f`
/// trains with model seed `derive_seed(params.seed, f)`.
pub fn cross_validate(d: &Dataset, folds: &[Vec<usize>], params: &HyperParams, criterion: Criterion) -> Result<f64> {
    let mut in_valid = vec![usize::MAX; d.n_rows()];
    for (f, fold) in folds.iter().enumerate() {
        for &r in fold {
            in_valid[r] = f;
        }
    }
    let mut total = 0.0;
    for (f, fold) in folds.iter().enumerate() {
        let train_rows: Vec<usize> = (0..d.n_rows()).filter(|&r| in_valid[r] != f).collect();
        let p = HyperParams {
            seed: derive_seed(params.seed, f as u64),
            ..params.clone()
        };
        total += fold_score(&d.select_rows(&train_rows), &d.select_rows(fold), &p, criterion)?;
    }
    Ok(total / folds.len() as f64)
}

/// Random search scored by k-fold cross-validation. All draws share the same
/// folds. A draw whose fit fails on any fold is skipped with a warning; the
/// best-scoring draw wins and ties keep the earlier draw.
pub fn random_search(space: &SearchSpace, train: &Dataset, seed: u64) -> Result<SearchResult> {
    space.validate()?;
    let counts = train.class_counts();
    if counts[0] == 0 || counts[1] == 0 {
        return Err(Error::SingleClassInput);
    }
    let folds = kfold_split(train.n_rows(), space.k_folds, derive_seed(seed, tag::FOLDS))?;
    let model_seed = derive_seed(seed, tag::MODEL);
    let mut draws = Vec::with_capacity(space.n_iterations);
    let mut best: Option<(usize, f64)> = None;
    for (i, mut params) in space.draw(seed).into_iter().enumerate() {
        params.seed = derive_seed(model_seed, i as u64);
        let score = match cross_validate(train, &folds, &params, space.criterion) {
            Ok(s) => Some(s),
            Err(e) => {
                log::warn!("search draw {i} skipped: {} ({e})", e.class());
                None
            }
        };
        if let Some(s) = score {
            if best.is_none_or(|(_, b)| s > b) {
                best = Some((i, s));
            }
        }
        draws.push(DrawOutcome { params, score });
    }
    let (i, best_score) = best.ok_or(Error::NoValidDraw)?;
    Ok(SearchResult {
        best: draws[i].params.clone(),
        best_score,
        draws,
    })
}
