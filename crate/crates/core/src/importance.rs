//! Feature importance: mean decrease in impurity, permutation importance and
//! its decorrelated variant built on Spearman/Ward feature clustering.

use std::io::Write;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, Label};
use crate::error::{Error, Result};
use crate::forest::{fit_forest, vote_label, HyperParams, RandomForestModel};
use crate::linalg::{spearman_correlation, Matrix, SymmetricMatrix};
use crate::rng::{derive_seed, derived_rng, tag};

pub const DEFAULT_N_REPEATS: usize = 10;
pub const DEFAULT_CLUSTER_THRESHOLD: f64 = 1.0;

pub const IMPORTANCE_CSV_HEADER: [&str; 6] = ["rank", "feature", "method", "split", "mean_importance", "std"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImportanceMethod {
    Mdi,
    Permutation,
    PermutationDecorrelated,
}

impl ImportanceMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            ImportanceMethod::Mdi => "mdi",
            ImportanceMethod::Permutation => "permutation",
            ImportanceMethod::PermutationDecorrelated => "permutation_decorrelated",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvaluatedOn {
    Train,
    Test,
}

impl EvaluatedOn {
    pub fn as_str(self) -> &'static str {
        match self {
            EvaluatedOn::Train => "train",
            EvaluatedOn::Test => "test",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceReport {
    pub feature_names: Vec<String>,
    pub scores: Vec<f64>,
    /// Standard deviation over repeats (zero for MDI).
    pub score_std: Vec<f64>,
    pub method: ImportanceMethod,
    pub evaluated_on: EvaluatedOn,
}

impl ImportanceReport {
    /// Feature indices by descending score, ties by index.
    pub fn ranking(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.scores.len()).collect();
        order.sort_by(|&a, &b| self.scores[b].total_cmp(&self.scores[a]).then(a.cmp(&b)));
        order
    }

    pub fn score_of(&self, name: &str) -> Option<f64> {
        self.feature_names.iter().position(|n| n == name).map(|i| self.scores[i])
    }
}

pub fn mdi_report(model: &RandomForestModel, feature_names: &[String]) -> Result<ImportanceReport> {
    if feature_names.len() != model.feature_count {
        return Err(Error::DimensionMismatch {
            expected: model.feature_count,
            found: feature_names.len(),
        });
    }
    Ok(ImportanceReport {
        feature_names: feature_names.to_vec(),
        scores: model.mdi_importance(),
        score_std: vec![0.0; model.feature_count],
        method: ImportanceMethod::Mdi,
        evaluated_on: EvaluatedOn::Train,
    })
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = if values.len() > 1 {
        values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var.sqrt())
}

/// Accuracy drop when one column is shuffled, model held fixed.
///
/// Repeat `r` of feature `j` shuffles with its own stream derived from
/// `(seed, j, r)`, so results do not depend on evaluation order. Only trees
/// that split on `j` are re-evaluated; the others keep their baseline votes.
pub fn permutation_importance(
    model: &RandomForestModel,
    d: &Dataset,
    evaluated_on: EvaluatedOn,
    n_repeats: usize,
    seed: u64,
) -> Result<ImportanceReport> {
    if d.n_features() != model.feature_count {
        return Err(Error::DimensionMismatch {
            expected: model.feature_count,
            found: d.n_features(),
        });
    }
    if n_repeats == 0 {
        return Err(Error::InvalidParams("n_repeats must be at least 1".into()));
    }
    if d.n_rows() == 0 {
        return Err(Error::EmptyInput);
    }
    let n = d.n_rows();
    let tie = model.params.tie_break;
    // per-tree unlawful votes at baseline
    let tree_votes: Vec<Vec<bool>> = model
        .trees
        .par_iter()
        .map(|t| d.x.iter_rows().map(|r| t.predict(r, tie) == Label::Unlawful).collect())
        .collect();
    let mut base_votes = vec![0usize; n];
    for votes in &tree_votes {
        for (acc, &v) in base_votes.iter_mut().zip(votes) {
            *acc += usize::from(v);
        }
    }
    let ntrees = model.trees.len();
    let accuracy = |votes: &[usize]| {
        let correct = votes
            .iter()
            .zip(&d.y)
            .filter(|(&v, &y)| vote_label(v, ntrees, tie) == y)
            .count();
        correct as f64 / n as f64
    };
    let baseline = accuracy(&base_votes);
    let perm_seed = derive_seed(seed, tag::PERMUTE);

    let per_feature: Vec<(f64, f64)> = (0..model.feature_count)
        .into_par_iter()
        .map(|j| {
            let users: Vec<usize> = (0..ntrees)
                .filter(|&t| model.trees[t].split_features().any(|f| f == j))
                .collect();
            if users.is_empty() {
                return (0.0, 0.0);
            }
            let column = d.x.column(j);
            let mut row = vec![0.0; d.n_features()];
            let drops: Vec<f64> = (0..n_repeats)
                .map(|r| {
                    let mut perm: Vec<usize> = (0..n).collect();
                    perm.shuffle(&mut derived_rng(derive_seed(perm_seed, j as u64), r as u64));
                    let mut votes = base_votes.clone();
                    for (i, v) in votes.iter_mut().enumerate() {
                        row.copy_from_slice(d.x.row(i));
                        row[j] = column[perm[i]];
                        for &t in &users {
                            let now = model.trees[t].predict(&row, tie) == Label::Unlawful;
                            *v = *v + usize::from(now) - usize::from(tree_votes[t][i]);
                        }
                    }
                    baseline - accuracy(&votes)
                })
                .collect();
            mean_std(&drops)
        })
        .collect();

    Ok(ImportanceReport {
        feature_names: d.schema.names(),
        scores: per_feature.iter().map(|p| p.0).collect(),
        score_std: per_feature.iter().map(|p| p.1).collect(),
        method: ImportanceMethod::Permutation,
        evaluated_on,
    })
}

/// How correlations become clustering distances.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Distance {
    /// `1 - |rho|`: strong negative correlation also clusters.
    #[default]
    Absolute,
    /// `1 - rho`.
    Signed,
}

/// One agglomeration step. Leaves are `0..n`; the cluster created by merge
/// `i` has id `n + i`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Merge {
    pub a: usize,
    pub b: usize,
    pub height: f64,
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dendrogram {
    pub leaf_count: usize,
    pub merges: Vec<Merge>,
}

/// Ward linkage over a distance matrix, using the Lance-Williams update on
/// squared distances. The closest pair merges first; ties go to the pair
/// found first in row-major order over active clusters.
pub fn ward_linkage(dist: &Matrix) -> Result<Dendrogram> {
    let n = dist.rows();
    if dist.cols() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: dist.cols(),
        });
    }
    let mut d2 = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            d2[(i, j)] = dist[(i, j)] * dist[(i, j)];
        }
    }
    let mut active: Vec<usize> = (0..n).collect();
    let mut id: Vec<usize> = (0..n).collect();
    let mut size = vec![1usize; n];
    let mut merges = Vec::with_capacity(n.saturating_sub(1));
    let mut last = 0.0f64;
    while active.len() > 1 {
        let (mut bi, mut bj, mut best) = (0, 1, f64::INFINITY);
        for x in 0..active.len() {
            for y in (x + 1)..active.len() {
                let v = d2[(active[x], active[y])];
                if v < best {
                    (bi, bj, best) = (x, y, v);
                }
            }
        }
        let (p, q) = (active[bi], active[bj]);
        let (np, nq) = (size[p] as f64, size[q] as f64);
        for &r in &active {
            if r == p || r == q {
                continue;
            }
            let nr = size[r] as f64;
            let v = ((nr + np) * d2[(p, r)] + (nr + nq) * d2[(q, r)] - nr * best) / (np + nq + nr);
            d2[(p, r)] = v.max(0.0);
            d2[(r, p)] = v.max(0.0);
        }
        // rounding can dip below the previous height; heights stay monotone
        let height = best.max(0.0).sqrt().max(last);
        last = height;
        let (a, b) = (id[p].min(id[q]), id[p].max(id[q]));
        size[p] += size[q];
        merges.push(Merge {
            a,
            b,
            height,
            size: size[p],
        });
        id[p] = n + merges.len() - 1;
        active.remove(bj);
    }
    Ok(Dendrogram { leaf_count: n, merges })
}

fn check_correlation(corr: &SymmetricMatrix) -> Result<()> {
    let n = corr.dim();
    for i in 0..n {
        if (corr.get(i, i) - 1.0).abs() > 1e-9 {
            return Err(Error::BadCorrelationMatrix(format!("diagonal entry {i} is {}", corr.get(i, i))));
        }
        for j in 0..n {
            if corr.get(i, j).abs() > 1.0 + 1e-9 {
                return Err(Error::BadCorrelationMatrix(format!(
                    "entry ({i}, {j}) is {}",
                    corr.get(i, j)
                )));
            }
        }
    }
    Ok(())
}

pub fn correlation_distance(corr: &SymmetricMatrix, distance: Distance) -> Result<Matrix> {
    check_correlation(corr)?;
    let n = corr.dim();
    let mut d = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            if i != j {
                let rho = corr.get(i, j).clamp(-1.0, 1.0);
                d[(i, j)] = match distance {
                    Distance::Absolute => 1.0 - rho.abs(),
                    Distance::Signed => 1.0 - rho,
                };
            }
        }
    }
    Ok(d)
}

pub fn ward_cluster(corr: &SymmetricMatrix) -> Result<Dendrogram> {
    ward_cluster_with(corr, Distance::Absolute)
}

pub fn ward_cluster_with(corr: &SymmetricMatrix, distance: Distance) -> Result<Dendrogram> {
    ward_linkage(&correlation_distance(corr, distance)?)
}

impl Dendrogram {
    pub fn heights(&self) -> Vec<f64> {
        self.merges.iter().map(|m| m.height).collect()
    }

    /// Clusters formed by the merges strictly below `threshold`, each sorted,
    /// ordered by smallest member.
    pub fn cut(&self, threshold: f64) -> Vec<Vec<usize>> {
        let n = self.leaf_count;
        let mut members: Vec<Option<Vec<usize>>> = (0..n).map(|i| Some(vec![i])).collect();
        for m in &self.merges {
            if m.height < threshold {
                let mut merged = members[m.a].take().unwrap_or_default();
                merged.extend(members[m.b].take().unwrap_or_default());
                members.push(Some(merged));
            } else {
                members.push(None);
            }
        }
        let mut clusters: Vec<Vec<usize>> = members.into_iter().flatten().collect();
        for c in &mut clusters {
            c.sort_unstable();
        }
        clusters.sort_by_key(|c| c[0]);
        clusters
    }

    /// A threshold in the middle of the widest gap between consecutive merge
    /// heights (the gap above height 0 counts too).
    pub fn largest_gap_threshold(&self) -> f64 {
        let mut h = vec![0.0];
        h.extend(self.heights());
        let i = (1..h.len())
            .max_by(|&a, &b| (h[a] - h[a - 1]).total_cmp(&(h[b] - h[b - 1])).then(b.cmp(&a)))
            .unwrap_or(0);
        if i == 0 {
            return 0.0;
        }
        (h[i] + h[i - 1]) / 2.0
    }
}

/// One medoid per cluster of the cut at `threshold`: the member with the
/// largest mean `|rho|` to the rest of its cluster, ties to the lowest index.
/// Sorted ascending.
pub fn cluster_representatives(dend: &Dendrogram, corr: &SymmetricMatrix, threshold: f64) -> Vec<usize> {
    let mut reps: Vec<usize> = dend
        .cut(threshold)
        .iter()
        .map(|cluster| {
            let mut best = (cluster[0], f64::NEG_INFINITY);
            for &i in cluster {
                let s: f64 = cluster.iter().filter(|&&j| j != i).map(|&j| corr.get(i, j).abs()).sum();
                if s > best.1 {
                    best = (i, s);
                }
            }
            best.0
        })
        .collect();
    reps.sort_unstable();
    reps
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecorrelatedImportance {
    pub dendrogram: Dendrogram,
    pub clusters: Vec<Vec<usize>>,
    pub representatives: Vec<usize>,
    pub report: ImportanceReport,
}

/// Clusters features by Spearman correlation on `train`, keeps one
/// representative per cluster, refits a forest on those columns and permutes
/// them on `test`.
pub fn decorrelated_permutation_importance(
    train: &Dataset,
    test: &Dataset,
    params: &HyperParams,
    threshold: f64,
    distance: Distance,
    n_repeats: usize,
    seed: u64,
) -> Result<DecorrelatedImportance> {
    if train.schema.names() != test.schema.names() {
        return Err(Error::DimensionMismatch {
            expected: train.n_features(),
            found: test.n_features(),
        });
    }
    if !(threshold >= 0.0) {
        return Err(Error::InvalidParams(format!("cluster threshold {threshold} must be >= 0")));
    }
    let corr = spearman_correlation(&train.x)?;
    let dendrogram = ward_cluster_with(&corr, distance)?;
    let clusters = dendrogram.cut(threshold);
    let representatives = cluster_representatives(&dendrogram, &corr, threshold);
    let model = fit_forest(&train.select_columns(&representatives), params)?;
    let mut report = permutation_importance(
        &model,
        &test.select_columns(&representatives),
        EvaluatedOn::Test,
        n_repeats,
        seed,
    )?;
    report.method = ImportanceMethod::PermutationDecorrelated;
    Ok(DecorrelatedImportance {
        dendrogram,
        clusters,
        representatives,
        report,
    })
}

pub fn write_importance_csv<W: Write>(writer: W, reports: &[&ImportanceReport]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(IMPORTANCE_CSV_HEADER)?;
    for report in reports {
        for (rank, &i) in report.ranking().iter().enumerate() {
            w.write_record([
                (rank + 1).to_string(),
                report.feature_names[i].clone(),
                report.method.as_str().to_string(),
                report.evaluated_on.as_str().to_string(),
                report.scores[i].to_string(),
                report.score_std[i].to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}
