//! Feature tables: schema, labels, z-score normalization, categorical
//! encoding, class-balanced sampling and stratified splitting.

mod catalog;
mod io;
mod panel;
mod synthetic;

pub use catalog::{feature_catalog, schema_for_names, FeatureSet};
pub use io::{read_dataset_csv, read_schema_json, write_dataset_csv, write_schema_json};
pub use panel::{fill_missing, FilledRecord, Quarter, QuarterRecord};
pub use synthetic::{generate_synthetic, SyntheticLayout, SyntheticSpec};

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::rng::rng_for;

/// Binary transaction label. `Lawful` is the positive class in confusion
/// matrices; `Unlawful` is the class scored by vote fractions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Lawful,
    Unlawful,
}

impl Label {
    /// Class index used inside trees: 0 = lawful, 1 = unlawful.
    #[inline]
    pub fn index(self) -> usize {
        match self {
            Label::Lawful => 0,
            Label::Unlawful => 1,
        }
    }

    #[inline]
    pub fn from_index(i: usize) -> Label {
        if i == 0 {
            Label::Lawful
        } else {
            Label::Unlawful
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Lawful => "lawful",
            Label::Unlawful => "unlawful",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = Error;
    fn from_str(s: &str) -> Result<Label> {
        match s.trim().to_ascii_lowercase().as_str() {
            "lawful" => Ok(Label::Lawful),
            "unlawful" => Ok(Label::Unlawful),
            other => Err(Error::UnknownCategory(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    Numeric,
    Categorical(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub name: String,
    pub kind: FeatureKind,
    pub group: String,
    /// Human-readable label, when it differs from `name`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    /// Member of the 25-feature comparison subset.
    #[serde(default)]
    pub dcz25: bool,
}

impl FeatureSpec {
    pub fn numeric(name: impl Into<String>, group: impl Into<String>) -> Self {
        FeatureSpec {
            name: name.into(),
            kind: FeatureKind::Numeric,
            group: group.into(),
            label: None,
            dcz25: false,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FeatureSchema {
    features: Vec<FeatureSpec>,
}

impl FeatureSchema {
    pub fn new(features: Vec<FeatureSpec>) -> Result<Self> {
        let mut seen = std::collections::HashSet::new();
        for f in &features {
            if !seen.insert(f.name.as_str()) {
                return Err(Error::Config(format!("duplicate feature name `{}`", f.name)));
            }
        }
        Ok(FeatureSchema { features })
    }

    /// All-numeric schema with the given names.
    pub fn numeric<S: AsRef<str>>(names: &[S]) -> Result<Self> {
        Self::new(
            names
                .iter()
                .map(|n| FeatureSpec::numeric(n.as_ref(), ""))
                .collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn features(&self) -> &[FeatureSpec] {
        &self.features
    }

    pub fn names(&self) -> Vec<String> {
        self.features.iter().map(|f| f.name.clone()).collect()
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.features.iter().position(|f| f.name == name)
    }

    pub fn select(&self, columns: &[usize]) -> FeatureSchema {
        FeatureSchema {
            features: columns.iter().map(|&j| self.features[j].clone()).collect(),
        }
    }
}

/// Feature matrix plus labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: Matrix,
    pub y: Vec<Label>,
    pub schema: FeatureSchema,
    pub normalized: bool,
}

impl Dataset {
    pub fn new(x: Matrix, y: Vec<Label>, schema: FeatureSchema) -> Result<Self> {
        if x.rows() != y.len() {
            return Err(Error::LengthMismatch {
                left: x.rows(),
                right: y.len(),
            });
        }
        if x.cols() != schema.len() {
            return Err(Error::DimensionMismatch {
                expected: schema.len(),
                found: x.cols(),
            });
        }
        if let Some((row, col)) = x.first_non_finite() {
            return Err(Error::NonFiniteInput { row, col });
        }
        Ok(Dataset {
            x,
            y,
            schema,
            normalized: false,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.y.len()
    }

    pub fn n_features(&self) -> usize {
        self.x.cols()
    }

    pub fn class_counts(&self) -> [usize; 2] {
        let mut c = [0; 2];
        for l in &self.y {
            c[l.index()] += 1;
        }
        c
    }

    pub fn select_rows(&self, rows: &[usize]) -> Dataset {
        Dataset {
            x: self.x.select_rows(rows),
            y: rows.iter().map(|&i| self.y[i]).collect(),
            schema: self.schema.clone(),
            normalized: self.normalized,
        }
    }

    pub fn select_columns(&self, columns: &[usize]) -> Dataset {
        Dataset {
            x: self.x.select_columns(columns),
            y: self.y.clone(),
            schema: self.schema.select(columns),
            normalized: self.normalized,
        }
    }

    /// Row indices holding each label.
    pub fn indices_of(&self, label: Label) -> Vec<usize> {
        (0..self.n_rows()).filter(|&i| self.y[i] == label).collect()
    }

    /// Concatenates rows of two datasets with identical schemas.
    pub fn concat(&self, other: &Dataset) -> Result<Dataset> {
        if self.schema != other.schema {
            return Err(Error::Config("cannot concatenate datasets with different schemas".into()));
        }
        let mut data = self.x.as_slice().to_vec();
        data.extend_from_slice(other.x.as_slice());
        let mut y = self.y.clone();
        y.extend_from_slice(&other.y);
        Ok(Dataset {
            x: Matrix::from_vec(y.len(), self.n_features(), data)?,
            y,
            schema: self.schema.clone(),
            normalized: self.normalized && other.normalized,
        })
    }

    /// Z-score parameters over numeric columns. Categorical columns get the
    /// identity transform (mean 0, std 1).
    pub fn fit_normalization(&self) -> NormalizationParams {
        let (_, mut params) = zscore_fit(&self.x);
        for (j, f) in self.schema.features().iter().enumerate() {
            if matches!(f.kind, FeatureKind::Categorical(_)) {
                params.means[j] = 0.0;
                params.stds[j] = 1.0;
            }
        }
        params
    }

    pub fn normalized_with(&self, params: &NormalizationParams) -> Result<Dataset> {
        Ok(Dataset {
            x: params.apply(&self.x)?,
            y: self.y.clone(),
            schema: self.schema.clone(),
            normalized: true,
        })
    }
}

/// Per-column population mean and standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizationParams {
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
}

impl NormalizationParams {
    /// `(x - mean) / std`; zero-std columns are only centered.
    pub fn apply(&self, x: &Matrix) -> Result<Matrix> {
        if x.cols() != self.means.len() {
            return Err(Error::DimensionMismatch {
                expected: self.means.len(),
                found: x.cols(),
            });
        }
        if let Some((row, col)) = x.first_non_finite() {
            return Err(Error::NonFiniteInput { row, col });
        }
        let mut out = x.clone();
        for i in 0..out.rows() {
            for ((v, m), s) in out.row_mut(i).iter_mut().zip(&self.means).zip(&self.stds) {
                *v -= m;
                if *s > 0.0 {
                    *v /= s;
                }
            }
        }
        Ok(out)
    }
}

fn zscore_fit(x: &Matrix) -> (Vec<f64>, NormalizationParams) {
    let means = x.column_means();
    let n = x.rows().max(1) as f64;
    let mut var = vec![0.0; x.cols()];
    for row in x.iter_rows() {
        for ((v, a), m) in var.iter_mut().zip(row).zip(&means) {
            let d = a - m;
            *v += d * d;
        }
    }
    let stds: Vec<f64> = var.iter().map(|v| (v / n).sqrt()).collect();
    (means.clone(), NormalizationParams { means, stds })
}

/// Z-score every column with population statistics.
pub fn zscore_normalize(x: &Matrix) -> Result<(Matrix, NormalizationParams)> {
    if let Some((row, col)) = x.first_non_finite() {
        return Err(Error::NonFiniteInput { row, col });
    }
    let (_, params) = zscore_fit(x);
    let out = params.apply(x)?;
    Ok((out, params))
}

/// Indicator encoding against a fixed category list. Two-category columns
/// become a single 0/1 column marking `categories[0]`.
pub fn one_hot_encode<S: AsRef<str>>(values: &[S], categories: &[&str]) -> Result<Matrix> {
    let k = categories.len();
    if k < 2 {
        return Err(Error::Config("categorical feature needs at least two categories".into()));
    }
    let width = if k == 2 { 1 } else { k };
    let mut out = Matrix::zeros(values.len(), width);
    for (i, v) in values.iter().enumerate() {
        let v = v.as_ref();
        let c = categories
            .iter()
            .position(|c| *c == v)
            .ok_or_else(|| Error::UnknownCategory(v.to_string()))?;
        if k == 2 {
            out[(i, 0)] = if c == 0 { 1.0 } else { 0.0 };
        } else {
            out[(i, c)] = 1.0;
        }
    }
    Ok(out)
}

/// Chooses `n_total / 2` unlawful and `n_total / 2` lawful rows uniformly
/// without replacement, then shuffles them together.
pub fn balanced_sample(
    unlawful: &Dataset,
    lawful_pool: &Dataset,
    n_total: usize,
    seed: u64,
) -> Result<Dataset> {
    if n_total == 0 || n_total % 2 != 0 {
        return Err(Error::Config(format!("n_total must be even and positive, got {n_total}")));
    }
    let half = n_total / 2;
    if half > unlawful.n_rows() {
        return Err(Error::InsufficientPool {
            side: "unlawful",
            needed: half,
            available: unlawful.n_rows(),
        });
    }
    if half > lawful_pool.n_rows() {
        return Err(Error::InsufficientPool {
            side: "lawful",
            needed: half,
            available: lawful_pool.n_rows(),
        });
    }
    let mut rng = rng_for(seed);
    let pick_u = rand::seq::index::sample(&mut rng, unlawful.n_rows(), half).into_vec();
    let pick_l = rand::seq::index::sample(&mut rng, lawful_pool.n_rows(), half).into_vec();
    let mut u = unlawful.select_rows(&pick_u);
    u.y.iter_mut().for_each(|l| *l = Label::Unlawful);
    let mut l = lawful_pool.select_rows(&pick_l);
    l.y.iter_mut().for_each(|l| *l = Label::Lawful);
    let both = u.concat(&l)?;
    let mut order: Vec<usize> = (0..both.n_rows()).collect();
    order.shuffle(&mut rng);
    Ok(both.select_rows(&order))
}

/// Stratified split: each class contributes `round(train_fraction * count)`
/// rows to train. Returned index lists are sorted.
pub fn stratified_split_indices(
    y: &[Label],
    train_fraction: f64,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::Config(format!(
            "train fraction must lie in (0, 1), got {train_fraction}"
        )));
    }
    let mut rng = rng_for(seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for label in [Label::Lawful, Label::Unlawful] {
        let mut idx: Vec<usize> = (0..y.len()).filter(|&i| y[i] == label).collect();
        if idx.is_empty() {
            continue;
        }
        idx.shuffle(&mut rng);
        let n_train = (train_fraction * idx.len() as f64).round() as usize;
        if n_train == 0 || n_train == idx.len() {
            return Err(Error::DegenerateSplit(format!(
                "{} of {} {label} rows would go to train",
                n_train,
                idx.len()
            )));
        }
        train.extend_from_slice(&idx[..n_train]);
        test.extend_from_slice(&idx[n_train..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

pub fn train_test_split(d: &Dataset, train_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    let (train, test) = stratified_split_indices(&d.y, train_fraction, seed)?;
    Ok((d.select_rows(&train), d.select_rows(&test)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn col(values: &[f64]) -> Matrix {
        Matrix::from_vec(values.len(), 1, values.to_vec()).unwrap()
    }

    fn labelled(n_unlawful: usize, n_lawful: usize) -> Dataset {
        let n = n_unlawful + n_lawful;
        let x = Matrix::from_vec(n, 1, (0..n).map(|i| i as f64).collect()).unwrap();
        let y = (0..n)
            .map(|i| if i < n_unlawful { Label::Unlawful } else { Label::Lawful })
            .collect();
        Dataset::new(x, y, FeatureSchema::numeric(&["id"]).unwrap()).unwrap()
    }

    #[test]
    fn zscore_small_column() {
        let (z, p) = zscore_normalize(&col(&[1.0, 2.0, 3.0])).unwrap();
        assert_eq!(p.means[0], 2.0);
        assert!((p.stds[0] - (2.0f64 / 3.0).sqrt()).abs() < 1e-15);
        let expected = [-1.2247, 0.0, 1.2247];
        for (i, e) in expected.iter().enumerate() {
            assert!((z[(i, 0)] - e).abs() < 1e-4);
        }
    }

    #[test]
    fn zscore_constant_column() {
        let (z, p) = zscore_normalize(&col(&[5.0, 5.0, 5.0])).unwrap();
        assert_eq!(z.column(0), vec![0.0, 0.0, 0.0]);
        assert_eq!(p.stds[0], 0.0);
    }

    #[test]
    fn zscore_rejects_nan() {
        assert!(matches!(
            zscore_normalize(&col(&[1.0, f64::NAN])),
            Err(Error::NonFiniteInput { row: 1, col: 0 })
        ));
    }

    #[test]
    fn zscore_is_idempotent_on_standardized_column() {
        let (z, _) = zscore_normalize(&col(&[3.0, -1.0, 4.0, 1.0, -5.0])).unwrap();
        let (z2, _) = zscore_normalize(&z).unwrap();
        assert!(z.max_abs_diff(&z2) < 1e-9);
    }

    #[test]
    fn one_hot_examples() {
        let m = one_hot_encode(&["A", "D", "A"], &["A", "D"]).unwrap();
        assert_eq!(m.column(0), vec![1.0, 0.0, 1.0]);
        let m = one_hot_encode(&["c2"], &["c1", "c2", "c3"]).unwrap();
        assert_eq!(m.row(0), &[0.0, 1.0, 0.0]);
        assert!(matches!(
            one_hot_encode(&["zz"], &["c1", "c2", "c3"]),
            Err(Error::UnknownCategory(_))
        ));
    }

    #[test]
    fn balanced_sample_counts() {
        let u = labelled(1992, 0);
        let l = labelled(0, 5000);
        let d = balanced_sample(&u, &l, 320, 1).unwrap();
        assert_eq!(d.class_counts(), [160, 160]);
        let d = balanced_sample(&u, &l, 3984, 1).unwrap();
        assert_eq!(d.class_counts(), [1992, 1992]);
        let mut ids: Vec<i64> = d.indices_of(Label::Unlawful).iter().map(|&i| d.x[(i, 0)] as i64).collect();
        ids.sort_unstable();
        assert_eq!(ids, (0..1992).collect::<Vec<_>>());
        let small = labelled(150, 0);
        assert!(matches!(
            balanced_sample(&small, &l, 400, 1),
            Err(Error::InsufficientPool { side: "unlawful", .. })
        ));
        assert_eq!(balanced_sample(&u, &l, 320, 9).unwrap(), balanced_sample(&u, &l, 320, 9).unwrap());
    }

    #[test]
    fn split_examples() {
        let d = labelled(160, 160);
        let (tr, te) = train_test_split(&d, 0.8, 3).unwrap();
        assert_eq!((tr.n_rows(), te.n_rows()), (256, 64));
        assert_eq!(tr.class_counts(), [128, 128]);
        assert_eq!(te.class_counts(), [32, 32]);
        assert_eq!(train_test_split(&d, 0.8, 3).unwrap().0, tr);

        let small = labelled(5, 5);
        assert!(matches!(train_test_split(&small, 0.999, 1), Err(Error::DegenerateSplit(_))));
    }

    proptest! {
        #[test]
        fn split_is_a_partition(nu in 2usize..60, nl in 2usize..60, frac in 0.3f64..0.7, seed: u64) {
            let d = labelled(nu, nl);
            let (tr, te) = stratified_split_indices(&d.y, frac, seed).unwrap();
            let mut all: Vec<usize> = tr.iter().chain(&te).copied().collect();
            all.sort_unstable();
            prop_assert_eq!(all, (0..nu + nl).collect::<Vec<_>>());
        }

        #[test]
        fn normalization_params_round_trip(values in prop::collection::vec(-1e3f64..1e3, 2..50)) {
            let x = col(&values);
            let (z, p) = zscore_normalize(&x).unwrap();
            prop_assert!(p.apply(&x).unwrap().max_abs_diff(&z) <= 1e-12);
            if p.stds[0] > 1e-6 {
                let zc = z.column(0);
                let mean = zc.iter().sum::<f64>() / zc.len() as f64;
                let sd = (zc.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / zc.len() as f64).sqrt();
                prop_assert!(mean.abs() < 1e-9);
                prop_assert!((sd - 1.0).abs() < 1e-9);
            }
        }

        #[test]
        fn one_hot_rows_sum_to_one(picks in prop::collection::vec(0usize..4, 1..30)) {
            let cats = ["a", "b", "c", "d"];
            let values: Vec<&str> = picks.iter().map(|&p| cats[p]).collect();
            let m = one_hot_encode(&values, &cats).unwrap();
            for r in m.iter_rows() {
                prop_assert_eq!(r.iter().sum::<f64>(), 1.0);
            }
        }
    }
}
