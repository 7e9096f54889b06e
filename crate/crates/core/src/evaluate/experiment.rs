use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::cv::{random_search, SearchSpace};
use super::metrics::{confusion_matrix, metrics, pr_auc, roc_auc, ConfusionMatrix, MetricsReport};
use crate::dataset::{balanced_sample, train_test_split, Dataset, FeatureSchema, FeatureSet, Label};
use crate::error::{Error, Result};
use crate::forest::{fit_forest, HyperParams, RandomForestModel};
use crate::pca::{fit_pca, PcaModel, DEFAULT_TARGET_CUM_EVR};
use crate::rng::{derive_seed, derived_rng, tag};

pub const REP_CSV_HEADER: [&str; 17] = [
    "rep", "seed", "ntrees", "mtry", "max_depth", "sample_rate", "tp", "fn", "fp", "tn", "acc", "tpr",
    "fpr", "tnr", "fnr", "pre", "auc",
];

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PcaSetting {
    #[default]
    Off,
    /// Keep the fewest components reaching this cumulative variance ratio.
    Evr(f64),
    /// Keep a fixed number of components.
    K(usize),
}

impl PcaSetting {
    /// Number of components kept from `model`; `None` when PCA is off.
    pub fn components(&self, model: &PcaModel) -> Option<usize> {
        match *self {
            PcaSetting::Off => None,
            PcaSetting::Evr(r) => Some(model.select_components(r)),
            PcaSetting::K(k) => Some(k),
        }
    }
}

impl fmt::Display for PcaSetting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PcaSetting::Off => f.write_str("off"),
            PcaSetting::Evr(r) => write!(f, "evr={r}"),
            PcaSetting::K(k) => write!(f, "k={k}"),
        }
    }
}

impl FromStr for PcaSetting {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("bad PCA setting `{s}`; expected off, on, evr=<r> or k=<n>"));
        match s.split_once('=') {
            None if s == "off" => Ok(PcaSetting::Off),
            None if s == "on" => Ok(PcaSetting::Evr(DEFAULT_TARGET_CUM_EVR)),
            Some(("evr", r)) => match r.parse::<f64>() {
                Ok(r) if r > 0.0 && r <= 1.0 => Ok(PcaSetting::Evr(r)),
                _ => Err(bad()),
            },
            Some(("k", k)) => match k.parse::<usize>() {
                Ok(k) if k > 0 => Ok(PcaSetting::K(k)),
                _ => Err(bad()),
            },
            _ => Err(bad()),
        }
    }
}

fn default_features() -> FeatureSet {
    FeatureSet::Full110
}

fn default_train_fraction() -> f64 {
    0.8
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    /// Rows per repetition, half of them unlawful.
    pub n_transactions: usize,
    #[serde(default = "default_features")]
    pub features: FeatureSet,
    #[serde(default)]
    pub pca: PcaSetting,
    #[serde(default)]
    pub search: SearchSpace,
    pub reps: usize,
    pub seed: u64,
    #[serde(default = "default_train_fraction")]
    pub train_fraction: f64,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.reps == 0 {
            return Err(Error::Config("reps must be at least 1".into()));
        }
        if self.n_transactions == 0 || self.n_transactions % 2 != 0 {
            return Err(Error::Config(format!(
                "n_transactions must be even and positive, got {}",
                self.n_transactions
            )));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::Config(format!("train_fraction {} outside (0, 1)", self.train_fraction)));
        }
        match self.pca {
            PcaSetting::Evr(r) if !(r > 0.0 && r <= 1.0) => {
                return Err(Error::Config(format!("PCA target ratio {r} outside (0, 1]")))
            }
            PcaSetting::K(0) => return Err(Error::Config("PCA k must be at least 1".into())),
            _ => {}
        }
        self.search.validate().map_err(|e| Error::Config(e.to_string()))
    }
}

/// Source rows: every unlawful transaction and the lawful pool to sample from.
#[derive(Debug, Clone)]
pub struct ExperimentData {
    pub unlawful: Dataset,
    pub lawful_pool: Dataset,
}

impl ExperimentData {
    pub fn from_labeled(d: &Dataset) -> Self {
        ExperimentData {
            unlawful: d.select_rows(&d.indices_of(Label::Unlawful)),
            lawful_pool: d.select_rows(&d.indices_of(Label::Lawful)),
        }
    }
}

/// Feature-selected inputs with the unlawful half fixed for all repetitions.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub unlawful: Dataset,
    pub lawful_pool: Dataset,
}

pub fn prepare(data: &ExperimentData, config: &ExperimentConfig) -> Result<PreparedData> {
    config.validate()?;
    if data.unlawful.schema.names() != data.lawful_pool.schema.names() {
        return Err(Error::Config("unlawful and lawful tables have different columns".into()));
    }
    let cols = config.features.resolve(&data.unlawful.schema)?;
    let unlawful = data.unlawful.select_columns(&cols);
    let lawful_pool = data.lawful_pool.select_columns(&cols);
    let half = config.n_transactions / 2;
    if half > unlawful.n_rows() {
        return Err(Error::InsufficientPool {
            side: "unlawful",
            needed: half,
            available: unlawful.n_rows(),
        });
    }
    let mut rng = derived_rng(config.seed, tag::UNLAWFUL_FIX);
    let mut pick = rand::seq::index::sample(&mut rng, unlawful.n_rows(), half).into_vec();
    pick.sort_unstable();
    Ok(PreparedData {
        unlawful: unlawful.select_rows(&pick),
        lawful_pool,
    })
}

pub fn rep_seed(master: u64, rep: usize) -> u64 {
    derive_seed(derive_seed(master, tag::REP), rep as u64)
}

/// Normalized (and optionally projected) train/test split of one repetition.
#[derive(Debug, Clone)]
pub struct RepData {
    pub seed: u64,
    pub train: Dataset,
    pub test: Dataset,
    pub pca: Option<PcaModel>,
}

fn pc_schema(k: usize) -> Result<FeatureSchema> {
    let names: Vec<String> = (1..=k).map(|i| format!("pc{i}")).collect();
    FeatureSchema::numeric(&names)
}

/// The balanced sample of one repetition: the fixed unlawful rows plus a
/// fresh draw from the lawful pool.
pub fn rep_sample(prepared: &PreparedData, config: &ExperimentConfig, rep: usize) -> Result<Dataset> {
    balanced_sample(
        &prepared.unlawful,
        &prepared.lawful_pool,
        config.n_transactions,
        derive_seed(rep_seed(config.seed, rep), tag::SAMPLE),
    )
}

pub fn rep_data(prepared: &PreparedData, config: &ExperimentConfig, rep: usize) -> Result<RepData> {
    let seed = rep_seed(config.seed, rep);
    let sample = rep_sample(prepared, config, rep)?;
    let (train, test) = train_test_split(&sample, config.train_fraction, derive_seed(seed, tag::SPLIT))?;
    let norm = train.fit_normalization();
    let train = train.normalized_with(&norm)?;
    let test = test.normalized_with(&norm)?;
    if config.pca == PcaSetting::Off {
        return Ok(RepData {
            seed,
            train,
            test,
            pca: None,
        });
    }
    let model = fit_pca(&train.x)?;
    let k = config.pca.components(&model).expect("PCA is on");
    let schema = pc_schema(k)?;
    let project = |d: Dataset| -> Result<Dataset> {
        let mut out = Dataset::new(model.transform(&d.x, k)?, d.y, schema.clone())?;
        out.normalized = true;
        Ok(out)
    };
    Ok(RepData {
        seed,
        train: project(train)?,
        test: project(test)?,
        pca: Some(model),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepRecord {
    pub rep: usize,
    pub seed: u64,
    pub params: HyperParams,
    pub cv_score: f64,
    pub confusion: ConfusionMatrix,
    pub metrics: MetricsReport,
    pub oob_error: Option<f64>,
    pub n_components: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RepFailure {
    pub rep: usize,
    pub seed: u64,
    pub class: String,
    pub message: String,
}

/// Tunes on the training split, refits on all of it and scores the test split.
pub fn fit_and_score(data: &RepData, config: &ExperimentConfig, rep: usize) -> Result<(RepRecord, RandomForestModel)> {
    let search = random_search(&config.search, &data.train, derive_seed(data.seed, tag::SEARCH))?;
    let params = HyperParams {
        seed: derive_seed(data.seed, tag::MODEL),
        ..search.best
    };
    let model = fit_forest(&data.train, &params)?;
    let preds = model.predict_matrix(&data.test.x)?;
    let labels: Vec<Label> = preds.iter().map(|p| p.0).collect();
    let scores: Vec<f64> = preds.iter().map(|p| p.1).collect();
    let confusion = confusion_matrix(&data.test.y, &labels)?;
    let metrics = MetricsReport {
        auc: roc_auc(&data.test.y, &scores).ok(),
        aucpr: pr_auc(&data.test.y, &scores).ok(),
        ..metrics(&confusion)
    };
    let record = RepRecord {
        rep,
        seed: data.seed,
        params,
        cv_score: search.best_score,
        confusion,
        metrics,
        oob_error: model.oob_error(&data.train).ok(),
        n_components: data.pca.as_ref().map(|_| data.train.n_features()),
    };
    Ok((record, model))
}

pub fn run_rep(prepared: &PreparedData, config: &ExperimentConfig, rep: usize) -> Result<RepRecord> {
    let data = rep_data(prepared, config, rep)?;
    fit_and_score(&data, config, rep).map(|(r, _)| r)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub n: usize,
    pub mean: f64,
    /// Sample standard deviation; `None` below two values.
    pub std: Option<f64>,
    /// Standard error of the mean, `std / sqrt(n)`.
    pub sem: Option<f64>,
}

impl Summary {
    pub fn of(values: &[f64]) -> Option<Summary> {
        if values.is_empty() {
            return None;
        }
        let n = values.len();
        let mean = values.iter().sum::<f64>() / n as f64;
        let std = (n > 1).then(|| {
            (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64).sqrt()
        });
        Some(Summary {
            n,
            mean,
            std,
            sem: std.map(|s| s / (n as f64).sqrt()),
        })
    }
}

/// Most frequent chosen value of each hyperparameter. Real values are
/// compared at two decimals; ties go to the smaller value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamsMode {
    pub ntrees: usize,
    pub mtry: f64,
    pub max_depth: Option<usize>,
    pub sample_rate: f64,
}

fn mode<K: Ord + Copy>(keys: impl Iterator<Item = K>) -> Option<K> {
    let mut counts = BTreeMap::new();
    for k in keys {
        *counts.entry(k).or_insert(0usize) += 1;
    }
    // max_by_key keeps the last maximum; iterate descending to favour smaller keys
    counts.into_iter().rev().max_by_key(|&(_, c)| c).map(|(k, _)| k)
}

fn centi(v: f64) -> i64 {
    (v * 100.0).round() as i64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub reps_requested: usize,
    pub reps_succeeded: usize,
    pub failures: Vec<RepFailure>,
    /// Keyed by metric name, plus `oob_error` and `cv_score`.
    pub metrics: BTreeMap<String, Summary>,
    pub params_mode: Option<ParamsMode>,
}

pub fn aggregate(records: &[RepRecord], failures: &[RepFailure], reps_requested: usize) -> AggregateReport {
    let mut summaries = BTreeMap::new();
    for name in MetricsReport::NAMES {
        let values: Vec<f64> = records.iter().filter_map(|r| r.metrics.get(name)).collect();
        if let Some(s) = Summary::of(&values) {
            summaries.insert(name.to_string(), s);
        }
    }
    let oob: Vec<f64> = records.iter().filter_map(|r| r.oob_error).collect();
    if let Some(s) = Summary::of(&oob) {
        summaries.insert("oob_error".into(), s);
    }
    let cv: Vec<f64> = records.iter().map(|r| r.cv_score).collect();
    if let Some(s) = Summary::of(&cv) {
        summaries.insert("cv_score".into(), s);
    }
    let params_mode = (!records.is_empty()).then(|| {
        let p = || records.iter().map(|r| &r.params);
        ParamsMode {
            ntrees: mode(p().map(|p| p.ntrees)).unwrap_or(0),
            mtry: mode(p().map(|p| centi(p.mtry_fraction.unwrap_or(0.0)))).unwrap_or(0) as f64 / 100.0,
            max_depth: mode(p().map(|p| p.max_depth)).flatten(),
            sample_rate: mode(p().map(|p| centi(p.sample_rate))).unwrap_or(0) as f64 / 100.0,
        }
    });
    AggregateReport {
        reps_requested,
        reps_succeeded: records.len(),
        failures: failures.to_vec(),
        metrics: summaries,
        params_mode,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentOutcome {
    pub records: Vec<RepRecord>,
    pub aggregate: AggregateReport,
}

/// Runs `config.reps` repetitions in parallel on the current rayon pool.
/// Failed repetitions are logged and left out of the aggregate. Results are
/// in repetition order and independent of the pool size.
pub fn run_experiments(data: &ExperimentData, config: &ExperimentConfig) -> Result<ExperimentOutcome> {
    let prepared = prepare(data, config)?;
    let results: Vec<Result<RepRecord>> = (0..config.reps)
        .into_par_iter()
        .map(|rep| run_rep(&prepared, config, rep))
        .collect();
    let mut records = Vec::new();
    let mut failures = Vec::new();
    for (rep, r) in results.into_iter().enumerate() {
        match r {
            Ok(rec) => {
                log::info!(
                    "rep {rep}: acc {:.4}",
                    rec.metrics.acc.unwrap_or(f64::NAN)
                );
                records.push(rec);
            }
            Err(e) => {
                log::warn!("rep {rep} failed: {} ({e})", e.class());
                failures.push(RepFailure {
                    rep,
                    seed: rep_seed(config.seed, rep),
                    class: e.class().to_string(),
                    message: e.to_string(),
                });
            }
        }
    }
    if !failures.is_empty() {
        log::warn!("{} of {} repetitions failed", failures.len(), config.reps);
    }
    let aggregate = aggregate(&records, &failures, config.reps);
    Ok(ExperimentOutcome { records, aggregate })
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |v| v.to_string())
}

pub fn write_rep_csv<W: Write>(writer: W, records: &[RepRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(REP_CSV_HEADER)?;
    for r in records {
        let m = &r.metrics;
        let c = &r.confusion;
        w.write_record([
            r.rep.to_string(),
            r.seed.to_string(),
            r.params.ntrees.to_string(),
            opt(r.params.mtry_fraction),
            r.params.max_depth.map_or_else(|| "NA".into(), |d| d.to_string()),
            r.params.sample_rate.to_string(),
            c.tp.to_string(),
            c.fn_.to_string(),
            c.fp.to_string(),
            c.tn.to_string(),
            opt(m.acc),
            opt(m.tpr),
            opt(m.fpr),
            opt(m.tnr),
            opt(m.fnr),
            opt(m.pre),
            opt(m.auc),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{generate_synthetic, SyntheticSpec};

    fn small_config(reps: usize, pca: PcaSetting) -> ExperimentConfig {
        ExperimentConfig {
            n_transactions: 120,
            features: FeatureSet::Full110,
            pca,
            search: SearchSpace {
                ntrees: (10, 30),
                max_depth: (2, 6),
                n_iterations: 2,
                k_folds: 3,
                ..SearchSpace::default()
            },
            reps,
            seed: 7,
            train_fraction: 0.8,
        }
    }

    fn data() -> ExperimentData {
        let d = generate_synthetic(&SyntheticSpec {
            n: 300,
            m: 8,
            n_informative: 3,
            class_separation: 2.0,
            correlated_groups: 1,
            seed: 3,
        })
        .unwrap();
        ExperimentData::from_labeled(&d)
    }

    #[test]
    fn pca_setting_parsing() {
        assert_eq!("off".parse::<PcaSetting>().unwrap(), PcaSetting::Off);
        assert_eq!("k=10".parse::<PcaSetting>().unwrap(), PcaSetting::K(10));
        assert_eq!("evr=0.9".parse::<PcaSetting>().unwrap(), PcaSetting::Evr(0.9));
        assert!("evr=1.5".parse::<PcaSetting>().is_err());
        assert!("k=0".parse::<PcaSetting>().is_err());
        let json = serde_json::to_string(&PcaSetting::K(3)).unwrap();
        assert_eq!(json, r#"{"k":3}"#);
        assert_eq!(serde_json::to_string(&PcaSetting::Off).unwrap(), r#""off""#);
    }

    #[test]
    fn single_rep_matches_manual_run() {
        let config = small_config(1, PcaSetting::Off);
        let out = run_experiments(&data(), &config).unwrap();
        let prepared = prepare(&data(), &config).unwrap();
        let manual = run_rep(&prepared, &config, 0).unwrap();
        assert_eq!(out.records, vec![manual]);
        assert_eq!(out.records[0].seed, rep_seed(7, 0));
    }

    #[test]
    fn repeated_runs_are_identical() {
        let config = small_config(3, PcaSetting::Evr(0.9));
        let a = run_experiments(&data(), &config).unwrap();
        let b = run_experiments(&data(), &config).unwrap();
        let (mut ca, mut cb) = (Vec::new(), Vec::new());
        write_rep_csv(&mut ca, &a.records).unwrap();
        write_rep_csv(&mut cb, &b.records).unwrap();
        assert_eq!(ca, cb);
        assert_eq!(a.aggregate.reps_succeeded, 3);
        assert!(a.records.iter().all(|r| r.n_components.is_some()));
        let acc = a.aggregate.metrics["acc"];
        assert_eq!(acc.n, 3);
        assert!(acc.mean > 0.7);
    }

    #[test]
    fn unlawful_side_fixed_across_reps() {
        let config = small_config(2, PcaSetting::Off);
        let prepared = prepare(&data(), &config).unwrap();
        assert_eq!(prepared.unlawful.n_rows(), 60);
        let rows = |d: &Dataset, l: Label| {
            let mut rows: Vec<Vec<u64>> = d
                .indices_of(l)
                .iter()
                .map(|&i| d.x.row(i).iter().map(|v| v.to_bits()).collect())
                .collect();
            rows.sort();
            rows
        };
        let a = rep_sample(&prepared, &config, 0).unwrap();
        let b = rep_sample(&prepared, &config, 1).unwrap();
        assert_eq!(rows(&a, Label::Unlawful), rows(&b, Label::Unlawful));
        assert_ne!(rows(&a, Label::Lawful), rows(&b, Label::Lawful));
    }

    #[test]
    fn failures_are_excluded() {
        let mut config = small_config(2, PcaSetting::K(50));
        config.n_transactions = 120;
        let out = run_experiments(&data(), &config).unwrap();
        assert_eq!(out.aggregate.reps_succeeded, 0);
        assert_eq!(out.aggregate.failures.len(), 2);
        assert_eq!(out.aggregate.failures[0].class, "KOutOfRange");
    }

    #[test]
    fn bad_config_rejected() {
        let mut config = small_config(0, PcaSetting::Off);
        assert!(matches!(run_experiments(&data(), &config), Err(Error::Config(_))));
        config.reps = 1;
        config.n_transactions = 1000;
        assert!(matches!(
            run_experiments(&data(), &config),
            Err(Error::InsufficientPool { .. })
        ));
    }

    #[test]
    fn summary_and_mode() {
        let s = Summary::of(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!((s.mean, s.std), (2.0, Some(1.0)));
        assert_eq!(Summary::of(&[4.0]).unwrap().std, None);
        assert_eq!(mode([3, 1, 3, 1, 2].into_iter()), Some(1));
        assert_eq!(mode([5, 2, 5].into_iter()), Some(5));
    }

    #[test]
    fn csv_layout() {
        let config = small_config(1, PcaSetting::Off);
        let out = run_experiments(&data(), &config).unwrap();
        let mut buf = Vec::new();
        write_rep_csv(&mut buf, &out.records).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), REP_CSV_HEADER.join(","));
        assert_eq!(lines.next().unwrap().split(',').count(), 17);
    }
}
