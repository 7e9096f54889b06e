use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use insider_forest::dataset::{read_dataset_csv, schema_for_names, Dataset, FeatureSet, SyntheticSpec};
use insider_forest::evaluate::{ExperimentConfig, ExperimentData, PcaSetting, SearchSpace};
use insider_forest::importance::{Distance, DEFAULT_CLUSTER_THRESHOLD, DEFAULT_N_REPEATS};

use crate::error::{CliError, CliResult};
use crate::fsutil::{open_input, read_json};

/// Where the transactions come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSource {
    Synthetic(SyntheticSpec),
    /// One labeled feature table.
    Table { path: PathBuf },
    /// Separate unlawful and lawful feature tables.
    Pools { unlawful: PathBuf, lawful: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImportanceConfig {
    #[serde(default = "yes")]
    pub enabled: bool,
    #[serde(default = "default_repeats")]
    pub n_repeats: usize,
    #[serde(default = "default_cluster_threshold")]
    pub cluster_threshold: f64,
    #[serde(default)]
    pub distance: Distance,
}

fn yes() -> bool {
    true
}

fn default_repeats() -> usize {
    DEFAULT_N_REPEATS
}

fn default_cluster_threshold() -> f64 {
    DEFAULT_CLUSTER_THRESHOLD
}

impl Default for ImportanceConfig {
    fn default() -> Self {
        ImportanceConfig {
            enabled: true,
            n_repeats: DEFAULT_N_REPEATS,
            cluster_threshold: DEFAULT_CLUSTER_THRESHOLD,
            distance: Distance::Absolute,
        }
    }
}

fn default_features() -> FeatureSet {
    FeatureSet::Full110
}

fn default_reps() -> usize {
    100
}

fn default_train_fraction() -> f64 {
    0.8
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub source: DataSource,
    pub n_transactions: usize,
    #[serde(default = "default_features")]
    pub features: FeatureSet,
    #[serde(default)]
    pub pca: PcaSetting,
    #[serde(default)]
    pub search: SearchSpace,
    #[serde(default = "default_reps")]
    pub reps: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_train_fraction")]
    pub train_fraction: f64,
    #[serde(default)]
    pub importance: ImportanceConfig,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
}

fn rebase(base: &Path, p: &mut PathBuf) {
    if p.is_relative() {
        *p = base.join(&*p);
    }
}

impl PipelineConfig {
    /// Reads a JSON config. Relative input paths are taken relative to the
    /// config file; the output directory stays relative to the caller.
    pub fn load(path: &Path) -> CliResult<Self> {
        let mut config: PipelineConfig = read_json(path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        match &mut config.source {
            DataSource::Synthetic(_) => {}
            DataSource::Table { path } => rebase(base, path),
            DataSource::Pools { unlawful, lawful } => {
                rebase(base, unlawful);
                rebase(base, lawful);
            }
        }
        Ok(config)
    }

    pub fn experiment(&self) -> ExperimentConfig {
        ExperimentConfig {
            n_transactions: self.n_transactions,
            features: self.features.clone(),
            pca: self.pca,
            search: self.search.clone(),
            reps: self.reps,
            seed: self.seed,
            train_fraction: self.train_fraction,
        }
    }

    pub fn validate(&self) -> CliResult<()> {
        let inputs: Vec<&PathBuf> = match &self.source {
            DataSource::Synthetic(spec) => {
                spec.validate()?;
                vec![]
            }
            DataSource::Table { path } => vec![path],
            DataSource::Pools { unlawful, lawful } => vec![unlawful, lawful],
        };
        if let Some(p) = inputs.iter().find(|p| !p.exists()) {
            return Err(CliError::config(format!("missing input file {}", p.display())));
        }
        if self.importance.n_repeats == 0 {
            return Err(CliError::config("importance.n_repeats must be at least 1"));
        }
        if !(self.importance.cluster_threshold >= 0.0) {
            return Err(CliError::config("importance.cluster_threshold must be >= 0"));
        }
        self.experiment().validate()?;
        Ok(())
    }
}

/// Reads a feature table, attaching catalog metadata to known columns.
pub fn read_table(path: &Path) -> CliResult<Dataset> {
    let mut d = read_dataset_csv(open_input(path)?, None)?;
    d.schema = schema_for_names(&d.schema.names())?;
    Ok(d)
}

pub fn load_source(source: &DataSource) -> CliResult<ExperimentData> {
    Ok(match source {
        DataSource::Synthetic(spec) => {
            ExperimentData::from_labeled(&insider_forest::dataset::generate_synthetic(spec)?)
        }
        DataSource::Table { path } => ExperimentData::from_labeled(&read_table(path)?),
        DataSource::Pools { unlawful, lawful } => ExperimentData {
            unlawful: read_table(unlawful)?,
            lawful_pool: read_table(lawful)?,
        },
    })
}

/// `--features` value: a named subset, a file listing names (one per line
/// or comma separated), or an inline comma list.
pub fn parse_feature_arg(arg: &str) -> CliResult<FeatureSet> {
    let path = Path::new(arg);
    if arg != "dcz25" && arg != "full110" && arg != "full" && path.is_file() {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let names: Vec<String> = text
            .split(|c| c == '\n' || c == ',')
            .map(|s| s.trim().to_string())
            .filter(|s| !s.is_empty() && !s.starts_with('#'))
            .collect();
        if names.is_empty() {
            return Err(CliError::config(format!("feature list {arg} is empty")));
        }
        return Ok(FeatureSet::Custom(names));
    }
    Ok(arg.parse()?)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "source": {"synthetic": {"n": 100, "m": 5, "n_informative": 2, "class_separation": 2.0, "seed": 1}},
        "n_transactions": 60
    }"#;

    #[test]
    fn defaults_fill_in() {
        let c: PipelineConfig = serde_json::from_str(MINIMAL).unwrap();
        assert_eq!(c.reps, 100);
        assert_eq!(c.pca, PcaSetting::Off);
        assert_eq!(c.search, SearchSpace::default());
        assert_eq!(c.features, FeatureSet::Full110);
        assert!(c.importance.enabled);
        c.validate().unwrap();
    }

    #[test]
    fn unknown_fields_rejected() {
        let text = MINIMAL.replace("\"n_transactions\"", "\"n_transaction\"");
        assert!(serde_json::from_str::<PipelineConfig>(&text).is_err());
    }

    #[test]
    fn relative_inputs_follow_config_file() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("exp.json");
        std::fs::write(&cfg, r#"{"source": {"table": {"path": "data.csv"}}, "n_transactions": 10}"#).unwrap();
        let c = PipelineConfig::load(&cfg).unwrap();
        assert_eq!(c.source, DataSource::Table { path: dir.path().join("data.csv") });
        let err = c.validate().unwrap_err();
        assert_eq!((err.class.as_str(), err.code), ("ConfigError", 2));
    }

    #[test]
    fn feature_argument_forms() {
        assert_eq!(parse_feature_arg("dcz25").unwrap(), FeatureSet::Dcz25);
        assert_eq!(
            parse_feature_arg("a,b").unwrap(),
            FeatureSet::Custom(vec!["a".into(), "b".into()])
        );
        let dir = tempfile::tempdir().unwrap();
        let list = dir.path().join("features.txt");
        std::fs::write(&list, "# chosen\nx\ny, z\n").unwrap();
        assert_eq!(
            parse_feature_arg(list.to_str().unwrap()).unwrap(),
            FeatureSet::Custom(vec!["x".into(), "y".into(), "z".into()])
        );
    }
}
