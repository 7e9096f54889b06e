use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use insider_forest::evaluate::{
    prepare, rep_data, run_experiments, write_rep_csv, AggregateReport, ExperimentData, RepRecord,
};
use insider_forest::forest::fit_forest;
use insider_forest::importance::{
    decorrelated_permutation_importance, mdi_report, permutation_importance, write_importance_csv,
    Dendrogram, EvaluatedOn, ImportanceReport,
};
use insider_forest::rng::derive_seed;

use crate::config::{load_source, PipelineConfig};
use crate::error::{CliError, CliResult};
use crate::fsutil::{write_atomic, write_json, write_with};
use crate::report::{render_report, RunManifest};

pub const PER_REP_CSV: &str = "per_rep.csv";
pub const AGGREGATE_JSON: &str = "aggregate.json";
pub const IMPORTANCE_CSV: &str = "importance.csv";
pub const IMPORTANCE_JSON: &str = "importance.json";
pub const DENDROGRAM_JSON: &str = "dendrogram.json";
pub const MANIFEST_JSON: &str = "manifest.json";
pub const REPORT_MD: &str = "report.md";

const IMPORTANCE_SEED_TAG: u64 = 0x494d_5052;

/// Dendrogram export for external plotting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DendrogramExport {
    pub labels: Vec<String>,
    pub threshold: f64,
    pub dendrogram: Dendrogram,
    pub clusters: Vec<Vec<usize>>,
    pub representatives: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub output_dir: PathBuf,
    pub aggregate: AggregateReport,
    pub artifacts: Vec<PathBuf>,
}

pub struct ImportanceOutput {
    pub reports: Vec<ImportanceReport>,
    pub dendrogram: DendrogramExport,
}

/// MDI, permutation importance on both splits and the decorrelated variant,
/// all for the model of one finished repetition.
pub fn importance_for_rep(
    data: &ExperimentData,
    config: &PipelineConfig,
    record: &RepRecord,
) -> CliResult<ImportanceOutput> {
    let exp = config.experiment();
    let prepared = prepare(data, &exp)?;
    let rd = rep_data(&prepared, &exp, record.rep)?;
    let model = fit_forest(&rd.train, &record.params)?;
    let names = rd.train.schema.names();
    let seed = derive_seed(record.seed, IMPORTANCE_SEED_TAG);
    let n_repeats = config.importance.n_repeats;
    let mdi = mdi_report(&model, &names)?;
    let on_train = permutation_importance(&model, &rd.train, EvaluatedOn::Train, n_repeats, seed)?;
    let on_test = permutation_importance(&model, &rd.test, EvaluatedOn::Test, n_repeats, seed)?;
    let threshold = config.importance.cluster_threshold;
    let dec = decorrelated_permutation_importance(
        &rd.train,
        &rd.test,
        &record.params,
        threshold,
        config.importance.distance,
        n_repeats,
        seed,
    )?;
    Ok(ImportanceOutput {
        reports: vec![mdi, on_train, on_test, dec.report],
        dendrogram: DendrogramExport {
            labels: names,
            threshold,
            dendrogram: dec.dendrogram,
            clusters: dec.clusters,
            representatives: dec.representatives,
        },
    })
}

/// Runs every repetition and writes the artifacts into the output directory.
/// Fails (after writing the per-rep CSV and aggregate) when no repetition
/// succeeded.
pub fn run_pipeline(config: &PipelineConfig) -> CliResult<RunSummary> {
    config.validate()?;
    let data = load_source(&config.source)?;
    let exp = config.experiment();
    let prepared = prepare(&data, &exp)?;
    let feature_names = prepared.unlawful.schema.names();
    let outcome = run_experiments(&data, &exp)?;
    let dir = &config.output_dir;
    let path = |name: &str| dir.join(name);
    let mut artifacts = Vec::new();

    write_with(&path(PER_REP_CSV), |buf| write_rep_csv(buf, &outcome.records))?;
    artifacts.push(path(PER_REP_CSV));
    write_json(&path(AGGREGATE_JSON), &outcome.aggregate)?;
    artifacts.push(path(AGGREGATE_JSON));
    let manifest = RunManifest {
        config: config.clone(),
        feature_names,
    };
    write_json(&path(MANIFEST_JSON), &manifest)?;
    artifacts.push(path(MANIFEST_JSON));

    let Some(first) = outcome.records.first() else {
        let f = &outcome.aggregate.failures[0];
        return Err(CliError {
            class: f.class.clone(),
            code: crate::error::EXIT_DATA,
            message: format!("all {} repetitions failed; first: {}", exp.reps, f.message),
        });
    };

    let mut reports = Vec::new();
    if config.importance.enabled {
        let imp = importance_for_rep(&data, config, first)?;
        let refs: Vec<&ImportanceReport> = imp.reports.iter().collect();
        write_with(&path(IMPORTANCE_CSV), |buf| write_importance_csv(buf, &refs))?;
        write_json(&path(IMPORTANCE_JSON), &imp.reports)?;
        write_json(&path(DENDROGRAM_JSON), &imp.dendrogram)?;
        artifacts.extend([path(IMPORTANCE_CSV), path(IMPORTANCE_JSON), path(DENDROGRAM_JSON)]);
        reports = imp.reports;
    }

    let report = render_report(&manifest, &outcome.aggregate, &reports);
    write_atomic(&path(REPORT_MD), report.as_bytes())?;
    artifacts.push(path(REPORT_MD));
    Ok(RunSummary {
        output_dir: dir.clone(),
        aggregate: outcome.aggregate,
        artifacts,
    })
}

/// Re-renders `report.md` from the JSON artifacts of a finished run.
pub fn rerender_report(run_dir: &Path) -> CliResult<PathBuf> {
    let manifest: RunManifest = crate::fsutil::read_json(&run_dir.join(MANIFEST_JSON))?;
    let aggregate: AggregateReport = crate::fsutil::read_json(&run_dir.join(AGGREGATE_JSON))?;
    let imp_path = run_dir.join(IMPORTANCE_JSON);
    let reports: Vec<ImportanceReport> = if imp_path.exists() {
        crate::fsutil::read_json(&imp_path)?
    } else {
        Vec::new()
    };
    let out = run_dir.join(REPORT_MD);
    write_atomic(&out, render_report(&manifest, &aggregate, &reports).as_bytes())?;
    Ok(out)
}
