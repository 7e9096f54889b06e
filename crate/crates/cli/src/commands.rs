//! Subcommand bodies. Each takes parsed arguments, reads and writes files,
//! and returns a [`CliResult`]; `main` only maps the result to an exit code.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use clap::Args;
use serde::{Deserialize, Serialize};

use insider_forest::dataset::{
    fill_missing, generate_synthetic, schema_for_names, write_dataset_csv, Quarter, QuarterRecord,
    SyntheticSpec,
};
use insider_forest::evaluate::{
    confusion_matrix, metrics, pr_auc, random_search, roc_auc, ConfusionMatrix, Criterion,
    MetricsReport, PcaSetting, SearchSpace,
};
use insider_forest::form4::{
    label_transactions, parse_form4, read_transactions_csv, write_transactions_csv, AcquiredDisposed,
    DefendantList, Transaction, DEFAULT_MATCH_THRESHOLD,
};
use insider_forest::importance::{
    decorrelated_permutation_importance, mdi_report, permutation_importance, write_importance_csv,
    Distance, EvaluatedOn, DEFAULT_CLUSTER_THRESHOLD, DEFAULT_N_REPEATS,
};
use insider_forest::{fit_forest, Dataset, HyperParams, Label, Matrix, RandomForestModel};

use crate::config::{parse_feature_arg, read_table, PipelineConfig};
use crate::error::{CliError, CliResult};
use crate::fsutil::{open_input, read_input, read_json, write_json, write_with};
use crate::pipeline::{rerender_report, run_pipeline, DendrogramExport, RunSummary};

fn xml_files(inputs: &[PathBuf]) -> CliResult<Vec<PathBuf>> {
    let mut files = Vec::new();
    for p in inputs {
        if p.is_dir() {
            let mut found: Vec<PathBuf> = std::fs::read_dir(p)
                .map_err(|e| CliError::io(p, e))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|f| f.extension().is_some_and(|x| x.eq_ignore_ascii_case("xml")))
                .collect();
            found.sort();
            files.extend(found);
        } else if p.exists() {
            files.push(p.clone());
        } else {
            return Err(CliError::config(format!("missing input file {}", p.display())));
        }
    }
    Ok(files)
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// Form 4 XML files or directories holding them.
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

/// Parses every document; a document that fails is reported and skipped.
/// Fails only when no document parses.
pub fn ingest(args: &IngestArgs) -> CliResult<usize> {
    let files = xml_files(&args.inputs)?;
    let mut txns = Vec::new();
    let mut first_err = None;
    for f in &files {
        match parse_form4(&read_input(f)?) {
            Ok(t) => txns.extend(t),
            Err(e) => {
                let e = CliError::from(e);
                log::warn!("skipping {}: {}", f.display(), e.line());
                first_err.get_or_insert(e);
            }
        }
    }
    if let Some(e) = first_err.filter(|_| txns.is_empty()) {
        return Err(e);
    }
    write_with(&args.out, |buf| write_transactions_csv(buf, &txns))?;
    Ok(txns.len())
}

fn read_transactions(path: &Path) -> CliResult<Vec<Transaction>> {
    Ok(read_transactions_csv(open_input(path)?)?)
}

#[derive(Debug, Args)]
pub struct LabelArgs {
    #[arg(long)]
    pub transactions: PathBuf,
    /// Defendant names, one per line; `#` starts a comment.
    #[arg(long)]
    pub defendants: PathBuf,
    /// Minimum similarity (0-100) for a filer to match a defendant.
    #[arg(long, default_value_t = DEFAULT_MATCH_THRESHOLD)]
    pub threshold: u8,
    #[arg(long)]
    pub out: PathBuf,
}

/// Returns `(unlawful, total)`.
pub fn label(args: &LabelArgs) -> CliResult<(usize, usize)> {
    let txns = read_transactions(&args.transactions)?;
    let text = String::from_utf8_lossy(&read_input(&args.defendants)?).into_owned();
    let defendants = DefendantList::parse(&text, args.defendants.display().to_string());
    let labeled = label_transactions(&txns, &defendants, args.threshold)?;
    write_with(&args.out, |buf| write_transactions_csv(buf, &labeled))?;
    let unlawful = labeled.iter().filter(|t| t.label == Some(Label::Unlawful)).count();
    Ok((unlawful, labeled.len()))
}

#[derive(Debug, Args)]
pub struct FeaturizeArgs {
    /// Labeled transactions CSV.
    #[arg(long)]
    pub transactions: PathBuf,
    /// Quarterly company indicators: `cik,quarter,<features...>`, blank for
    /// a missing value.
    #[arg(long)]
    pub panel: Option<PathBuf>,
    /// Quarters to look ahead when filling a missing indicator.
    #[arg(long, default_value_t = 1)]
    pub window: usize,
    #[arg(long)]
    pub out: PathBuf,
}

pub const TRANSACTION_FEATURES: [&str; 5] =
    ["acquired_disposed", "is_director", "is_officer", "is_other", "is_ten_pct"];

fn transaction_features(t: &Transaction) -> [f64; 5] {
    let b = |v: bool| if v { 1.0 } else { 0.0 };
    [
        b(t.acquired_disposed == AcquiredDisposed::Acquire),
        b(t.is_director),
        b(t.is_officer),
        b(t.is_other),
        b(t.is_ten_percent_owner),
    ]
}

struct Panel {
    names: Vec<String>,
    /// `(cik, quarter)` to filled values; rows still incomplete are absent.
    rows: HashMap<(String, Quarter), Vec<f64>>,
}

fn read_panel(path: &Path, window: usize) -> CliResult<Panel> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(open_input(path)?);
    let bad = |msg: String| CliError::config(format!("{}: {msg}", path.display()));
    let header = rdr.headers().map_err(|e| bad(e.to_string()))?.clone();
    if header.len() < 3 || &header[0] != "cik" || &header[1] != "quarter" {
        return Err(bad("panel header must start with cik,quarter and name at least one feature".into()));
    }
    let names: Vec<String> = header.iter().skip(2).map(str::to_string).collect();
    let mut records = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        let quarter: Quarter = rec[1].parse()?;
        let values = rec
            .iter()
            .skip(2)
            .map(|f| match f {
                "" | "NA" => Ok(None),
                v => v
                    .parse::<f64>()
                    .ok()
                    .filter(|x| x.is_finite())
                    .map(Some)
                    .ok_or_else(|| bad(format!("row {}: bad value `{v}`", i + 1))),
            })
            .collect::<CliResult<Vec<_>>>()?;
        records.push(QuarterRecord {
            entity: rec[0].to_string(),
            quarter,
            values,
        });
    }
    let rows = fill_missing(&records, window)
        .into_iter()
        .filter(|r| !r.excluded)
        .map(|r| ((r.entity, r.quarter), r.values.into_iter().flatten().collect()))
        .collect();
    Ok(Panel { names, rows })
}

/// Returns `(rows written, transactions dropped)`.
pub fn featurize(args: &FeaturizeArgs) -> CliResult<(usize, usize)> {
    let txns = read_transactions(&args.transactions)?;
    let panel = args.panel.as_deref().map(|p| read_panel(p, args.window)).transpose()?;
    let mut names: Vec<String> = TRANSACTION_FEATURES.iter().map(|s| s.to_string()).collect();
    if let Some(p) = &panel {
        names.extend(p.names.iter().cloned());
    }
    let mut data = Vec::new();
    let mut y = Vec::new();
    let mut dropped = 0;
    for t in &txns {
        let Some(label) = t.label else {
            dropped += 1;
            continue;
        };
        let extra = match &panel {
            None => &[][..],
            Some(p) => match p.rows.get(&(t.cik.clone(), Quarter::of_date(t.transaction_date))) {
                Some(v) => v.as_slice(),
                None => {
                    dropped += 1;
                    continue;
                }
            },
        };
        data.extend(transaction_features(t));
        data.extend_from_slice(extra);
        y.push(label);
    }
    if dropped > 0 {
        log::info!("dropped {dropped} transactions without a label or complete indicators");
    }
    let d = Dataset::new(Matrix::from_vec(y.len(), names.len(), data)?, y, schema_for_names(&names)?)?;
    write_with(&args.out, |buf| write_dataset_csv(buf, &d))?;
    Ok((d.n_rows(), dropped))
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub m: usize,
    #[arg(long)]
    pub informative: usize,
    #[arg(long)]
    pub separation: f64,
    /// Informative columns that get a noisy duplicate.
    #[arg(long, default_value_t = 0)]
    pub groups: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn synth(args: &SynthArgs) -> CliResult<usize> {
    let d = generate_synthetic(&SyntheticSpec {
        n: args.n,
        m: args.m,
        n_informative: args.informative,
        class_separation: args.separation,
        correlated_groups: args.groups,
        seed: args.seed,
    })?;
    write_with(&args.out, |buf| write_dataset_csv(buf, &d))?;
    Ok(d.n_rows())
}

/// A feature table restricted to the requested columns.
fn load_features(path: &Path, features: Option<&str>) -> CliResult<Dataset> {
    let d = read_table(path)?;
    match features {
        None => Ok(d),
        Some(arg) => {
            let cols = parse_feature_arg(arg)?.resolve(&d.schema)?;
            Ok(d.select_columns(&cols))
        }
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Labeled feature table.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub features: Option<String>,
    /// Hyperparameters as JSON, e.g. the `best` entry written by `tune`.
    #[arg(long)]
    pub params: Option<PathBuf>,
    #[arg(long)]
    pub ntrees: Option<usize>,
    #[arg(long)]
    pub mtry: Option<f64>,
    #[arg(long)]
    pub max_depth: Option<usize>,
    #[arg(long)]
    pub sample_rate: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Model JSON to write.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SavedModel {
    pub feature_names: Vec<String>,
    pub model: RandomForestModel,
}

/// Returns the out-of-bag error of the fitted model.
pub fn train(args: &TrainArgs) -> CliResult<Option<f64>> {
    let d = load_features(&args.data, args.features.as_deref())?;
    let mut params: HyperParams = match &args.params {
        Some(p) => read_json(p)?,
        None => HyperParams::default(),
    };
    if let Some(v) = args.ntrees {
        params.ntrees = v;
    }
    if let Some(v) = args.mtry {
        params.mtry_fraction = Some(v);
    }
    if let Some(v) = args.max_depth {
        params.max_depth = Some(v);
    }
    if let Some(v) = args.sample_rate {
        params.sample_rate = v;
    }
    params.seed = args.seed;
    let model = fit_forest(&d, &params)?;
    let oob = model.oob_error(&d).ok();
    write_json(
        &args.out,
        &SavedModel {
            feature_names: d.schema.names(),
            model,
        },
    )?;
    Ok(oob)
}

#[derive(Debug, Args)]
pub struct TuneArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub features: Option<String>,
    /// Search space JSON; the built-in default otherwise.
    #[arg(long)]
    pub space: Option<PathBuf>,
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub folds: Option<usize>,
    #[arg(long)]
    pub criterion: Option<Criterion>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Search result JSON with the winning parameters under `best`.
    #[arg(long)]
    pub out: PathBuf,
}

pub fn tune(args: &TuneArgs) -> CliResult<(HyperParams, f64)> {
    let d = load_features(&args.data, args.features.as_deref())?;
    let mut space: SearchSpace = match &args.space {
        Some(p) => read_json(p)?,
        None => SearchSpace::default(),
    };
    if let Some(v) = args.iterations {
        space.n_iterations = v;
    }
    if let Some(v) = args.folds {
        space.k_folds = v;
    }
    if let Some(v) = args.criterion {
        space.criterion = v;
    }
    let result = random_search(&space, &d, args.seed)?;
    write_json(&args.out, &result)?;
    Ok((result.best, result.best_score))
}

fn load_model(path: &Path) -> CliResult<SavedModel> {
    let saved: SavedModel = read_json(path)?;
    Ok(saved)
}

/// The columns of `path` named by the model, in model order.
fn table_for_model(path: &Path, saved: &SavedModel) -> CliResult<Dataset> {
    let d = read_table(path)?;
    let cols = insider_forest::dataset::FeatureSet::Custom(saved.feature_names.clone()).resolve(&d.schema)?;
    Ok(d.select_columns(&cols))
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Labeled feature table to score.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub confusion: ConfusionMatrix,
    pub metrics: MetricsReport,
}

pub fn evaluate(args: &EvaluateArgs) -> CliResult<Evaluation> {
    let saved = load_model(&args.model)?;
    let d = table_for_model(&args.data, &saved)?;
    let pred = saved.model.predict_matrix(&d.x)?;
    let labels: Vec<Label> = pred.iter().map(|p| p.0).collect();
    let scores: Vec<f64> = pred.iter().map(|p| p.1).collect();
    let confusion = confusion_matrix(&d.y, &labels)?;
    let mut m = metrics(&confusion);
    m.auc = roc_auc(&d.y, &scores).ok();
    m.aucpr = pr_auc(&d.y, &scores).ok();
    let ev = Evaluation { confusion, metrics: m };
    write_json(&args.out, &ev)?;
    Ok(ev)
}

#[derive(Debug, Args)]
pub struct ImportanceArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// The table the model was trained on.
    #[arg(long)]
    pub train: PathBuf,
    /// Held-out table for permutation importance.
    #[arg(long)]
    pub test: PathBuf,
    #[arg(long, default_value_t = DEFAULT_N_REPEATS)]
    pub repeats: usize,
    /// Ward height below which features share a cluster.
    #[arg(long, default_value_t = DEFAULT_CLUSTER_THRESHOLD)]
    pub cluster_threshold: f64,
    /// Use 1 - rho instead of 1 - |rho| as the feature distance.
    #[arg(long)]
    pub signed_distance: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory for importance.csv and dendrogram.json.
    #[arg(long)]
    pub out: PathBuf,
}

pub fn importance(args: &ImportanceArgs) -> CliResult<PathBuf> {
    let saved = load_model(&args.model)?;
    let train = table_for_model(&args.train, &saved)?;
    let test = table_for_model(&args.test, &saved)?;
    let names = train.schema.names();
    let mdi = mdi_report(&saved.model, &names)?;
    let on_test = permutation_importance(&saved.model, &test, EvaluatedOn::Test, args.repeats, args.seed)?;
    let distance = if args.signed_distance { Distance::Signed } else { Distance::Absolute };
    let dec = decorrelated_permutation_importance(
        &train,
        &test,
        &saved.model.params,
        args.cluster_threshold,
        distance,
        args.repeats,
        args.seed,
    )?;
    let csv_path = args.out.join(crate::pipeline::IMPORTANCE_CSV);
    write_with(&csv_path, |buf| write_importance_csv(buf, &[&mdi, &on_test, &dec.report]))?;
    write_json(
        &args.out.join(crate::pipeline::DENDROGRAM_JSON),
        &DendrogramExport {
            labels: names,
            threshold: args.cluster_threshold,
            dendrogram: dec.dendrogram,
            clusters: dec.clusters,
            representatives: dec.representatives,
        },
    )?;
    Ok(csv_path)
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Pipeline configuration (JSON).
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub reps: Option<usize>,
    /// off, evr=<ratio> or k=<components>.
    #[arg(long)]
    pub pca: Option<PcaSetting>,
    /// dcz25, full110, a file listing names, or a comma list.
    #[arg(long)]
    pub features: Option<String>,
    #[arg(long)]
    pub criterion: Option<Criterion>,
    #[arg(long)]
    pub cluster_threshold: Option<f64>,
    #[arg(long)]
    pub signed_distance: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn run_config(args: &RunArgs) -> CliResult<PipelineConfig> {
    let mut c = PipelineConfig::load(&args.config)?;
    if let Some(v) = args.seed {
        c.seed = v;
    }
    if let Some(v) = args.reps {
        c.reps = v;
    }
    if let Some(v) = args.pca {
        c.pca = v;
    }
    if let Some(v) = &args.features {
        c.features = parse_feature_arg(v)?;
    }
    if let Some(v) = args.criterion {
        c.search.criterion = v;
    }
    if let Some(v) = args.cluster_threshold {
        c.importance.cluster_threshold = v;
    }
    if args.signed_distance {
        c.importance.distance = Distance::Signed;
    }
    if let Some(v) = &args.out {
        c.output_dir = v.clone();
    }
    Ok(c)
}

pub fn run(args: &RunArgs) -> CliResult<RunSummary> {
    run_pipeline(&run_config(args)?)
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Output directory of a finished `run`.
    #[arg(long)]
    pub run_dir: PathBuf,
}

pub fn report(args: &ReportArgs) -> CliResult<PathBuf> {
    rerender_report(&args.run_dir)
}
