//! Markdown run report.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use insider_forest::evaluate::{AggregateReport, PcaSetting};
use insider_forest::importance::ImportanceReport;

use crate::config::{DataSource, PipelineConfig};

const REFERENCE_JSON: &str = include_str!("../data/reference_results.json");

/// Percentages; `None` where the source reports no value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReferenceMetrics {
    pub acc: f64,
    pub fnr: f64,
    pub fpr: f64,
    pub pre: Option<f64>,
    pub tnr: f64,
    pub tpr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceConfiguration {
    pub n_transactions: usize,
    pub n_features: usize,
    pub pca: bool,
    #[serde(flatten)]
    pub metrics: ReferenceMetrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Benchmark {
    pub method: String,
    #[serde(flatten)]
    pub metrics: ReferenceMetrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceResults {
    pub note: String,
    pub configurations: Vec<ReferenceConfiguration>,
    pub benchmarks: Vec<Benchmark>,
}

pub fn reference_results() -> ReferenceResults {
    serde_json::from_str(REFERENCE_JSON).expect("bundled reference results are valid JSON")
}

/// Everything the report shows besides the configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config: PipelineConfig,
    /// Columns after feature selection, before any projection.
    pub feature_names: Vec<String>,
}

fn pct(v: f64) -> String {
    format!("{:.2}", 100.0 * v)
}

fn source_line(source: &DataSource) -> String {
    match source {
        DataSource::Synthetic(s) => format!(
            "synthetic: {} rows, {} features ({} informative, {} duplicated), separation {}, seed {}",
            s.n, s.m, s.n_informative, s.correlated_groups, s.class_separation, s.seed
        ),
        DataSource::Table { path } => format!("table `{}`", path.display()),
        DataSource::Pools { unlawful, lawful } => {
            format!("unlawful `{}`, lawful `{}`", unlawful.display(), lawful.display())
        }
    }
}

const READINGS: [(&str, &str, &str); 8] = [
    ("acc", "ACC", "transactions classified correctly"),
    ("tpr", "TPR", "lawful trades recognized as lawful"),
    ("fnr", "FNR", "lawful trades flagged as unlawful (false alarms)"),
    ("fpr", "FPR", "unlawful trades missed, i.e. passed as lawful"),
    ("tnr", "TNR", "unlawful trades detected"),
    ("pre", "PRE", "trades passed as lawful that really are lawful"),
    ("auc", "AUC", "an unlawful trade outscores a lawful one"),
    ("aucpr", "AUCPR", "precision-recall area for detecting unlawful trades"),
];

pub fn render_report(
    manifest: &RunManifest,
    aggregate: &AggregateReport,
    importance: &[ImportanceReport],
) -> String {
    let c = &manifest.config;
    let mut out = String::new();
    let w = &mut out;
    let _ = writeln!(w, "# Run report\n");
    let _ = writeln!(w, "## Setup\n");
    let _ = writeln!(w, "| setting | value |\n|---|---|");
    let _ = writeln!(w, "| source | {} |", source_line(&c.source));
    let _ = writeln!(w, "| transactions per repetition | {} (half unlawful) |", c.n_transactions);
    let _ = writeln!(w, "| features | {} columns |", manifest.feature_names.len());
    let _ = writeln!(w, "| PCA | {} |", c.pca);
    let _ = writeln!(
        w,
        "| repetitions | {} succeeded of {} |",
        aggregate.reps_succeeded, aggregate.reps_requested
    );
    let _ = writeln!(w, "| master seed | {} |", c.seed);
    let _ = writeln!(
        w,
        "| search | {} draws, {}-fold CV, criterion {} |",
        c.search.n_iterations, c.search.k_folds, c.search.criterion
    );
    let _ = writeln!(w, "| train fraction | {} |", c.train_fraction);

    let _ = writeln!(w, "\n## Test-set metrics\n");
    let _ = writeln!(
        w,
        "Lawful is the positive class. Values are percent, mean and sample standard deviation over \
         successful repetitions. The last column gives the unlawful-centric reading.\n"
    );
    let _ = writeln!(w, "| metric | mean | std | n | meaning |\n|---|---|---|---|---|");
    for (key, name, meaning) in READINGS {
        if let Some(s) = aggregate.metrics.get(key) {
            let std = s.std.map_or_else(|| "NA".to_string(), pct);
            let _ = writeln!(w, "| {name} | {} | {std} | {} | {meaning} |", pct(s.mean), s.n);
        }
    }
    if let Some(s) = aggregate.metrics.get("oob_error") {
        let std = s.std.map_or_else(|| "NA".to_string(), pct);
        let _ = writeln!(w, "| OOB error | {} | {std} | {} | out-of-bag error on the training split |", pct(s.mean), s.n);
    }
    if let (Some(tnr), Some(fpr)) = (aggregate.metrics.get("tnr"), aggregate.metrics.get("fpr")) {
        let _ = writeln!(
            w,
            "\nUnlawful-centric summary: {}% of unlawful trades detected, {}% missed.",
            pct(tnr.mean),
            pct(fpr.mean)
        );
    }
    if let Some(p) = &aggregate.params_mode {
        let depth = p.max_depth.map_or_else(|| "unlimited".to_string(), |d| d.to_string());
        let _ = writeln!(w, "\n## Chosen hyperparameters (most frequent)\n");
        let _ = writeln!(w, "| ntrees | mtry fraction | max depth | sample rate |\n|---|---|---|---|");
        let _ = writeln!(w, "| {} | {} | {depth} | {} |", p.ntrees, p.mtry, p.sample_rate);
    }

    let refs = reference_results();
    let _ = writeln!(w, "\n## Published reference results\n");
    let _ = writeln!(w, "{}\n", refs.note);
    let pca_on = c.pca != PcaSetting::Off;
    let _ = writeln!(
        w,
        "| transactions | features | PCA | ACC | TPR | FPR | TNR | FNR | PRE | matches this run |\n|---|---|---|---|---|---|---|---|---|---|"
    );
    for r in &refs.configurations {
        let m = &r.metrics;
        let matches = r.n_transactions == c.n_transactions && r.n_features == manifest.feature_names.len() && r.pca == pca_on;
        let _ = writeln!(
            w,
            "| {} | {} | {} | {} | {} | {} | {} | {} | {} | {} |",
            r.n_transactions,
            r.n_features,
            if r.pca { "on" } else { "off" },
            m.acc,
            m.tpr,
            m.fpr,
            m.tnr,
            m.fnr,
            m.pre.map_or_else(|| "NA".into(), |v| v.to_string()),
            if matches { "yes" } else { "" }
        );
    }
    let _ = writeln!(w, "\nOther classifiers on the smaller published sample:\n");
    let _ = writeln!(w, "| method | ACC | TPR | FPR | TNR | FNR | PRE |\n|---|---|---|---|---|---|---|");
    for b in &refs.benchmarks {
        let m = &b.metrics;
        let _ = writeln!(
            w,
            "| {} | {} | {} | {} | {} | {} | {} |",
            b.method,
            m.acc,
            m.tpr,
            m.fpr,
            m.tnr,
            m.fnr,
            m.pre.map_or_else(|| "NA".into(), |v| v.to_string())
        );
    }

    if !importance.is_empty() {
        let _ = writeln!(w, "\n## Feature importance (first successful repetition)\n");
        for rep in importance {
            let _ = writeln!(
                w,
                "### {} on {}\n\n| rank | feature | mean | std |\n|---|---|---|---|",
                rep.method.as_str(),
                rep.evaluated_on.as_str()
            );
            for (rank, &i) in rep.ranking().iter().take(10).enumerate() {
                let _ = writeln!(
                    w,
                    "| {} | {} | {:.4} | {:.4} |",
                    rank + 1,
                    rep.feature_names[i],
                    rep.scores[i],
                    rep.score_std[i]
                );
            }
            let _ = writeln!(w);
        }
    }

    if !aggregate.failures.is_empty() {
        let _ = writeln!(w, "\n## Failed repetitions\n\n| rep | class | message |\n|---|---|---|");
        for f in &aggregate.failures {
            let _ = writeln!(w, "| {} | {} | {} |", f.rep, f.class, f.message.replace('|', "/"));
        }
    }
    out
}
