use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const CONFIG: &str = r#"{
  "source": {"synthetic": {"n": 300, "m": 8, "n_informative": 3, "class_separation": 2.0, "correlated_groups": 1, "seed": 4}},
  "n_transactions": 200,
  "search": {"ntrees": [10, 30], "mtry_fraction": [0.3, 0.9], "max_depth": [2, 6], "sample_rate": [0.6, 1.0], "n_iterations": 2, "k_folds": 3},
  "reps": 2,
  "importance": {"n_repeats": 2}
}"#;

const ARTIFACTS: [&str; 7] = [
    "per_rep.csv",
    "aggregate.json",
    "importance.csv",
    "importance.json",
    "dendrogram.json",
    "manifest.json",
    "report.md",
];

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_insider-forest"))
}

fn run(args: &[&str], extra: &[&Path]) -> Output {
    let mut cmd = bin();
    cmd.args(args);
    for p in extra {
        cmd.arg(p);
    }
    cmd.output().unwrap()
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout: {}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let p = dir.join("exp.json");
    std::fs::write(&p, text).unwrap();
    p
}

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures")
}

#[test]
fn run_writes_every_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), CONFIG);
    let out_dir = dir.path().join("out");
    ok(&run(&["run", "--config"], &[&cfg, Path::new("--out"), &out_dir]));
    for name in ARTIFACTS {
        assert!(out_dir.join(name).is_file(), "{name} missing");
    }
    let report = std::fs::read_to_string(out_dir.join("report.md")).unwrap();
    assert!(report.contains("## Test-set metrics"));
    assert!(report.contains("Published reference results"));
    let csv = std::fs::read_to_string(out_dir.join("per_rep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
    // No temporary files are left behind.
    assert_eq!(std::fs::read_dir(&out_dir).unwrap().count(), ARTIFACTS.len());
}

#[test]
fn missing_input_csv_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{"source": {"table": {"path": "nowhere.csv"}}, "n_transactions": 20, "reps": 1}"#,
    );
    let out = run(&["run", "--config"], &[&cfg]);
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert_eq!(stderr.lines().count(), 1, "{stderr}");
    assert!(stderr.starts_with("error[ConfigError]: "), "{stderr}");
}

#[test]
fn repeated_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), CONFIG);
    // Same output directory both times, since the manifest records it.
    let out_dir = dir.path().join("out");
    let mut runs = Vec::new();
    for _ in 0..2 {
        let mut cmd = bin();
        cmd.args(["run", "--reps", "1", "--seed", "7", "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(&out_dir);
        ok(&cmd.output().unwrap());
        let bytes: Vec<Vec<u8>> = ARTIFACTS.iter().map(|n| std::fs::read(out_dir.join(n)).unwrap()).collect();
        std::fs::remove_dir_all(&out_dir).unwrap();
        runs.push(bytes);
    }
    for (i, name) in ARTIFACTS.iter().enumerate() {
        assert_eq!(runs[0][i], runs[1][i], "{name} differs");
    }
}

#[test]
fn invalid_settings_are_config_errors() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), CONFIG);
    let out = run(&["run", "--reps", "0", "--config"], &[&cfg]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error[ConfigError]"));

    let bad = write_config(dir.path(), r#"{"source": {"synthetic": {}}, "n_transactions": 10}"#);
    let out = run(&["run", "--config"], &[&bad]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn report_rerenders_from_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), CONFIG);
    let out_dir = dir.path().join("out");
    let mut cmd = bin();
    cmd.args(["run", "--reps", "1", "--config"]).arg(&cfg).arg("--out").arg(&out_dir);
    ok(&cmd.output().unwrap());
    let before = std::fs::read(out_dir.join("report.md")).unwrap();
    std::fs::remove_file(out_dir.join("report.md")).unwrap();
    ok(&run(&["report", "--run-dir"], &[&out_dir]));
    assert_eq!(std::fs::read(out_dir.join("report.md")).unwrap(), before);
}

#[test]
fn model_subcommands_chain() {
    let dir = tempfile::tempdir().unwrap();
    let p = |n: &str| dir.path().join(n);
    ok(&run(
        &["synth", "--n", "400", "--m", "6", "--informative", "2", "--separation", "3", "--groups", "1", "--seed", "2", "--out"],
        &[&p("train.csv")],
    ));
    ok(&run(
        &["synth", "--n", "200", "--m", "6", "--informative", "2", "--separation", "3", "--groups", "1", "--seed", "3", "--out"],
        &[&p("test.csv")],
    ));

    let mut tune = bin();
    tune.args(["tune", "--iterations", "2", "--folds", "3", "--criterion", "auc", "--seed", "1", "--data"])
        .arg(p("train.csv"))
        .arg("--out")
        .arg(p("search.json"));
    ok(&tune.output().unwrap());
    let search: serde_json::Value = serde_json::from_slice(&std::fs::read(p("search.json")).unwrap()).unwrap();
    std::fs::write(p("best.json"), search["best"].to_string()).unwrap();

    let mut train = bin();
    train
        .args(["train", "--ntrees", "40", "--seed", "5", "--data"])
        .arg(p("train.csv"))
        .arg("--params")
        .arg(p("best.json"))
        .arg("--out")
        .arg(p("model.json"));
    ok(&train.output().unwrap());

    let mut eval = bin();
    eval.arg("evaluate")
        .arg("--model")
        .arg(p("model.json"))
        .arg("--data")
        .arg(p("test.csv"))
        .arg("--out")
        .arg(p("eval.json"));
    ok(&eval.output().unwrap());
    let ev: serde_json::Value = serde_json::from_slice(&std::fs::read(p("eval.json")).unwrap()).unwrap();
    assert!(ev["metrics"]["acc"].as_f64().unwrap() > 0.8, "{ev}");
    let cm = &ev["confusion"];
    let total: u64 = ["tp", "fn", "fp", "tn"].iter().map(|k| cm[k].as_u64().unwrap()).sum();
    assert_eq!(total, 200);

    let mut imp = bin();
    imp.args(["importance", "--repeats", "2", "--cluster-threshold", "0.5", "--model"])
        .arg(p("model.json"))
        .arg("--train")
        .arg(p("train.csv"))
        .arg("--test")
        .arg(p("test.csv"))
        .arg("--out")
        .arg(p("imp"));
    ok(&imp.output().unwrap());
    let csv = std::fs::read_to_string(p("imp/importance.csv")).unwrap();
    assert!(csv.starts_with("rank,feature,method,split,mean_importance,std\n"));
    let dend: serde_json::Value = serde_json::from_slice(&std::fs::read(p("imp/dendrogram.json")).unwrap()).unwrap();
    assert_eq!(dend["dendrogram"]["merges"].as_array().unwrap().len(), 5);
    let reps = dend["representatives"].as_array().unwrap().len();
    // The duplicated column shares a cluster with its source.
    assert!(reps < 6, "{dend}");
    assert_eq!(csv.lines().count(), 1 + 6 + 6 + reps);
}

#[test]
fn filings_to_feature_table() {
    let dir = tempfile::tempdir().unwrap();
    let p = |n: &str| dir.path().join(n);
    let form4 = fixtures().join("form4");

    // The directory also holds malformed filings; the good ones still come through.
    let out = run(&["ingest", "--out"], &[&p("txns.csv"), &form4]);
    ok(&out);
    let txns = std::fs::read_to_string(p("txns.csv")).unwrap();
    assert_eq!(txns.lines().count(), 1 + 7);

    std::fs::write(p("defendants.txt"), "# charged filers\nReyes, Maria Elena\nHOLLOWAY FAMILY TRUST\n").unwrap();
    let mut label = bin();
    label
        .args(["label", "--threshold", "85", "--transactions"])
        .arg(p("txns.csv"))
        .arg("--defendants")
        .arg(p("defendants.txt"))
        .arg("--out")
        .arg(p("labeled.csv"));
    ok(&label.output().unwrap());
    let labeled = std::fs::read_to_string(p("labeled.csv")).unwrap();
    // "Reyes, Maria Elena" vs "Reyes Maria Elena" scores 94; the trust is exact.
    assert_eq!(labeled.matches(",unlawful\n").count(), 4, "{labeled}");
    assert_eq!(labeled.matches(",lawful\n").count(), 3, "{labeled}");

    // Quarterly indicators; the 2021Q1 gap is filled from 2021Q2.
    std::fs::write(
        p("panel.csv"),
        "cik,quarter,current_ratio,market_beta\n\
         0000320193,2019Q2,1.3,1.1\n\
         0001018724,2021Q1,,0.9\n\
         0001018724,2021Q2,1.05,0.95\n\
         0000789019,2017Q4,2.5,0.8\n\
         0000806085,2008Q3,0.7,1.6\n",
    )
    .unwrap();
    let mut feat = bin();
    feat.arg("featurize")
        .arg("--transactions")
        .arg(p("labeled.csv"))
        .arg("--panel")
        .arg(p("panel.csv"))
        .arg("--out")
        .arg(p("features.csv"));
    ok(&feat.output().unwrap());
    let table = std::fs::read_to_string(p("features.csv")).unwrap();
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(
        lines[0],
        "acquired_disposed,is_director,is_officer,is_other,is_ten_pct,current_ratio,market_beta,label"
    );
    // The 2012 filing has no indicators and is dropped.
    assert_eq!(lines.len(), 1 + 6);
    assert!(lines.contains(&"0,0,1,0,0,1.05,0.9,unlawful"), "{table}");
}

#[test]
fn ingest_of_only_malformed_filings_fails_with_its_class() {
    let dir = tempfile::tempdir().unwrap();
    let bad = fixtures().join("form4/malformed_missing_cik.xml");
    let out = run(&["ingest", "--out"], &[&dir.path().join("t.csv"), &bad]);
    assert_eq!(out.status.code(), Some(3));
    // The skipped filing is logged as a warning before the final error line.
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.lines().last().unwrap().starts_with("error[MissingRequiredField]"), "{stderr}");
}
